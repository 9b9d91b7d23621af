//! One function per subcommand. Each returns the artifact text.

use bounded_cycles::exact::{brute_force_distribution, exact_tv_distance, partition_function};
use bounded_cycles::limits::{
    build_process, check_longest_critical, check_longest_diverging, clt_battery, clt_derivative_check,
    exact_increment_moments, longest_k, poisson_process_battery, require_regime, tightness_scaling_check,
    CltReport, DerivativeCheck,
};
use bounded_cycles::saddle::{
    admissibility_report, model_saddle, mu, regime_report, saddle_point_coefficient, ConstantProbe, RegimeReport,
    DEFAULT_REGIME_THRESHOLDS,
};
use bounded_cycles::sampler::Sampler;
use bounded_cycles::{ConstraintModel, CycleType, Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::artifact;
use crate::config::{Check, Emit, ExperimentConfig, Format};

const DEFAULT_COUNT: usize = 1000;
const DEFAULT_GRID: [f64; 4] = [0.5, 1.0, 1.5, 2.0];

#[derive(Serialize)]
struct ModelId {
    n: usize,
    alpha: usize,
    theta: f64,
}

impl From<&ConstraintModel> for ModelId {
    fn from(m: &ConstraintModel) -> Self {
        ModelId {
            n: m.n(),
            alpha: m.alpha(),
            theta: m.theta(),
        }
    }
}

/// Grid commands emit one record per model, as JSON or as flat CSV rows.
fn grid_output<T: Serialize>(command: &str, config: &ExperimentConfig, records: Vec<T>) -> Result<String> {
    match config.format.unwrap_or(Format::Json) {
        Format::Json => artifact::json(command, config, records),
        Format::Csv => {
            let rows: Vec<serde_json::Map<String, serde_json::Value>> = records
                .iter()
                .map(|r| match serde_json::to_value(r) {
                    Ok(serde_json::Value::Object(map)) => Ok(flatten(map)),
                    _ => Err(Error::Numerical("record is not a flat object".into())),
                })
                .collect::<Result<_>>()?;
            let header: Vec<String> = rows.first().map(|r| r.keys().cloned().collect()).unwrap_or_default();
            let lines: Vec<String> = rows
                .iter()
                .map(|r| {
                    header
                        .iter()
                        .map(|k| match &r[k] {
                            serde_json::Value::String(s) => s.clone(),
                            v => v.to_string(),
                        })
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect();
            artifact::csv(command, config, &[], &header.join(","), &lines)
        }
    }
}

/// Nested objects become `outer.inner` columns; arrays become `;`-joined cells.
fn flatten(map: serde_json::Map<String, serde_json::Value>) -> serde_json::Map<String, serde_json::Value> {
    let mut out = serde_json::Map::new();
    for (k, v) in map {
        match v {
            serde_json::Value::Object(inner) => {
                for (ik, iv) in flatten(inner) {
                    out.insert(format!("{k}.{ik}"), iv);
                }
            }
            serde_json::Value::Array(items) => {
                let cell = items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";");
                out.insert(k, serde_json::Value::String(cell));
            }
            other => {
                out.insert(k, other);
            }
        }
    }
    out
}

fn thresholds(config: &ExperimentConfig) -> (f64, f64) {
    config.thresholds.unwrap_or(DEFAULT_REGIME_THRESHOLDS)
}

pub fn saddle(config: &ExperimentConfig) -> Result<String> {
    #[derive(Serialize)]
    struct Record {
        model: ModelId,
        x: f64,
        ln_x: f64,
        residual: f64,
        ln_lambda: [f64; 4],
        mu_alpha: f64,
        regime: RegimeReport,
    }
    let mut records = Vec::new();
    for model in config.models()? {
        let sol = model_saddle(&model)?;
        records.push(Record {
            model: (&model).into(),
            x: sol.x,
            ln_x: sol.ln_x,
            residual: sol.residual,
            ln_lambda: sol.lambdas.map(|l| l.ln()),
            mu_alpha: mu(&sol, model.theta(), model.alpha())?,
            regime: regime_report(&model, thresholds(config))?,
        });
    }
    grid_output("saddle", config, records)
}

pub fn partition(config: &ExperimentConfig) -> Result<String> {
    #[derive(Serialize)]
    struct Record {
        model: ModelId,
        ln_z: f64,
        z: f64,
    }
    let mut records = Vec::new();
    for model in config.models()? {
        let z = partition_function(&model)?;
        records.push(Record {
            model: (&model).into(),
            ln_z: z.ln(),
            z: z.value(),
        });
    }
    grid_output("partition", config, records)
}

pub fn tvd(config: &ExperimentConfig) -> Result<String> {
    let b = config.b.ok_or_else(|| Error::Config("tvd needs --b".into()))?;
    let reports = config
        .models()?
        .iter()
        .map(|m| exact_tv_distance(m, b))
        .collect::<Result<Vec<_>>>()?;
    grid_output("tvd", config, reports)
}

pub fn spcheck(config: &ExperimentConfig) -> Result<String> {
    #[derive(Serialize)]
    struct Record {
        model: ModelId,
        ln_approx: f64,
        ln_exact: f64,
        ratio: f64,
        band: f64,
        within_band: bool,
        saddle_ratio: f64,
        lambda2_ratio: f64,
        probe_norm: f64,
    }
    let mut records = Vec::new();
    for model in config.models()? {
        let (n, alpha) = (model.n(), model.alpha());
        let q = model.weights();
        let approx = saddle_point_coefficient(&q, n, &ConstantProbe(1.0))?;
        let exact = partition_function(&model)?;
        let adm = admissibility_report(&q, n, alpha.div_ceil(2), &ConstantProbe(1.0))?;
        let ratio = (approx.ln() - exact.ln()).exp();
        let band = 5.0 * alpha as f64 / n as f64;
        records.push(Record {
            model: (&model).into(),
            ln_approx: approx.ln(),
            ln_exact: exact.ln(),
            ratio,
            band,
            within_band: (ratio - 1.0).abs() <= band,
            saddle_ratio: adm.saddle_ratio,
            lambda2_ratio: adm.lambda2_ratio,
            probe_norm: adm.probe_norm,
        });
    }
    grid_output("spcheck", config, records)
}

pub fn oracle(config: &ExperimentConfig) -> Result<String> {
    let model = config.single_model()?;
    let law = brute_force_distribution(&model)?;
    let z = partition_function(&model)?;
    let rows: Vec<String> = law
        .iter()
        .map(|(t, p)| format!("{t},{},{:.17e},{:.17e}", t.num_cycles(), p.ln(), p.value()))
        .collect();
    let extra = [format!("Z = {:.15}", z.value()), format!("ln Z = {:.17e}", z.ln())];
    artifact::csv("oracle", config, &extra, "type,cycles,log_p,p", &rows)
}

pub fn sample(config: &ExperimentConfig) -> Result<String> {
    let model = config.single_model()?;
    let seed = config.require_seed()?;
    let count = config.count.unwrap_or(DEFAULT_COUNT);
    let emit = config.emit.unwrap_or(Emit::Types);
    let sampler = Sampler::new(&model)?;
    let k = config.k.unwrap_or(5);
    let grid = if config.grid.is_empty() { DEFAULT_GRID.to_vec() } else { config.grid.clone() };
    let mu_alpha = match emit {
        Emit::Process => mu(&model_saddle(&model)?, model.theta(), model.alpha())?,
        _ => 0.0,
    };
    if emit == Emit::Process {
        build_process(&CycleType::from_counts(&[model.n()]), &model, mu_alpha, &grid)?;
    }
    let header = match emit {
        Emit::Types => "index,cycles,type".to_string(),
        Emit::Longest => {
            let cols: Vec<String> = (1..=k).map(|i| format!("l{i}")).collect();
            format!("index,{}", cols.join(","))
        }
        Emit::Process => {
            let cols: Vec<String> = grid.iter().map(|t| format!("P_{t}")).collect();
            format!("index,{}", cols.join(","))
        }
    };
    let rows = sampler.fold_batch(
        count,
        seed,
        Vec::new,
        |acc: &mut Vec<String>, i, t| {
            let row = match emit {
                Emit::Types => format!("{i},{},{t}", t.num_cycles()),
                Emit::Longest => {
                    let ell = longest_k(t, k).ell;
                    let cells: Vec<String> = ell.iter().map(ToString::to_string).collect();
                    format!("{i},{}", cells.join(","))
                }
                Emit::Process => {
                    // grid already validated above
                    let p = build_process(t, &model, mu_alpha, &grid).expect("valid grid");
                    let cells: Vec<String> = p.counts.iter().map(ToString::to_string).collect();
                    format!("{i},{}", cells.join(","))
                }
            };
            acc.push(row);
        },
        |acc, part| acc.extend(part),
    );
    let extra = match emit {
        Emit::Process => vec![format!("mu_alpha = {mu_alpha:.17e}")],
        _ => Vec::new(),
    };
    artifact::csv("sample", config, &extra, &header, &rows)
}

pub fn limits(config: &ExperimentConfig) -> Result<String> {
    let check = config
        .check
        .ok_or_else(|| Error::Config("limits needs --check".into()))?;
    if check == Check::Clt {
        return clt_with_command("limits", config);
    }
    let model = config.single_model()?;
    let seed = config.require_seed()?;
    let count = config.count.unwrap_or(DEFAULT_COUNT);
    let th = thresholds(config);
    // refuse before paying for the sampler table
    let regime = require_regime(&model, check.regime().expect("non-CLT checks have a regime"), th)?;
    let sampler = Sampler::new(&model)?;
    let grid = if config.grid.is_empty() { DEFAULT_GRID.to_vec() } else { config.grid.clone() };
    let report = match check {
        Check::Diverging => json!(check_longest_diverging(&sampler, count, seed, config.k.unwrap_or(5), th)?),
        Check::Critical => {
            let d_max = config.d_max.unwrap_or((40.0 / regime.mu_alpha).ceil() as usize);
            json!(check_longest_critical(&sampler, count, seed, config.k.unwrap_or(1), d_max, th)?)
        }
        Check::Process => json!({
            "sampled": poisson_process_battery(&sampler, count, seed, &grid, 1, th)?,
            "exact_increments": exact_increment_moments(&model, &grid)?,
        }),
        Check::Spacings => {
            let r = poisson_process_battery(&sampler, count, seed, &grid, config.k.unwrap_or(3), th)?;
            json!({ "mu_alpha": r.mu_alpha, "first_gap": r.first_gap, "spacings": r.spacings, "regime": r.regime })
        }
        Check::Tightness => {
            let triples = [(0.0, 1.0, 2.0), (0.0, 0.5, 1.0)];
            json!(tightness_scaling_check(&sampler, count, seed, &triples, th)?)
        }
        Check::Clt => unreachable!("handled above"),
    };
    artifact::json("limits", config, json!({ "model": ModelId::from(&model), "check": check, "report": report }))
}

pub fn clt(config: &ExperimentConfig) -> Result<String> {
    clt_with_command("clt", config)
}

fn clt_with_command(command: &str, config: &ExperimentConfig) -> Result<String> {
    #[derive(Serialize)]
    struct Output {
        model: ModelId,
        battery: CltReport,
        derivative_checks: Vec<(usize, DerivativeCheck)>,
    }
    let model = config.single_model()?;
    let seed = config.require_seed()?;
    if config.m.is_empty() {
        return Err(Error::Config("clt needs --m".into()));
    }
    let count = config.count.unwrap_or(DEFAULT_COUNT);
    let min_mu = config.min_mu.unwrap_or(1.0);
    let sampler = Sampler::new(&model)?;
    let battery = clt_battery(&sampler, &config.m, count, seed, min_mu)?;
    let mut derivative_checks = Vec::new();
    for &m in &config.m {
        for s in [0.0, 0.5, 1.0] {
            derivative_checks.push((m, clt_derivative_check(&model, m, s, 1e-4)?));
        }
    }
    artifact::json(
        command,
        config,
        Output {
            model: (&model).into(),
            battery,
            derivative_checks,
        },
    )
}
