//! Experiment configuration: a JSON file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use bounded_cycles::saddle::Regime;
use bounded_cycles::{ConstraintModel, Error, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Emit {
    Types,
    Longest,
    Process,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Diverging,
    Critical,
    Process,
    Spacings,
    Tightness,
    Clt,
}

impl Check {
    /// Regime the check is stated for; the CLT has no regime guard.
    pub fn regime(self) -> Option<Regime> {
        match self {
            Check::Diverging => Some(Regime::Diverging),
            Check::Critical => Some(Regime::Critical),
            Check::Process | Check::Spacings | Check::Tightness => Some(Regime::Vanishing),
            Check::Clt => None,
        }
    }
}

/// Everything that determines an artifact. The output path is read from
/// files but never embedded, so reruns to different paths stay identical.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: Vec<usize>,
    pub beta: Vec<f64>,
    pub alpha: Vec<usize>,
    pub theta: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub m: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub grid: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emit: Option<Emit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(skip_serializing)]
    pub output: Option<PathBuf>,
}

/// Model grid flags shared by every subcommand. Lists take commas or
/// repeated flags.
#[derive(Args, Debug, Default)]
pub struct ModelArgs {
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Exponent with alpha = floor(n^beta).
    #[arg(long, value_delimiter = ',', conflicts_with = "alpha")]
    pub beta: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub theta: Vec<f64>,
}

/// Command-specific flags; each one overrides the file value when given.
#[derive(Args, Debug, Default)]
pub struct RunArgs {
    #[arg(long)]
    pub b: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub m: Vec<usize>,
    /// Time grid for the counting process.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub d_max: Option<usize>,
    #[arg(long, visible_alias = "samples")]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub emit: Option<Emit>,
    #[arg(long, value_enum)]
    pub check: Option<Check>,
    /// Lower and upper regime thresholds on mu_alpha, e.g. `0.1,10`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub thresholds: Vec<f64>,
    #[arg(long)]
    pub min_mu: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad config {}: {e}", path.display())))
    }

    pub fn overlay(&mut self, model: ModelArgs, run: RunArgs) {
        fn list<T>(dst: &mut Vec<T>, src: Vec<T>) {
            if !src.is_empty() {
                *dst = src;
            }
        }
        fn opt<T>(dst: &mut Option<T>, src: Option<T>) {
            if src.is_some() {
                *dst = src;
            }
        }
        if !model.beta.is_empty() {
            self.alpha.clear();
        }
        if !model.alpha.is_empty() {
            self.beta.clear();
        }
        list(&mut self.n, model.n);
        list(&mut self.beta, model.beta);
        list(&mut self.alpha, model.alpha);
        list(&mut self.theta, model.theta);
        opt(&mut self.b, run.b);
        list(&mut self.m, run.m);
        list(&mut self.grid, run.grid);
        opt(&mut self.k, run.k);
        opt(&mut self.d_max, run.d_max);
        opt(&mut self.count, run.count);
        opt(&mut self.seed, run.seed);
        opt(&mut self.emit, run.emit);
        opt(&mut self.check, run.check);
        if let [lo, hi] = run.thresholds[..] {
            self.thresholds = Some((lo, hi));
        }
        opt(&mut self.min_mu, run.min_mu);
        if self.theta.is_empty() {
            self.theta = vec![1.0];
        }
    }

    /// The model grid `n x (beta | alpha) x theta`, each point validated.
    pub fn models(&self) -> Result<Vec<ConstraintModel>> {
        if self.n.is_empty() {
            return Err(Error::Config("at least one n is required".into()));
        }
        let mut out = Vec::new();
        for &n in &self.n {
            for &theta in &self.theta {
                match (self.beta.is_empty(), self.alpha.is_empty()) {
                    (false, true) => {
                        for &beta in &self.beta {
                            out.push(ConstraintModel::from_beta(n, beta, theta).map_err(as_config)?);
                        }
                    }
                    (true, false) => {
                        for &alpha in &self.alpha {
                            out.push(ConstraintModel::new(n, alpha, theta).map_err(as_config)?);
                        }
                    }
                    _ => return Err(Error::Config("exactly one of beta or alpha must be given".into())),
                }
            }
        }
        Ok(out)
    }

    pub fn single_model(&self) -> Result<ConstraintModel> {
        let mut models = self.models()?;
        if models.len() != 1 {
            return Err(Error::Config(format!(
                "this command takes one model, the grid has {}",
                models.len()
            )));
        }
        Ok(models.remove(0))
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a seed is required for sampling".into()))
    }
}

/// Invalid grid points are configuration errors whatever the model says.
fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}
