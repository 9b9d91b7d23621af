//! Sampling helpers shared by the statistical integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use bounded_cycles::exact::brute_force_distribution;
use bounded_cycles::sampler::Sampler;
use bounded_cycles::stats::{chi_square, ChiSquare};
use bounded_cycles::ConstraintModel;

/// Cycle-type law from the crate's enumerator, keyed by dense counts of length `n`.
pub fn enumerated_types(model: &ConstraintModel) -> BTreeMap<Vec<usize>, f64> {
    brute_force_distribution(model)
        .unwrap()
        .into_iter()
        .map(|(t, p)| {
            let mut d = t.to_dense();
            d.resize(model.n(), 0);
            (d, p.value())
        })
        .collect()
}

/// Chi-square of `count` sampled types against `law`, plus the number of
/// draws that fell outside its support.
pub fn type_chi_square(sampler: &Sampler, law: &BTreeMap<Vec<usize>, f64>, count: usize, seed: u64) -> (ChiSquare, u64) {
    let n = sampler.model().n();
    let index: HashMap<&Vec<usize>, usize> = law.keys().enumerate().map(|(i, k)| (k, i)).collect();
    let k = law.len();
    let counts = sampler.fold_batch(
        count,
        seed,
        || vec![0u64; k + 1],
        |acc, _, t| {
            let mut d = t.to_dense();
            d.resize(n, 0);
            match index.get(&d) {
                Some(&i) => acc[i] += 1,
                None => acc[k] += 1,
            }
        },
        |acc, part| acc.iter_mut().zip(part).for_each(|(a, b)| *a += b),
    );
    let probs: Vec<f64> = law.values().copied().collect();
    (chi_square(&counts[..k], &probs), counts[k])
}
