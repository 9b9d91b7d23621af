//! Exact sampling from the conditioned measure.
//!
//! A cycle type is built by repeatedly drawing the length `j` of the cycle
//! through the smallest unplaced element. With `m` elements left,
//!
//! ```text
//! P(j | m) = q_j x^j h~_{m-j} / (m h~_m),   j <= min(alpha, m)
//! ```
//!
//! where `h~_k = h_k x^k` are the tilted coefficients. The numerators sum to
//! the denominator by the coefficient recurrence, so no normalisation is
//! needed.
//!
//! Draws use rejection from the proposal `j ~ q_j x^j` with acceptance
//! `exp(ln h~_{m-j} - max_window ln h~)`. When the expected number of
//! proposals for a given `m` is large the draw falls back to a direct scan.
//!
//! Randomness: sample `i` of seed `s` uses ChaCha8 keyed by a SplitMix64
//! expansion of `s`, on stream `i`. Any partition of the index range into
//! chunks reproduces the same samples.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::egf_coefficients;
use crate::model::{ConstraintModel, CycleType, Permutation};
use crate::saddle::model_saddle;

/// Identifier of the random stream construction, written into artifacts.
pub const RNG_ALGORITHM: &str = "chacha8/splitmix64-key/stream=index/v1";

/// Samples per work unit when folding a batch in parallel.
const CHUNK: usize = 256;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn base_rng(seed: u64) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// The generator used for sample `index` under `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = base_rng(seed);
    rng.set_stream(index);
    rng
}

/// Immutable tables shared by all draws for one model.
#[derive(Clone, Debug)]
pub struct Sampler {
    model: ConstraintModel,
    /// `ln h~_k`, `k = 0..=n`.
    ln_h: Vec<f64>,
    /// `ln(q_j x^j)`, `j = 1..=alpha`.
    ln_w: Vec<f64>,
    /// Prefix sums of `q_j x^j / max_j q_j x^j`.
    prefix: Vec<f64>,
    /// `max { ln h~_k : m - min(alpha, m) <= k < m }`, indexed by `m`.
    window_max: Vec<f64>,
    /// Whether `m` is drawn by a direct scan instead of rejection.
    scan: Vec<bool>,
}

impl Sampler {
    pub fn new(model: &ConstraintModel) -> Result<Self> {
        let n = model.n();
        let alpha = model.alpha();
        let sol = model_saddle(model)?;
        let table = egf_coefficients(&model.weights(), n, Some(sol.x))?;
        let ln_h = table.tilted_logs().to_vec();
        let ln_theta = model.theta().ln();
        let ln_w: Vec<f64> = (1..=alpha).map(|j| ln_theta + j as f64 * sol.ln_x).collect();
        let ln_w_max = ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut prefix = Vec::with_capacity(alpha);
        let mut acc = 0.0;
        for &lw in &ln_w {
            acc += (lw - ln_w_max).exp();
            prefix.push(acc);
        }

        let mut window_max = vec![f64::NEG_INFINITY; n + 1];
        let mut deque: VecDeque<usize> = VecDeque::new();
        for m in 1..=n {
            let k = m - 1;
            while deque.back().is_some_and(|&b| ln_h[b] <= ln_h[k]) {
                deque.pop_back();
            }
            deque.push_back(k);
            let lo = m - alpha.min(m);
            while deque.front().is_some_and(|&f| f < lo) {
                deque.pop_front();
            }
            window_max[m] = ln_h[*deque.front().expect("window is nonempty")];
        }

        let mut scan = vec![false; n + 1];
        for m in 1..=n {
            let kmax = alpha.min(m);
            let ln_total_w = prefix[kmax - 1].ln() + ln_w_max;
            let ln_expected = ln_total_w + window_max[m] - (m as f64).ln() - ln_h[m];
            scan[m] = ln_expected > (kmax as f64 / 8.0).max(1.0).ln();
        }

        Ok(Self {
            model: model.clone(),
            ln_h,
            ln_w,
            prefix,
            window_max,
            scan,
        })
    }

    pub fn model(&self) -> &ConstraintModel {
        &self.model
    }

    /// `ln h~_k` at the saddle tilt.
    pub fn ln_tilted_coefficients(&self) -> &[f64] {
        &self.ln_h
    }

    /// `P(j | remaining)` for `j = 1..=min(alpha, remaining)`.
    pub fn first_cycle_pmf(&self, remaining: usize) -> Result<Vec<f64>> {
        if remaining == 0 || remaining > self.model.n() {
            return Err(Error::Domain(format!(
                "remaining must lie in 1..={}, got {remaining}",
                self.model.n()
            )));
        }
        let m = remaining;
        let kmax = self.model.alpha().min(m);
        let ln_den = (m as f64).ln() + self.ln_h[m];
        let mut p: Vec<f64> = (1..=kmax)
            .map(|j| (self.ln_w[j - 1] + self.ln_h[m - j] - ln_den).exp())
            .collect();
        let total: f64 = p.iter().sum();
        debug_assert!((total - 1.0).abs() < 1e-10, "first-cycle mass {total}");
        for v in &mut p {
            *v /= total;
        }
        Ok(p)
    }

    fn draw_length<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> usize {
        let kmax = self.model.alpha().min(m);
        if kmax == 1 {
            return 1;
        }
        if self.scan[m] {
            return self.scan_length(m, kmax, rng);
        }
        let total = self.prefix[kmax - 1];
        let top = self.window_max[m];
        loop {
            let u: f64 = rng.random::<f64>() * total;
            let j = self.prefix[..kmax].partition_point(|&c| c <= u) + 1;
            let j = j.min(kmax);
            let v: f64 = rng.random();
            if v < (self.ln_h[m - j] - top).exp() {
                return j;
            }
        }
    }

    fn scan_length<R: Rng + ?Sized>(&self, m: usize, kmax: usize, rng: &mut R) -> usize {
        let ln_den = (m as f64).ln() + self.ln_h[m];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 1;
        for j in 1..=kmax {
            let p = (self.ln_w[j - 1] + self.ln_h[m - j] - ln_den).exp();
            if p > 0.0 {
                last = j;
            }
            acc += p;
            if u < acc {
                return j;
            }
        }
        last
    }

    /// Cycle lengths in the order drawn (smallest unplaced element first).
    pub fn draw_lengths<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut lengths = Vec::new();
        let mut m = self.model.n();
        while m > 0 {
            let j = self.draw_length(m, rng);
            lengths.push(j);
            m -= j;
        }
        lengths
    }

    pub fn cycle_type_with<R: Rng + ?Sized>(&self, rng: &mut R) -> CycleType {
        CycleType::from_lengths(&mut self.draw_lengths(rng))
    }

    pub fn permutation_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Permutation {
        let lengths = self.draw_lengths(rng);
        let n = self.model.n();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut image = vec![0usize; n];
        let mut start = 0;
        for len in lengths {
            let cycle = &order[start..start + len];
            for (i, &e) in cycle.iter().enumerate() {
                image[e] = cycle[(i + 1) % len];
            }
            start += len;
        }
        Permutation::from_image_unchecked(image)
    }

    /// Sample `index` of the batch with the given seed.
    pub fn cycle_type_at(&self, seed: u64, index: u64) -> CycleType {
        self.cycle_type_with(&mut stream_rng(seed, index))
    }

    pub fn permutation_at(&self, seed: u64, index: u64) -> Permutation {
        self.permutation_with(&mut stream_rng(seed, index))
    }

    /// Samples `0..count` in index order.
    pub fn batch(&self, count: usize, seed: u64) -> impl Iterator<Item = CycleType> + '_ {
        let base = base_rng(seed);
        (0..count as u64).map(move |i| {
            let mut rng = base.clone();
            rng.set_stream(i);
            self.cycle_type_with(&mut rng)
        })
    }

    /// Folds samples `0..count` into accumulators, in parallel.
    ///
    /// The index range is cut into fixed chunks independent of the thread
    /// count, and chunk results are merged in index order, so the output is
    /// the same for any number of workers.
    pub fn fold_batch<A, I, F, M>(&self, count: usize, seed: u64, init: I, fold: F, merge: M) -> A
    where
        A: Send,
        I: Fn() -> A + Sync,
        F: Fn(&mut A, u64, &CycleType) + Sync,
        M: Fn(&mut A, A),
    {
        let base = base_rng(seed);
        let chunks = count.div_ceil(CHUNK);
        let parts: Vec<A> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = init();
                let lo = c * CHUNK;
                let hi = count.min(lo + CHUNK);
                let mut rng = base.clone();
                for i in lo..hi {
                    rng.set_stream(i as u64);
                    rng.set_word_pos(0);
                    let t = self.cycle_type_with(&mut rng);
                    fold(&mut acc, i as u64, &t);
                }
                acc
            })
            .collect();
        let mut out = init();
        for p in parts {
            merge(&mut out, p);
        }
        out
    }
}

/// A sampler bound to a seed and a running draw counter.
#[derive(Clone, Debug)]
pub struct SamplerState {
    sampler: Arc<Sampler>,
    seed: u64,
    counter: u64,
}

impl SamplerState {
    pub fn new(model: &ConstraintModel, seed: u64) -> Result<Self> {
        Ok(Self::from_sampler(Arc::new(Sampler::new(model)?), seed))
    }

    pub fn from_sampler(sampler: Arc<Sampler>, seed: u64) -> Self {
        Self {
            sampler,
            seed,
            counter: 0,
        }
    }

    pub fn sampler(&self) -> &Sampler {
        &self.sampler
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn set_counter(&mut self, counter: u64) {
        self.counter = counter;
    }

    pub fn first_cycle_pmf(&self, remaining: usize) -> Result<Vec<f64>> {
        self.sampler.first_cycle_pmf(remaining)
    }

    pub fn sample_cycle_type(&mut self) -> CycleType {
        let t = self.sampler.cycle_type_at(self.seed, self.counter);
        self.counter += 1;
        t
    }

    pub fn sample_permutation(&mut self) -> Permutation {
        let p = self.sampler.permutation_at(self.seed, self.counter);
        self.counter += 1;
        p
    }
}

/// Cycle types `0..count` for `seed`, built on a fresh sampler.
pub fn sample_batch(model: &ConstraintModel, count: usize, seed: u64) -> Result<Vec<CycleType>> {
    let sampler = Sampler::new(model)?;
    Ok(sampler.batch(count, seed).collect())
}
