//! Exact and asymptotic computations for Ewens random permutations whose
//! cycles are all bounded by a maximal length `alpha`.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: log-domain values and the shared positive-recurrence kernel
//! - [`model`]: constraint model, weight rows, cycle types, permutations
//! - [`exact`]: generating-function coefficients, partition functions,
//!   compound Poisson laws, total variation distances, brute-force oracle
//! - [`saddle`]: tilt equations, saddle-point approximations, CLT calculus
//! - [`sampler`]: exact sampling of cycle types and permutations
//! - [`stats`]: goodness-of-fit statistics and mergeable accumulators
//! - [`limits`]: longest-cycle statistics and limit-law test batteries

pub mod error;
pub mod exact;
pub mod limits;
pub mod model;
pub mod numerics;
pub mod saddle;
pub mod sampler;
pub mod stats;

pub use error::{Error, Result};
pub use model::{AlphaRule, ConstraintModel, CycleType, Permutation, WeightArray};
pub use numerics::LogReal;
