//! Robust mean estimation.
//!
//! [`catoni_estimate`] is the Catoni M-estimator: the root of
//! `z ↦ Σ ψ(α(X_t − z))` with `ψ(y) = sign(y)·log(1 + |y| + y²)`. Its error is
//! governed by the variance rather than the range of the samples.
//!
//! [`rips_estimate`] applies it to the importance-weighted scalars
//! `yᵀA(λ)⁻¹x_t·r_t`, one direction `y` at a time, and then projects the
//! per-direction estimates onto a single parameter vector.

mod catoni;
mod rips;

pub use catoni::{catoni_estimate, catoni_psi, catoni_root, min_samples, CatoniConfig, DEFAULT_MAX_ITER, DEFAULT_ROOT_TOL};
pub use rips::{min_samples as rips_min_samples, rips_estimate, Observations, RipsConfig, RipsEstimate};
