//! Simulation of the two-step coupling and the estimators that check the
//! bounds against it.
//!
//! Replica `i` of every estimator draws from its own stream
//! `(seed, lane, i)`, and results are reduced in replica order, so estimates
//! do not depend on the number of threads.

mod attempt;
mod checks;
mod coupling;
mod fit;
mod renewal;
mod walk;

pub use attempt::{step2_attempt, Step2Outcome};
pub use checks::{
    check_step2, check_supermartingale, geometric_sum_sharpness, step1_moments, step2_moments, GeomSharpness,
    Step1Moments, Step2Check, Step2Moments, SupermartingaleCheck, SupermartingaleRow, SUPERMARTINGALE_HORIZONS,
};
pub use coupling::{
    check_inequality5, check_inequality5_grid, default_bins, default_t_grid, estimate_tail, estimate_tail_with,
    estimate_tv, estimate_tv_curve, run_coupling, sample_coupling_times, Coupler, CouplingIteration,
    CouplingSummary, CouplingTrace, EpochLog, Inequality5, SimCaps, TailEstimate, TvEstimate, MIN_TAIL_REPLICAS,
};
pub use fit::{fit_exponential_rate, ExpFit};
pub use renewal::{
    estimate_renewal_curve, estimate_renewal_measure, sample_residual_life, simulate_renewal, Delay, RenewalPath,
};
pub use walk::{step1_copy_sequences, step1_walk, Side, Step1Outcome, WALK_STEP_CAP};

use rayon::prelude::*;
use thiserror::Error;

use crate::bounds::BoundError;
use crate::dist::DistError;
use crate::rng::{Lane, RngStream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("walk exceeded {steps} steps (x = {x}, R = {r})")]
    WalkCap { steps: u64, x: f64, r: f64 },
    #[error("coupling not achieved after {attempts} attempts (elapsed time {elapsed})")]
    AttemptCap { attempts: u64, elapsed: f64 },
    #[error("certificate is invalid (q = {q}); the coupling needs q < 1")]
    InvalidCertificate { q: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Bound(#[from] BoundError),
}

/// Runs `f` once per replica in parallel and returns the results in replica
/// order. The error of the lowest-indexed failing replica wins.
pub(crate) fn replicate<T, F>(n: usize, seed: u64, lane: Lane, f: F) -> Result<Vec<T>, SimError>
where
    T: Send,
    F: Fn(&mut RngStream) -> Result<T, SimError> + Sync,
{
    let out: Vec<Result<T, SimError>> = (0..n as u64)
        .into_par_iter()
        .map(|i| f(&mut RngStream::for_replica(seed, lane, i)))
        .collect();
    out.into_iter().collect()
}
