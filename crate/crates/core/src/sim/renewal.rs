use serde::{Deserialize, Serialize};

use super::{replicate, SimError};
use crate::dist::InterArrivalModel;
use crate::rng::{Lane, RngStream};
use crate::stats::MeanEstimate;

/// Initial delay `T_0` of a renewal process.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delay {
    Fixed(f64),
    /// Drawn from the stationary density `P(X > s)/μ`.
    Stationary,
}

impl Delay {
    pub fn sample(&self, model: &InterArrivalModel, rng: &mut RngStream) -> f64 {
        match self {
            Delay::Fixed(d) => *d,
            Delay::Stationary => model.sample_stationary_delay(rng),
        }
    }

    fn check(&self) -> Result<(), SimError> {
        match self {
            Delay::Fixed(d) if !(*d >= 0.0 && d.is_finite()) => {
                Err(SimError::InvalidInput(format!("delay must be nonnegative, got {d}")))
            }
            _ => Ok(()),
        }
    }
}

/// Epochs `T_0 = delay, T_{n+1} = T_n + X_{n+1}` up to a horizon, and the
/// residual life there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenewalPath {
    /// All epochs `≤ horizon`, possibly none.
    pub epochs: Vec<f64>,
    /// `B_t`, the wait from the horizon to the next epoch; `delay − t` when
    /// the first epoch is still ahead.
    pub residual: f64,
}

pub fn simulate_renewal(model: &InterArrivalModel, delay: f64, horizon: f64, rng: &mut RngStream) -> RenewalPath {
    let mut epochs = Vec::new();
    let mut e = delay;
    while e <= horizon {
        epochs.push(e);
        e += model.sample(rng);
    }
    RenewalPath {
        epochs,
        residual: e - horizon,
    }
}

/// Replica average of the number of epochs in `(t, t+h]`.
pub fn estimate_renewal_measure(
    model: &InterArrivalModel,
    delay: Delay,
    t: f64,
    h: f64,
    n: usize,
    seed: u64,
) -> Result<MeanEstimate, SimError> {
    Ok(estimate_renewal_curve(model, delay, &[t], h, n, seed)?[0])
}

/// `U((t, t+h])` on a grid of `t`, every point using the same replica paths.
pub fn estimate_renewal_curve(
    model: &InterArrivalModel,
    delay: Delay,
    t_grid: &[f64],
    h: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<MeanEstimate>, SimError> {
    delay.check()?;
    if !(h > 0.0) {
        return Err(SimError::InvalidInput(format!("window h must be positive, got {h}")));
    }
    if n == 0 {
        return Err(SimError::InvalidInput("need at least one replica".into()));
    }
    let horizon = t_grid.iter().fold(0.0_f64, |a, t| a.max(t + h));
    let counts = replicate(n, seed, Lane::RenewalMeasure, |rng| {
        let d = delay.sample(model, rng);
        let path = simulate_renewal(model, d, horizon, rng);
        Ok::<_, SimError>(
            t_grid
                .iter()
                .map(|&t| {
                    let lo = path.epochs.partition_point(|&e| e <= t);
                    let hi = path.epochs.partition_point(|&e| e <= t + h);
                    (hi - lo) as f64
                })
                .collect::<Vec<f64>>(),
        )
    })?;
    Ok((0..t_grid.len())
        .map(|j| MeanEstimate::from_values(&counts.iter().map(|c| c[j]).collect::<Vec<_>>()))
        .collect())
}

/// `n` independent draws of `B_t` for each `t` in the grid, indexed
/// `[t][replica]`.
pub(crate) fn residual_at(
    model: &InterArrivalModel,
    delay: Delay,
    t_grid: &[f64],
    n: usize,
    seed: u64,
    lane: Lane,
) -> Result<Vec<Vec<f64>>, SimError> {
    delay.check()?;
    let horizon = t_grid.iter().copied().fold(0.0, f64::max);
    let rows = replicate(n, seed, lane, |rng| {
        let d = delay.sample(model, rng);
        let path = simulate_renewal(model, d, horizon, rng);
        let next = path.epochs.len();
        Ok::<_, SimError>(
            t_grid
                .iter()
                .map(|&t| {
                    let i = path.epochs.partition_point(|&e| e <= t);
                    if i < next {
                        path.epochs[i] - t
                    } else {
                        path.residual + horizon - t
                    }
                })
                .collect::<Vec<f64>>(),
        )
    })?;
    Ok((0..t_grid.len()).map(|j| rows.iter().map(|r| r[j]).collect()).collect())
}

/// Samples of the residual life `B_t` under the given delay.
pub fn sample_residual_life(
    model: &InterArrivalModel,
    delay: Delay,
    t: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>, SimError> {
    Ok(residual_at(model, delay, &[t], n, seed, Lane::Auxiliary)?.remove(0))
}
