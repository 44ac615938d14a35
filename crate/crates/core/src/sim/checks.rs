use serde::{Deserialize, Serialize};

use super::attempt::attempt_observed;
use super::walk::{walk_observed, WALK_STEP_CAP};
use super::{replicate, SimError};
use crate::bounds::{cycle_laplace, drift_factor, geometric_sum_bound, GeomSumSpec};
use crate::dist::{InterArrivalModel, UniformComponent};
use crate::rng::Lane;
use crate::stats::MeanEstimate;

/// Exponential moments of the Step-1 time and of its upper bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step1Moments {
    pub x: f64,
    pub lambda: f64,
    /// `E e^{λ T_R(x)}`.
    pub exact: MeanEstimate,
    /// `E e^{λ T̄_R(x)}`.
    pub upper: MeanEstimate,
}

pub fn step1_moments(
    model: &InterArrivalModel,
    x: f64,
    r: f64,
    lambda: f64,
    n: usize,
    seed: u64,
) -> Result<Step1Moments, SimError> {
    let rows = replicate(n, seed, Lane::Step1, |rng| {
        let s = walk_observed(model, x, r, WALK_STEP_CAP, rng, |_, _| {})?;
        Ok::<_, SimError>(((lambda * s.t_r).exp(), (lambda * s.t_r_bar).exp()))
    })?;
    let (exact, upper): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    Ok(Step1Moments {
        x,
        lambda,
        exact: MeanEstimate::from_values(&exact),
        upper: MeanEstimate::from_values(&upper),
    })
}

/// Monte-Carlo side of the Step-2 estimates at one gap `z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step2Moments {
    pub z: f64,
    pub gamma: f64,
    pub k: u64,
    /// Frequency of success, to compare with `η^{⌈z/L⌉}`.
    pub success: MeanEstimate,
    /// `E e^{γ(M − (z + c⌊z/L⌋))}`.
    pub max_moment: MeanEstimate,
    /// `E e^{γ(M − (z + c⌊z/L⌋))} 1{failure}`.
    pub failure_moment: MeanEstimate,
}

pub fn step2_moments(
    model: &InterArrivalModel,
    comp: &UniformComponent,
    z: f64,
    gamma: f64,
    n: usize,
    seed: u64,
) -> Result<Step2Moments, SimError> {
    let offset = z + comp.c() * (z / comp.l()).floor();
    let rows = replicate(n, seed, Lane::Step2, |rng| {
        let s = attempt_observed(model, comp, z, rng, |_, _| {})?;
        let e = (gamma * (s.m_max - offset)).exp();
        Ok::<_, SimError>((s.success, e, s.k))
    })?;
    let pick = |f: &dyn Fn(&(bool, f64, u64)) -> f64| MeanEstimate::from_values(&rows.iter().map(f).collect::<Vec<_>>());
    Ok(Step2Moments {
        z,
        gamma,
        k: rows.first().map_or(0, |r| r.2),
        success: pick(&|r| if r.0 { 1.0 } else { 0.0 }),
        max_moment: pick(&|r| r.1),
        failure_moment: pick(&|r| if r.0 { 0.0 } else { r.1 }),
    })
}

/// Step-2 moments next to their bounds `η^k` and `L̄_{c+L}(γ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step2Check {
    pub moments: Step2Moments,
    pub success_floor: f64,
    #[serde(with = "crate::serde_float")]
    pub cycle_laplace: f64,
    pub success_ok: bool,
    pub max_ok: bool,
    pub failure_ok: bool,
}

impl Step2Check {
    pub fn holds(&self) -> bool {
        self.success_ok && self.max_ok && self.failure_ok
    }
}

/// Compares the estimates with the bounds at `3σ`. The failure moment is
/// tested after division by `1 − η^k`; with `k = 0` failure is impossible.
pub fn check_step2(
    model: &InterArrivalModel,
    comp: &UniformComponent,
    z: f64,
    gamma: f64,
    n: usize,
    seed: u64,
) -> Result<Step2Check, SimError> {
    let moments = step2_moments(model, comp, z, gamma, n, seed)?;
    let success_floor = comp.eta().powi(moments.k as i32);
    let lbar = cycle_laplace(model, comp, gamma)?;
    let fail = 1.0 - success_floor;
    let failure_ok = if fail > 0.0 {
        moments.failure_moment.mean / fail <= lbar + 3.0 * moments.failure_moment.stderr / fail
    } else {
        moments.failure_moment.mean == 0.0
    };
    Ok(Step2Check {
        success_ok: moments.success.mean >= success_floor - 3.0 * moments.success.stderr,
        max_ok: moments.max_moment.within(lbar, 3.0),
        failure_ok,
        success_floor,
        cycle_laplace: lbar,
        moments,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleRow {
    pub n: u64,
    /// `E M_n / M_0`, which should not exceed one.
    pub ratio: MeanEstimate,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleCheck {
    pub rho: f64,
    /// `M_0 = e^{β|x|}`.
    pub m0: f64,
    pub rows: Vec<SupermartingaleRow>,
    pub holds: bool,
}

/// Horizons tested by default.
pub const SUPERMARTINGALE_HORIZONS: [u64; 5] = [1, 2, 5, 10, 20];

/// Empirical `E M_n` for `M_n = V(Y_{τ∧n}) e^{λ Σ_{i≤τ∧n} X_i 1{Y_{i−1}≥0}} ρ^{−τ∧n}`
/// against `M_0`, at each horizon. Values are scaled by `M_0` so that large
/// gaps do not overflow.
#[allow(clippy::too_many_arguments)]
pub fn check_supermartingale(
    model: &InterArrivalModel,
    beta: f64,
    lambda: f64,
    r: f64,
    x: f64,
    horizons: &[u64],
    replicas: usize,
    seed: u64,
) -> Result<SupermartingaleCheck, SimError> {
    let rho = drift_factor(model, beta, lambda, r)?;
    if !(rho.is_finite() && rho > 0.0) {
        return Err(SimError::InvalidInput(format!("drift factor must be finite and positive, got {rho}")));
    }
    let m0 = (beta * x.abs()).exp();
    let horizon = horizons.iter().copied().max().unwrap_or(0);
    let paths = replicate(replicas, seed, Lane::Supermartingale, |rng| {
        let (mut y, mut cost, mut steps) = (x, 0.0, 0u64);
        let mut out = Vec::with_capacity(horizons.len());
        for n in 0..=horizon {
            if horizons.contains(&n) {
                // the walk is frozen from τ on
                let log_ratio = beta * (y.abs() - x.abs()) + lambda * cost - steps as f64 * rho.ln();
                out.push(log_ratio.exp());
            }
            if y.abs() > r && n < horizon {
                let v = model.sample(rng);
                if y >= 0.0 {
                    cost += v;
                    y -= v;
                } else {
                    y += v;
                }
                steps += 1;
            }
        }
        Ok::<_, SimError>(out)
    })?;
    let mut order: Vec<u64> = (0..=horizon).filter(|n| horizons.contains(n)).collect();
    order.dedup();
    let rows: Vec<SupermartingaleRow> = order
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let ratio = MeanEstimate::from_values(&paths.iter().map(|p| p[j]).collect::<Vec<_>>());
            SupermartingaleRow {
                n,
                holds: ratio.within(1.0, 3.0),
                ratio,
            }
        })
        .collect();
    Ok(SupermartingaleCheck {
        rho,
        m0,
        holds: rows.iter().all(|r| r.holds),
        rows,
    })
}

/// Sharpness of the geometric compound: for i.i.d. Exp(1) summands stopped
/// at an independent geometric index of parameter `p`, `E e^{λΣ}` equals the
/// bound with `ψ = −ln(1−λ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeomSharpness {
    pub lambda: f64,
    pub p: f64,
    pub bound: f64,
    pub estimate: MeanEstimate,
    pub matches: bool,
}

pub fn geometric_sum_sharpness(lambda: f64, p: f64, n: usize, seed: u64) -> Result<GeomSharpness, SimError> {
    if !(lambda > 0.0 && lambda < 1.0 && p > 0.0 && p <= 1.0) {
        return Err(SimError::InvalidInput(format!("need 0 < λ < 1 and 0 < p <= 1, got {lambda}, {p}")));
    }
    let bound = geometric_sum_bound(&GeomSumSpec {
        p,
        psi: -(-lambda).ln_1p(),
    });
    let vals = replicate(n, seed, Lane::GeometricSum, |rng| {
        let mut s = 0.0;
        loop {
            s -= rng.open01().ln();
            if rng.bernoulli(p) {
                break;
            }
        }
        Ok::<_, SimError>((lambda * s).exp())
    })?;
    let estimate = MeanEstimate::from_values(&vals);
    Ok(GeomSharpness {
        lambda,
        p,
        bound,
        matches: (estimate.mean - bound).abs() <= 3.0 * estimate.stderr,
        estimate,
    })
}
