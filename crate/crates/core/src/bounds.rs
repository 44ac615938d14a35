//! Closed-form pieces of the coupling bound.
//!
//! With `λ = δβ` the Step-1 walk returns within distance `R` of the other
//! copy, and the cycle factor
//! `E = e^{θβ(R + ⌊R/L⌋c)} L̄_{c+L}(θβ)` controls the cost of each failed
//! exact-coupling attempt. When `q = E(1 − η^{⌈R/L⌉}) < 1` the coupling time
//! has tail at most `e^{θβx·1{x>R}} A e^{−θδβt}` for `t ≥ x`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{DistError, InterArrivalModel, UniformComponent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("parameter outside the admissible domain: {0}")]
    Domain(String),
    #[error("certificate is invalid (q = {q} >= 1)")]
    InvalidCertificate { q: f64 },
    #[error("{0} is unavailable for this model")]
    Unavailable(&'static str),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Free parameters `(β, δ, θ)` of the bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub beta: f64,
    pub delta: f64,
    pub theta: f64,
}

impl BoundParams {
    pub fn new(beta: f64, delta: f64, theta: f64) -> Result<Self, BoundError> {
        let p = Self { beta, delta, theta };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<(), BoundError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(BoundError::Domain(format!("beta must be positive, got {}", self.beta)));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(BoundError::Domain(format!("delta must lie in [0, 1), got {}", self.delta)));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(BoundError::Domain(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        Ok(())
    }

    /// Drift exponent of the Step-1 walk.
    pub fn lambda(&self) -> f64 {
        self.delta * self.beta
    }

    /// Certified decay rate `θδβ`.
    pub fn rate(&self) -> f64 {
        self.theta * self.delta * self.beta
    }
}

/// Distance threshold `R`; negative formula values are clamped to zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Threshold {
    pub value: f64,
    pub raw: f64,
    pub clamped: bool,
}

/// `R(λ/β, β) = (1/2β) log[𝓛(λ+β) / (1 − 𝓛(−(β−λ)))]`.
pub fn threshold_for_lambda(model: &InterArrivalModel, beta: f64, lambda: f64) -> Result<Threshold, BoundError> {
    if !(beta > 0.0 && (0.0..beta).contains(&lambda)) {
        return Err(BoundError::Domain(format!("need 0 <= lambda < beta, got lambda = {lambda}, beta = {beta}")));
    }
    let up = model.laplace(lambda + beta)?;
    if !up.is_finite() {
        return Err(BoundError::Domain(format!(
            "Laplace transform is infinite at {}",
            lambda + beta
        )));
    }
    let down = 1.0 - model.laplace(-(beta - lambda))?;
    let raw = (up / down).ln() / (2.0 * beta);
    Ok(Threshold {
        value: raw.max(0.0),
        raw,
        clamped: raw < 0.0,
    })
}

pub fn compute_r(model: &InterArrivalModel, params: &BoundParams) -> Result<Threshold, BoundError> {
    params.check()?;
    threshold_for_lambda(model, params.beta, params.lambda())
}

/// `ρ = 𝓛(−(β−λ)) + e^{−2βR} 𝓛(λ+β)`; the walk is a supermartingale when `ρ ≤ 1`.
pub fn drift_factor(model: &InterArrivalModel, beta: f64, lambda: f64, r: f64) -> Result<f64, BoundError> {
    if !(beta > 0.0 && (0.0..beta).contains(&lambda)) {
        return Err(BoundError::Domain(format!("need 0 <= lambda < beta, got lambda = {lambda}, beta = {beta}")));
    }
    let up = model.laplace(lambda + beta)?;
    if !up.is_finite() {
        return Err(BoundError::Domain(format!(
            "Laplace transform is infinite at {}",
            lambda + beta
        )));
    }
    Ok(model.laplace(-(beta - lambda))? + (-2.0 * beta * r).exp() * up)
}

/// `L̄_{c+L}(γ)`. When nothing lies beyond `c+L` the conditioned maximum is the
/// point mass at `c+L` (the residual law puts all its excess mass there).
pub fn cycle_laplace(model: &InterArrivalModel, comp: &UniformComponent, gamma: f64) -> Result<f64, BoundError> {
    let a = comp.c() + comp.l();
    if model.survival(a) <= 0.0 {
        return Ok((gamma * a).exp());
    }
    Ok(model.conditional_max_laplace(a, gamma)?)
}

/// Every quantity of the bound for one `(model, component, params)` triple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub params: BoundParams,
    pub component: UniformComponent,
    #[serde(rename = "R")]
    pub r: f64,
    pub r_clamped: bool,
    pub k_ceil: u64,
    pub k_floor: u64,
    /// `η^{⌈R/L⌉}`, the per-attempt success floor.
    pub success_floor: f64,
    /// `L̄_{c+L}(θβ)`.
    #[serde(with = "crate::serde_float")]
    pub cycle_laplace: f64,
    /// `E = e^{θβ(R+⌊R/L⌋c)} L̄_{c+L}(θβ)`.
    #[serde(with = "crate::serde_float")]
    pub cycle_factor: f64,
    #[serde(with = "crate::serde_float")]
    pub q: f64,
    #[serde(rename = "A", with = "crate::serde_float")]
    pub prefactor: f64,
    pub rate: f64,
    #[serde(rename = "C", with = "crate::serde_float")]
    pub corollary_c: f64,
    pub gamma: f64,
    pub valid: bool,
    /// `δ = 0`: the certificate holds but does not decay.
    pub degenerate: bool,
}

/// Default Corollary exponent as a fraction of the certified rate.
pub const GAMMA_FRACTION: f64 = 0.99;

/// `q = e^{θβ(R+⌊R/L⌋c)} L̄_{c+L}(θβ) (1 − η^{⌈R/L⌉})`; `+∞` when `L̄` diverges.
pub fn validity(model: &InterArrivalModel, comp: &UniformComponent, params: &BoundParams) -> Result<f64, BoundError> {
    Ok(assemble_certificate(model, comp, params, None)?.q)
}

pub fn assemble_certificate(
    model: &InterArrivalModel,
    comp: &UniformComponent,
    params: &BoundParams,
    gamma: Option<f64>,
) -> Result<BoundCertificate, BoundError> {
    let threshold = compute_r(model, params)?;
    let cycle = cycle_laplace(model, comp, params.theta * params.beta)?;
    certificate_from_parts(comp, params, threshold, cycle, gamma)
}

/// Assembly from a precomputed threshold and `L̄_{c+L}(θβ)`, so that grid
/// searches can share them across parameter points.
pub fn certificate_from_parts(
    comp: &UniformComponent,
    params: &BoundParams,
    threshold: Threshold,
    cycle: f64,
    gamma: Option<f64>,
) -> Result<BoundCertificate, BoundError> {
    let r = threshold.value;
    let rate = params.rate();
    let gamma = match gamma {
        Some(g) if !(g > 0.0 && g < rate) => {
            return Err(BoundError::Domain(format!("gamma must lie in (0, {rate}), got {g}")));
        }
        Some(g) => g,
        None => GAMMA_FRACTION * rate,
    };
    let k_ceil = (r / comp.l()).ceil() as u64;
    let k_floor = (r / comp.l()).floor() as u64;
    let success_floor = comp.eta().powi(k_ceil as i32);
    let tb = params.theta * params.beta;
    let cycle_factor = (tb * (r + k_floor as f64 * comp.c())).exp() * cycle;
    let q = if success_floor >= 1.0 {
        0.0
    } else {
        cycle_factor * (1.0 - success_floor)
    };
    let valid = q < 1.0;
    let prefactor = if valid {
        success_floor * cycle_factor / (1.0 - q)
    } else {
        f64::INFINITY
    };
    Ok(BoundCertificate {
        params: *params,
        component: *comp,
        r,
        r_clamped: threshold.clamped,
        k_ceil,
        k_floor,
        success_floor,
        cycle_laplace: cycle,
        cycle_factor,
        q,
        prefactor,
        rate,
        // The Corollary asks for an explicit C valid for all t ≥ 0. For t < x
        // the bound e^{θβx − γt} C already exceeds 1 once C ≥ 1, and for t ≥ x
        // the Theorem gives A e^{−θδβt} ≤ C e^{−γt}; max(1, A) is the least
        // constant covering both regimes.
        corollary_c: prefactor.max(1.0),
        gamma,
        valid,
        degenerate: params.delta == 0.0,
    })
}

impl BoundCertificate {
    fn require_valid(&self) -> Result<(), BoundError> {
        if self.valid {
            Ok(())
        } else {
            Err(BoundError::InvalidCertificate { q: self.q })
        }
    }

    /// Tail bound `P(T*(x) > t) ≤ e^{θβx·1{x>R}} A e^{−θδβt}` for `t ≥ x`.
    pub fn theorem1_bound(&self, x: f64, t: f64) -> Result<f64, BoundError> {
        self.require_valid()?;
        if !(x >= 0.0 && t >= x) {
            return Err(BoundError::Domain(format!("need 0 <= x <= t, got x = {x}, t = {t}")));
        }
        let lead = if x > self.r {
            (self.params.theta * self.params.beta * x).exp()
        } else {
            1.0
        };
        Ok(lead * self.prefactor * (-self.rate * t).exp())
    }

    /// Total-variation bound `e^{θβx} C e^{−γt}`, valid for every `t ≥ 0`.
    pub fn corollary_tv_bound(&self, gamma: f64, x: f64, t: f64) -> Result<f64, BoundError> {
        self.require_valid()?;
        if !(gamma > 0.0 && gamma < self.rate) {
            return Err(BoundError::Domain(format!("gamma must lie in (0, {}), got {gamma}", self.rate)));
        }
        if !(x >= 0.0 && t >= 0.0) {
            return Err(BoundError::Domain(format!("need x, t >= 0, got x = {x}, t = {t}")));
        }
        Ok((self.params.theta * self.params.beta * x).exp() * self.corollary_c * (-gamma * t).exp())
    }

    /// Renewal-measure bound `2 e^{θβx} C e^{−γt} (U⁰((0, sup D)) + 1)`.
    pub fn corollary_renewal_bound(&self, gamma: f64, x: f64, t: f64, sup_d: f64, u0_of_sup_d: f64) -> Result<f64, BoundError> {
        if !(sup_d > 0.0 && u0_of_sup_d >= 0.0) {
            return Err(BoundError::Domain(format!(
                "need sup D > 0 and U0 >= 0, got {sup_d}, {u0_of_sup_d}"
            )));
        }
        Ok(2.0 * self.corollary_tv_bound(gamma, x, t)? * (u0_of_sup_d + 1.0))
    }
}

pub fn theorem1_bound(
    model: &InterArrivalModel,
    comp: &UniformComponent,
    params: &BoundParams,
    x: f64,
    t: f64,
) -> Result<f64, BoundError> {
    assemble_certificate(model, comp, params, None)?.theorem1_bound(x, t)
}

/// Lorden's inequality `U((0, h]) ≤ h/μ + E X²/μ²`.
pub fn lorden_upper_bound(model: &InterArrivalModel, h: f64) -> Result<f64, BoundError> {
    let m2 = model.second_moment();
    if !m2.is_finite() {
        return Err(BoundError::Unavailable("second moment"));
    }
    let mu = model.mean();
    Ok(h / mu + m2 / (mu * mu))
}

/// Geometric compound `p e^ψ / (1 − e^ψ (1−p))` bounding `E e^{λ Σ_{i≤σ} ξ_i}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeomSumSpec {
    pub p: f64,
    pub psi: f64,
}

pub fn geometric_sum_bound(spec: &GeomSumSpec) -> f64 {
    if spec.psi >= -(-spec.p).ln_1p() {
        return f64::INFINITY;
    }
    // p e^ψ / (1 − e^ψ(1−p)) rewritten to avoid cancellation near ψ = 0
    spec.p / (spec.p + (-spec.psi).exp_m1())
}
