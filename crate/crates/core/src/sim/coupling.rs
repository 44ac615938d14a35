use serde::{Deserialize, Serialize};

use super::attempt::{attempt_observed, Step2Outcome};
use super::renewal::{residual_at, Delay};
use super::walk::{walk_observed, Side, Step1Outcome, WALK_STEP_CAP};
use super::{replicate, SimError};
use crate::bounds::{assemble_certificate, BoundCertificate, BoundParams};
use crate::dist::{InterArrivalModel, UniformComponent};
use crate::rng::{Lane, RngStream};
use crate::stats::{binned_tv, MeanEstimate};

/// Fail-fast limits; hitting one is an error, never a silent truncation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimCaps {
    pub walk_steps: u64,
    pub attempts: u64,
}

impl Default for SimCaps {
    fn default() -> Self {
        Self {
            walk_steps: WALK_STEP_CAP,
            attempts: 1_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingIteration {
    pub step1: Step1Outcome,
    pub step2: Step2Outcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingTrace {
    pub x0: f64,
    pub iterations: Vec<CouplingIteration>,
    #[serde(rename = "T_star")]
    pub t_star: f64,
}

/// What a replica needs to report when the full trace is not kept.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingSummary {
    #[serde(rename = "T_star")]
    pub t_star: f64,
    pub attempts: u64,
    pub walk_steps: u64,
}

/// Epochs of both copies in absolute time, from `T_0` up to coalescence.
/// The first copy starts at `x`, the second at 0.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpochLog {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// The iterated Step 1 / Step 2 scheme for a fixed, valid certificate.
#[derive(Clone, Debug)]
pub struct Coupler<'a> {
    model: &'a InterArrivalModel,
    certificate: BoundCertificate,
    caps: SimCaps,
}

impl<'a> Coupler<'a> {
    pub fn new(model: &'a InterArrivalModel, comp: &UniformComponent, params: &BoundParams) -> Result<Self, SimError> {
        Self::from_certificate(model, assemble_certificate(model, comp, params, None)?)
    }

    pub fn from_certificate(model: &'a InterArrivalModel, certificate: BoundCertificate) -> Result<Self, SimError> {
        if !certificate.valid {
            return Err(SimError::InvalidCertificate { q: certificate.q });
        }
        if !(certificate.r > 0.0) {
            // with R = 0 Step 1 would wait for an exact tie, a null event
            return Err(SimError::InvalidInput("threshold R is zero; Step 1 cannot terminate".into()));
        }
        Ok(Self {
            model,
            certificate,
            caps: SimCaps::default(),
        })
    }

    pub fn with_caps(mut self, caps: SimCaps) -> Self {
        self.caps = caps;
        self
    }

    pub fn certificate(&self) -> &BoundCertificate {
        &self.certificate
    }

    pub fn model(&self) -> &InterArrivalModel {
        self.model
    }

    /// One coupling with its full per-iteration record.
    pub fn run(&self, x: f64, rng: &mut RngStream) -> Result<CouplingTrace, SimError> {
        let mut iterations = Vec::new();
        let s = self.couple(x, rng, Some(&mut iterations), None)?;
        Ok(CouplingTrace {
            x0: x,
            iterations,
            t_star: s.t_star,
        })
    }

    pub fn coupling_time(&self, x: f64, rng: &mut RngStream) -> Result<CouplingSummary, SimError> {
        self.couple(x, rng, None, None)
    }

    pub fn coupling_with_epochs(&self, x: f64, rng: &mut RngStream) -> Result<(CouplingSummary, EpochLog), SimError> {
        let mut log = EpochLog::default();
        let s = self.couple(x, rng, None, Some(&mut log))?;
        Ok((s, log))
    }

    fn couple(
        &self,
        x: f64,
        rng: &mut RngStream,
        mut trace: Option<&mut Vec<CouplingIteration>>,
        mut epochs: Option<&mut EpochLog>,
    ) -> Result<CouplingSummary, SimError> {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(SimError::InvalidInput(format!("initial gap must be nonnegative, got {x}")));
        }
        let comp = self.certificate.component;
        let r = self.certificate.r;
        // absolute positions of the first and second copy; `lead` indexes the
        // copy that is ahead, i.e. the walk's "first copy"
        let mut pos = [x, 0.0];
        let mut lead = 0;
        if let Some(log) = epochs.as_deref_mut() {
            log.first.push(x);
            log.second.push(0.0);
        }
        let push = |log: &mut Option<&mut EpochLog>, idx: usize, v: f64| {
            if let Some(log) = log.as_deref_mut() {
                if idx == 0 { log.first.push(v) } else { log.second.push(v) }
            }
        };
        let (mut t_star, mut y) = (0.0, x);
        let (mut attempts, mut walk_steps) = (0, 0);
        let mut pairs = Vec::new();
        loop {
            let step1 = walk_observed(self.model, y, r, self.caps.walk_steps, rng, |side, v| {
                let idx = if side == Side::First { lead } else { 1 - lead };
                pos[idx] += v;
                push(&mut epochs, idx, pos[idx]);
            })?;
            if step1.y_end < 0.0 {
                lead = 1 - lead;
            }
            walk_steps += step1.steps;
            t_star += step1.t_r;

            if attempts == self.caps.attempts {
                return Err(SimError::AttemptCap { attempts, elapsed: t_star });
            }
            attempts += 1;
            pairs.clear();
            let step2 = attempt_observed(self.model, &comp, step1.d_r, rng, |a, b| pairs.push((a, b)))?;
            let trail = 1 - lead;
            for (j, &(a, b)) in pairs.iter().enumerate() {
                pos[trail] += a;
                pos[lead] += b;
                if step2.success && j + 1 == pairs.len() {
                    pos[lead] = pos[trail];
                }
                push(&mut epochs, trail, pos[trail]);
                push(&mut epochs, lead, pos[lead]);
            }
            t_star += step2.m_min;
            if let Some(t) = trace.as_deref_mut() {
                t.push(CouplingIteration { step1, step2 });
            }
            if step2.success {
                break;
            }
            if step2.overtaken {
                lead = trail;
            }
            y = step2.m_max - step2.m_min;
        }
        Ok(CouplingSummary {
            t_star,
            attempts,
            walk_steps,
        })
    }
}

pub fn run_coupling(
    model: &InterArrivalModel,
    comp: &UniformComponent,
    params: &BoundParams,
    x: f64,
    rng: &mut RngStream,
) -> Result<CouplingTrace, SimError> {
    Coupler::new(model, comp, params)?.run(x, rng)
}

/// `n` independent coupling times from gap `x`, replica `i` on stream `i`.
pub fn sample_coupling_times(coupler: &Coupler, x: f64, n: usize, seed: u64) -> Result<Vec<CouplingSummary>, SimError> {
    replicate(n, seed, Lane::Coupling, |rng| coupler.coupling_time(x, rng))
}

/// Empirical survival curve of `T*(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub x: f64,
    pub t_grid: Vec<f64>,
    pub survival: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n: usize,
    pub seed: u64,
}

impl TailEstimate {
    pub fn from_times(x: f64, t_grid: &[f64], times: &[f64], seed: u64) -> Self {
        let n = times.len();
        let mut sorted = times.to_vec();
        sorted.sort_by(f64::total_cmp);
        let survival: Vec<f64> = t_grid
            .iter()
            .map(|&t| (n - sorted.partition_point(|&v| v <= t)) as f64 / n as f64)
            .collect();
        let stderr = survival.iter().map(|s| (s * (1.0 - s) / n as f64).sqrt()).collect();
        Self {
            x,
            t_grid: t_grid.to_vec(),
            survival,
            stderr,
            n,
            seed,
        }
    }
}

pub const MIN_TAIL_REPLICAS: usize = 100;

#[allow(clippy::too_many_arguments)]
pub fn estimate_tail(
    model: &InterArrivalModel,
    comp: &UniformComponent,
    params: &BoundParams,
    x: f64,
    t_grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<TailEstimate, SimError> {
    estimate_tail_with(&Coupler::new(model, comp, params)?, x, t_grid, n, seed)
}

pub fn estimate_tail_with(coupler: &Coupler, x: f64, t_grid: &[f64], n: usize, seed: u64) -> Result<TailEstimate, SimError> {
    if n < MIN_TAIL_REPLICAS {
        return Err(SimError::InvalidInput(format!("need at least {MIN_TAIL_REPLICAS} replicas, got {n}")));
    }
    let times: Vec<f64> = sample_coupling_times(coupler, x, n, seed)?.iter().map(|s| s.t_star).collect();
    Ok(TailEstimate::from_times(x, t_grid, &times, seed))
}

/// 32 points from `x` to `x + 20/rate`: `x` itself, then log-spaced offsets
/// starting a thousandth of the way out.
pub fn default_t_grid(x: f64, rate: f64) -> Vec<f64> {
    let span = 20.0 / rate;
    let mut grid = vec![x];
    grid.extend((0..31).map(|i| x + span * 10f64.powf(-3.0 * (1.0 - i as f64 / 30.0))));
    grid
}

/// Two-sided estimate of the total-variation distance between the residual
/// lives `B_t^x` and `B_t^0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    pub t: f64,
    /// Binned distance between independent samples of the two laws.
    pub lower: f64,
    pub lower_stderr: f64,
    /// Empirical `P(T*(x) > t)`, which dominates the distance by the coupling
    /// inequality.
    pub upper: f64,
    pub upper_stderr: f64,
    pub bins: usize,
    pub n: usize,
}

/// Histogram resolution `⌈n^{1/3}⌉`.
pub fn default_bins(n: usize) -> usize {
    ((n as f64).cbrt().ceil() as usize).max(2)
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_tv(
    model: &InterArrivalModel,
    comp: &UniformComponent,
    params: &BoundParams,
    x: f64,
    t: f64,
    n: usize,
    bins: usize,
    seed: u64,
) -> Result<TvEstimate, SimError> {
    Ok(estimate_tv_curve(&Coupler::new(model, comp, params)?, x, &[t], n, bins, seed)?[0])
}

/// TV estimates on a grid of times; each replica path serves every `t`.
pub fn estimate_tv_curve(
    coupler: &Coupler,
    x: f64,
    t_grid: &[f64],
    n: usize,
    bins: usize,
    seed: u64,
) -> Result<Vec<TvEstimate>, SimError> {
    if bins < 2 {
        return Err(SimError::InvalidInput(format!("need at least 2 bins, got {bins}")));
    }
    if !(x >= 0.0) || t_grid.iter().any(|t| !(*t >= 0.0)) {
        return Err(SimError::InvalidInput("x and t must be nonnegative".into()));
    }
    let model = coupler.model();
    let times: Vec<f64> = sample_coupling_times(coupler, x, n, seed)?.iter().map(|s| s.t_star).collect();
    let tail = TailEstimate::from_times(x, t_grid, &times, seed);
    let delayed = residual_at(model, Delay::Fixed(x), t_grid, n, seed, Lane::RenewalDelayed)?;
    let undelayed = residual_at(model, Delay::Fixed(0.0), t_grid, n, seed, Lane::RenewalUndelayed)?;
    Ok(t_grid
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let (lower, lower_stderr) = binned_tv(&delayed[j], &undelayed[j], bins);
            TvEstimate {
                t,
                lower,
                lower_stderr,
                upper: tail.survival[j],
                upper_stderr: tail.stderr[j],
                bins,
                n,
            }
        })
        .collect())
}

/// Both sides of `E[1{T*>t} #{j: T_j ∈ (t, t+h]}] ≤ P(T*>t)(U⁰((0,h]) + 1)`,
/// the left side evaluated for each copy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inequality5 {
    pub t: f64,
    pub h: f64,
    pub lhs_first: MeanEstimate,
    pub lhs_second: MeanEstimate,
    pub tail: MeanEstimate,
    pub u0: MeanEstimate,
    pub rhs: f64,
    /// Standard error of `lhs − rhs`, the larger of the two copies'.
    pub stderr: f64,
    pub holds: bool,
}

/// Checks inequality (5) on a grid of `(t, h)` pairs with `U⁰((0, h])`
/// estimated by simulation of the undelayed process.
#[allow(clippy::too_many_arguments)]
pub fn check_inequality5(
    model: &InterArrivalModel,
    comp: &UniformComponent,
    params: &BoundParams,
    x: f64,
    t: f64,
    h: f64,
    n: usize,
    seed: u64,
) -> Result<Inequality5, SimError> {
    let u0 = super::renewal::estimate_renewal_measure(model, Delay::Fixed(0.0), 0.0, h, n, seed)?;
    Ok(check_inequality5_grid(&Coupler::new(model, comp, params)?, x, &[(t, h, u0)], n, seed)?[0])
}

/// Inequality (5) for several `(t, h, U⁰((0,h]))` triples on one set of
/// replicas. Pass a zero-stderr `U⁰` when it is known exactly.
pub fn check_inequality5_grid(
    coupler: &Coupler,
    x: f64,
    cases: &[(f64, f64, MeanEstimate)],
    n: usize,
    seed: u64,
) -> Result<Vec<Inequality5>, SimError> {
    if cases.iter().any(|(t, h, _)| !(*t >= 0.0 && *h > 0.0)) {
        return Err(SimError::InvalidInput("need t >= 0 and h > 0".into()));
    }
    let model = coupler.model();
    // per replica and case: whether T* > t, and the two window counts
    let rows = replicate(n, seed, Lane::Coupling, |rng| {
        let (s, mut log) = coupler.coupling_with_epochs(x, rng)?;
        // windows only matter on {T* > t}
        let horizon = cases
            .iter()
            .filter(|(t, _, _)| s.t_star > *t)
            .map(|(t, h, _)| t + h)
            .fold(0.0, f64::max);
        let mut e = s.t_star;
        let mut shared = Vec::new();
        while e <= horizon {
            e += model.sample(rng);
            shared.push(e);
        }
        log.first.extend_from_slice(&shared);
        log.second.extend_from_slice(&shared);
        let count = |v: &[f64], t: f64, h: f64| v.iter().filter(|&&e| e > t && e <= t + h).count() as f64;
        Ok::<_, SimError>(
            cases
                .iter()
                .map(|&(t, h, _)| (s.t_star > t, count(&log.first, t, h), count(&log.second, t, h)))
                .collect::<Vec<_>>(),
        )
    })?;
    Ok(cases
        .iter()
        .enumerate()
        .map(|(j, &(t, h, u0))| {
            let ind: Vec<f64> = rows.iter().map(|r| if r[j].0 { 1.0 } else { 0.0 }).collect();
            let first: Vec<f64> = rows.iter().map(|r| if r[j].0 { r[j].1 } else { 0.0 }).collect();
            let second: Vec<f64> = rows.iter().map(|r| if r[j].0 { r[j].2 } else { 0.0 }).collect();
            let tail = MeanEstimate::from_values(&ind);
            let rhs = tail.mean * (u0.mean + 1.0);
            // per-replica differences carry the covariance between the sides
            let diff_se = |lhs: &[f64]| {
                let d: Vec<f64> = lhs.iter().zip(&ind).map(|(l, i)| l - i * (u0.mean + 1.0)).collect();
                let se = MeanEstimate::from_values(&d).stderr;
                (se * se + (tail.mean * u0.stderr).powi(2)).sqrt()
            };
            let lhs_first = MeanEstimate::from_values(&first);
            let lhs_second = MeanEstimate::from_values(&second);
            let (se1, se2) = (diff_se(&first), diff_se(&second));
            let holds = lhs_first.mean <= rhs + 3.0 * se1 && lhs_second.mean <= rhs + 3.0 * se2;
            Inequality5 {
                t,
                h,
                lhs_first,
                lhs_second,
                tail,
                u0,
                rhs,
                stderr: se1.max(se2),
                holds,
            }
        })
        .collect())
}

