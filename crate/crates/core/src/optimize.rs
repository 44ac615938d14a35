//! Search for the largest certified rate `θδβ`.
//!
//! The objective is not convex, so the search is multi-start: a coarse grid
//! (log-spaced in β, linear in δ and θ) for every candidate component, then
//! a bounded Nelder–Mead run in `(β, δ)` from each of the best grid points.
//! Inside the simplex search θ is set by bisection to the largest value with
//! `q < 1`, which is optimal because `q` grows with θ while the rate is linear
//! in it.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{certificate_from_parts, compute_r, cycle_laplace, BoundCertificate, BoundError, BoundParams};
use crate::dist::{InterArrivalModel, UniformComponent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("no feasible point found (smallest q = {best_q})")]
    Infeasible { best_q: f64 },
    #[error("empty search space: {0}")]
    Empty(String),
    #[error(transparent)]
    Bound(#[from] BoundError),
}

/// Axis of the coarse grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn linear(&self) -> Vec<f64> {
        spaced(self.min, self.max, self.points, false)
    }

    pub fn logarithmic(&self) -> Vec<f64> {
        spaced(self.min, self.max, self.points, true)
    }
}

fn spaced(min: f64, max: f64, n: usize, log: bool) -> Vec<f64> {
    if n <= 1 || min == max {
        return vec![min];
    }
    (0..n)
        .map(|i| {
            let w = i as f64 / (n - 1) as f64;
            if log {
                (min.ln() + w * (max.ln() - min.ln())).exp()
            } else {
                min + w * (max - min)
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub beta: Axis,
    pub delta: Axis,
    pub theta: Axis,
    /// Grid points refined by Nelder–Mead, per component.
    pub refine_top: usize,
    pub components: Vec<UniformComponent>,
}

impl SearchSpace {
    /// 24 × 16 × 16 grid over `[1e−3, α] × [0.05, 0.95] × [1e−3, 1]`.
    pub fn default_for(model: &InterArrivalModel, components: Vec<UniformComponent>) -> Self {
        Self {
            beta: Axis { min: 1e-3, max: model.alpha(), points: 24 },
            delta: Axis { min: 0.05, max: 0.95, points: 16 },
            theta: Axis { min: 1e-3, max: 1.0, points: 16 },
            refine_top: 8,
            components,
        }
    }

    fn check(&self) -> Result<(), OptimizeError> {
        if self.components.is_empty() {
            return Err(OptimizeError::Empty("no uniform component candidates".into()));
        }
        let ok = |a: &Axis, lo: f64, hi: f64| a.points >= 1 && a.min <= a.max && a.min > lo && a.max <= hi;
        if !ok(&self.beta, 0.0, f64::INFINITY) {
            return Err(OptimizeError::Empty("beta range".into()));
        }
        if !(ok(&self.delta, -1e-300, 1.0) && self.delta.max < 1.0) {
            return Err(OptimizeError::Empty("delta range must lie in [0, 1)".into()));
        }
        if !ok(&self.theta, 0.0, 1.0) {
            return Err(OptimizeError::Empty("theta range must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// How η̃ is chosen for each `(c, L)` of a component grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaChoice {
    /// The largest mass the density supports on `[c−L, c+L]`.
    Max(MaxTag),
    Values(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxTag {
    Max,
}

/// Ranges from which component candidates are enumerated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentGrid {
    pub c: Axis,
    #[serde(rename = "L")]
    pub l: Axis,
    pub eta_tilde: EtaChoice,
    /// Optional cap on the component's right end `c + L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_upper: Option<f64>,
}

/// Grid resolution used to certify domination of a candidate component.
pub const MARGIN_GRID: usize = 401;

/// Enumerates `(c, L, η̃)` with `c ≥ L`, recomputing the domination margin
/// for each candidate and keeping only those that pass.
pub fn enumerate_components(model: &InterArrivalModel, grid: &ComponentGrid) -> Vec<UniformComponent> {
    let mut out = Vec::new();
    for c in grid.c.linear() {
        for l in grid.l.linear() {
            if l > c * (1.0 + 1e-12) || l <= 0.0 {
                continue;
            }
            let l = l.min(c);
            if grid.max_upper.is_some_and(|u| c + l > u * (1.0 + 1e-12)) {
                continue;
            }
            let etas = match &grid.eta_tilde {
                EtaChoice::Max(_) => {
                    let n = MARGIN_GRID;
                    let min_f = (0..n)
                        .map(|i| model.density(c - l + 2.0 * l * i as f64 / (n - 1) as f64))
                        .fold(f64::INFINITY, f64::min);
                    vec![(2.0 * l * min_f * (1.0 - 1e-6)).min(1.0 - 1e-6)]
                }
                EtaChoice::Values(v) => v.clone(),
            };
            for eta in etas {
                if let Ok(comp) = UniformComponent::new(c, l, eta) {
                    if model.verify_uniform_component(&comp, MARGIN_GRID) >= 0.0 {
                        out.push(comp);
                    }
                }
            }
        }
    }
    out
}

/// `θδβ` for a valid certificate, `−∞` otherwise.
pub fn rate_objective(model: &InterArrivalModel, comp: &UniformComponent, params: &BoundParams) -> f64 {
    match crate::bounds::assemble_certificate(model, comp, params, None) {
        Ok(c) if c.valid => c.rate,
        _ => f64::NEG_INFINITY,
    }
}

/// One evaluated grid point, for post-hoc plotting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub beta: f64,
    pub delta: f64,
    pub theta: f64,
    pub c: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub eta_tilde: f64,
    #[serde(with = "crate::serde_float")]
    pub q: f64,
    /// Objective value; `−∞` (written as null) when infeasible.
    #[serde(with = "neg_inf")]
    pub rate: f64,
}

mod neg_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub params: BoundParams,
    pub component: UniformComponent,
    pub certificate: BoundCertificate,
    pub grid: Vec<GridPoint>,
    pub evaluations: usize,
}

/// Evaluates `(q, rate)` at a point, or `(∞, −∞)` outside the domain.
fn evaluate(model: &InterArrivalModel, comp: &UniformComponent, p: &BoundParams) -> (f64, f64) {
    match crate::bounds::assemble_certificate(model, comp, p, None) {
        Ok(c) => (c.q, if c.valid { c.rate } else { f64::NEG_INFINITY }),
        Err(_) => (f64::INFINITY, f64::NEG_INFINITY),
    }
}

fn grid_for_component(model: &InterArrivalModel, comp: &UniformComponent, space: &SearchSpace) -> Vec<GridPoint> {
    let betas = space.beta.logarithmic();
    let deltas = space.delta.linear();
    let thetas = space.theta.linear();
    let mut out = Vec::with_capacity(betas.len() * deltas.len() * thetas.len());
    for &beta in &betas {
        // L̄_{c+L}(θβ) does not depend on δ
        let cycles: Vec<Option<f64>> = thetas.iter().map(|th| cycle_laplace(model, comp, th * beta).ok()).collect();
        for &delta in &deltas {
            let threshold = BoundParams::new(beta, delta, 1.0)
                .ok()
                .and_then(|p| compute_r(model, &p).ok());
            for (j, &theta) in thetas.iter().enumerate() {
                let (q, rate) = match (BoundParams::new(beta, delta, theta), threshold, cycles[j]) {
                    (Ok(p), Some(th), Some(cy)) => match certificate_from_parts(comp, &p, th, cy, None) {
                        Ok(c) => (c.q, if c.valid { c.rate } else { f64::NEG_INFINITY }),
                        Err(_) => (f64::INFINITY, f64::NEG_INFINITY),
                    },
                    _ => (f64::INFINITY, f64::NEG_INFINITY),
                };
                out.push(GridPoint {
                    beta,
                    delta,
                    theta,
                    c: comp.c(),
                    l: comp.l(),
                    eta_tilde: comp.eta_tilde(),
                    q,
                    rate,
                });
            }
        }
    }
    out
}

/// Total order on candidates: larger rate first, then smaller β.
fn better(a: (f64, f64), b: (f64, f64)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1))
}

/// Maps `(ln β, δ)` of the search box to the unit square.
struct Box2 {
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Box2 {
    fn new(space: &SearchSpace) -> Self {
        Self {
            lo: [space.beta.min.ln(), space.delta.min],
            hi: [space.beta.max.ln(), space.delta.max],
        }
    }

    fn to_unit(&self, beta: f64, delta: f64) -> [f64; 2] {
        let x = [beta.ln(), delta];
        std::array::from_fn(|i| {
            if self.hi[i] > self.lo[i] {
                (x[i] - self.lo[i]) / (self.hi[i] - self.lo[i])
            } else {
                0.0
            }
        })
    }

    fn to_params(&self, u: &[f64; 2]) -> (f64, f64) {
        let x: [f64; 2] = std::array::from_fn(|i| self.lo[i] + u[i].clamp(0.0, 1.0) * (self.hi[i] - self.lo[i]));
        (x[0].exp(), x[1])
    }
}

/// Bounded Nelder–Mead in the unit cube, minimizing `f`; returns the best
/// vertex seen, which is never worse than the start.
fn nelder_mead<const N: usize, F: FnMut(&[f64; N]) -> f64>(
    mut f: F,
    start: [f64; N],
    step: f64,
    budget: usize,
) -> ([f64; N], f64, usize) {
    let clamp = |x: [f64; N]| x.map(|v| v.clamp(0.0, 1.0));
    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    let f0 = f(&start);
    simplex.push((start, f0));
    let mut evals = 1;
    for i in 0..N {
        let mut x = start;
        x[i] = if x[i] + step <= 1.0 { x[i] + step } else { x[i] - step };
        let x = clamp(x);
        let fx = f(&x);
        evals += 1;
        simplex.push((x, fx));
    }
    while evals + 2 <= budget {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[N].1 - simplex[0].1;
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| (0..N).map(|i| (x[i] - simplex[0].0[i]).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if size < 1e-9 || (spread.abs() < 1e-15 && spread.is_finite()) {
            break;
        }
        let centroid: [f64; N] = std::array::from_fn(|i| (0..N).map(|k| simplex[k].0[i]).sum::<f64>() / N as f64);
        let worst = simplex[N];
        let along = |t: f64| clamp(std::array::from_fn(|i| centroid[i] + t * (worst.0[i] - centroid[i])));
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            simplex[N] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[N - 1].1 {
            simplex[N] = (xr, fr);
        } else {
            let xc = if fr < worst.1 { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            evals += 1;
            if fc < worst.1.min(fr) {
                simplex[N] = (xc, fc);
            } else {
                let best = simplex[0].0;
                for vertex in simplex.iter_mut().skip(1) {
                    if evals >= budget {
                        break;
                    }
                    let x = clamp(std::array::from_fn(|i| best[i] + 0.5 * (vertex.0[i] - best[i])));
                    let fx = f(&x);
                    evals += 1;
                    *vertex = (x, fx);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0, simplex[0].1, evals)
}

/// Largest θ in `[θ_min, θ_max]` keeping `q < 1`, by bisection in `ln θ`.
/// Returns `Err(q(θ_min))` when even the smallest θ is infeasible.
fn profile_theta(
    model: &InterArrivalModel,
    comp: &UniformComponent,
    beta: f64,
    delta: f64,
    theta: &Axis,
) -> (Result<f64, f64>, usize) {
    let at = |t: f64| evaluate(model, comp, &BoundParams { beta, delta, theta: t });
    let (q_lo, r_lo) = at(theta.min);
    if !r_lo.is_finite() {
        return (Err(q_lo), 1);
    }
    if at(theta.max).1.is_finite() {
        return (Ok(theta.max), 2);
    }
    let (mut lo, mut hi) = (theta.min.ln(), theta.max.ln());
    let mut evals = 2;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        evals += 1;
        if at(mid.exp()).1.is_finite() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (Ok(lo.exp()), evals)
}

struct Refined {
    params: BoundParams,
    comp_index: usize,
    rate: f64,
    evaluations: usize,
}

/// Maximizes `θδβ` over the grid, refinement and component candidates.
///
/// `budget` caps function evaluations per Nelder–Mead start. The result is a
/// pure function of the inputs: parallel grid evaluation is collected in
/// order and ties go to the smaller β, then to the earlier candidate.
pub fn optimize_rate(model: &InterArrivalModel, space: &SearchSpace, budget: usize) -> Result<OptimResult, OptimizeError> {
    space.check()?;
    let grids: Vec<Vec<GridPoint>> = space
        .components
        .par_iter()
        .map(|comp| grid_for_component(model, comp, space))
        .collect();

    let box2 = Box2::new(space);
    let starts: Vec<(usize, GridPoint)> = grids
        .iter()
        .enumerate()
        .flat_map(|(ci, g)| {
            let mut feasible: Vec<GridPoint> = g.iter().copied().filter(|p| p.rate.is_finite()).collect();
            feasible.sort_by(|a, b| better((a.rate, a.beta), (b.rate, b.beta)));
            feasible.truncate(space.refine_top);
            feasible.into_iter().map(move |p| (ci, p))
        })
        .collect();

    let grid_evals: usize = grids.iter().map(Vec::len).sum();
    if starts.is_empty() {
        let best_q = grids.iter().flatten().map(|p| p.q).fold(f64::INFINITY, f64::min);
        return Err(OptimizeError::Infeasible { best_q });
    }

    let refined: Vec<Refined> = starts
        .par_iter()
        .map(|&(ci, gp)| {
            let comp = &space.components[ci];
            let mut evaluations = 0;
            // θ is profiled out: the rate is linear in θ and q increasing, so
            // for each (β, δ) the best admissible θ is the largest with q < 1
            let objective = |u: &[f64; 2]| {
                let (beta, delta) = box2.to_params(u);
                let (theta, evals) = profile_theta(model, comp, beta, delta, &space.theta);
                evaluations += evals;
                match theta {
                    Ok(t) => -t * delta * beta,
                    // infeasible points rank by how far q is above one
                    Err(q) => 1.0 + q.min(1e6),
                }
            };
            let (u, _, _) = nelder_mead(objective, box2.to_unit(gp.beta, gp.delta), 0.05, budget.max(4));
            let (beta, delta) = box2.to_params(&u);
            let (theta, evals) = profile_theta(model, comp, beta, delta, &space.theta);
            evaluations += evals;
            let start = BoundParams { beta: gp.beta, delta: gp.delta, theta: gp.theta };
            let candidates = [theta.ok().map(|t| BoundParams { beta, delta, theta: t }), Some(start)];
            let (params, rate) = candidates
                .into_iter()
                .flatten()
                .map(|p| (p, evaluate(model, comp, &p).1))
                .min_by(|a, b| better((a.1, a.0.beta), (b.1, b.0.beta)))
                .expect("start is always a candidate");
            Refined {
                params,
                comp_index: ci,
                rate,
                evaluations: evaluations + 2,
            }
        })
        .collect();

    let evaluations = grid_evals + refined.iter().map(|r| r.evaluations).sum::<usize>();
    let winner = refined
        .iter()
        .min_by(|a, b| better((a.rate, a.params.beta), (b.rate, b.params.beta)))
        .expect("nonempty");
    let component = space.components[winner.comp_index];
    let certificate = crate::bounds::assemble_certificate(model, &component, &winner.params, None)?;
    debug_assert!(certificate.valid);
    Ok(OptimResult {
        params: winner.params,
        component,
        certificate,
        grid: grids.into_iter().flatten().collect(),
        evaluations,
    })
}
