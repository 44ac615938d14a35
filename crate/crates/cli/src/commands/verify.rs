//! The full Monte-Carlo check of the bounds under one certificate.

use renewal_core::bounds::{geometric_sum_bound, BoundCertificate, GeomSumSpec};
use renewal_core::dist::split_pair;
use renewal_core::rng::{Lane, RngStream};
use renewal_core::sim::{
    check_inequality5_grid, check_step2, check_supermartingale, default_bins, estimate_renewal_measure,
    estimate_tv_curve, geometric_sum_sharpness, sample_coupling_times, step1_copy_sequences, step1_moments, Coupler,
    Delay, TailEstimate, SUPERMARTINGALE_HORIZONS,
};
use renewal_core::stats::{binomial_upper_count, ks_one_sample};
use renewal_core::InterArrivalModel;
use serde::Serialize;
use serde_json::{json, Value};

use super::{coupler, resolve_certificate, sim_error, Context};
use crate::config::RunConfig;
use crate::output::write_json;
use crate::{CliError, Outcome, Status};

/// Sample size of the distributional (KS) checks.
const KS_SAMPLE: usize = 10_000;
/// Family-wise level of the four marginal KS tests, split evenly among them.
const KS_LEVEL: f64 = 0.01;
const KS_TESTS: f64 = 4.0;
const TAIL_POINTS: usize = 16;

#[derive(Serialize)]
struct Check {
    name: String,
    holds: bool,
    detail: Value,
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    seed: u64,
    replicas: usize,
    certificate: &'a BoundCertificate,
    passed: bool,
    checks: Vec<Check>,
}

fn check(name: impl Into<String>, holds: bool, detail: impl Serialize) -> Check {
    let name = name.into();
    if holds {
        log::info!("pass  {name}");
    } else {
        log::warn!("FAIL  {name}");
    }
    Check {
        name,
        holds,
        detail: serde_json::to_value(detail).unwrap_or(Value::Null),
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if b <= a {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

pub fn verify(ctx: &Context, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let (n, cfg_seed) = cfg.simulation.as_ref().map_or((100_000, 0), |s| (s.replicas, s.seed));
    let seed = ctx.seed.unwrap_or(cfg_seed);
    let cert = resolve_certificate(ctx, cfg, &model)?;
    if !cert.valid {
        return Ok(super::infeasible(&cert, Vec::new()));
    }
    let coupler = coupler(&model, &cert)?;
    let mut checks = Vec::new();
    lyapunov(&model, &cert, n, seed, &mut checks)?;
    lemma2(&model, &cert, n, seed, &mut checks)?;
    theorem1(&coupler, n, seed, &mut checks)?;
    corollary(&coupler, n, seed, &mut checks)?;
    inequality5(&coupler, n, seed, &mut checks)?;
    geometric(n, seed, &mut checks)?;
    marginals(&model, &cert, seed, &mut checks)?;

    let passed = checks.iter().all(|c| c.holds);
    let failed: Vec<&str> = checks.iter().filter(|c| !c.holds).map(|c| c.name.as_str()).collect();
    let details = json!({ "checks": checks.len(), "failed": failed });
    let report = VerifyReport {
        seed,
        replicas: n,
        certificate: &cert,
        passed,
        checks,
    };
    let files = vec![write_json(&ctx.out, "verify.json", &report)?];
    Ok(Outcome {
        status: if passed { Status::Ok } else { Status::ChecksFailed },
        files,
        details,
    })
}

/// Exponential moments of the Step-1 time, and the supermartingale behind
/// them.
fn lyapunov(model: &InterArrivalModel, cert: &BoundCertificate, n: usize, seed: u64, out: &mut Vec<Check>) -> Result<(), CliError> {
    let (beta, lambda, r) = (cert.params.beta, cert.params.lambda(), cert.r);
    for x in [2.0 * r, 4.0 * r] {
        for frac in [1.0, 0.5, 0.25] {
            let m = step1_moments(model, x, r, frac * lambda, n, seed).map_err(sim_error)?;
            let bound = (frac * beta * x).exp();
            let holds = m.upper.within(bound, 3.0) && m.exact.mean <= m.upper.mean;
            out.push(check(
                format!("step1 moment x={x:.4} lambda={:.4}", frac * lambda),
                holds,
                json!({ "moments": m, "bound": bound }),
            ));
        }
    }
    let sm = check_supermartingale(model, beta, lambda, r, 2.0 * r, &SUPERMARTINGALE_HORIZONS, n, seed)
        .map_err(sim_error)?;
    out.push(check("supermartingale", sm.holds && sm.rho <= 1.0, &sm));
    Ok(())
}

fn lemma2(model: &InterArrivalModel, cert: &BoundCertificate, n: usize, seed: u64, out: &mut Vec<Check>) -> Result<(), CliError> {
    let gamma = cert.params.theta * cert.params.beta;
    for frac in [0.1, 0.5, 1.0] {
        let z = frac * cert.r;
        let c = check_step2(model, &cert.component, z, gamma, n, seed).map_err(sim_error)?;
        out.push(check(format!("step2 z={z:.4}"), c.holds(), c));
    }
    Ok(())
}

/// Coupling-time survival against the certified tail, at gaps on both sides
/// of `R`, compared through the 99% binomial limit.
fn theorem1(coupler: &Coupler, n: usize, seed: u64, out: &mut Vec<Check>) -> Result<(), CliError> {
    let cert = coupler.certificate();
    for x in [0.5 * cert.r, 2.0 * cert.r, 4.0 * cert.r] {
        let times: Vec<f64> = sample_coupling_times(coupler, x, n, seed)
            .map_err(sim_error)?
            .iter()
            .map(|s| s.t_star)
            .collect();
        let top = times.iter().copied().fold(x, f64::max);
        let grid = linspace(x, top, TAIL_POINTS);
        let tail = TailEstimate::from_times(x, &grid, &times, seed);
        let rows: Vec<Value> = grid
            .iter()
            .zip(&tail.survival)
            .map(|(&t, &s)| {
                let bound = cert.theorem1_bound(x, t).unwrap_or(f64::INFINITY).min(1.0);
                let limit = binomial_upper_count(n as u64, bound, 0.99) as f64 / n as f64;
                json!({ "t": t, "survival": s, "bound": bound, "limit": limit, "holds": s <= limit })
            })
            .collect();
        let holds = rows.iter().all(|r| r["holds"] == Value::Bool(true));
        out.push(check(format!("tail x={x:.4}"), holds, rows));
    }
    Ok(())
}

fn corollary(coupler: &Coupler, n: usize, seed: u64, out: &mut Vec<Check>) -> Result<(), CliError> {
    let cert = coupler.certificate();
    let x = 2.0 * cert.r;
    let times: Vec<f64> = sample_coupling_times(coupler, x, n.min(20_000), seed)
        .map_err(sim_error)?
        .iter()
        .map(|s| s.t_star)
        .collect();
    let top = times.iter().copied().fold(x, f64::max);
    let grid = linspace(0.0, top, TAIL_POINTS);
    let curve = estimate_tv_curve(coupler, x, &grid, n, default_bins(n), seed).map_err(sim_error)?;
    let rows: Vec<Value> = curve
        .iter()
        .map(|e| {
            let bound = cert.corollary_tv_bound(cert.gamma, x, e.t).unwrap_or(f64::INFINITY);
            let holds = e.lower <= bound + 3.0 * e.lower_stderr && e.upper <= bound + 3.0 * e.upper_stderr;
            json!({ "estimate": e, "bound": bound, "holds": holds })
        })
        .collect();
    let holds = rows.iter().all(|r| r["holds"] == Value::Bool(true));
    out.push(check(format!("total variation x={x:.4}"), holds, rows));
    Ok(())
}

fn inequality5(coupler: &Coupler, n: usize, seed: u64, out: &mut Vec<Check>) -> Result<(), CliError> {
    let model = coupler.model();
    let mu = model.mean();
    let x = 2.0 * coupler.certificate().r;
    let mut cases = Vec::new();
    for h in [0.5 * mu, mu, 2.0 * mu] {
        let u0 = estimate_renewal_measure(model, Delay::Fixed(0.0), 0.0, h, n, seed).map_err(sim_error)?;
        for t in [0.5 * mu, 2.0 * mu, 5.0 * mu, 10.0 * mu] {
            cases.push((t, h, u0));
        }
    }
    let rows = check_inequality5_grid(coupler, x, &cases, n, seed).map_err(sim_error)?;
    out.push(check(
        format!("window inequality x={x:.4}"),
        rows.iter().all(|r| r.holds),
        &rows,
    ));
    Ok(())
}

/// Closed form of the geometric compound against its series, then the
/// construction that attains it.
fn geometric(n: usize, seed: u64, out: &mut Vec<Check>) -> Result<(), CliError> {
    let mut worst = 0.0_f64;
    for p in [0.1_f64, 0.3, 0.5, 0.9] {
        for frac in [0.0, 0.25, 0.5, 0.9] {
            let psi = -frac * (-p).ln_1p();
            let closed = geometric_sum_bound(&GeomSumSpec { p, psi });
            let ratio = (1.0 - p) * psi.exp();
            let mut series = 0.0;
            let mut term = p * psi.exp();
            let mut k = 0;
            while term > 1e-18 * series && k < 100_000 {
                series += term;
                term *= ratio;
                k += 1;
            }
            worst = worst.max(((series - closed) / closed).abs());
        }
    }
    out.push(check("geometric sum closed form", worst <= 1e-12, json!({ "max_relative_error": worst })));
    let g = geometric_sum_sharpness(0.2, 0.5, n, seed).map_err(sim_error)?;
    out.push(check("geometric sum sharpness", g.matches, g));
    Ok(())
}

/// Each copy, and each half of a split pair, must still be a sample of X.
fn marginals(model: &InterArrivalModel, cert: &BoundCertificate, seed: u64, out: &mut Vec<Check>) -> Result<(), CliError> {
    let cdf = |t: f64| model.cdf(t);
    let (first, second) =
        step1_copy_sequences(model, 2.0 * cert.r, KS_SAMPLE, &mut RngStream::for_replica(seed, Lane::Auxiliary, 0));
    for (name, seq) in [("first", &first), ("second", &second)] {
        let ks = ks_one_sample(seq, cdf);
        out.push(check(
            format!("step1 {name} copy marginal"),
            ks.p_value > KS_LEVEL / KS_TESTS,
            json!({ "statistic": ks.statistic, "p_value": ks.p_value }),
        ));
    }
    let shift = 0.5 * cert.component.l();
    let mut rng = RngStream::for_replica(seed, Lane::Split, 0);
    let draws = (0..KS_SAMPLE)
        .map(|_| split_pair(model, &cert.component, shift, &mut rng))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let halves: [(&str, Vec<f64>); 2] = [
        ("X'", draws.iter().map(|d| d.x_prime).collect()),
        ("X''", draws.iter().map(|d| d.x_second).collect()),
    ];
    for (name, seq) in halves {
        let ks = ks_one_sample(&seq, cdf);
        out.push(check(
            format!("split marginal {name}"),
            ks.p_value > KS_LEVEL / KS_TESTS,
            json!({ "shift": shift, "statistic": ks.statistic, "p_value": ks.p_value }),
        ));
    }
    Ok(())
}
