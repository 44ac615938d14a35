//! Certified rate against rates fitted to the simulation outputs.

use renewal_core::bounds::BoundCertificate;
use renewal_core::sim::{fit_exponential_rate, ExpFit};
use serde::Serialize;
use serde_json::json;

use super::{Context, CERTIFICATE_FILE};
use crate::config::RunConfig;
use crate::output::{read_csv, read_json, write_csv, write_json, RenewalRow, TailRow};
use crate::{CliError, Outcome, Status};

/// Points closer to zero than this many standard errors carry no usable
/// decay information and are left out of the fits.
const SIGNAL_SIGMAS: f64 = 3.0;

#[derive(Serialize)]
struct FitSummary {
    series: String,
    x: Option<f64>,
    #[serde(flatten)]
    fit: ExpFit,
    /// Fitted rate over certified rate.
    ratio: f64,
}

#[derive(Serialize)]
struct Report<'a> {
    certificate: &'a BoundCertificate,
    certified_rate: f64,
    gamma: f64,
    renewal_fit: Option<&'a FitSummary>,
    tail_fits: Vec<&'a FitSummary>,
    /// Empirical over certified rate, from the renewal gap when available,
    /// else from the slowest fitted tail.
    headline_ratio: Option<f64>,
}

#[derive(Serialize)]
struct CurveRow {
    series: &'static str,
    x: Option<f64>,
    t: f64,
    empirical: f64,
    stderr: f64,
    certified: Option<f64>,
    fitted: Option<f64>,
}

#[derive(Serialize)]
struct FitRow<'a> {
    series: &'a str,
    x: Option<f64>,
    amplitude: f64,
    rate: f64,
    residual: f64,
    points: usize,
    certified_rate: f64,
    ratio: f64,
}

fn fit_points(t: &[f64], v: &[f64], se: &[f64]) -> Result<ExpFit, CliError> {
    let w: Vec<f64> = se.iter().map(|s| 1.0 / (s * s)).collect();
    fit_exponential_rate(t, v, Some(&w)).map_err(|e| CliError::Runtime(e.to_string()))
}

/// `|U((t,t+h]) − h/μ|` decays at the coupling rate until it sinks into the
/// Monte-Carlo noise; only the leading run of points above the noise floor
/// is fitted.
fn renewal_fit(rows: &[RenewalRow], rate: f64) -> Option<FitSummary> {
    let lead: Vec<&RenewalRow> = rows
        .iter()
        .take_while(|r| r.stderr > 0.0 && r.gap.abs() > SIGNAL_SIGMAS * r.stderr)
        .collect();
    if lead.len() < 3 {
        log::warn!("renewal gap: {} points above the noise, need 3; no fit", lead.len());
        return None;
    }
    let t: Vec<f64> = lead.iter().map(|r| r.t).collect();
    let v: Vec<f64> = lead.iter().map(|r| r.gap.abs()).collect();
    let se: Vec<f64> = lead.iter().map(|r| r.stderr).collect();
    match fit_points(&t, &v, &se) {
        Ok(fit) => Some(FitSummary {
            series: "renewal_gap".into(),
            x: None,
            ratio: fit.rate / rate,
            fit,
        }),
        Err(e) => {
            log::warn!("renewal gap: {e}");
            None
        }
    }
}

/// Survival of `T*(x)` over the points with `t ≥ x` and enough failures
/// and survivors to estimate.
fn tail_fits(rows: &[TailRow], rate: f64) -> Vec<FitSummary> {
    let mut xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
    xs.dedup();
    xs.into_iter()
        .filter_map(|x| {
            let pts: Vec<&TailRow> = rows
                .iter()
                .filter(|r| r.x == x && r.t >= x && r.survival < 1.0 && r.survival > SIGNAL_SIGMAS * r.stderr)
                .collect();
            if pts.len() < 3 {
                log::warn!("tail x = {x}: {} usable points, need 3; no fit", pts.len());
                return None;
            }
            let t: Vec<f64> = pts.iter().map(|r| r.t).collect();
            let v: Vec<f64> = pts.iter().map(|r| r.survival).collect();
            let se: Vec<f64> = pts.iter().map(|r| r.stderr).collect();
            fit_points(&t, &v, &se)
                .map_err(|e| log::warn!("tail x = {x}: {e}"))
                .ok()
                .map(|fit| FitSummary {
                    series: "tail".into(),
                    x: Some(x),
                    ratio: fit.rate / rate,
                    fit,
                })
        })
        .collect()
}

pub fn report(ctx: &Context, _cfg: Option<&RunConfig>) -> Result<Outcome, CliError> {
    let path = ctx.out.join(CERTIFICATE_FILE);
    if !path.exists() {
        return Err(CliError::Config(format!(
            "{} is missing (run `bound` or `optimize` first)",
            path.display()
        )));
    }
    let cert: BoundCertificate = read_json(&path)?;
    if !cert.valid {
        return Ok(super::infeasible(&cert, Vec::new()));
    }
    let rate = cert.rate;
    let tail: Option<Vec<TailRow>> = read_csv(&ctx.out.join("tail.csv"))?;
    let renewal: Option<Vec<RenewalRow>> = read_csv(&ctx.out.join("renewal.csv"))?;
    if tail.is_none() && renewal.is_none() {
        log::info!("no simulation outputs; writing a bound-only report");
    }

    let rfit = renewal.as_deref().and_then(|r| renewal_fit(r, rate));
    let tfits = tail.as_deref().map(|t| tail_fits(t, rate)).unwrap_or_default();
    let headline = rfit
        .as_ref()
        .map(|f| f.ratio)
        .or_else(|| tfits.iter().map(|f| f.ratio).reduce(f64::min));

    let mut curves = Vec::new();
    for r in tail.iter().flatten() {
        let fitted = tfits.iter().find(|f| f.x == Some(r.x)).map(|f| f.fit.amplitude * (-f.fit.rate * r.t).exp());
        curves.push(CurveRow {
            series: "tail",
            x: Some(r.x),
            t: r.t,
            empirical: r.survival,
            stderr: r.stderr,
            certified: r.bound.or_else(|| if r.t >= r.x { cert.theorem1_bound(r.x, r.t).ok() } else { None }),
            fitted,
        });
    }
    for r in renewal.iter().flatten() {
        curves.push(CurveRow {
            series: "renewal_gap",
            x: None,
            t: r.t,
            empirical: r.gap.abs(),
            stderr: r.stderr,
            certified: None,
            fitted: rfit.as_ref().map(|f| f.fit.amplitude * (-f.fit.rate * r.t).exp()),
        });
    }
    let fit_rows: Vec<FitRow> = rfit
        .iter()
        .chain(&tfits)
        .map(|f| FitRow {
            series: &f.series,
            x: f.x,
            amplitude: f.fit.amplitude,
            rate: f.fit.rate,
            residual: f.fit.residual,
            points: f.fit.points,
            certified_rate: rate,
            ratio: f.ratio,
        })
        .collect();

    let rep = Report {
        certificate: &cert,
        certified_rate: rate,
        gamma: cert.gamma,
        renewal_fit: rfit.as_ref(),
        tail_fits: tfits.iter().collect(),
        headline_ratio: headline,
    };
    let mut files = vec![write_json(&ctx.out, "report.json", &rep)?];
    if !curves.is_empty() {
        files.push(write_csv(&ctx.out, "bound_vs_empirical.csv", &curves)?);
    }
    if !fit_rows.is_empty() {
        files.push(write_csv(&ctx.out, "fit.csv", &fit_rows)?);
    }
    if let Some(r) = headline {
        log::info!("empirical rate is {r:.1} times the certified rate {rate:.4e}");
    }
    Ok(Outcome {
        status: Status::Ok,
        files,
        details: json!({
            "certified_rate": rate,
            "renewal_rate": rfit.as_ref().map(|f| f.fit.rate),
            "tail_rates": tfits.iter().map(|f| json!({ "x": f.x, "rate": f.fit.rate })).collect::<Vec<_>>(),
            "ratio": headline,
        }),
    })
}
