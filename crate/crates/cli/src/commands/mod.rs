//! One function per subcommand. Each returns what `main` needs for the
//! summary; files are written into `Context::out`.

mod report;
mod verify;

use std::path::PathBuf;

use renewal_core::bounds::{assemble_certificate, BoundCertificate};
use renewal_core::optimize::{optimize_rate, OptimizeError};
use renewal_core::rng::{Lane, RngStream};
use renewal_core::sim::{
    default_t_grid, estimate_renewal_curve, estimate_tail_with, Coupler, Delay, SimError,
};
use renewal_core::InterArrivalModel;
use serde_json::json;

pub use report::report;
pub use verify::verify;

use crate::config::{RunConfig, SimulationConfig};
use crate::output::{read_json, write_csv, write_json, GridRow, RenewalRow, TailRow};
use crate::{CliError, Outcome, Status};

pub struct Context {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub debug: bool,
}

pub const CERTIFICATE_FILE: &str = "certificate.json";

fn infeasible(cert: &BoundCertificate, files: Vec<String>) -> Outcome {
    log::warn!("certificate is invalid: q = {} >= 1", cert.q);
    Outcome {
        status: Status::Infeasible,
        files,
        details: json!({ "q": finite_or_null(cert.q), "params": cert.params }),
    }
}

fn finite_or_null(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn bound(ctx: &Context, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let comp = cfg.component()?;
    let params = cfg
        .params
        .ok_or_else(|| CliError::Config("`params` is required for `bound`".into()))?;
    let cert = assemble_certificate(&model, &comp, &params, cfg.gamma).map_err(|e| CliError::Config(e.to_string()))?;
    let files = vec![write_json(&ctx.out, CERTIFICATE_FILE, &cert)?];
    if !cert.valid {
        return Ok(infeasible(&cert, files));
    }
    log::info!("certified rate {:.6e} (q = {:.4})", cert.rate, cert.q);
    Ok(Outcome {
        status: Status::Ok,
        files,
        details: json!({ "rate": cert.rate, "q": cert.q, "R": cert.r, "A": cert.prefactor, "C": cert.corollary_c }),
    })
}

pub fn optimize(ctx: &Context, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let (space, budget) = cfg.search_space(&model)?;
    log::info!(
        "searching {} component(s), budget {budget} per start",
        space.components.len()
    );
    let res = match optimize_rate(&model, &space, budget) {
        Ok(r) => r,
        Err(OptimizeError::Infeasible { best_q }) => {
            log::warn!("no feasible point; smallest q = {best_q}");
            return Ok(Outcome {
                status: Status::Infeasible,
                files: Vec::new(),
                details: json!({ "best_q": finite_or_null(best_q) }),
            });
        }
        Err(OptimizeError::Empty(m)) => return Err(CliError::Config(format!("search: {m}"))),
        Err(e) => return Err(CliError::Runtime(e.to_string())),
    };
    let cert = match cfg.gamma {
        Some(g) => assemble_certificate(&model, &res.component, &res.params, Some(g))
            .map_err(|e| CliError::Config(format!("gamma: {e}")))?,
        None => res.certificate.clone(),
    };
    let grid: Vec<GridRow> = res
        .grid
        .iter()
        .map(|g| GridRow {
            beta: g.beta,
            delta: g.delta,
            theta: g.theta,
            c: g.c,
            l: g.l,
            eta_tilde: g.eta_tilde,
            q: g.q,
            rate: g.rate.is_finite().then_some(g.rate),
        })
        .collect();
    let files = vec![
        write_json(&ctx.out, CERTIFICATE_FILE, &cert)?,
        write_csv(&ctx.out, "gridpoints.csv", &grid)?,
    ];
    log::info!(
        "best rate {:.6e} at beta = {:.5}, delta = {:.5}, theta = {:.5e}",
        cert.rate,
        res.params.beta,
        res.params.delta,
        res.params.theta
    );
    Ok(Outcome {
        status: Status::Ok,
        files,
        details: json!({
            "rate": cert.rate,
            "params": res.params,
            "component": res.component,
            "q": cert.q,
            "evaluations": res.evaluations,
        }),
    })
}

/// The certificate the simulations run under: from `params` in the config,
/// else from the `certificate.json` left by `bound` or `optimize`. Either way
/// it is reassembled against the configured law.
pub(crate) fn resolve_certificate(ctx: &Context, cfg: &RunConfig, model: &InterArrivalModel) -> Result<BoundCertificate, CliError> {
    let (comp, params, gamma) = match cfg.params {
        Some(p) => (cfg.component()?, p, cfg.gamma),
        None => {
            let path = ctx.out.join(CERTIFICATE_FILE);
            if !path.exists() {
                return Err(CliError::Config(format!(
                    "no `params` in the config and no {} (run `bound` or `optimize` first)",
                    path.display()
                )));
            }
            let stored: BoundCertificate = read_json(&path)?;
            let gamma = cfg.gamma.or((stored.gamma > 0.0 && stored.gamma < stored.rate).then_some(stored.gamma));
            (stored.component, stored.params, gamma)
        }
    };
    assemble_certificate(model, &comp, &params, gamma).map_err(|e| CliError::Config(e.to_string()))
}

pub(crate) fn coupler<'a>(model: &'a InterArrivalModel, cert: &BoundCertificate) -> Result<Coupler<'a>, CliError> {
    Coupler::from_certificate(model, cert.clone()).map_err(sim_error)
}

pub(crate) fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::InvalidInput(m) => CliError::Config(m),
        other => CliError::Runtime(other.to_string()),
    }
}

pub(crate) fn simulation_block(cfg: &RunConfig) -> Result<&SimulationConfig, CliError> {
    cfg.simulation
        .as_ref()
        .ok_or_else(|| CliError::Config("a `simulation` block is required".into()))
}

pub fn simulate(ctx: &Context, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let sim = simulation_block(cfg)?;
    let seed = ctx.seed.unwrap_or(sim.seed);
    let cert = resolve_certificate(ctx, cfg, &model)?;
    if !cert.valid {
        return Ok(infeasible(&cert, Vec::new()));
    }
    let coupler = coupler(&model, &cert)?;
    let mut files = Vec::new();

    let mut tail = Vec::new();
    for (j, &x) in sim.x.iter().enumerate() {
        let grid = match &sim.t_grid {
            Some(g) => g.points(),
            None => default_t_grid(x, cert.rate),
        };
        log::info!("coupling from x = {x}: {} replicas", sim.replicas);
        let est = estimate_tail_with(&coupler, x, &grid, sim.replicas, seed.wrapping_add(j as u64)).map_err(sim_error)?;
        for (k, &t) in est.t_grid.iter().enumerate() {
            tail.push(TailRow {
                x,
                t,
                survival: est.survival[k],
                stderr: est.stderr[k],
                bound: if t >= x { cert.theorem1_bound(x, t).ok() } else { None },
            });
        }
    }
    files.push(write_csv(&ctx.out, "tail.csv", &tail)?);

    let traces = (0..sim.traces as u64)
        .map(|i| coupler.run(sim.x[0], &mut RngStream::for_replica(seed, Lane::Auxiliary, i)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(sim_error)?;
    if ctx.debug {
        for (i, tr) in traces.iter().enumerate() {
            for (k, it) in tr.iterations.iter().enumerate() {
                log::debug!("trace {i} iteration {k}: {}", serde_json::to_string(it).unwrap_or_default());
            }
        }
    }
    files.push(write_json(&ctx.out, "traces.json", &traces)?);

    let mut renewal_summary = serde_json::Value::Null;
    if let Some(r) = &sim.renewal {
        let grid = r.t_grid.points();
        let limit = r.h / model.mean();
        log::info!("renewal measure on {} times: {} replicas", grid.len(), sim.replicas);
        let curve = estimate_renewal_curve(&model, Delay::Fixed(r.delay), &grid, r.h, sim.replicas, seed)
            .map_err(sim_error)?;
        let rows: Vec<RenewalRow> = grid
            .iter()
            .zip(&curve)
            .map(|(&t, u)| RenewalRow {
                t,
                h: r.h,
                estimate: u.mean,
                stderr: u.stderr,
                gap: u.mean - limit,
            })
            .collect();
        files.push(write_csv(&ctx.out, "renewal.csv", &rows)?);
        renewal_summary = json!({ "delay": r.delay, "h": r.h, "limit": limit, "points": rows.len() });
    }

    Ok(Outcome {
        status: Status::Ok,
        files,
        details: json!({
            "seed": seed,
            "replicas": sim.replicas,
            "certified_rate": cert.rate,
            "x": sim.x,
            "tail_points": tail.len(),
            "renewal": renewal_summary,
        }),
    })
}
