//! JSON run configuration.

use std::path::{Path, PathBuf};

use renewal_core::dist::DistributionSpec;
use renewal_core::optimize::{Axis, ComponentGrid, SearchSpace};
use renewal_core::{BoundParams, InterArrivalModel, UniformComponent};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Law of X, with its uniform component when one is fixed.
    pub distribution: DistributionSpec,
    #[serde(default)]
    pub params: Option<BoundParams>,
    /// Corollary exponent; defaults to 0.99 times the certified rate.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub search: Option<SearchConfig>,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default)]
    pub beta: Option<Axis>,
    #[serde(default)]
    pub delta: Option<Axis>,
    #[serde(default)]
    pub theta: Option<Axis>,
    #[serde(default)]
    pub refine_top: Option<usize>,
    /// Nelder–Mead evaluations per start.
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Component candidates; without it the distribution's own component is
    /// the only candidate.
    #[serde(default)]
    pub components: Option<ComponentGrid>,
}

fn default_budget() -> usize {
    200
}

/// Times at which a curve is evaluated: an explicit list or an evenly spaced
/// range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeGrid {
    Values(Vec<f64>),
    Linear(Axis),
}

impl TimeGrid {
    pub fn points(&self) -> Vec<f64> {
        match self {
            TimeGrid::Values(v) => v.clone(),
            TimeGrid::Linear(a) => a.linear(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    /// Initial gaps of the coupling.
    #[serde(default = "default_x")]
    pub x: Vec<f64>,
    /// Survival grid; 32 log-spaced points over the certified decay scale
    /// when absent.
    #[serde(default)]
    pub t_grid: Option<TimeGrid>,
    /// Coupling traces written out in full.
    #[serde(default = "default_traces")]
    pub traces: usize,
    #[serde(default)]
    pub renewal: Option<RenewalConfig>,
}

fn default_replicas() -> usize {
    100_000
}

fn default_x() -> Vec<f64> {
    vec![0.0]
}

fn default_traces() -> usize {
    3
}

/// Renewal-measure curve `U^x((t, t+h])` used for the empirical rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenewalConfig {
    #[serde(default)]
    pub delay: f64,
    #[serde(default = "unit")]
    pub h: f64,
    #[serde(default = "default_renewal_grid")]
    pub t_grid: TimeGrid,
}

fn unit() -> f64 {
    1.0
}

fn default_renewal_grid() -> TimeGrid {
    TimeGrid::Linear(Axis { min: 0.0, max: 2.5, points: 21 })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            CliError::Config(format!("field `{path}`: {inner}"))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if let Some(p) = &self.params {
            p.check().map_err(|e| CliError::Config(format!("params: {e}")))?;
        }
        if let Some(sim) = &self.simulation {
            if sim.replicas < 100 {
                return Err(CliError::Config("simulation.replicas: need at least 100".into()));
            }
            if sim.x.is_empty() || sim.x.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return Err(CliError::Config("simulation.x: need nonnegative initial gaps".into()));
            }
            if let Some(g) = &sim.t_grid {
                check_grid("simulation.t_grid", g)?;
            }
            if let Some(r) = &sim.renewal {
                check_grid("simulation.renewal.t_grid", &r.t_grid)?;
                if !(r.h > 0.0) || !(r.delay >= 0.0) {
                    return Err(CliError::Config("simulation.renewal: need h > 0 and delay >= 0".into()));
                }
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<InterArrivalModel, CliError> {
        InterArrivalModel::new(self.distribution.law.clone()).map_err(|e| CliError::Config(format!("distribution: {e}")))
    }

    pub fn component(&self) -> Result<UniformComponent, CliError> {
        self.distribution
            .component
            .ok_or_else(|| CliError::Config("distribution.component is required".into()))
    }

    pub fn search_space(&self, model: &InterArrivalModel) -> Result<(SearchSpace, usize), CliError> {
        let search = self
            .search
            .as_ref()
            .ok_or_else(|| CliError::Config("a `search` block is required".into()))?;
        let components = match &search.components {
            Some(grid) => renewal_core::optimize::enumerate_components(model, grid),
            None => vec![self.component()?],
        };
        if components.is_empty() {
            return Err(CliError::Config(
                "search.components: no candidate is dominated by the density".into(),
            ));
        }
        let mut space = SearchSpace::default_for(model, components);
        if let Some(a) = search.beta {
            space.beta = a;
        }
        if let Some(a) = search.delta {
            space.delta = a;
        }
        if let Some(a) = search.theta {
            space.theta = a;
        }
        if let Some(k) = search.refine_top {
            space.refine_top = k;
        }
        Ok((space, search.budget))
    }
}

fn check_grid(name: &str, g: &TimeGrid) -> Result<(), CliError> {
    let pts = g.points();
    if pts.is_empty() || pts.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(CliError::Config(format!("{name}: need a nonempty grid of nonnegative times")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_the_simulation_block() {
        let cfg = RunConfig::parse(
            r#"{"distribution": {"kind": "folded_gaussian"}, "simulation": {"renewal": {}}}"#,
        )
        .unwrap();
        let sim = cfg.simulation.unwrap();
        assert_eq!((sim.replicas, sim.seed, sim.traces), (100_000, 0, 3));
        assert_eq!(sim.x, vec![0.0]);
        let r = sim.renewal.unwrap();
        assert_eq!((r.delay, r.h), (0.0, 1.0));
        assert_eq!(r.t_grid.points().len(), 21);
    }

    #[test]
    fn time_grid_forms() {
        let list: TimeGrid = serde_json::from_str("[0, 1.5, 4]").unwrap();
        assert_eq!(list.points(), vec![0.0, 1.5, 4.0]);
        let range: TimeGrid = serde_json::from_str(r#"{"min": 0, "max": 2, "points": 5}"#).unwrap();
        assert_eq!(range.points(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            r#"{"distribution": {"kind": "exponential", "rate": 1}, "params": {"beta": 1, "delta": 1.5, "theta": 0.1}}"#,
            r#"{"distribution": {"kind": "exponential", "rate": 1}, "simulation": {"replicas": 10}}"#,
            r#"{"distribution": {"kind": "exponential", "rate": 1}, "simulation": {"x": [-1]}}"#,
            r#"{"distribution": {"kind": "exponential", "rate": 1}, "simulation": {"t_grid": []}}"#,
            r#"{"distribution": {"kind": "exponential", "rate": 1}, "simulation": {"renewal": {"h": 0}}}"#,
            r#"{"distribution": {"kind": "weibull"}}"#,
        ] {
            assert!(matches!(RunConfig::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn search_space_needs_candidates() {
        let cfg = RunConfig::parse(r#"{"distribution": {"kind": "exponential", "rate": 1}, "search": {}}"#).unwrap();
        let model = cfg.model().unwrap();
        // no component grid and no declared component
        assert!(cfg.search_space(&model).is_err());
        let cfg = RunConfig::parse(
            r#"{"distribution": {"kind": "exponential", "rate": 1},
                "search": {"components": {"c": {"min": 0.5, "max": 1, "points": 2},
                                          "L": {"min": 0.5, "max": 0.5, "points": 1},
                                          "eta_tilde": "max"}}}"#,
        )
        .unwrap();
        let (space, budget) = cfg.search_space(&model).unwrap();
        assert_eq!((space.components.len(), budget), (2, 200));
    }
}
