//! Experiment configuration: one JSON document shared by all subcommands.

use std::path::Path;

use anyhow::{bail, Context, Result};
use privbandit::bench_audit::{AdversarySpec, Experiment};
use privbandit::private_bandit::{perfect_sqrt, round_down_to_square};
use privbandit::{DecisionSet, DomainKind, FeasibilityMode, Privacy};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    /// Required except for partition matroids, whose parts fix it.
    #[serde(default)]
    pub dimension: Option<usize>,
    #[serde(flatten)]
    pub kind: DomainKind,
}

impl DomainConfig {
    pub fn build(&self) -> Result<DecisionSet> {
        let set = match (&self.kind, self.dimension) {
            (DomainKind::PartitionMatroidBase { parts }, dim) => {
                let set = DecisionSet::partition_matroid(parts.clone())?;
                if let Some(d) = dim {
                    if d != privbandit::LinearOracle::dimension(&set) {
                        bail!("domain dimension {d} does not match the matroid parts");
                    }
                }
                set
            }
            (kind, Some(d)) => DecisionSet::new(d, kind.clone())?,
            (_, None) => bail!("domain.dimension is required"),
        };
        Ok(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default)]
    pub master: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self { count: 1, master: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default = "default_concentration_trials")]
    pub concentration_trials: usize,
    #[serde(default = "default_concentration_delta")]
    pub concentration_delta: f64,
    #[serde(default = "default_dp_trials")]
    pub dp_trials: usize,
    #[serde(default = "default_dp_horizon")]
    pub dp_horizon: usize,
    #[serde(default = "default_dp_epsilon")]
    pub dp_epsilon: f64,
    /// Allowed excess of the estimated over the calibrated epsilon.
    #[serde(default = "default_dp_slack")]
    pub dp_slack: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            concentration_trials: default_concentration_trials(),
            concentration_delta: default_concentration_delta(),
            dp_trials: default_dp_trials(),
            dp_horizon: default_dp_horizon(),
            dp_epsilon: default_dp_epsilon(),
            dp_slack: default_dp_slack(),
        }
    }
}

fn one() -> usize {
    1
}
fn default_concentration_trials() -> usize {
    1000
}
fn default_concentration_delta() -> f64 {
    0.1
}
fn default_dp_trials() -> usize {
    1_000_000
}
fn default_dp_horizon() -> usize {
    8
}
fn default_dp_epsilon() -> f64 {
    0.5
}
fn default_dp_slack() -> f64 {
    0.1
}
fn default_comparator_iterations() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainConfig,
    pub adversary: AdversarySpec,
    pub horizon: usize,
    #[serde(default)]
    pub diameter: Option<f64>,
    #[serde(default = "no_privacy")]
    pub privacy: Privacy,
    #[serde(default)]
    pub feasibility: FeasibilityMode,
    #[serde(default)]
    pub seeds: SeedConfig,
    #[serde(default = "default_comparator_iterations")]
    pub comparator_iterations: usize,
    /// Horizons for `sweep`; each must be a perfect square.
    #[serde(default)]
    pub grid: Option<Vec<usize>>,
    /// Test mode for `sweep`: regret is replaced by `T^p` exactly.
    #[serde(default)]
    pub synthetic_exponent: Option<f64>,
    #[serde(default)]
    pub audit: AuditConfig,
}

fn no_privacy() -> Privacy {
    Privacy::None
}

/// A validated configuration with its horizon rounded to a perfect square.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub requested_horizon: usize,
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn resolve(self, seed_override: Option<u64>) -> Result<Resolved> {
        let mut config = self;
        if let Some(s) = seed_override {
            config.seeds.master = s;
        }
        if config.seeds.count == 0 {
            bail!("seeds.count must be at least 1");
        }
        let requested = config.horizon;
        let horizon = round_down_to_square(requested);
        if horizon == 0 {
            bail!("horizon must be at least 1");
        }
        config.horizon = horizon;
        if let Some(grid) = &config.grid {
            if let Some(t) = grid.iter().find(|&&t| t == 0 || perfect_sqrt(t).is_none()) {
                bail!("grid point {t} is not a positive perfect square");
            }
        }
        let experiment = experiment_for(&config, horizon)?;
        // Validate schedule, losses and comparator inputs before any run.
        experiment.params()?;
        experiment.losses()?;
        if config.comparator_iterations == 0 {
            bail!("comparator_iterations must be at least 1");
        }
        Ok(Resolved { config, requested_horizon: requested, experiment })
    }
}

pub fn experiment_for(config: &ExperimentConfig, horizon: usize) -> Result<Experiment> {
    Ok(Experiment {
        domain: config.domain.build()?,
        adversary: config.adversary.clone(),
        horizon,
        privacy: config.privacy,
        feasibility: config.feasibility,
        diameter: config.diameter,
        comparator_iterations: config.comparator_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "domain": {"kind": "l2_ball", "radius": 1.0, "dimension": 2},
        "adversary": {"kind": "fixed_linear", "direction": [1.0, 0.0], "lipschitz": 1.0},
        "horizon": 300
    }"#;

    #[test]
    fn parses_and_rounds_horizon() {
        let r = ExperimentConfig::parse(MINIMAL).unwrap().resolve(None).unwrap();
        assert_eq!(r.requested_horizon, 300);
        assert_eq!(r.config.horizon, 289);
        assert_eq!(r.config.privacy, Privacy::None);
        assert_eq!(r.config.seeds, SeedConfig { count: 1, master: 0 });
        let r = ExperimentConfig::parse(MINIMAL).unwrap().resolve(Some(7)).unwrap();
        assert_eq!(r.config.seeds.master, 7);
    }

    #[test]
    fn parses_every_option() {
        let text = r#"{
            "domain": {"kind": "partition_matroid_base", "parts": [{"size": 3, "rank": 1}, {"size": 2, "rank": 1}]},
            "adversary": {"kind": "rotating_linear", "directions": [[1,0,0,0,0],[0,1,0,0,1]], "period": 4, "lipschitz": 2.0},
            "horizon": 64,
            "diameter": 3.0,
            "privacy": {"mode": "approx", "epsilon": 1.0, "delta": 1e-6},
            "feasibility": "enlarged_domain",
            "seeds": {"count": 3, "master": 11},
            "comparator_iterations": 10,
            "grid": [16, 64, 256, 1024],
            "audit": {"dp_trials": 1000}
        }"#;
        let r = ExperimentConfig::parse(text).unwrap().resolve(None).unwrap();
        assert_eq!(r.experiment.diameter, Some(3.0));
        assert_eq!(r.config.audit.dp_trials, 1000);
        assert_eq!(r.config.audit.dp_horizon, 8);
    }

    #[test]
    fn rejects_invalid_configs() {
        let bad = [
            MINIMAL.replace("\"horizon\": 300", "\"horizon\": 0"),
            MINIMAL.replace("\"dimension\": 2", "\"dimension\": 3"),
            MINIMAL.replace("\"radius\": 1.0", "\"radius\": -1.0"),
            MINIMAL.replace("\"horizon\": 300", "\"horizon\": 300, \"typo\": 1"),
            MINIMAL.replace("\"horizon\": 300", "\"horizon\": 300, \"grid\": [64, 100, 200]"),
            MINIMAL.replace("\"horizon\": 300", "\"horizon\": 300, \"privacy\": {\"mode\": \"pure\", \"epsilon\": -1}"),
        ];
        for text in bad {
            let parsed = ExperimentConfig::parse(&text).and_then(|c| c.resolve(None));
            assert!(parsed.is_err(), "{text}");
        }
    }
}
