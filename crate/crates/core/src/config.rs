//! JSON configuration: offspring and environment specs plus experiment settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DistSpec {
    Geometric { p: f64 },
    Table { pmf: Vec<f64> },
    Poisson { lambda: f64 },
    Binomial { n: u64, p: f64 },
    Point { k: usize },
}

impl DistSpec {
    pub fn build(&self) -> Result<OffspringDistribution> {
        match self {
            DistSpec::Geometric { p } => OffspringDistribution::geometric(*p),
            DistSpec::Table { pmf } => OffspringDistribution::table(pmf.clone()),
            DistSpec::Poisson { lambda } => OffspringDistribution::poisson(*lambda),
            DistSpec::Binomial { n, p } => OffspringDistribution::binomial(*n, *p),
            DistSpec::Point { k } => Ok(OffspringDistribution::point(*k)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase", deny_unknown_fields)]
pub enum EnvSpec {
    Constant { dist: DistSpec },
    Periodic { cycle: Vec<DistSpec> },
    Explicit { head: Vec<DistSpec>, tail: DistSpec },
}

impl EnvSpec {
    pub fn build(&self) -> Result<Environment> {
        match self {
            EnvSpec::Constant { dist } => Environment::constant(dist.build()?),
            EnvSpec::Periodic { cycle } => Environment::periodic(build_all(cycle)?),
            EnvSpec::Explicit { head, tail } => Environment::explicit(build_all(head)?, tail.build()?),
        }
    }

    /// Constant critical geometric(1/2).
    pub fn e1() -> Self {
        EnvSpec::Constant { dist: DistSpec::Geometric { p: 0.5 } }
    }

    /// Period two: geometric(1/2), then table(1/4, 1/2, 1/4). Both laws have mean one.
    pub fn e2() -> Self {
        EnvSpec::Periodic {
            cycle: vec![DistSpec::Geometric { p: 0.5 }, DistSpec::Table { pmf: vec![0.25, 0.5, 0.25] }],
        }
    }

    /// Constant supercritical binomial(2, 3/4).
    pub fn e3() -> Self {
        EnvSpec::Constant { dist: DistSpec::Binomial { n: 2, p: 0.75 } }
    }

    pub fn reference(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "e1" => Some(Self::e1()),
            "e2" => Some(Self::e2()),
            "e3" => Some(Self::e3()),
            _ => None,
        }
    }
}

fn build_all(specs: &[DistSpec]) -> Result<Vec<OffspringDistribution>> {
    specs.iter().map(DistSpec::build).collect()
}

/// Pass thresholds. Every field is the value a row is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub decomposition: f64,
    pub transforms: f64,
    pub quadrature: f64,
    pub closed_form: f64,
    pub tv: f64,
    pub chi_square_p: f64,
    pub kolmogorov: f64,
    pub uniform: f64,
    pub g_sup: f64,
    pub ks: f64,
    pub yaglom_curve: f64,
    pub abort_fraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            decomposition: 1e-12,
            transforms: 1e-10,
            quadrature: 1e-8,
            closed_form: 1e-12,
            tv: 0.005,
            chi_square_p: 0.001,
            kolmogorov: 0.01,
            uniform: 1e-2,
            g_sup: 0.05,
            ks: 0.02,
            yaglom_curve: 5e-3,
            abort_fraction: 0.01,
        }
    }
}

pub const DEFAULT_SEED: u64 = 20_240_601;

/// Settings shared by every experiment. `horizons` and `replicates` fall back to
/// per-experiment defaults when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvSpec,
    pub horizons: Option<Vec<usize>>,
    pub replicates: Option<u64>,
    pub seed: u64,
    pub lambda_grid: Vec<f64>,
    pub s_grid: Vec<f64>,
    pub tolerances: Tolerances,
    /// Survivors required before a Yaglom KS row is judged.
    pub min_survivors: u64,
    pub node_budget: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    /// Run limit experiments on environments that do not classify as critical.
    pub allow_noncritical: bool,
    /// Horizon of the exact conditional Laplace curve in the Yaglom experiment.
    pub curve_horizon: usize,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            environment: EnvSpec::e1(),
            horizons: None,
            replicates: None,
            seed: DEFAULT_SEED,
            lambda_grid: vec![0.0, 0.1, 0.5, 1.0, 2.0, 5.0],
            s_grid: (0..=20).map(|i| i as f64 * 0.25).collect(),
            tolerances: Tolerances::default(),
            min_survivors: 100_000,
            node_budget: crate::spines::DEFAULT_NODE_BUDGET,
            threads: 0,
            allow_noncritical: false,
            curve_horizon: 1000,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn with_environment(environment: EnvSpec) -> Self {
        Self { environment, ..Self::default() }
    }

    /// Parses JSON; errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(h) = &self.horizons {
            if h.is_empty() {
                return Err(Error::Config("horizons: empty list".into()));
            }
            if h[0] == 0 {
                return Err(Error::Config("horizons: must be positive".into()));
            }
            if h.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("horizons: must be strictly increasing".into()));
            }
        }
        if self.replicates == Some(0) {
            return Err(Error::Config("replicates: must be at least 1".into()));
        }
        for (name, grid) in [("lambda_grid", &self.lambda_grid), ("s_grid", &self.s_grid)] {
            if grid.is_empty() {
                return Err(Error::Config(format!("{name}: empty grid")));
            }
            if grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config(format!("{name}: values must be finite and >= 0")));
            }
        }
        if self.curve_horizon == 0 {
            return Err(Error::Config("curve_horizon: must be positive".into()));
        }
        self.environment.build().map_err(|e| Error::Config(format!("environment: {e}")))?;
        Ok(())
    }

    pub fn horizons_or(&self, default: &[usize]) -> Vec<usize> {
        self.horizons.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn replicates_or(&self, default: u64) -> u64 {
        self.replicates.unwrap_or(default)
    }
}
