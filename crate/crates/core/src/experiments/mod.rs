//! Verification runs: exact identity suites, convergence tables, and Monte Carlo
//! comparisons against exact laws.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::config::ExperimentConfig;
use crate::environment::{Environment, Regime};
use crate::error::{Error, Result};
use crate::montecarlo::Driver;
use crate::streams::ReplicateStreams;

pub mod exact;
pub mod report;
pub mod sampling;

pub use exact::{run_decomposition_check, run_g_convergence, run_kolmogorov, run_uniform_limit};
pub use report::{ExperimentReport, Relation, Row, Status};
pub use sampling::{
    laplace_curve_gap, run_exponential_characterization, run_transform_identities, run_yaglom, simulate, transform_rows,
    Simulation, SimulationKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Identities,
    Decomposition,
    UniformLimit,
    GConvergence,
    Kolmogorov,
    Exponential,
    Yaglom,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Identities,
        Experiment::Decomposition,
        Experiment::UniformLimit,
        Experiment::GConvergence,
        Experiment::Kolmogorov,
        Experiment::Exponential,
        Experiment::Yaglom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Identities => "identities",
            Experiment::Decomposition => "decomposition",
            Experiment::UniformLimit => "uniform-limit",
            Experiment::GConvergence => "g-convergence",
            Experiment::Kolmogorov => "kolmogorov",
            Experiment::Exponential => "exponential",
            Experiment::Yaglom => "yaglom",
        }
    }

    /// Runs the experiment and stamps the wall time.
    pub fn run(self, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
        cfg.validate()?;
        let start = Instant::now();
        let mut report = match self {
            Experiment::Identities => run_transform_identities(cfg),
            Experiment::Decomposition => run_decomposition_check(cfg),
            Experiment::UniformLimit => run_uniform_limit(cfg),
            Experiment::GConvergence => run_g_convergence(cfg),
            Experiment::Kolmogorov => run_kolmogorov(cfg),
            Experiment::Exponential => run_exponential_characterization(cfg),
            Experiment::Yaglom => run_yaglom(cfg),
        }?;
        report.wall_time_secs = start.elapsed().as_secs_f64();
        Ok(report)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

fn build_env(cfg: &ExperimentConfig) -> Result<Environment> {
    cfg.environment.build().map_err(|e| Error::Config(format!("environment: {e}")))
}

/// Limit experiments need a critical environment unless the config overrides it.
fn require_critical(env: &Environment, cfg: &ExperimentConfig, horizon: usize) -> Result<()> {
    if cfg.allow_noncritical {
        return Ok(());
    }
    let regime = env.classify(horizon, 1e-6).regime;
    if regime != Regime::Critical {
        return Err(Error::Config(format!(
            "environment classifies as {regime}, not critical (set allow_noncritical to override)"
        )));
    }
    Ok(())
}

fn driver(cfg: &ExperimentConfig) -> Result<Driver> {
    Driver::new(cfg.threads)
}

/// Streams of one experiment at one horizon; `tag` separates samplers.
fn streams(cfg: &ExperimentConfig, tag: u64, n: usize) -> ReplicateStreams {
    ReplicateStreams::new(cfg.seed).substreams(tag).substreams(n as u64)
}
