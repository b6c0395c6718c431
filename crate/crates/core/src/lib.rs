//! Galton-Watson processes in varying environment: pgf compositions, exact
//! marginal laws, one- and two-spine samplers, and the numerical experiments
//! built on them.

pub mod config;
pub mod environment;
pub mod error;
pub mod experiments;
pub mod montecarlo;
pub mod offspring;
pub mod oracle;
pub mod pgf;
pub mod spines;
pub mod stats;
pub mod streams;
pub mod summation;

pub use environment::{Environment, Regime, RegimeDiagnostics};
pub use error::{Error, Result};
pub use offspring::OffspringDistribution;
