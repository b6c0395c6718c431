use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("degenerate mean: offspring law has f'(1) = 0")]
    DegenerateMean,

    #[error("no size-biased law: distribution is degenerate at zero")]
    NoSizeBiasedLaw,

    #[error("no pair-biased law: f''(1) = 0 (support within {{0, 1}})")]
    NoPairBiasedLaw,

    #[error("shift precondition violated: positive mass below {0}")]
    ShiftPrecondition(usize),

    #[error("ratio undefined: {0}")]
    RatioUndefined(&'static str),

    #[error("pgf derivative order {0} not supported (expected 0..=3)")]
    UnsupportedOrder(u32),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("mean product overflows at generation {n}: mu_n is {}", if *.positive { "+inf" } else { "0 (underflow)" })]
    MuOverflow { n: usize, positive: bool },

    #[error("process extinct by generation {0}: survival probability below 1e-300")]
    Extinct(usize),

    #[error("inconsistent evaluation: {0}")]
    Inconsistent(String),

    #[error("zero weighted mass: {0}-transform undefined")]
    ZeroWeightedMass(&'static str),

    #[error("replicate aborted: node budget of {budget} exceeded")]
    NodeBudget { budget: u64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
