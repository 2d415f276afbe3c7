use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("site {site} out of range for a space with {len} subsystems")]
    SiteOutOfRange { site: usize, len: usize },

    #[error("operators live on different Hilbert spaces ({left:?} vs {right:?})")]
    SpaceMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("invalid Hilbert space: {0}")]
    InvalidSpace(String),

    #[error("total dimension {dim} exceeds the cap of {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("operator is not Hermitian (max deviation {deviation:e}){}", context_suffix(.context))]
    NotHermitian { deviation: f64, context: Option<String> },

    #[error("negative rate {0}")]
    NegativeRate(f64),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("tabulated grids are incompatible: spacing {left} vs {right}")]
    IncompatibleGrids { left: f64, right: f64 },

    #[error("s = {re}+{im}i lies outside the region of convergence")]
    OutsideConvergence { re: f64, im: f64 },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("history grid mismatch: {0}")]
    HistoryMismatch(String),

    #[error("state invariant violated at t = {t}: {what}")]
    InvariantViolation { t: f64, what: String },

    #[error("control setup outside the fast-controller regime: {0}")]
    Regime(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

fn context_suffix(ctx: &Option<String>) -> String {
    match ctx {
        Some(c) => format!(" in {c}"),
        None => String::new(),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
