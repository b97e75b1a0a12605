use thiserror::Error;

pub type Result<T> = std::result::Result<T, PanError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PanError {
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("rank deficient: {0}")]
    Rank(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("no convergence after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    Convergence {
        iterations: usize,
        gradient_norm: f64,
        best: Vec<f64>,
    },

    #[error("tuning failed at (lambda1={lambda1}, lambda2={lambda2}): {failures} of {total} replicates failed")]
    Tuning {
        lambda1: f64,
        lambda2: f64,
        failures: usize,
        total: usize,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl PanError {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            PanError::Config(_) => 2,
            PanError::Parse { .. }
            | PanError::Schema(_)
            | PanError::Io(_)
            | PanError::InsufficientData(_)
            | PanError::Dimension { .. } => 3,
            PanError::Degenerate(_)
            | PanError::Rank(_)
            | PanError::Domain(_)
            | PanError::Convergence { .. }
            | PanError::Tuning { .. } => 4,
        }
    }

    /// Short machine-readable tag for error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            PanError::Degenerate(_) => "degenerate",
            PanError::InsufficientData(_) => "insufficient_data",
            PanError::Rank(_) => "rank",
            PanError::Domain(_) => "domain",
            PanError::Dimension { .. } => "dimension",
            PanError::Convergence { .. } => "convergence",
            PanError::Tuning { .. } => "tuning",
            PanError::Parse { .. } => "parse",
            PanError::Schema(_) => "schema",
            PanError::Config(_) => "config",
            PanError::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for PanError {
    fn from(e: std::io::Error) -> Self {
        PanError::Io(e.to_string())
    }
}
