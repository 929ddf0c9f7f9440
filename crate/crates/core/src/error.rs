use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite germ value at (s, t) = ({s}, {t})")]
    NonFiniteGerm { s: f64, t: f64 },
    #[error("driver too rough for grid budget: step [{s}, {t}] violates the admission bound ({measured:.3e} > 0.5)")]
    DriverTooRough { s: f64, t: f64, measured: f64 },
    #[error("picard iteration did not converge after {iters} iterations; gaps: {gaps:?}")]
    NoConvergence { iters: usize, gaps: Vec<f64> },
    #[error("fixed-point iteration is not contracting; gap trace: {gaps:?}")]
    NonContraction { gaps: Vec<f64> },
    #[error("basis mismatch: {0}")]
    BasisMismatch(String),
    #[error("basis overflow: {atoms} atoms over {points} grid points exceeds the memory budget")]
    BasisOverflow { atoms: usize, points: usize },
    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("particle {particle}: {source}")]
    Particle {
        particle: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
