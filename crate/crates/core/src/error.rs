use num_complex::Complex64;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("kernel image has a pole at s = {s} (s = -lambda)")]
    Pole { s: Complex64 },

    #[error("s-range [{lo}, {hi}] contains the kernel pole at s = {pole}")]
    RangeContainsPole { lo: f64, hi: f64, pole: f64 },

    #[error("transfer matrix is singular on the clearing curve (|P| = {residual:e})")]
    Singular { residual: f64 },

    #[error("clearing-curve residual {residual:e} at s = {s} exceeds tolerance")]
    Residual { s: f64, residual: f64 },

    #[error("inversion did not converge at t = {t}: node doubling changed the value by {change:e}")]
    NonConvergence { t: f64, change: f64 },

    #[error("contour rejected: {0}")]
    InvalidContour(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("point outside the sampled grid: {0}")]
    OutOfGrid(String),

    #[error("numerical blow-up at step {step} (t = {t}): max |p| = {max_abs:e}")]
    Instability { step: usize, t: f64, max_abs: f64 },

    #[error("reference slice has zero mass after clipping")]
    DegenerateReference,

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
