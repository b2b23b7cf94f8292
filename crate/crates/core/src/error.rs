use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("constant polynomial")]
    ConstantPolynomial,
    #[error("unpaired complex root {0}")]
    UnpairedRoot(Complex64),
    #[error("degree mismatch: {0}")]
    DegreeMismatch(String),
    #[error("polynomial is not monic")]
    NotMonic,
    #[error("non-causal autoregressive polynomial (zero {0} has non-negative real part)")]
    NonCausal(Complex64),
    #[error("non-invertible moving-average polynomial (zero {0} has non-negative real part)")]
    NonInvertible(Complex64),
    #[error("confluent case out of scope: {0}")]
    ConfluentOutOfScope(String),
    #[error("non-real moving-average zero {0}")]
    NonRealZero(Complex64),
    #[error("contour resolution exhausted after {0} points")]
    ContourResolutionExhausted(usize),
    #[error("non-stationary model: the characteristic function vanishes on the closed right half-plane")]
    NonStationary,
    #[error("derivative order {n} exceeds the supported maximum {max}")]
    OrderTooHigh { n: usize, max: usize },
    #[error("argument {0} outside the closed right half-plane")]
    OutsideHalfPlane(Complex64),
    #[error("discrete-delay closed form needs |xi| <= 1/tau (xi = {xi}, tau = {tau})")]
    OutsideDiscreteDelayRegime { xi: f64, tau: f64 },
    #[error("near-singular frequency matrix at y = {y} (condition {condition:e})")]
    IllConditioned { y: f64, condition: f64 },
    #[error("time step {dt} exceeds the smallest delay lag {min_lag}")]
    StepExceedsLag { dt: f64, min_lag: f64 },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("empty path")]
    EmptyPath,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
