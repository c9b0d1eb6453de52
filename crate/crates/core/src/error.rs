use thiserror::Error;

use crate::lyapunov_perron::FixedPointTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("exponent ordering beta < zeta < gamma < alpha violated: {0}")]
    OrderingViolation(String),
    #[error("mode {mode} has eigenvalue {lambda} inside the spectral gap ({beta}, {alpha})")]
    SpectralGapViolation {
        mode: usize,
        lambda: f64,
        beta: f64,
        alpha: f64,
    },
    #[error("{0} does not vanish at the origin")]
    NonzeroAtOrigin(&'static str),
    #[error("stable block evaluated at negative time {0}")]
    StableBackwardTime(f64),
    #[error("degenerate gap: alpha - gamma = {0} must be positive")]
    DegenerateGap(f64),
    #[error("resolvent parameter must be positive, got {0}")]
    NonpositiveLambda(f64),
    #[error("lambda {lambda} coincides with eigenvalue of mode {mode}")]
    LambdaInSpectrum { lambda: f64, mode: usize },
    #[error("lambda ladder did not converge (last extrapolant change {diff:.3e})")]
    LadderNotConverged { diff: f64 },
    #[error("kappa {kappa} must exceed vartheta {vartheta}")]
    KappaBelowVartheta { kappa: f64, vartheta: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("state left the finite range at step {step}, sample {sample}")]
    NonfiniteState { step: usize, sample: usize },
    #[error("integrand flagged as non-adapted")]
    AdaptednessViolation,
    #[error("regression design ill-conditioned (condition number {condition:.3e})")]
    IllConditionedDesign { condition: f64 },
    #[error("regression underdetermined: {samples} samples for {basis} basis functions")]
    Underdetermined { samples: usize, basis: usize },
    #[error("{side} gap condition fails: {value} >= 1")]
    GapViolation { side: &'static str, value: f64 },
    #[error("truncation horizon {horizon} too short: tail estimate {tail:.3e} exceeds {tolerance:.3e}")]
    TruncationTooShort {
        horizon: f64,
        tail: f64,
        tolerance: f64,
    },
    #[error("fixed-point iteration did not converge in {} iterations", .0.iterations)]
    MaxIterExceeded(Box<FixedPointTrace>),
    #[error("graph evaluations disagree: {difference:.3e} > {tolerance:.3e}")]
    ConsistencyFailure { difference: f64, tolerance: f64 },
    #[error("spectra of the two blocks are not separated")]
    NoSeparation,
}
