use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("multi-index arithmetic overflow: {0}")]
    Overflow(String),

    #[error("wave function vanishes at the evaluation point (|psi| = {amplitude:.3e}, floor {floor:.3e})")]
    Node { amplitude: f64, floor: f64 },

    #[error("trajectory approached a wave-function zero at t = {t}: |R| = {r:.3} exceeds {bound}")]
    NodeApproach { t: f64, r: f64, bound: f64 },

    #[error("adaptive step size underflow at t = {t} (dt = {dt:.3e})")]
    StepFailure { t: f64, dt: f64 },

    #[error("grid too coarse: spectral tail fraction {tail:.3e} exceeds {limit:.1e}")]
    GridTooCoarse { tail: f64, limit: f64 },

    #[error("trajectory record does not retain momentum {0}")]
    MissingMomentum(String),

    #[error("one-step quadrature tail {tail:.3e} exceeds {limit:.1e} of the integral")]
    QuadratureDivergence { tail: f64, limit: f64 },

    #[error("pointer packets overlap: {overlap:.3e} between outcomes {a} and {b}")]
    PacketsOverlap { a: usize, b: usize, overlap: f64 },

    #[error("system point lies where branches {0:?} all exceed the ambiguity threshold")]
    AmbiguousBranch(Vec<usize>),

    #[error("momentum oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical integration itself (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Node { .. }
                | Error::NodeApproach { .. }
                | Error::StepFailure { .. }
                | Error::GridTooCoarse { .. }
                | Error::QuadratureDivergence { .. }
                | Error::OracleUnavailable(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
