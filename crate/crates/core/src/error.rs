use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),

    #[error("shadowing covariance is not positive definite ({0})")]
    DegenerateCovariance(&'static str),

    #[error("pilot pool holds {pairs} pairs but {ues} UEs need one each")]
    PilotPoolTooSmall { pairs: usize, ues: usize },

    #[error("pilot plan violates the co-pilot orthogonality constraint")]
    InvalidPilotPlan,

    #[error("AP {0} has zero aggregate uplink estimate quality")]
    ZeroEstimateQuality(usize),

    #[error("pilot overhead {overhead} leaves no data symbols in a coherence interval of {coherence}")]
    OverheadTooLarge { overhead: usize, coherence: usize },

    #[error("max-min power control is degenerate: {0}")]
    DegenerateScenario(String),

    #[error("conic solver failed: {0}")]
    NumericalFailure(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
