use crate::geometry::Chart;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A point reached the rotation axis or left the half-plane.
    #[error("domain error: {0}")]
    Domain(String),

    /// The curve left the region where `chart` is a valid parametrization.
    #[error("curve escaped the {chart:?} chart at t = {t}: {reason}")]
    ChartEscape { chart: Chart, t: f64, reason: String },

    #[error("shot from height {start_height} is inadmissible: {reason}")]
    InadmissibleShot { start_height: f64, reason: String },

    #[error("bracket error: {0}")]
    Bracket(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A ledger stage was propagated before the stages it consumes.
    #[error("stage {stage} needs the outputs of {missing}")]
    Dependency { stage: String, missing: String },

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
