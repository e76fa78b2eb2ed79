use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate geometry: UE {ue} and AP {ap} are co-located")]
    DegenerateGeometry { ue: usize, ap: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("UE {0} is not assigned to any subband")]
    Unassigned(usize),
    #[error("activation cache does not belong to the current parameters")]
    StaleCache,
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
