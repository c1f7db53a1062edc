use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error at node {node}: {what}")]
    Numeric { what: String, node: usize },

    /// Trajectories crossed: the label-to-position map lost invertibility.
    #[error("mesh tangling: volume ratio {value:.3e} <= 0 at node {node}, t = {time:.6}")]
    MeshTangling { node: usize, time: f64, value: f64 },

    #[error("transform not supported: {0}")]
    UnsupportedTransform(String),

    #[error("{charge} charge refused: potential violates {constraint} (max residual {residual:.3e})")]
    InadmissiblePotential {
        charge: String,
        constraint: String,
        residual: f64,
    },

    #[error("relabel map rejected: {0}")]
    InvalidRelabel(String),

    #[error("circulation loop passes through starved fluid near arc point {index}")]
    LoopInStarvedRegion { index: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty comparison mask")]
    EmptyMask,

    #[error("runtime failure: {0}")]
    Runtime(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 = configuration, 3 = runtime fatal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InadmissiblePotential { .. }
            | Error::InvalidRelabel(_)
            | Error::GridMismatch(_)
            | Error::UnsupportedTransform(_) => 2,
            _ => 3,
        }
    }
}
