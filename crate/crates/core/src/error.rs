use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh parse error at line {line}: {msg}")]
    MeshParse { line: usize, msg: String },
    #[error("cell {cell} is inverted or degenerate (signed area {area:e})")]
    InvertedCell { cell: usize, area: f64 },
    #[error("non-conforming mesh: {0}")]
    NonConforming(String),
    #[error("unknown boundary tag `{0}`")]
    UnknownBoundaryTag(String),
    #[error("boundary tag {0} has no boundary condition assigned")]
    UnassignedBoundaryTag(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point ({0}, {1}) is not inside the mesh")]
    PointNotFound(f64, f64),
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("nonlinear solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonlinearDivergence { iterations: usize, residual: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("rank {r} out of range 1..={max}")]
    RankOutOfRange { r: usize, max: usize },
    #[error("empty snapshot set")]
    EmptySnapshots,
    #[error("inner product operator is not positive semidefinite on the inputs (eigenvalue {0:e})")]
    IndefiniteInnerProduct(f64),
    #[error("rank deficiency: supremizer {0} lies in the span of the previous ones")]
    RankDeficientSupremizer(usize),
    #[error("zero error at level {0}, order undefined")]
    ZeroError(usize),
    #[error("no zero crossings of the lift signal; flow is not periodic")]
    NotPeriodic,
    #[error("time grids do not match: {0}")]
    GridMismatch(String),
    #[error("container format error: {0}")]
    Format(String),
    #[error("mesh fingerprint mismatch: artifact {artifact:016x}, current mesh {current:016x}")]
    StaleArtifact { artifact: u64, current: u64 },
    #[error("missing upstream artifact {0}")]
    MissingArtifact(String),
    #[error("no runs found under {0}")]
    NoRuns(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
