use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("face {face}: index out of range: {index} (vertex count {len})")]
    IndexOutOfRange { face: usize, index: i64, len: usize },
    #[error("face {face} repeats a vertex")]
    DegenerateFace { face: usize },
    #[error("non-manifold mesh: {0}")]
    NonManifold(String),
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("blended skinning transform of point {point} is singular (det {det:e})")]
    SingularTransform { point: usize, det: f64 },
    #[error("underconstrained system: {0}")]
    Underconstrained(String),
    #[error("matrix is not positive definite at pivot {0}")]
    NotPositiveDefinite(usize),
    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),
    #[error("boundary loop count mismatch: template has {template}, target has {target}")]
    LoopCountMismatch { template: usize, target: usize },
    #[error("garment {0} absent")]
    GarmentAbsent(u32),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("degenerate camera: {0}")]
    DegenerateCamera(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
