use crate::craniectomy::CraniectomySpec;

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("voxel grid dims {expected:?} expected, got {got:?}")]
    ShapeMismatch {
        expected: [usize; 3],
        got: [usize; 3],
    },

    #[error("grids are not on the same geometry: {0}")]
    GridMismatch(String),

    #[error("non-finite voxel value at linear index {index}")]
    NonFiniteValue { index: usize },

    #[error("mask voxel at linear index {index} has non-binary value {value}")]
    NonBinaryValue { index: usize, value: f32 },

    #[error("value buffer holds {got} voxels, geometry requires {expected}")]
    ValueCountMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mask has no foreground voxels")]
    NoForeground,

    #[error("no eligible flap-center voxel above the exclusion plane")]
    EmptyCandidateSet,

    #[error("craniectomy sphere (center {center:?}, radius {radius_vox}) does not intersect the skull")]
    EmptyFlap {
        center: [usize; 3],
        radius_vox: f64,
    },

    #[error("virtual craniectomy failed after {} attempts", attempts.len())]
    SimulationFailed { attempts: Vec<CraniectomySpec> },

    #[error("resampling collapses axis {axis} to zero voxels")]
    DegenerateExtent { axis: usize },

    #[error("degenerate phantom: {0}")]
    DegeneratePhantom(String),

    #[error("operation requires an isotropic grid, got spacing {spacing:?}")]
    AnisotropicGrid { spacing: [f64; 3] },

    #[error("surface distance is undefined for an empty mask")]
    UndefinedDistance,

    #[error("PCA component count {k} out of range for {n} training samples")]
    KOutOfRange { k: usize, n: usize },

    #[error("model/method mismatch: expected {expected}, got {got}")]
    MethodMismatch { expected: String, got: String },

    #[error("external alignment tool failed (status {status}): {stderr}")]
    AdapterFailed { status: i32, stderr: String },

    #[error("network input axis {axis} has length {len}, not divisible by {divisor}")]
    NetInputShape {
        axis: usize,
        len: usize,
        divisor: usize,
    },

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    TrainingDiverged { epoch: usize },

    #[error("malformed model container: {0}")]
    BadContainer(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Nifti(#[from] nifti::NiftiError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[cfg(feature = "torch")]
    #[error(transparent)]
    Torch(#[from] tch::TchError),
}

pub type Result<T> = std::result::Result<T, Error>;
