use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (residual {residual:e})")]
    NotSkew { residual: f64 },

    #[error("matrix is not a rotation (orthogonality residual {ortho:e}, det {det})")]
    NotRotation { ortho: f64, det: f64 },

    #[error("quaternion norm {norm} is not unit")]
    NonUnitQuaternion { norm: f64 },

    #[error("degenerate 6D frame: cannot orthonormalize")]
    DegenerateFrame,

    #[error("heat kernel series did not converge within l_max = {l_max} (eps = {eps})")]
    Unconverged { eps: f64, l_max: usize },

    #[error("non-finite density at angle {omega} (eps = {eps})")]
    NonFiniteDensity { omega: f64, eps: f64 },

    #[error("non-positive density at angle {omega} (eps = {eps})")]
    NonPositiveDensity { omega: f64, eps: f64 },

    #[error("rotation angle {omega} is within the cut locus margin of the mean")]
    NearCutLocus { omega: f64 },

    #[error("vector field returned a non-finite value at t = {t}")]
    NonFiniteField { t: f64 },

    #[error("integrator increment of norm {norm} exceeds pi at t = {t}; reduce the step size")]
    StepTooLarge { norm: f64, t: f64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },

    #[error("need at least {needed} samples per side, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("unknown target `{name}`; valid targets: {valid}")]
    UnknownTarget { name: String, valid: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("retry budget exhausted: {0}")]
    RetriesExhausted(String),

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("unsupported file version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
