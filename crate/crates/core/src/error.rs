use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Variants map onto CLI exit codes in the binary.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Config text is not valid JSON or does not match the documented schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// Config parsed but violates a model invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Square-root branch point: z coincides with a channel threshold.
    #[error("branch point: z = {z} sits on threshold {threshold}")]
    BranchPoint { z: Complex64, threshold: f64 },

    /// Kernel evaluated at a pole of its closed form.
    #[error("analyticity violation: {0}")]
    AnalyticityViolation(String),

    #[error("potential kind {kind} does not support partial wave {l}")]
    UnsupportedPartialWave { kind: &'static str, l: u32 },

    /// Plain kernel assembly requested exactly on the scattering cut.
    #[error("z = {z} lies on the cut; offset into the complex plane or use a rim evaluation")]
    OnCut { z: Complex64 },

    #[error("singular kernel: {0}")]
    SingularKernel(String),

    #[error("linear solve failed: condition indicator {cond:.3e} exceeds limit {limit:.3e}")]
    LinearSolveFailure { cond: f64, limit: f64 },

    #[error("truncated scattering matrix is numerically singular (sigma_min = {sigma_min:.3e})")]
    TruncatedSMatrixSingular { sigma_min: f64 },

    #[error("invalid search region: {0}")]
    InvalidRegion(String),

    #[error("contour too close to a zero: {0}")]
    ContourTooClose(String),

    #[error("winding number did not converge to an integer (got {winding:.6})")]
    NonIntegerWinding { winding: f64 },

    #[error("root refinement did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    /// Two singular values collapsed at a determinant zero; both candidate
    /// null vectors are carried along for inspection.
    #[error("degenerate null space at z = {z} ({} candidate vectors)", vectors.len())]
    DegenerateNull {
        z: Complex64,
        vectors: Vec<Vec<Complex64>>,
    },
}
