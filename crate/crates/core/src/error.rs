use thiserror::Error;

/// Errors produced by the solver, differentiation, and model layers.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("matrix is not Hermitian: max |M - M^H| = {deviation:.3e} exceeds {tol:.3e}")]
    NotHermitian { deviation: f64, tol: f64 },

    #[error("tangent slot {slot} out of range for {total} active parameters")]
    SlotOutOfRange { slot: usize, total: usize },

    #[error("mixed tangent dimensions: {left} vs {right}")]
    TangentMismatch { left: usize, right: usize },

    #[error("domain error in `{primitive}`: argument {argument}")]
    Domain { primitive: &'static str, argument: f64 },

    #[error("singular linear system in {context}: steady state is not unique")]
    NonUniqueSteadyState { context: &'static str },

    #[error("linear solve failed in {context}")]
    SingularMatrix { context: &'static str },

    #[error("step size underflow at t = {t:.6e} (h = {h:.3e}); system too stiff for the explicit integrator")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("divergence detected: {what} at t = {t:.6e}")]
    Divergence { what: &'static str, t: f64 },

    #[error("steady-state iteration stalled: residual {residual:.3e} stopped decreasing after {blocks} blocks (unprojected cotangent drives a zero-mode drift, or the dynamics has no unique fixed point)")]
    ResidualStalled { residual: f64, blocks: u64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("observable `{name}` undefined: {reason}")]
    UndefinedObservable { name: &'static str, reason: String },

    #[error("gradient contains non-finite entries")]
    NonFiniteGradient,

    #[error("evaluation failed while perturbing parameter {index}: {source}")]
    PerturbedEvaluation {
        index: usize,
        #[source]
        source: Box<CoreError>,
    },
}

pub type Result<T> = std::result::Result<T, CoreError>;
