use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("bound state {level} has amplitude {amplitude:.3e} at the dot-window edge (tolerance {tolerance:.1e}); enlarge the window")]
    WindowTooSmall {
        level: usize,
        amplitude: f64,
        tolerance: f64,
    },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:.3e})")]
    EigenNonConvergence { iterations: usize, residual: f64 },

    #[error("operator needs {required_bytes} bytes, above the configured cap of {cap_bytes} bytes")]
    Resource { required_bytes: u64, cap_bytes: u64 },

    #[error("linear solver stopped at relative residual {residual:.3e} after {iterations} iterations")]
    LinearSolver { iterations: usize, residual: f64 },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("lead projection residual {residual:.3e} exceeds {tolerance:.1e}; raise num_evanescent or lengthen the leads")]
    InsufficientBasis { residual: f64, tolerance: f64 },

    #[error("cross-section fit residual {residual:.3e} exceeds {tolerance:.1e}; evanescent tail reaches the extraction planes")]
    ContaminatedLead { residual: f64, tolerance: f64 },

    #[error("kept-side probability {kept:.3e} is too small to post-select on")]
    UndefinedPostSelection { kept: f64 },

    #[error("reduced density matrix trace {trace:.12} deviates from one before normalization")]
    UpstreamUnitarity { trace: f64 },

    #[error("density matrix eigenvalue {value:.3e} is negative beyond tolerance")]
    NumericalConsistency { value: f64 },

    #[error("dimension {dim} exceeds the dense cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("scattering problem invalid: {0}")]
    Problem(String),
}

impl Error {
    /// Short stable identifier, used in output rows.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::Geometry(_) => "geometry",
            Error::WindowTooSmall { .. } => "window_too_small",
            Error::EigenNonConvergence { .. } => "eigen_nonconvergence",
            Error::Resource { .. } => "resource",
            Error::LinearSolver { .. } => "linear_solver",
            Error::Factorization(_) => "factorization",
            Error::InsufficientBasis { .. } => "insufficient_basis",
            Error::ContaminatedLead { .. } => "contaminated_lead",
            Error::UndefinedPostSelection { .. } => "undefined_post_selection",
            Error::UpstreamUnitarity { .. } => "upstream_unitarity",
            Error::NumericalConsistency { .. } => "numerical_consistency",
            Error::DimensionCap { .. } => "dimension_cap",
            Error::Problem(_) => "problem",
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
