use thiserror::Error;

/// Errors across the operator/Hamiltonian/gadget stack.
#[derive(Debug, Error)]
pub enum GadgetError {
    #[error("matrix is not Hermitian: relative deviation {deviation:.3e}")]
    NonHermitian { deviation: f64 },

    #[error("dimension {dim} exceeds cap {cap} (override with GADGETLAB_DIM_CAP)")]
    DimensionCap { dim: usize, cap: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("site index {site} out of range for {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("site {site} has dimension {dim}, operation requires a qubit site")]
    NonQubitSite { site: usize, dim: usize },

    #[error("eigenvalue {eigenvalue} within {tol:.1e} of cut {cut}; move the cut")]
    AmbiguousCut {
        cut: f64,
        eigenvalue: f64,
        tol: f64,
    },

    #[error("rank mismatch in {context}: {left} vs {right}")]
    RankMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    #[error("direct rotation undefined: ||P - Q|| = {distance} is not < 1")]
    RotationUndefined { distance: f64 },

    #[error("operator is not a projector: residual {residual:.3e}")]
    NotAProjector { residual: f64 },

    #[error("block condition {name} violated: residual {residual:.3e}")]
    BlockCondition { name: &'static str, residual: f64 },

    #[error("map is not an isometry: ||V^dag V - I|| = {residual:.3e}")]
    NonIsometry { residual: f64 },

    #[error("operators do not commute: {context}")]
    NonCommuting { context: &'static str },

    #[error("invalid state: {reason}")]
    InvalidState { reason: String },

    #[error("invalid parameter: {reason}")]
    InvalidParameter { reason: String },

    #[error("hypothesis violated: {reason}")]
    HypothesisViolation { reason: String },

    #[error("schema violation: {reason}")]
    Schema { reason: String },

    #[error("check inapplicable: {reason}")]
    Inapplicable { reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GadgetError>;
