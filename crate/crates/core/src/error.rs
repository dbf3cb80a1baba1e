use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not Hermitian (max defect {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("trace {trace} differs from 1")]
    TraceMismatch { trace: f64 },

    #[error("coupling table is not symmetric with zero diagonal at ({a}, {b})")]
    AsymmetricCoupling { a: usize, b: usize },

    #[error("site index {site} out of range for {n_sites} sites")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("exchange requires two distinct sites, got {0} twice")]
    EqualSites(usize),

    #[error("invalid group: {0}")]
    InvalidGroup(String),

    #[error("degenerate seed: sum of dissipators vanishes on the seed state")]
    DegenerateSeed,

    #[error("lifetime must be positive and finite, got {0}")]
    InvalidTau(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("truncation order must be even and >= 2, got {0}")]
    InvalidOrder(usize),

    #[error("power {0} has no closed form; compose power-1 maps instead")]
    UnsupportedPower(usize),

    #[error("plan does not match exchange model: {0}")]
    PlanMismatch(String),

    #[error("divergence at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("coarse step {coarse:e} is not an integer multiple of fine step {fine:e}")]
    NonCommensurate { coarse: f64, fine: f64 },

    #[error("trajectories are not aligned: {0}")]
    Misaligned(String),
}
