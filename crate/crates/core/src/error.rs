use thiserror::Error;

/// Errors raised by the cut-off machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParameters(String),

    #[error("vector belongs to a different model")]
    ModelMismatch,

    #[error("cut-off space is empty")]
    EmptySpace,

    #[error("unknown operator term `{0}`")]
    UnresolvedTerm(String),

    #[error("family has no period")]
    Aperiodic,

    #[error("coefficient `{term}` is not {period}-periodic (defect {defect:.3e})")]
    NotPeriodic { term: String, period: f64, defect: f64 },

    #[error("band {band} is smaller than the coupling width {width} of term `{term}`")]
    BandTooSmall { term: String, width: usize, band: usize },

    #[error("matrix is not Hermitian (defect {0:.3e})")]
    NonHermitian(f64),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("dyadic refinement exceeded {max_slices} slices without reaching tolerance {tol:.1e} (last change {last_change:.3e})")]
    RefinementLimitExceeded { max_slices: usize, tol: f64, last_change: f64 },

    #[error("unitarity defect {0:.3e} exceeds the acceptance threshold")]
    NotUnitary(f64),

    #[error("initial vector support reaches eigenvalue {support:.3} but must stay below {limit:.3}")]
    SupportTooCloseToCutoff { support: f64, limit: f64 },

    #[error("oracle self-check failed: doubling the reference cut-off moved the result by {delta:.3e} (allowed {allowed:.3e})")]
    OracleSelfCheckFailed { delta: f64, allowed: f64 },

    #[error("quadrature did not converge to {tol:.1e} (last change {last_change:.3e})")]
    QuadratureNonConvergence { tol: f64, last_change: f64 },

    #[error("Floquet-Magnus order {0} is not supported (0, 1 or 2)")]
    UnsupportedOrder(usize),

    #[error("coefficient is not Hermitian before symmetrization (defect {defect:.3e}, allowed {allowed:.3e})")]
    CoefficientNotHermitian { defect: f64, allowed: f64 },

    #[error("eigenvalue growth unknown or sub-linear: tail bound cannot be reached")]
    TailBoundUnreachable,

    #[error("operator `{0}` has no declared entry bound")]
    UnboundedOperator(String),

    #[error("least-squares fit: {0}")]
    DegenerateFit(String),

    #[error("design matrix is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),

    #[error("zeta continuation not supported: {0}")]
    UnsupportedContinuation(String),

    #[error("index window too small: {0}")]
    InsufficientWindow(String),

    #[error("truncation bias {bias:.3e} exceeds {allowed:.3e}")]
    TruncationBias { bias: f64, allowed: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
