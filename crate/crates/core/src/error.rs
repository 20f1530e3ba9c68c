use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is singular")]
    Singular,

    #[error("|det| = {0} is not 1")]
    Normalization(f64),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("data word {index} out of range: {detail}")]
    OutOfRange { index: usize, detail: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("layer masks overlap at position ({row}, {col})")]
    MaskOverlap { row: usize, col: usize },

    #[error("lattice basis is rank deficient")]
    RankDeficient,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Singular => "singular",
            Error::Normalization(_) => "normalization",
            Error::Factorization(_) => "factorization",
            Error::Construction(_) => "construction",
            Error::OutOfRange { .. } => "out_of_range",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Schema(_) => "schema",
            Error::MaskOverlap { .. } => "mask_overlap",
            Error::RankDeficient => "rank_deficient",
            Error::Degenerate(_) => "degenerate",
            Error::Infeasible(_) => "infeasible",
            Error::Solver(_) => "solver",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
