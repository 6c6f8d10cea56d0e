use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate orbit: {0}")]
    DegenerateOrbit(String),

    #[error("unknown element '{0}'")]
    UnknownElement(String),

    #[error("configuration has {params} parameters but the generator set has {generators}")]
    ConfigMismatch { params: usize, generators: usize },

    #[error("nodes are not unisolvent for the element space (condition estimate {condition:.3e})")]
    NotUnisolvent { condition: f64 },

    #[error("no element data for {0}; supply a mass-rule data file")]
    MissingElementData(String),

    #[error("mass-rule weights are not all positive (min {min:.3e})")]
    NoPositiveSolution { min: f64 },

    #[error("mass-rule exactness system is inconsistent (residual {residual:.3e})")]
    SystemInconsistent { residual: f64 },

    #[error("element data rejected: {0}")]
    InvalidElementData(String),

    #[error("inverted or degenerate element (det {det:.3e})")]
    InvertedElement { det: f64 },

    #[error("non-conforming mesh: {0}")]
    NonConformingMesh(String),

    #[error("nonpositive density {0:.3e}")]
    NonpositiveDensity(f64),

    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("power-law fit needs at least {needed} resolved points, got {got}")]
    DegenerateFit { needed: usize, got: usize },

    #[error("iteration did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
