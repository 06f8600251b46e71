use thiserror::Error;

/// Errors raised anywhere in the homogenization pipeline.
#[derive(Debug, Error)]
pub enum HomolabError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("field kind {0} is not a square (matrix or tensor4) coefficient")]
    NonSquareKind(String),

    #[error("coefficient is not elliptic: lower bound {mu_lower:.3e}")]
    NotElliptic { mu_lower: f64 },

    #[error("iterative solver did not converge: {iterations} iterations, relative residual {residual:.3e}")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("surface is not closed: gap {gap:.3e} between piece {piece} and its successor")]
    NonClosedSurface { piece: usize, gap: f64 },

    #[error("invalid surface: {0}")]
    InvalidSurface(String),

    #[error("degenerate lattice basis: {0}")]
    DegenerateLattice(String),

    #[error("non-resonance undecidable for piece {piece}: {reason}")]
    UndecidablePiece { piece: usize, reason: String },

    #[error("piece {0} is flat; curvature is only defined on strictly curved pieces")]
    FlatPiece(usize),

    #[error("node budget exceeded: {required} nodes required, budget {budget}")]
    NodeBudgetExceeded { required: usize, budget: usize },

    #[error("oscillation under-resolved: mesh size {h:.3e} exceeds eps/4 = {limit:.3e}")]
    UnderResolved { h: f64, limit: f64 },

    #[error("boundary layer unresolved: eps {eps:.3e} < 2h = {two_h:.3e}")]
    BoundaryLayerUnresolved { eps: f64, two_h: f64 },

    #[error("compatibility violated: boundary load sums to {residual:.3e}")]
    Compatibility { residual: f64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("at eps = {eps}, stage {stage}: {source}")]
    Stage {
        eps: f64,
        stage: &'static str,
        #[source]
        source: Box<HomolabError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl HomolabError {
    /// Wraps an error with the sweep point and pipeline stage it occurred at.
    pub fn at(self, eps: f64, stage: &'static str) -> Self {
        HomolabError::Stage { eps, stage, source: Box::new(self) }
    }

    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_configuration(&self) -> bool {
        match self {
            HomolabError::Config(_)
            | HomolabError::Io(_)
            | HomolabError::Read { .. }
            | HomolabError::Json(_)
            | HomolabError::Toml(_)
            | HomolabError::InvalidField(_)
            | HomolabError::InvalidSurface(_)
            | HomolabError::DimensionMismatch { .. }
            | HomolabError::NonSquareKind(_)
            | HomolabError::DegenerateLattice(_) => true,
            HomolabError::Stage { source, .. } => source.is_configuration(),
            _ => false,
        }
    }
}

/// Reads a whole file, naming it in the error.
pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| HomolabError::Read { path: path.to_path_buf(), source })
}

pub(crate) fn read_text(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| HomolabError::Read { path: path.to_path_buf(), source })
}

pub type Result<T> = std::result::Result<T, HomolabError>;
