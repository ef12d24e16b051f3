use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (eigenvalues in [{min_eig:e}, {max_eig:e}])")]
    NotPositiveDefinite { min_eig: f64, max_eig: f64 },

    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),

    #[error("empty box: lower[{index}] = {lower} exceeds upper[{index}] = {upper}")]
    EmptyBox {
        index: usize,
        lower: f64,
        upper: f64,
    },

    #[error("box QP solver stopped after {iterations} iterations with KKT residual {residual:e}")]
    SolverStalled { iterations: usize, residual: f64 },

    #[error("state-space model is unstable (spectral radius {spectral_radius})")]
    Unstable { spectral_radius: f64 },

    #[error("lifted model is rank deficient: {0}")]
    RankDeficient(String),

    #[error("cost is not strictly convex (Hessian eigenvalues in [{min_eig:e}, {max_eig:e}])")]
    NotStrictlyConvex { min_eig: f64, max_eig: f64 },

    #[error("condition wγ < 1 violated: w = {w}, γ = {gamma}, wγ = {product}")]
    ContractionCondition { w: f64, gamma: f64, product: f64 },

    #[error("step size {alpha} outside admissible interval (0, {max_step})")]
    StepSize { alpha: f64, max_step: f64 },

    #[error(
        "no regularization found within {doublings} doublings (last ρ = {rho:e}, wγ = {product})"
    )]
    RegularizationSearch {
        doublings: usize,
        rho: f64,
        product: f64,
    },

    #[error("missing baseline for iteration {0}")]
    MissingBaseline(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("iteration {k}: {source}")]
    Iteration {
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_iteration(self, k: usize) -> Self {
        match self {
            e @ Error::Iteration { .. } => e,
            e => Error::Iteration {
                k,
                source: Box::new(e),
            },
        }
    }
}
