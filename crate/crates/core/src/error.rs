use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A snapshot whose singular values are all below the absolute floor.
    #[error("matrix is numerically zero (all singular values < {floor:e})")]
    ZeroMatrix { floor: f64 },

    /// The overlap matrix between two subspaces is numerically singular,
    /// i.e. a principal angle sits at pi/2 where the log map is undefined.
    #[error("subspace overlap is numerically singular (cond {cond:.3e} > {limit:.3e})")]
    SingularOverlap { cond: f64, limit: f64 },

    /// Matrix dimensions disagree with the expected shape.
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    /// Two subspaces live in different ambient spaces.
    #[error("ambient dimension mismatch: {left} vs {right}")]
    AmbientMismatch { left: usize, right: usize },

    /// Karcher iteration hit the iteration budget before the gradient
    /// norm dropped below tolerance.
    #[error("Karcher mean did not converge: gradient {gradient_norm:e} after {iterations} iterations")]
    NoConvergence {
        iterations: usize,
        gradient_norm: f64,
    },

    /// A graph vertex with zero degree; the Laplacian is undefined.
    #[error("isolated vertex {index} (zero degree)")]
    IsolatedVertex { index: usize },

    /// k-means produced an empty cluster on every restart.
    #[error("empty cluster: {requested} clusters requested for data with fewer distinct points")]
    EmptyCluster { requested: usize },

    /// The cluster-count search reached n_max without meeting the
    /// error criterion. Carries the best labelling seen so far.
    #[error("cluster budget exhausted at n_c = {n_max} (best pass fraction {best_fraction:.3})")]
    BudgetExhausted {
        n_max: usize,
        best_fraction: f64,
        labels: Vec<usize>,
        diagnostics: Box<crate::clustering::ClusterDiagnostics>,
    },

    #[error("length scale must be positive, got {0}")]
    NonpositiveLengthScale(f64),

    /// Cholesky factorization failed even at the maximum permitted nugget.
    #[error("ill-conditioned GP system: {0}")]
    IllConditioned(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// Solution vector length does not factor into the requested shape.
    #[error("shape error: {0}")]
    ShapeError(String),

    /// ODE state left the finite range.
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    /// GP prediction produced a tangent vector unusable by the exp map.
    #[error("prediction produced non-finite tangent entries in cluster {cluster}")]
    SingularPrediction { cluster: usize },

    /// Precondition violations not covered by a dedicated variant.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

impl Error {
    /// Attach cluster context to errors propagated from per-cluster work.
    pub(crate) fn with_cluster(self, cluster: usize) -> Error {
        match self {
            Error::SingularPrediction { .. } => Error::SingularPrediction { cluster },
            Error::IllConditioned(msg) => {
                Error::IllConditioned(format!("cluster {cluster}: {msg}"))
            }
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
