use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid hyperparameters: sigma2={sigma2}, lengthscale={lengthscale}")]
    InvalidHyperParams { sigma2: f64, lengthscale: f64 },

    #[error("unsupported Matérn smoothness: {0}")]
    UnsupportedSmoothness(String),

    #[error("point lies outside the domain (norm {norm}, radius {radius})")]
    OutOfDomain { norm: f64, radius: f64 },

    #[error("point within {distance:e} of stored point {index} (threshold {threshold:e})")]
    DuplicatePoint {
        index: usize,
        distance: f64,
        threshold: f64,
    },

    #[error(
        "ill-conditioned {size}x{size} matrix: factorization failed at relative jitter {jitter:e} \
         (pivot {pivot} reached {diag:e})"
    )]
    IllConditioned {
        size: usize,
        jitter: f64,
        pivot: usize,
        diag: f64,
    },

    #[error("empty history")]
    EmptyHistory,

    #[error("every candidate duplicates a stored observation")]
    ExhaustedCandidates,

    #[error("invalid hyperparameter box: {0}")]
    InvalidBox(String),

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_round(self, round: usize) -> Self {
        match self {
            e @ Error::Round { .. } => e,
            e => Error::Round {
                round,
                source: Box::new(e),
            },
        }
    }
}
