use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative probability {value} at index {index}")]
    NegativeProb { index: usize, value: f64 },
    #[error("distribution sums to {sum}, outside tolerance")]
    NotNormalized { sum: f64 },
    #[error("empty distribution")]
    EmptyDistribution,

    #[error("prefix of length {len} exceeds the context limit {limit}")]
    ContextOverflow { len: usize, limit: usize },
    #[error("remote generator unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("remote generator reported: {0}")]
    RemoteError(String),
    #[error("generator lacks capability `{0}`")]
    UnsupportedCapability(&'static str),
    #[error("layer {layer} outside [1, {num_layers}]")]
    LayerOutOfRange { layer: usize, num_layers: usize },
    #[error("expected a vector of length {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("no weight snapshot to restore")]
    NoSnapshot,
    #[error("snapshot belongs to a different model")]
    ForeignSnapshot,

    #[error("step matrix rows have different lengths ({expected} vs {actual})")]
    RaggedMatrix { expected: usize, actual: usize },
    #[error("step matrix has no rows")]
    EmptyMatrix,
    #[error("expected {expected} augmented inputs, got {actual}")]
    InputCountMismatch { expected: usize, actual: usize },

    #[error("paraphraser output violated the schema after {attempts} attempts: {last}")]
    ParaphraserSchemaViolation { attempts: usize, last: String },
    #[error("vocabulary cannot express an integer in [0, {max}]")]
    ConstraintUnsatisfiable { max: usize },

    #[error("image has zero width or height")]
    EmptyImage,

    #[error("selector bound {bound} exceeds 1")]
    Infeasible { bound: f64 },
    #[error("no crossover found up to T = {t_max}")]
    NotFound { t_max: usize },

    #[error("cannot sample {k} items from a dataset of {m}")]
    KExceedsM { k: usize, m: usize },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("dataset not found: {0}")]
    DatasetNotFound(String),
    #[error("model unavailable: {0}")]
    ModelUnavailable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
