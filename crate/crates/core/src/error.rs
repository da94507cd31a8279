use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("degenerate oracle: {0}")]
    DegenerateOracle(String),

    #[error("oracle i/o error: {0}")]
    OracleIo(String),

    #[error("sampler starvation: {rejections} consecutive rejections while drawing {requested} rows (region too thin for the bandwidth)")]
    SamplerStarvation { requested: usize, rejections: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("incompatible tree: tree was built for schema {expected}, got {found}")]
    IncompatibleTree { expected: String, found: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("build failed at node {path}: {source}")]
    Build {
        path: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("encoding error: {0}")]
    Encoding(#[from] bincode::Error),
}

impl Error {
    /// Innermost error, looking through node-path wrappers.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::Build { source, .. } => source.root_cause(),
            other => other,
        }
    }
}
