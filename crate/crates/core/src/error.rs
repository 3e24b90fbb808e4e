use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("goal ({col}, {row}) lies outside the {width}x{height} grid")]
    GoalOutsideGrid {
        col: usize,
        row: usize,
        width: usize,
        height: usize,
    },

    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("population member {member}: {source}")]
    Member {
        member: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("mixed experiment kinds: {0} and {1}")]
    MixedKinds(String, String),

    #[error("run failed for seeds {seeds:?}; partial artifacts in {dir}")]
    RunFailed { seeds: Vec<u64>, dir: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn member(member: usize, source: Error) -> Self {
        Error::Member {
            member,
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
