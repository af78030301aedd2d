use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] memreason_core::Error),

    #[error("invalid oracle configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("credential variable {0} is not set")]
    MissingCredential(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("server answered {status}: {body}")]
    Status { status: u16, body: String },

    #[error("value table for {variant_id} is incomplete; missing masks {missing:?}")]
    PartialTable {
        variant_id: String,
        missing: Vec<u32>,
    },

    #[error("cache integrity error at key {key:?}: {reason}")]
    CacheIntegrity { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
