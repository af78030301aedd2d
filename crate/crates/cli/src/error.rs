use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] memreason_core::Error),

    #[error(transparent)]
    Oracle(#[from] memreason_oracle::Error),

    #[error("sample {sample_id}, variant {variant_id}: {source}")]
    Variant {
        sample_id: String,
        variant_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("missing artifact {}; run `extract` first", .0.display())]
    MissingArtifact(PathBuf),

    #[error("cannot read {}: {source}", path.display())]
    Artifact {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
