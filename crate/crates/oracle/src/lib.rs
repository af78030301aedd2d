//! Value-table backends for interaction extraction.
//!
//! A table holds the model's log-odds confidence in the target word for every
//! subset of kept annotated words. Tables come from a planted synthetic model,
//! from a cache of earlier scores, or from a scoring server.

pub mod cache;
pub mod confidence;
pub mod config;
pub mod error;
pub mod remote;
pub mod synthetic;
pub mod table;
pub mod wire;

pub use cache::{cache_key, ProbabilityCache};
pub use confidence::{confidence_from_prob, DEFAULT_P_CLAMP};
pub use config::{BackendKind, OracleConfig, RetryPolicy};
pub use error::{Error, Result};
pub use remote::RemoteClient;
pub use synthetic::{synthetic_eval, SyntheticModel};
pub use table::{average_value_tables, build_value_table, Oracle};
pub use wire::{MaskingMode, ScoreRequest, ScoreResponse};
