//! Command implementations behind the `memreason` binary.

pub mod error;
pub mod layout;
pub mod pipeline;
pub mod report;
pub mod scenario;
pub mod source;

pub use error::{Error, Result};
