//! Sparse AND-OR interaction extraction for black-box scalar scorers and the
//! decomposition of interaction effects into foundational memorization,
//! chaotic memorization and in-context reasoning.
//!
//! * [`lattice`]: masks, value tables and the exact subset transforms.
//! * [`sparsifier`]: learning the sparsest AND/OR split, salient sets and
//!   sparsity/matching diagnostics.
//! * [`effects`]: per-interaction decomposition, pattern classes and the
//!   order-wise strengths and ratios.
//! * [`dataset`]: prompt samples with aligned word annotations.

pub mod dataset;
pub mod effects;
pub mod error;
pub mod lattice;
mod linalg;
pub mod sparsifier;
mod splitting;

pub use error::{Error, Result};
pub use lattice::{Family, InteractionVector, Mask, ValueTable};
