use thiserror::Error;

use crate::lattice::Family;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value {value} at mask {mask:#b}")]
    NonFinite { mask: u32, value: f64 },

    #[error("component table must vanish at the empty mask, found {0}")]
    NonzeroEmptyEntry(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("expected a {expected:?} interaction vector, got {found:?}")]
    WrongFamily { expected: Family, found: Family },

    #[error("optimization diverged at iteration {iteration}: loss = {loss}")]
    Diverged { iteration: usize, loss: f64 },

    #[error("effect ratios are undefined: total salient strength is zero")]
    UndefinedRatio,

    #[error("failed to parse {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{} sample(s) failed validation: {}", .0.len(), summarize(.0))]
    InvalidSamples(Vec<crate::dataset::ValidationReport>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn summarize(reports: &[crate::dataset::ValidationReport]) -> String {
    reports
        .iter()
        .map(|r| {
            let rules: Vec<String> = r.violations.iter().map(|v| v.to_string()).collect();
            format!("{} [{}]", r.sample_id, rules.join("; "))
        })
        .collect::<Vec<_>>()
        .join(", ")
}
