use memreason_core::dataset::PromptVariant;
use memreason_core::lattice::ValueTable;
use memreason_oracle::{BackendKind, MaskingMode, Oracle};

use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Where value tables come from.
#[derive(Debug)]
pub enum TableSource {
    /// Planted models, one per variant; values are used as confidences directly.
    Scenario(Scenario),
    Oracle(Oracle),
}

impl TableSource {
    pub fn build(&self, variant: &PromptVariant, target: &str) -> Result<ValueTable> {
        match self {
            TableSource::Scenario(s) => {
                let model = s.model(&variant.variant_id)?;
                if model.n != variant.annotated_spans.len() {
                    return Err(Error::Usage(format!(
                        "scenario model for {} has {} variables, the variant has {} spans",
                        variant.variant_id,
                        model.n,
                        variant.annotated_spans.len()
                    )));
                }
                Ok(model.table(&variant.variant_id)?)
            }
            TableSource::Oracle(o) => Ok(o.build_value_table(variant, target)?),
        }
    }

    pub fn model_id(&self) -> &str {
        match self {
            TableSource::Scenario(_) => "synthetic",
            TableSource::Oracle(o) => o.model_id(),
        }
    }

    pub fn backend(&self) -> BackendKind {
        match self {
            TableSource::Scenario(_) => BackendKind::Synthetic,
            TableSource::Oracle(o) => o.kind(),
        }
    }

    pub fn masking(&self) -> MaskingMode {
        match self {
            TableSource::Scenario(_) => MaskingMode::Embedding,
            TableSource::Oracle(o) => o.config().masking,
        }
    }
}
