//! Persisted run artifacts and reports.

use std::collections::BTreeMap;
use std::fmt::Write;

use memreason_core::effects::{
    EffectRatios, EffectRecord, OrderStrengths, ReasoningOrderStrengths,
};
use memreason_core::sparsifier::{SmoothnessReport, SparsifyConfig, SparsityReport, TauPolicy};
use memreason_oracle::{BackendKind, MaskingMode};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableRole {
    Full,
    QuestionOnly,
    EquivalentMember,
    EquivalenceMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub variant_id: String,
    pub stem: String,
    pub role: TableRole,
    pub final_loss: f64,
    pub iterations: usize,
    pub refined: bool,
}

/// Written by `extract`; everything later commands need to find the artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub sample_id: String,
    pub model_id: String,
    pub target: String,
    pub n: usize,
    pub backend: BackendKind,
    pub masking: MaskingMode,
    /// Set when words were hidden by rewriting the prompt text.
    pub reduced_fidelity: bool,
    pub sparsify: SparsifyConfig,
    pub tables: Vec<TableEntry>,
    /// Variant ids averaged into the equivalence-set table, original first.
    pub equivalence_members: Vec<String>,
}

impl RunManifest {
    pub fn stem_of(&self, role: TableRole) -> Option<&str> {
        self.tables
            .iter()
            .find(|t| t.role == role)
            .map(|t| t.stem.as_str())
    }
}

/// Learned split of one table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitDocument {
    pub variant_id: String,
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauSummary {
    pub policy: TauPolicy,
    pub and: f64,
    pub or: f64,
    /// Question-only salient interactions were added to the full prompt's.
    pub with_question: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingSummary {
    pub k: usize,
    pub mean_error: f64,
    pub max_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub sample_id: String,
    pub model_id: String,
    pub reduced_fidelity: bool,
    pub tau: TauSummary,
    pub salient_and: usize,
    pub salient_or: usize,
    /// Salient masks per reasoning class.
    pub class_counts: BTreeMap<String, usize>,
    /// `None` when no salient strength exists to divide by.
    pub ratios: Option<EffectRatios>,
    pub order_strengths: OrderStrengths,
    pub reasoning_strengths: ReasoningOrderStrengths,
    pub matching_error: Vec<MatchingSummary>,
    pub additivity_residual: f64,
    pub passed: bool,
    pub failures: Vec<String>,
    pub records: Vec<EffectRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Informational checks do not affect the exit status.
    pub asserted: bool,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub sample_id: String,
    pub model_id: String,
    pub checks: Vec<Check>,
    pub matching_error: Vec<MatchingSummary>,
    pub passed: bool,
}

impl VerificationSummary {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsitySweep {
    pub family: String,
    pub seed: u64,
    pub tau: TauPolicy,
    pub reports: Vec<SparsityReport>,
    pub smoothness: Vec<SmoothnessReport>,
    pub top20_share: Vec<f64>,
    pub kappa: Option<f64>,
    pub passed: bool,
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

/// Plain-text summary of a report.
pub fn render(report: &AnalysisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "sample {}  model {}", report.sample_id, report.model_id);
    if report.reduced_fidelity {
        let _ = writeln!(s, "masking: text placeholder (reduced fidelity)");
    }
    let _ = writeln!(
        s,
        "tau: AND {:.4}  OR {:.4}   salient: {} AND, {} OR",
        report.tau.and, report.tau.or, report.salient_and, report.salient_or
    );
    match &report.ratios {
        Some(r) => {
            let _ = writeln!(
                s,
                "reasoning ratio {}  chaotic memorization ratio {}",
                pct(r.rho_r),
                pct(r.rho_c)
            );
        }
        None => {
            let _ = writeln!(s, "ratios undefined: no salient strength");
        }
    }
    for (class, count) in &report.class_counts {
        let _ = writeln!(s, "  {class}: {count}");
    }
    let _ = writeln!(s, "order  foundational(+/-)  chaotic(+/-)  reasoning(+/-)");
    let o = &report.order_strengths;
    for m in 0..o.foundational.len() {
        let (f, c, k) = (o.foundational[m], o.chaotic[m], o.reasoning[m]);
        if f.total() + c.total() + k.total() == 0.0 {
            continue;
        }
        let _ = writeln!(
            s,
            "{m:>5}  {:>8.4}/{:<8.4}  {:>6.4}/{:<6.4}  {:>7.4}/{:<7.4}",
            f.pos, f.neg, c.pos, c.neg, k.pos, k.neg
        );
    }
    for m in &report.matching_error {
        let _ = writeln!(
            s,
            "matching error k={:<5} mean {:.3e}  max {:.3e}",
            m.k, m.mean_error, m.max_error
        );
    }
    let _ = writeln!(s, "additivity residual {:.3e}", report.additivity_residual);
    let _ = writeln!(s, "{}", if report.passed { "PASSED" } else { "FAILED" });
    for f in &report.failures {
        let _ = writeln!(s, "  {f}");
    }
    s
}
