//! Question-answer samples with aligned word annotations.
//!
//! A dataset file is a single JSON document:
//!
//! ```json
//! {"samples": [{"sample_id": "...", "target": "teacher", "n": 10,
//!   "variants": [{"variant_id": "original", "type": "original",
//!                 "text": "...", "spans": [[0, 5], ...]}]}]}
//! ```
//!
//! Spans are half-open character ranges (Unicode scalar values, not bytes).
//! The `i`-th span of every variant is lattice bit `i`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::MAX_VARIABLES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquivalenceType {
    Original,
    Background,
    Paraphrase,
    Renaming,
    QuestionOnly,
}

impl EquivalenceType {
    pub const FAMILIES: [EquivalenceType; 3] = [
        EquivalenceType::Background,
        EquivalenceType::Paraphrase,
        EquivalenceType::Renaming,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EquivalenceType::Original => "original",
            EquivalenceType::Background => "background",
            EquivalenceType::Paraphrase => "paraphrase",
            EquivalenceType::Renaming => "renaming",
            EquivalenceType::QuestionOnly => "question_only",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptVariant {
    pub variant_id: String,
    pub text: String,
    /// Half-open character ranges in reading order.
    pub annotated_spans: Vec<(usize, usize)>,
    pub includes_premise: bool,
    pub equivalence_type: EquivalenceType,
}

impl PromptVariant {
    pub fn new(
        variant_id: impl Into<String>,
        equivalence_type: EquivalenceType,
        text: impl Into<String>,
        annotated_spans: Vec<(usize, usize)>,
    ) -> Self {
        Self {
            variant_id: variant_id.into(),
            text: text.into(),
            annotated_spans,
            includes_premise: equivalence_type != EquivalenceType::QuestionOnly,
            equivalence_type,
        }
    }

    /// Surface strings of the annotated words, or `None` if a span is out of range.
    pub fn annotated_words(&self) -> Option<Vec<String>> {
        let chars: Vec<char> = self.text.chars().collect();
        self.annotated_spans
            .iter()
            .map(|&(s, e)| (s < e && e <= chars.len()).then(|| chars[s..e].iter().collect()))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleSpec {
    pub sample_id: String,
    pub original: PromptVariant,
    pub question_only: PromptVariant,
    pub equivalents: Vec<PromptVariant>,
    pub target_token: String,
    pub n: usize,
}

impl SampleSpec {
    pub fn variants(&self) -> impl Iterator<Item = &PromptVariant> {
        std::iter::once(&self.original)
            .chain(std::iter::once(&self.question_only))
            .chain(self.equivalents.iter())
    }

    /// Members of 𝕏: the original followed by its equivalents.
    pub fn equivalence_set(&self) -> Vec<&PromptVariant> {
        std::iter::once(&self.original)
            .chain(self.equivalents.iter())
            .collect()
    }

    pub fn variant(&self, variant_id: &str) -> Option<&PromptVariant> {
        self.variants().find(|v| v.variant_id == variant_id)
    }

    fn to_raw(&self) -> RawSample {
        RawSample {
            sample_id: self.sample_id.clone(),
            target: self.target_token.clone(),
            n: self.n,
            variants: self
                .variants()
                .map(|v| RawVariant {
                    variant_id: v.variant_id.clone(),
                    kind: v.equivalence_type,
                    text: v.text.clone(),
                    spans: v.annotated_spans.iter().map(|&(s, e)| [s, e]).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct DatasetFile {
    samples: Vec<RawSample>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawSample {
    sample_id: String,
    target: String,
    n: usize,
    variants: Vec<RawVariant>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawVariant {
    variant_id: String,
    #[serde(rename = "type")]
    kind: EquivalenceType,
    text: String,
    spans: Vec<[usize; 2]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    VariantStructure,
    VariableCount,
    TargetNonEmpty,
    AnnotationCount,
    SpanBounds,
    SpansOverlap,
    SpanOrder,
    WholeWord,
    IncludesPremise,
    QuestionPortion,
    QuestionSubsequence,
    WordRole,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::VariantStructure => "variant-structure",
            Rule::VariableCount => "variable-count",
            Rule::TargetNonEmpty => "target-non-empty",
            Rule::AnnotationCount => "annotation-count",
            Rule::SpanBounds => "span-bounds",
            Rule::SpansOverlap => "spans-overlap",
            Rule::SpanOrder => "span-order",
            Rule::WholeWord => "whole-word",
            Rule::IncludesPremise => "includes-premise",
            Rule::QuestionPortion => "question-portion",
            Rule::QuestionSubsequence => "question-subsequence",
            Rule::WordRole => "word-role",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule.as_str(), self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub sample_id: String,
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn violation(&mut self, rule: Rule, message: impl Into<String>) {
        self.violations.push(Violation {
            rule,
            message: message.into(),
        });
    }
}

/// Words a curator would normally leave unannotated.
const FUNCTION_WORDS: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "at", "to", "for", "with", "by", "from", "as", "into",
    "about", "and", "or", "but", "nor", "so", "yet",
];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '-' || c == '_'
}

/// Checks every sample invariant; never fails, only reports.
pub fn validate_sample(sample: &SampleSpec) -> ValidationReport {
    let mut report = ValidationReport {
        sample_id: sample.sample_id.clone(),
        ..Default::default()
    };
    if sample.n == 0 || sample.n > MAX_VARIABLES {
        report.violation(
            Rule::VariableCount,
            format!("n = {} outside 1..={MAX_VARIABLES}", sample.n),
        );
    }
    if sample.target_token.trim().is_empty() {
        report.violation(Rule::TargetNonEmpty, "target token is empty");
    }
    if sample.original.equivalence_type != EquivalenceType::Original {
        report.violation(
            Rule::VariantStructure,
            "original variant has the wrong type",
        );
    }
    if sample.question_only.equivalence_type != EquivalenceType::QuestionOnly {
        report.violation(
            Rule::VariantStructure,
            "question-only variant has the wrong type",
        );
    }
    let mut ids = BTreeSet::new();
    for v in sample.variants() {
        if !ids.insert(v.variant_id.as_str()) {
            report.violation(
                Rule::VariantStructure,
                format!("duplicate variant_id {:?}", v.variant_id),
            );
        }
        if matches!(
            v.equivalence_type,
            EquivalenceType::Original | EquivalenceType::QuestionOnly
        ) && !std::ptr::eq(v, &sample.original)
            && !std::ptr::eq(v, &sample.question_only)
        {
            report.violation(
                Rule::VariantStructure,
                format!(
                    "variant {:?} of type {} listed among the equivalents",
                    v.variant_id,
                    v.equivalence_type.as_str()
                ),
            );
        }
        check_spans(v, sample.n, &mut report);
    }

    if sample.question_only.includes_premise {
        report.violation(
            Rule::IncludesPremise,
            "question-only variant is flagged as including the premise",
        );
    }
    for v in sample.variants() {
        if v.equivalence_type != EquivalenceType::QuestionOnly && !v.includes_premise {
            report.violation(
                Rule::IncludesPremise,
                format!("variant {:?} is flagged as premise-free", v.variant_id),
            );
        }
    }
    check_question_only(sample, &mut report);
    check_word_roles(sample, &mut report);

    for family in EquivalenceType::FAMILIES {
        if !sample
            .equivalents
            .iter()
            .any(|v| v.equivalence_type == family)
        {
            report.warnings.push(format!(
                "no {} variant among the logically equivalent prompts",
                family.as_str()
            ));
        }
    }
    stopword_warnings(sample, &mut report);
    report
}

fn check_spans(v: &PromptVariant, n: usize, report: &mut ValidationReport) {
    let id = &v.variant_id;
    if v.annotated_spans.len() != n {
        report.violation(
            Rule::AnnotationCount,
            format!(
                "variant {id:?} has {} annotated spans, expected n = {n}",
                v.annotated_spans.len()
            ),
        );
    }
    let chars: Vec<char> = v.text.chars().collect();
    for (i, &(s, e)) in v.annotated_spans.iter().enumerate() {
        if s >= e || e > chars.len() {
            report.violation(
                Rule::SpanBounds,
                format!(
                    "variant {id:?} span {i} [{s},{e}) is empty or exceeds the text length {}",
                    chars.len()
                ),
            );
            continue;
        }
        let inner = &chars[s..e];
        let boundary_ok = (s == 0 || !is_word_char(chars[s - 1]))
            && (e == chars.len() || !is_word_char(chars[e]));
        if !boundary_ok
            || inner.iter().any(|c| c.is_whitespace())
            || !inner.iter().any(|c| c.is_alphanumeric())
        {
            report.violation(
                Rule::WholeWord,
                format!(
                    "variant {id:?} span {i} {:?} does not cover a whole word",
                    inner.iter().collect::<String>()
                ),
            );
        }
    }
    for i in 0..v.annotated_spans.len().saturating_sub(1) {
        let (s0, e0) = v.annotated_spans[i];
        let (s1, e1) = v.annotated_spans[i + 1];
        if s1 < e0 && s0 < e1 {
            report.violation(
                Rule::SpansOverlap,
                format!("variant {id:?}: spans overlap at indices ({i},{})", i + 1),
            );
        } else if s1 < s0 {
            report.violation(
                Rule::SpanOrder,
                format!(
                    "variant {id:?}: spans {i} and {} are out of reading order",
                    i + 1
                ),
            );
        }
    }
}

/// Character offset at which the question-only text starts inside the
/// original, if it occurs there.
fn question_offset(sample: &SampleSpec) -> Option<usize> {
    let original = &sample.original.text;
    let question = sample.question_only.text.trim();
    if question.is_empty() {
        return None;
    }
    original
        .rfind(question)
        .map(|byte| original[..byte].chars().count())
}

fn check_question_only(sample: &SampleSpec, report: &mut ValidationReport) {
    match question_offset(sample) {
        None => report.violation(
            Rule::QuestionPortion,
            "question-only text does not occur in the original prompt",
        ),
        Some(offset) => {
            let premise: String = sample.original.text.chars().take(offset).collect();
            if premise.trim().is_empty() {
                report.violation(
                    Rule::IncludesPremise,
                    "question-only text covers the whole original prompt, premise included",
                );
                return;
            }
            // annotated question words must be a subsequence of the question
            // portion's words
            let portion: String = sample.original.text.chars().skip(offset).collect();
            let portion_words: Vec<&str> = portion
                .split(|c: char| !is_word_char(c))
                .filter(|w| !w.is_empty())
                .collect();
            if let Some(words) = sample.question_only.annotated_words() {
                let mut it = portion_words.iter();
                let ok = words.iter().all(|w| it.any(|p| p == w));
                if !ok {
                    report.violation(
                        Rule::QuestionSubsequence,
                        "question-only annotations are not a subsequence of the original's question",
                    );
                }
            }
        }
    }
}

fn check_word_roles(sample: &SampleSpec, report: &mut ValidationReport) {
    let Some(reference) = sample.original.annotated_words() else {
        return;
    };
    for v in sample.variants().skip(1) {
        let Some(words) = v.annotated_words() else {
            continue;
        };
        if words.len() != reference.len() {
            continue;
        }
        if v.equivalence_type == EquivalenceType::Renaming {
            let mut mapping: BTreeMap<&str, &str> = BTreeMap::new();
            let mut inverse: BTreeMap<&str, &str> = BTreeMap::new();
            for (i, (a, b)) in reference.iter().zip(&words).enumerate() {
                match mapping.insert(a.as_str(), b.as_str()) {
                    Some(prev) if prev != b => report.violation(
                        Rule::WordRole,
                        format!(
                            "variant {:?} renames {a:?} inconsistently ({prev:?} and {b:?} at index {i})",
                            v.variant_id
                        ),
                    ),
                    _ => {}
                }
                // two distinct words may not collapse onto one name
                match inverse.insert(b.as_str(), a.as_str()) {
                    Some(prev) if prev != a => report.violation(
                        Rule::WordRole,
                        format!(
                            "variant {:?} maps both {prev:?} and {a:?} to {b:?} (index {i})",
                            v.variant_id
                        ),
                    ),
                    _ => {}
                }
            }
        } else {
            for (i, (a, b)) in reference.iter().zip(&words).enumerate() {
                if a != b {
                    report.violation(
                        Rule::WordRole,
                        format!(
                            "variant {:?} annotates {b:?} at index {i}, original has {a:?}",
                            v.variant_id
                        ),
                    );
                }
            }
        }
    }
}

fn stopword_warnings(sample: &SampleSpec, report: &mut ValidationReport) {
    // only meaningful when the curator had more words to choose from than n
    let question_words = sample
        .question_only
        .text
        .split(|c: char| !is_word_char(c))
        .filter(|w| !w.is_empty())
        .count();
    if question_words <= sample.n {
        return;
    }
    if let Some(words) = sample.original.annotated_words() {
        for (i, w) in words.iter().enumerate() {
            if FUNCTION_WORDS.contains(&w.to_lowercase().as_str()) {
                report.warnings.push(format!(
                    "annotation {i} {w:?} is an article, preposition or conjunction"
                ));
            }
        }
    }
}

fn from_raw(raw: RawSample) -> std::result::Result<SampleSpec, ValidationReport> {
    let mut report = ValidationReport {
        sample_id: raw.sample_id.clone(),
        ..Default::default()
    };
    let mut original = None;
    let mut question_only = None;
    let mut equivalents = Vec::new();
    for rv in raw.variants {
        let v = PromptVariant::new(
            rv.variant_id,
            rv.kind,
            rv.text,
            rv.spans.into_iter().map(|[s, e]| (s, e)).collect(),
        );
        match v.equivalence_type {
            EquivalenceType::Original if original.is_none() => original = Some(v),
            EquivalenceType::QuestionOnly if question_only.is_none() => question_only = Some(v),
            EquivalenceType::Original | EquivalenceType::QuestionOnly => report.violation(
                Rule::VariantStructure,
                format!(
                    "more than one {} variant ({:?})",
                    v.equivalence_type.as_str(),
                    v.variant_id
                ),
            ),
            _ => equivalents.push(v),
        }
    }
    if original.is_none() {
        report.violation(Rule::VariantStructure, "no original variant");
    }
    if question_only.is_none() {
        report.violation(Rule::VariantStructure, "no question_only variant");
    }
    if !report.is_valid() {
        return Err(report);
    }
    Ok(SampleSpec {
        sample_id: raw.sample_id,
        original: original.unwrap(),
        question_only: question_only.unwrap(),
        equivalents,
        target_token: raw.target,
        n: raw.n,
    })
}

/// Outcome of a lenient load: valid samples plus one report per rejected sample.
#[derive(Clone, Debug, Default)]
pub struct DatasetLoad {
    pub samples: Vec<SampleSpec>,
    pub rejected: Vec<ValidationReport>,
    /// Reports (warnings only) of the accepted samples.
    pub accepted_reports: Vec<ValidationReport>,
}

/// Parses a dataset document; each sample is accepted or rejected as a whole.
pub fn parse_dataset_lenient(json: &str, origin: &str) -> Result<DatasetLoad> {
    let file: DatasetFile = serde_json::from_str(json).map_err(|source| Error::Parse {
        path: origin.to_string(),
        source,
    })?;
    let mut out = DatasetLoad::default();
    for raw in file.samples {
        match from_raw(raw) {
            Err(report) => out.rejected.push(report),
            Ok(sample) => {
                let report = validate_sample(&sample);
                if report.is_valid() {
                    out.samples.push(sample);
                    out.accepted_reports.push(report);
                } else {
                    out.rejected.push(report);
                }
            }
        }
    }
    Ok(out)
}

/// Strict parse: any rejected sample fails the whole load.
pub fn parse_dataset(json: &str, origin: &str) -> Result<Vec<SampleSpec>> {
    let load = parse_dataset_lenient(json, origin)?;
    if !load.rejected.is_empty() {
        return Err(Error::InvalidSamples(load.rejected));
    }
    Ok(load.samples)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<SampleSpec>> {
    let path = path.as_ref();
    let json = std::fs::read_to_string(path)?;
    parse_dataset(&json, &path.display().to_string())
}

pub fn load_dataset_lenient(path: impl AsRef<Path>) -> Result<DatasetLoad> {
    let path = path.as_ref();
    let json = std::fs::read_to_string(path)?;
    parse_dataset_lenient(&json, &path.display().to_string())
}

pub fn dataset_to_json(samples: &[SampleSpec]) -> String {
    let file = DatasetFile {
        samples: samples.iter().map(SampleSpec::to_raw).collect(),
    };
    serde_json::to_string_pretty(&file).expect("dataset serialization is infallible")
}

const BUNDLED: &str = include_str!("../data/caren_teacher.json");

/// The worked Caren/Emily teacher sample with its logically equivalent prompts.
pub fn bundled_dataset() -> Vec<SampleSpec> {
    parse_dataset(BUNDLED, "bundled caren_teacher.json").expect("bundled dataset is valid")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanRole {
    Full,
    QuestionOnly,
    EquivalentMember,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlannedTable<'a> {
    pub variant: &'a PromptVariant,
    pub role: PlanRole,
}

/// Value tables to build for one sample, in a fixed order: the original, the
/// question-only prompt, then every equivalent. The original doubles as a
/// member of 𝕏.
pub fn analysis_plan(sample: &SampleSpec) -> Vec<PlannedTable<'_>> {
    let mut plan = vec![
        PlannedTable {
            variant: &sample.original,
            role: PlanRole::Full,
        },
        PlannedTable {
            variant: &sample.question_only,
            role: PlanRole::QuestionOnly,
        },
    ];
    plan.extend(sample.equivalents.iter().map(|v| PlannedTable {
        variant: v,
        role: PlanRole::EquivalentMember,
    }));
    plan
}
