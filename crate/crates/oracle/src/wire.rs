//! JSON records exchanged with a scoring server.

use serde::{Deserialize, Serialize};

/// How a masked word is hidden from the model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskingMode {
    /// The server swaps the word's token embeddings for a baseline embedding.
    #[default]
    Embedding,
    /// The client rewrites the prompt with a placeholder word. Lower fidelity:
    /// the model sees a different token sequence, not a neutral embedding.
    TextPlaceholder,
}

impl MaskingMode {
    pub fn reduces_fidelity(self) -> bool {
        self == MaskingMode::TextPlaceholder
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub variant_id: String,
    pub prompt_text: String,
    /// Character ranges `[start, end)` of the annotated words.
    pub annotated_spans: Vec<[usize; 2]>,
    /// Annotated words to mask, by index into `annotated_spans`.
    pub masked_indices: Vec<usize>,
    pub target_token: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub probability: f64,
    pub model_id: String,
    pub token_matched: bool,
}

/// One slot of a `/score_batch` answer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchItem {
    Score(ScoreResponse),
    Error { index: usize, error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub model_id: String,
    #[serde(default)]
    pub baseline_mode: Option<String>,
}

pub const PLACEHOLDER: &str = "[MASK]";

/// Replaces the given spans of `text` by `placeholder`, returning the new text
/// and the shifted spans of every annotated word.
pub fn mask_text(
    text: &str,
    spans: &[(usize, usize)],
    masked: &[usize],
    placeholder: &str,
) -> (String, Vec<[usize; 2]>) {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut new_spans = Vec::with_capacity(spans.len());
    let mut cursor = 0;
    let mut len = 0;
    let placeholder_len = placeholder.chars().count();
    for (i, &(start, end)) in spans.iter().enumerate() {
        out.extend(&chars[cursor..start]);
        len += start - cursor;
        if masked.contains(&i) {
            out.push_str(placeholder);
            new_spans.push([len, len + placeholder_len]);
            len += placeholder_len;
        } else {
            out.extend(&chars[start..end]);
            new_spans.push([len, len + end - start]);
            len += end - start;
        }
        cursor = end;
    }
    out.extend(&chars[cursor..]);
    (out, new_spans)
}
