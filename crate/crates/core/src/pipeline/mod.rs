//! The augmentation pipeline: prefix preparation, candidate generation,
//! marker stripping, end-to-end runs, and the EDA comparison baseline.
//!
//! Safety of the generated labels rests on three steps working together:
//! each class's instances are wrapped in start/end markers with a unique
//! per-instance numbering (so sampling can be steered to a class and
//! instance), the model is finetuned per class on exactly those marked
//! strings, and the filtered output keeps only candidates near the class
//! embedding centroid (see [`crate::filter`]).

mod eda;
mod generate;
mod run;

pub use eda::{eda_baseline, EdaConfig, SynonymProvider};
pub use generate::{
    generate_candidates, generate_one, Candidate, DroppedSample, GeneratedBatch, GenerationPlan,
    SampleOutcome,
};
pub use run::{run_augmentation, AugmentationOutcome, AugmentationRequest, ClassOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::corpus::{CorpusError, LabeledInstance};
use crate::filter::FilterError;

/// Marks the start of every training string.
pub const START_MARKER: &str = "<|startoftext|>";
/// Marks the end of every training string; doubles as the sampling stop token.
pub const END_MARKER: &str = "<|endoftext|>";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("class slice is empty")]
    EmptyClass,
    #[error("mixed labels in class slice: expected {expected:?}, found {found:?}")]
    MixedLabels { expected: String, found: String },
    #[error("instance {id} needs a non-empty title for title-context preparation")]
    MissingTitle { id: u64 },
    #[error("unknown class label {0:?}")]
    UnknownClass(String),
    #[error("invalid argument: {0}")]
    InvalidArg(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Where a context-dependent prefix comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextSource {
    /// The instance's title.
    Title,
    /// The first `k` whitespace tokens of the text.
    FirstWords,
}

/// How training strings are marked and which prefix steers sampling.
///
/// - `ContextIndependent`: text becomes
///   `<|startoftext|> |i| {text} <|endoftext|>` with `i` the instance's rank
///   within the class; sampling starts from `<|startoftext|> |i|`. The
///   numbering makes every string's start unique, which is what lets the
///   reference model memorize exactly and lets sampling address one source
///   instance at a time.
/// - `ContextDependent`: text becomes `<|startoftext|> {content} <|endoftext|>`
///   and sampling starts from `<|startoftext|> {context}`, where context is
///   the title or the first `k` words. With a title that the text does not
///   already start with, content is `{title} {text}` so that the prefix is
///   always a literal string prefix of the marked text.
/// - `Plain`: no per-instance context at all; every sample starts from the
///   bare start marker. Ablation mode: label steering is off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum PrefixScheme {
    ContextIndependent,
    ContextDependent { source: ContextSource, k: usize },
    Plain,
}

impl PrefixScheme {
    /// Title-context shorthand.
    pub fn title() -> Self {
        PrefixScheme::ContextDependent {
            source: ContextSource::Title,
            k: 0,
        }
    }

    /// First-k-words shorthand.
    pub fn first_words(k: usize) -> Self {
        PrefixScheme::ContextDependent {
            source: ContextSource::FirstWords,
            k,
        }
    }
}

/// A class instance ready for finetuning and sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedInstance {
    pub source_id: u64,
    pub class_label: String,
    /// Marker-wrapped training string.
    pub marked_text: String,
    /// Literal string prefix of `marked_text` that sampling starts from.
    pub generation_prefix: String,
}

/// Byte offset just past the `k`-th whitespace token of `text` (or the whole
/// text when it has at most `k` tokens).
fn first_k_tokens_end(text: &str, k: usize) -> usize {
    if k == 0 {
        return 0;
    }
    let mut tokens_seen = 0;
    let mut in_token = false;
    for (idx, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if in_token {
                tokens_seen += 1;
                if tokens_seen == k {
                    return idx;
                }
                in_token = false;
            }
        } else {
            in_token = true;
        }
    }
    text.len()
}

/// Wraps each class instance in markers and derives its sampling prefix.
///
/// Instances are processed in ascending id order, which fixes the
/// context-independent numbering and the downstream candidate order. All
/// instances must carry the same label. Guarantees for every output:
/// `generation_prefix` is a literal string prefix of `marked_text`, and
/// [`strip_markers`]`(marked_text)` returns the content (the original text,
/// with the title prepended when a non-redundant title context was used).
pub fn prepare_instances(
    class_data: &[&LabeledInstance],
    scheme: &PrefixScheme,
) -> Result<Vec<PreparedInstance>, PipelineError> {
    let first = class_data.first().ok_or(PipelineError::EmptyClass)?;
    let label = first.label.clone();
    for inst in class_data {
        if inst.label != label {
            return Err(PipelineError::MixedLabels {
                expected: label,
                found: inst.label.clone(),
            });
        }
    }
    let mut ordered: Vec<&LabeledInstance> = class_data.to_vec();
    ordered.sort_by_key(|inst| inst.id);
    let mut prepared = Vec::with_capacity(ordered.len());
    for (rank, inst) in ordered.iter().enumerate() {
        let text = inst.text.trim();
        let (marked_text, generation_prefix) = match scheme {
            PrefixScheme::ContextIndependent => (
                format!("{START_MARKER} |{rank}| {text} {END_MARKER}"),
                format!("{START_MARKER} |{rank}|"),
            ),
            PrefixScheme::Plain => (
                format!("{START_MARKER} {text} {END_MARKER}"),
                START_MARKER.to_string(),
            ),
            PrefixScheme::ContextDependent { source, k } => {
                let (content, context_len) = match source {
                    ContextSource::Title => {
                        let title = inst
                            .title
                            .as_deref()
                            .map(str::trim)
                            .filter(|t| !t.is_empty())
                            .ok_or(PipelineError::MissingTitle { id: inst.id })?;
                        if text.starts_with(title) {
                            (text.to_string(), title.len())
                        } else {
                            (format!("{title} {text}"), title.len())
                        }
                    }
                    ContextSource::FirstWords => {
                        if *k == 0 {
                            return Err(PipelineError::InvalidArg(
                                "first-words context needs k >= 1".into(),
                            ));
                        }
                        (text.to_string(), first_k_tokens_end(text, *k))
                    }
                };
                (
                    format!("{START_MARKER} {content} {END_MARKER}"),
                    format!("{START_MARKER} {}", &content[..context_len]),
                )
            }
        };
        debug_assert!(marked_text.starts_with(&generation_prefix));
        prepared.push(PreparedInstance {
            source_id: inst.id,
            class_label: label.clone(),
            marked_text,
            generation_prefix,
        });
    }
    Ok(prepared)
}

/// True for numbering tokens of the form `|123|`.
fn leading_numbering_len(s: &str) -> Option<usize> {
    let rest = s.strip_prefix('|')?;
    let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    if rest.as_bytes().get(digits) == Some(&b'|') {
        Some(1 + digits + 1)
    } else {
        None
    }
}

/// Removes pipeline markers from generated text: leading start markers and
/// numbering tokens, trailing end markers, and surrounding whitespace.
/// Interior text is untouched. Idempotent: stripping stripped text is a
/// no-op, and `strip_markers(marked_text)` recovers the prepared content.
pub fn strip_markers(text: &str) -> String {
    let mut s = text;
    loop {
        let t = s.trim_start();
        if let Some(rest) = t.strip_prefix(START_MARKER) {
            s = rest;
            continue;
        }
        if let Some(len) = leading_numbering_len(t) {
            s = &t[len..];
            continue;
        }
        s = t;
        break;
    }
    let mut e = s;
    loop {
        let t = e.trim_end();
        if let Some(rest) = t.strip_suffix(END_MARKER) {
            e = rest;
            continue;
        }
        e = t;
        break;
    }
    e.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabeledInstance;

    fn inst(id: u64, text: &str) -> LabeledInstance {
        LabeledInstance::new(id, text, "pos")
    }

    #[test]
    fn context_independent_numbers_by_rank() {
        let a = inst(0, "good film");
        let b = inst(1, "great plot");
        let refs = vec![&a, &b];
        let prepared = prepare_instances(&refs, &PrefixScheme::ContextIndependent).unwrap();
        assert_eq!(
            prepared[0].marked_text,
            "<|startoftext|> |0| good film <|endoftext|>"
        );
        assert_eq!(prepared[0].generation_prefix, "<|startoftext|> |0|");
        assert_eq!(
            prepared[1].marked_text,
            "<|startoftext|> |1| great plot <|endoftext|>"
        );
        assert_eq!(prepared[1].generation_prefix, "<|startoftext|> |1|");
    }

    #[test]
    fn preparation_orders_by_id_not_slice_order() {
        let a = inst(7, "later");
        let b = inst(2, "earlier");
        let refs = vec![&a, &b];
        let prepared = prepare_instances(&refs, &PrefixScheme::ContextIndependent).unwrap();
        assert_eq!(prepared[0].source_id, 2);
        assert_eq!(prepared[0].generation_prefix, "<|startoftext|> |0|");
        assert_eq!(prepared[1].source_id, 7);
        assert_eq!(prepared[1].generation_prefix, "<|startoftext|> |1|");
    }

    #[test]
    fn title_context_prepends_non_redundant_title() {
        let a = inst(0, "flood waters rising downtown").with_title("Flood Alert");
        let refs = vec![&a];
        let prepared = prepare_instances(&refs, &PrefixScheme::title()).unwrap();
        assert_eq!(
            prepared[0].marked_text,
            "<|startoftext|> Flood Alert flood waters rising downtown <|endoftext|>"
        );
        assert_eq!(prepared[0].generation_prefix, "<|startoftext|> Flood Alert");
        assert!(prepared[0].marked_text.starts_with(&prepared[0].generation_prefix));
    }

    #[test]
    fn title_context_reuses_title_already_in_text() {
        let a = inst(0, "Flood Alert issued for the valley").with_title("Flood Alert");
        let refs = vec![&a];
        let prepared = prepare_instances(&refs, &PrefixScheme::title()).unwrap();
        // The text already starts with the title, so nothing is prepended
        // and stripping recovers the original text exactly.
        assert_eq!(
            prepared[0].marked_text,
            "<|startoftext|> Flood Alert issued for the valley <|endoftext|>"
        );
        assert_eq!(strip_markers(&prepared[0].marked_text), a.text);
    }

    #[test]
    fn first_words_context_cuts_at_token_boundary() {
        let a = inst(0, "the rain in spain stays mainly");
        let refs = vec![&a];
        let prepared = prepare_instances(&refs, &PrefixScheme::first_words(3)).unwrap();
        assert_eq!(prepared[0].generation_prefix, "<|startoftext|> the rain in");
        // Fewer tokens than k: the whole text is the context.
        let b = inst(1, "short text");
        let refs = vec![&b];
        let prepared = prepare_instances(&refs, &PrefixScheme::first_words(10)).unwrap();
        assert_eq!(prepared[0].generation_prefix, "<|startoftext|> short text");
    }

    #[test]
    fn first_words_survives_irregular_interior_whitespace() {
        let a = inst(0, "one  two\tthree four");
        let refs = vec![&a];
        let prepared = prepare_instances(&refs, &PrefixScheme::first_words(2)).unwrap();
        assert!(prepared[0].marked_text.starts_with(&prepared[0].generation_prefix));
        assert_eq!(prepared[0].generation_prefix, "<|startoftext|> one  two");
        assert_eq!(strip_markers(&prepared[0].marked_text), a.text);
    }

    #[test]
    fn plain_scheme_has_bare_marker_prefix() {
        let a = inst(0, "whatever");
        let refs = vec![&a];
        let prepared = prepare_instances(&refs, &PrefixScheme::Plain).unwrap();
        assert_eq!(prepared[0].generation_prefix, "<|startoftext|>");
        assert_eq!(prepared[0].marked_text, "<|startoftext|> whatever <|endoftext|>");
    }

    #[test]
    fn preparation_errors() {
        assert!(matches!(
            prepare_instances(&[], &PrefixScheme::ContextIndependent),
            Err(PipelineError::EmptyClass)
        ));
        let a = LabeledInstance::new(0, "x", "pos");
        let b = LabeledInstance::new(1, "y", "neg");
        let refs = vec![&a, &b];
        assert!(matches!(
            prepare_instances(&refs, &PrefixScheme::ContextIndependent),
            Err(PipelineError::MixedLabels { .. })
        ));
        let untitled = inst(3, "no title");
        let refs = vec![&untitled];
        match prepare_instances(&refs, &PrefixScheme::title()) {
            Err(PipelineError::MissingTitle { id }) => assert_eq!(id, 3),
            other => panic!("expected missing title, got {other:?}"),
        }
        let blank_title = inst(4, "text").with_title("   ");
        let refs = vec![&blank_title];
        assert!(matches!(
            prepare_instances(&refs, &PrefixScheme::title()),
            Err(PipelineError::MissingTitle { .. })
        ));
        let c = inst(5, "x");
        let refs = vec![&c];
        assert!(prepare_instances(&refs, &PrefixScheme::first_words(0)).is_err());
    }

    #[test]
    fn strip_recovers_content_from_marked_text() {
        assert_eq!(
            strip_markers("<|startoftext|> |3| good film <|endoftext|>"),
            "good film"
        );
        assert_eq!(strip_markers("<|startoftext|> plain body <|endoftext|>"), "plain body");
        assert_eq!(strip_markers("no markers at all"), "no markers at all");
    }

    #[test]
    fn strip_is_idempotent_on_tricky_inputs() {
        let cases = [
            "<|startoftext|> |3| good film <|endoftext|>",
            "<|startoftext|> <|startoftext|> |1| |2| doubled <|endoftext|> <|endoftext|>",
            "  padded  ",
            "|7|",
            "",
            "interior |4| stays <|endoftext|>",
            "pipe|but|not|numbering",
        ];
        for case in cases {
            let once = strip_markers(case);
            let twice = strip_markers(&once);
            assert_eq!(once, twice, "not idempotent on {case:?}");
        }
    }

    #[test]
    fn strip_leaves_interior_markers_alone() {
        assert_eq!(
            strip_markers("<|startoftext|> |0| a <|endoftext|> b"),
            "a <|endoftext|> b"
        );
        assert_eq!(strip_markers("interior |4| stays <|endoftext|>"), "interior |4| stays");
    }

    #[test]
    fn prepare_then_strip_round_trips() {
        let schemes = [
            PrefixScheme::ContextIndependent,
            PrefixScheme::Plain,
            PrefixScheme::first_words(2),
        ];
        let a = inst(0, "some body   with  gaps");
        let refs = vec![&a];
        for scheme in schemes {
            let prepared = prepare_instances(&refs, &scheme).unwrap();
            assert_eq!(strip_markers(&prepared[0].marked_text), a.text, "{scheme:?}");
        }
        // Title scheme round-trips to title-prefixed content.
        let t = inst(0, "body text").with_title("Headline");
        let refs = vec![&t];
        let prepared = prepare_instances(&refs, &PrefixScheme::title()).unwrap();
        assert_eq!(strip_markers(&prepared[0].marked_text), "Headline body text");
    }

    #[test]
    fn first_k_tokens_end_offsets() {
        assert_eq!(first_k_tokens_end("a b c", 1), 1);
        assert_eq!(first_k_tokens_end("a b c", 2), 3);
        assert_eq!(first_k_tokens_end("a b c", 3), 5);
        assert_eq!(first_k_tokens_end("a b c", 4), 5);
        assert_eq!(first_k_tokens_end("  leading", 1), 9);
        assert_eq!(first_k_tokens_end("", 2), 0);
    }

    #[test]
    fn numbering_detection() {
        assert_eq!(leading_numbering_len("|12| rest"), Some(4));
        assert_eq!(leading_numbering_len("|x|"), None);
        assert_eq!(leading_numbering_len("||"), None);
        assert_eq!(leading_numbering_len("|123"), None);
        assert_eq!(leading_numbering_len("plain"), None);
    }
}
