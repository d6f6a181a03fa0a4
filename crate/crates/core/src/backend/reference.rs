//! In-process reference backend: an exact-memorization n-gram model.
//!
//! Finetuning counts next-token continuations for every context window up to
//! `order − 1` tokens. Wherever that fixed-size context is ambiguous (seen
//! with more than one continuation across the corpus), the model additionally
//! registers the full history back to the start of the string — a
//! "disambiguation ladder". Greedy decoding always follows the longest
//! matching registered context, so a corpus whose strings begin with unique
//! token runs (the numbered start markers produced by prefix preparation) is
//! reproduced exactly, token for token.
//!
//! At temperature above zero, sampling applies additive smoothing over the
//! corpus vocabulary (minus start and numbering markers), which lets decoding
//! step off the memorized path and recombine corpus fragments. At temperature
//! zero no smoothing is applied.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{BackendError, FinetuneConfig, FinetuneReport, FinetunedModel, GenerationParams, GenerativeModel};
use crate::pipeline::START_MARKER;

/// True for numbering tokens of the form `|123|`.
fn is_numbering_token(tok: &str) -> bool {
    let bytes = tok.as_bytes();
    bytes.len() >= 3
        && bytes[0] == b'|'
        && bytes[bytes.len() - 1] == b'|'
        && bytes[1..bytes.len() - 1].iter().all(u8::is_ascii_digit)
}

/// Marker tokens are never predicted at temperature > 0 and are excluded
/// from the training loss: decoding always starts from a prefix that already
/// contains them, so the model is never asked to produce one.
fn is_marker_token(tok: &str) -> bool {
    tok == START_MARKER || is_numbering_token(tok)
}

/// Reference backend configuration. `order` is the n-gram size (contexts of
/// `order − 1` tokens); `smoothing` is the additive mass given to every
/// vocabulary token when sampling at temperature > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMemorizingModel {
    order: usize,
    smoothing: f64,
}

impl Default for ReferenceMemorizingModel {
    fn default() -> Self {
        ReferenceMemorizingModel {
            order: 4,
            smoothing: 0.02,
        }
    }
}

impl ReferenceMemorizingModel {
    pub fn new(order: usize) -> Result<Self, BackendError> {
        if order < 2 {
            return Err(BackendError::InvalidParams(format!(
                "n-gram order must be >= 2, got {order}"
            )));
        }
        Ok(ReferenceMemorizingModel {
            order,
            ..Self::default()
        })
    }

    pub fn with_smoothing(mut self, smoothing: f64) -> Result<Self, BackendError> {
        if !smoothing.is_finite() || smoothing < 0.0 {
            return Err(BackendError::InvalidParams(format!(
                "smoothing must be non-negative and finite, got {smoothing}"
            )));
        }
        self.smoothing = smoothing;
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Like [`GenerativeModel::finetune`] but returns the concrete model, so
    /// callers can persist it with [`MemorizedModel::to_json`] and reload it
    /// in a later process with [`MemorizedModel::from_json`].
    pub fn finetune_memorized(
        &self,
        corpus: &[String],
        cfg: &FinetuneConfig,
    ) -> Result<MemorizedModel, BackendError> {
        MemorizedModel::train(self, corpus, cfg)
    }
}

impl GenerativeModel for ReferenceMemorizingModel {
    fn finetune(
        &self,
        corpus: &[String],
        cfg: &FinetuneConfig,
    ) -> Result<Box<dyn FinetunedModel>, BackendError> {
        let model = MemorizedModel::train(self, corpus, cfg)?;
        Ok(Box::new(model))
    }
}

/// A trained reference model: the continuation table plus everything needed
/// to sample from it. Immutable after training.
#[derive(Debug, Clone)]
pub struct MemorizedModel {
    order: usize,
    smoothing: f64,
    /// Context tokens -> continuation counts. Keys are all lengths from 0
    /// (unigram fallback) through `order − 1`, plus full-history ladder
    /// entries at ambiguous positions.
    table: HashMap<Vec<String>, BTreeMap<String, u32>>,
    max_context_len: usize,
    /// Sampling vocabulary at temperature > 0, sorted. Excludes start and
    /// numbering markers; includes the end marker.
    vocab: Vec<String>,
    report: FinetuneReport,
}

impl MemorizedModel {
    fn train(
        spec: &ReferenceMemorizingModel,
        corpus: &[String],
        cfg: &FinetuneConfig,
    ) -> Result<Self, BackendError> {
        cfg.validate()?;
        let sequences: Vec<Vec<String>> = corpus
            .iter()
            .map(|s| s.split_whitespace().map(str::to_string).collect())
            .filter(|toks: &Vec<String>| !toks.is_empty())
            .collect();
        if sequences.is_empty() {
            return Err(BackendError::EmptyCorpus);
        }
        let window = spec.order - 1;
        let mut table: HashMap<Vec<String>, BTreeMap<String, u32>> = HashMap::new();
        // Base pass: every context length 0..=window at every position.
        for seq in &sequences {
            for j in 0..seq.len() {
                for c in 0..=j.min(window) {
                    let ctx = seq[j - c..j].to_vec();
                    *table.entry(ctx).or_default().entry(seq[j].clone()).or_insert(0) += 1;
                }
            }
        }
        // Ladder pass: where the fixed window is ambiguous, register the
        // full history back to the string start so longest-match lookup can
        // recover the exact continuation.
        let mut ladder: Vec<(Vec<String>, String)> = Vec::new();
        for seq in &sequences {
            for j in spec.order..seq.len() {
                let ctx = &seq[j - window..j];
                if table[ctx].len() > 1 {
                    ladder.push((seq[..j].to_vec(), seq[j].clone()));
                }
            }
        }
        let mut max_context_len = window;
        for (ctx, tok) in ladder {
            max_context_len = max_context_len.max(ctx.len());
            *table.entry(ctx).or_default().entry(tok).or_insert(0) += 1;
        }
        // Vocabulary for smoothed sampling.
        let vocab: Vec<String> = sequences
            .iter()
            .flatten()
            .filter(|t| !is_marker_token(t))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .cloned()
            .collect();
        let mut model = MemorizedModel {
            order: spec.order,
            smoothing: spec.smoothing,
            table,
            max_context_len,
            vocab,
            report: FinetuneReport {
                final_loss: 0.0,
                epochs: 1,
            },
        };
        let final_loss = model.corpus_loss(&sequences);
        model.report = FinetuneReport {
            final_loss,
            epochs: if final_loss <= cfg.target_loss { 1 } else { cfg.max_epochs },
        };
        Ok(model)
    }

    /// Average next-token negative log-likelihood of the corpus under
    /// longest-match lookup. Positions whose target is a start or numbering
    /// marker are excluded: decoding is always conditioned on a prefix that
    /// already contains them (see module docs). Zero exactly when every
    /// remaining position is unambiguous after the ladder.
    fn corpus_loss(&self, sequences: &[Vec<String>]) -> f64 {
        let mut total = 0.0f64;
        let mut positions = 0usize;
        for seq in sequences {
            for j in 1..seq.len() {
                if is_marker_token(&seq[j]) {
                    continue;
                }
                let counts = self
                    .longest_match(&seq[..j])
                    .expect("every trained position has at least a unigram context");
                let hits = u64::from(counts[&seq[j]]);
                let total_count: u64 = counts.values().map(|c| u64::from(*c)).sum();
                total += -((hits as f64 / total_count as f64).ln());
                positions += 1;
            }
        }
        if positions == 0 {
            0.0
        } else {
            total / positions as f64
        }
    }

    /// Continuation counts for the longest registered suffix of `history`.
    /// Some for any non-degenerate model: the empty context is always
    /// registered as the unigram fallback.
    fn longest_match(&self, history: &[String]) -> Option<&BTreeMap<String, u32>> {
        let upper = history.len().min(self.max_context_len);
        for c in (0..=upper).rev() {
            if let Some(counts) = self.table.get(&history[history.len() - c..]) {
                return Some(counts);
            }
        }
        None
    }

    /// Greedy pick: highest count, ties to the lexicographically smallest
    /// token (BTreeMap iteration order makes this the first maximum).
    fn argmax(counts: &BTreeMap<String, u32>) -> &str {
        let mut best: Option<(&str, u32)> = None;
        for (tok, &n) in counts {
            match best {
                Some((_, bn)) if n <= bn => {}
                _ => best = Some((tok, n)),
            }
        }
        best.expect("non-empty counts").0
    }

    /// Temperature sampling over the restricted vocabulary with additive
    /// smoothing: weight ∝ (count + smoothing)^(1/T).
    fn sample_weighted<'a>(
        &'a self,
        counts: &'a BTreeMap<String, u32>,
        temperature: f64,
        rng: &mut StdRng,
    ) -> &'a str {
        let inv_t = 1.0 / temperature;
        let weights: Vec<f64> = self
            .vocab
            .iter()
            .map(|tok| {
                let count = counts.get(tok).copied().unwrap_or(0) as f64;
                (count + self.smoothing).powf(inv_t)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            // Smoothing disabled and no in-vocabulary continuation: fall
            // back to the raw greedy pick.
            return Self::argmax(counts);
        }
        let mut r = rng.random::<f64>() * total;
        for (tok, w) in self.vocab.iter().zip(&weights) {
            if r < *w {
                return tok;
            }
            r -= w;
        }
        self.vocab.last().expect("non-empty vocab")
    }

    /// Stable JSON snapshot of the trained model. Entries are sorted by
    /// context, so equal models serialize byte-identically.
    pub fn to_json(&self) -> String {
        let mut entries: Vec<(Vec<String>, Vec<(String, u32)>)> = self
            .table
            .iter()
            .map(|(ctx, counts)| {
                (
                    ctx.clone(),
                    counts.iter().map(|(t, n)| (t.clone(), *n)).collect(),
                )
            })
            .collect();
        entries.sort();
        let file = ModelFile {
            order: self.order,
            smoothing: self.smoothing,
            max_context_len: self.max_context_len,
            vocab: self.vocab.clone(),
            report: self.report,
            table: entries,
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(data: &str) -> Result<Self, BackendError> {
        let file: ModelFile = serde_json::from_str(data)
            .map_err(|e| BackendError::InvalidParams(format!("bad model file: {e}")))?;
        Ok(MemorizedModel {
            order: file.order,
            smoothing: file.smoothing,
            max_context_len: file.max_context_len,
            vocab: file.vocab,
            report: file.report,
            table: file
                .table
                .into_iter()
                .map(|(ctx, counts)| (ctx, counts.into_iter().collect()))
                .collect(),
        })
    }
}

/// On-disk form of [`MemorizedModel`].
#[derive(Serialize, Deserialize)]
struct ModelFile {
    order: usize,
    smoothing: f64,
    max_context_len: usize,
    vocab: Vec<String>,
    report: FinetuneReport,
    table: Vec<(Vec<String>, Vec<(String, u32)>)>,
}

impl FinetunedModel for MemorizedModel {
    fn sample(&self, prefix: &str, params: &GenerationParams, seed: u64) -> Result<String, BackendError> {
        params.validate()?;
        let mut history: Vec<String> = prefix.split_whitespace().map(str::to_string).collect();
        if history.is_empty() {
            return Err(BackendError::EmptyPrefix);
        }
        let mut rng = StdRng::seed_from_u64(seed);
        let mut out: Vec<String> = Vec::new();
        for _ in 0..params.max_tokens {
            let counts = match self.longest_match(&history) {
                Some(c) => c,
                None => break,
            };
            let next = if params.temperature == 0.0 {
                Self::argmax(counts).to_string()
            } else {
                self.sample_weighted(counts, params.temperature, &mut rng).to_string()
            };
            if next == params.stop_token {
                break;
            }
            history.push(next.clone());
            out.push(next);
        }
        Ok(out.join(" "))
    }

    fn finetune_report(&self) -> FinetuneReport {
        self.report
    }
}
