//! Embedding-centroid filtering of generated candidates.
//!
//! A candidate is kept only if its embedding lies strictly within distance
//! `delta` of the centroid of the class's real training embeddings. This is
//! the label-preservation safety net: generated text that drifted off-class
//! sits far from the class centroid and is discarded.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LabeledInstance;
use crate::embed::{EmbedError, Embedding, EmbeddingModel};
use crate::pipeline::Candidate;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("no embeddings to aggregate")]
    NoEmbeddings,
    #[error("class has no instances to build a centroid from")]
    EmptyClass,
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("cosine distance is undefined for a zero vector")]
    ZeroVector,
    #[error("threshold delta must be non-negative and not NaN, got {0}")]
    InvalidDelta(f64),
    #[error("calibration requires k >= 1")]
    ZeroK,
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Distance metric between embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// 1 − cosine similarity, clamped into [0, 2].
    CosineDistance,
    /// Euclidean (L2) distance.
    Euclidean,
}

impl Default for Metric {
    fn default() -> Self {
        Metric::CosineDistance
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Metric::CosineDistance => write!(f, "cosine_distance"),
            Metric::Euclidean => write!(f, "euclidean"),
        }
    }
}

/// Configuration for [`filter_generated`].
///
/// `delta = 0` is permitted as the degenerate "discard everything" threshold
/// (the comparison is strict); `f64::INFINITY` keeps everything.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CentroidFilterConfig {
    pub delta: f64,
    #[serde(default)]
    pub metric: Metric,
}

impl CentroidFilterConfig {
    pub fn new(delta: f64, metric: Metric) -> Result<Self, FilterError> {
        let cfg = CentroidFilterConfig { delta, metric };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if self.delta.is_nan() || self.delta < 0.0 {
            return Err(FilterError::InvalidDelta(self.delta));
        }
        Ok(())
    }
}

/// Component-wise mean of the given embeddings.
pub fn centroid(embeddings: &[Embedding]) -> Result<Embedding, FilterError> {
    let first = embeddings.first().ok_or(FilterError::NoEmbeddings)?;
    let dim = first.dim();
    let mut acc = vec![0.0f64; dim];
    for e in embeddings {
        if e.dim() != dim {
            return Err(FilterError::DimMismatch {
                left: dim,
                right: e.dim(),
            });
        }
        for (a, v) in acc.iter_mut().zip(e.values()) {
            *a += v;
        }
    }
    let n = embeddings.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    Ok(Embedding::new(acc)?)
}

/// Distance between two embeddings under the given metric.
pub fn distance(a: &Embedding, b: &Embedding, metric: Metric) -> Result<f64, FilterError> {
    if a.dim() != b.dim() {
        return Err(FilterError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    match metric {
        Metric::Euclidean => {
            let sum: f64 = a
                .values()
                .iter()
                .zip(b.values())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            Ok(sum.sqrt())
        }
        Metric::CosineDistance => {
            let na = a.l2_norm();
            let nb = b.l2_norm();
            if na == 0.0 || nb == 0.0 {
                return Err(FilterError::ZeroVector);
            }
            let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
            Ok((1.0 - dot / (na * nb)).clamp(0.0, 2.0))
        }
    }
}

/// Embeds the class instances and returns their centroid.
pub fn class_centroid(
    class_data: &[&LabeledInstance],
    embedder: &dyn EmbeddingModel,
) -> Result<Embedding, FilterError> {
    if class_data.is_empty() {
        return Err(FilterError::EmptyClass);
    }
    let embeddings: Vec<Embedding> = class_data
        .iter()
        .map(|inst| embedder.embed(&inst.text))
        .collect::<Result<_, _>>()?;
    centroid(&embeddings)
}

/// Why a candidate was discarded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DiscardReason {
    /// Distance to the class centroid was >= delta.
    TooFar { distance: f64 },
    /// Candidate text was empty after marker stripping.
    EmptyText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscardedCandidate {
    #[serde(flatten)]
    pub candidate: Candidate,
    #[serde(flatten)]
    pub reason: DiscardReason,
}

/// Result of [`filter_generated`]: a partition of the input candidates, both
/// halves in input order. `kept_distances` is aligned with `kept`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterOutcome {
    pub kept: Vec<Candidate>,
    pub kept_distances: Vec<f64>,
    pub discarded: Vec<DiscardedCandidate>,
}

/// Keeps exactly the candidates whose embedding lies strictly closer than
/// `cfg.delta` to the class centroid. Empty candidates are discarded with
/// [`DiscardReason::EmptyText`] without consulting the embedder.
pub fn filter_generated(
    candidates: &[Candidate],
    class_data: &[&LabeledInstance],
    embedder: &dyn EmbeddingModel,
    cfg: &CentroidFilterConfig,
) -> Result<FilterOutcome, FilterError> {
    cfg.validate()?;
    let center = class_centroid(class_data, embedder)?;
    let mut kept = Vec::new();
    let mut kept_distances = Vec::new();
    let mut discarded = Vec::new();
    for cand in candidates {
        if cand.text.trim().is_empty() {
            discarded.push(DiscardedCandidate {
                candidate: cand.clone(),
                reason: DiscardReason::EmptyText,
            });
            continue;
        }
        let emb = embedder.embed(&cand.text)?;
        let dist = distance(&emb, &center, cfg.metric)?;
        if dist < cfg.delta {
            kept.push(cand.clone());
            kept_distances.push(dist);
        } else {
            discarded.push(DiscardedCandidate {
                candidate: cand.clone(),
                reason: DiscardReason::TooFar { distance: dist },
            });
        }
    }
    Ok(FilterOutcome {
        kept,
        kept_distances,
        discarded,
    })
}

/// One candidate surfaced during threshold calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub source_id: u64,
    pub sample_index: u32,
    pub distance: f64,
    pub text: String,
}

/// Calibration output. The JSON form carries the most-distant candidates,
/// nearest-rank percentiles of the distance distribution, and (after an
/// interactive pass) a proposed threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    /// The `k` most distant candidates, farthest first.
    pub candidates: Vec<CalibrationEntry>,
    /// Nearest-rank percentiles of all candidate distances: p90, p95, p99.
    pub percentiles: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposed_delta: Option<f64>,
    /// Full distance profile, ascending. Not serialized.
    #[serde(skip)]
    pub sorted_distances: Vec<f64>,
    /// The `k` that was asked for; fewer candidates may have been available.
    #[serde(skip)]
    pub requested_k: usize,
}

/// Nearest-rank percentile of an ascending-sorted slice.
fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Ranks candidates by distance from the class centroid and reports the `k`
/// most distant for manual review (empty candidates are excluded; they are
/// auto-discarded by [`filter_generated`] regardless of threshold).
///
/// When `decide` is given it is called once per reviewed candidate, farthest
/// first; `true` accepts the candidate as on-class, `false` rejects it. The
/// proposed threshold is the midpoint between the largest accepted distance
/// (unreviewed candidates count as accepted) and the smallest rejected
/// distance. With no rejections the proposal clears the maximum distance by
/// 10%, so every observed candidate passes a strict comparison.
pub fn calibrate_threshold(
    candidates: &[Candidate],
    class_data: &[&LabeledInstance],
    embedder: &dyn EmbeddingModel,
    metric: Metric,
    k: usize,
    mut decide: Option<&mut dyn FnMut(&CalibrationEntry) -> bool>,
) -> Result<CalibrationReport, FilterError> {
    if k == 0 {
        return Err(FilterError::ZeroK);
    }
    let center = class_centroid(class_data, embedder)?;
    let mut entries: Vec<CalibrationEntry> = Vec::new();
    for cand in candidates {
        if cand.text.trim().is_empty() {
            continue;
        }
        let emb = embedder.embed(&cand.text)?;
        let dist = distance(&emb, &center, metric)?;
        entries.push(CalibrationEntry {
            source_id: cand.source_id,
            sample_index: cand.sample_index,
            distance: dist,
            text: cand.text.clone(),
        });
    }
    if entries.is_empty() {
        return Err(FilterError::NoEmbeddings);
    }
    // Farthest first; ties resolved by candidate coordinates for determinism.
    entries.sort_by(|a, b| {
        b.distance
            .partial_cmp(&a.distance)
            .expect("finite distances")
            .then(a.source_id.cmp(&b.source_id))
            .then(a.sample_index.cmp(&b.sample_index))
    });
    let shown: Vec<CalibrationEntry> = entries.iter().take(k).cloned().collect();
    let mut sorted_distances: Vec<f64> = entries.iter().map(|e| e.distance).collect();
    sorted_distances.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let mut percentiles = BTreeMap::new();
    for pct in [90.0, 95.0, 99.0] {
        percentiles.insert(format!("p{pct:.0}"), nearest_rank(&sorted_distances, pct));
    }
    let proposed_delta = decide.as_mut().map(|decide| {
        let mut accepted_max: f64 = if entries.len() > shown.len() {
            // Everything below the reviewed block is implicitly accepted.
            entries[shown.len()].distance
        } else {
            0.0
        };
        let mut rejected_min: Option<f64> = None;
        for entry in &shown {
            if decide(entry) {
                accepted_max = accepted_max.max(entry.distance);
            } else {
                rejected_min = Some(match rejected_min {
                    Some(cur) => entry.distance.min(cur),
                    None => entry.distance,
                });
            }
        }
        match rejected_min {
            Some(rej) => (accepted_max + rej) / 2.0,
            None => {
                let max = *sorted_distances.last().expect("non-empty");
                if max > 0.0 {
                    max * 1.1
                } else {
                    1e-9
                }
            }
        }
    });
    Ok(CalibrationReport {
        candidates: shown,
        percentiles,
        proposed_delta,
        sorted_distances,
        requested_k: k,
    })
}
