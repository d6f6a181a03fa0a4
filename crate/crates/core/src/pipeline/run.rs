//! End-to-end augmentation runs: prepare → finetune → generate → filter →
//! merge, per class.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{
    generate_candidates, prepare_instances, GeneratedBatch, GenerationPlan, PipelineError,
    PrefixScheme,
};
use crate::backend::{FinetuneConfig, FinetuneReport, GenerationParams, GenerativeModel};
use crate::corpus::{Dataset, LabeledInstance};
use crate::embed::EmbeddingModel;
use crate::filter::{filter_generated, CentroidFilterConfig};
use crate::hash::fnv1a64_hex;

/// Everything that defines an augmentation run. Serialized verbatim into the
/// run manifest; the run id is a fingerprint of this plus the run seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentationRequest {
    /// Classes to augment, processed in the given order.
    pub class_labels: Vec<String>,
    pub scheme: PrefixScheme,
    pub finetune: FinetuneConfig,
    pub n_per_instance: u32,
    pub params: GenerationParams,
    pub keep_context: bool,
    pub retries: u32,
    pub filter: CentroidFilterConfig,
    /// Drop candidates whose text duplicates a real instance of the class or
    /// an earlier kept candidate of the same class.
    pub dedup: bool,
    pub run_seed: u64,
}

impl AugmentationRequest {
    pub fn new(class_labels: Vec<String>, delta: f64, run_seed: u64) -> Self {
        AugmentationRequest {
            class_labels,
            scheme: PrefixScheme::ContextIndependent,
            finetune: FinetuneConfig::default(),
            n_per_instance: 10,
            params: GenerationParams::default(),
            keep_context: true,
            retries: 3,
            filter: CentroidFilterConfig {
                delta,
                metric: Default::default(),
            },
            dedup: false,
            run_seed,
        }
    }
}

/// Counters for one class's pass through the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassOutcome {
    pub label: String,
    pub prepared: usize,
    /// Candidates produced by generation (before filtering).
    pub generated: usize,
    /// Sample slots dropped after exhausting empty-output retries.
    pub dropped: usize,
    /// Candidates discarded by the centroid filter.
    pub filtered_out: usize,
    /// Candidates removed as duplicates (only when dedup is on).
    pub deduped: usize,
    /// Candidates that made it into the augmented dataset.
    pub kept: usize,
    pub finetune: FinetuneReport,
}

/// Result of [`run_augmentation`].
#[derive(Debug, Clone)]
pub struct AugmentationOutcome {
    /// Original dataset followed by the new instances, grouped per class in
    /// request order, each group ordered by `(source_id, sample_index)`.
    pub augmented: Dataset,
    pub per_class: Vec<ClassOutcome>,
    pub run_id: String,
}

impl AugmentationOutcome {
    /// The generated instances only (everything after the originals).
    pub fn new_instances(&self, original_len: usize) -> &[LabeledInstance] {
        &self.augmented.instances[original_len..]
    }
}

/// Deterministic fingerprint of an augmentation request + dataset shape.
pub(crate) fn run_fingerprint(request: &AugmentationRequest) -> String {
    let canonical = serde_json::to_string(request).expect("request serializes");
    fnv1a64_hex(canonical.as_bytes())
}

/// Runs the full pipeline for every requested class and returns the original
/// dataset extended with the surviving candidates as labeled instances. Each
/// new instance carries provenance fields: `augmented: true`, `source_id`
/// (the instance whose prefix produced it), and `run_id`.
pub fn run_augmentation(
    dataset: &Dataset,
    request: &AugmentationRequest,
    backend: &dyn GenerativeModel,
    embedder: &dyn EmbeddingModel,
) -> Result<AugmentationOutcome, PipelineError> {
    if request.class_labels.is_empty() {
        return Err(PipelineError::InvalidArg("no classes requested".into()));
    }
    let known: BTreeSet<String> = dataset.classes().into_iter().collect();
    for label in &request.class_labels {
        if !known.contains(label) {
            return Err(PipelineError::UnknownClass(label.clone()));
        }
    }
    request.filter.validate()?;
    let run_id = run_fingerprint(request);
    let mut augmented = dataset.clone();
    let mut next_id = dataset.max_id().map_or(0, |m| m + 1);
    let mut per_class = Vec::new();
    for label in &request.class_labels {
        let class_data = dataset.of_class(label);
        let prepared = prepare_instances(&class_data, &request.scheme)?;
        let corpus: Vec<String> = prepared.iter().map(|p| p.marked_text.clone()).collect();
        let model = backend.finetune(&corpus, &request.finetune)?;
        let plan = GenerationPlan {
            n_per_instance: request.n_per_instance,
            params: request.params.clone(),
            keep_context: request.keep_context,
            retries: request.retries,
            run_seed: request.run_seed,
        };
        let batch: GeneratedBatch = generate_candidates(model.as_ref(), &prepared, &plan)?;
        let outcome = filter_generated(&batch.candidates, &class_data, embedder, &request.filter)?;
        let mut seen: BTreeSet<String> = if request.dedup {
            class_data.iter().map(|inst| inst.text.clone()).collect()
        } else {
            BTreeSet::new()
        };
        let mut deduped = 0usize;
        let mut kept = 0usize;
        for cand in &outcome.kept {
            if request.dedup && !seen.insert(cand.text.clone()) {
                deduped += 1;
                continue;
            }
            let mut inst = LabeledInstance::new(next_id, cand.text.clone(), label.clone());
            inst.extra.insert("augmented".into(), serde_json::Value::Bool(true));
            inst.extra
                .insert("source_id".into(), serde_json::Value::from(cand.source_id));
            inst.extra
                .insert("run_id".into(), serde_json::Value::String(run_id.clone()));
            augmented.instances.push(inst);
            next_id += 1;
            kept += 1;
        }
        per_class.push(ClassOutcome {
            label: label.clone(),
            prepared: prepared.len(),
            generated: batch.candidates.len(),
            dropped: batch.dropped.len(),
            filtered_out: outcome.discarded.len(),
            deduped,
            kept,
            finetune: model.finetune_report(),
        });
    }
    Ok(AugmentationOutcome {
        augmented,
        per_class,
        run_id,
    })
}
