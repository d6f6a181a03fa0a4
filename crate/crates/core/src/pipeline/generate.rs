//! Candidate generation from prepared instances.
//!
//! Every (instance, sample) pair draws its RNG seed independently from the
//! run seed via [`crate::hash::derive_seed`], so candidate `k` of instance
//! `i` is the same no matter how many instances or samples surround it, and
//! an interrupted schedule can be resumed mid-way without replaying earlier
//! samples.

use serde::{Deserialize, Serialize};

use super::{strip_markers, PipelineError, PreparedInstance};
use crate::backend::{FinetunedModel, GenerationParams};
use crate::hash::derive_seed;

/// How one class's candidates are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationPlan {
    /// Samples drawn per prepared instance.
    pub n_per_instance: u32,
    pub params: GenerationParams,
    /// Keep the steering context in the candidate text (strip only the
    /// markers). When false the candidate is the bare continuation.
    pub keep_context: bool,
    /// Extra attempts (fresh derived seed each) when a sample comes back
    /// empty after stripping, before the slot is dropped.
    pub retries: u32,
    pub run_seed: u64,
}

impl GenerationPlan {
    pub fn new(n_per_instance: u32, params: GenerationParams, run_seed: u64) -> Self {
        GenerationPlan {
            n_per_instance,
            params,
            keep_context: true,
            retries: 3,
            run_seed,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.n_per_instance == 0 {
            return Err(PipelineError::InvalidArg(
                "n_per_instance must be >= 1".into(),
            ));
        }
        self.params.validate()?;
        Ok(())
    }
}

/// One generated augmentation candidate, before filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub source_id: u64,
    pub sample_index: u32,
    pub text: String,
}

/// A sample slot that stayed empty through every attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedSample {
    pub source_id: u64,
    pub sample_index: u32,
    /// Total attempts made (retries + 1).
    pub attempts: u32,
}

/// Outcome of one (instance, sample) slot.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleOutcome {
    Kept(Candidate),
    Dropped(DroppedSample),
}

/// All candidates generated for one class, ordered by
/// `(source_id, sample_index)`. `candidates.len() + dropped.len()` always
/// equals `n_per_instance × prepared.len()`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeneratedBatch {
    pub candidates: Vec<Candidate>,
    pub dropped: Vec<DroppedSample>,
}

/// Generates one sample slot: derives the seed, samples, strips markers, and
/// retries with fresh seeds while the stripped text is empty.
pub fn generate_one(
    model: &dyn FinetunedModel,
    prepared: &PreparedInstance,
    sample_index: u32,
    plan: &GenerationPlan,
) -> Result<SampleOutcome, PipelineError> {
    for attempt in 0..=plan.retries {
        let seed = derive_seed(
            plan.run_seed,
            prepared.source_id,
            u64::from(sample_index),
            u64::from(attempt),
        );
        let continuation = model.sample(&prepared.generation_prefix, &plan.params, seed)?;
        let text = if plan.keep_context {
            strip_markers(&format!("{} {}", prepared.generation_prefix, continuation))
        } else {
            strip_markers(&continuation)
        };
        if !text.is_empty() {
            return Ok(SampleOutcome::Kept(Candidate {
                source_id: prepared.source_id,
                sample_index,
                text,
            }));
        }
    }
    Ok(SampleOutcome::Dropped(DroppedSample {
        source_id: prepared.source_id,
        sample_index,
        attempts: plan.retries + 1,
    }))
}

/// Generates `plan.n_per_instance` candidates per prepared instance.
/// `prepared` must already be in ascending id order (as produced by
/// [`super::prepare_instances`]); the output then comes out ordered by
/// `(source_id, sample_index)`.
pub fn generate_candidates(
    model: &dyn FinetunedModel,
    prepared: &[PreparedInstance],
    plan: &GenerationPlan,
) -> Result<GeneratedBatch, PipelineError> {
    plan.validate()?;
    let mut batch = GeneratedBatch::default();
    for p in prepared {
        for sample_index in 0..plan.n_per_instance {
            match generate_one(model, p, sample_index, plan)? {
                SampleOutcome::Kept(c) => batch.candidates.push(c),
                SampleOutcome::Dropped(d) => batch.dropped.push(d),
            }
        }
    }
    Ok(batch)
}
