//! Generative model backends.
//!
//! A backend is anything that can be finetuned on a corpus of marked strings
//! and then sampled from a string prefix. The in-process reference backend
//! ([`reference::ReferenceMemorizingModel`]) memorizes the corpus exactly;
//! the external adapter ([`external::ExternalProcessBackend`]) drives a real
//! language-model process over a newline-delimited JSON protocol
//! ([`server`] implements the other end of that protocol for testing).

pub mod external;
pub mod reference;
pub mod server;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::END_MARKER;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("finetune corpus has no tokens")]
    EmptyCorpus,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("sampling prefix must be non-empty")]
    EmptyPrefix,
    #[error("backend transport failed: {0}")]
    Transport(String),
    #[error("backend reported an error: {0}")]
    Remote(String),
}

/// Finetuning configuration. Training stops as soon as the reported loss
/// reaches `target_loss`; otherwise it runs the full `max_epochs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub target_loss: f64,
    pub max_epochs: u32,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            target_loss: 0.2,
            max_epochs: 1000,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !self.target_loss.is_finite() || self.target_loss < 0.0 {
            return Err(BackendError::InvalidParams(format!(
                "target_loss must be a non-negative finite number, got {}",
                self.target_loss
            )));
        }
        if self.max_epochs == 0 {
            return Err(BackendError::InvalidParams("max_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// What finetuning reported back: the loss it ended at and how many epochs
/// it took to get there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub final_loss: f64,
    pub epochs: u32,
}

/// Sampling parameters. `temperature` 0 means greedy (argmax) decoding;
/// higher values flatten the next-token distribution, up to 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop_token: String,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.7,
            max_tokens: 128,
            stop_token: END_MARKER.to_string(),
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=2.0).contains(&self.temperature) || self.temperature.is_nan() {
            return Err(BackendError::InvalidParams(format!(
                "temperature must be in [0, 2], got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidParams("max_tokens must be >= 1".into()));
        }
        if self.stop_token.trim().is_empty() {
            return Err(BackendError::InvalidParams("stop_token must be non-empty".into()));
        }
        Ok(())
    }
}

/// A finetuned model ready to sample. Implementations must be deterministic:
/// the same `(prefix, params, seed)` always yields the same continuation.
/// The returned text is the continuation only (the prefix is not echoed) and
/// never contains `params.stop_token`; generation stops at the stop token or
/// after `params.max_tokens` generated tokens, whichever comes first.
pub trait FinetunedModel: Send + Sync {
    fn sample(&self, prefix: &str, params: &GenerationParams, seed: u64) -> Result<String, BackendError>;
    fn finetune_report(&self) -> FinetuneReport;
}

/// A generative backend. Finetuning consumes a corpus of already-marked
/// strings and yields an independent sampling handle, so one backend can hold
/// several class-conditional models at once.
pub trait GenerativeModel {
    fn finetune(
        &self,
        corpus: &[String],
        cfg: &FinetuneConfig,
    ) -> Result<Box<dyn FinetunedModel>, BackendError>;
}
