//! Deterministic synthetic two-class text tasks with controllable vocabulary
//! overlap and class imbalance. Used to exercise the full
//! generate-filter-evaluate loop at desk scale, where real benchmark corpora
//! would be too large and too slow.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::corpus::{Dataset, LabeledInstance};
use crate::hash::derive_seed;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid synthetic task config: {0}")]
    InvalidConfig(String),
}

/// Shape of a generated task. Both classes draw most tokens from a shared
/// pool and the rest from a class-private pool, so their vocabularies overlap
/// by `shared_tokens / (shared_tokens + class_tokens)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTaskConfig {
    pub shared_tokens: usize,
    /// Private tokens per class.
    pub class_tokens: usize,
    /// Tokens per document.
    pub doc_len: usize,
    /// Probability that a token is drawn from the class-private pool.
    pub own_token_prob: f64,
    pub majority_train: usize,
    pub minority_train: usize,
    pub holdout_per_class: usize,
    pub majority_label: String,
    pub minority_label: String,
    pub seed: u64,
}

impl Default for SyntheticTaskConfig {
    fn default() -> Self {
        SyntheticTaskConfig {
            shared_tokens: 40,
            class_tokens: 10,
            doc_len: 12,
            own_token_prob: 0.2,
            majority_train: 15,
            minority_train: 5,
            holdout_per_class: 100,
            majority_label: "world".to_string(),
            minority_label: "sports".to_string(),
            seed: 0,
        }
    }
}

impl SyntheticTaskConfig {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |msg: &str| Err(SyntheticError::InvalidConfig(msg.to_string()));
        if self.shared_tokens + self.class_tokens == 0 {
            return bad("vocabulary is empty");
        }
        if self.doc_len == 0 {
            return bad("doc_len must be positive");
        }
        if self.majority_train == 0 || self.minority_train == 0 || self.holdout_per_class == 0 {
            return bad("all split sizes must be positive");
        }
        if self.majority_train + self.minority_train >= HOLDOUT_ID_BASE as usize {
            return bad("training set too large for the id layout");
        }
        if !(0.0..=1.0).contains(&self.own_token_prob) || self.own_token_prob.is_nan() {
            return bad("own_token_prob must lie in [0, 1]");
        }
        if self.majority_label.trim().is_empty() || self.minority_label.trim().is_empty() {
            return bad("class labels must be non-empty");
        }
        if self.majority_label == self.minority_label {
            return bad("class labels must differ");
        }
        Ok(())
    }

    /// Fraction of each class's vocabulary shared with the other class.
    pub fn vocabulary_overlap(&self) -> f64 {
        self.shared_tokens as f64 / (self.shared_tokens + self.class_tokens) as f64
    }
}

/// A generated task: imbalanced training set plus a balanced holdout.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub train: Dataset,
    pub holdout: Dataset,
    pub majority_label: String,
    pub minority_label: String,
}

const HOLDOUT_ID_BASE: u64 = 10_000;

fn shared_vocab(cfg: &SyntheticTaskConfig) -> Vec<String> {
    (0..cfg.shared_tokens).map(|i| format!("w{i:02}")).collect()
}

fn class_vocab(cfg: &SyntheticTaskConfig, label: &str) -> Vec<String> {
    (0..cfg.class_tokens).map(|i| format!("{label}{i:02}")).collect()
}

fn draw_doc(shared: &[String], own: &[String], cfg: &SyntheticTaskConfig, rng: &mut StdRng) -> String {
    let mut tokens = Vec::with_capacity(cfg.doc_len);
    for _ in 0..cfg.doc_len {
        let pool = if !own.is_empty() && rng.random::<f64>() < cfg.own_token_prob {
            own
        } else {
            shared
        };
        tokens.push(pool[rng.random_range(0..pool.len())].clone());
    }
    tokens.join(" ")
}

/// Generates the task deterministically from `cfg.seed`. Training instances
/// come first majority then minority with ids from 0; holdout instances
/// alternate classes with ids from 10000.
pub fn synthetic_task(cfg: &SyntheticTaskConfig) -> Result<SyntheticTask, SyntheticError> {
    cfg.validate()?;
    let shared = shared_vocab(cfg);
    let majority = class_vocab(cfg, &cfg.majority_label);
    let minority = class_vocab(cfg, &cfg.minority_label);

    let mut train_rng = StdRng::seed_from_u64(derive_seed(cfg.seed, 0, 0, 0));
    let mut train = Vec::new();
    for i in 0..cfg.majority_train {
        let text = draw_doc(&shared, &majority, cfg, &mut train_rng);
        train.push(LabeledInstance::new(i as u64, text, cfg.majority_label.clone()));
    }
    for i in 0..cfg.minority_train {
        let text = draw_doc(&shared, &minority, cfg, &mut train_rng);
        train.push(LabeledInstance::new(
            (cfg.majority_train + i) as u64,
            text,
            cfg.minority_label.clone(),
        ));
    }

    let mut holdout_rng = StdRng::seed_from_u64(derive_seed(cfg.seed, 1, 0, 0));
    let mut holdout = Vec::new();
    for i in 0..cfg.holdout_per_class {
        let text = draw_doc(&shared, &majority, cfg, &mut holdout_rng);
        holdout.push(LabeledInstance::new(
            HOLDOUT_ID_BASE + 2 * i as u64,
            text,
            cfg.majority_label.clone(),
        ));
        let text = draw_doc(&shared, &minority, cfg, &mut holdout_rng);
        holdout.push(LabeledInstance::new(
            HOLDOUT_ID_BASE + 2 * i as u64 + 1,
            text,
            cfg.minority_label.clone(),
        ));
    }

    Ok(SyntheticTask {
        train: Dataset::new(train),
        holdout: Dataset::new(holdout),
        majority_label: cfg.majority_label.clone(),
        minority_label: cfg.minority_label.clone(),
    })
}
