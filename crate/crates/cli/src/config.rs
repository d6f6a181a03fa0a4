//! Configuration resolution: command-line flags override the JSON config
//! file, which overrides built-in defaults. The resolved [`Settings`] value
//! is serialized verbatim into run manifests, so two runs with equal
//! manifests ran under equal configuration.

use std::fmt;
use std::path::Path;

use clap::ValueEnum;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use augpipe::backend::reference::ReferenceMemorizingModel;
use augpipe::backend::{FinetuneConfig, GenerationParams};
use augpipe::filter::{CentroidFilterConfig, Metric};
use augpipe::pipeline::{AugmentationRequest, PrefixScheme, END_MARKER};

use crate::util::{validation, CliError};

/// How training strings are prefixed for class-conditional sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SchemeArg {
    /// Unique per-instance numbering inside the start marker.
    Independent,
    /// A shared textual context (title or leading words) steers sampling.
    Dependent,
    /// No steering context at all; samples start from the bare start marker.
    None,
}

/// Where a dependent-scheme context comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ContextArg {
    Title,
    FirstWords,
}

/// Distance metric for the centroid filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum MetricArg {
    Cosine,
    Euclidean,
}

impl MetricArg {
    pub fn to_metric(self) -> Metric {
        match self {
            MetricArg::Cosine => Metric::CosineDistance,
            MetricArg::Euclidean => Metric::Euclidean,
        }
    }
}

/// Which generative backend serves finetune/sample requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum BackendArg {
    /// In-process memorizing n-gram model.
    Reference,
    /// External process named by `AUGPIPE_BACKEND_CMD`.
    External,
}

/// Which embedding model the filter and calibration use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum EmbedderArg {
    /// In-process hashing bag-of-words embedder.
    Reference,
    /// The `embed` op of the external backend process.
    External,
}

/// A distance threshold that can be infinite. JSON cannot represent IEEE
/// infinity, so the serialized form is either a non-negative number or the
/// string `"inf"`; the flag form accepts the same spellings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaArg(pub f64);

impl DeltaArg {
    pub const INF: DeltaArg = DeltaArg(f64::INFINITY);

    pub fn parse(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(DeltaArg::INF);
        }
        let value: f64 = s
            .parse()
            .map_err(|_| format!("expected a non-negative number or \"inf\", got {s:?}"))?;
        if value.is_nan() || value < 0.0 {
            return Err(format!("threshold must be non-negative, got {s}"));
        }
        Ok(DeltaArg(value))
    }
}

impl fmt::Display for DeltaArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for DeltaArg {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for DeltaArg {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct DeltaVisitor;
        impl<'de> Visitor<'de> for DeltaVisitor {
            type Value = DeltaArg;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative number or the string \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<DeltaArg, E> {
                if v.is_nan() || v < 0.0 {
                    return Err(E::custom(format!("threshold must be non-negative, got {v}")));
                }
                Ok(DeltaArg(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<DeltaArg, E> {
                self.visit_f64(v as f64)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<DeltaArg, E> {
                self.visit_f64(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<DeltaArg, E> {
                DeltaArg::parse(v).map_err(E::custom)
            }
        }
        deserializer.deserialize_any(DeltaVisitor)
    }
}

/// Optional overrides from the JSON config file. Unknown keys are rejected so
/// typos fail loudly instead of silently using defaults.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scheme: Option<SchemeArg>,
    pub context: Option<ContextArg>,
    pub k: Option<usize>,
    pub n: Option<u32>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub delta: Option<DeltaArg>,
    pub metric: Option<MetricArg>,
    pub backend: Option<BackendArg>,
    pub embedder: Option<EmbedderArg>,
    pub order: Option<usize>,
    pub smoothing: Option<f64>,
    pub target_loss: Option<f64>,
    pub max_epochs: Option<u32>,
    pub runs: Option<u32>,
    pub seed: Option<u64>,
    pub keep_context: Option<bool>,
    pub retries: Option<u32>,
    pub dedup: Option<bool>,
    pub embed_dim: Option<usize>,
    pub eda_ops: Option<u32>,
    pub eda_alpha: Option<f64>,
    pub classes: Option<Vec<String>>,
}

/// Reads the JSON config file when one was given.
pub fn load_config(path: Option<&Path>) -> Result<Option<FileConfig>, CliError> {
    let Some(path) = path else { return Ok(None) };
    let data = std::fs::read_to_string(path)
        .map_err(|e| validation(format!("cannot read config {}: {e}", path.display())))?;
    let config: FileConfig = serde_json::from_str(&data)
        .map_err(|e| validation(format!("config {}: {e}", path.display())))?;
    Ok(Some(config))
}

/// Pipeline flags shared by the processing subcommands. Every field is
/// optional; an absent flag defers to the config file and then to the
/// built-in default.
#[derive(Debug, Clone, clap::Args)]
pub struct PipelineFlags {
    /// Prefix scheme: independent (per-instance numbering), dependent
    /// (shared context), or none (ablation: no steering).
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,

    /// Context source for --scheme dependent.
    #[arg(long, value_enum)]
    pub context: Option<ContextArg>,

    /// Leading words used as context with --context first_words.
    #[arg(long)]
    pub k: Option<usize>,

    /// Generated samples per source instance.
    #[arg(long)]
    pub n: Option<u32>,

    /// Sampling temperature in [0, 2]; 0 decodes greedily.
    #[arg(long)]
    pub temperature: Option<f64>,

    /// Maximum generated tokens per sample.
    #[arg(long)]
    pub max_tokens: Option<u32>,

    /// Centroid distance threshold; candidates at or beyond it are dropped.
    /// "inf" disables filtering.
    #[arg(long, value_parser = DeltaArg::parse)]
    pub delta: Option<DeltaArg>,

    /// Distance metric for the centroid filter.
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,

    /// Generative backend.
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,

    /// Embedding model.
    #[arg(long, value_enum)]
    pub embedder: Option<EmbedderArg>,

    /// N-gram order of the reference backend.
    #[arg(long)]
    pub order: Option<usize>,

    /// Additive smoothing mass of the reference backend.
    #[arg(long)]
    pub smoothing: Option<f64>,

    /// Finetuning stops once the reported loss reaches this value.
    #[arg(long)]
    pub target_loss: Option<f64>,

    /// Finetuning epoch cap.
    #[arg(long)]
    pub max_epochs: Option<u32>,

    /// Repeated evaluation runs per condition.
    #[arg(long)]
    pub runs: Option<u32>,

    /// Base seed: generation derives per-sample seeds from it, evaluation
    /// uses seeds seed..seed+runs.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Keep the steering context in generated texts (true) or emit the bare
    /// continuation (false).
    #[arg(long)]
    pub keep_context: Option<bool>,

    /// Extra attempts per sample slot when generation comes back empty.
    #[arg(long)]
    pub retries: Option<u32>,

    /// Drop generated texts that duplicate real instances or earlier
    /// candidates of the same class.
    #[arg(long, action = clap::ArgAction::SetTrue)]
    pub dedup: bool,

    /// Dimension of the reference hashing embedder.
    #[arg(long)]
    pub embed_dim: Option<usize>,

    /// Perturbed copies per instance for the eda subcommand.
    #[arg(long = "ops")]
    pub eda_ops: Option<u32>,

    /// Perturbation strength in (0, 1) for the eda subcommand.
    #[arg(long = "alpha")]
    pub eda_alpha: Option<f64>,

    /// Class label to process (repeatable; default: every class).
    #[arg(long = "class", action = clap::ArgAction::Append)]
    pub classes: Vec<String>,
}

/// Fully resolved configuration. Serialized into every run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub scheme: SchemeArg,
    pub context: ContextArg,
    pub k: usize,
    pub n: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    pub delta: DeltaArg,
    pub metric: MetricArg,
    pub backend: BackendArg,
    pub embedder: EmbedderArg,
    pub order: usize,
    pub smoothing: f64,
    pub target_loss: f64,
    pub max_epochs: u32,
    pub runs: u32,
    pub seed: u64,
    pub keep_context: bool,
    pub retries: u32,
    pub dedup: bool,
    pub embed_dim: usize,
    pub eda_ops: u32,
    pub eda_alpha: f64,
    pub classes: Option<Vec<String>>,
}

impl Settings {
    /// Applies flag > file > default, field by field.
    pub fn resolve(file: Option<&FileConfig>, flags: &PipelineFlags) -> Settings {
        let file = file.cloned().unwrap_or_default();
        Settings {
            scheme: flags.scheme.or(file.scheme).unwrap_or(SchemeArg::Independent),
            context: flags.context.or(file.context).unwrap_or(ContextArg::FirstWords),
            k: flags.k.or(file.k).unwrap_or(3),
            n: flags.n.or(file.n).unwrap_or(10),
            temperature: flags.temperature.or(file.temperature).unwrap_or(0.7),
            max_tokens: flags.max_tokens.or(file.max_tokens).unwrap_or(128),
            delta: flags.delta.or(file.delta).unwrap_or(DeltaArg::INF),
            metric: flags.metric.or(file.metric).unwrap_or(MetricArg::Cosine),
            backend: flags.backend.or(file.backend).unwrap_or(BackendArg::Reference),
            embedder: flags.embedder.or(file.embedder).unwrap_or(EmbedderArg::Reference),
            order: flags.order.or(file.order).unwrap_or(4),
            smoothing: flags.smoothing.or(file.smoothing).unwrap_or(0.02),
            target_loss: flags.target_loss.or(file.target_loss).unwrap_or(0.2),
            max_epochs: flags.max_epochs.or(file.max_epochs).unwrap_or(1000),
            runs: flags.runs.or(file.runs).unwrap_or(10),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            keep_context: flags.keep_context.or(file.keep_context).unwrap_or(true),
            retries: flags.retries.or(file.retries).unwrap_or(3),
            dedup: flags.dedup || file.dedup.unwrap_or(false),
            embed_dim: flags.embed_dim.or(file.embed_dim).unwrap_or(64),
            eda_ops: flags.eda_ops.or(file.eda_ops).unwrap_or(4),
            eda_alpha: flags.eda_alpha.or(file.eda_alpha).unwrap_or(0.1),
            classes: if flags.classes.is_empty() {
                file.classes
            } else {
                Some(flags.classes.clone())
            },
        }
    }

    /// Early validation so bad values fail before any work or file output.
    pub fn validate(&self) -> Result<(), CliError> {
        self.generation_params().validate().map_err(validation)?;
        self.finetune_config().validate().map_err(validation)?;
        self.reference_backend()?;
        self.prefix_scheme()?;
        self.filter_config()?;
        if self.n == 0 {
            return Err(validation("--n must be >= 1"));
        }
        if self.runs == 0 {
            return Err(validation("--runs must be >= 1"));
        }
        if self.embed_dim == 0 {
            return Err(validation("--embed-dim must be >= 1"));
        }
        if !(self.eda_alpha > 0.0 && self.eda_alpha < 1.0) {
            return Err(validation(format!(
                "--alpha must be in (0, 1), got {}",
                self.eda_alpha
            )));
        }
        if let Some(classes) = &self.classes {
            if classes.is_empty() {
                return Err(validation("class list must not be empty"));
            }
        }
        Ok(())
    }

    pub fn prefix_scheme(&self) -> Result<PrefixScheme, CliError> {
        match self.scheme {
            SchemeArg::Independent => Ok(PrefixScheme::ContextIndependent),
            SchemeArg::None => Ok(PrefixScheme::Plain),
            SchemeArg::Dependent => match self.context {
                ContextArg::Title => Ok(PrefixScheme::title()),
                ContextArg::FirstWords => {
                    if self.k == 0 {
                        return Err(validation("--k must be >= 1 with --context first_words"));
                    }
                    Ok(PrefixScheme::first_words(self.k))
                }
            },
        }
    }

    pub fn generation_params(&self) -> GenerationParams {
        GenerationParams {
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            stop_token: END_MARKER.to_string(),
        }
    }

    pub fn finetune_config(&self) -> FinetuneConfig {
        FinetuneConfig {
            target_loss: self.target_loss,
            max_epochs: self.max_epochs,
            seed: self.seed,
        }
    }

    pub fn filter_config(&self) -> Result<CentroidFilterConfig, CliError> {
        CentroidFilterConfig::new(self.delta.0, self.metric.to_metric()).map_err(validation)
    }

    pub fn reference_backend(&self) -> Result<ReferenceMemorizingModel, CliError> {
        ReferenceMemorizingModel::new(self.order)
            .and_then(|m| m.with_smoothing(self.smoothing))
            .map_err(validation)
    }

    /// The full pipeline request for `augment`.
    pub fn augmentation_request(
        &self,
        class_labels: Vec<String>,
    ) -> Result<AugmentationRequest, CliError> {
        Ok(AugmentationRequest {
            class_labels,
            scheme: self.prefix_scheme()?,
            finetune: self.finetune_config(),
            n_per_instance: self.n,
            params: self.generation_params(),
            keep_context: self.keep_context,
            retries: self.retries,
            filter: self.filter_config()?,
            dedup: self.dedup,
            run_seed: self.seed,
        })
    }

    /// JSON form recorded in manifests and hashed for resume checks.
    pub fn config_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("settings serialize")
    }
}
