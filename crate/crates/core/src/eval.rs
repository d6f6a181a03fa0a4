//! Evaluation harness: train/evaluate pluggable classifiers under baseline
//! and augmented conditions over repeated seeded runs, then summarize as
//! mean/SD/best tables and additive delta tables.
//!
//! Protocol note: classifiers are fit with two corpora. `train` is the
//! supervised set for the condition under test; `encoder_corpus` carries all
//! task data — including augmented instances — and is identical across
//! conditions, so encoder statistics never favor one condition.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dataset, LabeledInstance};
use crate::embed::{EmbedError, Embedding, EmbeddingModel, ReferenceHashingEmbedder};
use crate::filter::{distance, Metric};
use crate::hash::fnv1a64_hex;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("length mismatch: {predictions} predictions vs {truth} truth labels")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("training data has only class {0:?}; need at least two classes")]
    SingleClass(String),
    #[error("class {0:?} embeds to a zero centroid; its texts carry no tokens")]
    DegenerateClass(String),
    #[error("condition {condition} listed more than once")]
    DuplicateCondition { condition: Condition },
    #[error("run failed (condition {condition}, seed {seed}): {message}")]
    Run {
        condition: Condition,
        seed: u64,
        message: String,
    },
    #[error("dataset {dataset:?} has no {missing} summary to compare")]
    MissingCounterpart {
        dataset: String,
        missing: &'static str,
    },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("classifier error: {0}")]
    Classifier(String),
}

/// Experimental condition a training set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    /// Unaugmented training data.
    Baseline,
    /// Easy-data-augmentation word-edit baseline.
    Eda,
    /// Generative augmentation.
    TextGen,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Condition::Baseline => "baseline",
            Condition::Eda => "eda",
            Condition::TextGen => "textgen",
        };
        f.write_str(s)
    }
}

/// Which metric a table or delta refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Accuracy,
    F1,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::F1 => "f1",
        })
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

fn check_lengths<A: AsRef<str>, B: AsRef<str>>(
    predictions: &[A],
    truth: &[B],
) -> Result<(), EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::Empty("predictions"));
    }
    if predictions.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    Ok(())
}

/// Fraction of positions where prediction equals truth.
pub fn accuracy<A: AsRef<str>, B: AsRef<str>>(
    predictions: &[A],
    truth: &[B],
) -> Result<f64, EvalError> {
    check_lengths(predictions, truth)?;
    let matches = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p.as_ref() == t.as_ref())
        .count();
    Ok(matches as f64 / predictions.len() as f64)
}

/// Binary F1 for `positive`: 2·TP / (2·TP + FP + FN), computed with a single
/// division so fixture values match hand arithmetic bit-for-bit. Returns 0
/// when the denominator is zero (no positive predictions and no positive
/// truths).
pub fn f1_binary<A: AsRef<str>, B: AsRef<str>>(
    predictions: &[A],
    truth: &[B],
    positive: &str,
) -> Result<f64, EvalError> {
    check_lengths(predictions, truth)?;
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for (p, t) in predictions.iter().zip(truth) {
        let p_pos = p.as_ref() == positive;
        let t_pos = t.as_ref() == positive;
        match (p_pos, t_pos) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        return Ok(0.0);
    }
    Ok((2 * tp) as f64 / denom as f64)
}

/// Unweighted mean of per-class binary F1 over every label seen in either
/// list.
pub fn f1_macro<A: AsRef<str>, B: AsRef<str>>(
    predictions: &[A],
    truth: &[B],
) -> Result<f64, EvalError> {
    check_lengths(predictions, truth)?;
    let labels: BTreeSet<&str> = predictions
        .iter()
        .map(|p| p.as_ref())
        .chain(truth.iter().map(|t| t.as_ref()))
        .collect();
    let mut total = 0.0;
    for label in &labels {
        total += f1_binary(predictions, truth, label)?;
    }
    Ok(total / labels.len() as f64)
}

// ---------------------------------------------------------------------------
// Classifier interfaces
// ---------------------------------------------------------------------------

/// A fitted classifier.
pub trait Classifier: Send + Sync {
    fn predict_batch(&self, texts: &[&str]) -> Result<Vec<String>, EvalError>;
}

/// A classifier recipe that can be fit repeatedly. `train` is the supervised
/// set for one condition; `encoder_corpus` is the full task corpus shared by
/// every condition. Implementations must be deterministic given the seed.
pub trait ClassifierSpec: Send + Sync {
    fn fit(
        &self,
        train: &Dataset,
        encoder_corpus: &Dataset,
        seed: u64,
    ) -> Result<Box<dyn Classifier>, EvalError>;
    fn name(&self) -> String;
}

/// Recipe for the built-in nearest-class-centroid classifier over hashing
/// embeddings.
#[derive(Debug, Clone)]
pub struct CentroidClassifierSpec {
    dim: usize,
}

impl CentroidClassifierSpec {
    pub fn new(dim: usize) -> Result<Self, EvalError> {
        if dim == 0 {
            return Err(EvalError::Empty("embedding dimension"));
        }
        Ok(CentroidClassifierSpec { dim })
    }
}

/// The default desk-scale classifier: hashing embeddings, one centroid per
/// class, nearest centroid by cosine distance. Fits in well under a second on
/// ten thousand instances.
pub fn reference_classifier() -> CentroidClassifierSpec {
    CentroidClassifierSpec { dim: 256 }
}

/// Fitted nearest-centroid classifier.
pub struct CentroidClassifier {
    centroids: BTreeMap<String, Embedding>,
    majority: String,
    embedder: ReferenceHashingEmbedder,
    encoder_fingerprint: String,
}

impl CentroidClassifier {
    /// Hash of the encoder corpus this classifier was fit with. The hashing
    /// encoder itself is parameter-free, so the corpus only feeds this
    /// fingerprint; it exists so the shared-encoder protocol is observable.
    pub fn encoder_fingerprint(&self) -> &str {
        &self.encoder_fingerprint
    }

    pub fn centroids(&self) -> &BTreeMap<String, Embedding> {
        &self.centroids
    }
}

impl ClassifierSpec for CentroidClassifierSpec {
    fn fit(
        &self,
        train: &Dataset,
        encoder_corpus: &Dataset,
        _seed: u64,
    ) -> Result<Box<dyn Classifier>, EvalError> {
        if train.is_empty() {
            return Err(EvalError::Empty("training set"));
        }
        let classes = train.classes();
        if classes.len() < 2 {
            return Err(EvalError::SingleClass(classes[0].clone()));
        }
        let embedder =
            ReferenceHashingEmbedder::new(self.dim).map_err(|e| EvalError::Classifier(e.to_string()))?;
        let mut centroids = BTreeMap::new();
        for label in &classes {
            let members = train.of_class(label);
            let mut sum = vec![0.0; self.dim];
            for inst in &members {
                let v = embedder.embed(&inst.text)?;
                for (s, x) in sum.iter_mut().zip(v.values()) {
                    *s += x;
                }
            }
            let n = members.len() as f64;
            for s in &mut sum {
                *s /= n;
            }
            let centroid = Embedding::new(sum).map_err(|e| EvalError::Classifier(e.to_string()))?;
            if centroid.is_zero() {
                return Err(EvalError::DegenerateClass(label.clone()));
            }
            centroids.insert(label.clone(), centroid);
        }
        let mut majority = String::new();
        let mut majority_count = 0usize;
        for (label, count) in train.class_counts() {
            if count > majority_count {
                majority = label;
                majority_count = count;
            }
        }
        Ok(Box::new(CentroidClassifier {
            centroids,
            majority,
            embedder,
            encoder_fingerprint: fnv1a64_hex(encoder_corpus.to_jsonl().as_bytes()),
        }))
    }

    fn name(&self) -> String {
        format!("centroid-hashing-{}", self.dim)
    }
}

impl Classifier for CentroidClassifier {
    fn predict_batch(&self, texts: &[&str]) -> Result<Vec<String>, EvalError> {
        let mut out = Vec::with_capacity(texts.len());
        for text in texts {
            let v = self.embedder.embed(text)?;
            if v.is_zero() {
                // A text with no tokens has no direction; fall back to the
                // most frequent training class.
                out.push(self.majority.clone());
                continue;
            }
            let mut best: Option<(f64, &String)> = None;
            for (label, centroid) in &self.centroids {
                let d = distance(&v, centroid, Metric::CosineDistance)
                    .map_err(|e| EvalError::Classifier(e.to_string()))?;
                // Strict comparison keeps the lexicographically first label
                // on exact ties.
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, label));
                }
            }
            out.push(best.expect("at least two centroids").1.clone());
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Repeated runs
// ---------------------------------------------------------------------------

/// One classifier evaluation: metrics on the holdout after one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub condition: Condition,
    pub seed: u64,
    pub accuracy: f64,
    pub f1: f64,
}

/// One condition's train set plus the fixed evaluation context.
#[derive(Debug, Clone)]
pub struct EvalTask {
    pub condition: Condition,
    pub train: Dataset,
    pub holdout: Dataset,
    pub encoder_corpus: Dataset,
    /// Class used for binary F1 (typically the minority class).
    pub positive_label: String,
}

/// Fits and evaluates `n_runs` times with seeds `base_seed..base_seed+n_runs`,
/// one result per seed in seed order. Runs are independent, so any schedule
/// would produce the same ordered results; this implementation is sequential.
pub fn repeated_runs(
    task: &EvalTask,
    spec: &dyn ClassifierSpec,
    n_runs: u32,
    base_seed: u64,
) -> Result<Vec<RunResult>, EvalError> {
    if n_runs == 0 {
        return Err(EvalError::Empty("n_runs"));
    }
    if task.holdout.is_empty() {
        return Err(EvalError::Empty("holdout set"));
    }
    let texts: Vec<&str> = task.holdout.iter().map(|i| i.text.as_str()).collect();
    let truth: Vec<&str> = task.holdout.iter().map(|i| i.label.as_str()).collect();
    let mut results = Vec::with_capacity(n_runs as usize);
    for offset in 0..u64::from(n_runs) {
        let seed = base_seed + offset;
        let wrap = |e: EvalError| EvalError::Run {
            condition: task.condition,
            seed,
            message: e.to_string(),
        };
        let classifier = spec.fit(&task.train, &task.encoder_corpus, seed).map_err(wrap)?;
        let predictions = classifier.predict_batch(&texts).map_err(wrap)?;
        results.push(RunResult {
            condition: task.condition,
            seed,
            accuracy: accuracy(&predictions, &truth)?,
            f1: f1_binary(&predictions, &truth, &task.positive_label)?,
        });
    }
    Ok(results)
}

// ---------------------------------------------------------------------------
// Summaries and deltas
// ---------------------------------------------------------------------------

/// Mean, population standard deviation, and best (max) of one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub sd: f64,
    pub best: f64,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        MetricSummary {
            mean,
            sd: var.sqrt(),
            best,
        }
    }

    /// "0.5581 (0.0463)" — four decimals, SD in parentheses.
    pub fn formatted(&self) -> String {
        format_avg_sd(self.mean, self.sd)
    }
}

/// Per-condition summary over repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub n_runs: usize,
    pub accuracy: MetricSummary,
    pub f1: MetricSummary,
}

impl ConditionSummary {
    pub fn metric(&self, kind: MetricKind) -> &MetricSummary {
        match kind {
            MetricKind::Accuracy => &self.accuracy,
            MetricKind::F1 => &self.f1,
        }
    }
}

/// Summaries for every condition present in a result list, in fixed
/// condition order (baseline, eda, textgen).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub conditions: Vec<ConditionSummary>,
}

impl MetricsTable {
    pub fn condition(&self, condition: Condition) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|c| c.condition == condition)
    }
}

/// Groups results by condition and reduces each metric to mean / population
/// SD / best.
pub fn summarize(results: &[RunResult]) -> Result<MetricsTable, EvalError> {
    if results.is_empty() {
        return Err(EvalError::Empty("results"));
    }
    let mut grouped: BTreeMap<Condition, Vec<&RunResult>> = BTreeMap::new();
    for r in results {
        grouped.entry(r.condition).or_default().push(r);
    }
    let conditions = grouped
        .into_iter()
        .map(|(condition, runs)| {
            let acc: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
            let f1: Vec<f64> = runs.iter().map(|r| r.f1).collect();
            let summary = ConditionSummary {
                condition,
                n_runs: runs.len(),
                accuracy: MetricSummary::from_values(&acc),
                f1: MetricSummary::from_values(&f1),
            };
            debug_assert!(summary.accuracy.best >= summary.accuracy.mean - 3.0 * summary.accuracy.sd);
            debug_assert!(summary.f1.best >= summary.f1.mean - 3.0 * summary.f1.sd);
            summary
        })
        .collect();
    Ok(MetricsTable { conditions })
}

/// Additive percentage-point difference of one augmented condition against
/// baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub dataset: String,
    pub condition: Condition,
    pub metric: MetricKind,
    /// (augmented mean − baseline mean) × 100.
    pub delta_avg: f64,
    /// (augmented best − baseline best) × 100.
    pub delta_best: f64,
}

/// Computes mean/best deltas versus baseline for every non-baseline condition
/// of every dataset. Each table must contain a baseline summary and at least
/// one augmented summary.
pub fn delta_table(
    entries: &[(String, MetricsTable)],
    metric: MetricKind,
) -> Result<Vec<DeltaRow>, EvalError> {
    let mut rows = Vec::new();
    for (dataset, table) in entries {
        let baseline = table
            .condition(Condition::Baseline)
            .ok_or(EvalError::MissingCounterpart {
                dataset: dataset.clone(),
                missing: "baseline",
            })?
            .metric(metric);
        let augmented: Vec<&ConditionSummary> = table
            .conditions
            .iter()
            .filter(|c| c.condition != Condition::Baseline)
            .collect();
        if augmented.is_empty() {
            return Err(EvalError::MissingCounterpart {
                dataset: dataset.clone(),
                missing: "augmented",
            });
        }
        for summary in augmented {
            let m = summary.metric(metric);
            rows.push(DeltaRow {
                dataset: dataset.clone(),
                condition: summary.condition,
                metric,
                delta_avg: (m.mean - baseline.mean) * 100.0,
                delta_best: (m.best - baseline.best) * 100.0,
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Formatting and rendering
// ---------------------------------------------------------------------------

/// "0.5581 (0.0463)"
pub fn format_avg_sd(mean: f64, sd: f64) -> String {
    format!("{mean:.4} ({sd:.4})")
}

/// "+15.53" / "-2.54" — percentage points with explicit sign.
pub fn format_delta(pp: f64) -> String {
    format!("{pp:+.2}")
}

fn render_columns(rows: &[Vec<String>]) -> String {
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0usize; width];
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(cell);
            if i + 1 < row.len() {
                for _ in cell.len()..widths[i] {
                    line.push(' ');
                }
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Plain-text table with one column per condition and AVG (SD) / Best rows.
pub fn render_metrics_table(dataset: &str, table: &MetricsTable, metric: MetricKind) -> String {
    let mut header = vec![format!("Dataset ({metric})"), "Run".to_string()];
    for c in &table.conditions {
        header.push(c.condition.to_string());
    }
    let mut avg_row = vec![dataset.to_string(), "AVG (SD)".to_string()];
    let mut best_row = vec![String::new(), "Best".to_string()];
    for c in &table.conditions {
        let m = c.metric(metric);
        avg_row.push(m.formatted());
        best_row.push(format!("{:.4}", m.best));
    }
    render_columns(&[header, avg_row, best_row])
}

/// Plain-text delta table: dataset, metric, condition, AVG and Best deltas in
/// percentage points.
pub fn render_delta_table(rows: &[DeltaRow]) -> String {
    let mut table = vec![vec![
        "Dataset".to_string(),
        "Metric".to_string(),
        "Condition".to_string(),
        "Delta AVG".to_string(),
        "Delta Best".to_string(),
    ]];
    for row in rows {
        table.push(vec![
            row.dataset.clone(),
            row.metric.to_string(),
            row.condition.to_string(),
            format_delta(row.delta_avg),
            format_delta(row.delta_best),
        ]);
    }
    render_columns(&table)
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

/// Full evaluation output: raw runs plus summaries, serializable as JSON and
/// renderable as text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset: String,
    pub classifier: String,
    pub positive_label: String,
    pub n_runs: u32,
    pub base_seed: u64,
    /// How SD is computed ("population": divide by n).
    pub sd_definition: String,
    pub runs: Vec<RunResult>,
    pub summary: MetricsTable,
}

impl EvaluationReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{} — {} runs per condition, seeds {}..{}, {} SD, positive label {:?}\n\n",
            self.dataset,
            self.n_runs,
            self.base_seed,
            self.base_seed + u64::from(self.n_runs),
            self.sd_definition,
            self.positive_label,
        ));
        out.push_str(&render_metrics_table(&self.dataset, &self.summary, MetricKind::Accuracy));
        out.push('\n');
        out.push_str(&render_metrics_table(&self.dataset, &self.summary, MetricKind::F1));
        out
    }
}

/// Union of every condition's training instances, deduplicated by id and
/// ordered by id. This is the corpus handed to every fit call as
/// `encoder_corpus`, so all conditions see identical encoder data. The
/// holdout is never included.
pub fn encoder_corpus_for(conditions: &[(Condition, Dataset)]) -> Dataset {
    let mut by_id: BTreeMap<u64, LabeledInstance> = BTreeMap::new();
    for (_, dataset) in conditions {
        for inst in dataset.iter() {
            by_id.entry(inst.id).or_insert_with(|| inst.clone());
        }
    }
    Dataset::new(by_id.into_values().collect())
}

/// Evaluates every condition with the shared encoder corpus and one holdout,
/// producing a single report. Results are grouped per condition in input
/// order and ordered by seed within each condition.
pub fn evaluate_conditions(
    dataset_name: &str,
    conditions: &[(Condition, Dataset)],
    holdout: &Dataset,
    spec: &dyn ClassifierSpec,
    positive_label: &str,
    n_runs: u32,
    base_seed: u64,
) -> Result<EvaluationReport, EvalError> {
    if conditions.is_empty() {
        return Err(EvalError::Empty("conditions"));
    }
    let mut seen = BTreeSet::new();
    for (condition, _) in conditions {
        if !seen.insert(*condition) {
            return Err(EvalError::DuplicateCondition {
                condition: *condition,
            });
        }
    }
    let encoder_corpus = encoder_corpus_for(conditions);
    let mut runs = Vec::new();
    for (condition, train) in conditions {
        let task = EvalTask {
            condition: *condition,
            train: train.clone(),
            holdout: holdout.clone(),
            encoder_corpus: encoder_corpus.clone(),
            positive_label: positive_label.to_string(),
        };
        runs.extend(repeated_runs(&task, spec, n_runs, base_seed)?);
    }
    let summary = summarize(&runs)?;
    Ok(EvaluationReport {
        dataset: dataset_name.to_string(),
        classifier: spec.name(),
        positive_label: positive_label.to_string(),
        n_runs,
        base_seed,
        sd_definition: "population".to_string(),
        runs,
        summary,
    })
}
