//! Labeled text datasets stored as JSONL.
//!
//! One JSON object per line: `{"text": ..., "label": ..., "title"?: ...,
//! "id"?: ...}`. Unknown fields are preserved verbatim through load/save.
//! Instances without an explicit `id` get their zero-based record position;
//! duplicate ids are rejected so that downstream provenance (`source_id`)
//! stays unambiguous.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{origin}:{line}: invalid record: {message}")]
    Schema {
        origin: String,
        line: usize,
        message: String,
    },
    #[error("{origin}:{line}: {message}")]
    Validation {
        origin: String,
        line: usize,
        message: String,
    },
    #[error("dataset is empty")]
    Empty,
    #[error("holdout fraction must be in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("class {label:?} has {count} instance(s); need at least 2 to split")]
    ClassTooSmall { label: String, count: usize },
    #[error("cannot subsample {requested} instances from {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("sample size {requested} is smaller than the number of classes ({classes})")]
    SampleTooSmall { requested: usize, classes: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One labeled text instance. `text` and `title` are stored
/// whitespace-trimmed; `extra` carries any unrecognized JSON fields so that
/// saving a loaded dataset loses nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub id: u64,
    pub text: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl LabeledInstance {
    pub fn new(id: u64, text: impl Into<String>, label: impl Into<String>) -> Self {
        LabeledInstance {
            id,
            text: text.into().trim().to_string(),
            label: label.into(),
            title: None,
            extra: serde_json::Map::new(),
        }
    }

    pub fn with_title(mut self, title: impl Into<String>) -> Self {
        self.title = Some(title.into().trim().to_string());
        self
    }
}

/// An ordered collection of labeled instances. Order is file order and is
/// preserved by every operation in this module.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub instances: Vec<LabeledInstance>,
}

/// Raw JSONL record shape; ids are optional in files.
#[derive(Deserialize)]
struct RawRecord {
    text: String,
    label: String,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    id: Option<u64>,
    #[serde(flatten)]
    extra: serde_json::Map<String, serde_json::Value>,
}

impl Dataset {
    pub fn new(instances: Vec<LabeledInstance>) -> Self {
        Dataset { instances }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledInstance> {
        self.instances.iter()
    }

    /// Distinct labels in lexicographic order.
    pub fn classes(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.instances.iter().map(|i| i.label.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// Instance count per label, keyed in lexicographic order.
    pub fn class_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for inst in &self.instances {
            *counts.entry(inst.label.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// All instances carrying the given label, in dataset order.
    pub fn of_class(&self, label: &str) -> Vec<&LabeledInstance> {
        self.instances.iter().filter(|i| i.label == label).collect()
    }

    pub fn max_id(&self) -> Option<u64> {
        self.instances.iter().map(|i| i.id).max()
    }

    /// Parses JSONL text. `origin` names the source in error messages
    /// (a path for files, e.g. `<memory>` for strings). Blank lines are
    /// skipped; record positions (for implicit ids) count records, while
    /// error messages report 1-based physical line numbers.
    pub fn from_jsonl_named(data: &str, origin: &str) -> Result<Self, CorpusError> {
        let mut instances = Vec::new();
        let mut seen_ids: HashSet<u64> = HashSet::new();
        let mut record_index: u64 = 0;
        for (line_idx, line) in data.lines().enumerate() {
            let line_no = line_idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord =
                serde_json::from_str(line).map_err(|e| CorpusError::Schema {
                    origin: origin.to_string(),
                    line: line_no,
                    message: e.to_string(),
                })?;
            let text = raw.text.trim().to_string();
            if text.is_empty() {
                return Err(CorpusError::Validation {
                    origin: origin.to_string(),
                    line: line_no,
                    message: "text must be non-empty".to_string(),
                });
            }
            if raw.label.trim().is_empty() {
                return Err(CorpusError::Validation {
                    origin: origin.to_string(),
                    line: line_no,
                    message: "label must be non-empty".to_string(),
                });
            }
            let id = raw.id.unwrap_or(record_index);
            if !seen_ids.insert(id) {
                return Err(CorpusError::Validation {
                    origin: origin.to_string(),
                    line: line_no,
                    message: format!("duplicate id {id}"),
                });
            }
            instances.push(LabeledInstance {
                id,
                text,
                label: raw.label,
                title: raw.title.map(|t| t.trim().to_string()),
                extra: raw.extra,
            });
            record_index += 1;
        }
        Ok(Dataset { instances })
    }

    pub fn from_jsonl(data: &str) -> Result<Self, CorpusError> {
        Self::from_jsonl_named(data, "<memory>")
    }

    /// Serializes to JSONL with a trailing newline (empty string for an
    /// empty dataset). Field order and `extra` key order are deterministic,
    /// so equal datasets serialize byte-identically.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for inst in &self.instances {
            let line = serde_json::to_string(inst).expect("instance serializes");
            let _ = writeln!(out, "{line}");
        }
        out
    }
}

/// Loads a JSONL dataset from disk. Fails on unreadable files, malformed
/// records (with the offending line number), empty text or labels, and
/// duplicate ids.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    let data = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Dataset::from_jsonl_named(&data, &path.display().to_string())
}

/// Writes a dataset as JSONL.
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    std::fs::write(path, dataset.to_jsonl()).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parameters for [`split_holdout`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HoldoutSpec {
    /// Fraction of each class moved to the holdout set, in (0, 1).
    pub fraction: f64,
    pub seed: u64,
}

/// Stratified train/holdout split. Each class contributes
/// `floor(class_size * fraction)` instances to the holdout set, chosen by a
/// seeded shuffle; both outputs preserve original dataset order. Classes are
/// visited in lexicographic order over one RNG stream, so the split is a
/// pure function of `(dataset, spec)`.
pub fn split_holdout(dataset: &Dataset, spec: &HoldoutSpec) -> Result<(Dataset, Dataset), CorpusError> {
    if dataset.is_empty() {
        return Err(CorpusError::Empty);
    }
    if !(spec.fraction > 0.0 && spec.fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(spec.fraction));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (idx, inst) in dataset.instances.iter().enumerate() {
        by_class.entry(inst.label.as_str()).or_default().push(idx);
    }
    for (label, idxs) in &by_class {
        if idxs.len() < 2 {
            return Err(CorpusError::ClassTooSmall {
                label: (*label).to_string(),
                count: idxs.len(),
            });
        }
    }
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let mut holdout_idx: BTreeSet<usize> = BTreeSet::new();
    for idxs in by_class.values() {
        let mut shuffled = idxs.clone();
        shuffled.shuffle(&mut rng);
        let take = (idxs.len() as f64 * spec.fraction).floor() as usize;
        holdout_idx.extend(shuffled.into_iter().take(take));
    }
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for (idx, inst) in dataset.instances.iter().enumerate() {
        if holdout_idx.contains(&idx) {
            holdout.push(inst.clone());
        } else {
            train.push(inst.clone());
        }
    }
    Ok((Dataset::new(train), Dataset::new(holdout)))
}

/// Stratified subsample of exactly `n` instances, used to simulate low-data
/// regimes. Per-class quotas follow largest-remainder apportionment computed
/// in exact integer arithmetic, so each class deviates from its exact
/// proportion by less than one instance; remainder ties go to the larger
/// class, then to the lexicographically smaller label. Output preserves
/// dataset order. `subsample_low_data(d, d.len(), _)` is the identity.
pub fn subsample_low_data(dataset: &Dataset, n: usize, seed: u64) -> Result<Dataset, CorpusError> {
    let total = dataset.len();
    if n > total {
        return Err(CorpusError::SampleTooLarge {
            requested: n,
            available: total,
        });
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (idx, inst) in dataset.instances.iter().enumerate() {
        by_class.entry(inst.label.as_str()).or_default().push(idx);
    }
    if n < by_class.len() {
        return Err(CorpusError::SampleTooSmall {
            requested: n,
            classes: by_class.len(),
        });
    }
    // Exact integer apportionment: quota = floor(n * count / total), then the
    // leftover seats go to the largest fractional remainders.
    let mut quotas: BTreeMap<&str, usize> = BTreeMap::new();
    let mut remainders: Vec<(u128, usize, &str)> = Vec::new(); // (remainder, count, label)
    let mut assigned = 0usize;
    for (label, idxs) in &by_class {
        let exact_num = n as u128 * idxs.len() as u128;
        let quota = (exact_num / total as u128) as usize;
        let rem = exact_num % total as u128;
        quotas.insert(label, quota);
        remainders.push((rem, idxs.len(), label));
        assigned += quota;
    }
    remainders.sort_by(|a, b| {
        b.0.cmp(&a.0) // larger remainder first
            .then(b.1.cmp(&a.1)) // then larger class
            .then(a.2.cmp(b.2)) // then lexicographically smaller label
    });
    for (_, _, label) in remainders.iter().take(n - assigned) {
        *quotas.get_mut(label).expect("label present") += 1;
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut chosen: BTreeSet<usize> = BTreeSet::new();
    for (label, idxs) in &by_class {
        let mut shuffled = idxs.clone();
        shuffled.shuffle(&mut rng);
        chosen.extend(shuffled.into_iter().take(quotas[label]));
    }
    let instances = dataset
        .instances
        .iter()
        .enumerate()
        .filter(|(idx, _)| chosen.contains(idx))
        .map(|(_, inst)| inst.clone())
        .collect();
    Ok(Dataset::new(instances))
}

/// Uniform (non-stratified) subsample of exactly `n` instances, preserving
/// dataset order. Companion to [`subsample_low_data`] for callers that want
/// class proportions left to chance.
pub fn subsample_random(dataset: &Dataset, n: usize, seed: u64) -> Result<Dataset, CorpusError> {
    let total = dataset.len();
    if n > total {
        return Err(CorpusError::SampleTooLarge {
            requested: n,
            available: total,
        });
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut idxs: Vec<usize> = (0..total).collect();
    idxs.shuffle(&mut rng);
    let chosen: BTreeSet<usize> = idxs.into_iter().take(n).collect();
    let instances = dataset
        .instances
        .iter()
        .enumerate()
        .filter(|(idx, _)| chosen.contains(idx))
        .map(|(_, inst)| inst.clone())
        .collect();
    Ok(Dataset::new(instances))
}

/// Label with the fewest instances; ties break to the lexicographically
/// smaller label.
pub fn minority_class(dataset: &Dataset) -> Result<String, CorpusError> {
    if dataset.is_empty() {
        return Err(CorpusError::Empty);
    }
    let counts = dataset.class_counts();
    let (label, _) = counts
        .iter()
        .min_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(b.0)))
        .expect("non-empty counts");
    Ok(label.clone())
}

/// Rewrites each instance's text with explicit title/body markers:
/// `xxtitle {title} xxbodytext {text}` when a title is present, otherwise
/// `xxbodytext {text}`. Used for news-style corpora where the title carries
/// class signal; off by default everywhere.
pub fn apply_news_markup(dataset: &Dataset) -> Dataset {
    let instances = dataset
        .instances
        .iter()
        .map(|inst| {
            let mut out = inst.clone();
            out.text = match &inst.title {
                Some(title) if !title.is_empty() => {
                    format!("xxtitle {title} xxbodytext {}", inst.text)
                }
                _ => format!("xxbodytext {}", inst.text),
            };
            out
        })
        .collect();
    Dataset::new(instances)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced(per_class: usize, labels: &[&str]) -> Dataset {
        let mut instances = Vec::new();
        let mut id = 0;
        for label in labels {
            for k in 0..per_class {
                instances.push(LabeledInstance::new(id, format!("{label} text {k}"), *label));
                id += 1;
            }
        }
        Dataset::new(instances)
    }

    /// Dataset with the given per-class sizes, interleaved in file order.
    fn sized(counts: &[(&str, usize)]) -> Dataset {
        let mut instances = Vec::new();
        let mut id = 0;
        let max = counts.iter().map(|(_, c)| *c).max().unwrap_or(0);
        for k in 0..max {
            for (label, count) in counts {
                if k < *count {
                    instances.push(LabeledInstance::new(id, format!("{label} doc {k}"), *label));
                    id += 1;
                }
            }
        }
        Dataset::new(instances)
    }

    #[test]
    fn loads_two_records_with_assigned_ids() {
        let data = r#"{"text": "good film", "label": "positive"}
{"text": "bad film", "label": "negative"}
"#;
        let d = Dataset::from_jsonl(data).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.classes(), vec!["negative".to_string(), "positive".to_string()]);
        assert_eq!(d.instances[0].id, 0);
        assert_eq!(d.instances[1].id, 1);
        assert_eq!(d.instances[0].text, "good film");
    }

    #[test]
    fn missing_label_is_schema_error_with_line() {
        let data = "{\"text\": \"ok\", \"label\": \"a\"}\n{\"text\": \"no label\"}\n";
        let err = Dataset::from_jsonl(data).unwrap_err();
        match err {
            CorpusError::Schema { line, .. } => assert_eq!(line, 2),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn empty_text_is_validation_error() {
        let data = "{\"text\": \"   \", \"label\": \"a\"}\n";
        let err = Dataset::from_jsonl(data).unwrap_err();
        match err {
            CorpusError::Validation { line, message, .. } => {
                assert_eq!(line, 1);
                assert!(message.contains("text"));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let data = "{\"text\": \"a\", \"label\": \"x\", \"id\": 7}\n{\"text\": \"b\", \"label\": \"x\", \"id\": 7}\n";
        let err = Dataset::from_jsonl(data).unwrap_err();
        match err {
            CorpusError::Validation { message, .. } => assert!(message.contains("duplicate id 7")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn implicit_and_explicit_id_collision_rejected() {
        // Record 0 takes id 0 implicitly; an explicit id 0 later collides.
        let data = "{\"text\": \"a\", \"label\": \"x\"}\n{\"text\": \"b\", \"label\": \"x\", \"id\": 0}\n";
        assert!(Dataset::from_jsonl(data).is_err());
    }

    #[test]
    fn text_and_title_are_trimmed() {
        let data = "{\"text\": \"  padded  \", \"label\": \"a\", \"title\": \" t \"}\n";
        let d = Dataset::from_jsonl(data).unwrap();
        assert_eq!(d.instances[0].text, "padded");
        assert_eq!(d.instances[0].title.as_deref(), Some("t"));
    }

    #[test]
    fn unknown_fields_survive_round_trip() {
        let data = "{\"text\":\"a\",\"label\":\"x\",\"source\":\"twitter\",\"score\":3}\n";
        let d = Dataset::from_jsonl(data).unwrap();
        assert_eq!(
            d.instances[0].extra.get("source"),
            Some(&serde_json::Value::String("twitter".into()))
        );
        let reloaded = Dataset::from_jsonl(&d.to_jsonl()).unwrap();
        assert_eq!(d, reloaded);
    }

    #[test]
    fn round_trip_is_identity_on_loaded_values() {
        let data = r#"{"text": "one", "label": "a", "title": "t1"}
{"text": "two", "label": "b", "id": 9}
{"text": "three", "label": "a"}
"#;
        let d = Dataset::from_jsonl(data).unwrap();
        let reloaded = Dataset::from_jsonl(&d.to_jsonl()).unwrap();
        assert_eq!(d, reloaded);
        // Serialization itself is stable.
        assert_eq!(d.to_jsonl(), reloaded.to_jsonl());
    }

    #[test]
    fn blank_lines_are_skipped() {
        let data = "{\"text\":\"a\",\"label\":\"x\"}\n\n{\"text\":\"b\",\"label\":\"x\"}\n";
        let d = Dataset::from_jsonl(data).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.instances[1].id, 1);
    }

    #[test]
    fn class_counts_on_skewed_corpus() {
        // Mirrors a crisis-events corpus shape: 1992 instances, 751 on-topic
        // vs 1241 off-topic.
        let d = sized(&[("on-topic", 751), ("off-topic", 1241)]);
        assert_eq!(d.len(), 1992);
        let counts = d.class_counts();
        assert_eq!(counts["on-topic"], 751);
        assert_eq!(counts["off-topic"], 1241);
        assert_eq!(minority_class(&d).unwrap(), "on-topic");
    }

    #[test]
    fn holdout_takes_floor_per_class() {
        // 2533 instances (1639 + 894) at fraction 0.2: floor gives
        // 327 + 178 = 505 held out, 2028 for training.
        let d = sized(&[("relevant", 1639), ("irrelevant", 894)]);
        let (train, holdout) = split_holdout(
            &d,
            &HoldoutSpec {
                fraction: 0.2,
                seed: 11,
            },
        )
        .unwrap();
        assert_eq!(holdout.len(), 505);
        assert_eq!(train.len(), 2028);
        let hc = holdout.class_counts();
        assert_eq!(hc["relevant"], 327);
        assert_eq!(hc["irrelevant"], 178);
    }

    #[test]
    fn holdout_balanced_small() {
        let d = balanced(5, &["a", "b"]);
        let (train, holdout) = split_holdout(
            &d,
            &HoldoutSpec {
                fraction: 0.2,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(holdout.len(), 2);
        assert_eq!(train.len(), 8);
        assert_eq!(holdout.class_counts()["a"], 1);
        assert_eq!(holdout.class_counts()["b"], 1);
    }

    #[test]
    fn holdout_is_deterministic_and_a_partition() {
        let d = sized(&[("a", 31), ("b", 17), ("c", 8)]);
        let spec = HoldoutSpec {
            fraction: 0.25,
            seed: 42,
        };
        let (t1, h1) = split_holdout(&d, &spec).unwrap();
        let (t2, h2) = split_holdout(&d, &spec).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(h1, h2);
        // Every instance appears exactly once across the two outputs.
        let mut ids: Vec<u64> = t1.iter().map(|i| i.id).chain(h1.iter().map(|i| i.id)).collect();
        ids.sort_unstable();
        let mut expected: Vec<u64> = d.iter().map(|i| i.id).collect();
        expected.sort_unstable();
        assert_eq!(ids, expected);
    }

    #[test]
    fn holdout_outputs_preserve_dataset_order() {
        let d = sized(&[("a", 12), ("b", 9)]);
        let (train, holdout) = split_holdout(
            &d,
            &HoldoutSpec {
                fraction: 0.3,
                seed: 7,
            },
        )
        .unwrap();
        let pos = |id: u64| d.iter().position(|i| i.id == id).unwrap();
        for part in [&train, &holdout] {
            let positions: Vec<usize> = part.iter().map(|i| pos(i.id)).collect();
            assert!(positions.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn holdout_rejects_singleton_class() {
        let mut d = balanced(3, &["a"]);
        d.instances.push(LabeledInstance::new(99, "only one", "b"));
        let err = split_holdout(
            &d,
            &HoldoutSpec {
                fraction: 0.5,
                seed: 0,
            },
        )
        .unwrap_err();
        match err {
            CorpusError::ClassTooSmall { label, count } => {
                assert_eq!(label, "b");
                assert_eq!(count, 1);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn holdout_rejects_bad_fraction() {
        let d = balanced(5, &["a", "b"]);
        for f in [0.0, 1.0, -0.2, 1.5] {
            assert!(split_holdout(&d, &HoldoutSpec { fraction: f, seed: 0 }).is_err());
        }
    }

    #[test]
    fn subsample_keeps_proportions() {
        // 60/40 split, n = 10: exact quotas are 6 and 4.
        let d = sized(&[("maj", 60), ("min", 40)]);
        let s = subsample_low_data(&d, 10, 5).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s.class_counts()["maj"], 6);
        assert_eq!(s.class_counts()["min"], 4);
    }

    #[test]
    fn subsample_full_size_is_identity() {
        let d = sized(&[("a", 13), ("b", 7)]);
        let s = subsample_low_data(&d, d.len(), 123).unwrap();
        assert_eq!(s, d);
    }

    #[test]
    fn subsample_largest_remainder_tie_breaks() {
        // n = 3 over 3 equal classes: each gets exactly 1 (remainder 0).
        let d = sized(&[("a", 10), ("b", 10), ("c", 10)]);
        let s = subsample_low_data(&d, 3, 9).unwrap();
        let counts = s.class_counts();
        assert_eq!(counts["a"], 1);
        assert_eq!(counts["b"], 1);
        assert_eq!(counts["c"], 1);
        // n = 4: one leftover seat; remainders tie at 1/3 each, so the seat
        // goes to the lexicographically smallest label among equal sizes.
        let s = subsample_low_data(&d, 4, 9).unwrap();
        let counts = s.class_counts();
        assert_eq!(counts["a"], 2);
        assert_eq!(counts["b"], 1);
        assert_eq!(counts["c"], 1);
    }

    #[test]
    fn subsample_remainder_tie_prefers_larger_class() {
        // Sizes 30/10, n = 3: quotas 2.25 / 0.75 -> floors 2/0, leftover 1.
        // Remainders are 1/4 vs 3/4, so "min" gets the seat on remainder.
        let d = sized(&[("maj", 30), ("min", 10)]);
        let s = subsample_low_data(&d, 3, 1).unwrap();
        assert_eq!(s.class_counts()["maj"], 2);
        assert_eq!(s.class_counts()["min"], 1);
        // Sizes 20/20 with n = 3: floors 1/1, remainders equal, sizes equal,
        // label order decides.
        let d = sized(&[("x", 20), ("w", 20)]);
        let s = subsample_low_data(&d, 3, 1).unwrap();
        assert_eq!(s.class_counts()["w"], 2);
        assert_eq!(s.class_counts()["x"], 1);
    }

    #[test]
    fn subsample_proportion_deviation_below_one() {
        let d = sized(&[("a", 57), ("b", 31), ("c", 12)]);
        for n in [3, 10, 25, 50, 99] {
            let s = subsample_low_data(&d, n, 77).unwrap();
            assert_eq!(s.len(), n);
            for (label, count) in s.class_counts() {
                let exact = n as f64 * d.class_counts()[&label] as f64 / d.len() as f64;
                assert!(
                    (count as f64 - exact).abs() < 1.0,
                    "class {label}: got {count}, exact {exact}"
                );
            }
        }
    }

    #[test]
    fn subsample_is_deterministic_and_ordered() {
        let d = sized(&[("a", 40), ("b", 25)]);
        let s1 = subsample_low_data(&d, 13, 21).unwrap();
        let s2 = subsample_low_data(&d, 13, 21).unwrap();
        assert_eq!(s1, s2);
        let pos = |id: u64| d.iter().position(|i| i.id == id).unwrap();
        let positions: Vec<usize> = s1.iter().map(|i| pos(i.id)).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        // Different seed, different pick (overwhelmingly likely).
        let s3 = subsample_low_data(&d, 13, 22).unwrap();
        assert_ne!(s1, s3);
    }

    #[test]
    fn subsample_size_errors() {
        let d = balanced(5, &["a", "b"]);
        assert!(matches!(
            subsample_low_data(&d, 11, 0),
            Err(CorpusError::SampleTooLarge { .. })
        ));
        assert!(matches!(
            subsample_low_data(&d, 1, 0),
            Err(CorpusError::SampleTooSmall { .. })
        ));
    }

    #[test]
    fn subsample_random_is_uniform_and_sized() {
        let d = sized(&[("a", 30), ("b", 10)]);
        let s = subsample_random(&d, 12, 4).unwrap();
        assert_eq!(s.len(), 12);
        let s2 = subsample_random(&d, 12, 4).unwrap();
        assert_eq!(s, s2);
    }

    #[test]
    fn minority_class_tie_breaks_lexicographically() {
        let d = balanced(5, &["b", "a"]);
        assert_eq!(minority_class(&d).unwrap(), "a");
        assert!(minority_class(&Dataset::default()).is_err());
    }

    #[test]
    fn news_markup_wraps_title_and_body() {
        let mut d = Dataset::new(vec![
            LabeledInstance::new(0, "storm hits coast", "weather").with_title("Storm Warning"),
            LabeledInstance::new(1, "no title here", "other"),
        ]);
        d = apply_news_markup(&d);
        assert_eq!(d.instances[0].text, "xxtitle Storm Warning xxbodytext storm hits coast");
        assert_eq!(d.instances[1].text, "xxbodytext no title here");
    }
}
