//! Staged pipeline subcommands. Each stage reads the previous stage's
//! artifacts from the output directory and writes its own:
//!
//! - `prepare`   → `classes.json`, `prepared_<class>.jsonl`
//! - `finetune`  → `model_<class>.json`, `finetune_<class>.json`
//! - `generate`  → `candidates_<class>.jsonl` (one line per sample slot;
//!   interruptible and resumable)
//! - `filter`    → `kept_<class>.jsonl`, `discarded_<class>.jsonl`
//! - `calibrate` → `calibration_<class>.json`
//!
//! Every stage also writes `run_manifest.json` describing the command, its
//! resolved configuration, and input hashes. Staged finetuning and generation
//! require the reference backend: external models live inside a process and
//! cannot be persisted between stages (`augment` drives external backends
//! end to end instead).

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use augpipe::backend::reference::MemorizedModel;
use augpipe::backend::FinetunedModel;
use augpipe::corpus::load_dataset;
use augpipe::filter::{calibrate_threshold, filter_generated, CalibrationEntry};
use augpipe::hash::fnv1a64_hex;
use augpipe::manifest::{config_hash_of, hash_file, GenerationProgress, RunManifest, RunStatus};
use augpipe::pipeline::{generate_one, prepare_instances, GenerationPlan, PreparedInstance, SampleOutcome};

use crate::config::{BackendArg, Settings};
use crate::util::{
    build_embedder, count_lines, map_backend, map_filter, map_pipeline, read_json, read_jsonl,
    sanitize_label, validation, write_json_pretty, write_jsonl, CliError, DirLock, SlotRecord,
};

pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const CLASS_INDEX_FILE: &str = "classes.json";

/// One class known to the staged pipeline: its label and the sanitized file
/// stem its artifacts are named with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub label: String,
    pub stem: String,
}

impl ClassEntry {
    pub fn prepared_path(&self, out: &Path) -> PathBuf {
        out.join(format!("prepared_{}.jsonl", self.stem))
    }
    pub fn model_path(&self, out: &Path) -> PathBuf {
        out.join(format!("model_{}.json", self.stem))
    }
    pub fn finetune_path(&self, out: &Path) -> PathBuf {
        out.join(format!("finetune_{}.json", self.stem))
    }
    pub fn candidates_path(&self, out: &Path) -> PathBuf {
        out.join(format!("candidates_{}.jsonl", self.stem))
    }
    pub fn kept_path(&self, out: &Path) -> PathBuf {
        out.join(format!("kept_{}.jsonl", self.stem))
    }
    pub fn discarded_path(&self, out: &Path) -> PathBuf {
        out.join(format!("discarded_{}.jsonl", self.stem))
    }
    pub fn calibration_path(&self, out: &Path) -> PathBuf {
        out.join(format!("calibration_{}.json", self.stem))
    }
}

/// Assigns every label a unique file stem (collisions after sanitizing get a
/// numeric suffix).
fn build_class_index(labels: &[String]) -> Vec<ClassEntry> {
    let mut taken: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
    labels
        .iter()
        .map(|label| {
            let base = sanitize_label(label);
            let mut stem = base.clone();
            let mut suffix = 2;
            while !taken.insert(stem.clone()) {
                stem = format!("{base}_{suffix}");
                suffix += 1;
            }
            ClassEntry {
                label: label.clone(),
                stem,
            }
        })
        .collect()
}

fn read_class_index(out: &Path) -> Result<Vec<ClassEntry>, CliError> {
    let path = out.join(CLASS_INDEX_FILE);
    if !path.exists() {
        return Err(validation(format!(
            "{} not found; run `augpipe prepare` into this directory first",
            path.display()
        )));
    }
    read_json(&path)
}

/// Classes to process this invocation: the requested subset (in request
/// order) or the whole index.
fn select_classes(
    index: &[ClassEntry],
    wanted: &Option<Vec<String>>,
) -> Result<Vec<ClassEntry>, CliError> {
    match wanted {
        None => Ok(index.to_vec()),
        Some(labels) => labels
            .iter()
            .map(|label| {
                index
                    .iter()
                    .find(|e| &e.label == label)
                    .cloned()
                    .ok_or_else(|| {
                        validation(format!(
                            "class {label:?} is not in the prepared set; known classes: {}",
                            index
                                .iter()
                                .map(|e| e.label.as_str())
                                .collect::<Vec<_>>()
                                .join(", ")
                        ))
                    })
            })
            .collect(),
    }
}

/// Stable id for a staged run: command + configuration + input hashes.
pub(crate) fn stage_run_id(command: &str, manifest: &RunManifest) -> String {
    let mut basis = format!("{command}:{}", manifest.config_hash);
    for (name, input) in &manifest.input_hashes {
        basis.push(':');
        basis.push_str(name);
        basis.push('=');
        basis.push_str(&input.fnv1a64);
    }
    fnv1a64_hex(basis.as_bytes())
}

fn finish_manifest(
    mut manifest: RunManifest,
    command: &str,
    out: &Path,
    started: Instant,
) -> Result<(), CliError> {
    manifest.run_id = stage_run_id(command, &manifest);
    manifest.wall_clock_secs = Some(started.elapsed().as_secs_f64());
    manifest
        .write_to(&out.join(MANIFEST_FILE))
        .map_err(validation)
}

fn require_reference_backend(settings: &Settings, stage: &str) -> Result<(), CliError> {
    if settings.backend != BackendArg::Reference {
        return Err(validation(format!(
            "staged `{stage}` requires --backend reference: external models live in a process \
             and cannot be persisted between stages. Use `augpipe augment` to drive an external \
             backend end to end."
        )));
    }
    Ok(())
}

pub fn cmd_prepare(settings: &Settings, dataset_path: &Path, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    settings.validate()?;
    let _lock = DirLock::acquire(out)?;
    let dataset = load_dataset(dataset_path).map_err(validation)?;
    let labels = match &settings.classes {
        Some(wanted) => {
            let known = dataset.classes();
            for label in wanted {
                if !known.contains(label) {
                    return Err(validation(format!(
                        "class {label:?} is not in the dataset; known classes: {}",
                        known.join(", ")
                    )));
                }
            }
            wanted.clone()
        }
        None => dataset.classes(),
    };
    let scheme = settings.prefix_scheme()?;
    let index = build_class_index(&labels);
    for entry in &index {
        let class_data = dataset.of_class(&entry.label);
        let prepared = prepare_instances(&class_data, &scheme).map_err(map_pipeline)?;
        write_jsonl(&entry.prepared_path(out), &prepared)?;
        println!("prepared {}: {} instances", entry.label, prepared.len());
    }
    write_json_pretty(&out.join(CLASS_INDEX_FILE), &index)?;
    let mut manifest = RunManifest::new("prepare", "", settings.seed, settings.config_value());
    manifest.record_input("dataset", dataset_path).map_err(validation)?;
    finish_manifest(manifest, "prepare", out, started)
}

pub fn cmd_finetune(settings: &Settings, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    settings.validate()?;
    require_reference_backend(settings, "finetune")?;
    let _lock = DirLock::acquire(out)?;
    let index = read_class_index(out)?;
    let selected = select_classes(&index, &settings.classes)?;
    let backend = settings.reference_backend()?;
    let cfg = settings.finetune_config();
    let mut manifest = RunManifest::new("finetune", "", settings.seed, settings.config_value());
    for entry in &selected {
        let prepared: Vec<PreparedInstance> = read_jsonl(&entry.prepared_path(out))?;
        let corpus: Vec<String> = prepared.iter().map(|p| p.marked_text.clone()).collect();
        let model = backend.finetune_memorized(&corpus, &cfg).map_err(map_backend)?;
        let report = model.finetune_report();
        let model_path = entry.model_path(out);
        fs::write(&model_path, model.to_json() + "\n")
            .map_err(|e| validation(format!("cannot write {}: {e}", model_path.display())))?;
        write_json_pretty(&entry.finetune_path(out), &report)?;
        manifest
            .record_input(format!("prepared_{}", entry.label), &entry.prepared_path(out))
            .map_err(validation)?;
        println!(
            "finetuned {}: final_loss {:.6}, epochs {}",
            entry.label, report.final_loss, report.epochs
        );
    }
    finish_manifest(manifest, "finetune", out, started)
}

/// Per-class generation state loaded up front.
struct ClassWork {
    entry: ClassEntry,
    prepared: Vec<PreparedInstance>,
    model: MemorizedModel,
    done: u64,
}

pub fn cmd_generate(
    settings: &Settings,
    out: &Path,
    limit: Option<u64>,
    resume: bool,
) -> Result<(), CliError> {
    let started = Instant::now();
    settings.validate()?;
    require_reference_backend(settings, "generate")?;
    let _lock = DirLock::acquire(out)?;
    let index = read_class_index(out)?;
    let selected = select_classes(&index, &settings.classes)?;
    let n = u64::from(settings.n);

    let mut work = Vec::new();
    for entry in selected {
        let prepared: Vec<PreparedInstance> = read_jsonl(&entry.prepared_path(out))?;
        let model_path = entry.model_path(out);
        let model_json = fs::read_to_string(&model_path)
            .map_err(|e| validation(format!("cannot read {}: {e}", model_path.display())))?;
        let model = MemorizedModel::from_json(&model_json).map_err(validation)?;
        let done = count_lines(&entry.candidates_path(out))?;
        let slots = prepared.len() as u64 * n;
        if done > slots {
            return Err(validation(format!(
                "{} has {done} lines but only {slots} slots are expected; was --n changed?",
                entry.candidates_path(out).display()
            )));
        }
        work.push(ClassWork { entry, prepared, model, done });
    }
    let total_slots: u64 = work.iter().map(|w| w.prepared.len() as u64 * n).sum();
    let done_at_start: u64 = work.iter().map(|w| w.done).sum();

    let config = settings.config_value();
    let config_hash = config_hash_of(&config);
    let manifest_path = out.join(MANIFEST_FILE);
    if done_at_start > 0 && !resume {
        return Err(validation(format!(
            "{} already holds {done_at_start} generated slot(s); pass --resume to continue or \
             remove the candidates files to start over",
            out.display()
        )));
    }
    if resume && done_at_start > 0 {
        let previous = RunManifest::read_from(&manifest_path).map_err(|e| {
            validation(format!("cannot resume: no readable run manifest ({e})"))
        })?;
        if previous.command != "generate" {
            return Err(validation(format!(
                "cannot resume: the last command in {} was {:?}, not generate",
                out.display(),
                previous.command
            )));
        }
        if previous.config_hash != config_hash {
            return Err(validation(
                "cannot resume: the configuration differs from the interrupted run \
                 (config_hash mismatch)",
            ));
        }
        for (name, stored) in &previous.input_hashes {
            let current = hash_file(Path::new(&stored.path)).map_err(validation)?;
            if current != stored.fnv1a64 {
                return Err(validation(format!(
                    "cannot resume: input {name} ({}) changed since the interrupted run",
                    stored.path
                )));
            }
        }
    }

    // Claim the directory before sampling: if this process dies the manifest
    // still marks the run as interrupted and resumable.
    let mut manifest = RunManifest::new("generate", "", settings.seed, config);
    for w in &work {
        manifest
            .record_input(format!("prepared_{}", w.entry.label), &w.entry.prepared_path(out))
            .map_err(validation)?;
        manifest
            .record_input(format!("model_{}", w.entry.label), &w.entry.model_path(out))
            .map_err(validation)?;
    }
    manifest.run_id = stage_run_id("generate", &manifest);
    let first_open = work
        .iter()
        .find(|w| w.done < w.prepared.len() as u64 * n)
        .map(|w| w.entry.candidates_path(out))
        .unwrap_or_else(|| manifest_path.clone());
    manifest.status = RunStatus::Interrupted;
    manifest.progress = Some(GenerationProgress {
        completed_slots: done_at_start,
        total_slots,
        candidates_path: first_open.display().to_string(),
    });
    manifest.write_to(&manifest_path).map_err(validation)?;

    let plan = GenerationPlan {
        n_per_instance: settings.n,
        params: settings.generation_params(),
        keep_context: settings.keep_context,
        retries: settings.retries,
        run_seed: settings.seed,
    };
    let mut budget = limit;
    let mut done_total = done_at_start;
    let mut new_kept = 0u64;
    let mut new_dropped = 0u64;
    for w in &work {
        let class_slots = w.prepared.len() as u64 * n;
        if w.done == class_slots {
            continue;
        }
        let path = w.entry.candidates_path(out);
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| validation(format!("cannot open {}: {e}", path.display())))?;
        for slot in w.done..class_slots {
            if budget == Some(0) {
                manifest.progress = Some(GenerationProgress {
                    completed_slots: done_total,
                    total_slots,
                    candidates_path: path.display().to_string(),
                });
                manifest.wall_clock_secs = Some(started.elapsed().as_secs_f64());
                manifest.write_to(&manifest_path).map_err(validation)?;
                return Err(CliError::Interrupted(format!(
                    "generation stopped after {done_total} of {total_slots} slots; \
                     rerun with --resume to continue"
                )));
            }
            let prepared_idx = (slot / n) as usize;
            let sample_index = (slot % n) as u32;
            let outcome =
                generate_one(&w.model, &w.prepared[prepared_idx], sample_index, &plan)
                    .map_err(map_pipeline)?;
            let record = match outcome {
                SampleOutcome::Kept(c) => {
                    new_kept += 1;
                    SlotRecord::Kept(c)
                }
                SampleOutcome::Dropped(d) => {
                    new_dropped += 1;
                    SlotRecord::Dropped(d)
                }
            };
            let line = serde_json::to_string(&record).expect("slot serializes");
            writeln!(file, "{line}")
                .and_then(|()| file.flush())
                .map_err(|e| validation(format!("cannot write {}: {e}", path.display())))?;
            done_total += 1;
            if let Some(b) = &mut budget {
                *b -= 1;
            }
        }
    }
    manifest.status = RunStatus::Completed;
    manifest.progress = Some(GenerationProgress {
        completed_slots: done_total,
        total_slots,
        candidates_path: first_open.display().to_string(),
    });
    finish_manifest(manifest, "generate", out, started)?;
    println!(
        "generated {} of {} slots this run ({} candidates, {} dropped); total {}/{}",
        done_total - done_at_start,
        total_slots,
        new_kept,
        new_dropped,
        done_total,
        total_slots
    );
    Ok(())
}

/// Kept candidates from a candidates file (dropped-slot lines are skipped).
fn read_candidates(path: &Path) -> Result<Vec<augpipe::pipeline::Candidate>, CliError> {
    let slots: Vec<SlotRecord> = read_jsonl(path)?;
    Ok(slots
        .into_iter()
        .filter_map(|s| match s {
            SlotRecord::Kept(c) => Some(c),
            SlotRecord::Dropped(_) => None,
        })
        .collect())
}

pub fn cmd_filter(settings: &Settings, dataset_path: &Path, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    settings.validate()?;
    let _lock = DirLock::acquire(out)?;
    let dataset = load_dataset(dataset_path).map_err(validation)?;
    let index = read_class_index(out)?;
    let selected = select_classes(&index, &settings.classes)?;
    let embedder = build_embedder(settings, None)?;
    let cfg = settings.filter_config()?;
    let mut manifest = RunManifest::new("filter", "", settings.seed, settings.config_value());
    manifest.record_input("dataset", dataset_path).map_err(validation)?;
    for entry in &selected {
        let candidates = read_candidates(&entry.candidates_path(out))?;
        let class_data = dataset.of_class(&entry.label);
        let outcome = filter_generated(&candidates, &class_data, embedder.as_embedder(), &cfg)
            .map_err(map_filter)?;
        write_jsonl(&entry.kept_path(out), &outcome.kept)?;
        write_jsonl(&entry.discarded_path(out), &outcome.discarded)?;
        manifest
            .record_input(format!("candidates_{}", entry.label), &entry.candidates_path(out))
            .map_err(validation)?;
        println!(
            "filtered {}: kept {}, discarded {} (threshold {})",
            entry.label,
            outcome.kept.len(),
            outcome.discarded.len(),
            settings.delta
        );
    }
    finish_manifest(manifest, "filter", out, started)
}

pub fn cmd_calibrate(
    settings: &Settings,
    dataset_path: &Path,
    out: &Path,
    review: usize,
    interactive: bool,
) -> Result<(), CliError> {
    let started = Instant::now();
    settings.validate()?;
    let _lock = DirLock::acquire(out)?;
    let dataset = load_dataset(dataset_path).map_err(validation)?;
    let index = read_class_index(out)?;
    let selected = select_classes(&index, &settings.classes)?;
    let embedder = build_embedder(settings, None)?;
    let metric = settings.metric.to_metric();
    let stdin = std::io::stdin();
    let mut input_lines = stdin.lock().lines();
    let mut manifest = RunManifest::new("calibrate", "", settings.seed, settings.config_value());
    manifest.record_input("dataset", dataset_path).map_err(validation)?;
    for entry in &selected {
        let candidates = read_candidates(&entry.candidates_path(out))?;
        let class_data = dataset.of_class(&entry.label);
        let mut decide_interactive = |e: &CalibrationEntry| -> bool {
            eprintln!(
                "[{}] candidate {}#{} at distance {:.4}:\n    {}",
                entry.label, e.source_id, e.sample_index, e.distance, e.text
            );
            eprint!("    keep as on-class? [y/n] ");
            match input_lines.next() {
                Some(Ok(answer)) => {
                    let a = answer.trim().to_ascii_lowercase();
                    a == "y" || a == "yes"
                }
                // End of input: treat the rest as accepted.
                _ => true,
            }
        };
        let decide: Option<&mut dyn FnMut(&CalibrationEntry) -> bool> = if interactive {
            Some(&mut decide_interactive)
        } else {
            None
        };
        let report = calibrate_threshold(
            &candidates,
            &class_data,
            embedder.as_embedder(),
            metric,
            review,
            decide,
        )
        .map_err(map_filter)?;
        write_json_pretty(&entry.calibration_path(out), &report)?;
        manifest
            .record_input(format!("candidates_{}", entry.label), &entry.candidates_path(out))
            .map_err(validation)?;
        let mut line = format!("calibrated {}:", entry.label);
        for (name, value) in &report.percentiles {
            line.push_str(&format!(" {name} {value:.4}"));
        }
        if let Some(proposed) = report.proposed_delta {
            line.push_str(&format!(" proposed {proposed:.4}"));
        }
        println!("{line}");
    }
    finish_manifest(manifest, "calibrate", out, started)
}
