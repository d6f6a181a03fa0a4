//! Single-shot subcommands: the end-to-end `augment` run, the `eda`
//! comparison baseline, evaluation and reporting, dataset splitting, and the
//! line-protocol backend server.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use augpipe::backend::server::serve;
use augpipe::corpus::{
    load_dataset, minority_class, save_dataset, split_holdout, subsample_low_data, Dataset,
    HoldoutSpec,
};
use augpipe::eval::{
    delta_table, evaluate_conditions, reference_classifier, render_delta_table, Condition,
    EvaluationReport, MetricKind,
};
use augpipe::manifest::RunManifest;
use augpipe::pipeline::{eda_baseline, run_augmentation, EdaConfig};

use crate::config::Settings;
use crate::stages::MANIFEST_FILE;
use crate::util::{
    build_backend, build_embedder, map_eval, map_pipeline, validation, write_json_pretty, CliError,
    DirLock,
};

pub fn cmd_augment(settings: &Settings, dataset_path: &Path, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    settings.validate()?;
    let _lock = DirLock::acquire(out)?;
    let dataset = load_dataset(dataset_path).map_err(validation)?;
    let class_labels = settings
        .classes
        .clone()
        .unwrap_or_else(|| dataset.classes());
    let request = settings.augmentation_request(class_labels)?;
    let backend = build_backend(settings)?;
    let embedder = build_embedder(settings, Some(&backend))?;
    eprintln!(
        "augmenting {} class(es) from {} ({} instances)",
        request.class_labels.len(),
        dataset_path.display(),
        dataset.len()
    );
    let outcome = run_augmentation(&dataset, &request, backend.as_model(), embedder.as_embedder())
        .map_err(map_pipeline)?;
    let augmented_path = out.join("augmented.jsonl");
    save_dataset(&outcome.augmented, &augmented_path).map_err(validation)?;
    write_json_pretty(
        &out.join("augment_report.json"),
        &serde_json::json!({
            "run_id": outcome.run_id,
            "per_class": outcome.per_class,
        }),
    )?;
    let mut manifest = RunManifest::new(
        "augment",
        &outcome.run_id,
        settings.seed,
        settings.config_value(),
    );
    manifest.record_input("dataset", dataset_path).map_err(validation)?;
    manifest.wall_clock_secs = Some(started.elapsed().as_secs_f64());
    manifest.write_to(&out.join(MANIFEST_FILE)).map_err(validation)?;
    for c in &outcome.per_class {
        println!(
            "class {}: prepared {}, generated {}, dropped {}, filtered_out {}, deduped {}, kept {}",
            c.label, c.prepared, c.generated, c.dropped, c.filtered_out, c.deduped, c.kept
        );
    }
    println!(
        "augmented dataset: {} instances ({} new) -> {}",
        outcome.augmented.len(),
        outcome.augmented.len() - dataset.len(),
        augmented_path.display()
    );
    Ok(())
}

pub fn cmd_eda(settings: &Settings, dataset_path: &Path, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    settings.validate()?;
    let _lock = DirLock::acquire(out)?;
    let dataset = load_dataset(dataset_path).map_err(validation)?;
    let cfg = EdaConfig {
        ops_per_instance: settings.eda_ops,
        alpha: settings.eda_alpha,
        seed: settings.seed,
    };
    let augmented = eda_baseline(&dataset, &cfg, None).map_err(map_pipeline)?;
    let out_path = out.join("eda.jsonl");
    save_dataset(&augmented, &out_path).map_err(validation)?;
    let mut manifest = RunManifest::new("eda", "", settings.seed, settings.config_value());
    manifest.record_input("dataset", dataset_path).map_err(validation)?;
    manifest.run_id = crate::stages::stage_run_id("eda", &manifest);
    manifest.wall_clock_secs = Some(started.elapsed().as_secs_f64());
    manifest.write_to(&out.join(MANIFEST_FILE)).map_err(validation)?;
    println!(
        "eda dataset: {} instances ({} new) -> {}",
        augmented.len(),
        augmented.len() - dataset.len(),
        out_path.display()
    );
    Ok(())
}

pub struct EvaluateInputs<'a> {
    pub train: &'a Path,
    pub holdout: &'a Path,
    pub eda: Option<&'a Path>,
    pub textgen: Option<&'a Path>,
    pub name: &'a str,
    pub positive_label: Option<&'a str>,
}

pub fn cmd_evaluate(
    settings: &Settings,
    inputs: &EvaluateInputs<'_>,
    out: &Path,
) -> Result<(), CliError> {
    let started = Instant::now();
    settings.validate()?;
    let _lock = DirLock::acquire(out)?;
    let train = load_dataset(inputs.train).map_err(validation)?;
    let holdout = load_dataset(inputs.holdout).map_err(validation)?;
    let mut conditions = vec![(Condition::Baseline, train.clone())];
    if let Some(path) = inputs.eda {
        conditions.push((Condition::Eda, load_dataset(path).map_err(validation)?));
    }
    if let Some(path) = inputs.textgen {
        conditions.push((Condition::TextGen, load_dataset(path).map_err(validation)?));
    }
    warn_on_holdout_overlap(&conditions, &holdout);
    let positive = match inputs.positive_label {
        Some(label) => label.to_string(),
        None => minority_class(&train).map_err(validation)?,
    };
    let spec = reference_classifier();
    let report = evaluate_conditions(
        inputs.name,
        &conditions,
        &holdout,
        &spec,
        &positive,
        settings.runs,
        settings.seed,
    )
    .map_err(map_eval)?;
    write_json_pretty(&out.join("report.json"), &report)?;
    let text = report.render_text();
    fs::write(out.join("report.txt"), &text)
        .map_err(|e| validation(format!("cannot write report.txt: {e}")))?;
    let mut manifest = RunManifest::new("evaluate", "", settings.seed, settings.config_value());
    manifest.record_input("train", inputs.train).map_err(validation)?;
    manifest.record_input("holdout", inputs.holdout).map_err(validation)?;
    if let Some(path) = inputs.eda {
        manifest.record_input("eda", path).map_err(validation)?;
    }
    if let Some(path) = inputs.textgen {
        manifest.record_input("textgen", path).map_err(validation)?;
    }
    manifest.run_id = crate::stages::stage_run_id("evaluate", &manifest);
    manifest.wall_clock_secs = Some(started.elapsed().as_secs_f64());
    manifest.write_to(&out.join(MANIFEST_FILE)).map_err(validation)?;
    print!("{text}");
    Ok(())
}

/// Train/holdout id overlap is almost always an evaluation bug (the holdout
/// leaking into training data); it is reported but not fatal because ids from
/// unrelated files can legitimately collide.
fn warn_on_holdout_overlap(conditions: &[(Condition, Dataset)], holdout: &Dataset) {
    let holdout_ids: BTreeSet<u64> = holdout.iter().map(|i| i.id).collect();
    for (condition, dataset) in conditions {
        let overlap = dataset.iter().filter(|i| holdout_ids.contains(&i.id)).count();
        if overlap > 0 {
            eprintln!(
                "warning: {condition} training data shares {overlap} instance id(s) with the \
                 holdout set"
            );
        }
    }
}

pub fn cmd_report(
    inputs: &[PathBuf],
    metric: MetricKind,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let mut entries = Vec::new();
    for path in inputs {
        let report: EvaluationReport = crate::util::read_json(path)?;
        entries.push((report.dataset.clone(), report.summary));
    }
    let rows = delta_table(&entries, metric).map_err(map_eval)?;
    let text = render_delta_table(&rows);
    if let Some(path) = out {
        fs::write(path, &text)
            .map_err(|e| validation(format!("cannot write {}: {e}", path.display())))?;
    }
    print!("{text}");
    Ok(())
}

pub fn cmd_split(
    settings: &Settings,
    dataset_path: &Path,
    out: &Path,
    fraction: f64,
    subsample: Option<usize>,
) -> Result<(), CliError> {
    let started = Instant::now();
    settings.validate()?;
    let _lock = DirLock::acquire(out)?;
    let dataset = load_dataset(dataset_path).map_err(validation)?;
    let spec = HoldoutSpec {
        fraction,
        seed: settings.seed,
    };
    let (mut train, holdout) = split_holdout(&dataset, &spec).map_err(validation)?;
    if let Some(n) = subsample {
        train = subsample_low_data(&train, n, settings.seed).map_err(validation)?;
    }
    let train_path = out.join("train.jsonl");
    let holdout_path = out.join("holdout.jsonl");
    save_dataset(&train, &train_path).map_err(validation)?;
    save_dataset(&holdout, &holdout_path).map_err(validation)?;
    let mut manifest = RunManifest::new("split", "", settings.seed, settings.config_value());
    manifest.record_input("dataset", dataset_path).map_err(validation)?;
    manifest.run_id = crate::stages::stage_run_id("split", &manifest);
    manifest.wall_clock_secs = Some(started.elapsed().as_secs_f64());
    manifest.write_to(&out.join(MANIFEST_FILE)).map_err(validation)?;
    println!(
        "train: {} instances -> {}\nholdout: {} instances -> {}",
        train.len(),
        train_path.display(),
        holdout.len(),
        holdout_path.display()
    );
    Ok(())
}

pub fn cmd_backend_serve() -> Result<(), CliError> {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    serve(stdin.lock(), stdout.lock())
        .map_err(|e| CliError::Transport(format!("backend server io failed: {e}")))
}
