//! CLI plumbing: the error type that drives exit codes, the output-directory
//! lock, JSONL file helpers, and backend/embedder construction.

use std::fmt::Display;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use augpipe::backend::external::{ExternalProcessBackend, ExternalProcessEmbedder};
use augpipe::backend::reference::ReferenceMemorizingModel;
use augpipe::backend::{BackendError, GenerativeModel};
use augpipe::embed::{EmbedError, EmbeddingModel, ReferenceHashingEmbedder};
use augpipe::eval::EvalError;
use augpipe::filter::FilterError;
use augpipe::pipeline::{Candidate, DroppedSample, PipelineError};

use crate::config::{BackendArg, EmbedderArg, Settings};

/// Process exit codes: 0 success, 1 validation or usage error, 2 backend
/// transport failure, 3 interrupted with resumable state on disk.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Transport(String),
    Interrupted(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Transport(_) => 2,
            CliError::Interrupted(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Transport(m) | CliError::Interrupted(m) => m,
        }
    }
}

/// Anything printable becomes a validation error (exit 1).
pub fn validation(message: impl Display) -> CliError {
    CliError::Validation(message.to_string())
}

/// Backend errors keep their transport/validation distinction.
pub fn map_backend(e: BackendError) -> CliError {
    match e {
        BackendError::Transport(_) | BackendError::Remote(_) => CliError::Transport(e.to_string()),
        other => CliError::Validation(other.to_string()),
    }
}

fn map_embed(e: EmbedError) -> CliError {
    match e {
        EmbedError::Backend(_) => CliError::Transport(e.to_string()),
        other => CliError::Validation(other.to_string()),
    }
}

pub fn map_filter(e: FilterError) -> CliError {
    match e {
        FilterError::Embed(inner) => map_embed(inner),
        other => CliError::Validation(other.to_string()),
    }
}

pub fn map_pipeline(e: PipelineError) -> CliError {
    match e {
        PipelineError::Backend(inner) => map_backend(inner),
        PipelineError::Filter(inner) => map_filter(inner),
        other => CliError::Validation(other.to_string()),
    }
}

pub fn map_eval(e: EvalError) -> CliError {
    match e {
        EvalError::Embed(inner) => map_embed(inner),
        other => CliError::Validation(other.to_string()),
    }
}

/// Exclusive lock on an output directory, held for the duration of one
/// command. The guard file records the holder's pid and is removed on drop;
/// a leftover file from a killed process must be removed by hand.
pub struct DirLock {
    path: PathBuf,
}

pub const LOCK_FILE: &str = ".augpipe.lock";

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| validation(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut file) => {
                let _ = writeln!(file, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(validation(format!(
                "output directory {} is locked by another run; remove {} if that run is gone",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(validation(format!("cannot lock {}: {e}", dir.display()))),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// One generation slot as persisted in a candidates file: either the sampled
/// candidate or a record of the slot being dropped after empty retries. One
/// line per slot keeps resume bookkeeping to a line count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SlotRecord {
    Kept(Candidate),
    Dropped(DroppedSample),
}

/// File name component for a class label: alphanumerics, `-`, and `_` pass
/// through, everything else becomes `_`.
pub fn sanitize_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| validation(format!("cannot write {}: {e}", path.display())))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
    let mut items = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| validation(format!("{}:{}: {e}", path.display(), idx + 1)))?;
        items.push(item);
    }
    Ok(items)
}

/// Non-empty line count, zero for a missing file.
pub fn count_lines(path: &Path) -> Result<u64, CliError> {
    if !path.exists() {
        return Ok(0);
    }
    let file = fs::File::open(path)
        .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
    let mut count = 0;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
        if !line.trim().is_empty() {
            count += 1;
        }
    }
    Ok(count)
}

pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut json = serde_json::to_string_pretty(value).expect("value serializes");
    json.push('\n');
    fs::write(path, json).map_err(|e| validation(format!("cannot write {}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let data = fs::read_to_string(path)
        .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&data).map_err(|e| validation(format!("{}: {e}", path.display())))
}

/// The generative backend selected by the settings. The external process (if
/// any) lives as long as this value or any embedder handle taken from it.
pub enum BackendHandle {
    Reference(ReferenceMemorizingModel),
    External(ExternalProcessBackend),
}

impl BackendHandle {
    pub fn as_model(&self) -> &dyn GenerativeModel {
        match self {
            BackendHandle::Reference(m) => m,
            BackendHandle::External(b) => b,
        }
    }
}

pub enum EmbedderHandle {
    Reference(ReferenceHashingEmbedder),
    External(ExternalProcessEmbedder),
}

impl EmbedderHandle {
    pub fn as_embedder(&self) -> &dyn EmbeddingModel {
        match self {
            EmbedderHandle::Reference(e) => e,
            EmbedderHandle::External(e) => e,
        }
    }
}

pub fn build_backend(settings: &Settings) -> Result<BackendHandle, CliError> {
    match settings.backend {
        BackendArg::Reference => Ok(BackendHandle::Reference(settings.reference_backend()?)),
        BackendArg::External => Ok(BackendHandle::External(
            ExternalProcessBackend::from_env().map_err(map_backend)?,
        )),
    }
}

/// Builds the embedder, reusing the backend's process for the external
/// embedder when the backend is itself external.
pub fn build_embedder(
    settings: &Settings,
    backend: Option<&BackendHandle>,
) -> Result<EmbedderHandle, CliError> {
    match settings.embedder {
        EmbedderArg::Reference => Ok(EmbedderHandle::Reference(
            ReferenceHashingEmbedder::new(settings.embed_dim).map_err(map_embed)?,
        )),
        EmbedderArg::External => {
            if let Some(BackendHandle::External(backend)) = backend {
                return Ok(EmbedderHandle::External(backend.embedder()));
            }
            let process = ExternalProcessBackend::from_env().map_err(map_backend)?;
            Ok(EmbedderHandle::External(process.embedder()))
        }
    }
}
