//! Run manifests: every command records enough state (resolved config,
//! seeds, input hashes, tool version, progress) to re-execute or resume a run
//! bit-identically.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::fnv1a64_hex;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest at {path} is not valid JSON: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    /// The run stopped early; `progress` says where to resume.
    Interrupted,
}

/// Hash of one input file at the time the run started.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: String,
    pub fnv1a64: String,
}

/// Progress marker for resumable generation: sample slots are written one
/// line each (kept or dropped), so the completed count equals the line count
/// of the candidates file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationProgress {
    pub completed_slots: u64,
    pub total_slots: u64,
    pub candidates_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// Subcommand that produced this manifest.
    pub command: String,
    pub run_id: String,
    pub status: RunStatus,
    pub base_seed: u64,
    /// Resolved configuration, embedded verbatim.
    pub config: serde_json::Value,
    /// Hash of the serialized config; resume refuses to continue under a
    /// different configuration.
    pub config_hash: String,
    pub input_hashes: BTreeMap<String, InputHash>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub progress: Option<GenerationProgress>,
    /// Informational only; never part of any byte-identity guarantee.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_clock_secs: Option<f64>,
}

impl RunManifest {
    pub fn new(
        command: impl Into<String>,
        run_id: impl Into<String>,
        base_seed: u64,
        config: serde_json::Value,
    ) -> Self {
        let config_hash = config_hash_of(&config);
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.into(),
            run_id: run_id.into(),
            status: RunStatus::Completed,
            base_seed,
            config,
            config_hash,
            input_hashes: BTreeMap::new(),
            progress: None,
            wall_clock_secs: None,
        }
    }

    /// Records the current content hash of `path` under `name`.
    pub fn record_input(&mut self, name: impl Into<String>, path: &Path) -> Result<(), ManifestError> {
        let hash = hash_file(path)?;
        self.input_hashes.insert(
            name.into(),
            InputHash {
                path: path.display().to_string(),
                fnv1a64: hash,
            },
        );
        Ok(())
    }

    /// Writes pretty-printed JSON with a trailing newline.
    pub fn write_to(&self, path: &Path) -> Result<(), ManifestError> {
        let io_err = |source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        };
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        let mut file = fs::File::create(path).map_err(io_err)?;
        file.write_all(json.as_bytes()).map_err(io_err)?;
        file.write_all(b"\n").map_err(io_err)?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self, ManifestError> {
        let bytes = fs::read(path).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_slice(&bytes).map_err(|source| ManifestError::Parse {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Canonical hash of a config value. `serde_json` maps are ordered by key,
/// so logically equal configs hash equally regardless of construction order.
pub fn config_hash_of(config: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    fnv1a64_hex(canonical.as_bytes())
}

/// FNV-1a hash of a file's bytes, hex-encoded.
pub fn hash_file(path: &Path) -> Result<String, ManifestError> {
    let bytes = fs::read(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(fnv1a64_hex(&bytes))
}
