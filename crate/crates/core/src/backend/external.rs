//! Client adapter for external model processes.
//!
//! Spawns the command named by `AUGPIPE_BACKEND_CMD` (or an explicit command
//! line) and speaks the newline-delimited JSON protocol documented in
//! [`super::server`]. The child is shared behind a mutex: requests are
//! strictly serialized, so concurrent sampling from several handles is safe.
//!
//! Failure mapping: process spawn/pipe problems and malformed responses are
//! [`BackendError::Transport`]; a well-formed `{"ok": false}` reply is
//! [`BackendError::Remote`].

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Mutex, OnceLock};

use super::server::{Request, Response};
use super::{
    BackendError, FinetuneConfig, FinetuneReport, FinetunedModel, GenerationParams, GenerativeModel,
};
use crate::embed::{EmbedError, Embedding, EmbeddingModel};

/// Environment variable holding the backend command line (whitespace-split).
pub const BACKEND_CMD_ENV: &str = "AUGPIPE_BACKEND_CMD";

struct Io {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Drop for Io {
    fn drop(&mut self) {
        // Best effort: stop the child and reap it so tests leave no zombies.
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A spawned external backend process. Clonable handles to the same child are
/// produced by `finetune` and [`ExternalProcessBackend::embedder`]; the child
/// is killed when the last handle drops.
pub struct ExternalProcessBackend {
    io: Arc<Mutex<Io>>,
    command: String,
}

impl ExternalProcessBackend {
    /// Spawns `command_line` (split on whitespace) with piped stdin/stdout.
    /// The child's stderr passes through to ours for debuggability.
    pub fn spawn(command_line: &str) -> Result<Self, BackendError> {
        let mut parts = command_line.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| BackendError::InvalidParams("backend command is empty".into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| {
                BackendError::Transport(format!("cannot start backend {command_line:?}: {e}"))
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ExternalProcessBackend {
            io: Arc::new(Mutex::new(Io { child, stdin, stdout })),
            command: command_line.to_string(),
        })
    }

    /// Spawns the command named by [`BACKEND_CMD_ENV`].
    pub fn from_env() -> Result<Self, BackendError> {
        match std::env::var(BACKEND_CMD_ENV) {
            Ok(cmd) if !cmd.trim().is_empty() => Self::spawn(&cmd),
            _ => Err(BackendError::InvalidParams(format!(
                "{BACKEND_CMD_ENV} is not set; it must name the backend command"
            ))),
        }
    }

    /// An embedding handle over the same process (the `embed` op).
    pub fn embedder(&self) -> ExternalProcessEmbedder {
        ExternalProcessEmbedder {
            io: Arc::clone(&self.io),
            command: self.command.clone(),
            dim: OnceLock::new(),
        }
    }

    fn request(io: &Mutex<Io>, request: &Request) -> Result<Response, BackendError> {
        let mut guard = io
            .lock()
            .map_err(|_| BackendError::Transport("backend mutex poisoned".into()))?;
        let line = serde_json::to_string(request).expect("request serializes");
        let wrote = writeln!(guard.stdin, "{line}").and_then(|()| guard.stdin.flush());
        if let Err(e) = wrote {
            return Err(transport_with_status(&mut guard, format!("write failed: {e}")));
        }
        let mut buf = String::new();
        match guard.stdout.read_line(&mut buf) {
            Ok(0) => {
                return Err(transport_with_status(
                    &mut guard,
                    "backend closed the connection".into(),
                ))
            }
            Ok(_) => {}
            Err(e) => return Err(transport_with_status(&mut guard, format!("read failed: {e}"))),
        }
        let response: Response = serde_json::from_str(buf.trim_end()).map_err(|e| {
            BackendError::Transport(format!("malformed response {:?}: {e}", buf.trim_end()))
        })?;
        if !response.ok {
            return Err(BackendError::Remote(
                response
                    .error
                    .unwrap_or_else(|| "backend sent ok=false without an error message".into()),
            ));
        }
        Ok(response)
    }
}

fn transport_with_status(io: &mut Io, message: String) -> BackendError {
    match io.child.try_wait() {
        Ok(Some(status)) => BackendError::Transport(format!("{message} (backend exited: {status})")),
        _ => BackendError::Transport(message),
    }
}

impl GenerativeModel for ExternalProcessBackend {
    fn finetune(
        &self,
        corpus: &[String],
        cfg: &FinetuneConfig,
    ) -> Result<Box<dyn FinetunedModel>, BackendError> {
        cfg.validate()?;
        if corpus.iter().all(|s| s.split_whitespace().next().is_none()) {
            return Err(BackendError::EmptyCorpus);
        }
        // The corpus crosses the process boundary as a temp file with one
        // JSON-encoded string per line; the server reads it synchronously
        // while handling the request, so the file can be dropped after.
        let mut file = tempfile::NamedTempFile::new()
            .map_err(|e| BackendError::Transport(format!("cannot create corpus file: {e}")))?;
        for s in corpus {
            writeln!(file, "{}", serde_json::to_string(s).expect("string serializes"))
                .map_err(|e| BackendError::Transport(format!("cannot write corpus file: {e}")))?;
        }
        file.flush()
            .map_err(|e| BackendError::Transport(format!("cannot flush corpus file: {e}")))?;
        let request = Request::Finetune {
            corpus_path: file.path().display().to_string(),
            target_loss: cfg.target_loss,
            max_epochs: cfg.max_epochs,
            seed: cfg.seed,
        };
        let response = Self::request(&self.io, &request)?;
        let missing = |field: &str| {
            BackendError::Transport(format!("finetune response is missing {field:?}"))
        };
        let model_id = response.model_id.ok_or_else(|| missing("model_id"))?;
        let final_loss = response.final_loss.ok_or_else(|| missing("final_loss"))?;
        let epochs = response.epochs.ok_or_else(|| missing("epochs"))?;
        Ok(Box::new(ExternalModelHandle {
            io: Arc::clone(&self.io),
            model_id,
            report: FinetuneReport { final_loss, epochs },
        }))
    }
}

/// Sampling handle for one remote finetuned model.
pub struct ExternalModelHandle {
    io: Arc<Mutex<Io>>,
    model_id: String,
    report: FinetuneReport,
}

impl FinetunedModel for ExternalModelHandle {
    fn sample(&self, prefix: &str, params: &GenerationParams, seed: u64) -> Result<String, BackendError> {
        params.validate()?;
        if prefix.split_whitespace().next().is_none() {
            return Err(BackendError::EmptyPrefix);
        }
        let request = Request::Sample {
            model_id: self.model_id.clone(),
            prefix: prefix.to_string(),
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            seed,
        };
        let response = ExternalProcessBackend::request(&self.io, &request)?;
        let text = response
            .text
            .ok_or_else(|| BackendError::Transport("sample response is missing \"text\"".into()))?;
        // The protocol has no stop_token field; enforce truncation here so
        // the contract holds regardless of server behavior.
        let text = match text.find(&params.stop_token) {
            Some(pos) => text[..pos].trim_end().to_string(),
            None => text,
        };
        Ok(text)
    }

    fn finetune_report(&self) -> FinetuneReport {
        self.report
    }
}

/// Embedding model backed by the external process.
pub struct ExternalProcessEmbedder {
    io: Arc<Mutex<Io>>,
    command: String,
    dim: OnceLock<usize>,
}

impl EmbeddingModel for ExternalProcessEmbedder {
    fn dim(&self) -> usize {
        if let Some(d) = self.dim.get() {
            return *d;
        }
        // Empty text embeds to a full-width zero vector; use it as a probe.
        match self.embed("") {
            Ok(e) => e.dim(),
            Err(_) => 0,
        }
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        let request = Request::Embed {
            text: text.to_string(),
        };
        let response = ExternalProcessBackend::request(&self.io, &request)
            .map_err(|e| EmbedError::Backend(e.to_string()))?;
        let vector = response
            .vector
            .ok_or_else(|| EmbedError::Backend("embed response is missing \"vector\"".into()))?;
        let embedding = Embedding::new(vector)?;
        match self.dim.get() {
            Some(d) if *d != embedding.dim() => {
                return Err(EmbedError::Backend(format!(
                    "embedding dimension changed from {d} to {}",
                    embedding.dim()
                )))
            }
            Some(_) => {}
            None => {
                let _ = self.dim.set(embedding.dim());
            }
        }
        Ok(embedding)
    }

    fn identity(&self) -> String {
        format!("external:{}", self.command)
    }
}
