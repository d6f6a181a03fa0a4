//! Reference server for the model-process line protocol.
//!
//! The adapter in [`super::external`] talks newline-delimited JSON to a child
//! process: one request object per line on stdin, one response object per
//! line on stdout. This module implements the serving side with the reference
//! model and embedder, both as executable documentation of the protocol and
//! as a real backend for tests (`augpipe backend-serve` runs it over
//! stdin/stdout).
//!
//! Requests:
//! - `{"op":"finetune","corpus_path":...,"target_loss":...,"max_epochs":...,"seed":...}`
//!   → `{"ok":true,"model_id":...,"final_loss":...,"epochs":...}`.
//!   The corpus file holds one JSON-encoded string per line.
//! - `{"op":"sample","model_id":...,"prefix":...,"temperature":...,"max_tokens":...,"seed":...}`
//!   → `{"ok":true,"text":...}`. Stop-token handling uses the standard end
//!   marker; the client additionally truncates, so servers may echo it.
//! - `{"op":"embed","text":...}` → `{"ok":true,"vector":[...]}`.
//!
//! Every failure is reported in-band as `{"ok":false,"error":...}`; the
//! stream stays usable for further requests.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::reference::ReferenceMemorizingModel;
use super::{FinetuneConfig, FinetunedModel, GenerationParams, GenerativeModel};
use crate::embed::{EmbeddingModel, ReferenceHashingEmbedder};
use crate::pipeline::END_MARKER;

/// One protocol request. Serialized with an `op` tag.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request {
    Finetune {
        corpus_path: String,
        target_loss: f64,
        max_epochs: u32,
        seed: u64,
    },
    Sample {
        model_id: String,
        prefix: String,
        temperature: f64,
        max_tokens: u32,
        seed: u64,
    },
    Embed {
        text: String,
    },
}

/// One protocol response; fields are populated per op. `ok: false` carries
/// `error` and nothing else.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
}

impl Response {
    pub fn err(message: impl Into<String>) -> Self {
        Response {
            ok: false,
            error: Some(message.into()),
            ..Response::default()
        }
    }
}

/// Serves the protocol until the input stream ends. Blank lines are ignored;
/// per-request failures are answered in-band and do not stop the loop.
pub fn serve(input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
    let mut models: Vec<Box<dyn FinetunedModel>> = Vec::new();
    let embedder = ReferenceHashingEmbedder::default();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = handle_line(&line, &mut models, &embedder);
        let json = serde_json::to_string(&response).expect("response serializes");
        writeln!(output, "{json}")?;
        output.flush()?;
    }
    Ok(())
}

fn handle_line(
    line: &str,
    models: &mut Vec<Box<dyn FinetunedModel>>,
    embedder: &ReferenceHashingEmbedder,
) -> Response {
    let request: Request = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => return Response::err(format!("malformed request: {e}")),
    };
    match request {
        Request::Finetune {
            corpus_path,
            target_loss,
            max_epochs,
            seed,
        } => {
            let data = match std::fs::read_to_string(&corpus_path) {
                Ok(d) => d,
                Err(e) => return Response::err(format!("cannot read corpus {corpus_path}: {e}")),
            };
            let mut corpus: Vec<String> = Vec::new();
            for (idx, raw) in data.lines().enumerate() {
                if raw.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<String>(raw) {
                    Ok(s) => corpus.push(s),
                    Err(e) => {
                        return Response::err(format!(
                            "corpus line {}: expected a JSON string: {e}",
                            idx + 1
                        ))
                    }
                }
            }
            let cfg = FinetuneConfig {
                target_loss,
                max_epochs,
                seed,
            };
            match ReferenceMemorizingModel::default().finetune(&corpus, &cfg) {
                Ok(model) => {
                    let report = model.finetune_report();
                    models.push(model);
                    Response {
                        ok: true,
                        model_id: Some(format!("m{}", models.len() - 1)),
                        final_loss: Some(report.final_loss),
                        epochs: Some(report.epochs),
                        ..Response::default()
                    }
                }
                Err(e) => Response::err(e.to_string()),
            }
        }
        Request::Sample {
            model_id,
            prefix,
            temperature,
            max_tokens,
            seed,
        } => {
            let model = match model_id
                .strip_prefix('m')
                .and_then(|idx| idx.parse::<usize>().ok())
                .and_then(|idx| models.get(idx))
            {
                Some(m) => m,
                None => return Response::err(format!("unknown model_id {model_id:?}")),
            };
            let params = GenerationParams {
                temperature,
                max_tokens,
                stop_token: END_MARKER.to_string(),
            };
            match model.sample(&prefix, &params, seed) {
                Ok(text) => Response {
                    ok: true,
                    text: Some(text),
                    ..Response::default()
                },
                Err(e) => Response::err(e.to_string()),
            }
        }
        Request::Embed { text } => match embedder.embed(&text) {
            Ok(embedding) => Response {
                ok: true,
                vector: Some(embedding.values().to_vec()),
                ..Response::default()
            },
            Err(e) => Response::err(e.to_string()),
        },
    }
}
