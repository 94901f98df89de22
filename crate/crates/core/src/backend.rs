//! Pluggable text-completion backend.
//!
//! Two kinds: a `Remote` chat-completion HTTP endpoint (model and base URL
//! from config, credential from a named environment variable) and a
//! `Scripted` backend replaying canned responses for deterministic runs.
//!
//! Scripted scripts come in two shapes:
//! - an ordered list of responses, consumed one per call — running past the
//!   end is an error, never silence;
//! - a map from stage label to response. Lookups try the exact call key
//!   first (`<stage>@<ASSET>`), then the bare stage label. A string value
//!   answers every call for that stage; an array value is consumed in order
//!   and exhaustion is an error.
//!
//! The backend counts calls per stage key, which the ablation checks and
//! tests rely on.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One stage's scripted responses.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StageScript {
    /// Same response for every call on this stage.
    Fixed(String),
    /// Responses consumed in order; running past the end is an error.
    Sequence(Vec<String>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Sequence(Vec<String>),
    ByStage(BTreeMap<String, StageScript>),
}

#[derive(Debug)]
enum Kind {
    Scripted {
        script: ScriptFile,
        cursor: usize,
        stage_cursors: BTreeMap<String, usize>,
    },
    Remote(RemoteConfig),
}

/// Remote chat-completion endpoint settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API credential.
    pub credential_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    60
}

/// A completion backend plus per-stage call accounting.
#[derive(Debug)]
pub struct CompletionBackend {
    kind: Kind,
    counts: BTreeMap<String, u64>,
    record_prompts: bool,
    prompt_log: Vec<(String, String)>,
}

impl CompletionBackend {
    /// Scripted backend from an ordered response list.
    pub fn scripted_sequence(responses: Vec<String>) -> Self {
        Self::from_kind(Kind::Scripted {
            script: ScriptFile::Sequence(responses),
            cursor: 0,
            stage_cursors: BTreeMap::new(),
        })
    }

    /// Scripted backend from a stage-label map.
    pub fn scripted_map(map: BTreeMap<String, StageScript>) -> Self {
        Self::from_kind(Kind::Scripted {
            script: ScriptFile::ByStage(map),
            cursor: 0,
            stage_cursors: BTreeMap::new(),
        })
    }

    /// Loads a script file: either a JSON array of responses or a JSON
    /// object mapping stage labels to responses.
    pub fn scripted_from_path(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path)
            .map_err(|e| Error::Backend(format!("cannot read script {}: {e}", path.display())))?;
        let script: ScriptFile = serde_json::from_str(&raw)
            .map_err(|e| Error::Backend(format!("bad script {}: {e}", path.display())))?;
        Ok(Self::from_kind(Kind::Scripted {
            script,
            cursor: 0,
            stage_cursors: BTreeMap::new(),
        }))
    }

    pub fn remote(cfg: RemoteConfig) -> Self {
        Self::from_kind(Kind::Remote(cfg))
    }

    fn from_kind(kind: Kind) -> Self {
        CompletionBackend {
            kind,
            counts: BTreeMap::new(),
            record_prompts: false,
            prompt_log: Vec::new(),
        }
    }

    /// Keep a full (stage, prompt) log; used by tests asserting what each
    /// stage saw.
    pub fn record_prompts(mut self, on: bool) -> Self {
        self.record_prompts = on;
        self
    }

    /// Runs one completion for the given stage key (`<stage>` or
    /// `<stage>@<ASSET>`).
    pub fn complete(&mut self, stage: &str, prompt: &str) -> Result<String> {
        *self.counts.entry(stage.to_string()).or_insert(0) += 1;
        if self.record_prompts {
            self.prompt_log
                .push((stage.to_string(), prompt.to_string()));
        }
        match &mut self.kind {
            Kind::Scripted {
                script,
                cursor,
                stage_cursors,
            } => match script {
                ScriptFile::Sequence(responses) => {
                    if *cursor >= responses.len() {
                        return Err(Error::Backend(format!(
                            "script exhausted after {} responses (stage {stage})",
                            responses.len()
                        )));
                    }
                    let out = responses[*cursor].clone();
                    *cursor += 1;
                    Ok(out)
                }
                ScriptFile::ByStage(map) => {
                    let bare = stage.split('@').next().unwrap_or(stage);
                    let (key, entry) = match map.get(stage) {
                        Some(entry) => (stage, entry),
                        None => match map.get(bare) {
                            Some(entry) => (bare, entry),
                            None => {
                                return Err(Error::Backend(format!(
                                    "script has no entry for stage {stage}"
                                )))
                            }
                        },
                    };
                    match entry {
                        StageScript::Fixed(s) => Ok(s.clone()),
                        StageScript::Sequence(seq) => {
                            let cur = stage_cursors.entry(key.to_string()).or_insert(0);
                            if *cur >= seq.len() {
                                return Err(Error::Backend(format!(
                                    "script exhausted for stage {key} after {} responses",
                                    seq.len()
                                )));
                            }
                            let out = seq[*cur].clone();
                            *cur += 1;
                            Ok(out)
                        }
                    }
                }
            },
            Kind::Remote(cfg) => remote_complete(cfg, prompt),
        }
    }

    /// Number of calls whose stage key equals `label` or starts with
    /// `label@` (i.e. all assets for that stage).
    pub fn calls_for(&self, label: &str) -> u64 {
        let prefix = format!("{label}@");
        self.counts
            .iter()
            .filter(|(k, _)| k.as_str() == label || k.starts_with(&prefix))
            .map(|(_, v)| v)
            .sum()
    }

    pub fn total_calls(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn prompt_log(&self) -> &[(String, String)] {
        &self.prompt_log
    }

    /// Short description embedded in report parameter echoes.
    pub fn descriptor(&self) -> String {
        match &self.kind {
            Kind::Scripted { script, .. } => match script {
                ScriptFile::Sequence(v) => format!("scripted(sequence, {} responses)", v.len()),
                ScriptFile::ByStage(m) => format!("scripted(map, {} stages)", m.len()),
            },
            Kind::Remote(cfg) => format!("remote({}, {})", cfg.base_url, cfg.model),
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    n: u32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: String,
}

// Requests pin temperature 0 and a single completion.
fn remote_complete(cfg: &RemoteConfig, prompt: &str) -> Result<String> {
    let credential = std::env::var(&cfg.credential_env).map_err(|_| {
        Error::Backend(format!(
            "credential environment variable {} not set",
            cfg.credential_env
        ))
    })?;
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(cfg.timeout_secs))
        .build()
        .map_err(|e| Error::Backend(format!("http client: {e}")))?;
    let url = format!("{}/chat/completions", cfg.base_url.trim_end_matches('/'));
    let body = ChatRequest {
        model: &cfg.model,
        messages: vec![ChatMessage {
            role: "user",
            content: prompt,
        }],
        temperature: 0.0,
        n: 1,
    };
    let resp = client
        .post(&url)
        .bearer_auth(credential)
        .json(&body)
        .send()
        .map_err(|e| Error::Backend(format!("request to {url} failed: {e}")))?;
    let status = resp.status();
    if !status.is_success() {
        let text = resp.text().unwrap_or_default();
        return Err(Error::Backend(format!("{url} returned {status}: {text}")));
    }
    let parsed: ChatResponse = resp
        .json()
        .map_err(|e| Error::Backend(format!("bad completion response: {e}")))?;
    parsed
        .choices
        .first()
        .map(|c| c.message.content.clone())
        .ok_or_else(|| Error::Backend("completion response had no choices".into()))
}
