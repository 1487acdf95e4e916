//! Completion provider boundary.
//!
//! One trait, two implementations: an OpenAI-compatible HTTP client and a
//! scripted record-replay backend for deterministic offline runs. Token
//! counts always come from the provider (or the script), never from a local
//! estimate.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-request token limit unless a run overrides it.
pub const DEFAULT_MAX_TOKENS: u32 = 4096;

/// Environment variable holding the API key for the HTTP backend. The key is
/// never accepted via CLI flag or config file.
pub const API_KEY_ENV: &str = "SEESAW_API_KEY";

const TRANSPORT_RETRY_BACKOFF: Duration = Duration::from_secs(2);

/// What a backend call was issued for. Tagged onto every request and copied
/// into the call ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Tree,
    See,
    Saw,
    Validate,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Tree, Phase::See, Phase::Saw, Phase::Validate];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Tree => "tree",
            Phase::See => "see",
            Phase::Saw => "saw",
            Phase::Validate => "validate",
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        match s {
            "tree" => Some(Phase::Tree),
            "see" => Some(Phase::See),
            "saw" => Some(Phase::Saw),
            "validate" => Some(Phase::Validate),
            _ => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Metadata identifying what a completion call is for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestTags {
    pub phase: Phase,
    pub path: Option<String>,
    pub round: u32,
}

impl RequestTags {
    pub fn new(phase: Phase, path: Option<&str>, round: u32) -> Self {
        Self {
            phase,
            path: path.map(str::to_owned),
            round,
        }
    }
}

impl fmt::Display for RequestTags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "phase={} path={} round={}",
            self.phase,
            self.path.as_deref().unwrap_or("-"),
            self.round
        )
    }
}

/// One completion call to be issued against a backend.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub system_text: String,
    pub user_text: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub tags: RequestTags,
}

impl CompletionRequest {
    /// Request with the defaults: empty system text, token limit
    /// [`DEFAULT_MAX_TOKENS`], temperature 0.
    pub fn new(user_text: impl Into<String>, tags: RequestTags) -> Self {
        Self {
            system_text: String::new(),
            user_text: user_text.into(),
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: 0.0,
            tags,
        }
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }
}

/// What came back from one completion call, with the provider-reported usage.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
    pub latency_s: f64,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("max_tokens {requested} exceeds the configured cap of {cap}")]
    CapExceeded { requested: u32, cap: u32 },
    #[error("no script entry matches call #{call_seq} ({tags})")]
    NoScriptMatch { call_seq: u64, tags: String },
    #[error("script parse error at line {line}: {reason}")]
    ScriptParse { line: usize, reason: String },
    #[error("backend transport error: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("{API_KEY_ENV} is not set")]
    MissingApiKey,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The provider boundary. Implementations must be safe for concurrent calls;
/// the engine itself issues calls strictly sequentially.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError>;
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

/// One pre-authored response in a script. Script files are JSON Lines: one
/// object per line with fields `match{phase, path?, round?, ordinal?}`,
/// `response_text` (or `response_file` naming a sidecar text file),
/// `prompt_tokens`, `completion_tokens`, `latency_s`, `repeatable`.
#[derive(Debug, Clone)]
pub struct ScriptEntry {
    pub phase: Phase,
    pub path: Option<String>,
    pub round: Option<u32>,
    /// When set, the entry only serves the k-th (1-based) call whose tags
    /// match this entry's phase/path/round pattern.
    pub ordinal: Option<u64>,
    pub response_text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_s: f64,
    pub repeatable: bool,
}

impl ScriptEntry {
    pub fn new(phase: Phase, response_text: impl Into<String>) -> Self {
        Self {
            phase,
            path: None,
            round: None,
            ordinal: None,
            response_text: response_text.into(),
            prompt_tokens: 0,
            completion_tokens: 0,
            latency_s: 0.0,
            repeatable: false,
        }
    }

    pub fn with_path(mut self, path: &str) -> Self {
        self.path = Some(path.to_owned());
        self
    }

    pub fn with_round(mut self, round: u32) -> Self {
        self.round = Some(round);
        self
    }

    pub fn with_tokens(mut self, prompt: u64, completion: u64) -> Self {
        self.prompt_tokens = prompt;
        self.completion_tokens = completion;
        self
    }

    pub fn with_latency(mut self, latency_s: f64) -> Self {
        self.latency_s = latency_s;
        self
    }

    pub fn repeatable(mut self) -> Self {
        self.repeatable = true;
        self
    }

    fn pattern_matches(&self, tags: &RequestTags) -> bool {
        self.phase == tags.phase
            && self.path.as_ref().is_none_or(|p| Some(p) == tags.path.as_ref())
            && self.round.is_none_or(|r| r == tags.round)
    }
}

#[derive(Debug, Deserialize)]
struct RawMatch {
    phase: Phase,
    path: Option<String>,
    round: Option<u32>,
    ordinal: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct RawScriptEntry {
    #[serde(rename = "match")]
    key: RawMatch,
    response_text: Option<String>,
    response_file: Option<String>,
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
    #[serde(default)]
    latency_s: f64,
    #[serde(default)]
    repeatable: bool,
}

#[derive(Debug, Default)]
struct ScriptState {
    consumed: Vec<bool>,
    pattern_hits: Vec<u64>,
    calls_seen: u64,
    requests: Vec<CompletionRequest>,
}

/// Deterministic record-replay backend: responses are served first-match in
/// declaration order, non-repeatable entries are consumed, and every request
/// is captured for later inspection.
#[derive(Debug)]
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
    cap: u32,
    state: Mutex<ScriptState>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let state = ScriptState {
            consumed: vec![false; entries.len()],
            pattern_hits: vec![0; entries.len()],
            ..ScriptState::default()
        };
        Self {
            entries,
            cap: DEFAULT_MAX_TOKENS,
            state: Mutex::new(state),
        }
    }

    pub fn with_cap(mut self, cap: u32) -> Self {
        self.cap = cap;
        self
    }

    /// Parse the JSON Lines script format. `base_dir` anchors `response_file`
    /// sidecar paths; sidecars are read eagerly so a bad path fails at load
    /// time, not mid-run.
    pub fn from_script_str(text: &str, base_dir: Option<&Path>) -> Result<Self, BackendError> {
        let mut entries = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawScriptEntry =
                serde_json::from_str(line).map_err(|e| BackendError::ScriptParse {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            let response_text = match (raw.response_text, raw.response_file) {
                (Some(text), None) => text,
                (None, Some(file)) => {
                    let path = match base_dir {
                        Some(dir) => dir.join(&file),
                        None => Path::new(&file).to_path_buf(),
                    };
                    fs::read_to_string(&path).map_err(|e| BackendError::ScriptParse {
                        line: line_no,
                        reason: format!("response_file {}: {e}", path.display()),
                    })?
                }
                (Some(_), Some(_)) => {
                    return Err(BackendError::ScriptParse {
                        line: line_no,
                        reason: "response_text and response_file are mutually exclusive".into(),
                    })
                }
                (None, None) => {
                    return Err(BackendError::ScriptParse {
                        line: line_no,
                        reason: "one of response_text or response_file is required".into(),
                    })
                }
            };
            entries.push(ScriptEntry {
                phase: raw.key.phase,
                path: raw.key.path,
                round: raw.key.round,
                ordinal: raw.key.ordinal,
                response_text,
                prompt_tokens: raw.prompt_tokens,
                completion_tokens: raw.completion_tokens,
                latency_s: raw.latency_s,
                repeatable: raw.repeatable,
            });
        }
        Ok(Self::new(entries))
    }

    /// Load a script file; sidecar `response_file` paths resolve relative to
    /// the script's directory.
    pub fn load_script(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path)?;
        Self::from_script_str(&text, path.parent())
    }

    /// Every request seen so far, in call order.
    pub fn seen_requests(&self) -> Vec<CompletionRequest> {
        self.state.lock().unwrap().requests.clone()
    }

    /// Non-repeatable entries not yet consumed.
    pub fn unconsumed(&self) -> usize {
        let state = self.state.lock().unwrap();
        self.entries
            .iter()
            .zip(state.consumed.iter())
            .filter(|(e, consumed)| !e.repeatable && !**consumed)
            .count()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        if request.max_tokens > self.cap {
            return Err(BackendError::CapExceeded {
                requested: request.max_tokens,
                cap: self.cap,
            });
        }
        let mut state = self.state.lock().unwrap();
        state.calls_seen += 1;
        state.requests.push(request.clone());
        for (i, entry) in self.entries.iter().enumerate() {
            if !entry.pattern_matches(&request.tags) {
                continue;
            }
            state.pattern_hits[i] += 1;
            let ordinal_ok = entry.ordinal.is_none_or(|k| k == state.pattern_hits[i]);
            if !ordinal_ok {
                continue;
            }
            if !entry.repeatable && state.consumed[i] {
                continue;
            }
            state.consumed[i] = true;
            return Ok(CompletionResult {
                text: entry.response_text.clone(),
                prompt_tokens: entry.prompt_tokens,
                completion_tokens: entry.completion_tokens,
                total_tokens: entry.prompt_tokens + entry.completion_tokens,
                latency_s: entry.latency_s,
            });
        }
        Err(BackendError::NoScriptMatch {
            call_seq: state.calls_seen,
            tags: request.tags.to_string(),
        })
    }
}

// ---------------------------------------------------------------------------
// HTTP backend (OpenAI-compatible chat completions)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub model: String,
    pub timeout_s: u64,
    pub cap: u32,
}

impl HttpBackendConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            timeout_s: 300,
            cap: DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequestBody<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    max_tokens: u32,
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
    #[allow(dead_code)]
    #[serde(default)]
    total_tokens: u64,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatResponseBody {
    choices: Vec<ChatChoice>,
    usage: ChatUsage,
}

/// Client for `POST {base_url}/chat/completions`. The API key is read from
/// the `SEESAW_API_KEY` environment variable only. One retry on transport
/// errors with a fixed 2 s backoff; HTTP error statuses are not retried.
pub struct HttpBackend {
    config: HttpBackendConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn from_env(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(API_KEY_ENV).map_err(|_| BackendError::MissingApiKey)?;
        if api_key.is_empty() {
            return Err(BackendError::MissingApiKey);
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            client,
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn send_once(&self, body: &ChatRequestBody<'_>) -> Result<reqwest::blocking::Response, reqwest::Error> {
        self.client
            .post(self.endpoint())
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        if request.max_tokens > self.config.cap {
            return Err(BackendError::CapExceeded {
                requested: request.max_tokens,
                cap: self.config.cap,
            });
        }
        let mut messages = Vec::with_capacity(2);
        if !request.system_text.is_empty() {
            messages.push(ChatMessage {
                role: "system",
                content: &request.system_text,
            });
        }
        messages.push(ChatMessage {
            role: "user",
            content: &request.user_text,
        });
        let body = ChatRequestBody {
            model: &self.config.model,
            messages,
            max_tokens: request.max_tokens,
            temperature: request.temperature,
        };

        let started = Instant::now();
        let response = match self.send_once(&body) {
            Ok(r) => r,
            Err(first) => {
                std::thread::sleep(TRANSPORT_RETRY_BACKOFF);
                self.send_once(&body).map_err(|second| {
                    BackendError::Transport(format!("{first} (retry failed: {second})"))
                })?
            }
        };
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(BackendError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let parsed: ChatResponseBody = response
            .json()
            .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        let latency_s = started.elapsed().as_secs_f64();
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::MalformedResponse("empty choices array".into()))?;
        Ok(CompletionResult {
            text: choice.message.content,
            prompt_tokens: parsed.usage.prompt_tokens,
            completion_tokens: parsed.usage.completion_tokens,
            total_tokens: parsed.usage.prompt_tokens + parsed.usage.completion_tokens,
            latency_s,
        })
    }
}
