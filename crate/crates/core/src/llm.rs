//! Chat-completion clients.
//!
//! [`HttpChatClient`] speaks the OpenAI-style `/chat/completions` protocol.
//! [`ScriptedMock`] and [`HeuristicMock`] are deterministic stand-ins used by
//! tests and offline runs; the heuristic mock reads the rendered prompt the
//! same way a model would and answers in the same reply format.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::sync::{Arc, LazyLock, Mutex};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mapping::CellCoord;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("could not decode response: {0}")]
    Decode(String),
    #[error("request failed: {0}")]
    Request(String),
    #[error("scripted responses exhausted")]
    Exhausted,
    #[error("prompt has no frontier cells")]
    NoCandidates,
}

/// Anything that turns a prompt into a completion.
pub trait ChatClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, TransportError>;
}

impl<T: ChatClient + ?Sized> ChatClient for Arc<T> {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        (**self).complete(prompt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuthHeader {
    /// `Authorization: Bearer <key>`
    #[default]
    Bearer,
    /// `api-key: <key>` (Azure-style deployments)
    ApiKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub temperature: f64,
    pub timeout_secs: f64,
    pub max_response_tokens: u32,
    pub auth_header: AuthHeader,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            temperature: 0.0,
            timeout_secs: 30.0,
            max_response_tokens: 1024,
            auth_header: AuthHeader::Bearer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmConfigError {
    #[error("environment variable {0} is not set (required for the API key)")]
    MissingKey(String),
    #[error("temperature must be >= 0")]
    Temperature,
    #[error("timeout must be > 0")]
    Timeout,
    #[error("could not build HTTP client: {0}")]
    Client(String),
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), LlmConfigError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmConfigError::Temperature);
        }
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(LlmConfigError::Timeout);
        }
        Ok(())
    }

    /// Loopback endpoints may run without a key.
    pub fn is_local(&self) -> bool {
        reqwest::Url::parse(&self.base_url)
            .ok()
            .and_then(|u| u.host_str().map(str::to_owned))
            .is_some_and(|h| matches!(h.as_str(), "localhost" | "127.0.0.1" | "[::1]"))
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    max_tokens: u32,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

pub struct HttpChatClient {
    cfg: LlmConfig,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl fmt::Debug for HttpChatClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpChatClient")
            .field("base_url", &self.cfg.base_url)
            .field("model", &self.cfg.model)
            .finish_non_exhaustive()
    }
}

impl HttpChatClient {
    /// Reads the API key from the configured environment variable. A missing
    /// key is an error unless the endpoint is on loopback.
    pub fn new(cfg: LlmConfig) -> Result<Self, LlmConfigError> {
        cfg.validate()?;
        let api_key = std::env::var(&cfg.api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        if api_key.is_none() && !cfg.is_local() {
            return Err(LlmConfigError::MissingKey(cfg.api_key_env.clone()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| LlmConfigError::Client(e.to_string()))?;
        Ok(HttpChatClient { cfg, api_key, http })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.cfg
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        http_complete(&self.http, &self.cfg, self.api_key.as_deref(), prompt)
    }
}

fn http_complete(
    http: &reqwest::blocking::Client,
    cfg: &LlmConfig,
    api_key: Option<&str>,
    prompt: &str,
) -> Result<String, TransportError> {
    let url = format!("{}/chat/completions", cfg.base_url.trim_end_matches('/'));
    let body = ChatRequest {
        model: &cfg.model,
        temperature: cfg.temperature,
        max_tokens: cfg.max_response_tokens,
        messages: [ChatMessage {
            role: "user",
            content: prompt,
        }],
    };
    let mut req = http.post(&url).json(&body);
    if let Some(key) = api_key {
        req = match cfg.auth_header {
            AuthHeader::Bearer => req.bearer_auth(key),
            AuthHeader::ApiKey => req.header("api-key", key),
        };
    }
    let resp = req.send().map_err(map_reqwest)?;
    let status = resp.status();
    let text = resp.text().map_err(map_reqwest)?;
    if !status.is_success() {
        return Err(TransportError::Status {
            status: status.as_u16(),
            body: text,
        });
    }
    let parsed: ChatResponse =
        serde_json::from_str(&text).map_err(|e| TransportError::Decode(e.to_string()))?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| TransportError::Decode("response has no choices[0].message.content".into()))
}

fn map_reqwest(e: reqwest::Error) -> TransportError {
    if e.is_timeout() {
        TransportError::Timeout
    } else {
        TransportError::Request(e.to_string())
    }
}

/// Replays a fixed list of replies in order and records every prompt.
#[derive(Debug, Default)]
pub struct ScriptedMock {
    replies: Mutex<VecDeque<Result<String, TransportError>>>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedMock {
    pub fn new<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self::with_replies(responses.into_iter().map(|s| Ok(s.into())))
    }

    /// Replies may include scripted transport errors.
    pub fn with_replies(replies: impl IntoIterator<Item = Result<String, TransportError>>) -> Self {
        ScriptedMock {
            replies: Mutex::new(replies.into_iter().collect()),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("prompt log poisoned").clone()
    }
}

impl ChatClient for ScriptedMock {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        // both locks are held so concurrent callers observe a single order
        let mut replies = self.replies.lock().expect("reply queue poisoned");
        self.prompts
            .lock()
            .expect("prompt log poisoned")
            .push(prompt.to_owned());
        replies
            .pop_front()
            .unwrap_or(Err(TransportError::Exhausted))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicWeights {
    pub frontier: f64,
    pub occupied: f64,
    pub distance: f64,
}

impl Default for HeuristicWeights {
    fn default() -> Self {
        HeuristicWeights {
            frontier: 1.0,
            occupied: 1.0,
            distance: 0.2,
        }
    }
}

/// Score subtracted from a cell another team already targets.
pub const CONFLICT_PENALTY: f64 = 100.0;

static CELL_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\((\d+),(\d+)\) label=(\d) nf=(\d+) no=(\d+) d=([0-9]+(?:\.[0-9]+)?)$")
        .expect("valid regex")
});
static TEAM_TARGET: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"target=\((\d+),(\d+)\)").expect("valid regex"));

/// Stateless stand-in model: scores each frontier line of the prompt as
/// `w_f·nf − w_o·no − w_d·d`, penalizes other teams' targets, and answers
/// with the best cell (ties go to the first cell in row-major order).
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicMock {
    pub weights: HeuristicWeights,
}

impl HeuristicMock {
    pub fn new(weights: HeuristicWeights) -> Self {
        HeuristicMock { weights }
    }
}

impl ChatClient for HeuristicMock {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        let mut taken = BTreeSet::new();
        let mut in_teams = false;
        let mut best: Option<(f64, CellCoord, u32, u32, f64)> = None;
        for line in prompt.lines() {
            let line = line.trim();
            if line == "Other teams:" {
                in_teams = true;
                continue;
            }
            if in_teams {
                if line.is_empty() {
                    in_teams = false;
                } else if let Some(c) = TEAM_TARGET.captures(line) {
                    taken.insert(CellCoord::new(
                        c[1].parse().unwrap_or(0),
                        c[2].parse().unwrap_or(0),
                    ));
                }
                continue;
            }
            let Some(c) = CELL_LINE.captures(line) else {
                continue;
            };
            if &c[3] != "3" {
                continue;
            }
            let parse = |i: usize| {
                c[i].parse::<u32>()
                    .map_err(|e| TransportError::Decode(e.to_string()))
            };
            let cell = CellCoord::new(parse(1)? as usize, parse(2)? as usize);
            let (nf, no) = (parse(4)?, parse(5)?);
            let d: f64 = c[6]
                .parse()
                .map_err(|_| TransportError::Decode(c[6].to_owned()))?;
            let w = &self.weights;
            let mut score = w.frontier * nf as f64 - w.occupied * no as f64 - w.distance * d;
            if taken.contains(&cell) {
                score -= CONFLICT_PENALTY;
            }
            let better = match &best {
                None => true,
                Some((s, bc, ..)) => score > *s || (score == *s && cell < *bc),
            };
            if better {
                best = Some((score, cell, nf, no, d));
            }
        }
        let (score, cell, nf, no, d) = best.ok_or(TransportError::NoCandidates)?;
        Ok(format!(
            "Cell ({},{}) has {nf} frontier neighbors, {no} obstacle neighbors and is {d:.2} m away (score {score:.2}).\nTARGET: ({},{})",
            cell.col, cell.row, cell.col, cell.row
        ))
    }
}
