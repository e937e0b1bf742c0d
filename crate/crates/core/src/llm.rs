//! Uniform access to text-completion providers, plus a deterministic
//! scripted mock used by every test that exercises the translation loop.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TokenUsage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Human,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

/// An ordered transcript of human/assistant turns. Roles strictly
/// alternate starting with a human turn.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dialogue {
    turns: Vec<Turn>,
}

impl Dialogue {
    pub fn new() -> Dialogue {
        Dialogue { turns: Vec::new() }
    }

    pub fn from_human(text: impl Into<String>) -> Dialogue {
        Dialogue { turns: vec![Turn { role: Role::Human, text: text.into() }] }
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn last_role(&self) -> Option<Role> {
        self.turns.last().map(|t| t.role)
    }

    pub fn push_human(&mut self, text: impl Into<String>) -> Result<(), LlmError> {
        self.push(Role::Human, text.into())
    }

    pub fn push_assistant(&mut self, text: impl Into<String>) -> Result<(), LlmError> {
        self.push(Role::Assistant, text.into())
    }

    fn push(&mut self, role: Role, text: String) -> Result<(), LlmError> {
        let ok = match (self.turns.last(), role) {
            (None, Role::Human) => true,
            (Some(last), _) => last.role != role,
            (None, Role::Assistant) => false,
        };
        if !ok {
            return Err(LlmError::BrokenAlternation);
        }
        self.turns.push(Turn { role, text });
        Ok(())
    }

    /// Replaces the transcript wholesale; used by window truncation, which
    /// must re-validate alternation.
    pub fn from_turns(turns: Vec<Turn>) -> Result<Dialogue, LlmError> {
        let mut d = Dialogue::new();
        for t in turns {
            d.push(t.role, t.text)?;
        }
        Ok(d)
    }

    /// Stable textual rendering, used for fingerprinting and determinism
    /// checks.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for turn in &self.turns {
            match turn.role {
                Role::Human => out.push_str("Human:\n"),
                Role::Assistant => out.push_str("Assistant:\n"),
            }
            out.push_str(&turn.text);
            out.push_str("\n\n");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub temperature: f64,
    #[serde(default)]
    pub top_p: Option<f64>,
    #[serde(default)]
    pub top_k: Option<u32>,
    pub max_output_tokens: u32,
}

impl Default for Hyperparameters {
    fn default() -> Hyperparameters {
        // top_p/top_k stay at the provider default unless overridden.
        Hyperparameters { temperature: 0.2, top_p: None, top_k: None, max_output_tokens: 8192 }
    }
}

#[derive(Debug, Clone)]
pub struct Completion {
    pub text: String,
    pub usage: TokenUsage,
    pub provider_id: String,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after retries")]
    RateLimited,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned an empty response")]
    EmptyResponse,
    #[error("provider truncated the response")]
    ContentTruncated,
    #[error("no playbook entry matches the prompt")]
    UnmatchedPrompt,
    #[error("playbook parse error: {0}")]
    PlaybookParse(String),
    #[error("dialogue roles must alternate starting with human")]
    BrokenAlternation,
    #[error("unknown provider profile {0:?}")]
    UnknownProfile(String),
    #[error("gateway config: {0}")]
    Config(String),
}

pub trait Provider: Send + Sync {
    fn complete(&self, dialogue: &Dialogue, hp: &Hyperparameters) -> Result<Completion, LlmError>;
    fn id(&self) -> &str;
}

/// Rough token estimate used by the mock so usage accounting stays
/// deterministic: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum PlaybookFile {
    Plain(Vec<String>),
    Keyed(Vec<PlaybookEntry>),
}

#[derive(Debug, Clone, Deserialize)]
struct PlaybookEntry {
    response: String,
    /// Substring of the rendered prompt this entry answers. Entries
    /// without a key are consumed in order.
    #[serde(default)]
    key: Option<String>,
}

/// Scripted provider: dequeues canned responses in order, or by
/// fingerprint match when keys are present. Internally synchronized so
/// tests may share it.
pub struct MockProvider {
    entries: Mutex<Vec<(PlaybookEntry, bool)>>,
    calls: AtomicU64,
    id: String,
}

impl MockProvider {
    pub fn from_responses(responses: Vec<String>) -> MockProvider {
        MockProvider {
            entries: Mutex::new(
                responses
                    .into_iter()
                    .map(|response| (PlaybookEntry { response, key: None }, false))
                    .collect(),
            ),
            calls: AtomicU64::new(0),
            id: "mock".to_string(),
        }
    }

    /// Number of completions served so far (including failed lookups).
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Loads a scripted mock provider from a playbook file.
pub fn load_playbook(path: &Path) -> Result<MockProvider, LlmError> {
    let text = std::fs::read_to_string(path).map_err(|e| LlmError::PlaybookParse(e.to_string()))?;
    let file: PlaybookFile =
        serde_json::from_str(&text).map_err(|e| LlmError::PlaybookParse(e.to_string()))?;
    let entries = match file {
        PlaybookFile::Plain(responses) => {
            responses.into_iter().map(|response| PlaybookEntry { response, key: None }).collect()
        }
        PlaybookFile::Keyed(entries) => entries,
    };
    Ok(MockProvider {
        entries: Mutex::new(entries.into_iter().map(|e| (e, false)).collect()),
        calls: AtomicU64::new(0),
        id: "mock".to_string(),
    })
}

impl Provider for MockProvider {
    fn complete(&self, dialogue: &Dialogue, _hp: &Hyperparameters) -> Result<Completion, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let rendered = dialogue.render();
        let mut entries = self.entries.lock().expect("mock provider poisoned");
        let any_keyed = entries.iter().any(|(e, _)| e.key.is_some());
        let found = entries.iter_mut().find(|(e, used)| {
            !*used && e.key.as_ref().map(|k| rendered.contains(k.as_str())).unwrap_or(!any_keyed)
        });
        let entry = match found {
            Some((entry, used)) => {
                *used = true;
                entry.clone()
            }
            None => {
                let exhausted = entries.iter().all(|(_, used)| *used);
                return Err(if any_keyed && !exhausted {
                    LlmError::UnmatchedPrompt
                } else {
                    LlmError::EmptyResponse
                });
            }
        };
        Ok(Completion {
            usage: TokenUsage {
                input_tokens: estimate_tokens(&rendered),
                output_tokens: estimate_tokens(&entry.response),
            },
            text: entry.response,
            provider_id: self.id.clone(),
        })
    }

    fn id(&self) -> &str {
        &self.id
    }
}

/// One named provider profile in the gateway config file. API keys come
/// only from the environment, never from config.
#[derive(Debug, Clone, Deserialize)]
pub struct ProviderProfile {
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Path to a playbook file; presence makes this a mock profile.
    #[serde(default)]
    pub playbook: Option<String>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub top_p: Option<f64>,
    #[serde(default)]
    pub top_k: Option<u32>,
    #[serde(default)]
    pub max_output_tokens: Option<u32>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GatewayConfig {
    pub providers: BTreeMap<String, ProviderProfile>,
}

impl GatewayConfig {
    pub fn load(path: &Path) -> Result<GatewayConfig, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Config(e.to_string()))?;
        toml::from_str(&text).map_err(|e| LlmError::Config(e.to_string()))
    }

    pub fn hyperparameters(&self, profile: &str) -> Result<Hyperparameters, LlmError> {
        let p = self
            .providers
            .get(profile)
            .ok_or_else(|| LlmError::UnknownProfile(profile.to_string()))?;
        let mut hp = Hyperparameters::default();
        if let Some(t) = p.temperature {
            hp.temperature = t;
        }
        hp.top_p = p.top_p;
        hp.top_k = p.top_k;
        if let Some(m) = p.max_output_tokens {
            hp.max_output_tokens = m;
        }
        Ok(hp)
    }

    /// Instantiates the provider behind a named profile.
    pub fn make_provider(&self, profile: &str) -> Result<Box<dyn Provider>, LlmError> {
        let p = self
            .providers
            .get(profile)
            .ok_or_else(|| LlmError::UnknownProfile(profile.to_string()))?;
        if let Some(playbook) = &p.playbook {
            let mut mock = load_playbook(Path::new(playbook))?;
            mock.id = profile.to_string();
            return Ok(Box::new(mock));
        }
        #[cfg(feature = "live-llm")]
        {
            let endpoint = p
                .endpoint
                .clone()
                .ok_or_else(|| LlmError::Config(format!("profile {profile} has no endpoint")))?;
            let model = p
                .model
                .clone()
                .ok_or_else(|| LlmError::Config(format!("profile {profile} has no model")))?;
            let key_env = p
                .api_key_env
                .clone()
                .unwrap_or_else(|| format!("{}_API_KEY", profile.to_uppercase()));
            let api_key = std::env::var(&key_env)
                .map_err(|_| LlmError::Auth(format!("env var {key_env} not set")))?;
            Ok(Box::new(HttpProvider::new(profile.to_string(), endpoint, model, api_key)))
        }
        #[cfg(not(feature = "live-llm"))]
        Err(LlmError::Config(format!(
            "profile {profile} needs the live-llm feature (or a playbook)"
        )))
    }
}

/// Retry policy for transient transport failures: bounded exponential
/// backoff, never applied to content errors.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub backoff: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> RetryPolicy {
        RetryPolicy {
            attempts: 3,
            backoff: vec![Duration::from_secs(1), Duration::from_secs(4), Duration::from_secs(16)],
        }
    }
}

impl RetryPolicy {
    pub fn run<T>(
        &self,
        mut op: impl FnMut() -> Result<T, LlmError>,
    ) -> Result<T, LlmError> {
        let mut last = None;
        for attempt in 0..self.attempts {
            match op() {
                Ok(value) => return Ok(value),
                Err(e @ (LlmError::Transport(_) | LlmError::RateLimited)) => {
                    if attempt + 1 < self.attempts {
                        if let Some(d) = self.backoff.get(attempt as usize) {
                            std::thread::sleep(*d);
                        }
                    }
                    last = Some(e);
                }
                Err(other) => return Err(other),
            }
        }
        Err(last.unwrap_or(LlmError::EmptyResponse))
    }
}

/// OpenAI-style chat-completions client over HTTP.
#[cfg(feature = "live-llm")]
pub struct HttpProvider {
    id: String,
    endpoint: String,
    model: String,
    api_key: String,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
    // Serializes bursts so concurrent tasks share one pipe per provider.
    gate: Mutex<()>,
}

#[cfg(feature = "live-llm")]
impl HttpProvider {
    pub fn new(id: String, endpoint: String, model: String, api_key: String) -> HttpProvider {
        HttpProvider {
            id,
            endpoint,
            model,
            api_key,
            retry: RetryPolicy::default(),
            client: reqwest::blocking::Client::new(),
            gate: Mutex::new(()),
        }
    }

    fn request_once(
        &self,
        dialogue: &Dialogue,
        hp: &Hyperparameters,
    ) -> Result<Completion, LlmError> {
        let messages: Vec<serde_json::Value> = dialogue
            .turns()
            .iter()
            .map(|t| {
                serde_json::json!({
                    "role": match t.role { Role::Human => "user", Role::Assistant => "assistant" },
                    "content": t.text,
                })
            })
            .collect();
        let mut body = serde_json::json!({
            "model": self.model,
            "messages": messages,
            "temperature": hp.temperature,
            "max_tokens": hp.max_output_tokens,
        });
        if let Some(top_p) = hp.top_p {
            body["top_p"] = serde_json::json!(top_p);
        }
        let _burst = self.gate.lock().expect("provider gate poisoned");
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        match response.status().as_u16() {
            200 => {}
            401 | 403 => return Err(LlmError::Auth("provider rejected credentials".into())),
            429 => return Err(LlmError::RateLimited),
            code => return Err(LlmError::Transport(format!("http status {code}"))),
        }
        let payload: serde_json::Value =
            response.json().map_err(|e| LlmError::Transport(e.to_string()))?;
        let choice = &payload["choices"][0];
        let text = choice["message"]["content"].as_str().unwrap_or("").to_string();
        if text.is_empty() {
            return Err(LlmError::EmptyResponse);
        }
        if choice["finish_reason"].as_str() == Some("length") {
            return Err(LlmError::ContentTruncated);
        }
        Ok(Completion {
            text,
            usage: TokenUsage {
                input_tokens: payload["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
                output_tokens: payload["usage"]["completion_tokens"].as_u64().unwrap_or(0),
            },
            provider_id: self.id.clone(),
        })
    }
}

#[cfg(feature = "live-llm")]
impl Provider for HttpProvider {
    fn complete(&self, dialogue: &Dialogue, hp: &Hyperparameters) -> Result<Completion, LlmError> {
        self.retry.run(|| self.request_once(dialogue, hp))
    }

    fn id(&self) -> &str {
        &self.id
    }
}
