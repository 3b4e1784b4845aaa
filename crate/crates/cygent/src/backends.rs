//! Completion backends: a remote chat-completions client and the offline
//! extractive fallback.

use std::fmt;
use std::time::Duration;

use cygent_core::summarizer::{extractive_fallback, log_excerpt, model_prompt};
use cygent_core::tokens::total_tokens;
use cygent_core::{count_tokens, ChatMessage, ExtractionReport, ParsedLog, Role, CONVERSATION_TOKEN_LIMIT};
use serde::{Deserialize, Serialize};

pub const FALLBACK_NAME: &str = "extractive-fallback";

/// Reply used by the fallback backend in chat, which has no language model.
pub const FALLBACK_CHAT_REPLY: &str = "No language model is configured, so I can only summarize uploaded logs. \
Upload a file and ask me to summarize it by name, or use the summarize action.";

/// Secret string that never appears in `Debug` output or serialized form.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub base_url: String,
    pub api_key: ApiKey,
    pub model_name: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub prompt_token_budget: usize,
    /// First retry delay; doubled on each further retry.
    pub backoff_base: Duration,
    pub excerpt_lines: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            base_url: String::new(),
            api_key: ApiKey::default(),
            model_name: String::new(),
            timeout_s: 30.0,
            max_retries: 2,
            prompt_token_budget: 2048,
            backoff_base: Duration::from_secs(1),
            excerpt_lines: cygent_core::summarizer::DEFAULT_EXCERPT_LINES,
        }
    }
}

impl BackendConfig {
    /// Reads `CYGENT_API_BASE`, `CYGENT_API_KEY` and `CYGENT_MODEL`.
    pub fn from_env() -> Result<Self, BackendError> {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.is_empty());
        let base_url = var("CYGENT_API_BASE").ok_or_else(|| BackendError::InvalidConfig("CYGENT_API_BASE is not set".into()))?;
        let cfg = Self {
            base_url,
            api_key: ApiKey::new(var("CYGENT_API_KEY").unwrap_or_default()),
            model_name: var("CYGENT_MODEL").unwrap_or_else(|| "gpt-3.5-turbo".into()),
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(BackendError::InvalidConfig(format!("timeout must be positive, got {}", self.timeout_s)));
        }
        if self.prompt_token_budget == 0 {
            return Err(BackendError::InvalidConfig("prompt token budget must be positive".into()));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(BackendError::InvalidConfig(format!("base url `{}` is not http(s)", self.base_url)));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("authentication rejected (HTTP {0})")]
    AuthFailure(u16),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("timed out after {attempts} attempts")]
    TimeoutExhausted { attempts: u32 },
    #[error("server error HTTP {status} after {attempts} attempts")]
    ServerError { status: u16, attempts: u32 },
    #[error("request rejected with HTTP {0}")]
    Rejected(u16),
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("malformed reply: {0}")]
    MalformedReply(String),
    #[error("conversation of {tokens} tokens exceeds the {limit}-token window")]
    WindowExceeded { tokens: usize, limit: usize },
    #[error("empty conversation")]
    EmptyConversation,
    #[error("prompt of {tokens} tokens exceeds the {budget}-token budget")]
    PromptTooLarge { tokens: usize, budget: usize },
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
}

#[derive(Deserialize)]
struct WireReply {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireReplyMessage,
}

#[derive(Deserialize)]
struct WireReplyMessage {
    content: String,
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

/// Client for any endpoint speaking the chat-completions wire shape.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    cfg: BackendConfig,
    http: reqwest::Client,
}

enum Attempt {
    Done(String),
    Retry(BackendError),
    Fatal(BackendError),
}

impl RemoteBackend {
    pub fn new(cfg: BackendConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_s))
            .build()
            .map_err(|e| BackendError::InvalidConfig(e.to_string()))?;
        Ok(Self { cfg, http })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'))
    }

    /// Single-turn completion.
    pub async fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let tokens = count_tokens(prompt);
        if tokens > self.cfg.prompt_token_budget {
            return Err(BackendError::PromptTooLarge {
                tokens,
                budget: self.cfg.prompt_token_budget,
            });
        }
        self.send(&[ChatMessage::user(prompt)]).await
    }

    /// Multi-turn chat; the reply is returned as an assistant message.
    pub async fn chat(&self, messages: &[ChatMessage]) -> Result<ChatMessage, BackendError> {
        check_conversation(messages)?;
        self.send(messages).await.map(ChatMessage::assistant)
    }

    async fn send(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let body = WireRequest {
            model: &self.cfg.model_name,
            messages: messages
                .iter()
                .map(|m| WireMessage {
                    role: role_name(m.role),
                    content: &m.content,
                })
                .collect(),
            temperature: 0.0,
        };
        let url = self.endpoint();
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.attempt(&url, &body, attempt).await {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(err) => return Err(err),
                Attempt::Retry(err) if attempt > self.cfg.max_retries => return Err(err),
                Attempt::Retry(err) => {
                    let delay = self.cfg.backoff_base * 2u32.saturating_pow(attempt - 1);
                    tracing::debug!(attempt, ?delay, error = %err, "retrying backend request");
                    tokio::time::sleep(delay).await;
                }
            }
        }
    }

    async fn attempt(&self, url: &str, body: &WireRequest<'_>, attempts: u32) -> Attempt {
        let response = match self.http.post(url).bearer_auth(self.cfg.api_key.expose()).json(body).send().await {
            Ok(response) => response,
            Err(e) if e.is_timeout() => return Attempt::Retry(BackendError::TimeoutExhausted { attempts }),
            Err(e) => return Attempt::Fatal(BackendError::Unreachable(e.without_url().to_string())),
        };
        let status = response.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Attempt::Fatal(BackendError::AuthFailure(status)),
            429 => return Attempt::Retry(BackendError::RateLimited { attempts }),
            500..=599 => return Attempt::Retry(BackendError::ServerError { status, attempts }),
            _ => return Attempt::Fatal(BackendError::Rejected(status)),
        }
        let bytes = match response.bytes().await {
            Ok(bytes) => bytes,
            Err(e) if e.is_timeout() => return Attempt::Retry(BackendError::TimeoutExhausted { attempts }),
            Err(e) => return Attempt::Fatal(BackendError::MalformedReply(e.without_url().to_string())),
        };
        match serde_json::from_slice::<WireReply>(&bytes) {
            Ok(reply) => match reply.choices.into_iter().next() {
                Some(choice) => Attempt::Done(choice.message.content),
                None => Attempt::Fatal(BackendError::MalformedReply("no choices".into())),
            },
            Err(e) => Attempt::Fatal(BackendError::MalformedReply(e.to_string())),
        }
    }
}

fn check_conversation(messages: &[ChatMessage]) -> Result<(), BackendError> {
    if messages.is_empty() {
        return Err(BackendError::EmptyConversation);
    }
    let tokens = total_tokens(messages);
    if tokens > CONVERSATION_TOKEN_LIMIT {
        return Err(BackendError::WindowExceeded {
            tokens,
            limit: CONVERSATION_TOKEN_LIMIT,
        });
    }
    Ok(())
}

/// The backend a service or CLI run is configured with.
#[derive(Debug, Clone)]
pub enum Backend {
    Remote(RemoteBackend),
    Fallback,
}

impl Backend {
    pub fn name(&self) -> &str {
        match self {
            Backend::Remote(remote) => &remote.cfg.model_name,
            Backend::Fallback => FALLBACK_NAME,
        }
    }

    /// Model-layer summary of a parsed log.
    pub async fn summarize(&self, content: &str, parsed: &ParsedLog, report: &ExtractionReport) -> Result<String, BackendError> {
        match self {
            Backend::Remote(remote) => {
                let excerpt = log_excerpt(content, remote.cfg.excerpt_lines);
                remote.complete(&model_prompt(&excerpt, remote.cfg.prompt_token_budget)).await
            }
            Backend::Fallback => Ok(extractive_fallback(parsed, report)),
        }
    }

    pub async fn chat(&self, messages: &[ChatMessage]) -> Result<ChatMessage, BackendError> {
        match self {
            Backend::Remote(remote) => remote.chat(messages).await,
            Backend::Fallback => {
                check_conversation(messages)?;
                Ok(ChatMessage::assistant(FALLBACK_CHAT_REPLY))
            }
        }
    }
}
