//! Token accounting and the conversation window.
//!
//! The tokenizer approximates a subword model tokenizer: every maximal
//! alphanumeric run counts as one token and every other non-whitespace
//! character counts as one token on its own. English prose comes out at
//! roughly 1.2 to 1.4 tokens per word, so the 4096-token window holds about
//! 3000 words of chat.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Total token budget of one chat session.
pub const CONVERSATION_TOKEN_LIMIT: usize = 4096;

pub fn count_tokens(text: &str) -> usize {
    let mut count = 0;
    let mut in_word = false;
    for c in text.chars() {
        if c.is_alphanumeric() {
            if !in_word {
                count += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                count += 1;
            }
        }
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    pub token_count: usize,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        let content = content.into();
        let token_count = count_tokens(&content);
        Self {
            role,
            content,
            token_count,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

pub fn total_tokens(messages: &[ChatMessage]) -> usize {
    messages.iter().map(|m| m.token_count).sum()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WindowError {
    #[error("message of {tokens} tokens exceeds the {available} tokens available in the window")]
    OversizeMessage { tokens: usize, available: usize },
    #[error("a system message may only open an empty conversation")]
    MisplacedSystemMessage,
}

/// Fixed token budget enforced by whole-message eviction, oldest first.
///
/// A leading system message is pinned and never evicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenWindow {
    pub budget: usize,
}

impl Default for TokenWindow {
    fn default() -> Self {
        Self {
            budget: CONVERSATION_TOKEN_LIMIT,
        }
    }
}

impl TokenWindow {
    pub fn new(budget: usize) -> Self {
        Self { budget }
    }

    /// Tokens available to non-system messages.
    pub fn available(&self, messages: &[ChatMessage]) -> usize {
        let pinned = match messages.first() {
            Some(m) if m.role == Role::System => m.token_count,
            _ => 0,
        };
        self.budget.saturating_sub(pinned)
    }

    /// Appends `msg`, evicting the oldest non-system messages until the
    /// conversation fits. Returns the number of evicted messages. On error
    /// `messages` is left untouched.
    pub fn append(&self, messages: &mut Vec<ChatMessage>, msg: ChatMessage) -> Result<usize, WindowError> {
        if msg.role == Role::System {
            if !messages.is_empty() {
                return Err(WindowError::MisplacedSystemMessage);
            }
            if msg.token_count > self.budget {
                return Err(WindowError::OversizeMessage {
                    tokens: msg.token_count,
                    available: self.budget,
                });
            }
            messages.push(msg);
            return Ok(0);
        }

        let available = self.available(messages);
        if msg.token_count > available {
            return Err(WindowError::OversizeMessage {
                tokens: msg.token_count,
                available,
            });
        }
        let first_evictable = usize::from(messages.first().is_some_and(|m| m.role == Role::System));
        let mut total = total_tokens(messages) + msg.token_count;
        let mut evict = 0;
        while total > self.budget {
            total -= messages[first_evictable + evict].token_count;
            evict += 1;
        }
        messages.drain(first_evictable..first_evictable + evict);
        messages.push(msg);
        Ok(evict)
    }
}
