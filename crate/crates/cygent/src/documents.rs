//! Persisted document shapes.

use chrono::{DateTime, Utc};
use cygent_core::{ChatMessage, FileId, RuleSummary, SessionId, SummaryId};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredFile {
    pub file_id: FileId,
    pub name: String,
    pub content: String,
    pub uploaded_at: DateTime<Utc>,
    pub session_id: SessionId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: SessionId,
    pub messages: Vec<ChatMessage>,
    pub file_ids: Vec<FileId>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryMode {
    Rules,
    Model,
    Both,
}

impl SummaryMode {
    pub fn wants_model(self) -> bool {
        !matches!(self, SummaryMode::Rules)
    }
}

impl std::str::FromStr for SummaryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rules" => Ok(SummaryMode::Rules),
            "model" => Ok(SummaryMode::Model),
            "both" => Ok(SummaryMode::Both),
            other => Err(format!("unknown mode `{other}` (expected rules, model or both)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEdit {
    pub edited_text: String,
    pub edited_at: DateTime<Utc>,
}

/// A rule summary plus, optionally, a model-written one.
///
/// `model_summary` is `None` when the mode was `rules` or when the backend
/// failed, in which case `degraded` is set and `degraded_reason` says why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub summary_id: SummaryId,
    pub file_id: FileId,
    pub mode: SummaryMode,
    pub rule_summary: RuleSummary,
    pub model_summary: Option<String>,
    pub backend_name: String,
    pub prompt_version: String,
    pub created_at: DateTime<Utc>,
    pub feedback_edits: Vec<FeedbackEdit>,
    pub degraded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded_reason: Option<String>,
}

impl SummaryDocument {
    /// The most recent human edit, falling back to the model text, then the
    /// rule rendering.
    pub fn best_text(&self) -> &str {
        self.feedback_edits
            .last()
            .map(|e| e.edited_text.as_str())
            .or(self.model_summary.as_deref())
            .unwrap_or(&self.rule_summary.rendered)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub file_id: FileId,
    pub name: String,
    pub uploaded_at: DateTime<Utc>,
    pub summary_ids: Vec<SummaryId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acknowledgement {
    pub acknowledged: bool,
    pub edits: usize,
}
