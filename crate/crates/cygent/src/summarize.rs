//! Layered summarization: the rule layer always, the model layer on request.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use chrono::Utc;
use cygent_core::summarizer::PROMPT_VERSION;
use cygent_core::{build_report, parse_file, summarize_rules, ExtractionReport, FileId, ParsedLog, ParseError, SummaryId, DEFAULT_MAX_BYTES};

use crate::backends::Backend;
use crate::documents::{StoredFile, SummaryDocument, SummaryMode};
use crate::store::{self, Store, StoreError};

pub const RULES_ONLY_NAME: &str = "rules-only";

/// A parsed file together with its extraction report.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub parsed: ParsedLog,
    pub report: ExtractionReport,
}

impl Analysis {
    pub fn of(file_id: FileId, content: &str) -> Result<Self, ParseError> {
        let parsed = parse_file(file_id, content, DEFAULT_MAX_BYTES)?;
        let report = build_report(&parsed);
        Ok(Self { parsed, report })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SummarizeError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Builds a summary document without persisting it. Backend failures are
/// recorded on the document, never returned as errors.
pub async fn summarize_content(
    file_id: &FileId,
    content: &str,
    analysis: &Analysis,
    mode: SummaryMode,
    backend: &Backend,
) -> SummaryDocument {
    let rule_summary = summarize_rules(&analysis.report);
    let (model_summary, degraded_reason) = if mode.wants_model() {
        match backend.summarize(content, &analysis.parsed, &analysis.report).await {
            Ok(text) => (Some(text), None),
            Err(err) => {
                tracing::warn!(file_id = %file_id, backend = backend.name(), error = %err, "model summary unavailable, returning rule summary only");
                (None, Some(err.to_string()))
            }
        }
    } else {
        (None, None)
    };
    SummaryDocument {
        summary_id: SummaryId::new(store::new_id()),
        file_id: file_id.clone(),
        mode,
        rule_summary,
        model_summary,
        backend_name: if mode.wants_model() { backend.name().to_string() } else { RULES_ONLY_NAME.to_string() },
        prompt_version: PROMPT_VERSION.to_string(),
        created_at: Utc::now(),
        feedback_edits: Vec::new(),
        degraded: degraded_reason.is_some(),
        degraded_reason,
    }
}

/// Summarizes stored files, caching each file's analysis.
pub struct Summarizer {
    store: Arc<Store>,
    backend: Backend,
    cache: Mutex<HashMap<FileId, Arc<Analysis>>>,
}

impl Summarizer {
    pub fn new(store: Arc<Store>, backend: Backend) -> Self {
        Self {
            store,
            backend,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    /// Parses eagerly and caches the report, e.g. right after an upload.
    pub fn analyze(&self, file: &StoredFile) -> Result<Arc<Analysis>, ParseError> {
        if let Some(hit) = self.cache.lock().unwrap_or_else(|e| e.into_inner()).get(&file.file_id) {
            return Ok(hit.clone());
        }
        let analysis = Arc::new(Analysis::of(file.file_id.clone(), &file.content)?);
        self.cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(file.file_id.clone(), analysis.clone());
        Ok(analysis)
    }

    /// Summarizes a stored file and persists the document before returning it.
    pub async fn summarize(&self, file_id: &FileId, mode: SummaryMode) -> Result<SummaryDocument, SummarizeError> {
        let file = self.store.get_file(file_id)?;
        let analysis = self.analyze(&file)?;
        let doc = summarize_content(file_id, &file.content, &analysis, mode, &self.backend).await;
        self.store.put_summary(&doc)?;
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendConfig, RemoteBackend, FALLBACK_NAME};

    const LOG: &str = "10.0.0.1 - - [10/Oct/2020:13:55:36 +0000] \"GET /a/b HTTP/1.1\" 500 12\nERROR disk failure on /var/lib/db\nINFO ok\n";

    fn setup(backend: Backend) -> (tempfile::TempDir, Summarizer, FileId) {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(Store::open(dir.path()).unwrap());
        let session = store.create_session(None).unwrap();
        let file = store.put_file(&session.session_id, "a.log", LOG.into()).unwrap();
        (dir, Summarizer::new(store, backend), file.file_id)
    }

    fn unreachable() -> Backend {
        // port 9 (discard) on loopback is closed in the sandbox
        let cfg = BackendConfig {
            base_url: "http://127.0.0.1:9".into(),
            max_retries: 0,
            ..BackendConfig::default()
        };
        Backend::Remote(RemoteBackend::new(cfg).unwrap())
    }

    #[tokio::test]
    async fn rules_mode() {
        let (_dir, s, file_id) = setup(Backend::Fallback);
        let a = s.summarize(&file_id, SummaryMode::Rules).await.unwrap();
        let b = s.summarize(&file_id, SummaryMode::Rules).await.unwrap();
        assert!(a.model_summary.is_none());
        assert!(!a.degraded);
        assert_eq!(a.backend_name, RULES_ONLY_NAME);
        assert_ne!(a.summary_id, b.summary_id);
        assert_eq!(a.rule_summary.rendered, b.rule_summary.rendered);
        assert_eq!(s.store().get_summary(&a.summary_id).unwrap(), a);
    }

    #[tokio::test]
    async fn both_mode_with_fallback() {
        let (_dir, s, file_id) = setup(Backend::Fallback);
        let doc = s.summarize(&file_id, SummaryMode::Both).await.unwrap();
        assert_eq!(doc.backend_name, FALLBACK_NAME);
        let text = doc.model_summary.unwrap();
        assert!(text.starts_with("2 notable of 3 lines"));
        assert!(text.contains("[2] ERROR disk failure"));
    }

    #[tokio::test]
    async fn unreachable_backend_degrades() {
        let (_dir, s, file_id) = setup(unreachable());
        let doc = s.summarize(&file_id, SummaryMode::Model).await.unwrap();
        assert!(doc.degraded);
        assert!(doc.model_summary.is_none());
        assert!(doc.degraded_reason.unwrap().contains("unreachable"));
        assert!(doc.rule_summary.rendered.contains("Errors: 1"));
        assert!(s.store().get_summary(&doc.summary_id).unwrap().degraded);
    }

    #[tokio::test]
    async fn unknown_file() {
        let (_dir, s, _) = setup(Backend::Fallback);
        let err = s.summarize(&FileId::from("missing"), SummaryMode::Rules).await.unwrap_err();
        assert!(matches!(err, SummarizeError::Store(StoreError::NotFound { .. })));
    }
}
