//! File-backed document store.
//!
//! Layout under the root directory:
//!
//! ```text
//! <root>/files/<id>.json
//! <root>/summaries/<id>.json
//! <root>/sessions/<id>.json
//! ```
//!
//! Every write goes to a temporary file in the same directory which is synced
//! and then renamed over the target, so readers see either the old or the new
//! document. Writers to the same document are serialized by a per-document
//! lock; readers take no lock.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::Utc;
use cygent_core::datasetgen::PromptCompletion;
use cygent_core::summarizer::DEFAULT_EXCERPT_LINES;
use cygent_core::{ChatMessage, FileId, SessionId, SummaryId, TokenWindow, WindowError};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::documents::{Acknowledgement, ChatSession, FeedbackEdit, HistoryEntry, StoredFile, SummaryDocument};
use crate::jsonl::{self, JsonlError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    File,
    Summary,
    Session,
}

impl Kind {
    fn dir(self) -> &'static str {
        match self {
            Kind::File => "files",
            Kind::Summary => "summaries",
            Kind::Session => "sessions",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Kind::File => "file",
            Kind::Summary => "summary",
            Kind::Session => "session",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{} `{id}` not found", kind.label())]
    NotFound { kind: Kind, id: String },
    #[error("store io failure at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt document {path}: {source}")]
    Corrupt { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Export(#[from] JsonlError),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

pub fn new_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

pub struct Store {
    root: PathBuf,
    window: TokenWindow,
    locks: Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>,
}

impl Store {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for kind in [Kind::File, Kind::Summary, Kind::Session] {
            let dir = root.join(kind.dir());
            fs::create_dir_all(&dir).map_err(|source| StoreError::Io { path: dir, source })?;
        }
        Ok(Self {
            root,
            window: TokenWindow::default(),
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, kind: Kind, id: &str) -> Result<PathBuf> {
        if !valid_id(id) {
            return Err(StoreError::NotFound {
                kind,
                id: id.to_string(),
            });
        }
        Ok(self.root.join(kind.dir()).join(format!("{id}.json")))
    }

    fn doc_lock(&self, path: &Path) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(path.to_path_buf()).or_default().clone()
    }

    fn read<T: DeserializeOwned>(&self, kind: Kind, id: &str) -> Result<T> {
        let path = self.path(kind, id)?;
        let bytes = match fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound {
                    kind,
                    id: id.to_string(),
                })
            }
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        serde_json::from_slice(&bytes).map_err(|source| StoreError::Corrupt { path, source })
    }

    fn write_atomic<T: Serialize>(&self, path: &Path, doc: &T) -> Result<()> {
        let io_err = |source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        };
        let dir = path.parent().expect("document paths have a parent");
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
        serde_json::to_writer(&mut tmp, doc).map_err(|e| io_err(e.into()))?;
        tmp.flush().map_err(io_err)?;
        tmp.as_file().sync_all().map_err(io_err)?;
        tmp.persist(path).map_err(|e| io_err(e.error))?;
        Ok(())
    }

    fn put<T: Serialize>(&self, kind: Kind, id: &str, doc: &T) -> Result<()> {
        let path = self.path(kind, id)?;
        let lock = self.doc_lock(&path);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        self.write_atomic(&path, doc)
    }

    /// Read-modify-write of one document under its writer lock.
    fn update<T, R>(&self, kind: Kind, id: &str, f: impl FnOnce(&mut T) -> Result<R>) -> Result<R>
    where
        T: Serialize + DeserializeOwned,
    {
        let path = self.path(kind, id)?;
        let lock = self.doc_lock(&path);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut doc: T = self.read(kind, id)?;
        let out = f(&mut doc)?;
        self.write_atomic(&path, &doc)?;
        Ok(out)
    }

    fn list<T: DeserializeOwned>(&self, kind: Kind) -> Result<Vec<T>> {
        let dir = self.root.join(kind.dir());
        let entries = fs::read_dir(&dir).map_err(|source| StoreError::Io {
            path: dir.clone(),
            source,
        })?;
        let mut docs = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|source| StoreError::Io {
                path: dir.clone(),
                source,
            })?;
            let name = entry.file_name();
            let Some(id) = name.to_str().and_then(|n| n.strip_suffix(".json")) else {
                continue;
            };
            match self.read(kind, id) {
                Ok(doc) => docs.push(doc),
                // deleted between listing and reading
                Err(StoreError::NotFound { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(docs)
    }

    /// Creates a session, optionally opened by a pinned system message.
    pub fn create_session(&self, system_prompt: Option<&str>) -> Result<ChatSession> {
        let mut session = ChatSession {
            session_id: SessionId::new(new_id()),
            messages: Vec::new(),
            file_ids: Vec::new(),
            created_at: Utc::now(),
        };
        if let Some(prompt) = system_prompt {
            self.window.append(&mut session.messages, ChatMessage::system(prompt))?;
        }
        self.put(Kind::Session, session.session_id.as_str(), &session)?;
        Ok(session)
    }

    pub fn get_session(&self, id: &SessionId) -> Result<ChatSession> {
        self.read(Kind::Session, id.as_str())
    }

    /// Appends to the session's conversation, evicting whole messages oldest
    /// first. Returns the number of evicted messages.
    pub fn append_message(&self, id: &SessionId, msg: ChatMessage) -> Result<usize> {
        self.update(Kind::Session, id.as_str(), |session: &mut ChatSession| {
            Ok(self.window.append(&mut session.messages, msg)?)
        })
    }

    /// Stores a new upload and links it to its session.
    pub fn put_file(&self, session_id: &SessionId, name: &str, content: String) -> Result<StoredFile> {
        // fail before writing the file if the session is unknown
        self.get_session(session_id)?;
        let file = StoredFile {
            file_id: FileId::new(new_id()),
            name: name.to_string(),
            content,
            uploaded_at: Utc::now(),
            session_id: session_id.clone(),
        };
        self.put(Kind::File, file.file_id.as_str(), &file)?;
        self.update(Kind::Session, session_id.as_str(), |session: &mut ChatSession| {
            session.file_ids.push(file.file_id.clone());
            Ok(())
        })?;
        Ok(file)
    }

    pub fn get_file(&self, id: &FileId) -> Result<StoredFile> {
        self.read(Kind::File, id.as_str())
    }

    pub fn put_summary(&self, doc: &SummaryDocument) -> Result<()> {
        self.put(Kind::Summary, doc.summary_id.as_str(), doc)
    }

    pub fn get_summary(&self, id: &SummaryId) -> Result<SummaryDocument> {
        self.read(Kind::Summary, id.as_str())
    }

    /// Summaries of one file, oldest first.
    pub fn summaries_for_file(&self, file_id: &FileId) -> Result<Vec<SummaryDocument>> {
        let mut docs: Vec<SummaryDocument> = self
            .list::<SummaryDocument>(Kind::Summary)?
            .into_iter()
            .filter(|d| &d.file_id == file_id)
            .collect();
        docs.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.summary_id.cmp(&b.summary_id)));
        Ok(docs)
    }

    /// Files uploaded to a session with their summary ids, by upload time.
    pub fn list_history(&self, session_id: &SessionId) -> Result<Vec<HistoryEntry>> {
        let session = self.get_session(session_id)?;
        let mut summaries: HashMap<FileId, Vec<SummaryDocument>> = HashMap::new();
        for doc in self.list::<SummaryDocument>(Kind::Summary)? {
            if session.file_ids.contains(&doc.file_id) {
                summaries.entry(doc.file_id.clone()).or_default().push(doc);
            }
        }
        let mut entries = Vec::with_capacity(session.file_ids.len());
        for file_id in &session.file_ids {
            let file = self.get_file(file_id)?;
            let mut docs = summaries.remove(file_id).unwrap_or_default();
            docs.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.summary_id.cmp(&b.summary_id)));
            entries.push(HistoryEntry {
                file_id: file.file_id,
                name: file.name,
                uploaded_at: file.uploaded_at,
                summary_ids: docs.into_iter().map(|d| d.summary_id).collect(),
            });
        }
        // stable: equal timestamps keep upload order
        entries.sort_by_key(|e| e.uploaded_at);
        Ok(entries)
    }

    /// Appends a user edit. The original summary texts are never modified.
    pub fn save_feedback(&self, summary_id: &SummaryId, edited_text: &str) -> Result<Acknowledgement> {
        self.update(Kind::Summary, summary_id.as_str(), |doc: &mut SummaryDocument| {
            let now = Utc::now();
            let edited_at = doc.feedback_edits.last().map_or(now, |last| last.edited_at.max(now));
            doc.feedback_edits.push(FeedbackEdit {
                edited_text: edited_text.to_string(),
                edited_at,
            });
            Ok(Acknowledgement {
                acknowledged: true,
                edits: doc.feedback_edits.len(),
            })
        })
    }

    /// Writes one fine-tune record per edited summary: the file's log excerpt
    /// as prompt and the latest edit as completion.
    pub fn export_feedback(&self, dest: &Path) -> Result<usize> {
        let mut edited: Vec<SummaryDocument> = self
            .list::<SummaryDocument>(Kind::Summary)?
            .into_iter()
            .filter(|d| !d.feedback_edits.is_empty())
            .collect();
        edited.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.summary_id.cmp(&b.summary_id)));
        let mut records = Vec::with_capacity(edited.len());
        for doc in &edited {
            let file = self.get_file(&doc.file_id)?;
            let latest = &doc.feedback_edits.last().expect("filtered to edited").edited_text;
            records.push(PromptCompletion::from_log(&file.content, latest, DEFAULT_EXCERPT_LINES));
        }
        Ok(jsonl::write_records(dest, records)?)
    }
}
