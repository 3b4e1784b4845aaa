//! Allocation-only core of `cygent`.
//!
//! Everything in this crate is a pure function over in-memory values: log
//! parsing, rule-based entity extraction, the rule summary renderer, the
//! extractive fallback summarizer, summary-quality metrics, the chat token
//! window and the seeded synthetic log / training-pair generator. IO, HTTP and
//! persistence live in the `cygent` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod datasetgen;
pub mod extractor;
pub mod ids;
pub mod log_model;
pub mod metrics;
pub mod summarizer;
pub mod tokens;
mod words;

pub use extractor::{build_report, extract_entities, EntitySet, EventType, ExtractionReport, Multiset, StatusClass};
pub use ids::{FileId, PairId, SessionId, SummaryId};
pub use log_model::{
    parse_access_line, parse_app_line, parse_bytes, parse_file, AppLogRecord, Level, LogRecord, ParseError, ParsedLog,
    DEFAULT_MAX_BYTES,
};
pub use metrics::{Prf, MetricReport};
pub use summarizer::{extractive_fallback, summarize_rules, RuleSummary};
pub use tokens::{count_tokens, ChatMessage, Role, TokenWindow, WindowError, CONVERSATION_TOKEN_LIMIT};
