//! Log summarization service: document store, completion backends, layered
//! summaries, the HTTP API and metric evaluation helpers.

pub mod backends;
pub mod documents;
pub mod eval;
pub mod jsonl;
pub mod service;
pub mod store;
pub mod summarize;
