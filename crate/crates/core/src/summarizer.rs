//! Rule summary rendering, the extractive fallback and model prompt assembly.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::extractor::{scan_text, EventType, ExtractionReport, StatusClass};
use crate::log_model::{split_lines, Level, ParsedLog};
use crate::tokens::count_tokens;

pub const TOP_LIMIT: usize = 5;
pub const NOTABLE_LIMIT: usize = 10;
pub const FALLBACK_LIMIT: usize = 10;
/// Default number of leading log lines sent to a model.
pub const DEFAULT_EXCERPT_LINES: usize = 120;

/// Version tag of [`PROMPT_PREAMBLE`]; bump whenever the text changes.
pub const PROMPT_VERSION: &str = "summarize-v1";
pub const PROMPT_PREAMBLE: &str = "You are a cybersecurity assistant helping a system administrator. \
Summarize the following log excerpt in plain, human-readable language. Report errors, warnings and \
exceptions, the event types present, notable IP addresses, HTTP status codes, URLs and file paths, \
and call out anything that looks like an attack or a service failure.";

/// Deterministic summary built from an [`ExtractionReport`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSummary {
    pub headline_counts: Vec<(String, usize)>,
    pub status_classes: Vec<(String, usize)>,
    pub top_ips: Vec<(String, usize)>,
    pub top_urls: Vec<(String, usize)>,
    pub notable_lines: Vec<(usize, String)>,
    pub rendered: String,
}

impl RuleSummary {
    /// Renders the fixed four-section plain-text layout from the other fields.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("Overview\n");
        for (label, count) in &self.headline_counts {
            let _ = writeln!(out, "  {label}: {count}");
        }
        out.push_str("\nStatus Classes\n");
        for (label, count) in &self.status_classes {
            let _ = writeln!(out, "  {label}: {count}");
        }
        out.push_str("\nTop Sources\n");
        for (ip, count) in &self.top_ips {
            let _ = writeln!(out, "  IP {ip} ({count})");
        }
        for (url, count) in &self.top_urls {
            let _ = writeln!(out, "  URL {url} ({count})");
        }
        out.push_str("\nNotable Events\n");
        for (line_no, raw) in &self.notable_lines {
            let _ = writeln!(out, "  line {line_no}: {raw}");
        }
        out
    }
}

pub fn summarize_rules(report: &ExtractionReport) -> RuleSummary {
    let headline_counts = [
        ("Total lines", report.total_lines),
        ("Errors", report.error_lines.len()),
        ("Warnings", report.warning_lines.len()),
        ("Exceptions", report.exception_lines.len()),
        ("HTTP 4xx", report.event_count(EventType::Http4xx)),
        ("HTTP 5xx", report.event_count(EventType::Http5xx)),
    ]
    .into_iter()
    .map(|(label, n)| (label.to_string(), n))
    .collect();

    let status_classes = StatusClass::ALL
        .iter()
        .map(|c| (c.label().to_string(), report.status_class_count(*c)))
        .collect();

    let owned = |ranked: Vec<(&String, usize)>| ranked.into_iter().map(|(v, n)| (v.clone(), n)).collect();
    let mut notable_lines = report.error_lines.clone();
    notable_lines.sort_by_key(|(n, _)| *n);
    notable_lines.truncate(NOTABLE_LIMIT);

    let mut summary = RuleSummary {
        headline_counts,
        status_classes,
        top_ips: owned(report.entities.ips.top(TOP_LIMIT)),
        top_urls: owned(report.entities.urls.top(TOP_LIMIT)),
        notable_lines,
        rendered: String::new(),
    };
    summary.rendered = summary.render();
    summary
}

/// Offline stand-in for a model summary: the most salient lines, verbatim.
///
/// Scoring per line: +3 error or exception, +2 warning, +1 HTTP status >= 400,
/// +1 contains an IPv4 address. Zero-score lines are never selected.
pub fn extractive_fallback(parsed: &ParsedLog, report: &ExtractionReport) -> String {
    let mut scored: Vec<(u32, usize, &str)> = Vec::new();
    for record in &parsed.access_records {
        let score = u32::from(record.status >= 400) + 1;
        scored.push((score, record.line_no, &record.raw));
    }
    for record in &parsed.app_records {
        let entities = scan_text(&record.raw);
        let mut score = match record.level {
            Level::Error => 3,
            Level::Warning => 2,
            Level::Info => 0,
        };
        score += u32::from(entities.statuses.iter().any(|(s, _)| *s >= 400));
        score += u32::from(!entities.ips.is_empty());
        scored.push((score, record.line_no, &record.raw));
    }
    scored.retain(|(score, _, _)| *score > 0);
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(FALLBACK_LIMIT);

    let mut out = format!(
        "{} notable of {} lines (errors {}, warnings {}, exceptions {}, HTTP 4xx {}, HTTP 5xx {})\n",
        scored.len(),
        report.total_lines,
        report.error_lines.len(),
        report.warning_lines.len(),
        report.exception_lines.len(),
        report.event_count(EventType::Http4xx),
        report.event_count(EventType::Http5xx),
    );
    for (_, line_no, raw) in scored {
        let _ = writeln!(out, "[{line_no}] {raw}");
    }
    out
}

/// First `max_lines` lines of `content`, LF-joined without a trailing newline.
pub fn log_excerpt(content: &str, max_lines: usize) -> String {
    split_lines(content).take(max_lines).collect::<Vec<_>>().join("\n")
}

/// Preamble plus as many excerpt lines as fit in `token_budget`.
pub fn model_prompt(excerpt: &str, token_budget: usize) -> String {
    let mut prompt = format!("{PROMPT_PREAMBLE}\n\nLog excerpt:\n");
    let mut used = count_tokens(&prompt);
    for line in excerpt.split('\n') {
        let cost = count_tokens(line);
        if used + cost > token_budget {
            break;
        }
        used += cost;
        prompt.push_str(line);
        prompt.push('\n');
    }
    prompt
}
