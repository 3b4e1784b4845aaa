//! Rule-based entity and event extraction.
//!
//! The pattern table is fixed:
//!
//! | entity    | rule |
//! |-----------|------|
//! | IPv4      | dotted quad, octets 0-255, not touching other alphanumerics or dots |
//! | URL       | `http://` or `https://` followed by a non-space, non-quote run |
//! | status    | the CLF status field, or a 3-digit token after the word `status` or `code` |
//! | file path | absolute Unix path with at least two segments, not inside a URL |
//!
//! A bare 3-digit number is never a status, so years and byte counts are not
//! miscounted.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::ids::FileId;
use crate::log_model::{parse_access_line, Level, LogRecord, ParsedLog};

/// Counted bag of values. Equality is multiset equality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Multiset<T: Ord>(BTreeMap<T, usize>);

impl<T: Ord> Default for Multiset<T> {
    fn default() -> Self {
        Self(BTreeMap::new())
    }
}

impl<T: Ord> Multiset<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, value: T) {
        self.insert_n(value, 1);
    }

    pub fn insert_n(&mut self, value: T, n: usize) {
        if n > 0 {
            *self.0.entry(value).or_insert(0) += n;
        }
    }

    pub fn count(&self, value: &T) -> usize {
        self.0.get(value).copied().unwrap_or(0)
    }

    /// Total number of elements, counting duplicates.
    pub fn len(&self) -> usize {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn distinct(&self) -> usize {
        self.0.len()
    }

    /// Distinct values with their multiplicities, in ascending value order.
    pub fn iter(&self) -> impl Iterator<Item = (&T, usize)> {
        self.0.iter().map(|(k, v)| (k, *v))
    }

    pub fn extend(&mut self, other: Multiset<T>) {
        for (value, n) in other.0 {
            self.insert_n(value, n);
        }
    }

    /// Values ranked by count descending, ties by value ascending.
    pub fn top(&self, limit: usize) -> Vec<(&T, usize)> {
        let mut ranked: Vec<(&T, usize)> = self.iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(limit);
        ranked
    }
}

impl<T: Ord> FromIterator<T> for Multiset<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut set = Self::new();
        for value in iter {
            set.insert(value);
        }
        set
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySet {
    pub ips: Multiset<String>,
    pub statuses: Multiset<u16>,
    pub urls: Multiset<String>,
    pub file_paths: Multiset<String>,
}

impl EntitySet {
    pub fn merge(&mut self, other: EntitySet) {
        self.ips.extend(other.ips);
        self.statuses.extend(other.statuses);
        self.urls.extend(other.urls);
        self.file_paths.extend(other.file_paths);
    }

    pub fn is_empty(&self) -> bool {
        self.ips.is_empty() && self.statuses.is_empty() && self.urls.is_empty() && self.file_paths.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventType {
    #[serde(rename = "ERROR")]
    Error,
    #[serde(rename = "WARNING")]
    Warning,
    #[serde(rename = "EXCEPTION")]
    Exception,
    #[serde(rename = "INFO")]
    Info,
    #[serde(rename = "HTTP_4XX")]
    Http4xx,
    #[serde(rename = "HTTP_5XX")]
    Http5xx,
}

impl EventType {
    pub fn as_str(self) -> &'static str {
        match self {
            EventType::Error => "ERROR",
            EventType::Warning => "WARNING",
            EventType::Exception => "EXCEPTION",
            EventType::Info => "INFO",
            EventType::Http4xx => "HTTP_4XX",
            EventType::Http5xx => "HTTP_5XX",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StatusClass {
    #[serde(rename = "2xx")]
    Success,
    #[serde(rename = "3xx")]
    Redirect,
    #[serde(rename = "4xx")]
    ClientError,
    #[serde(rename = "5xx")]
    ServerError,
    #[serde(rename = "other")]
    Other,
}

impl StatusClass {
    pub const ALL: [StatusClass; 5] = [
        StatusClass::Success,
        StatusClass::Redirect,
        StatusClass::ClientError,
        StatusClass::ServerError,
        StatusClass::Other,
    ];

    pub fn of(status: u16) -> Self {
        match status {
            200..=299 => StatusClass::Success,
            300..=399 => StatusClass::Redirect,
            400..=499 => StatusClass::ClientError,
            500..=599 => StatusClass::ServerError,
            _ => StatusClass::Other,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            StatusClass::Success => "2xx",
            StatusClass::Redirect => "3xx",
            StatusClass::ClientError => "4xx",
            StatusClass::ServerError => "5xx",
            StatusClass::Other => "other",
        }
    }
}

/// Aggregated extraction result for one file.
///
/// Count maps only hold non-zero entries; use [`ExtractionReport::event_count`]
/// and [`ExtractionReport::status_class_count`] to read zeros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub file_id: FileId,
    pub total_lines: usize,
    pub entities: EntitySet,
    pub error_lines: Vec<(usize, String)>,
    pub warning_lines: Vec<(usize, String)>,
    pub exception_lines: Vec<(usize, String)>,
    pub event_type_counts: BTreeMap<EventType, usize>,
    pub status_class_counts: BTreeMap<StatusClass, usize>,
}

impl ExtractionReport {
    pub fn event_count(&self, event: EventType) -> usize {
        self.event_type_counts.get(&event).copied().unwrap_or(0)
    }

    pub fn status_class_count(&self, class: StatusClass) -> usize {
        self.status_class_counts.get(&class).copied().unwrap_or(0)
    }
}

/// Applies the pattern table to a single line.
///
/// A line that parses as an access record contributes its structured
/// `client_ip` and status field; the request path, referer and user agent are
/// scanned as free text.
pub fn extract_entities(line: &str) -> EntitySet {
    match parse_access_line(line, 0) {
        Some(record) => access_entities(&record),
        None => scan_text(line),
    }
}

pub fn build_report(parsed: &ParsedLog) -> ExtractionReport {
    let mut entities = EntitySet::default();
    let mut error_lines = Vec::new();
    let mut warning_lines = Vec::new();
    let mut exception_lines = Vec::new();
    let mut events: BTreeMap<EventType, usize> = BTreeMap::new();
    let mut bump = |event: EventType| *events.entry(event).or_insert(0) += 1;

    for record in &parsed.access_records {
        entities.merge(access_entities(record));
    }
    for record in &parsed.app_records {
        entities.merge(scan_text(&record.raw));
        let line = (record.line_no, record.raw.clone());
        match record.level {
            Level::Error => {
                bump(EventType::Error);
                if record.has_exception {
                    bump(EventType::Exception);
                    exception_lines.push(line.clone());
                }
                error_lines.push(line);
            }
            Level::Warning => {
                bump(EventType::Warning);
                warning_lines.push(line);
            }
            Level::Info => bump(EventType::Info),
        }
    }

    let mut status_class_counts: BTreeMap<StatusClass, usize> = BTreeMap::new();
    for (status, n) in entities.statuses.iter() {
        *status_class_counts.entry(StatusClass::of(*status)).or_insert(0) += n;
    }
    for (class, event) in [
        (StatusClass::ClientError, EventType::Http4xx),
        (StatusClass::ServerError, EventType::Http5xx),
    ] {
        if let Some(&n) = status_class_counts.get(&class) {
            events.insert(event, n);
        }
    }

    ExtractionReport {
        file_id: parsed.file_id.clone(),
        total_lines: parsed.total_lines,
        entities,
        error_lines,
        warning_lines,
        exception_lines,
        event_type_counts: events,
        status_class_counts,
    }
}

pub(crate) fn access_entities(record: &LogRecord) -> EntitySet {
    let mut set = scan_text(&record.path);
    for field in [&record.referer, &record.user_agent].into_iter().flatten() {
        set.merge(scan_text(field));
    }
    set.ips.insert(record.client_ip.clone());
    set.statuses.insert(record.status);
    set
}

/// Free-text scan with the full pattern table except the CLF status field.
pub fn scan_text(text: &str) -> EntitySet {
    let url_spans = find_urls(text);
    EntitySet {
        urls: url_spans.iter().map(|r| text[r.clone()].to_string()).collect(),
        ips: find_ipv4(text).into_iter().map(|r| text[r].to_string()).collect(),
        statuses: find_keyword_statuses(text).into_iter().collect(),
        file_paths: find_paths(text, &url_spans).into_iter().map(|r| text[r].to_string()).collect(),
    }
}

fn find_urls(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut from = 0;
    while let Some(offset) = text[from..].find("http") {
        let start = from + offset;
        let after = &text[start..];
        let scheme_len = if after.starts_with("https://") {
            8
        } else if after.starts_with("http://") {
            7
        } else {
            from = start + 4;
            continue;
        };
        let body = &after[scheme_len..];
        let body_len = body
            .find(|c: char| c.is_whitespace() || c == '"' || c == '\'')
            .unwrap_or(body.len());
        if body_len == 0 {
            from = start + scheme_len;
            continue;
        }
        let end = start + scheme_len + body_len;
        spans.push(start..end);
        from = end;
    }
    spans
}

fn find_ipv4(text: &str) -> Vec<Range<usize>> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() || (i > 0 && touches_ip(bytes[i - 1])) {
            i += 1;
            continue;
        }
        match dotted_quad_at(bytes, i) {
            Some(end) => {
                spans.push(i..end);
                i = end;
            }
            None => {
                // skip the rest of this digit/dot run
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
            }
        }
    }
    spans
}

fn touches_ip(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'.' || b >= 0x80
}

fn dotted_quad_at(bytes: &[u8], start: usize) -> Option<usize> {
    let mut i = start;
    for octet in 0..4 {
        if octet > 0 {
            if bytes.get(i) != Some(&b'.') {
                return None;
            }
            i += 1;
        }
        let digits_start = i;
        let mut value: u32 = 0;
        while i < bytes.len() && bytes[i].is_ascii_digit() && i - digits_start < 3 {
            value = value * 10 + u32::from(bytes[i] - b'0');
            i += 1;
        }
        if i == digits_start || value > 255 {
            return None;
        }
    }
    match bytes.get(i) {
        None => Some(i),
        Some(b) if b.is_ascii_alphanumeric() || *b >= 0x80 => None,
        Some(b'.') if bytes.get(i + 1).is_some_and(|n| n.is_ascii_digit()) => None,
        Some(_) => Some(i),
    }
}

fn find_keyword_statuses(text: &str) -> Vec<u16> {
    let mut statuses = Vec::new();
    let mut offset = 0;
    for run in text.split(|c: char| !c.is_alphanumeric()) {
        let run_end = offset + run.len();
        if run.eq_ignore_ascii_case("status") || run.eq_ignore_ascii_case("code") {
            let rest = text[run_end..].trim_start_matches([' ', '\t', ':', '=']);
            let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
            let boundary_ok = rest[digits..].chars().next().is_none_or(|c| !c.is_alphanumeric());
            if digits == 3 && boundary_ok {
                let value: u16 = rest[..3].parse().unwrap_or(0);
                if (100..=599).contains(&value) {
                    statuses.push(value);
                }
            }
        }
        // +1 for the separator char; separators may be multi-byte
        offset = run_end + text[run_end..].chars().next().map_or(0, char::len_utf8);
    }
    statuses
}

fn is_path_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, b'/' | b'.' | b'_' | b'-' | b'~' | b'+' | b'@' | b'%')
}

fn path_may_start_after(c: u8) -> bool {
    c.is_ascii_whitespace() || matches!(c, b'"' | b'\'' | b'(' | b'[' | b'=' | b':' | b',' | b'<')
}

fn find_paths(text: &str, url_spans: &[Range<usize>]) -> Vec<Range<usize>> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if let Some(url) = url_spans.iter().find(|r| r.contains(&i)) {
            i = url.end;
            continue;
        }
        if bytes[i] != b'/' || (i > 0 && !path_may_start_after(bytes[i - 1])) {
            i += 1;
            continue;
        }
        let mut end = i;
        while end < bytes.len() && is_path_char(bytes[end]) {
            end += 1;
        }
        let next = end;
        while end > i + 1 && matches!(bytes[end - 1], b'.' | b'/') {
            end -= 1;
        }
        let candidate = &text[i..end];
        let segments: Vec<&str> = candidate[1..].split('/').collect();
        if segments.len() >= 2 && segments.iter().all(|s| !s.is_empty()) {
            spans.push(i..end);
        }
        i = next.max(i + 1);
    }
    spans
}
