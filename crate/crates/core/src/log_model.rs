//! Log record types and the line parsers.
//!
//! Access lines follow the Combined Log Format (the trailing referer and
//! user-agent fields may be omitted, which is the Common Log Format). Any line
//! that does not match is classified as an application line, so parsing a file
//! never rejects a line.

use alloc::borrow::Cow;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::net::Ipv4Addr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ids::FileId;
use crate::words::contains_word;

/// Default upper bound on the size of a single log file (16 MiB).
pub const DEFAULT_MAX_BYTES: usize = 16 * 1024 * 1024;

const ERROR_WORDS: &[&str] = &["error", "exception", "traceback", "fatal"];
const WARNING_WORDS: &[&str] = &["warn", "warning"];
const EXCEPTION_WORDS: &[&str] = &["exception", "traceback"];

/// One parsed access-log line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub client_ip: String,
    pub ident: Option<String>,
    pub authuser: Option<String>,
    pub timestamp: DateTime<Utc>,
    pub method: String,
    pub path: String,
    pub protocol: String,
    pub status: u16,
    pub bytes: Option<u64>,
    pub referer: Option<String>,
    pub user_agent: Option<String>,
    pub raw: String,
    pub line_no: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Level {
    Error,
    Warning,
    Info,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Error => "ERROR",
            Level::Warning => "WARNING",
            Level::Info => "INFO",
        }
    }
}

/// One application-log line, classified by keyword.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppLogRecord {
    pub level: Level,
    pub has_exception: bool,
    pub message: String,
    pub raw: String,
    pub line_no: usize,
}

/// A whole file split into access records, application records and blank lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedLog {
    pub file_id: FileId,
    pub access_records: Vec<LogRecord>,
    pub app_records: Vec<AppLogRecord>,
    pub unparsed: Vec<(usize, String)>,
    pub total_lines: usize,
}

impl ParsedLog {
    /// Raw text of every line in `line_no` order, borrowed from the records.
    pub fn lines(&self) -> Vec<(usize, &str)> {
        let mut lines: Vec<(usize, &str)> = self
            .access_records
            .iter()
            .map(|r| (r.line_no, r.raw.as_str()))
            .chain(self.app_records.iter().map(|r| (r.line_no, r.raw.as_str())))
            .chain(self.unparsed.iter().map(|(n, raw)| (*n, raw.as_str())))
            .collect();
        lines.sort_unstable_by_key(|(n, _)| *n);
        lines
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("input of {actual} bytes exceeds the {limit} byte limit")]
    Oversize { limit: usize, actual: usize },
}

/// Parses one line as a Combined/Common Log Format access record.
///
/// Returns `None` when the line does not match the grammar; the caller then
/// treats it as an application line.
pub fn parse_access_line(line: &str, line_no: usize) -> Option<LogRecord> {
    let mut cur = Cursor::new(line);

    let host = cur.bare_field()?;
    let client_ip = host.parse::<Ipv4Addr>().ok().map(|_| host.to_string())?;
    cur.spaces1()?;
    let ident = dash_to_none(cur.bare_field()?);
    cur.spaces1()?;
    let authuser = dash_to_none(cur.bare_field()?);
    cur.spaces1()?;

    let date = cur.bracketed()?;
    let timestamp = DateTime::parse_from_str(date, "%d/%b/%Y:%H:%M:%S %z").ok()?.with_timezone(&Utc);
    cur.spaces1()?;

    let request = cur.quoted()?;
    let mut parts = request.split(' ');
    let (method, path, protocol) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() || method.is_empty() || path.is_empty() || protocol.is_empty() {
        return None;
    }
    cur.spaces1()?;

    let status_field = cur.bare_field()?;
    if status_field.len() != 3 || !status_field.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let status: u16 = status_field.parse().ok()?;
    if !(100..=599).contains(&status) {
        return None;
    }
    cur.spaces1()?;

    let bytes_field = cur.bare_field()?;
    let bytes = if bytes_field == "-" {
        None
    } else if bytes_field.bytes().all(|b| b.is_ascii_digit()) {
        Some(bytes_field.parse::<u64>().ok()?)
    } else {
        return None;
    };

    let (referer, user_agent) = if cur.rest().trim().is_empty() {
        (None, None)
    } else {
        cur.spaces1()?;
        let referer = cur.quoted()?;
        cur.spaces1()?;
        let agent = cur.quoted()?;
        if !cur.rest().trim().is_empty() {
            return None;
        }
        (dash_to_none(referer), dash_to_none(agent))
    };

    Some(LogRecord {
        client_ip,
        ident,
        authuser,
        timestamp,
        method: method.to_string(),
        path: path.to_string(),
        protocol: protocol.to_string(),
        status,
        bytes,
        referer,
        user_agent,
        raw: line.to_string(),
        line_no,
    })
}

/// Classifies a non-access line by whole-word keyword match. Never fails.
pub fn parse_app_line(line: &str, line_no: usize) -> AppLogRecord {
    let has_exception = contains_word(line, EXCEPTION_WORDS);
    let level = if has_exception || contains_word(line, ERROR_WORDS) {
        Level::Error
    } else if contains_word(line, WARNING_WORDS) {
        Level::Warning
    } else {
        Level::Info
    };
    AppLogRecord {
        level,
        has_exception,
        message: line.trim().to_string(),
        raw: line.to_string(),
        line_no,
    }
}

/// Parses a whole file held in memory, enforcing `max_bytes`.
pub fn parse_file(file_id: FileId, content: &str, max_bytes: usize) -> Result<ParsedLog, ParseError> {
    if content.len() > max_bytes {
        return Err(ParseError::Oversize {
            limit: max_bytes,
            actual: content.len(),
        });
    }
    let mut parsed = ParsedLog {
        file_id,
        access_records: Vec::new(),
        app_records: Vec::new(),
        unparsed: Vec::new(),
        total_lines: 0,
    };
    for (idx, line) in split_lines(content).enumerate() {
        let line_no = idx + 1;
        parsed.total_lines = line_no;
        if line.trim().is_empty() {
            parsed.unparsed.push((line_no, line.to_string()));
        } else if let Some(record) = parse_access_line(line, line_no) {
            parsed.access_records.push(record);
        } else {
            parsed.app_records.push(parse_app_line(line, line_no));
        }
    }
    Ok(parsed)
}

/// Like [`parse_file`] but accepts arbitrary bytes, replacing invalid UTF-8.
pub fn parse_bytes(file_id: FileId, content: &[u8], max_bytes: usize) -> Result<ParsedLog, ParseError> {
    if content.len() > max_bytes {
        return Err(ParseError::Oversize {
            limit: max_bytes,
            actual: content.len(),
        });
    }
    let text: Cow<'_, str> = String::from_utf8_lossy(content);
    // lossy replacement can grow the text, the byte limit applies to the input
    parse_file(file_id, &text, usize::MAX)
}

/// Splits on LF, dropping a trailing CR from each line. A final terminator does
/// not produce an extra empty line.
pub fn split_lines(content: &str) -> impl Iterator<Item = &str> {
    let body = content.strip_suffix('\n').unwrap_or(content);
    let empty = content.is_empty();
    body.split('\n')
        .filter(move |_| !empty)
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
}

fn dash_to_none(field: &str) -> Option<String> {
    (field != "-").then(|| field.to_string())
}

struct Cursor<'a> {
    rest: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(line: &'a str) -> Self {
        Self { rest: line }
    }

    fn rest(&self) -> &'a str {
        self.rest
    }

    fn spaces1(&mut self) -> Option<()> {
        let trimmed = self.rest.trim_start_matches([' ', '\t']);
        (trimmed.len() < self.rest.len()).then(|| self.rest = trimmed)
    }

    fn bare_field(&mut self) -> Option<&'a str> {
        let end = self.rest.find([' ', '\t']).unwrap_or(self.rest.len());
        if end == 0 {
            return None;
        }
        let (field, rest) = self.rest.split_at(end);
        self.rest = rest;
        Some(field)
    }

    fn bracketed(&mut self) -> Option<&'a str> {
        let inner = self.rest.strip_prefix('[')?;
        let end = inner.find(']')?;
        self.rest = &inner[end + 1..];
        Some(&inner[..end])
    }

    /// A double-quoted field; backslash escapes the next byte.
    fn quoted(&mut self) -> Option<&'a str> {
        let inner = self.rest.strip_prefix('"')?;
        let bytes = inner.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            match bytes[i] {
                b'\\' => i += 2,
                b'"' => {
                    self.rest = &inner[i + 1..];
                    return Some(&inner[..i]);
                }
                _ => i += 1,
            }
        }
        None
    }
}
