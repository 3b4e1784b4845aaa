//! Seeded synthetic logs with known entity manifests, and fine-tune pairs
//! whose completions are rule-summary renderings.
//!
//! Every generated line comes from a template whose planted entities are
//! listed by hand next to it, so the manifest is built without consulting the
//! extractor.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::{DateTime, Duration, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::extractor::{build_report, EntitySet, ExtractionReport};
use crate::ids::{FileId, PairId};
use crate::log_model::{parse_file, Level};
use crate::summarizer::{log_excerpt, summarize_rules, DEFAULT_EXCERPT_LINES};

/// Marker closing every prompt.
pub const PROMPT_SEPARATOR: &str = "\n\n###\n\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Web,
    App,
    Mixed,
}

impl core::str::FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "web" => Ok(Profile::Web),
            "app" => Ok(Profile::App),
            "mixed" => Ok(Profile::Mixed),
            other => Err(format!("unknown profile `{other}` (expected web, app or mixed)")),
        }
    }
}

/// What a generated log is known to contain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityManifest {
    pub seed: u64,
    pub entities: EntitySet,
    pub level_counts: BTreeMap<Level, usize>,
}

impl EntityManifest {
    /// True when `report` recovered exactly the planted entities and levels.
    pub fn matches(&self, report: &ExtractionReport) -> bool {
        let level = |l: Level| self.level_counts.get(&l).copied().unwrap_or(0);
        self.entities == report.entities
            && level(Level::Error) == report.error_lines.len()
            && level(Level::Warning) == report.warning_lines.len()
            && level(Level::Info) == report.event_count(crate::extractor::EventType::Info)
    }
}

struct Planted<'a> {
    ips: Vec<String>,
    urls: Vec<&'a str>,
    paths: Vec<&'a str>,
    statuses: Vec<u16>,
}

impl<'a> Planted<'a> {
    fn new() -> Self {
        Self {
            ips: Vec::new(),
            urls: Vec::new(),
            paths: Vec::new(),
            statuses: Vec::new(),
        }
    }

    fn into_manifest(self, entities: &mut EntitySet) {
        entities.ips.extend(self.ips.into_iter().collect());
        entities.urls.extend(self.urls.into_iter().map(str::to_string).collect());
        entities.file_paths.extend(self.paths.into_iter().map(str::to_string).collect());
        entities.statuses.extend(self.statuses.into_iter().collect());
    }
}

/// Request targets with the file path each one plants (if any).
const REQUEST_PATHS: &[(&str, Option<&str>)] = &[
    ("/", None),
    ("/index.html", None),
    ("/favicon.ico", None),
    ("/login", None),
    ("/api/v1/users", Some("/api/v1/users")),
    ("/api/v1/orders?id=42", Some("/api/v1/orders")),
    ("/static/css/site.css", Some("/static/css/site.css")),
    ("/images/logo.png", Some("/images/logo.png")),
    ("/admin/login.php", Some("/admin/login.php")),
    ("/wp-admin/setup-config.php", Some("/wp-admin/setup-config.php")),
    ("/search?q=/etc/passwd", Some("/etc/passwd")),
];
const METHODS: &[&str] = &["GET", "GET", "GET", "POST", "PUT", "DELETE", "HEAD"];
const PROTOCOLS: &[&str] = &["HTTP/1.1", "HTTP/1.1", "HTTP/1.0", "HTTP/2.0"];
const WEB_STATUSES: &[u16] = &[200, 200, 200, 200, 201, 204, 301, 302, 304, 400, 401, 403, 404, 404, 500, 502, 503];
const REFERERS: &[&str] = &[
    "https://www.google.com/search?q=server+logs",
    "https://example.com/products/item-7",
    "http://intranet.local/dashboard",
];
const USER_AGENTS: &[&str] = &[
    "Mozilla/5.0 (X11; Linux x86_64; rv:115.0) Gecko/20100101 Firefox/115.0",
    "curl/8.4.0",
    "python-requests/2.31.0",
    "Go-http-client/1.1",
];
const USERS: &[&str] = &["-", "-", "-", "admin", "alice", "svc_backup"];

const APP_PATHS: &[&str] = &[
    "/var/log/app.log",
    "/etc/nginx/nginx.conf",
    "/srv/app/config.yaml",
    "/tmp/upload/data.bin",
    "/home/deploy/.ssh/authorized_keys",
    "/srv/app/handlers/payment.py",
];
const APP_URLS: &[&str] = &[
    "https://api.example.com/v2/orders",
    "http://payments.internal/charge",
    "https://cdn.example.net/assets/app.js",
];
const SERVER_ERRORS: &[u16] = &[500, 502, 503, 504];
const CLIENT_ERRORS: &[u16] = &[400, 404, 409, 429];
const OK_STATUSES: &[u16] = &[200, 201, 204, 304];

fn random_ip(rng: &mut ChaCha8Rng) -> String {
    let o: [u8; 4] = core::array::from_fn(|_| rng.random_range(1..=254));
    format!("{}.{}.{}.{}", o[0], o[1], o[2], o[3])
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    items.choose(rng).expect("non-empty template table")
}

fn web_line<'a>(rng: &mut ChaCha8Rng, at: DateTime<Utc>, planted: &mut Planted<'a>) -> String {
    let ip = random_ip(rng);
    let user = *pick(rng, USERS);
    let (target, path) = *pick(rng, REQUEST_PATHS);
    let method = *pick(rng, METHODS);
    let protocol = *pick(rng, PROTOCOLS);
    let status = *pick(rng, WEB_STATUSES);
    let bytes = if rng.random_bool(0.15) {
        "-".to_string()
    } else {
        rng.random_range(0..50_000u32).to_string()
    };
    let stamp = at.format("%d/%b/%Y:%H:%M:%S %z");
    let mut line = format!("{ip} - {user} [{stamp}] \"{method} {target} {protocol}\" {status} {bytes}");

    match rng.random_range(0..3u8) {
        0 => {}
        1 => line.push_str(&format!(" \"-\" \"{}\"", pick(rng, USER_AGENTS))),
        _ => {
            let referer = *pick(rng, REFERERS);
            line.push_str(&format!(" \"{referer}\" \"{}\"", pick(rng, USER_AGENTS)));
            planted.urls.push(referer);
        }
    }
    planted.ips.push(ip);
    planted.statuses.push(status);
    planted.paths.extend(path);
    line
}

fn app_line<'a>(rng: &mut ChaCha8Rng, at: DateTime<Utc>, planted: &mut Planted<'a>) -> (String, Level) {
    let ts = at.format("%Y-%m-%d %H:%M:%S");
    match rng.random_range(0..15u8) {
        0 => {
            let ip = random_ip(rng);
            let line = format!("{ts} ERROR database connection refused from {ip}");
            planted.ips.push(ip);
            (line, Level::Error)
        }
        1 => {
            let path = *pick(rng, APP_PATHS);
            planted.paths.push(path);
            (format!("{ts} ERROR failed to read {path}: permission denied"), Level::Error)
        }
        2 => {
            let url = *pick(rng, APP_URLS);
            let status = *pick(rng, SERVER_ERRORS);
            planted.urls.push(url);
            planted.statuses.push(status);
            (format!("{ts} ERROR upstream {url} returned status {status}"), Level::Error)
        }
        3 => (format!("{ts} FATAL worker {} crashed, restarting", rng.random_range(1..=16u8)), Level::Error),
        4 => {
            let path = *pick(rng, APP_PATHS);
            planted.paths.push(path);
            (
                format!("{ts} ERROR Exception in thread main: java.lang.NullPointerException at {path}"),
                Level::Error,
            )
        }
        5 => {
            let path = *pick(rng, APP_PATHS);
            planted.paths.push(path);
            (format!("{ts} ERROR Traceback (most recent call last): File \"{path}\""), Level::Error)
        }
        6 => {
            let path = *pick(rng, APP_PATHS);
            planted.paths.push(path);
            let pct = rng.random_range(80..=99u8);
            (format!("{ts} WARN disk usage at {pct}% on {path}"), Level::Warning)
        }
        7 => {
            let ip = random_ip(rng);
            let line = format!("{ts} WARNING slow response from {ip} took {} ms", rng.random_range(900..9000u16));
            planted.ips.push(ip);
            (line, Level::Warning)
        }
        8 => {
            let url = *pick(rng, APP_URLS);
            let status = *pick(rng, CLIENT_ERRORS);
            planted.urls.push(url);
            planted.statuses.push(status);
            (format!("{ts} WARN retrying request to {url} (code {status})"), Level::Warning)
        }
        9 => (
            format!("{ts} WARNING certificate for api.example.com expires in {} days", rng.random_range(2..30u8)),
            Level::Warning,
        ),
        10 => {
            let ip = random_ip(rng);
            let user = *pick(rng, &USERS[3..]);
            let line = format!("{ts} INFO user {user} logged in from {ip}");
            planted.ips.push(ip);
            (line, Level::Info)
        }
        11 => {
            let status = *pick(rng, OK_STATUSES);
            planted.statuses.push(status);
            let ms = rng.random_range(1..900u16);
            (format!("{ts} INFO request completed with status {status} in {ms} ms"), Level::Info)
        }
        12 => {
            let path = *pick(rng, APP_PATHS);
            planted.paths.push(path);
            (format!("{ts} INFO scheduled backup written to {path}"), Level::Info)
        }
        13 => {
            let url = *pick(rng, APP_URLS);
            planted.urls.push(url);
            (format!("{ts} INFO fetched {url}"), Level::Info)
        }
        _ => (format!("{ts} DEBUG cache hit ratio {}%", rng.random_range(10..100u8)), Level::Info),
    }
}

fn base_time() -> DateTime<Utc> {
    DateTime::from_timestamp(1_677_628_800, 0).expect("valid epoch") // 2023-03-01T00:00:00Z
}

/// Generates `n_lines` log lines (LF-terminated) and the manifest of what
/// they contain. Fully determined by `(seed, n_lines, profile)`.
pub fn generate_log(seed: u64, n_lines: usize, profile: Profile) -> (String, EntityManifest) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut at = base_time() + Duration::seconds(rng.random_range(0..86_400 * 365));
    let mut text = String::new();
    let mut entities = EntitySet::default();
    let mut level_counts: BTreeMap<Level, usize> = BTreeMap::new();

    for _ in 0..n_lines {
        at += Duration::seconds(rng.random_range(0..30));
        let web = match profile {
            Profile::Web => true,
            Profile::App => false,
            Profile::Mixed => rng.random_bool(0.5),
        };
        let mut planted = Planted::new();
        let line = if web {
            web_line(&mut rng, at, &mut planted)
        } else {
            let (line, level) = app_line(&mut rng, at, &mut planted);
            *level_counts.entry(level).or_insert(0) += 1;
            line
        };
        planted.into_manifest(&mut entities);
        text.push_str(&line);
        text.push('\n');
    }
    (
        text,
        EntityManifest {
            seed,
            entities,
            level_counts,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub pair_id: PairId,
    pub prompt: String,
    pub completion: String,
    pub split: Split,
}

/// The on-disk fine-tune record: exactly `prompt` and `completion`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptCompletion {
    pub prompt: String,
    pub completion: String,
}

impl PromptCompletion {
    /// Builds a record from a log text and a summary, applying the prompt
    /// separator and the single leading space on the completion.
    pub fn from_log(log_text: &str, summary: &str, excerpt_lines: usize) -> Self {
        Self {
            prompt: format!("{}{PROMPT_SEPARATOR}", log_excerpt(log_text, excerpt_lines)),
            completion: completion_text(summary),
        }
    }
}

impl From<&TrainingPair> for PromptCompletion {
    fn from(pair: &TrainingPair) -> Self {
        Self {
            prompt: pair.prompt.clone(),
            completion: pair.completion.clone(),
        }
    }
}

fn completion_text(summary: &str) -> String {
    format!(" {}", summary.trim_start())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub count: usize,
    pub train_n: usize,
    pub val_n: usize,
    pub seed: u64,
    pub min_lines: usize,
    pub max_lines: usize,
    pub excerpt_lines: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: 102,
            train_n: 81,
            val_n: 21,
            seed: 0,
            min_lines: 20,
            max_lines: 60,
            excerpt_lines: DEFAULT_EXCERPT_LINES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DatasetError {
    #[error("train ({train_n}) + validation ({val_n}) must equal count ({count})")]
    SplitMismatch { count: usize, train_n: usize, val_n: usize },
    #[error("invalid line range {min}..={max}")]
    LineRange { min: usize, max: usize },
    #[error("override targets unknown pair `{0}`")]
    UnknownPair(PairId),
}

/// Builds `count` training pairs, each from its own derived seed, and assigns
/// exactly `train_n` of them to the training split.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<Vec<TrainingPair>, DatasetError> {
    if cfg.train_n + cfg.val_n != cfg.count {
        return Err(DatasetError::SplitMismatch {
            count: cfg.count,
            train_n: cfg.train_n,
            val_n: cfg.val_n,
        });
    }
    if cfg.min_lines == 0 || cfg.min_lines > cfg.max_lines {
        return Err(DatasetError::LineRange {
            min: cfg.min_lines,
            max: cfg.max_lines,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let profiles = [Profile::Web, Profile::App, Profile::Mixed];
    let mut pairs = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let pair_seed = rng.next_u64();
        let n_lines = rng.random_range(cfg.min_lines..=cfg.max_lines);
        let (text, _) = generate_log(pair_seed, n_lines, profiles[i % profiles.len()]);
        let pair_id = PairId::new(format!("pair-{i:03}"));
        let parsed = parse_file(FileId::new(pair_id.as_str()), &text, usize::MAX).expect("no size limit");
        let summary = summarize_rules(&build_report(&parsed));
        let record = PromptCompletion::from_log(&text, &summary.rendered, cfg.excerpt_lines);
        pairs.push(TrainingPair {
            pair_id,
            prompt: record.prompt,
            completion: record.completion,
            split: Split::Validation,
        });
    }
    let mut order: Vec<usize> = (0..cfg.count).collect();
    order.shuffle(&mut rng);
    for &i in &order[..cfg.train_n] {
        pairs[i].split = Split::Train;
    }
    Ok(pairs)
}

/// Replaces completions with hand-edited text. Returns how many pairs changed.
pub fn apply_overrides(pairs: &mut [TrainingPair], overrides: &BTreeMap<PairId, String>) -> Result<usize, DatasetError> {
    if let Some(unknown) = overrides.keys().find(|id| !pairs.iter().any(|p| &p.pair_id == *id)) {
        return Err(DatasetError::UnknownPair(unknown.clone()));
    }
    let mut changed = 0;
    for pair in pairs.iter_mut() {
        if let Some(text) = overrides.get(&pair.pair_id) {
            pair.completion = completion_text(text);
            changed += 1;
        }
    }
    Ok(changed)
}
