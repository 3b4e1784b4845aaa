use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use cygent_core::datasetgen::{apply_overrides, build_dataset, generate_log, DatasetConfig, Profile, Split};
use cygent_core::metrics::{evaluate_set, ExactMatchEmbedder, Metric};
use cygent_core::{FileId, Level, PairId, ParseError, DEFAULT_MAX_BYTES};
use cygent::backends::{Backend, BackendConfig, RemoteBackend};
use cygent::documents::SummaryMode;
use cygent::eval::{read_pairs, render_table, write_csv};
use cygent::jsonl::{self, JsonlError};
use cygent::service::{self, AppState, ApiError, ErrorCode};
use cygent::store::Store;
use cygent::summarize::{summarize_content, Analysis, Summarizer};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "cygent", version, about = "Log parsing, extraction, summarization and evaluation")]
struct Cli {
    /// Document store directory (created if absent).
    #[arg(long, global = true, env = "CYGENT_STORE", default_value = "cygent-store")]
    store: PathBuf,
    /// Completion backend for model summaries and chat.
    #[arg(long, global = true, value_enum, default_value_t = BackendKind::Fallback)]
    backend: BackendKind,
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    /// Deterministic offline extractive summaries.
    Fallback,
    /// Chat-completions endpoint from CYGENT_API_BASE / CYGENT_API_KEY / CYGENT_MODEL.
    Remote,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Line statistics of a log file.
    Parse {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Entities, levels and status classes found in a log file.
    Extract { file: PathBuf },
    /// Rule summary and, depending on the mode, a model summary.
    Summarize {
        file: PathBuf,
        #[arg(long, default_value = "both")]
        mode: SummaryMode,
    },
    /// Synthetic fine-tune dataset as train.jsonl and val.jsonl.
    Dataset {
        #[arg(long, default_value_t = 102)]
        count: usize,
        #[arg(long, default_value_t = 81)]
        train: usize,
        #[arg(long, default_value_t = 21)]
        val: usize,
        #[arg(long)]
        out: PathBuf,
        /// JSONL of {pair_id, completion} replacing generated completions.
        #[arg(long)]
        overrides: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        min_lines: usize,
        #[arg(long, default_value_t = 60)]
        max_lines: usize,
    },
    /// Scores candidate summaries against references.
    Eval {
        /// JSONL of {pair_id, candidate, reference, backend?}.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "rouge1,rouge2,rougel,bert")]
        metrics: Vec<Metric>,
        /// Write metrics.csv and tables.txt here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthetic log file on stdout.
    Generate {
        #[arg(long, default_value_t = 200)]
        lines: usize,
        #[arg(long, default_value = "mixed")]
        profile: Profile,
    },
    /// Fine-tune JSONL of every summary with user edits.
    FeedbackExport {
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs the HTTP service on CYGENT_BIND (default 127.0.0.1:8080).
    Serve,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let api = classify(&err);
            eprintln!("{}", serde_json::to_string(&api).expect("error serializes"));
            ExitCode::FAILURE
        }
    }
}

fn classify(err: &anyhow::Error) -> ApiError {
    let code = err
        .chain()
        .find_map(|cause| {
            if let Some(e) = cause.downcast_ref::<io::Error>() {
                return Some(if e.kind() == io::ErrorKind::NotFound {
                    ErrorCode::NotFound
                } else {
                    ErrorCode::BadRequest
                });
            }
            if cause.downcast_ref::<ParseError>().is_some() {
                return Some(ErrorCode::PayloadTooLarge);
            }
            if let Some(JsonlError::Io { source, .. }) = cause.downcast_ref::<JsonlError>() {
                return Some(if source.kind() == io::ErrorKind::NotFound {
                    ErrorCode::NotFound
                } else {
                    ErrorCode::BadRequest
                });
            }
            None
        })
        .unwrap_or(ErrorCode::BadRequest);
    ApiError::new(code, format!("{err:#}"))
}

fn backend(kind: BackendKind) -> anyhow::Result<Backend> {
    Ok(match kind {
        BackendKind::Fallback => Backend::Fallback,
        BackendKind::Remote => Backend::Remote(RemoteBackend::new(BackendConfig::from_env()?)?),
    })
}

fn read_log(path: &Path) -> anyhow::Result<String> {
    let meta = fs::metadata(path).with_context(|| format!("cannot read {}", path.display()))?;
    if meta.len() > DEFAULT_MAX_BYTES as u64 {
        return Err(ParseError::Oversize {
            limit: DEFAULT_MAX_BYTES,
            actual: meta.len() as usize,
        })
        .with_context(|| format!("cannot parse {}", path.display()));
    }
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn analyze(path: &Path) -> anyhow::Result<(String, Analysis)> {
    let content = read_log(path)?;
    let name = path.file_name().map_or_else(|| "log".into(), |n| n.to_string_lossy().into_owned());
    let id: String = name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
    let analysis = Analysis::of(FileId::new(id), &content).with_context(|| format!("cannot parse {}", path.display()))?;
    Ok((content, analysis))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut stdout = io::stdout().lock();
    match cli.command {
        Command::Parse { file, format } => {
            let (_, analysis) = analyze(&file)?;
            let parsed = &analysis.parsed;
            let level = |l: Level| parsed.app_records.iter().filter(|r| r.level == l).count();
            let stats = [
                ("total_lines", parsed.total_lines),
                ("access_records", parsed.access_records.len()),
                ("app_records", parsed.app_records.len()),
                ("unparsed", parsed.unparsed.len()),
                ("error", level(Level::Error)),
                ("warning", level(Level::Warning)),
                ("info", level(Level::Info)),
            ];
            match format {
                Format::Text => {
                    for (name, n) in stats {
                        writeln!(stdout, "{name}: {n}")?;
                    }
                }
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(&mut stdout);
                    w.write_record(stats.iter().map(|(name, _)| *name))?;
                    w.write_record(stats.iter().map(|(_, n)| n.to_string()))?;
                    w.flush()?;
                }
            }
        }
        Command::Extract { file } => {
            let (_, analysis) = analyze(&file)?;
            stdout.write_all(format_report(&analysis).as_bytes())?;
        }
        Command::Summarize { file, mode } => {
            let (content, analysis) = analyze(&file)?;
            let backend = backend(cli.backend)?;
            let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
            let file_id = analysis.parsed.file_id.clone();
            let doc = runtime.block_on(summarize_content(&file_id, &content, &analysis, mode, &backend));
            write!(stdout, "{}", doc.rule_summary.rendered)?;
            if let Some(text) = &doc.model_summary {
                write!(stdout, "\nModel Summary ({})\n{text}", doc.backend_name)?;
            }
            if let Some(reason) = &doc.degraded_reason {
                writeln!(stdout, "\nModel summary unavailable: {reason}")?;
            }
        }
        Command::Dataset {
            count,
            train,
            val,
            out,
            overrides,
            min_lines,
            max_lines,
        } => {
            let cfg = DatasetConfig {
                count,
                train_n: train,
                val_n: val,
                seed: cli.seed,
                min_lines,
                max_lines,
                ..DatasetConfig::default()
            };
            let mut pairs = build_dataset(&cfg)?;
            if let Some(path) = overrides {
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct Override {
                    pair_id: PairId,
                    completion: String,
                }
                let map: BTreeMap<PairId, String> = jsonl::read_records::<Override>(&path)?
                    .into_iter()
                    .map(|o| (o.pair_id, o.completion))
                    .collect();
                apply_overrides(&mut pairs, &map)?;
            }
            fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
            let n_train = jsonl::export_pairs(pairs.iter().filter(|p| p.split == Split::Train), &out.join("train.jsonl"))?;
            let n_val = jsonl::export_pairs(pairs.iter().filter(|p| p.split == Split::Validation), &out.join("val.jsonl"))?;
            writeln!(stdout, "train.jsonl: {n_train}\nval.jsonl: {n_val}")?;
        }
        Command::Eval { pairs, metrics, out } => {
            let pairs = read_pairs(&pairs)?;
            let report = evaluate_set(&pairs, &metrics, &ExactMatchEmbedder)?;
            let mut tables = String::new();
            for (i, metric) in metrics.iter().enumerate() {
                if i > 0 {
                    tables.push('\n');
                }
                tables.push_str(&render_table(&report, *metric));
            }
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
                    let csv_path = dir.join("metrics.csv");
                    let file = fs::File::create(&csv_path).with_context(|| format!("cannot write {}", csv_path.display()))?;
                    write_csv(&report, io::BufWriter::new(file))?;
                    let table_path = dir.join("tables.txt");
                    fs::write(&table_path, &tables).with_context(|| format!("cannot write {}", table_path.display()))?;
                }
                None => {
                    write_csv(&report, &mut stdout)?;
                    write!(stdout, "\n{tables}")?;
                }
            }
        }
        Command::Generate { lines, profile } => {
            let (text, _) = generate_log(cli.seed, lines, profile);
            stdout.write_all(text.as_bytes())?;
        }
        Command::FeedbackExport { out } => {
            let store = Store::open(&cli.store)?;
            let n = store.export_feedback(&out)?;
            writeln!(stdout, "{n} records written to {}", out.display())?;
        }
        Command::Serve => {
            let store = Arc::new(Store::open(&cli.store)?);
            let backend = backend(cli.backend)?;
            let addr = service::bind_addr().context("invalid CYGENT_BIND")?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr)
                    .await
                    .with_context(|| format!("cannot bind {addr}"))?;
                tracing::info!(%addr, backend = backend.name(), "serving");
                eprintln!("listening on {}", listener.local_addr()?);
                service::serve(listener, AppState::new(Summarizer::new(store, backend))).await?;
                anyhow::Ok(())
            })?;
        }
    }
    stdout.flush()?;
    Ok(())
}

fn format_report(analysis: &Analysis) -> String {
    let report = &analysis.report;
    let mut out = String::new();
    let _ = writeln!(out, "total_lines: {}", report.total_lines);
    let _ = writeln!(out, "errors: {}", report.error_lines.len());
    let _ = writeln!(out, "warnings: {}", report.warning_lines.len());
    let _ = writeln!(out, "exceptions: {}", report.exception_lines.len());
    out.push_str("\nevent types\n");
    for (event, n) in &report.event_type_counts {
        let _ = writeln!(out, "  {}: {n}", event.as_str());
    }
    out.push_str("\nstatus classes\n");
    for (class, n) in &report.status_class_counts {
        let _ = writeln!(out, "  {}: {n}", class.label());
    }
    let sections: [(&str, Vec<(String, usize)>); 4] = [
        ("ips", report.entities.ips.iter().map(|(v, n)| (v.clone(), n)).collect()),
        ("statuses", report.entities.statuses.iter().map(|(v, n)| (v.to_string(), n)).collect()),
        ("urls", report.entities.urls.iter().map(|(v, n)| (v.clone(), n)).collect()),
        ("file paths", report.entities.file_paths.iter().map(|(v, n)| (v.clone(), n)).collect()),
    ];
    for (title, values) in sections {
        let _ = writeln!(out, "\n{title}");
        for (value, n) in values {
            let _ = writeln!(out, "  {value} ({n})");
        }
    }
    out
}
