//! Evaluation file formats: pairs JSONL in, CSV and text tables out.

use std::io::Write;
use std::path::Path;

use cygent_core::metrics::{EvalPair, Metric, MetricReport};
use cygent_core::PairId;
use serde::{Deserialize, Serialize};

use crate::jsonl::{self, JsonlError};

/// Backend label for pairs that do not name one.
pub const DEFAULT_BACKEND: &str = "candidate";

pub const CSV_HEADER: [&str; 6] = ["pair_id", "backend", "metric", "precision", "recall", "f1"];

/// One line of a pairs file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub pair_id: PairId,
    pub candidate: String,
    pub reference: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
}

impl From<PairRecord> for EvalPair {
    fn from(r: PairRecord) -> Self {
        EvalPair {
            pair_id: r.pair_id,
            backend: r.backend.unwrap_or_else(|| DEFAULT_BACKEND.to_string()),
            candidate: r.candidate,
            reference: r.reference,
        }
    }
}

pub fn read_pairs(src: &Path) -> Result<Vec<EvalPair>, JsonlError> {
    Ok(jsonl::read_records::<PairRecord>(src)?.into_iter().map(EvalPair::from).collect())
}

/// Writes one CSV row per (pair, backend, metric).
pub fn write_csv<W: Write>(report: &MetricReport, out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for row in &report.rows {
        writer.write_record([
            row.pair_id.as_str(),
            &row.backend,
            row.metric.name(),
            &row.prf.precision.to_string(),
            &row.prf.recall.to_string(),
            &row.prf.f1.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// F-score table for one metric: one row per pair, one column per backend.
pub fn render_table(report: &MetricReport, metric: Metric) -> String {
    let backends = report.backends();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["Prompt".to_string()];
    header.extend(backends.iter().map(|b| b.to_string()));
    rows.push(header);
    for pair_id in report.pair_ids() {
        let mut row = vec![pair_id.to_string()];
        for backend in &backends {
            row.push(match report.get(pair_id, backend, metric) {
                Some(prf) => format!("{:.6}", prf.f1),
                None => "-".to_string(),
            });
        }
        rows.push(row);
    }

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = format!("{} (F-score)\n", metric.title());
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(cell, w)| format!("{cell:<w$}")).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&rule.join("  "));
            out.push('\n');
        }
    }
    out
}
