//! Summary-quality metrics: ROUGE-N, ROUGE-L and a greedy embedding-matching
//! F-score, plus the cross-product evaluation harness.
//!
//! All metrics share [`tokenize`], so scores are comparable across metrics.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ids::PairId;

/// Precision, recall and balanced F-score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub const ZERO: Prf = Prf {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    pub fn from_precision_recall(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f1 }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Lowercases and splits on every maximal run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(ToString::to_string)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if n > 0 && tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// ROUGE-N with clipped overlap counts. `n` must be at least 1; `n == 0`
/// scores zero.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> Prf {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    let cand_grams = ngram_counts(&cand, n);
    let ref_grams = ngram_counts(&refr, n);
    let overlap: usize = cand_grams
        .iter()
        .map(|(gram, c)| (*c).min(ref_grams.get(gram).copied().unwrap_or(0)))
        .sum();
    let cand_total: usize = cand_grams.values().sum();
    let ref_total: usize = ref_grams.values().sum();
    Prf::from_precision_recall(ratio(overlap, cand_total), ratio(overlap, ref_total))
}

/// Length of the longest common subsequence.
///
/// When `b` fits in a machine word the DP table is evaluated column-wise as a
/// bit vector (Allison-Dix / Hyyrö), O(|a|·|b|/64); otherwise the classic
/// row-by-row table is used, O(|a|·|b|) time and O(|b|) space.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if b.len() <= 64 {
        lcs_bit_parallel(a, b)
    } else {
        lcs_table(a, b)
    }
}

fn lcs_bit_parallel<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let width = b.len();
    if width == 0 {
        return 0;
    }
    let full = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
    // zero bits of `v` mark where the DP row steps up
    let mut v = full;
    for x in a {
        let matches = b
            .iter()
            .enumerate()
            .fold(0u64, |m, (j, y)| m | (u64::from(x == y) << j));
        let u = v & matches;
        v = (v.wrapping_add(u) | (v - u)) & full;
    }
    width - v.count_ones() as usize
}

/// Classic O(|a|·|b|) dynamic-programming table, one row at a time.
pub fn lcs_table<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    // row[j] holds the LCS of the processed prefix of `a` and b[..j]
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        let mut left = 0;
        for (j, y) in b.iter().enumerate() {
            let above = row[j + 1];
            left = if x == y { diag + 1 } else { above.max(left) };
            row[j + 1] = left;
            diag = above;
        }
    }
    row[b.len()]
}

pub fn rouge_l(candidate: &str, reference: &str) -> Prf {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    let lcs = lcs_length(&cand, &refr);
    Prf::from_precision_recall(ratio(lcs, cand.len()), ratio(lcs, refr.len()))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmbedError {
    #[error("embedder failed: {0}")]
    Backend(String),
    #[error("embedder returned {got} vectors for {expected} tokens")]
    WrongCount { expected: usize, got: usize },
    #[error("embedding of token {index} is not unit-norm")]
    NotUnitNorm { index: usize },
    #[error("embedding dimensions differ")]
    DimensionMismatch,
}

/// Maps tokens to unit-norm vectors.
///
/// Vectors are only compared within one call, so an implementation may use
/// a vocabulary built from the batch itself.
pub trait Embedder {
    fn embed(&self, tokens: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

/// Deterministic fallback: one-hot vectors over the batch vocabulary, so two
/// tokens have similarity 1 when equal and 0 otherwise.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatchEmbedder;

impl Embedder for ExactMatchEmbedder {
    fn embed(&self, tokens: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let vocab: BTreeMap<&str, usize> = tokens
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t, i))
            .collect();
        Ok(tokens
            .iter()
            .map(|t| {
                let mut v = vec![0.0; vocab.len()];
                v[vocab[t]] = 1.0;
                v
            })
            .collect())
    }
}

const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Greedy-matching embedding F-score (no IDF weighting, no baseline rescale).
///
/// Each candidate token is matched to its most similar reference token and
/// vice versa; best similarities are clamped to `[0, 1]` before averaging.
pub fn embed_score(candidate: &str, reference: &str, embedder: &dyn Embedder) -> Result<Prf, EmbedError> {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() || refr.is_empty() {
        return Ok(Prf::ZERO);
    }
    let batch: Vec<&str> = cand.iter().chain(refr.iter()).map(String::as_str).collect();
    let vectors = embedder.embed(&batch)?;
    if vectors.len() != batch.len() {
        return Err(EmbedError::WrongCount {
            expected: batch.len(),
            got: vectors.len(),
        });
    }
    let dim = vectors[0].len();
    for (index, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(EmbedError::DimensionMismatch);
        }
        let norm_sq: f64 = v.iter().map(|x| x * x).sum();
        if (norm_sq - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(EmbedError::NotUnitNorm { index });
        }
    }
    let (cand_vecs, ref_vecs) = vectors.split_at(cand.len());
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let best_mean = |from: &[Vec<f64>], to: &[Vec<f64>]| {
        from.iter()
            .map(|a| {
                to.iter()
                    .map(|b| dot(a, b))
                    .fold(f64::NEG_INFINITY, f64::max)
                    .clamp(0.0, 1.0)
            })
            .sum::<f64>()
            / from.len() as f64
    };
    Ok(Prf::from_precision_recall(
        best_mean(cand_vecs, ref_vecs),
        best_mean(ref_vecs, cand_vecs),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "rouge1")]
    Rouge1,
    #[serde(rename = "rouge2")]
    Rouge2,
    #[serde(rename = "rougel")]
    RougeL,
    #[serde(rename = "bert")]
    Bert,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Rouge1, Metric::Rouge2, Metric::RougeL, Metric::Bert];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rouge1 => "rouge1",
            Metric::Rouge2 => "rouge2",
            Metric::RougeL => "rougel",
            Metric::Bert => "bert",
        }
    }

    /// Human-readable caption used in table headings.
    pub fn title(self) -> &'static str {
        match self {
            Metric::Rouge1 => "ROUGE-1",
            Metric::Rouge2 => "ROUGE-2",
            Metric::RougeL => "ROUGE-L",
            Metric::Bert => "BERTScore",
        }
    }

    pub fn score(self, candidate: &str, reference: &str, embedder: &dyn Embedder) -> Result<Prf, EmbedError> {
        Ok(match self {
            Metric::Rouge1 => rouge_n(candidate, reference, 1),
            Metric::Rouge2 => rouge_n(candidate, reference, 2),
            Metric::RougeL => rouge_l(candidate, reference),
            Metric::Bert => embed_score(candidate, reference, embedder)?,
        })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown metric `{0}` (expected rouge1, rouge2, rougel or bert)")]
pub struct UnknownMetric(pub String);

impl FromStr for Metric {
    type Err = UnknownMetric;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownMetric(s.to_string()))
    }
}

/// One candidate summary and its reference. `backend` names the system that
/// produced the candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub pair_id: PairId,
    pub backend: String,
    pub candidate: String,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub pair_id: PairId,
    pub backend: String,
    pub metric: Metric,
    #[serde(flatten)]
    pub prf: Prf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    /// Pair ids in first-seen order.
    pub fn pair_ids(&self) -> Vec<&PairId> {
        let mut seen = BTreeSet::new();
        self.rows.iter().map(|r| &r.pair_id).filter(|p| seen.insert(*p)).collect()
    }

    /// Backend labels in first-seen order.
    pub fn backends(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.rows
            .iter()
            .map(|r| r.backend.as_str())
            .filter(|b| seen.insert(*b))
            .collect()
    }

    /// Metrics in first-seen order.
    pub fn metrics(&self) -> Vec<Metric> {
        let mut seen = BTreeSet::new();
        self.rows.iter().map(|r| r.metric).filter(|m| seen.insert(*m)).collect()
    }

    pub fn get(&self, pair_id: &PairId, backend: &str, metric: Metric) -> Option<&Prf> {
        self.rows
            .iter()
            .find(|r| &r.pair_id == pair_id && r.backend == backend && r.metric == metric)
            .map(|r| &r.prf)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("duplicate pair id `{pair_id}` for backend `{backend}`")]
    DuplicatePairId { pair_id: PairId, backend: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Scores every pair under every metric. Rows follow pair order, then metric
/// order.
pub fn evaluate_set(pairs: &[EvalPair], metrics: &[Metric], embedder: &dyn Embedder) -> Result<MetricReport, EvalError> {
    let mut seen = BTreeSet::new();
    for pair in pairs {
        if !seen.insert((&pair.pair_id, &pair.backend)) {
            return Err(EvalError::DuplicatePairId {
                pair_id: pair.pair_id.clone(),
                backend: pair.backend.clone(),
            });
        }
    }
    let mut rows = Vec::with_capacity(pairs.len() * metrics.len());
    for pair in pairs {
        for &metric in metrics {
            rows.push(MetricRow {
                pair_id: pair.pair_id.clone(),
                backend: pair.backend.clone(),
                metric,
                prf: metric.score(&pair.candidate, &pair.reference, embedder)?,
            });
        }
    }
    Ok(MetricReport { rows })
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn embed(&self, tokens: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        (**self).embed(tokens)
    }
}
