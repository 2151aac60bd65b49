//! Evaluation metrics over description corpora.
//!
//! N-gram overlap against reference descriptions (BLEU, ROUGE-L, CIDEr-D),
//! readability grades (ARI, FK, SMOG), plain word/sentence statistics,
//! embedding cosine scoring, and yes/no object-probe accuracy. Everything
//! operates on plain strings or the JSONL corpus formats in [`corpus`], so
//! scoring never needs a model backend.

mod corpus;
mod overlap;
mod pope;
mod readability;
mod tokenize;

pub use corpus::{
    load_embedding_pairs, load_eval_corpus, load_pope_items, load_split_corpus, EmbeddingPair,
    EvalPair,
};
pub use overlap::{bleu, bleu_corpus, cider, rouge_l, rouge_l_corpus};
pub use pope::{pope_score, PopeItem};
pub use readability::{description_stats, readability};
pub use tokenize::{tokenize, TokenizedText};

use crate::Scalar;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error(
        "corpora misaligned: no references for [{}]; no candidates for [{}]",
        .missing_references.join(", "),
        .missing_candidates.join(", ")
    )]
    Alignment {
        missing_references: Vec<String>,
        missing_candidates: Vec<String>,
    },
    #[error("embedding lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("{0}")]
    Input(String),
    #[error("reading {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One scored metric: a name, the headline value, and named numbers backing
/// it (per-item scores, counts, intermediate terms).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub name: String,
    pub value: Scalar,
    pub details: BTreeMap<String, Scalar>,
}

impl MetricReport {
    pub fn new(name: impl Into<String>, value: Scalar) -> Self {
        debug_assert!(value.is_finite(), "metric value must be finite, got {value}");
        Self { name: name.into(), value, details: BTreeMap::new() }
    }

    pub fn with_detail(mut self, key: impl Into<String>, value: Scalar) -> Self {
        self.details.insert(key.into(), value);
        self
    }
}

/// Metric names reserved in reports for externally computed scores.
pub const RESERVED_METRICS: &[&str] = &["meteor", "spice", "wmd"];

/// Cosine similarity between two embedding vectors, scaled to [-100, 100].
///
/// Identical vectors score exactly 100.0: the underlying cosine computes both
/// norms and the dot product with one shared fold, so the quotient collapses
/// to 1 bit-for-bit.
pub fn d2i_score(original: &[Scalar], generated: &[Scalar]) -> Result<MetricReport, BenchError> {
    if original.len() != generated.len() {
        return Err(BenchError::LengthMismatch {
            left: original.len(),
            right: generated.len(),
        });
    }
    if original.iter().chain(generated).any(|v| !v.is_finite()) {
        return Err(BenchError::Input("embedding has a non-finite component".into()));
    }
    match crate::numeric::cosine(original, generated) {
        Some(c) => Ok(MetricReport::new("d2i", 100.0 * c)),
        None => Err(BenchError::ZeroVector),
    }
}

/// Mean d2i score over a corpus of embedding pairs, per-pair scores keyed by
/// id in the details.
pub fn d2i_corpus(pairs: &[EmbeddingPair]) -> Result<MetricReport, BenchError> {
    if pairs.is_empty() {
        return Err(BenchError::DegenerateInput("no embedding pairs".into()));
    }
    let mut details = BTreeMap::new();
    let mut sum = 0.0;
    for pair in pairs {
        let report = d2i_score(&pair.original, &pair.generated)
            .map_err(|e| BenchError::Input(format!("pair {}: {e}", pair.id)))?;
        sum += report.value;
        details.insert(pair.id.clone(), report.value);
    }
    Ok(MetricReport { name: "d2i".into(), value: sum / pairs.len() as Scalar, details })
}

/// Reports as one JSON object: `metrics` maps each name to its value (with
/// every reserved name filled in as null so external scores can be merged),
/// `details` nests each report's backing numbers.
pub fn render_report_json(reports: &[MetricReport], reserved: &[&str]) -> String {
    use serde_json::{Map, Value};
    let mut metrics = Map::new();
    for r in reports {
        metrics.insert(r.name.clone(), Value::from(r.value));
    }
    for name in reserved {
        metrics.entry((*name).to_string()).or_insert(Value::Null);
    }
    let mut details = Map::new();
    for r in reports {
        if !r.details.is_empty() {
            details.insert(
                r.name.clone(),
                serde_json::to_value(&r.details).expect("details serialize"),
            );
        }
    }
    let report = Value::Object(Map::from_iter([
        ("metrics".to_string(), Value::Object(metrics)),
        ("details".to_string(), Value::Object(details)),
    ]));
    serde_json::to_string_pretty(&report).expect("report serializes")
}

/// Reports as an aligned two-column text table; reserved names without a
/// computed value show as `--`.
pub fn render_report_table(reports: &[MetricReport], reserved: &[&str]) -> String {
    let mut rows: Vec<(String, String)> = reports
        .iter()
        .map(|r| (r.name.clone(), format!("{:.4}", r.value)))
        .collect();
    for name in reserved {
        if !reports.iter().any(|r| r.name == *name) {
            rows.push(((*name).to_string(), "--".to_string()));
        }
    }
    let name_width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("metric".len());
    let value_width = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0).max("value".len());
    let mut out = String::new();
    out.push_str(&format!("{:<name_width$}  {:>value_width$}\n", "metric", "value"));
    out.push_str(&format!("{}  {}\n", "-".repeat(name_width), "-".repeat(value_width)));
    for (name, value) in rows {
        out.push_str(&format!("{name:<name_width$}  {value:>value_width$}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d2i_identical_vectors_score_exactly_100() {
        let v = [0.3, -1.7, 2.4, 0.001, 9.9];
        assert_eq!(d2i_score(&v, &v).unwrap().value, 100.0);
    }

    #[test]
    fn d2i_is_scale_invariant() {
        let a = [0.25, -0.5, 1.0, 2.0];
        let b: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
        assert_eq!(d2i_score(&a, &b).unwrap().value, 100.0);
    }

    #[test]
    fn d2i_orthogonal_vectors_score_zero() {
        assert_eq!(d2i_score(&[1.0, 0.0], &[0.0, 1.0]).unwrap().value, 0.0);
    }

    #[test]
    fn d2i_rejects_mismatched_and_zero_inputs() {
        assert!(matches!(
            d2i_score(&[1.0], &[1.0, 2.0]),
            Err(BenchError::LengthMismatch { left: 1, right: 2 })
        ));
        assert!(matches!(d2i_score(&[0.0, 0.0], &[1.0, 2.0]), Err(BenchError::ZeroVector)));
        assert!(matches!(d2i_score(&[f64::NAN], &[1.0]), Err(BenchError::Input(_))));
    }

    #[test]
    fn d2i_corpus_averages_and_records_per_pair() {
        let pairs = vec![
            EmbeddingPair {
                id: "a".into(),
                original: vec![1.0, 0.0],
                generated: vec![1.0, 0.0],
            },
            EmbeddingPair {
                id: "b".into(),
                original: vec![1.0, 0.0],
                generated: vec![0.0, 1.0],
            },
        ];
        let report = d2i_corpus(&pairs).unwrap();
        assert_eq!(report.value, 50.0);
        assert_eq!(report.details["a"], 100.0);
        assert_eq!(report.details["b"], 0.0);
    }

    #[test]
    fn json_report_reserves_external_metric_names() {
        let reports = vec![MetricReport::new("bleu-1", 0.5)];
        let rendered = render_report_json(&reports, RESERVED_METRICS);
        let parsed: serde_json::Value = serde_json::from_str(&rendered).unwrap();
        assert_eq!(parsed["metrics"]["bleu-1"], 0.5);
        assert!(parsed["metrics"]["meteor"].is_null());
        assert!(parsed["metrics"]["spice"].is_null());
        assert!(parsed["metrics"]["wmd"].is_null());
    }

    #[test]
    fn table_report_aligns_columns() {
        let reports = vec![
            MetricReport::new("bleu-1", 0.60653),
            MetricReport::new("rouge-l", 0.8299),
        ];
        let table = render_report_table(&reports, &["meteor"]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0].trim_end(), "metric    value");
        assert!(lines.iter().any(|l| l.starts_with("bleu-1") && l.ends_with("0.6065")));
        assert!(lines.iter().any(|l| l.starts_with("meteor") && l.ends_with("--")));
        let width = lines[0].len();
        assert!(lines.iter().all(|l| l.len() <= width));
    }
}
