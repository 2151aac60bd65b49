//! JSONL corpus formats shared by the evaluation commands.

use super::pope::PopeItem;
use super::BenchError;
use crate::Scalar;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

/// One image's candidate description and its reference descriptions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub id: String,
    pub candidate: String,
    pub references: Vec<String>,
}

/// Precomputed embeddings of an image and of the image generated back from
/// its description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPair {
    pub id: String,
    pub original: Vec<Scalar>,
    pub generated: Vec<Scalar>,
}

fn load_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, BenchError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| BenchError::Io { path: path.to_path_buf(), source })?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(line).map_err(|e| {
            BenchError::Input(format!("{}:{}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(rows)
}

fn check_unique<T>(rows: &[T], id: impl Fn(&T) -> &str, path: &Path) -> Result<(), BenchError> {
    let mut seen = HashMap::new();
    for (i, row) in rows.iter().enumerate() {
        if let Some(first) = seen.insert(id(row), i + 1) {
            return Err(BenchError::Input(format!(
                "{}: duplicate id {:?} (rows {} and {})",
                path.display(),
                id(row),
                first,
                i + 1
            )));
        }
    }
    Ok(())
}

/// Combined corpus: one `{id, candidate, references[]}` object per line.
pub fn load_eval_corpus(path: &Path) -> Result<Vec<EvalPair>, BenchError> {
    let pairs: Vec<EvalPair> = load_jsonl(path)?;
    check_unique(&pairs, |p| &p.id, path)?;
    Ok(pairs)
}

#[derive(Deserialize)]
struct PredRow {
    id: String,
    candidate: String,
}

#[derive(Deserialize)]
struct RefRow {
    id: String,
    references: Vec<String>,
}

/// Split corpus: predictions as `{id, candidate}` lines, references as
/// `{id, references[]}` lines, joined by id in prediction order. Ids present
/// on only one side make the corpora misaligned.
pub fn load_split_corpus(
    pred_path: &Path,
    refs_path: &Path,
) -> Result<Vec<EvalPair>, BenchError> {
    let preds: Vec<PredRow> = load_jsonl(pred_path)?;
    let refs: Vec<RefRow> = load_jsonl(refs_path)?;
    check_unique(&preds, |p| &p.id, pred_path)?;
    check_unique(&refs, |r| &r.id, refs_path)?;

    let mut by_id: HashMap<&str, &RefRow> = refs.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut pairs = Vec::with_capacity(preds.len());
    let mut missing_references = Vec::new();
    for pred in &preds {
        match by_id.remove(pred.id.as_str()) {
            Some(row) => pairs.push(EvalPair {
                id: pred.id.clone(),
                candidate: pred.candidate.clone(),
                references: row.references.clone(),
            }),
            None => missing_references.push(pred.id.clone()),
        }
    }
    let mut missing_candidates: Vec<String> = by_id.keys().map(|id| id.to_string()).collect();
    missing_candidates.sort();
    if !missing_references.is_empty() || !missing_candidates.is_empty() {
        return Err(BenchError::Alignment { missing_references, missing_candidates });
    }
    Ok(pairs)
}

/// Probe items: `{question_id, split, gt, answer}` per line.
pub fn load_pope_items(path: &Path) -> Result<Vec<PopeItem>, BenchError> {
    load_jsonl(path)
}

/// Embedding pairs: `{id, original[], generated[]}` per line.
pub fn load_embedding_pairs(path: &Path) -> Result<Vec<EmbeddingPair>, BenchError> {
    let pairs: Vec<EmbeddingPair> = load_jsonl(path)?;
    check_unique(&pairs, |p| &p.id, path)?;
    Ok(pairs)
}
