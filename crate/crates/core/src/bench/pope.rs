//! Accuracy scoring for yes/no object-existence probes.

use super::{BenchError, MetricReport};
use crate::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One probe: the question id, which sampling split it came from, the yes/no
/// ground truth, and the model's free-text answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopeItem {
    pub question_id: String,
    pub split: String,
    pub gt: String,
    pub answer: String,
}

const SPLIT_ORDER: &[&str] = &["adversarial", "random", "popular"];

fn canonical_split(raw: &str) -> Option<&'static str> {
    let lower = raw.trim().to_lowercase();
    SPLIT_ORDER.iter().find(|name| lower.starts_with(&name[..3])).copied()
}

/// First alphabetic word of the answer, if it is yes or no. "Yes, there is."
/// parses; "nothing" does not silently count as no.
fn parse_answer(answer: &str) -> Option<bool> {
    let word: String = answer
        .chars()
        .skip_while(|c| !c.is_alphabetic())
        .take_while(|c| c.is_alphabetic())
        .collect();
    match word.to_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

#[derive(Default)]
struct Tally {
    total: u64,
    correct: u64,
    unparseable: u64,
}

/// Accuracy per split as a percentage, then the mean over the splits that
/// appear. Answers that parse as neither yes nor no count as incorrect and
/// are tallied under `unparseable`.
pub fn pope_score(items: &[PopeItem]) -> Result<Vec<MetricReport>, BenchError> {
    if items.is_empty() {
        return Err(BenchError::DegenerateInput("no probe items".into()));
    }
    let mut tallies: BTreeMap<&'static str, Tally> = BTreeMap::new();
    for item in items {
        let split = canonical_split(&item.split).ok_or_else(|| {
            BenchError::Input(format!(
                "unknown split {:?} for question {}",
                item.split, item.question_id
            ))
        })?;
        let gt = match item.gt.trim().to_lowercase().as_str() {
            "yes" => true,
            "no" => false,
            other => {
                return Err(BenchError::Input(format!(
                    "ground truth for question {} must be yes or no, got {other:?}",
                    item.question_id
                )))
            }
        };
        let tally = tallies.entry(split).or_default();
        tally.total += 1;
        match parse_answer(&item.answer) {
            Some(answer) if answer == gt => tally.correct += 1,
            Some(_) => {}
            None => tally.unparseable += 1,
        }
    }

    let mut reports = Vec::new();
    let mut sum = 0.0;
    for split in SPLIT_ORDER {
        let Some(tally) = tallies.get(split) else { continue };
        let accuracy = 100.0 * tally.correct as Scalar / tally.total as Scalar;
        sum += accuracy;
        reports.push(
            MetricReport::new(format!("pope-{split}"), accuracy)
                .with_detail("correct", tally.correct as Scalar)
                .with_detail("total", tally.total as Scalar)
                .with_detail("unparseable", tally.unparseable as Scalar),
        );
    }
    let splits = reports.len() as Scalar;
    reports.push(
        MetricReport::new("pope-average", sum / splits).with_detail("splits", splits),
    );
    Ok(reports)
}
