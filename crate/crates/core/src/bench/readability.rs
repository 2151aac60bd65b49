//! Readability grades and plain description statistics.

use super::tokenize::tokenize;
use super::{BenchError, MetricReport};
use crate::Scalar;

/// ARI, Flesch-Kincaid grade, SMOG, and their arithmetic mean.
///
/// ARI = 4.71 (chars/words) + 0.5 (words/sentences) - 21.43;
/// FK = 0.39 (words/sentences) + 11.8 (syllables/words) - 15.59;
/// SMOG = 1.0430 sqrt(polysyllables * 30 / sentences) + 3.1291, where a
/// polysyllable is a word of three or more syllables.
pub fn readability(text: &str) -> Result<Vec<MetricReport>, BenchError> {
    let tokenized = tokenize(text);
    if tokenized.sentence_count() == 0 {
        return Err(BenchError::DegenerateInput("text has no sentences".into()));
    }
    let words = tokenized.word_count() as Scalar;
    let sentences = tokenized.sentence_count() as Scalar;
    let chars = tokenized.char_count as Scalar;
    let syllables = tokenized.syllable_total() as Scalar;
    let polysyllables = tokenized.polysyllable_count() as Scalar;

    let ari = 4.71 * (chars / words) + 0.5 * (words / sentences) - 21.43;
    let fk = 0.39 * (words / sentences) + 11.8 * (syllables / words) - 15.59;
    let smog = 1.0430 * (polysyllables * 30.0 / sentences).sqrt() + 3.1291;
    let average = (ari + fk + smog) / 3.0;

    Ok(vec![
        MetricReport::new("ari", ari)
            .with_detail("chars", chars)
            .with_detail("words", words)
            .with_detail("sentences", sentences),
        MetricReport::new("fk", fk)
            .with_detail("words", words)
            .with_detail("sentences", sentences)
            .with_detail("syllables", syllables),
        MetricReport::new("smog", smog)
            .with_detail("polysyllables", polysyllables)
            .with_detail("sentences", sentences),
        MetricReport::new("readability-average", average),
    ])
}

/// Word and sentence counts for one description. Empty text counts as zero
/// of both rather than an error.
pub fn description_stats(text: &str) -> MetricReport {
    let tokenized = tokenize(text);
    MetricReport::new("description-stats", tokenized.word_count() as Scalar)
        .with_detail("words", tokenized.word_count() as Scalar)
        .with_detail("sentences", tokenized.sentence_count() as Scalar)
        .with_detail("syllables", tokenized.syllable_total() as Scalar)
        .with_detail("chars", tokenized.char_count as Scalar)
}
