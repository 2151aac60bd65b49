//! N-gram overlap metrics: BLEU, ROUGE-L, and CIDEr-D.

use super::tokenize::tokenize;
use super::{BenchError, EvalPair, MetricReport};
use crate::Scalar;
use std::collections::{HashMap, HashSet};

/// Stand-in for a zero n-gram precision so the geometric mean stays defined
/// on short texts. Scores with every precision positive are unaffected.
const BLEU_EPSILON: Scalar = 1e-9;

/// Recall weight in the ROUGE-L F-measure, the caption-evaluation convention.
const ROUGE_BETA: Scalar = 1.2;

/// Gaussian width of the CIDEr-D length penalty.
const CIDER_SIGMA: Scalar = 6.0;

const MAX_N: usize = 4;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Reference length closest to the candidate length, shorter on ties.
fn closest_ref_len(candidate_len: usize, ref_lens: &[usize]) -> usize {
    let mut best = ref_lens[0];
    for &len in &ref_lens[1..] {
        let (current, challenger) = (best.abs_diff(candidate_len), len.abs_diff(candidate_len));
        if challenger < current || (challenger == current && len < best) {
            best = len;
        }
    }
    best
}

#[derive(Debug, Default)]
struct BleuTally {
    matches: [u64; MAX_N],
    totals: [u64; MAX_N],
    candidate_len: u64,
    reference_len: u64,
}

impl BleuTally {
    fn add_segment(&mut self, candidate: &[String], references: &[Vec<String>]) {
        for n in 1..=MAX_N {
            let cand = ngram_counts(candidate, n);
            let refs: Vec<_> = references.iter().map(|r| ngram_counts(r, n)).collect();
            for (gram, &count) in &cand {
                let cap = refs.iter().map(|r| r.get(*gram).copied().unwrap_or(0)).max();
                self.matches[n - 1] += count.min(cap.unwrap_or(0));
            }
            self.totals[n - 1] += cand.values().sum::<u64>();
        }
        self.candidate_len += candidate.len() as u64;
        let ref_lens: Vec<usize> = references.iter().map(Vec::len).collect();
        self.reference_len += closest_ref_len(candidate.len(), &ref_lens) as u64;
    }

    fn reports(&self, max_n: usize) -> Vec<MetricReport> {
        let c = self.candidate_len as Scalar;
        let r = self.reference_len as Scalar;
        let brevity_penalty =
            if self.candidate_len < self.reference_len { (1.0 - r / c).exp() } else { 1.0 };
        let precisions: Vec<Scalar> = (0..max_n)
            .map(|k| {
                if self.totals[k] == 0 {
                    0.0
                } else {
                    self.matches[k] as Scalar / self.totals[k] as Scalar
                }
            })
            .collect();
        (1..=max_n)
            .map(|n| {
                let log_sum: Scalar = precisions[..n]
                    .iter()
                    .map(|&p| if p > 0.0 { p.ln() } else { BLEU_EPSILON.ln() })
                    .sum();
                let value = brevity_penalty * (log_sum / n as Scalar).exp();
                MetricReport::new(format!("bleu-{n}"), value)
                    .with_detail("brevity_penalty", brevity_penalty)
                    .with_detail("precision", precisions[n - 1])
                    .with_detail("candidate_len", c)
                    .with_detail("reference_len", r)
            })
            .collect()
    }
}

fn check_max_n(max_n: usize) -> Result<(), BenchError> {
    if (1..=MAX_N).contains(&max_n) {
        Ok(())
    } else {
        Err(BenchError::Input(format!("max_n must be in 1..=4, got {max_n}")))
    }
}

/// Sentence-level BLEU-1..max_n of one candidate against its references.
///
/// Modified n-gram precision with per-reference clipping; brevity penalty
/// `exp(1 - r/c)` when the candidate is shorter than the closest reference.
pub fn bleu<S: AsRef<str>>(
    candidate: &str,
    references: &[S],
    max_n: usize,
) -> Result<Vec<MetricReport>, BenchError> {
    check_max_n(max_n)?;
    let cand = tokenize(candidate).tokens;
    if cand.is_empty() {
        return Err(BenchError::DegenerateInput("candidate has no tokens".into()));
    }
    let refs: Vec<Vec<String>> = references
        .iter()
        .map(|r| tokenize(r.as_ref()).tokens)
        .filter(|t| !t.is_empty())
        .collect();
    if refs.is_empty() {
        return Err(BenchError::DegenerateInput("references have no tokens".into()));
    }
    let mut tally = BleuTally::default();
    tally.add_segment(&cand, &refs);
    Ok(tally.reports(max_n))
}

/// Corpus-level BLEU: clipped matches, totals, and lengths are summed over
/// all pairs before the precision quotients are taken.
pub fn bleu_corpus(pairs: &[EvalPair], max_n: usize) -> Result<Vec<MetricReport>, BenchError> {
    check_max_n(max_n)?;
    if pairs.is_empty() {
        return Err(BenchError::DegenerateInput("empty corpus".into()));
    }
    let mut tally = BleuTally::default();
    for pair in pairs {
        let cand = tokenize(&pair.candidate).tokens;
        let refs: Vec<Vec<String>> = pair
            .references
            .iter()
            .map(|r| tokenize(r).tokens)
            .filter(|t| !t.is_empty())
            .collect();
        if refs.is_empty() {
            return Err(BenchError::DegenerateInput(format!(
                "references for {} have no tokens",
                pair.id
            )));
        }
        tally.add_segment(&cand, &refs);
    }
    if tally.candidate_len == 0 {
        return Err(BenchError::DegenerateInput("corpus candidates have no tokens".into()));
    }
    Ok(tally.reports(max_n))
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut row = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            row[j + 1] = if x == y { prev[j] + 1 } else { row[j].max(prev[j + 1]) };
        }
        prev = row;
    }
    prev[b.len()]
}

fn rouge_f(candidate: &[String], reference: &[String]) -> (Scalar, Scalar, Scalar, usize) {
    let lcs = lcs_len(candidate, reference);
    let recall = lcs as Scalar / reference.len() as Scalar;
    let precision = lcs as Scalar / candidate.len() as Scalar;
    let beta2 = ROUGE_BETA * ROUGE_BETA;
    let denom = recall + beta2 * precision;
    let f = if denom == 0.0 { 0.0 } else { (1.0 + beta2) * recall * precision / denom };
    (f, recall, precision, lcs)
}

/// ROUGE-L F-measure of a candidate against one reference.
pub fn rouge_l(candidate: &str, reference: &str) -> Result<MetricReport, BenchError> {
    let cand = tokenize(candidate).tokens;
    let reference = tokenize(reference).tokens;
    if cand.is_empty() || reference.is_empty() {
        return Err(BenchError::DegenerateInput("both texts need at least one token".into()));
    }
    let (f, recall, precision, lcs) = rouge_f(&cand, &reference);
    Ok(MetricReport::new("rouge-l", f)
        .with_detail("recall", recall)
        .with_detail("precision", precision)
        .with_detail("lcs", lcs as Scalar))
}

/// Corpus ROUGE-L: per pair the best F over its references, averaged over
/// pairs; per-pair scores are keyed by id in the details.
pub fn rouge_l_corpus(pairs: &[EvalPair]) -> Result<MetricReport, BenchError> {
    if pairs.is_empty() {
        return Err(BenchError::DegenerateInput("empty corpus".into()));
    }
    let mut details = std::collections::BTreeMap::new();
    let mut sum = 0.0;
    for pair in pairs {
        let cand = tokenize(&pair.candidate).tokens;
        let refs: Vec<Vec<String>> = pair
            .references
            .iter()
            .map(|r| tokenize(r).tokens)
            .filter(|t| !t.is_empty())
            .collect();
        if refs.is_empty() {
            return Err(BenchError::DegenerateInput(format!(
                "references for {} have no tokens",
                pair.id
            )));
        }
        let best = if cand.is_empty() {
            0.0
        } else {
            refs.iter().map(|r| rouge_f(&cand, r).0).fold(0.0, Scalar::max)
        };
        sum += best;
        details.insert(pair.id.clone(), best);
    }
    let mut report = MetricReport::new("rouge-l", sum / pairs.len() as Scalar);
    report.details = details;
    Ok(report)
}

/// CIDEr-D over an id-aligned corpus.
///
/// For each n in 1..=4, candidate and reference n-gram counts are weighted by
/// corpus idf `ln(N) - ln(max(1, df))`, compared by clipped cosine, and
/// scaled by the Gaussian length penalty `exp(-(c-r)^2 / (2 sigma^2))`; the
/// per-image score is 10 times the mean over n of the per-reference average.
/// The reported value is the corpus mean, with per-image scores keyed by id
/// in the details.
pub fn cider(pairs: &[EvalPair]) -> Result<MetricReport, BenchError> {
    if pairs.is_empty() {
        return Err(BenchError::DegenerateInput("empty corpus".into()));
    }
    for pair in pairs {
        if pair.references.is_empty() {
            return Err(BenchError::DegenerateInput(format!(
                "image {} has no references",
                pair.id
            )));
        }
    }
    let cand_tokens: Vec<Vec<String>> =
        pairs.iter().map(|p| tokenize(&p.candidate).tokens).collect();
    let ref_tokens: Vec<Vec<Vec<String>>> = pairs
        .iter()
        .map(|p| p.references.iter().map(|r| tokenize(r).tokens).collect())
        .collect();

    let mut df: Vec<HashMap<&[String], u64>> = (0..MAX_N).map(|_| HashMap::new()).collect();
    for refs in &ref_tokens {
        for (n, table) in df.iter_mut().enumerate() {
            let mut seen: HashSet<&[String]> = HashSet::new();
            for tokens in refs {
                seen.extend(tokens.windows(n + 1));
            }
            for gram in seen {
                *table.entry(gram).or_insert(0) += 1;
            }
        }
    }
    let log_corpus = (pairs.len() as Scalar).ln();
    let idf = |n: usize, gram: &[String]| -> Scalar {
        let seen_in = df[n - 1].get(gram).copied().unwrap_or(0).max(1);
        log_corpus - (seen_in as Scalar).ln()
    };
    let weighted = |tokens: &[String], n: usize| -> (HashMap<Vec<String>, Scalar>, Scalar) {
        let mut vec = HashMap::new();
        for (gram, count) in ngram_counts(tokens, n) {
            vec.insert(gram.to_vec(), count as Scalar * idf(n, gram));
        }
        let norm = vec.values().map(|w| w * w).sum::<Scalar>().sqrt();
        (vec, norm)
    };

    let mut details = std::collections::BTreeMap::new();
    let mut sum = 0.0;
    for (i, pair) in pairs.iter().enumerate() {
        let cand = &cand_tokens[i];
        let mut image_score = 0.0;
        for n in 1..=MAX_N {
            let (cand_vec, cand_norm) = weighted(cand, n);
            let mut over_refs = 0.0;
            for reference in &ref_tokens[i] {
                let (ref_vec, ref_norm) = weighted(reference, n);
                if cand_norm == 0.0 || ref_norm == 0.0 {
                    continue;
                }
                let mut dot = 0.0;
                for (gram, &cand_weight) in &cand_vec {
                    if let Some(&ref_weight) = ref_vec.get(gram) {
                        dot += cand_weight.min(ref_weight) * ref_weight;
                    }
                }
                let delta = cand.len() as Scalar - reference.len() as Scalar;
                let penalty = (-delta * delta / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
                over_refs += dot / (cand_norm * ref_norm) * penalty;
            }
            image_score += over_refs / ref_tokens[i].len() as Scalar;
        }
        let image_score = 10.0 * image_score / MAX_N as Scalar;
        sum += image_score;
        details.insert(pair.id.clone(), image_score);
    }
    let mut report = MetricReport::new("cider-d", sum / pairs.len() as Scalar);
    report.details = details;
    Ok(report)
}
