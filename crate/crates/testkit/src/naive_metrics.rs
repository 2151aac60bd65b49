//! Slow, obviously-correct reimplementations of the overlap metrics.
//!
//! Written from the metric definitions with none of the production code's
//! machinery: a bare split-on-non-alphanumeric tokenizer, string-joined
//! n-gram keys, a full two-dimensional LCS table. Corpora compared against
//! these must stick to plain words and terminal punctuation, where the two
//! tokenizers provably agree; the point is an independent computation path,
//! not a second tokenizer spec.

use pictext::bench::EvalPair;
use std::collections::{HashMap, HashSet};

fn toks(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// N-gram counts keyed by the tokens joined with an unprintable separator.
fn grams(tokens: &[String], n: usize) -> HashMap<String, u64> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for i in 0..=tokens.len() - n {
            *out.entry(tokens[i..i + n].join("\u{1}")).or_insert(0) += 1;
        }
    }
    out
}

fn closest_ref_len(cand_len: usize, refs: &[Vec<String>]) -> usize {
    let mut lens: Vec<usize> = refs.iter().map(Vec::len).collect();
    lens.sort_by_key(|&len| (len.abs_diff(cand_len), len));
    lens[0]
}

/// Corpus BLEU-1..max_n values.
pub fn naive_bleu(pairs: &[EvalPair], max_n: usize) -> Vec<f64> {
    assert!((1..=4).contains(&max_n));
    let mut matches = vec![0u64; max_n];
    let mut totals = vec![0u64; max_n];
    let mut cand_len = 0u64;
    let mut ref_len = 0u64;
    for pair in pairs {
        let cand = toks(&pair.candidate);
        let refs: Vec<Vec<String>> = pair.references.iter().map(|r| toks(r)).collect();
        assert!(refs.iter().any(|r| !r.is_empty()), "pair {} has empty references", pair.id);
        for (n, (matched, total)) in matches.iter_mut().zip(&mut totals).enumerate() {
            let cand_grams = grams(&cand, n + 1);
            let ref_grams: Vec<HashMap<String, u64>> =
                refs.iter().map(|r| grams(r, n + 1)).collect();
            for (gram, &count) in &cand_grams {
                let cap =
                    ref_grams.iter().map(|g| g.get(gram).copied().unwrap_or(0)).max().unwrap();
                *matched += count.min(cap);
                *total += count;
            }
        }
        cand_len += cand.len() as u64;
        ref_len += closest_ref_len(cand.len(), &refs) as u64;
    }
    assert!(cand_len > 0, "corpus candidates have no tokens");
    let bp = if cand_len < ref_len {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    } else {
        1.0
    };
    (1..=max_n)
        .map(|n| {
            let log_sum: f64 = (0..n)
                .map(|k| {
                    if matches[k] == 0 || totals[k] == 0 {
                        1e-9f64.ln()
                    } else {
                        (matches[k] as f64 / totals[k] as f64).ln()
                    }
                })
                .sum();
            bp * (log_sum / n as f64).exp()
        })
        .collect()
}

fn lcs_table(a: &[String], b: &[String]) -> usize {
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            table[i][j] = if a[i - 1] == b[j - 1] {
                table[i - 1][j - 1] + 1
            } else {
                table[i - 1][j].max(table[i][j - 1])
            };
        }
    }
    table[a.len()][b.len()]
}

/// Corpus ROUGE-L: best F over references per pair, averaged.
pub fn naive_rouge_l(pairs: &[EvalPair]) -> f64 {
    assert!(!pairs.is_empty());
    let beta2 = 1.2f64 * 1.2;
    let mut sum = 0.0;
    for pair in pairs {
        let cand = toks(&pair.candidate);
        let mut best = 0.0f64;
        for reference in &pair.references {
            let reference = toks(reference);
            if cand.is_empty() || reference.is_empty() {
                continue;
            }
            let lcs = lcs_table(&cand, &reference) as f64;
            let recall = lcs / reference.len() as f64;
            let precision = lcs / cand.len() as f64;
            let denom = recall + beta2 * precision;
            if denom > 0.0 {
                best = best.max((1.0 + beta2) * recall * precision / denom);
            }
        }
        sum += best;
    }
    sum / pairs.len() as f64
}

/// Corpus CIDEr-D.
pub fn naive_cider(pairs: &[EvalPair]) -> f64 {
    assert!(!pairs.is_empty());
    let sigma = 6.0f64;
    let mut df: Vec<HashMap<String, u64>> = (0..4).map(|_| HashMap::new()).collect();
    for pair in pairs {
        for (n, table) in df.iter_mut().enumerate() {
            let mut seen: HashSet<String> = HashSet::new();
            for reference in &pair.references {
                seen.extend(grams(&toks(reference), n + 1).into_keys());
            }
            for gram in seen {
                *table.entry(gram).or_insert(0) += 1;
            }
        }
    }
    let log_n = (pairs.len() as f64).ln();
    let weighted = |tokens: &[String], n: usize| -> (HashMap<String, f64>, f64) {
        let mut vec = HashMap::new();
        for (gram, count) in grams(tokens, n) {
            let seen_in = df[n - 1].get(&gram).copied().unwrap_or(0).max(1);
            vec.insert(gram, count as f64 * (log_n - (seen_in as f64).ln()));
        }
        let norm = vec.values().map(|w| w * w).sum::<f64>().sqrt();
        (vec, norm)
    };
    let mut sum = 0.0;
    for pair in pairs {
        assert!(!pair.references.is_empty(), "pair {} has no references", pair.id);
        let cand = toks(&pair.candidate);
        let mut image_score = 0.0;
        for n in 1..=4 {
            let (cand_vec, cand_norm) = weighted(&cand, n);
            let mut over_refs = 0.0;
            for reference in &pair.references {
                let reference = toks(reference);
                let (ref_vec, ref_norm) = weighted(&reference, n);
                if cand_norm == 0.0 || ref_norm == 0.0 {
                    continue;
                }
                let mut clipped_dot = 0.0;
                for (gram, &cw) in &cand_vec {
                    if let Some(&rw) = ref_vec.get(gram) {
                        clipped_dot += cw.min(rw) * rw;
                    }
                }
                let delta = cand.len() as f64 - reference.len() as f64;
                over_refs += clipped_dot / (cand_norm * ref_norm)
                    * (-delta * delta / (2.0 * sigma * sigma)).exp();
            }
            image_score += over_refs / pair.references.len() as f64;
        }
        sum += 10.0 * image_score / 4.0;
    }
    sum / pairs.len() as f64
}
