//! 4-gram BLEU: clipped modified precision, geometric mean, brevity penalty.

use std::collections::HashMap;
use std::hash::Hash;

use super::{Result, TrainError};

pub const MAX_N: usize = 4;

/// Per-sentence sufficient statistics, enough to recompute corpus BLEU over
/// any resample of sentences.
#[derive(Debug, Clone, Default)]
pub struct BleuStats {
    pub matches: [usize; MAX_N],
    pub totals: [usize; MAX_N],
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts<T: Eq + Hash + Clone>(tokens: &[T], n: usize) -> HashMap<Vec<T>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram match statistics of one hypothesis against one reference.
pub fn sentence_stats<T: Eq + Hash + Clone>(hyp: &[T], reference: &[T]) -> BleuStats {
    let mut stats = BleuStats {
        hyp_len: hyp.len(),
        ref_len: reference.len(),
        ..Default::default()
    };
    for n in 1..=MAX_N {
        let refc = ngram_counts(reference, n);
        let hypc = ngram_counts(hyp, n);
        let mut matches = 0usize;
        let mut total = 0usize;
        for (gram, c) in &hypc {
            total += c;
            if let Some(&rc) = refc.get(gram) {
                matches += (*c).min(rc);
            }
        }
        stats.matches[n - 1] = matches;
        stats.totals[n - 1] = total;
    }
    stats
}

fn brevity_penalty(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len == 0 {
        return 0.0;
    }
    if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    }
}

/// Corpus BLEU in [0, 100] from aggregated sentence statistics. Unsmoothed:
/// a zero precision at any order gives zero.
pub fn corpus_bleu_from_stats(stats: &[BleuStats]) -> f64 {
    let mut matches = [0usize; MAX_N];
    let mut totals = [0usize; MAX_N];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for s in stats {
        for n in 0..MAX_N {
            matches[n] += s.matches[n];
            totals[n] += s.totals[n];
        }
        hyp_len += s.hyp_len;
        ref_len += s.ref_len;
    }
    let mut log_sum = 0.0;
    for n in 0..MAX_N {
        if totals[n] == 0 || matches[n] == 0 {
            return 0.0;
        }
        log_sum += (matches[n] as f64 / totals[n] as f64).ln();
    }
    100.0 * brevity_penalty(hyp_len, ref_len) * (log_sum / MAX_N as f64).exp()
}

/// Per-sentence BLEU with add-one smoothing on the n≥2 precisions (zero
/// high-order matches are routine on short sentences). Empty hypothesis is 0.
pub fn sentence_bleu(stats: &BleuStats) -> f64 {
    if stats.hyp_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 0..MAX_N {
        let (m, t) = if n == 0 {
            (stats.matches[0] as f64, stats.totals[0] as f64)
        } else {
            (stats.matches[n] as f64 + 1.0, stats.totals[n] as f64 + 1.0)
        };
        if m == 0.0 || t == 0.0 {
            return 0.0;
        }
        log_sum += (m / t).ln();
    }
    100.0 * brevity_penalty(stats.hyp_len, stats.ref_len) * (log_sum / MAX_N as f64).exp()
}

/// Corpus BLEU plus the per-sentence list. Counts must match.
pub fn bleu<T: Eq + Hash + Clone>(
    hyps: &[Vec<T>],
    refs: &[Vec<T>],
) -> Result<(f64, Vec<f64>)> {
    if hyps.len() != refs.len() {
        return Err(TrainError::Input(format!(
            "hypothesis/reference count mismatch: {} vs {}",
            hyps.len(),
            refs.len()
        )));
    }
    let stats: Vec<BleuStats> = hyps
        .iter()
        .zip(refs)
        .map(|(h, r)| sentence_stats(h, r))
        .collect();
    let corpus = corpus_bleu_from_stats(&stats);
    let per_sentence = stats.iter().map(sentence_bleu).collect();
    Ok((corpus, per_sentence))
}
