//! Paired bootstrap significance over per-sentence scores.
//!
//! One-sided test of "system B beats system A": resample sentence indices
//! with replacement, recompute the corpus statistic for both systems on the
//! same resample, and report the fraction of resamples where B does not
//! beat A. Ties count against significance, so comparing a system with
//! itself reports p = 1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bleu::{corpus_bleu_from_stats, BleuStats};
use super::{Result, TrainError};

/// Generic paired bootstrap: `statistic(indices)` returns the pair of
/// corpus-level values on a resample. p = fraction with B ≤ A.
pub fn bootstrap_by<F>(n: usize, resamples: usize, seed: u64, statistic: F) -> Result<f64>
where
    F: Fn(&[usize]) -> (f64, f64),
{
    if n < 2 {
        return Err(TrainError::Input(format!(
            "bootstrap needs at least 2 sentences, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut not_better = 0usize;
    let mut idx = vec![0usize; n];
    for _ in 0..resamples {
        for slot in idx.iter_mut() {
            *slot = rng.random_range(0..n);
        }
        let (a, b) = statistic(&idx);
        if b <= a {
            not_better += 1;
        }
    }
    Ok(not_better as f64 / resamples as f64)
}

/// Paired bootstrap over per-sentence score vectors, aggregated by mean.
pub fn bootstrap_test(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(TrainError::Input(format!(
            "score vectors differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    bootstrap_by(a.len(), resamples, seed, |idx| {
        let ma = idx.iter().map(|&i| a[i]).sum::<f64>() / idx.len() as f64;
        let mb = idx.iter().map(|&i| b[i]).sum::<f64>() / idx.len() as f64;
        (ma, mb)
    })
}

/// Paired bootstrap recomputing true corpus BLEU from per-sentence
/// sufficient statistics on every resample.
pub fn paired_bleu_bootstrap(
    stats_a: &[BleuStats],
    stats_b: &[BleuStats],
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    if stats_a.len() != stats_b.len() {
        return Err(TrainError::Input(format!(
            "stat vectors differ in length: {} vs {}",
            stats_a.len(),
            stats_b.len()
        )));
    }
    bootstrap_by(stats_a.len(), resamples, seed, |idx| {
        let pick = |src: &[BleuStats]| -> Vec<BleuStats> {
            idx.iter().map(|&i| src[i].clone()).collect()
        };
        (
            corpus_bleu_from_stats(&pick(stats_a)),
            corpus_bleu_from_stats(&pick(stats_b)),
        )
    })
}
