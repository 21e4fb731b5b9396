//! Synthetic parallel corpora and probing corpora.
//!
//! Three desk-scale translation stand-ins:
//!
//! * `copy` — target equals source,
//! * `reverse` — target is the reversed source,
//! * `lexicon-translate` — a token-wise bijective lexicon plus a local
//!   reordering: in each adjacent block pair, the two tokens swap exactly
//!   when one of them belongs to the designated class. The class test is
//!   symmetric in the pair, so the reordering inverts itself, and the swap
//!   decision depends on a neighbor, which makes sentence-level context
//!   informative for translation.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{derive_seed, DataError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Copy,
    Reverse,
    LexiconTranslate,
}

impl TaskKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(TaskKind::Copy),
            "reverse" => Ok(TaskKind::Reverse),
            "lexicon-translate" => Ok(TaskKind::LexiconTranslate),
            other => Err(DataError::Invalid(format!(
                "unknown task kind {other:?} (copy | reverse | lexicon-translate)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Copy => "copy",
            TaskKind::Reverse => "reverse",
            TaskKind::LexiconTranslate => "lexicon-translate",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Source token inventory size (excluding reserved ids).
    pub vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub pairs: Vec<(Vec<String>, Vec<String>)>,
}

impl ParallelCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn source_token_count(&self) -> usize {
        self.pairs.iter().map(|(s, _)| s.len()).sum()
    }

    /// Writes `<stem>.src` / `<stem>.tgt`: one sentence per line, tokens
    /// space-separated, parallel line counts.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let mut src = String::new();
        let mut tgt = String::new();
        for (s, t) in &self.pairs {
            src.push_str(&s.join(" "));
            src.push('\n');
            tgt.push_str(&t.join(" "));
            tgt.push('\n');
        }
        fs::write(dir.join(format!("{stem}.src")), src)?;
        fs::write(dir.join(format!("{stem}.tgt")), tgt)?;
        Ok(())
    }

    pub fn load(src_path: &Path, tgt_path: &Path) -> Result<Self> {
        let parse = |text: String| -> Vec<Vec<String>> {
            text.lines()
                .map(|l| l.split_whitespace().map(|t| t.to_string()).collect())
                .collect()
        };
        let src = parse(fs::read_to_string(src_path)?);
        let tgt = parse(fs::read_to_string(tgt_path)?);
        if src.len() != tgt.len() {
            return Err(DataError::ParallelLineMismatch {
                src: src.len(),
                tgt: tgt.len(),
            });
        }
        Ok(ParallelCorpus {
            pairs: src.into_iter().zip(tgt).collect(),
        })
    }
}

/// Source token `i` as a printable string.
pub fn src_token(i: usize) -> String {
    if i < 26 {
        char::from(b'a' + i as u8).to_string()
    } else {
        format!("w{i}")
    }
}

/// Target-side counterpart of source token `i`.
pub fn tgt_token(i: usize) -> String {
    if i < 26 {
        char::from(b'A' + i as u8).to_string()
    } else {
        format!("W{i}")
    }
}

/// The fixed bijective lexicon for `lexicon-translate`: source index →
/// target index. Depends only on the vocabulary size, so train and eval
/// corpora of the same spec share it.
pub fn lexicon_for(vocab: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..vocab).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0xC0FFEE, vocab as u64));
    perm.shuffle(&mut rng);
    perm
}

/// Class membership for the reordering rule: the lower half of the source
/// inventory.
pub fn in_swap_class(src_index: usize, vocab: usize) -> bool {
    src_index < vocab / 2
}

/// Generates a seeded parallel corpus for the task.
pub fn gen_task(spec: &TaskSpec, size: usize, seed: u64) -> ParallelCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x7A5C));
    let lexicon = lexicon_for(spec.vocab);
    let mut pairs = Vec::with_capacity(size);
    for _ in 0..size {
        let len = rng.random_range(spec.min_len..=spec.max_len);
        let src_ids: Vec<usize> = (0..len).map(|_| rng.random_range(0..spec.vocab)).collect();
        let src: Vec<String> = src_ids.iter().map(|&i| src_token(i)).collect();
        let tgt: Vec<String> = match spec.kind {
            TaskKind::Copy => src.clone(),
            TaskKind::Reverse => src.iter().rev().cloned().collect(),
            TaskKind::LexiconTranslate => {
                let mut mapped: Vec<usize> = src_ids.iter().map(|&i| lexicon[i]).collect();
                let mut j = 0;
                while j + 1 < src_ids.len() {
                    let swap = in_swap_class(src_ids[j], spec.vocab)
                        != in_swap_class(src_ids[j + 1], spec.vocab);
                    if swap {
                        mapped.swap(j, j + 1);
                    }
                    j += 2;
                }
                mapped.into_iter().map(tgt_token).collect()
            }
        };
        pairs.push((src, tgt));
    }
    ParallelCorpus { pairs }
}

// ── Probing corpora ────────────────────────────────────────────────────────

/// A labelled sentence set for representation probing. Labels are balanced
/// within 10% across classes by construction (round-robin class draw).
#[derive(Debug, Clone)]
pub struct ProbeCorpus {
    pub name: String,
    pub sentences: Vec<Vec<String>>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

/// Sentence-length buckets (surface property).
pub fn gen_probe_selen(vocab: usize, size: usize, seed: u64) -> ProbeCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5E1E));
    let buckets = [(2usize, 4usize), (6, 8), (10, 12)];
    let mut sentences = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for i in 0..size {
        let class = i % buckets.len();
        let (lo, hi) = buckets[class];
        let len = rng.random_range(lo..=hi);
        sentences.push((0..len).map(|_| src_token(rng.random_range(0..vocab))).collect());
        labels.push(class);
    }
    ProbeCorpus {
        name: "selen".to_string(),
        sentences,
        labels,
        classes: buckets.len(),
    }
}

/// Which of three marker tokens the sentence contains (surface property).
/// Markers are the first three inventory tokens; filler tokens are drawn
/// from the rest.
pub fn gen_probe_wc(vocab: usize, size: usize, seed: u64) -> ProbeCorpus {
    assert!(vocab > 6, "wc probe needs > 6 tokens");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x3C17));
    let mut sentences = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for i in 0..size {
        let class = i % 3;
        let len = rng.random_range(5..=10);
        let mut s: Vec<String> = (0..len)
            .map(|_| src_token(rng.random_range(3..vocab)))
            .collect();
        let pos = rng.random_range(0..s.len());
        s[pos] = src_token(class);
        sentences.push(s);
        labels.push(class);
    }
    ProbeCorpus {
        name: "wc".to_string(),
        sentences,
        labels,
        classes: 3,
    }
}

/// Whether an adjacent pair of a monotone sentence was swapped (syntactic
/// property: detecting a broken local order).
pub fn gen_probe_bshif(vocab: usize, size: usize, seed: u64) -> ProbeCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xB5F1));
    let mut sentences = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for i in 0..size {
        let len = rng.random_range(4..=10);
        // Non-decreasing id sequence with at least one strict rise, so the
        // positive class always has a pair to break.
        let mut ids: Vec<usize> = loop {
            let mut draw: Vec<usize> = (0..len).map(|_| rng.random_range(0..vocab)).collect();
            draw.sort_unstable();
            if draw.windows(2).any(|w| w[0] < w[1]) {
                break draw;
            }
        };
        let label = i % 2;
        if label == 1 {
            let rising: Vec<usize> = (0..len - 1).filter(|&j| ids[j] < ids[j + 1]).collect();
            let j = rising[rng.random_range(0..rising.len())];
            ids.swap(j, j + 1);
        }
        sentences.push(ids.into_iter().map(src_token).collect());
        labels.push(label);
    }
    ProbeCorpus {
        name: "bshif".to_string(),
        sentences,
        labels,
        classes: 2,
    }
}
