//! Byte-pair encoding over word types.
//!
//! Training greedily merges the highest-frequency adjacent symbol pair,
//! breaking ties toward the lexicographically smallest pair so the merge
//! list is deterministic. Words carry a terminal marker symbol, which makes
//! word reconstruction from a subword stream unambiguous.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{DataError, Result};

/// End-of-word marker symbol.
pub const WORD_END: &str = "</w>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
}

impl BpeModel {
    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// Segments one word: characters plus the end marker, then every merge
    /// applied in learned order.
    pub fn apply(&self, word: &str) -> Vec<String> {
        let mut symbols = split_word(word);
        for (a, b) in &self.merges {
            merge_in_place(&mut symbols, a, b);
        }
        symbols
    }

    /// Inverse of [`BpeModel::apply`]: concatenates subwords and strips the
    /// end marker.
    pub fn detok(pieces: &[String]) -> String {
        let joined: String = pieces.concat();
        joined
            .strip_suffix(WORD_END)
            .unwrap_or(&joined)
            .to_string()
    }

    /// One merge pair per line, space-separated.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (a, b) in &self.merges {
            out.push_str(a);
            out.push(' ');
            out.push_str(b);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut merges = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let mut it = line.splitn(2, ' ');
            match (it.next(), it.next()) {
                (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => {
                    merges.push((a.to_string(), b.to_string()));
                }
                _ => {
                    return Err(DataError::Invalid(format!(
                        "{}:{}: expected `left right`",
                        path.display(),
                        ln + 1
                    )))
                }
            }
        }
        Ok(BpeModel { merges })
    }
}

fn split_word(word: &str) -> Vec<String> {
    let mut symbols: Vec<String> = word.chars().map(|c| c.to_string()).collect();
    symbols.push(WORD_END.to_string());
    symbols
}

fn merge_in_place(symbols: &mut Vec<String>, a: &str, b: &str) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == a && symbols[i + 1] == b {
            let merged = format!("{}{}", symbols[i], symbols[i + 1]);
            symbols[i] = merged;
            symbols.remove(i + 1);
        } else {
            i += 1;
        }
    }
}

/// Learns `merges` merge operations from token sequences. Tokens are
/// treated as word types weighted by corpus frequency.
pub fn bpe_train(corpus: &[Vec<String>], merges: usize) -> Result<BpeModel> {
    if corpus.is_empty() || corpus.iter().all(|s| s.is_empty()) {
        return Err(DataError::EmptyCorpus);
    }
    let mut word_freq: HashMap<&str, usize> = HashMap::new();
    for sentence in corpus {
        for word in sentence {
            *word_freq.entry(word.as_str()).or_insert(0) += 1;
        }
    }
    // Deterministic processing order.
    let mut types: Vec<(Vec<String>, usize)> = {
        let mut v: Vec<(&str, usize)> = word_freq.into_iter().collect();
        v.sort();
        v.into_iter().map(|(w, f)| (split_word(w), f)).collect()
    };

    let mut learned = Vec::with_capacity(merges);
    for _ in 0..merges {
        let mut pair_counts: HashMap<(&str, &str), usize> = HashMap::new();
        for (symbols, freq) in &types {
            for pair in symbols.windows(2) {
                *pair_counts
                    .entry((pair[0].as_str(), pair[1].as_str()))
                    .or_insert(0) += freq;
            }
        }
        // Highest count, ties to the lexicographically smallest pair.
        let best = pair_counts
            .into_iter()
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)));
        let Some(((a, b), _count)) = best else {
            break;
        };
        let (a, b) = (a.to_string(), b.to_string());
        for (symbols, _) in &mut types {
            merge_in_place(symbols, &a, &b);
        }
        learned.push((a, b));
    }
    Ok(BpeModel { merges: learned })
}

/// Word-level tokenizer: character split by default, BPE when a model is
/// attached.
#[derive(Debug, Clone)]
pub enum Tokenizer {
    Char,
    Bpe(BpeModel),
}

impl Tokenizer {
    pub fn split_word(&self, word: &str) -> Vec<String> {
        match self {
            Tokenizer::Char => word.chars().map(|c| c.to_string()).collect(),
            Tokenizer::Bpe(m) => m.apply(word),
        }
    }

    pub fn join_word(&self, pieces: &[String]) -> String {
        match self {
            Tokenizer::Char => pieces.concat(),
            Tokenizer::Bpe(_) => BpeModel::detok(pieces),
        }
    }
}
