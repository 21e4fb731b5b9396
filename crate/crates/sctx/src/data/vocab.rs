//! Token/id vocabulary with reserved ids.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{DataError, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Bijective token↔id map. Ids 0..=3 are pad/bos/eos/unk and survive
/// save/load at the same positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from the given tokens, reserved ids prepended.
    /// Duplicates and clashes with reserved names are rejected.
    pub fn new<I: IntoIterator<Item = String>>(tokens: I) -> Result<Self> {
        let mut v = Vocab {
            tokens: RESERVED.iter().map(|s| s.to_string()).collect(),
            index: RESERVED
                .iter()
                .enumerate()
                .map(|(i, s)| (s.to_string(), i))
                .collect(),
        };
        for t in tokens {
            if v.index.contains_key(&t) {
                return Err(DataError::Invalid(format!("duplicate token {t:?}")));
            }
            v.index.insert(t.clone(), v.tokens.len());
            v.tokens.push(t);
        }
        Ok(v)
    }

    /// Vocabulary of all distinct tokens in the sentences, sorted so the
    /// id assignment is deterministic.
    pub fn from_sentences<'a, I: IntoIterator<Item = &'a Vec<String>>>(
        sentences: I,
    ) -> Result<Self> {
        let mut seen: Vec<String> = sentences
            .into_iter()
            .flatten()
            .filter(|t| !RESERVED.contains(&t.as_str()))
            .cloned()
            .collect();
        seen.sort();
        seen.dedup();
        Vocab::new(seen)
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    /// One token per line; the line number is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.tokens.join("\n") + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < RESERVED.len()
            || lines[..RESERVED.len()] != RESERVED[..]
        {
            return Err(DataError::Invalid(format!(
                "vocab file {} lacks the reserved id header",
                path.display()
            )));
        }
        Vocab::new(lines[RESERVED.len()..].iter().map(|s| s.to_string()))
    }
}
