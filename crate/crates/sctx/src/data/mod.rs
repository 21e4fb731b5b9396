//! Vocabulary, tokenization, synthetic parallel tasks, and batching.

mod batch;
mod bpe;
mod tasks;
mod vocab;

pub use batch::{make_batches, Batch, BatchStream};
pub use bpe::{bpe_train, BpeModel, Tokenizer, WORD_END};
pub use tasks::{
    gen_probe_bshif, gen_probe_selen, gen_probe_wc, gen_task, in_swap_class, lexicon_for,
    src_token, tgt_token, ParallelCorpus, ProbeCorpus, TaskKind, TaskSpec,
};
pub use vocab::{Vocab, BOS, EOS, PAD, UNK};

/// Errors from corpus generation, tokenization, vocab and file handling.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parallel files differ in line count: {src} vs {tgt}")]
    ParallelLineMismatch { src: usize, tgt: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// One stream per purpose, decorrelated from the base seed. Keeping every
/// consumer on its own derived seed is what makes runs resumable: nothing
/// depends on how much randomness someone else consumed.
pub(crate) fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 over the combined value
    let mut z = base ^ stream.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}
