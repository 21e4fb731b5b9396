//! Greedy and beam decoding over any incremental next-token scorer.

use crate::data::{BOS, EOS};
use crate::model::Model;
use crate::tensor::Scalar;

use super::{Result, TrainError};

/// An incremental next-token model: feed the previous token, get logits.
pub trait Scorer {
    type State: Clone;
    fn vocab(&self) -> usize;
    fn start(&self) -> Result<Self::State>;
    fn step(&self, state: &mut Self::State, prev_token: usize) -> Result<Vec<f64>>;
}

/// Transformer-backed scorer over one source sentence.
pub struct ModelScorer<'m, S: Scalar> {
    model: &'m Model<S>,
    src: Vec<usize>,
}

impl<'m, S: Scalar> ModelScorer<'m, S> {
    pub fn new(model: &'m Model<S>, src: &[usize]) -> Self {
        ModelScorer {
            model,
            src: src.to_vec(),
        }
    }
}

impl<'m, S: Scalar> Scorer for ModelScorer<'m, S> {
    type State = crate::model::DecodeSession<'m, S>;

    fn vocab(&self) -> usize {
        self.model.config.vocab_tgt
    }

    fn start(&self) -> Result<Self::State> {
        Ok(self.model.start_decode(&self.src)?)
    }

    fn step(&self, state: &mut Self::State, prev_token: usize) -> Result<Vec<f64>> {
        Ok(state.step(prev_token)?)
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + logits.iter().map(|&x| (x - mx).exp()).sum::<f64>().ln();
    logits.iter().map(|&x| x - lse).collect()
}

/// Deterministic argmax: ties break toward the lowest token id.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Greedy decoding: argmax token per step until eos or `max_len`. Returns
/// generated tokens without framing.
pub fn greedy<Sc: Scorer>(scorer: &Sc, max_len: usize) -> Result<Vec<usize>> {
    let mut state = scorer.start()?;
    let mut prev = BOS;
    let mut out = Vec::new();
    for _ in 0..max_len {
        let logits = scorer.step(&mut state, prev)?;
        let tok = argmax(&logits);
        if tok == EOS {
            break;
        }
        out.push(tok);
        prev = tok;
    }
    Ok(out)
}

#[derive(Clone)]
struct Hypothesis<St> {
    state: St,
    tokens: Vec<usize>,
    log_prob: f64,
}

fn normalized(log_prob: f64, generated: usize, alpha: f64) -> f64 {
    // Length includes the terminating eos.
    log_prob / ((generated + 1) as f64).powf(alpha)
}

/// Beam search with length-normalized scores `sum / len^alpha`. Beam size 1
/// reproduces greedy token-for-token.
pub fn beam<Sc: Scorer>(
    scorer: &Sc,
    beam_size: usize,
    alpha: f64,
    max_len: usize,
) -> Result<Vec<usize>> {
    if beam_size == 0 {
        return Err(TrainError::Input("beam size must be positive".into()));
    }
    let mut live = vec![Hypothesis {
        state: scorer.start()?,
        tokens: Vec::new(),
        log_prob: 0.0,
    }];
    let mut finished: Vec<(Vec<usize>, f64)> = Vec::new();
    for _ in 0..max_len {
        // (parent index, token, cumulative log-prob)
        let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
        for (hi, hyp) in live.iter_mut().enumerate() {
            let prev = *hyp.tokens.last().unwrap_or(&BOS);
            let lp = log_softmax(&scorer.step(&mut hyp.state, prev)?);
            let mut order: Vec<usize> = (0..lp.len()).collect();
            order.sort_by(|&a, &b| lp[b].partial_cmp(&lp[a]).unwrap().then(a.cmp(&b)));
            for &tok in order.iter().take(beam_size) {
                // Zero-probability continuations never extend a hypothesis.
                if lp[tok].is_finite() {
                    candidates.push((hi, tok, hyp.log_prob + lp[tok]));
                }
            }
        }
        candidates.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .unwrap()
                .then(a.0.cmp(&b.0))
                .then(a.1.cmp(&b.1))
        });
        let mut next = Vec::with_capacity(beam_size);
        for (hi, tok, lp) in candidates {
            if next.len() == beam_size {
                break;
            }
            if tok == EOS {
                finished.push((
                    live[hi].tokens.clone(),
                    normalized(lp, live[hi].tokens.len(), alpha),
                ));
            } else {
                let mut tokens = live[hi].tokens.clone();
                tokens.push(tok);
                next.push(Hypothesis {
                    state: live[hi].state.clone(),
                    tokens,
                    log_prob: lp,
                });
            }
        }
        live = next;
        if live.is_empty() || finished.len() >= beam_size {
            break;
        }
    }
    for hyp in live {
        finished.push((
            hyp.tokens.clone(),
            normalized(hyp.log_prob, hyp.tokens.len(), alpha),
        ));
    }
    finished
        .into_iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(tokens, _)| tokens)
        .ok_or_else(|| TrainError::Input("no hypothesis produced".into()))
}
