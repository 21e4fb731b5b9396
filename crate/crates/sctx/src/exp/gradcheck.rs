//! Whole-model gradient verification.
//!
//! Central differences are only valid where the loss is differentiable
//! along the probe interval. Relu and max-pool make the loss piecewise:
//! when some pre-activation lies within the probe step of a kink, the
//! two-sided difference straddles it and reports garbage for the handful of
//! parameters feeding that unit — with no gradient bug anywhere. The
//! forward pass therefore tracks its kink margin (smallest |pre-activation|
//! and smallest max-pool gap), and [`find_certified_seed`] scans seeds with
//! forward-only passes until the margin clears a guard band wide enough
//! that no ±h probe can cross a kink. Checks run on certified seeds verify
//! every parameter on a valid test point.

use crate::data::{gen_task, make_batches, Batch, TaskKind, TaskSpec, Vocab};
use crate::model::{Mode, Model, ModelConfig, ModelError, Variant};
use crate::tensor::{grad_check, GradCheckReport, Tape, TensorError};

use super::{ExpError, Result};

/// Margin required before a seed counts as kink-clean: generous against
/// `h` times any plausible pre-activation sensitivity at this scale.
pub const KINK_GUARD: f64 = 0.05;

fn build(variant: Variant, seed: u64) -> Result<(Model<f64>, Batch)> {
    let spec = TaskSpec {
        kind: TaskKind::Copy,
        vocab: 8,
        min_len: 2,
        max_len: 3,
    };
    let corpus = gen_task(&spec, 1, seed.wrapping_mul(31).wrapping_add(5));
    let sv = Vocab::from_sentences(corpus.pairs.iter().map(|(s, _)| s))?;
    let tv = Vocab::from_sentences(corpus.pairs.iter().map(|(_, t)| t))?;
    let (mut batches, _) = make_batches(&corpus, &sv, &tv, 1, 16, seed)?;
    let batch = batches.remove(0);
    let mut cfg = ModelConfig::grad_check_toy(sv.len(), tv.len()).with_variant(variant);
    cfg.seed = seed;
    Ok((Model::new(cfg)?, batch))
}

fn loss_of(
    model: &Model<f64>,
    batch: &Batch,
    watched: &crate::tensor::WatchedParams<f64>,
) -> std::result::Result<crate::tensor::Tensor<f64>, TensorError> {
    model
        .loss_from(watched, batch, 0.1, Mode::eval(), None)
        .map_err(|e| match e {
            ModelError::Tensor(t) => t,
            other => TensorError::Format(other.to_string()),
        })
}

/// Kink margin of one forward pass (cheap: no differences taken).
pub fn forward_kink_margin(variant: Variant, seed: u64) -> Result<f64> {
    let (model, batch) = build(variant, seed)?;
    let tape: Tape<f64> = Tape::new();
    let watched = model.watch(&tape);
    loss_of(&model, &batch, &watched)?;
    Ok(tape.kink_margin())
}

/// First seed at or after `start` whose forward pass keeps every kinked op
/// at least [`KINK_GUARD`] away from its kink.
pub fn find_certified_seed(variant: Variant, start: u64, tries: u64) -> Result<u64> {
    for seed in start..start + tries {
        if forward_kink_margin(variant, seed)? > KINK_GUARD {
            return Ok(seed);
        }
    }
    Err(ExpError::Runtime(format!(
        "no kink-certified seed for {} in [{start}, {})",
        variant.name(),
        start + tries
    )))
}

/// Checks every parameter gradient of the full training loss for one
/// variant on the tiny d=16, 2-head configuration, in 64-bit precision.
pub fn grad_check_variant(
    variant: Variant,
    seed: u64,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let (model, batch) = build(variant, seed)?;
    let report = grad_check(&model.params, h, tol, |watched, _| {
        loss_of(&model, &batch, watched)
    })?;
    Ok(report)
}
