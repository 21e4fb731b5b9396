//! Parameter registry construction and seeded initialization.
//!
//! Weights are fan-scaled uniform (Glorot), embeddings uniform at scale
//! `1/√d`, biases and attention start states zero, layer-norm gains one.
//! All draws are f64 from a ChaCha stream, so f32 and f64 instances of the
//! same seed hold the same values up to rounding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{ParamSet, Scalar, Tensor};

use super::{ModelConfig, Result, Variant};

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn uniform<S: Scalar>(&mut self, shape: Vec<usize>, limit: f64) -> Tensor<S> {
        let n: usize = shape.iter().product();
        let data: Vec<S> = (0..n)
            .map(|_| S::from_f64(self.rng.random_range(-limit..limit)))
            .collect();
        Tensor::new(shape, data).unwrap()
    }

    fn xavier<S: Scalar>(&mut self, rows: usize, cols: usize) -> Tensor<S> {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        self.uniform(vec![rows, cols], limit)
    }

    fn embedding<S: Scalar>(&mut self, vocab: usize, d: usize) -> Tensor<S> {
        self.uniform(vec![vocab, d], (3.0 / d as f64).sqrt())
    }
}

fn attention_block<S: Scalar>(
    p: &mut ParamSet<S>,
    init: &mut Init,
    prefix: &str,
    d: usize,
) -> Result<()> {
    for w in ["wq", "wk", "wv", "wo"] {
        p.insert(format!("{prefix}.{w}"), init.xavier(d, d))?;
    }
    for b in ["bq", "bk", "bv", "bo"] {
        p.insert(format!("{prefix}.{b}"), Tensor::zeros(vec![d]))?;
    }
    Ok(())
}

fn layer_norm_block<S: Scalar>(p: &mut ParamSet<S>, prefix: &str, d: usize) -> Result<()> {
    p.insert(format!("{prefix}.g"), Tensor::ones(vec![d]))?;
    p.insert(format!("{prefix}.b"), Tensor::zeros(vec![d]))?;
    Ok(())
}

fn ffn_block<S: Scalar>(
    p: &mut ParamSet<S>,
    init: &mut Init,
    prefix: &str,
    d_in: usize,
    d_hidden: usize,
    d_out: usize,
) -> Result<()> {
    p.insert(format!("{prefix}.w1"), init.xavier(d_in, d_hidden))?;
    p.insert(format!("{prefix}.b1"), Tensor::zeros(vec![d_hidden]))?;
    p.insert(format!("{prefix}.w2"), init.xavier(d_hidden, d_out))?;
    p.insert(format!("{prefix}.b2"), Tensor::zeros(vec![d_out]))?;
    Ok(())
}

pub(crate) fn init_params<S: Scalar>(cfg: &ModelConfig) -> Result<ParamSet<S>> {
    let d = cfg.d_model;
    let mut init = Init {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x1217_5EED),
    };
    let mut p = ParamSet::new();

    p.insert("src_embed", init.embedding(cfg.vocab_src, d))?;
    p.insert("tgt_embed", init.embedding(cfg.vocab_tgt, d))?;

    for i in 0..cfg.n_enc_layers {
        attention_block(&mut p, &mut init, &format!("enc.{i}.att"), d)?;
        layer_norm_block(&mut p, &format!("enc.{i}.att_ln"), d)?;
        ffn_block(&mut p, &mut init, &format!("enc.{i}.ffn"), d, cfg.d_ff_enc, d)?;
        layer_norm_block(&mut p, &format!("enc.{i}.ffn_ln"), d)?;
    }

    for i in 0..cfg.n_dec_layers {
        attention_block(&mut p, &mut init, &format!("dec.{i}.self"), d)?;
        layer_norm_block(&mut p, &format!("dec.{i}.self_ln"), d)?;
        attention_block(&mut p, &mut init, &format!("dec.{i}.cross"), d)?;
        layer_norm_block(&mut p, &format!("dec.{i}.cross_ln"), d)?;
        ffn_block(&mut p, &mut init, &format!("dec.{i}.ffn"), d, cfg.d_ff_dec, d)?;
        layer_norm_block(&mut p, &format!("dec.{i}.ffn_ln"), d)?;
    }

    if cfg.variant.uses_context() {
        for i in 0..cfg.n_dec_layers {
            ffn_block(
                &mut p,
                &mut init,
                &format!("ctx.fuse.{i}"),
                2 * d,
                cfg.fusion_width(),
                d,
            )?;
            layer_norm_block(&mut p, &format!("ctx.fuse.{i}.ln"), d)?;
        }
    }

    if cfg.variant == Variant::ShallowAtt {
        p.insert("ctx.att.wq", init.xavier(d, d))?;
        p.insert("ctx.att.bq", Tensor::zeros(vec![d]))?;
        p.insert("ctx.att.wk", init.xavier(d, d))?;
        p.insert("ctx.att.wv", init.xavier(d, d))?;
        p.insert("ctx.att.wo", init.xavier(d, d))?;
        p.insert("ctx.att.bo", Tensor::zeros(vec![d]))?;
    }

    if cfg.variant.is_deep() {
        if cfg.deep_global == super::GlobalKind::Att {
            // Shared query projection over the embedding layer, per-layer
            // key/value/output: layers live in different spaces.
            p.insert("ctx.sum.q.w", init.xavier(d, d))?;
            p.insert("ctx.sum.q.b", Tensor::zeros(vec![d]))?;
            for l in 1..=cfg.n_enc_layers {
                p.insert(format!("ctx.sum.{l}.wk"), init.xavier(d, d))?;
                p.insert(format!("ctx.sum.{l}.wv"), init.xavier(d, d))?;
                p.insert(format!("ctx.sum.{l}.wo"), init.xavier(d, d))?;
                p.insert(format!("ctx.sum.{l}.bo"), Tensor::zeros(vec![d]))?;
            }
        }
        match cfg.variant {
            Variant::DeepRnn => {
                for w in ["wz", "uz", "wr", "ur", "wh", "uh"] {
                    p.insert(format!("ctx.rnn.{w}"), init.xavier(d, d))?;
                }
                for b in ["bz", "br", "bh"] {
                    p.insert(format!("ctx.rnn.{b}"), Tensor::zeros(vec![d]))?;
                }
                p.insert("ctx.rnn.r0.w", init.xavier(d, d))?;
                p.insert("ctx.rnn.r0.b", Tensor::zeros(vec![d]))?;
            }
            Variant::DeepTam => {
                for i in 0..cfg.n_dec_layers {
                    p.insert(format!("ctx.tam.{i}.wq"), init.xavier(d, d))?;
                    p.insert(format!("ctx.tam.{i}.wk"), init.xavier(d, d))?;
                    p.insert(format!("ctx.tam.{i}.start"), Tensor::zeros(vec![d]))?;
                }
            }
            _ => unreachable!(),
        }
    }

    Ok(p)
}
