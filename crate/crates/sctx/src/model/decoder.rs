//! Decoder stack: teacher-forced forward passes and incremental decoding.
//!
//! Static-context variants run the whole target sequence at once under a
//! causal mask. The dynamic variant conditions each layer's context weights
//! on that layer's previous-step state, so its forward pass — also during
//! training — walks the target one position at a time over growing key/value
//! caches. Incremental inference reuses the same per-step core for every
//! variant.

use crate::context;
use crate::data::Batch;
use crate::tensor::{Ids, Mask, Scalar, Tensor};

use super::encoder::{embed_input, encode, positional_encoding};
use super::layers::{feed_forward, mha, mha_with_kv, post_norm, project_kv};
use super::{
    EncoderOutput, Mode, Model, ModelConfig, ModelError, ParamsView, Result, TraceOpt, Variant,
};

pub(crate) fn teacher_logits<S: Scalar>(
    cfg: &ModelConfig,
    pv: ParamsView<'_, S>,
    batch: &Batch,
    mode: Mode,
    mut trace: TraceOpt<'_, S>,
) -> Result<Tensor<S>> {
    let enc = encode(cfg, pv, &batch.src, &batch.src_mask, mode, &mut trace)?;
    let d0 = embed_input(cfg, pv, "tgt_embed", &batch.tgt_in, mode)?;
    let top = match cfg.variant {
        Variant::DeepTam => tam_teacher_states(cfg, pv, &enc, &d0, mode, &mut trace)?,
        _ => {
            let g = context::static_context(cfg, pv, &enc, mode, &mut trace)?;
            full_states(cfg, pv, &enc, &d0, g.as_ref(), mode, &mut trace)?
        }
    };
    output_logits(pv, &top)
}

/// Vocabulary logits from decoder states, through the shared target
/// embedding.
pub(crate) fn output_logits<S: Scalar>(
    pv: ParamsView<'_, S>,
    states: &Tensor<S>,
) -> Result<Tensor<S>> {
    Ok(states.matmul_t(&pv.get("tgt_embed"))?)
}

/// Whole-sequence decoder forward for vanilla and static-context variants.
fn full_states<S: Scalar>(
    cfg: &ModelConfig,
    pv: ParamsView<'_, S>,
    enc: &EncoderOutput<S>,
    d0: &Tensor<S>,
    g: Option<&Tensor<S>>,
    mode: Mode,
    trace: &mut TraceOpt<'_, S>,
) -> Result<Tensor<S>> {
    let t = d0.shape()[1];
    let causal = Mask::causal(t);
    let mut x = d0.clone();
    for i in 0..cfg.n_dec_layers {
        let fused = match g {
            Some(gv) => context::fuse(pv, i, &x, gv, mode)?,
            None => x.clone(),
        };
        let sa = mha(
            cfg,
            pv,
            &format!("dec.{i}.self"),
            &fused,
            &fused,
            Some(&causal),
            mode,
            trace,
        )?;
        let x1 = post_norm(pv, &format!("dec.{i}.self_ln"), &fused, &sa, mode)?;
        let ca = mha(
            cfg,
            pv,
            &format!("dec.{i}.cross"),
            &x1,
            enc.top(),
            Some(&enc.pad),
            mode,
            trace,
        )?;
        let x2 = post_norm(pv, &format!("dec.{i}.cross_ln"), &x1, &ca, mode)?;
        let ff = feed_forward(pv, &format!("dec.{i}.ffn"), &x2)?;
        x = post_norm(pv, &format!("dec.{i}.ffn_ln"), &x2, &ff, mode)?;
    }
    Ok(x)
}

/// Teacher-forced forward for the dynamic variant: one position at a time.
fn tam_teacher_states<S: Scalar>(
    cfg: &ModelConfig,
    pv: ParamsView<'_, S>,
    enc: &EncoderOutput<S>,
    d0: &Tensor<S>,
    mode: Mode,
    trace: &mut TraceOpt<'_, S>,
) -> Result<Tensor<S>> {
    let t = d0.shape()[1];
    let mut state = StepState::prepare(cfg, pv, enc, mode, trace)?;
    let mut top: Option<Tensor<S>> = None;
    for i in 0..t {
        let x_i = d0.slice_time(i, i + 1)?;
        let row = step_layers(cfg, pv, &mut state, &x_i, &enc.pad, mode, trace)?;
        top = Some(match top {
            Some(acc) => acc.concat_time(&row)?,
            None => row,
        });
    }
    Ok(top.expect("non-empty target"))
}

#[derive(Clone, Default)]
struct LayerCache<S: Scalar> {
    /// Projected keys/values of fused rows (static-context variants, where
    /// earlier rows never change).
    k: Option<Tensor<S>>,
    v: Option<Tensor<S>>,
    /// Raw input prefix (dynamic variant: the context changes every step,
    /// so the whole prefix is re-fused and re-projected per step).
    raw: Option<Tensor<S>>,
}

/// Mutable per-sequence decoding state shared by the dynamic teacher path
/// and incremental inference. Owned by a single decoding session.
pub(crate) struct StepState<S: Scalar> {
    caches: Vec<LayerCache<S>>,
    cross_k: Vec<Tensor<S>>,
    cross_v: Vec<Tensor<S>>,
    g_static: Option<Tensor<S>>,
    gstack: Option<Tensor<S>>,
    tam_prev: Vec<Tensor<S>>,
    last_betas: Vec<Tensor<S>>,
    step: usize,
}

impl<S: Scalar> Clone for StepState<S> {
    fn clone(&self) -> Self {
        StepState {
            caches: self.caches.clone(),
            cross_k: self.cross_k.clone(),
            cross_v: self.cross_v.clone(),
            g_static: self.g_static.clone(),
            gstack: self.gstack.clone(),
            tam_prev: self.tam_prev.clone(),
            last_betas: self.last_betas.clone(),
            step: self.step,
        }
    }
}

impl<S: Scalar> StepState<S> {
    pub(crate) fn prepare(
        cfg: &ModelConfig,
        pv: ParamsView<'_, S>,
        enc: &EncoderOutput<S>,
        mode: Mode,
        trace: &mut TraceOpt<'_, S>,
    ) -> Result<Self> {
        let b = enc.top().shape()[0];
        let mut cross_k = Vec::with_capacity(cfg.n_dec_layers);
        let mut cross_v = Vec::with_capacity(cfg.n_dec_layers);
        for i in 0..cfg.n_dec_layers {
            let (k, v) = project_kv(pv, &format!("dec.{i}.cross"), enc.top())?;
            cross_k.push(k);
            cross_v.push(v);
        }
        let (g_static, gstack, tam_prev) = match cfg.variant {
            Variant::DeepTam => {
                let summaries = context::summarize_layers(cfg, pv, enc, mode, trace)?;
                let gstack = context::stack_summaries(&summaries)?;
                let starts = (0..cfg.n_dec_layers)
                    .map(|i| {
                        pv.get(&format!("ctx.tam.{i}.start"))
                            .expand_time(b)
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                (None, Some(gstack), starts)
            }
            _ => (
                context::static_context(cfg, pv, enc, mode, trace)?,
                None,
                Vec::new(),
            ),
        };
        Ok(StepState {
            caches: vec![LayerCache::default(); cfg.n_dec_layers],
            cross_k,
            cross_v,
            g_static,
            gstack,
            tam_prev,
            last_betas: Vec::new(),
            step: 0,
        })
    }

    pub(crate) fn position(&self) -> usize {
        self.step
    }
}

/// Runs every decoder layer for one target position, updating the caches.
/// Returns the top-layer state row `[B, 1, d]`.
fn step_layers<S: Scalar>(
    cfg: &ModelConfig,
    pv: ParamsView<'_, S>,
    state: &mut StepState<S>,
    x_i: &Tensor<S>,
    src_pad: &Mask,
    mode: Mode,
    trace: &mut TraceOpt<'_, S>,
) -> Result<Tensor<S>> {
    let b = x_i.shape()[0];
    let d = cfg.d_model;
    let mut x = x_i.clone();
    let mut betas = Vec::new();
    for i in 0..cfg.n_dec_layers {
        let prefix = &format!("dec.{i}.self");
        let cache = &mut state.caches[i];
        // Fused query row plus this step's self-attention keys/values. The
        // whole cached prefix is valid context, so no mask is needed.
        let (fused, k_all, v_all) = match cfg.variant {
            Variant::DeepTam => {
                // Current-step context applies to the whole prefix: append
                // the raw row, re-fuse everything with g_{i,l}, re-project.
                let raw_all = match cache.raw.take() {
                    Some(prev) => prev.concat_time(&x)?,
                    None => x.clone(),
                };
                cache.raw = Some(raw_all.clone());
                let (g, beta) = context::tam_step(
                    pv,
                    i,
                    &state.tam_prev[i],
                    state.gstack.as_ref().expect("dynamic state"),
                    trace,
                )?;
                betas.push(beta);
                let fused_all = context::fuse(pv, i, &raw_all, &g, mode)?;
                let t_all = fused_all.shape()[1];
                let fused_row = fused_all.slice_time(t_all - 1, t_all)?;
                let (k, v) = project_kv(pv, prefix, &fused_all)?;
                (fused_row, k, v)
            }
            _ => {
                let fused = match &state.g_static {
                    Some(g) => context::fuse(pv, i, &x, g, mode)?,
                    None => x.clone(),
                };
                let (k_new, v_new) = project_kv(pv, prefix, &fused)?;
                let k = match cache.k.take() {
                    Some(k) => k.concat_time(&k_new)?,
                    None => k_new,
                };
                let v = match cache.v.take() {
                    Some(v) => v.concat_time(&v_new)?,
                    None => v_new,
                };
                cache.k = Some(k.clone());
                cache.v = Some(v.clone());
                (fused, k, v)
            }
        };
        let sa = mha_with_kv(
            cfg,
            pv,
            prefix,
            &fused,
            &k_all,
            &v_all,
            None,
            mode,
            trace,
        )?;
        let x1 = post_norm(pv, &format!("dec.{i}.self_ln"), &fused, &sa, mode)?;
        let ca = mha_with_kv(
            cfg,
            pv,
            &format!("dec.{i}.cross"),
            &x1,
            &state.cross_k[i],
            &state.cross_v[i],
            Some(src_pad),
            mode,
            trace,
        )?;
        let x2 = post_norm(pv, &format!("dec.{i}.cross_ln"), &x1, &ca, mode)?;
        let ff = feed_forward(pv, &format!("dec.{i}.ffn"), &x2)?;
        let out = post_norm(pv, &format!("dec.{i}.ffn_ln"), &x2, &ff, mode)?;
        if cfg.variant == Variant::DeepTam {
            state.tam_prev[i] = out.reshape(vec![b, d])?;
        }
        x = out;
    }
    if cfg.variant == Variant::DeepTam {
        state.last_betas = betas;
    }
    state.step += 1;
    Ok(x)
}

/// Incremental decoding over one source sentence (batch of one). Sessions
/// are cheap to clone, which is how beam search forks hypotheses; a session
/// must stay on one thread.
pub struct DecodeSession<'m, S: Scalar> {
    model: &'m Model<S>,
    src_mask: Mask,
    state: StepState<S>,
}

impl<'m, S: Scalar> Clone for DecodeSession<'m, S> {
    fn clone(&self) -> Self {
        DecodeSession {
            model: self.model,
            src_mask: self.src_mask.clone(),
            state: self.state.clone(),
        }
    }
}

impl<'m, S: Scalar> DecodeSession<'m, S> {
    pub(crate) fn start(model: &'m Model<S>, src_tokens: &[usize]) -> Result<Self> {
        let cfg = &model.config;
        let pv = ParamsView::Raw(&model.params);
        let n = src_tokens.len();
        let src = Ids::new(vec![1, n], src_tokens.to_vec())?;
        let src_mask = Mask::from_lens(&[n], n);
        let enc = encode(cfg, pv, &src, &src_mask, Mode::eval(), &mut None)?;
        let state = StepState::prepare(cfg, pv, &enc, Mode::eval(), &mut None)?;
        Ok(DecodeSession {
            model,
            src_mask,
            state,
        })
    }

    /// Feeds the previous target token and returns next-token logits `[V]`.
    pub fn step(&mut self, prev_token: usize) -> Result<Vec<f64>> {
        let cfg = &self.model.config;
        let pv = ParamsView::Raw(&self.model.params);
        let pos = self.state.position();
        if pos >= cfg.max_len {
            return Err(ModelError::Length {
                len: pos + 1,
                max: cfg.max_len,
            });
        }
        let ids = Ids::new(vec![1, 1], vec![prev_token])?;
        let scale = S::from_f64((cfg.d_model as f64).sqrt());
        let emb = pv.get("tgt_embed").embedding(&ids)?.scale(scale)?;
        let pe = positional_encoding::<S>(1, cfg.d_model, pos).reshape(vec![1, 1, cfg.d_model])?;
        let x = emb.add(&pe)?;
        let top = step_layers(
            cfg,
            pv,
            &mut self.state,
            &x,
            &self.src_mask,
            Mode::eval(),
            &mut None,
        )?;
        let logits = output_logits(pv, &top)?;
        Ok(logits.data().iter().map(|v| v.as_f64()).collect())
    }

    /// Number of target positions consumed so far.
    pub fn position(&self) -> usize {
        self.state.position()
    }

    /// Mixing weights β per decoder layer from the most recent step
    /// (dynamic variant only).
    pub fn last_betas(&self) -> Option<Vec<Vec<f64>>> {
        if self.state.last_betas.is_empty() {
            return None;
        }
        Some(
            self.state
                .last_betas
                .iter()
                .map(|b| b.data().iter().map(|v| v.as_f64()).collect())
                .collect(),
        )
    }
}
