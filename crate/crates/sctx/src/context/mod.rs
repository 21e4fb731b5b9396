//! Sentence-level context: pooled and layer-aggregated source summaries
//! fused into every decoder layer.
//!
//! Shallow providers summarize the top encoder layer `H^L` into one vector
//! `g` per sentence — mean pooling, max pooling, or attentive pooling whose
//! query is a projection of the max-pooled embedding layer `H^0`. Deep
//! providers first summarize every layer `H^1..H^L` into `g^1..g^L` and then
//! aggregate: a gated recurrent pass (static `g`), or a decoder-conditioned
//! mixture recomputed at every decoding step and decoder layer (dynamic
//! `g_{i,l}` with inspectable weights β).
//!
//! Fusion applies, per decoder layer `l` with its own parameters, at the
//! layer's input: `LayerNorm(D + W2·relu(W1·[D; g] + b1) + b2)`. With W2 and
//! b2 zero this is `LayerNorm(D)`, so the fused stack starts near the plain
//! one.

use crate::model::{
    EncoderOutput, GlobalKind, Mode, ModelConfig, ParamsView, Result, TraceOpt, Variant,
};
use crate::tensor::{Mask, Scalar, Tensor};

const LN_EPS: f64 = 1e-6;

/// Mean pooling of hidden states over unmasked positions.
pub fn global_mean<S: Scalar>(h: &Tensor<S>, mask: &Mask) -> Result<Tensor<S>> {
    Ok(h.mean_pool(mask)?)
}

/// Elementwise max pooling over unmasked positions.
pub fn global_max<S: Scalar>(h: &Tensor<S>, mask: &Mask) -> Result<Tensor<S>> {
    Ok(h.max_pool(mask)?)
}

/// Projects the max-pooled embedding layer into an attention query.
fn pooled_query<S: Scalar>(
    pv: ParamsView<'_, S>,
    h0: &Tensor<S>,
    mask: &Mask,
    w: &str,
    b: &str,
) -> Result<Tensor<S>> {
    let g0 = h0.max_pool(mask)?;
    Ok(g0.matmul(&pv.get(w))?.add_bias(&pv.get(b))?)
}

/// Single-head scaled dot-product pooling of `h` by query `q`, with value
/// and output projections. Returns the pooled vector `[B, d]`.
#[allow(clippy::too_many_arguments)]
fn attend_pool<S: Scalar>(
    pv: ParamsView<'_, S>,
    q: &Tensor<S>,
    h: &Tensor<S>,
    mask: &Mask,
    wk: &str,
    wv: &str,
    wo: &str,
    bo: &str,
    mode: Mode,
    trace: &mut TraceOpt<'_, S>,
    label: &str,
) -> Result<Tensor<S>> {
    let (b, _, d) = (h.shape()[0], h.shape()[1], h.shape()[2]);
    let keys = h.matmul(&pv.get(wk))?;
    let values = h.matmul(&pv.get(wv))?;
    let q3 = q.reshape(vec![b, 1, d])?;
    let scale = S::from_f64(1.0 / (d as f64).sqrt());
    let scores = q3.matmul_t(&keys)?.scale(scale)?; // [B,1,T]
    let alpha = scores.softmax(Some(mask))?;
    if let Some(t) = trace.as_mut() {
        t.push(label.to_string(), alpha.clone());
    }
    let mixed = alpha.dropout(mode.dropout)?.matmul(&values)?.reshape(vec![b, d])?;
    Ok(mixed.matmul(&pv.get(wo))?.add_bias(&pv.get(bo))?)
}

/// Attentive pooling of the top encoder layer (the shallow-att provider).
pub fn global_att<S: Scalar>(
    pv: ParamsView<'_, S>,
    enc: &EncoderOutput<S>,
    mode: Mode,
    trace: &mut TraceOpt<'_, S>,
) -> Result<Tensor<S>> {
    let q = pooled_query(pv, enc.embedding_layer(), &enc.pad, "ctx.att.wq", "ctx.att.bq")?;
    attend_pool(
        pv,
        &q,
        enc.top(),
        &enc.pad,
        "ctx.att.wk",
        "ctx.att.wv",
        "ctx.att.wo",
        "ctx.att.bo",
        mode,
        trace,
        "ctx.att",
    )
}

/// Per-layer summaries `g^1..g^L` of the encoder stack (`H^0` is only the
/// attentive query anchor, never summarized itself).
pub fn summarize_layers<S: Scalar>(
    cfg: &ModelConfig,
    pv: ParamsView<'_, S>,
    enc: &EncoderOutput<S>,
    mode: Mode,
    trace: &mut TraceOpt<'_, S>,
) -> Result<Vec<Tensor<S>>> {
    let l = enc.n_layers();
    let mut out = Vec::with_capacity(l);
    match cfg.deep_global {
        GlobalKind::Mean => {
            for h in &enc.layers[1..] {
                out.push(global_mean(h, &enc.pad)?);
            }
        }
        GlobalKind::Max => {
            for h in &enc.layers[1..] {
                out.push(global_max(h, &enc.pad)?);
            }
        }
        GlobalKind::Att => {
            let q = pooled_query(pv, enc.embedding_layer(), &enc.pad, "ctx.sum.q.w", "ctx.sum.q.b")?;
            for (idx, h) in enc.layers[1..].iter().enumerate() {
                let li = idx + 1;
                out.push(attend_pool(
                    pv,
                    &q,
                    h,
                    &enc.pad,
                    &format!("ctx.sum.{li}.wk"),
                    &format!("ctx.sum.{li}.wv"),
                    &format!("ctx.sum.{li}.wo"),
                    &format!("ctx.sum.{li}.bo"),
                    mode,
                    trace,
                    &format!("ctx.sum.{li}"),
                )?);
            }
        }
    }
    Ok(out)
}

/// Stacks per-layer summaries into `[B, L, d]` for the mixing provider.
pub fn stack_summaries<S: Scalar>(summaries: &[Tensor<S>]) -> Result<Tensor<S>> {
    let (b, d) = (summaries[0].shape()[0], summaries[0].shape()[1]);
    let mut acc: Option<Tensor<S>> = None;
    for g in summaries {
        let row = g.reshape(vec![b, 1, d])?;
        acc = Some(match acc {
            Some(prev) => prev.concat_time(&row)?,
            None => row,
        });
    }
    Ok(acc.expect("at least one encoder layer"))
}

fn gru_gate<S: Scalar>(
    pv: ParamsView<'_, S>,
    x: &Tensor<S>,
    h: &Tensor<S>,
    w: &str,
    u: &str,
    b: &str,
) -> Result<Tensor<S>> {
    Ok(x.matmul(&pv.get(w))?
        .add(&h.matmul(&pv.get(u))?)?
        .add_bias(&pv.get(b))?)
}

/// One gated recurrent step over a summary vector.
fn gru_cell<S: Scalar>(pv: ParamsView<'_, S>, x: &Tensor<S>, h: &Tensor<S>) -> Result<Tensor<S>> {
    let z = gru_gate(pv, x, h, "ctx.rnn.wz", "ctx.rnn.uz", "ctx.rnn.bz")?.sigmoid()?;
    let r = gru_gate(pv, x, h, "ctx.rnn.wr", "ctx.rnn.ur", "ctx.rnn.br")?.sigmoid()?;
    let gated = r.mul(h)?;
    let cand = gru_gate(pv, x, &gated, "ctx.rnn.wh", "ctx.rnn.uh", "ctx.rnn.bh")?.tanh()?;
    // h' = (1 − z)⊙h + z⊙cand
    let keep = z.affine(-S::one(), S::one())?.mul(h)?;
    Ok(keep.add(&z.mul(&cand)?)?)
}

/// Recurrent aggregation of the layer summaries in layer order; the final
/// state is the sentence context. The initial state is a projection of the
/// max-pooled embedding layer.
pub fn deep_rnn<S: Scalar>(
    pv: ParamsView<'_, S>,
    enc: &EncoderOutput<S>,
    summaries: &[Tensor<S>],
) -> Result<Tensor<S>> {
    let g0 = enc.embedding_layer().max_pool(&enc.pad)?;
    let mut state = g0
        .matmul(&pv.get("ctx.rnn.r0.w"))?
        .add_bias(&pv.get("ctx.rnn.r0.b"))?;
    for g in summaries {
        state = gru_cell(pv, g, &state)?;
    }
    Ok(state)
}

/// Decoder-conditioned mixture of layer summaries for one decoder layer at
/// one step: `β = softmax(proj_q(d_prev)·proj_k(g^k)/√d)`, `g = Σ β_k g^k`.
/// Returns the mixture and β for inspection.
pub fn tam_step<S: Scalar>(
    pv: ParamsView<'_, S>,
    layer: usize,
    d_prev: &Tensor<S>,
    gstack: &Tensor<S>,
    trace: &mut TraceOpt<'_, S>,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let (b, l, d) = (gstack.shape()[0], gstack.shape()[1], gstack.shape()[2]);
    let q = d_prev
        .matmul(&pv.get(&format!("ctx.tam.{layer}.wq")))?
        .reshape(vec![b, 1, d])?;
    let keys = gstack.matmul(&pv.get(&format!("ctx.tam.{layer}.wk")))?;
    let scale = S::from_f64(1.0 / (d as f64).sqrt());
    let scores = q.matmul_t(&keys)?.scale(scale)?; // [B,1,L]
    let beta3 = scores.softmax(None)?;
    let beta = beta3.reshape(vec![b, l])?;
    if let Some(t) = trace.as_mut() {
        t.push(format!("ctx.tam.{layer}.beta"), beta.clone());
    }
    let g = beta3.matmul(gstack)?.reshape(vec![b, d])?;
    Ok((g, beta))
}

/// The static (per-sentence) context vector, or `None` when the variant is
/// vanilla or computes its context dynamically per step.
pub fn static_context<S: Scalar>(
    cfg: &ModelConfig,
    pv: ParamsView<'_, S>,
    enc: &EncoderOutput<S>,
    mode: Mode,
    trace: &mut TraceOpt<'_, S>,
) -> Result<Option<Tensor<S>>> {
    match cfg.variant {
        Variant::Vanilla | Variant::DeepTam => Ok(None),
        Variant::ShallowMean => Ok(Some(global_mean(enc.top(), &enc.pad)?)),
        Variant::ShallowMax => Ok(Some(global_max(enc.top(), &enc.pad)?)),
        Variant::ShallowAtt => Ok(Some(global_att(pv, enc, mode, trace)?)),
        Variant::DeepRnn => {
            let summaries = summarize_layers(cfg, pv, enc, mode, trace)?;
            Ok(Some(deep_rnn(pv, enc, &summaries)?))
        }
    }
}

/// Fuses a context vector into a decoder layer input.
pub fn fuse<S: Scalar>(
    pv: ParamsView<'_, S>,
    layer: usize,
    d_in: &Tensor<S>,
    g: &Tensor<S>,
    mode: Mode,
) -> Result<Tensor<S>> {
    let t = d_in.shape()[d_in.rank() - 2];
    let ge = g.dropout(mode.dropout)?.expand_time(t)?;
    let cat = d_in.concat_last(&ge)?;
    let p = |n: &str| format!("ctx.fuse.{layer}.{n}");
    let hidden = cat
        .matmul(&pv.get(&p("w1")))?
        .add_bias(&pv.get(&p("b1")))?
        .relu()?
        .matmul(&pv.get(&p("w2")))?
        .add_bias(&pv.get(&p("b2")))?;
    let summed = d_in.add(&hidden.dropout(mode.dropout)?)?;
    Ok(summed.layer_norm(&pv.get(&p("ln.g")), &pv.get(&p("ln.b")), LN_EPS)?)
}
