//! Shared building blocks: linear maps, multi-head attention, feed-forward,
//! post-norm residual wrapping.

use crate::tensor::{Mask, Scalar, Tensor};

use super::{Mode, ModelConfig, ParamsView, Result, TraceOpt};

pub(crate) const LN_EPS: f64 = 1e-6;

pub(crate) fn linear<S: Scalar>(
    pv: ParamsView<'_, S>,
    x: &Tensor<S>,
    w: &str,
    b: Option<&str>,
) -> Result<Tensor<S>> {
    let y = x.matmul(&pv.get(w))?;
    Ok(match b {
        Some(b) => y.add_bias(&pv.get(b))?,
        None => y,
    })
}

/// Key/value projections of an attention block, separated out so decoding
/// sessions can cache them.
pub(crate) fn project_kv<S: Scalar>(
    pv: ParamsView<'_, S>,
    prefix: &str,
    kv_in: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let k = linear(pv, kv_in, &format!("{prefix}.wk"), Some(&format!("{prefix}.bk")))?;
    let v = linear(pv, kv_in, &format!("{prefix}.wv"), Some(&format!("{prefix}.bv")))?;
    Ok((k, v))
}

/// Multi-head scaled dot-product attention over pre-projected keys/values.
/// Recorded attention weights are the softmax outputs, pre-dropout.
#[allow(clippy::too_many_arguments)]
pub(crate) fn mha_with_kv<S: Scalar>(
    cfg: &ModelConfig,
    pv: ParamsView<'_, S>,
    prefix: &str,
    q_in: &Tensor<S>,
    k: &Tensor<S>,
    v: &Tensor<S>,
    mask: Option<&Mask>,
    mode: Mode,
    trace: &mut TraceOpt<'_, S>,
) -> Result<Tensor<S>> {
    let dh = cfg.head_dim();
    let scale = S::from_f64(1.0 / (dh as f64).sqrt());
    let q = linear(pv, q_in, &format!("{prefix}.wq"), Some(&format!("{prefix}.bq")))?;
    let mut heads: Option<Tensor<S>> = None;
    for h in 0..cfg.n_heads {
        let (c0, c1) = (h * dh, (h + 1) * dh);
        let qh = q.slice_last(c0, c1)?;
        let kh = k.slice_last(c0, c1)?;
        let vh = v.slice_last(c0, c1)?;
        let scores = qh.matmul_t(&kh)?.scale(scale)?;
        let alpha = scores.softmax(mask)?;
        if let Some(t) = trace.as_mut() {
            t.push(format!("{prefix}.h{h}"), alpha.clone());
        }
        let ctx = alpha.dropout(mode.dropout)?.matmul(&vh)?;
        heads = Some(match heads {
            Some(acc) => acc.concat_last(&ctx)?,
            None => ctx,
        });
    }
    linear(
        pv,
        &heads.expect("n_heads > 0"),
        &format!("{prefix}.wo"),
        Some(&format!("{prefix}.bo")),
    )
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn mha<S: Scalar>(
    cfg: &ModelConfig,
    pv: ParamsView<'_, S>,
    prefix: &str,
    q_in: &Tensor<S>,
    kv_in: &Tensor<S>,
    mask: Option<&Mask>,
    mode: Mode,
    trace: &mut TraceOpt<'_, S>,
) -> Result<Tensor<S>> {
    let (k, v) = project_kv(pv, prefix, kv_in)?;
    mha_with_kv(cfg, pv, prefix, q_in, &k, &v, mask, mode, trace)
}

pub(crate) fn feed_forward<S: Scalar>(
    pv: ParamsView<'_, S>,
    prefix: &str,
    x: &Tensor<S>,
) -> Result<Tensor<S>> {
    let h = linear(pv, x, &format!("{prefix}.w1"), Some(&format!("{prefix}.b1")))?.relu()?;
    linear(pv, &h, &format!("{prefix}.w2"), Some(&format!("{prefix}.b2")))
}

/// `LayerNorm(residual + Dropout(sublayer))` with the site's own affine.
pub(crate) fn post_norm<S: Scalar>(
    pv: ParamsView<'_, S>,
    ln_prefix: &str,
    residual: &Tensor<S>,
    sublayer: &Tensor<S>,
    mode: Mode,
) -> Result<Tensor<S>> {
    let summed = residual.add(&sublayer.dropout(mode.dropout)?)?;
    Ok(summed.layer_norm(
        &pv.get(&format!("{ln_prefix}.g")),
        &pv.get(&format!("{ln_prefix}.b")),
        LN_EPS,
    )?)
}
