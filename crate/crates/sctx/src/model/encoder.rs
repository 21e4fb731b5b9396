//! Encoder stack: embeddings, sinusoidal positions, self-attention layers.

use crate::tensor::{Ids, Mask, Scalar, Tensor};

use super::layers::{feed_forward, mha, post_norm};
use super::{EncoderOutput, Mode, ModelConfig, ModelError, ParamsView, Result, TraceOpt};

/// Sinusoidal table rows `[offset, offset+t)` as a detached `[t, d]` tensor.
pub(crate) fn positional_encoding<S: Scalar>(t: usize, d: usize, offset: usize) -> Tensor<S> {
    let mut data = Vec::with_capacity(t * d);
    for pos in offset..offset + t {
        for i in 0..d {
            let exponent = (2 * (i / 2)) as f64 / d as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            data.push(S::from_f64(if i % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }));
        }
    }
    Tensor::new(vec![t, d], data).unwrap()
}

fn pe_tile<S: Scalar>(b: usize, t: usize, d: usize) -> Tensor<S> {
    let row = positional_encoding::<S>(t, d, 0);
    let mut data = Vec::with_capacity(b * t * d);
    for _ in 0..b {
        data.extend_from_slice(row.data());
    }
    Tensor::new(vec![b, t, d], data).unwrap()
}

/// Scaled embedding lookup plus positions plus embedding dropout.
pub(crate) fn embed_input<S: Scalar>(
    cfg: &ModelConfig,
    pv: ParamsView<'_, S>,
    table: &str,
    ids: &Ids,
    mode: Mode,
) -> Result<Tensor<S>> {
    let (b, t) = (ids.shape()[0], ids.shape()[1]);
    if t > cfg.max_len {
        return Err(ModelError::Length {
            len: t,
            max: cfg.max_len,
        });
    }
    let scale = S::from_f64((cfg.d_model as f64).sqrt());
    let emb = pv.get(table).embedding(ids)?.scale(scale)?;
    let x = emb.add(&pe_tile(b, t, cfg.d_model))?;
    Ok(x.dropout(mode.dropout)?)
}

/// Runs the full encoder, returning every layer output `H^0..H^L`.
pub(crate) fn encode<S: Scalar>(
    cfg: &ModelConfig,
    pv: ParamsView<'_, S>,
    src: &Ids,
    src_mask: &Mask,
    mode: Mode,
    trace: &mut TraceOpt<'_, S>,
) -> Result<EncoderOutput<S>> {
    let mut x = embed_input(cfg, pv, "src_embed", src, mode)?;
    let mut layers = Vec::with_capacity(cfg.n_enc_layers + 1);
    layers.push(x.clone());
    for i in 0..cfg.n_enc_layers {
        let att = mha(
            cfg,
            pv,
            &format!("enc.{i}.att"),
            &x,
            &x,
            Some(src_mask),
            mode,
            trace,
        )?;
        let x1 = post_norm(pv, &format!("enc.{i}.att_ln"), &x, &att, mode)?;
        let ff = feed_forward(pv, &format!("enc.{i}.ffn"), &x1)?;
        x = post_norm(pv, &format!("enc.{i}.ffn_ln"), &x1, &ff, mode)?;
        layers.push(x.clone());
    }
    Ok(EncoderOutput {
        layers,
        pad: src_mask.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positional_encoding_first_position_is_sin0_cos0() {
        let pe: Tensor<f64> = positional_encoding(1, 4, 0);
        assert_eq!(pe.data()[0], 0.0);
        assert_eq!(pe.data()[1], 1.0);
        assert_eq!(pe.data()[2], 0.0);
        assert_eq!(pe.data()[3], 1.0);
    }

    #[test]
    fn positional_encoding_offset_matches_full_table() {
        let full: Tensor<f64> = positional_encoding(8, 6, 0);
        let part: Tensor<f64> = positional_encoding(2, 6, 3);
        assert_eq!(&full.data()[3 * 6..5 * 6], part.data());
    }
}
