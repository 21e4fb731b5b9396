//! Closed-form parameter accounting.
//!
//! Mirrors the registry layout in `init.rs` analytically; the registry walk
//! is the oracle the formulas are tested against. Context components report
//! as a delta over the vanilla counterpart of the same dimensions.

use super::{GlobalKind, ModelConfig, Variant};

#[derive(Debug, Clone)]
pub struct ParamCount {
    pub total: usize,
    pub by_component: Vec<(String, usize)>,
    /// Parameters added over the vanilla variant of the same dimensions.
    pub context_delta: usize,
}

impl ParamCount {
    pub fn component(&self, name: &str) -> usize {
        self.by_component
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| *c)
            .unwrap_or(0)
    }
}

fn attention_block(d: usize) -> usize {
    4 * d * d + 4 * d
}

fn layer_norm(d: usize) -> usize {
    2 * d
}

fn ffn(d_in: usize, hidden: usize, d_out: usize) -> usize {
    d_in * hidden + hidden + hidden * d_out + d_out
}

pub fn count_parameters(cfg: &ModelConfig) -> ParamCount {
    let d = cfg.d_model;
    let mut by_component = Vec::new();

    let embeddings = cfg.vocab_src * d + cfg.vocab_tgt * d;
    by_component.push(("embeddings".to_string(), embeddings));

    let enc_layer = attention_block(d) + layer_norm(d) + ffn(d, cfg.d_ff_enc, d) + layer_norm(d);
    by_component.push(("encoder".to_string(), cfg.n_enc_layers * enc_layer));

    let dec_layer = 2 * (attention_block(d) + layer_norm(d))
        + ffn(d, cfg.d_ff_dec, d)
        + layer_norm(d);
    by_component.push(("decoder".to_string(), cfg.n_dec_layers * dec_layer));

    let mut context = 0usize;
    if cfg.variant.uses_context() {
        let fusion = cfg.n_dec_layers * (ffn(2 * d, cfg.fusion_width(), d) + layer_norm(d));
        by_component.push(("context.fusion".to_string(), fusion));
        context += fusion;

        if cfg.variant == Variant::ShallowAtt {
            let att = 4 * d * d + 2 * d; // wq+bq, wk, wv, wo+bo
            by_component.push(("context.attentive_pool".to_string(), att));
            context += att;
        }
        if cfg.variant.is_deep() {
            if cfg.deep_global == GlobalKind::Att {
                let summarize = (d * d + d) + cfg.n_enc_layers * (3 * d * d + d);
                by_component.push(("context.layer_summaries".to_string(), summarize));
                context += summarize;
            }
            match cfg.variant {
                Variant::DeepRnn => {
                    let gru = 6 * d * d + 3 * d;
                    let r0 = d * d + d;
                    by_component.push(("context.rnn".to_string(), gru + r0));
                    context += gru + r0;
                }
                Variant::DeepTam => {
                    let tam = cfg.n_dec_layers * (2 * d * d + d);
                    by_component.push(("context.tam".to_string(), tam));
                    context += tam;
                }
                _ => unreachable!(),
            }
        }
    }

    let total = embeddings
        + cfg.n_enc_layers * enc_layer
        + cfg.n_dec_layers * dec_layer
        + context;

    ParamCount {
        total,
        by_component,
        context_delta: context,
    }
}

/// Parameter delta of `cfg` relative to a reference vanilla configuration
/// (used by the ablation table, where the medium baseline differs from the
/// base in dimensions, not in context parameters).
pub fn delta_vs(cfg: &ModelConfig, reference: &ModelConfig) -> i64 {
    count_parameters(cfg).total as i64 - count_parameters(reference).total as i64
}

#[cfg(test)]
mod tests {
    use super::super::init::init_params;
    use super::*;
    use crate::model::ALL_VARIANTS;
    use crate::tensor::ParamSet;

    #[test]
    fn analytic_count_matches_registry_walk_for_all_variants() {
        for v in ALL_VARIANTS {
            let cfg = ModelConfig::base_toy(24, 24).with_variant(v);
            let registry: ParamSet<f32> = init_params(&cfg).unwrap();
            let analytic = count_parameters(&cfg);
            assert_eq!(
                analytic.total,
                registry.scalar_count(),
                "variant {}",
                v.name()
            );
        }
        // The medium baseline too.
        let medium = ModelConfig::medium_toy(24, 24);
        let registry: ParamSet<f32> = init_params(&medium).unwrap();
        assert_eq!(count_parameters(&medium).total, registry.scalar_count());
    }

    #[test]
    fn mean_and_max_pooling_add_fusion_only() {
        let base = ModelConfig::base_toy(24, 24);
        let mean = count_parameters(&base.clone().with_variant(Variant::ShallowMean));
        let max = count_parameters(&base.clone().with_variant(Variant::ShallowMax));
        assert_eq!(mean.context_delta, max.context_delta);
        assert_eq!(mean.context_delta, mean.component("context.fusion"));
    }

    #[test]
    fn context_delta_ordering_matches_reported_scale() {
        let base = ModelConfig::base_toy(24, 24);
        let d = |v: Variant| count_parameters(&base.clone().with_variant(v)).context_delta;
        let (mean, max, att) = (
            d(Variant::ShallowMean),
            d(Variant::ShallowMax),
            d(Variant::ShallowAtt),
        );
        let (rnn, tam) = (d(Variant::DeepRnn), d(Variant::DeepTam));
        assert_eq!(mean, max);
        assert!(mean < att);
        assert!(att < tam && att < rnn);
        assert!(rnn > att, "recurrent aggregation outweighs attentive pooling");
    }
}
