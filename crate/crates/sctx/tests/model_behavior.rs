//! Encoder/decoder contracts: structure, masking invariances, the
//! incremental/teacher equivalence, and a bit-exact reference decoder.

use sctx::data::{gen_task, make_batches, Batch, TaskKind, TaskSpec, Vocab, BOS};
use sctx::model::{Mode, ParamsView, Variant, ALL_VARIANTS};
use sctx::tensor::{Ids, Mask, Tensor};
use sctx::{Model, ModelConfig};

fn toy_batch(seed: u64) -> (Batch, Vocab, Vocab) {
    let spec = TaskSpec {
        kind: TaskKind::Copy,
        vocab: 9,
        min_len: 3,
        max_len: 7,
    };
    let corpus = gen_task(&spec, 6, seed);
    let sv = Vocab::from_sentences(corpus.pairs.iter().map(|(s, _)| s)).unwrap();
    let tv = Vocab::from_sentences(corpus.pairs.iter().map(|(_, t)| t)).unwrap();
    let (mut batches, _) = make_batches(&corpus, &sv, &tv, 6, 32, seed).unwrap();
    (batches.remove(0), sv, tv)
}

fn config(variant: Variant) -> ModelConfig {
    let mut cfg = ModelConfig::base_toy(16, 16);
    cfg.d_model = 32;
    cfg.d_ff_enc = 48;
    cfg.d_ff_dec = 48;
    cfg.dropout = 0.0;
    cfg.variant = variant;
    cfg
}

#[test]
fn encoder_returns_all_layer_outputs() {
    let (batch, ..) = toy_batch(1);
    let model: Model<f32> = Model::new(config(Variant::Vanilla)).unwrap();
    let enc = model.encode_detached(&batch.src, &batch.src_mask).unwrap();
    assert_eq!(enc.layers.len(), model.config.n_enc_layers + 1);
    let shape = enc.layers[0].shape().to_vec();
    assert!(enc.layers.iter().all(|l| l.shape() == shape.as_slice()));
}

#[test]
fn empty_after_padding_row_is_degenerate() {
    let model: Model<f32> = Model::new(config(Variant::Vanilla)).unwrap();
    let src = Ids::new(vec![2, 3], vec![4, 5, 0, 0, 0, 0]).unwrap();
    let mask = Mask::from_lens(&[2, 0], 3);
    let err = model.encode_detached(&src, &mask).unwrap_err();
    assert!(err.to_string().contains("degenerate"));
}

#[test]
fn encoder_states_ignore_padding_content() {
    let model: Model<f32> = Model::new(config(Variant::Vanilla)).unwrap();
    let mask = Mask::from_lens(&[3], 5);
    let a = Ids::new(vec![1, 5], vec![4, 5, 6, 0, 0]).unwrap();
    let b = Ids::new(vec![1, 5], vec![4, 5, 6, 7, 8]).unwrap(); // junk in pads
    let ea = model.encode_detached(&a, &mask).unwrap();
    let eb = model.encode_detached(&b, &mask).unwrap();
    let d = model.config.d_model;
    for (x, y) in ea.top().data()[..3 * d].iter().zip(&eb.top().data()[..3 * d]) {
        assert!((x - y).abs() <= 1e-5, "{x} vs {y}");
    }
}

#[test]
fn sequences_beyond_max_len_error() {
    let mut cfg = config(Variant::Vanilla);
    cfg.max_len = 4;
    let model: Model<f32> = Model::new(cfg).unwrap();
    let src = Ids::new(vec![1, 6], vec![4; 6]).unwrap();
    let mask = Mask::from_lens(&[6], 6);
    let err = model.encode_detached(&src, &mask).unwrap_err();
    assert!(err.to_string().contains("exceeds max_len"));
}

/// Independent re-implementation of the vanilla decoder, applied with the
/// model's own parameters. Must agree bit-for-bit with the production path.
fn reference_vanilla_logits(model: &Model<f32>, batch: &Batch) -> Tensor<f32> {
    use sctx::tensor::Tape;
    let _unused: Option<Tape<f32>> = None;
    let cfg = &model.config;
    let pv = ParamsView::Raw(&model.params);
    let enc = model.encode_detached(&batch.src, &batch.src_mask).unwrap();
    let d = cfg.d_model;
    let dh = cfg.head_dim();
    let t = batch.tgt_in.shape()[1];
    let b = batch.tgt_in.shape()[0];

    // Embedding + positions, mirroring the production order of operations.
    let scale = (d as f32).sqrt();
    let emb = pv
        .get("tgt_embed")
        .embedding(&batch.tgt_in)
        .unwrap()
        .scale(scale)
        .unwrap();
    let mut pe_data = Vec::with_capacity(b * t * d);
    for _ in 0..b {
        for pos in 0..t {
            for i in 0..d {
                let expo = (2 * (i / 2)) as f64 / d as f64;
                let angle = pos as f64 / 10000f64.powf(expo);
                pe_data.push(if i % 2 == 0 { angle.sin() } else { angle.cos() } as f32);
            }
        }
    }
    let pe = Tensor::new(vec![b, t, d], pe_data).unwrap();
    let mut x = emb.add(&pe).unwrap();

    let causal = Mask::causal(t);
    let attn = |q_in: &Tensor<f32>, kv_in: &Tensor<f32>, prefix: &str, mask: &Mask| {
        let lin = |inp: &Tensor<f32>, w: &str, bn: &str| {
            inp.matmul(&pv.get(&format!("{prefix}.{w}")))
                .unwrap()
                .add_bias(&pv.get(&format!("{prefix}.{bn}")))
                .unwrap()
        };
        let q = lin(q_in, "wq", "bq");
        let k = lin(kv_in, "wk", "bk");
        let v = lin(kv_in, "wv", "bv");
        let mut heads: Option<Tensor<f32>> = None;
        for h in 0..cfg.n_heads {
            let (c0, c1) = (h * dh, (h + 1) * dh);
            let s = q
                .slice_last(c0, c1)
                .unwrap()
                .matmul_t(&k.slice_last(c0, c1).unwrap())
                .unwrap()
                .scale(1.0 / (dh as f32).sqrt())
                .unwrap();
            let a = s.softmax(Some(mask)).unwrap();
            let ctx = a.matmul(&v.slice_last(c0, c1).unwrap()).unwrap();
            heads = Some(match heads {
                Some(acc) => acc.concat_last(&ctx).unwrap(),
                None => ctx,
            });
        }
        lin(&heads.unwrap(), "wo", "bo")
    };
    let ln = |xx: &Tensor<f32>, prefix: &str| {
        xx.layer_norm(
            &pv.get(&format!("{prefix}.g")),
            &pv.get(&format!("{prefix}.b")),
            1e-6,
        )
        .unwrap()
    };
    for i in 0..cfg.n_dec_layers {
        let sa = attn(&x, &x, &format!("dec.{i}.self"), &causal);
        let x1 = ln(&x.add(&sa).unwrap(), &format!("dec.{i}.self_ln"));
        let ca = attn(&x1, enc.top(), &format!("dec.{i}.cross"), &batch.src_mask);
        let x2 = ln(&x1.add(&ca).unwrap(), &format!("dec.{i}.cross_ln"));
        let ff = x2
            .matmul(&pv.get(&format!("dec.{i}.ffn.w1")))
            .unwrap()
            .add_bias(&pv.get(&format!("dec.{i}.ffn.b1")))
            .unwrap()
            .relu()
            .unwrap()
            .matmul(&pv.get(&format!("dec.{i}.ffn.w2")))
            .unwrap()
            .add_bias(&pv.get(&format!("dec.{i}.ffn.b2")))
            .unwrap();
        x = ln(&x2.add(&ff).unwrap(), &format!("dec.{i}.ffn_ln"));
    }
    x.matmul_t(&pv.get("tgt_embed")).unwrap()
}

#[test]
fn vanilla_decoder_matches_reference_bit_for_bit() {
    let (batch, ..) = toy_batch(3);
    let model: Model<f32> = Model::new(config(Variant::Vanilla)).unwrap();
    let ours = model.teacher_logits_detached(&batch, None).unwrap();
    let reference = reference_vanilla_logits(&model, &batch);
    assert_eq!(ours.shape(), reference.shape());
    for (a, b) in ours.data().iter().zip(reference.data()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn causal_mask_blocks_future_positions_exactly() {
    let (batch, ..) = toy_batch(5);
    let model: Model<f32> = Model::new(config(Variant::ShallowMean)).unwrap();
    let base = model.teacher_logits_detached(&batch, None).unwrap();
    // Perturb the last target input token; earlier positions must not move.
    let t = batch.tgt_in.shape()[1];
    let b = batch.tgt_in.shape()[0];
    let mut ids = batch.tgt_in.data().to_vec();
    ids[t - 1] = if ids[t - 1] == 4 { 5 } else { 4 };
    let mut batch2 = batch.clone();
    batch2.tgt_in = Ids::new(vec![b, t], ids).unwrap();
    let out = model.teacher_logits_detached(&batch2, None).unwrap();
    let v = model.config.vocab_tgt;
    for row in 0..t - 1 {
        let (a, bb) = (
            &base.data()[row * v..(row + 1) * v],
            &out.data()[row * v..(row + 1) * v],
        );
        for (x, y) in a.iter().zip(bb) {
            assert_eq!(x.to_bits(), y.to_bits(), "row {row} moved");
        }
    }
}

#[test]
fn incremental_decoding_matches_teacher_forcing_for_every_variant() {
    for variant in ALL_VARIANTS {
        let (batch, ..) = toy_batch(7);
        let model: Model<f64> = Model::new(config(variant)).unwrap();
        let teacher = model.teacher_logits_detached(&batch, None).unwrap();
        let v = model.config.vocab_tgt;
        // First batch row, decoded incrementally over the gold prefix.
        let src_len = batch.src_mask.row(0).iter().filter(|&&m| m).count();
        let src: Vec<usize> = batch.src.data()[..src_len].to_vec();
        let gold_len = batch.tgt_mask.row(0).iter().filter(|&&m| m).count();
        let mut session = model.start_decode(&src).unwrap();
        for pos in 0..gold_len {
            let prev = batch.tgt_in.data()[pos];
            let logits = session.step(prev).unwrap();
            assert_eq!(logits.len(), v);
            let teacher_row = &teacher.data()[pos * v..(pos + 1) * v];
            for (inc, tf) in logits.iter().zip(teacher_row) {
                assert!(
                    (inc - tf).abs() <= 1e-5,
                    "{}: pos {pos}: {inc} vs {tf}",
                    variant.name()
                );
            }
        }
    }
}

#[test]
fn next_token_logits_have_vocab_shape() {
    let model: Model<f32> = Model::new(config(Variant::DeepTam)).unwrap();
    let mut session = model.start_decode(&[4, 5, 6]).unwrap();
    let logits = session.step(BOS).unwrap();
    assert_eq!(logits.len(), model.config.vocab_tgt);
    // Dynamic-context telemetry is exposed.
    let betas = session.last_betas().unwrap();
    assert_eq!(betas.len(), model.config.n_dec_layers);
    assert_eq!(betas[0].len(), model.config.n_enc_layers);
    for layer in &betas {
        let sum: f64 = layer.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(layer.iter().all(|&b| b >= 0.0));
    }
}

#[test]
fn static_context_is_bitwise_reproducible() {
    let (batch, ..) = toy_batch(9);
    for variant in [Variant::ShallowMean, Variant::ShallowMax, Variant::ShallowAtt, Variant::DeepRnn] {
        let model: Model<f32> = Model::new(config(variant)).unwrap();
        let enc = model.encode_detached(&batch.src, &batch.src_mask).unwrap();
        let pv = ParamsView::Raw(&model.params);
        let a = sctx::context::static_context(&model.config, pv, &enc, Mode::eval(), &mut None)
            .unwrap()
            .unwrap();
        let b = sctx::context::static_context(&model.config, pv, &enc, Mode::eval(), &mut None)
            .unwrap()
            .unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits(), "{}", variant.name());
        }
    }
}

#[test]
fn loss_runs_for_every_variant() {
    let (batch, ..) = toy_batch(11);
    for variant in ALL_VARIANTS {
        let model: Model<f32> = Model::new(config(variant)).unwrap();
        let tape = sctx::tensor::Tape::new();
        let watched = model.watch(&tape);
        let loss = model
            .loss_from(&watched, &batch, 0.1, Mode::eval(), None)
            .unwrap();
        assert!(loss.item().is_finite(), "{}", variant.name());
        let grads = tape.backward(&loss).unwrap();
        // Every context parameter is on the gradient path.
        for name in model.params.names().filter(|n| n.starts_with("ctx.")) {
            let g = grads.wrt(watched.get(name));
            assert!(g.is_some(), "{}: {name} missing grad", variant.name());
            let norm: f32 = g.unwrap().iter().map(|v| v * v).sum();
            assert!(norm.is_finite());
        }
    }
}
