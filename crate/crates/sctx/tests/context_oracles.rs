//! Hand-evaluated oracles for the context providers: attentive pooling,
//! recurrent aggregation, decoder-conditioned mixing, and fusion.

use sctx::context::{
    deep_rnn, fuse, global_att, global_max, global_mean, stack_summaries, summarize_layers,
    tam_step,
};
use sctx::model::{EncoderOutput, GlobalKind, Mode, ModelConfig, ParamsView, Variant};
use sctx::tensor::{grad_check, Mask, ParamSet, Tensor};

fn t(shape: Vec<usize>, v: &[f64]) -> Tensor<f64> {
    Tensor::new(shape, v.to_vec()).unwrap()
}

fn enc_from(layers: Vec<Tensor<f64>>, lens: &[usize], t_len: usize) -> EncoderOutput<f64> {
    EncoderOutput {
        layers,
        pad: Mask::from_lens(lens, t_len),
    }
}

fn att_params(
    wq: &[f64],
    bq: &[f64],
    wk: &[f64],
    wv: &[f64],
    wo: &[f64],
    bo: &[f64],
    d: usize,
) -> ParamSet<f64> {
    let mut p = ParamSet::new();
    p.insert("ctx.att.wq", t(vec![d, d], wq)).unwrap();
    p.insert("ctx.att.bq", t(vec![d], bq)).unwrap();
    p.insert("ctx.att.wk", t(vec![d, d], wk)).unwrap();
    p.insert("ctx.att.wv", t(vec![d, d], wv)).unwrap();
    p.insert("ctx.att.wo", t(vec![d, d], wo)).unwrap();
    p.insert("ctx.att.bo", t(vec![d], bo)).unwrap();
    p
}

#[test]
fn pooling_on_single_token_returns_that_state() {
    let h = t(vec![1, 1, 3], &[0.4, -0.7, 2.0]);
    let mask = Mask::from_lens(&[1], 1);
    assert_eq!(global_mean(&h, &mask).unwrap().to_vec(), vec![0.4, -0.7, 2.0]);
    assert_eq!(global_max(&h, &mask).unwrap().to_vec(), vec![0.4, -0.7, 2.0]);
}

#[test]
fn mean_and_max_agree_on_identical_rows() {
    let h = t(vec![1, 3, 2], &[0.5, -1.0, 0.5, -1.0, 0.5, -1.0]);
    let mask = Mask::from_lens(&[3], 3);
    assert_eq!(
        global_mean(&h, &mask).unwrap().to_vec(),
        global_max(&h, &mask).unwrap().to_vec()
    );
}

#[test]
fn attentive_pool_single_token_is_value_then_output_projection() {
    let d = 2;
    let h0 = t(vec![1, 1, d], &[0.3, -0.2]);
    let hl = t(vec![1, 1, d], &[1.0, 0.5]);
    let p = att_params(
        &[1.0, 2.0, 3.0, 4.0],
        &[0.1, -0.1],
        &[0.5, 0.0, 0.0, 0.5],
        &[1.0, 0.0, 1.0, 1.0],
        &[2.0, 0.0, 0.0, 2.0],
        &[0.05, -0.05],
        d,
    );
    let enc = enc_from(vec![h0, hl], &[1], 1);
    let g = global_att(ParamsView::Raw(&p), &enc, Mode::eval(), &mut None).unwrap();
    // α = [1]; v = h·Wv = [1.5, 0.5]; g = v·Wo + bo = [3.05, 0.95].
    let got = g.to_vec();
    assert!((got[0] - 3.05).abs() < 1e-12 && (got[1] - 0.95).abs() < 1e-12);
}

#[test]
fn attentive_pool_with_zero_query_matches_value_projected_mean() {
    let d = 2;
    let h0 = t(vec![1, 2, d], &[0.3, -0.2, 0.1, 0.4]);
    let hl = t(vec![1, 2, d], &[1.0, 0.5, -0.5, 1.0]);
    // Zero query projection and bias force equal scores.
    let p = att_params(
        &[0.0; 4],
        &[0.0; 2],
        &[0.5, 0.0, 0.0, 0.5],
        &[1.0, 0.0, 1.0, 1.0],
        &[2.0, 0.0, 0.0, 2.0],
        &[0.05, -0.05],
        d,
    );
    let enc = enc_from(vec![h0, hl.clone()], &[2], 2);
    let g = global_att(ParamsView::Raw(&p), &enc, Mode::eval(), &mut None).unwrap();
    // Uniform softmax degeneracy: the mix is the mean of the value rows.
    let mean = hl
        .mean_pool(&Mask::from_lens(&[2], 2))
        .unwrap()
        .matmul(p.get("ctx.att.wv").unwrap())
        .unwrap()
        .matmul(p.get("ctx.att.wo").unwrap())
        .unwrap()
        .add_bias(p.get("ctx.att.bo").unwrap())
        .unwrap();
    for (a, b) in g.to_vec().iter().zip(mean.to_vec()) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn attentive_pool_two_token_hand_case() {
    let d = 2;
    let h0 = t(vec![1, 2, d], &[0.3, -0.2, 0.1, 0.4]);
    let hl = t(vec![1, 2, d], &[1.0, 0.5, -0.5, 1.0]);
    let (wq, bq) = ([1.0, 2.0, 3.0, 4.0], [0.1, -0.1]);
    let (wk, wv) = ([0.5, 0.0, 0.0, 0.5], [1.0, 0.0, 1.0, 1.0]);
    let (wo, bo) = ([2.0, 0.0, 0.0, 2.0], [0.05, -0.05]);
    let p = att_params(&wq, &bq, &wk, &wv, &wo, &bo, d);
    let enc = enc_from(vec![h0, hl], &[2], 2);
    let g = global_att(ParamsView::Raw(&p), &enc, Mode::eval(), &mut None).unwrap();

    // Scalar re-derivation.
    let g0 = [0.3f64, 0.4]; // elementwise max of H0 rows
    let q = [
        g0[0] * wq[0] + g0[1] * wq[2] + bq[0],
        g0[0] * wq[1] + g0[1] * wq[3] + bq[1],
    ];
    let k = [[0.5, 0.25], [-0.25, 0.5]];
    let scale = 1.0 / (d as f64).sqrt();
    let s = [
        (q[0] * k[0][0] + q[1] * k[0][1]) * scale,
        (q[0] * k[1][0] + q[1] * k[1][1]) * scale,
    ];
    let m = s[0].max(s[1]);
    let e = [(s[0] - m).exp(), (s[1] - m).exp()];
    let z = e[0] + e[1];
    let alpha = [e[0] / z, e[1] / z];
    let v = [[1.5, 0.5], [0.5, 1.0]];
    let mix = [
        alpha[0] * v[0][0] + alpha[1] * v[1][0],
        alpha[0] * v[0][1] + alpha[1] * v[1][1],
    ];
    let expect = [
        mix[0] * wo[0] + mix[1] * wo[2] + bo[0],
        mix[0] * wo[1] + mix[1] * wo[3] + bo[1],
    ];
    for (a, b) in g.to_vec().iter().zip(expect) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

fn deep_cfg(variant: Variant, global: GlobalKind, layers: usize) -> ModelConfig {
    let mut cfg = ModelConfig::base_toy(8, 8).with_variant(variant);
    cfg.deep_global = global;
    cfg.n_enc_layers = layers;
    cfg.d_model = 2;
    cfg.n_heads = 1;
    cfg
}

#[test]
fn summarize_layers_structure() {
    let cfg = deep_cfg(Variant::DeepRnn, GlobalKind::Mean, 3);
    let p: ParamSet<f64> = ParamSet::new();
    let h = |v: &[f64]| t(vec![1, 2, 2], v);
    let enc = enc_from(
        vec![
            h(&[0.0, 0.0, 0.0, 0.0]),
            h(&[1.0, 2.0, 3.0, 4.0]),
            h(&[0.5, 0.5, 1.5, 1.5]),
            h(&[9.0, 8.0, 7.0, 6.0]),
        ],
        &[2],
        2,
    );
    let gs = summarize_layers(&cfg, ParamsView::Raw(&p), &enc, Mode::eval(), &mut None).unwrap();
    assert_eq!(gs.len(), 3);
    // g^1 is the mean of H^1 rows; the embedding layer is never summarized.
    assert_eq!(gs[0].to_vec(), vec![2.0, 3.0]);
    assert_ne!(gs[0].to_vec(), gs[2].to_vec());
    // Single-layer stack.
    let cfg1 = deep_cfg(Variant::DeepRnn, GlobalKind::Mean, 1);
    let enc1 = enc_from(
        vec![h(&[0.0, 0.0, 0.0, 0.0]), h(&[1.0, 2.0, 3.0, 4.0])],
        &[2],
        2,
    );
    let gs1 = summarize_layers(&cfg1, ParamsView::Raw(&p), &enc1, Mode::eval(), &mut None).unwrap();
    assert_eq!(gs1.len(), 1);
    assert_eq!(gs1[0].to_vec(), vec![2.0, 3.0]);
}

fn rnn_params(d: usize, scale: f64) -> ParamSet<f64> {
    // Small fixed parameters, asymmetric so the hand unroll is nontrivial.
    let mut p = ParamSet::new();
    let mats = [
        ("ctx.rnn.wz", 0.3), ("ctx.rnn.uz", -0.2), ("ctx.rnn.wr", 0.1),
        ("ctx.rnn.ur", 0.4), ("ctx.rnn.wh", 0.5), ("ctx.rnn.uh", -0.3),
        ("ctx.rnn.r0.w", 0.2),
    ];
    for (name, base) in mats {
        let data: Vec<f64> = (0..d * d)
            .map(|i| scale * (base + 0.07 * i as f64 - 0.05 * ((i * i) % 3) as f64))
            .collect();
        p.insert(name, t(vec![d, d], &data)).unwrap();
    }
    for (name, base) in [("ctx.rnn.bz", 0.05), ("ctx.rnn.br", -0.04), ("ctx.rnn.bh", 0.02), ("ctx.rnn.r0.b", 0.01)] {
        let data: Vec<f64> = (0..d).map(|i| base * (i as f64 + 1.0)).collect();
        p.insert(name, t(vec![d], &data)).unwrap();
    }
    p
}

/// Scalar GRU oracle matching the provider's gate convention.
fn gru_oracle(p: &ParamSet<f64>, xs: &[[f64; 2]], r0: [f64; 2]) -> [f64; 2] {
    let m = |name: &str| p.get(name).unwrap().to_vec();
    let matvec = |w: &[f64], x: [f64; 2]| {
        [x[0] * w[0] + x[1] * w[2], x[0] * w[1] + x[1] * w[3]]
    };
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut h = r0;
    for &x in xs {
        let (wz, uz, bz) = (m("ctx.rnn.wz"), m("ctx.rnn.uz"), m("ctx.rnn.bz"));
        let (wr, ur, br) = (m("ctx.rnn.wr"), m("ctx.rnn.ur"), m("ctx.rnn.br"));
        let (wh, uh, bh) = (m("ctx.rnn.wh"), m("ctx.rnn.uh"), m("ctx.rnn.bh"));
        let zx = matvec(&wz, x);
        let zh = matvec(&uz, h);
        let z = [sig(zx[0] + zh[0] + bz[0]), sig(zx[1] + zh[1] + bz[1])];
        let rx = matvec(&wr, x);
        let rh = matvec(&ur, h);
        let r = [sig(rx[0] + rh[0] + br[0]), sig(rx[1] + rh[1] + br[1])];
        let hx = matvec(&wh, x);
        let hg = matvec(&uh, [r[0] * h[0], r[1] * h[1]]);
        let cand = [(hx[0] + hg[0] + bh[0]).tanh(), (hx[1] + hg[1] + bh[1]).tanh()];
        h = [
            (1.0 - z[0]) * h[0] + z[0] * cand[0],
            (1.0 - z[1]) * h[1] + z[1] * cand[1],
        ];
    }
    h
}

#[test]
fn recurrent_aggregation_matches_hand_unroll() {
    let d = 2;
    let p = rnn_params(d, 1.0);
    let h0 = t(vec![1, 2, d], &[0.2, -0.3, 0.4, 0.1]);
    let hs: Vec<Tensor<f64>> = vec![
        t(vec![1, 2, d], &[1.0, 0.0, 0.0, 1.0]),
        t(vec![1, 2, d], &[0.5, -0.5, 0.3, 0.2]),
        t(vec![1, 2, d], &[-0.2, 0.8, 0.6, -0.1]),
    ];
    let mut layers = vec![h0.clone()];
    layers.extend(hs.clone());
    let enc = enc_from(layers, &[2], 2);
    let mask = Mask::from_lens(&[2], 2);
    let summaries: Vec<Tensor<f64>> = hs.iter().map(|h| h.mean_pool(&mask).unwrap()).collect();
    let g = deep_rnn(ParamsView::Raw(&p), &enc, &summaries).unwrap();

    // Oracle: r0 = maxpool(H0)·W + b, then three scalar GRU steps.
    let g0 = [0.4f64, 0.1];
    let w = p.get("ctx.rnn.r0.w").unwrap().to_vec();
    let b = p.get("ctx.rnn.r0.b").unwrap().to_vec();
    let r0 = [
        g0[0] * w[0] + g0[1] * w[2] + b[0],
        g0[0] * w[1] + g0[1] * w[3] + b[1],
    ];
    let xs: Vec<[f64; 2]> = summaries
        .iter()
        .map(|s| [s.data()[0], s.data()[1]])
        .collect();
    let expect = gru_oracle(&p, &xs, r0);
    let got = g.to_vec();
    assert!((got[0] - expect[0]).abs() < 1e-6, "{got:?} vs {expect:?}");
    assert!((got[1] - expect[1]).abs() < 1e-6);
}

#[test]
fn single_layer_aggregation_is_one_recurrent_step() {
    let d = 2;
    let p = rnn_params(d, 1.0);
    let h0 = t(vec![1, 1, d], &[0.2, -0.3]);
    let h1 = t(vec![1, 1, d], &[1.0, -1.0]);
    let enc = enc_from(vec![h0, h1.clone()], &[1], 1);
    let summaries = vec![h1.mean_pool(&Mask::from_lens(&[1], 1)).unwrap()];
    let g = deep_rnn(ParamsView::Raw(&p), &enc, &summaries).unwrap();
    let w = p.get("ctx.rnn.r0.w").unwrap().to_vec();
    let b = p.get("ctx.rnn.r0.b").unwrap().to_vec();
    let r0 = [
        0.2 * w[0] - 0.3 * w[2] + b[0],
        0.2 * w[1] - 0.3 * w[3] + b[1],
    ];
    let expect = gru_oracle(&p, &[[1.0, -1.0]], r0);
    for (a, e) in g.to_vec().iter().zip(expect) {
        assert!((a - e).abs() < 1e-12);
    }
}

#[test]
fn saturated_update_gate_passes_candidate_through() {
    // With the update gate driven to 1 and the recurrent candidate weights
    // zero, the final state is tanh(Wh·x + bh) of the last input.
    let d = 2;
    let mut p = rnn_params(d, 1.0);
    p.set("ctx.rnn.bz", t(vec![d], &[30.0, 30.0])).unwrap();
    p.set("ctx.rnn.wz", Tensor::zeros(vec![d, d])).unwrap();
    p.set("ctx.rnn.uz", Tensor::zeros(vec![d, d])).unwrap();
    p.set("ctx.rnn.uh", Tensor::zeros(vec![d, d])).unwrap();
    let h0 = t(vec![1, 1, d], &[0.0, 0.0]);
    let h1 = t(vec![1, 1, d], &[0.7, -0.4]);
    let enc = enc_from(vec![h0, h1.clone()], &[1], 1);
    let summaries = vec![h1.mean_pool(&Mask::from_lens(&[1], 1)).unwrap()];
    let g = deep_rnn(ParamsView::Raw(&p), &enc, &summaries).unwrap();
    let wh = p.get("ctx.rnn.wh").unwrap().to_vec();
    let bh = p.get("ctx.rnn.bh").unwrap().to_vec();
    let expect = [
        (0.7 * wh[0] - 0.4 * wh[2] + bh[0]).tanh(),
        (0.7 * wh[1] - 0.4 * wh[3] + bh[1]).tanh(),
    ];
    for (a, e) in g.to_vec().iter().zip(expect) {
        assert!((a - e).abs() < 1e-6, "{a} vs {e}");
    }
}

fn tam_params(d: usize, wq: &[f64], wk: &[f64]) -> ParamSet<f64> {
    let mut p = ParamSet::new();
    p.insert("ctx.tam.0.wq", t(vec![d, d], wq)).unwrap();
    p.insert("ctx.tam.0.wk", t(vec![d, d], wk)).unwrap();
    p.insert("ctx.tam.0.start", Tensor::zeros(vec![d])).unwrap();
    p
}

#[test]
fn mixture_of_identical_summaries_is_that_summary() {
    let d = 2;
    let p = tam_params(d, &[0.3, -0.1, 0.2, 0.4], &[1.0, 0.0, 0.0, 1.0]);
    let g1 = [0.6, -0.2];
    let gstack = t(vec![1, 3, d], &[g1[0], g1[1], g1[0], g1[1], g1[0], g1[1]]);
    let d_prev = t(vec![1, d], &[0.5, 0.5]);
    let (g, beta) = tam_step(ParamsView::Raw(&p), 0, &d_prev, &gstack, &mut None).unwrap();
    for (a, e) in g.to_vec().iter().zip(g1) {
        assert!((a - e).abs() < 1e-12);
    }
    let bsum: f64 = beta.to_vec().iter().sum();
    assert!((bsum - 1.0).abs() < 1e-6);
}

#[test]
fn zero_query_projection_gives_arithmetic_mean() {
    let d = 2;
    let p = tam_params(d, &[0.0; 4], &[1.0, 0.0, 0.0, 1.0]);
    let gstack = t(vec![1, 2, d], &[1.0, 0.0, 0.0, 2.0]);
    let d_prev = t(vec![1, d], &[0.9, -0.7]);
    let (g, beta) = tam_step(ParamsView::Raw(&p), 0, &d_prev, &gstack, &mut None).unwrap();
    assert_eq!(beta.to_vec(), vec![0.5, 0.5]);
    let got = g.to_vec();
    assert!((got[0] - 0.5).abs() < 1e-12 && (got[1] - 1.0).abs() < 1e-12);
}

#[test]
fn mixture_two_layer_hand_case() {
    let d = 2;
    let wq = [0.5, -0.5, 1.0, 0.25];
    let wk = [0.8, 0.1, -0.2, 0.6];
    let p = tam_params(d, &wq, &wk);
    let g1 = [1.0f64, 0.0];
    let g2 = [0.0f64, 2.0];
    let gstack = t(vec![1, 2, d], &[g1[0], g1[1], g2[0], g2[1]]);
    let dp = [0.2f64, -0.1];
    let d_prev = t(vec![1, d], &dp);
    let (g, beta) = tam_step(ParamsView::Raw(&p), 0, &d_prev, &gstack, &mut None).unwrap();
    // Scalar oracle.
    let q = [dp[0] * wq[0] + dp[1] * wq[2], dp[0] * wq[1] + dp[1] * wq[3]];
    let k1 = [g1[0] * wk[0] + g1[1] * wk[2], g1[0] * wk[1] + g1[1] * wk[3]];
    let k2 = [g2[0] * wk[0] + g2[1] * wk[2], g2[0] * wk[1] + g2[1] * wk[3]];
    let scale = 1.0 / (d as f64).sqrt();
    let s = [
        (q[0] * k1[0] + q[1] * k1[1]) * scale,
        (q[0] * k2[0] + q[1] * k2[1]) * scale,
    ];
    let m = s[0].max(s[1]);
    let e = [(s[0] - m).exp(), (s[1] - m).exp()];
    let z = e[0] + e[1];
    let b_expect = [e[0] / z, e[1] / z];
    let g_expect = [
        b_expect[0] * g1[0] + b_expect[1] * g2[0],
        b_expect[0] * g1[1] + b_expect[1] * g2[1],
    ];
    for (a, e) in beta.to_vec().iter().zip(b_expect) {
        assert!((a - e).abs() < 1e-12);
    }
    for (a, e) in g.to_vec().iter().zip(g_expect) {
        assert!((a - e).abs() < 1e-12);
    }
}

fn fuse_params(d: usize, fw: usize, zero_out: bool) -> ParamSet<f64> {
    let mut p = ParamSet::new();
    let w1: Vec<f64> = (0..2 * d * fw).map(|i| 0.01 * (i as f64 % 7.0 - 3.0)).collect();
    p.insert("ctx.fuse.0.w1", t(vec![2 * d, fw], &w1)).unwrap();
    p.insert("ctx.fuse.0.b1", Tensor::zeros(vec![fw])).unwrap();
    let w2: Vec<f64> = if zero_out {
        vec![0.0; fw * d]
    } else {
        (0..fw * d).map(|i| 0.02 * ((i as f64 * 1.3).sin())).collect()
    };
    p.insert("ctx.fuse.0.w2", t(vec![fw, d], &w2)).unwrap();
    p.insert("ctx.fuse.0.b2", Tensor::zeros(vec![d])).unwrap();
    p.insert("ctx.fuse.0.ln.g", Tensor::ones(vec![d])).unwrap();
    p.insert("ctx.fuse.0.ln.b", Tensor::zeros(vec![d])).unwrap();
    p
}

#[test]
fn fusion_with_zero_output_weights_is_layer_norm_of_input() {
    let d = 4;
    let p = fuse_params(d, 6, true);
    let d_in = t(vec![1, 3, d], &(0..12).map(|i| 0.3 * i as f64 - 1.0).collect::<Vec<_>>());
    let g = t(vec![1, d], &[0.5, -0.5, 0.25, 0.0]);
    let fused = fuse(ParamsView::Raw(&p), 0, &d_in, &g, Mode::eval()).unwrap();
    assert_eq!(fused.shape(), d_in.shape());
    let ln = d_in
        .layer_norm(&Tensor::ones(vec![d]), &Tensor::zeros(vec![d]), 1e-6)
        .unwrap();
    for (a, e) in fused.to_vec().iter().zip(ln.to_vec()) {
        assert!((a - e).abs() < 1e-12);
    }
}

#[test]
fn fusion_gradient_flows_to_context_vector() {
    let d = 4;
    let mut p = fuse_params(d, 6, false);
    p.insert("g", t(vec![1, d], &[0.5, -0.5, 0.25, 0.1])).unwrap();
    p.insert(
        "d_in",
        t(vec![1, 2, d], &(0..8).map(|i| 0.21 * i as f64 - 0.8).collect::<Vec<_>>()),
    )
    .unwrap();
    let report = grad_check(&p, 1e-3, 1e-3, |w, _| {
        let fused = fuse(ParamsView::Watched(w), 0, w.get("d_in"), w.get("g"), Mode::eval())
            .map_err(|e| match e {
                sctx::model::ModelError::Tensor(t) => t,
                other => panic!("{other}"),
            })?;
        fused.mul(&fused)?.sum_all()
    })
    .unwrap();
    assert!(report.pass, "{report}");
    let g_err = report
        .per_param
        .iter()
        .find(|pe| pe.name == "g")
        .unwrap()
        .max_rel_err;
    assert!(g_err < 1e-3);
}

#[test]
fn context_ignores_padding_content() {
    use sctx::data::{gen_task, make_batches, TaskKind, TaskSpec, Vocab};
    let spec = TaskSpec {
        kind: TaskKind::Copy,
        vocab: 8,
        min_len: 2,
        max_len: 6,
    };
    let corpus = gen_task(&spec, 8, 2);
    let sv = Vocab::from_sentences(corpus.pairs.iter().map(|(s, _)| s)).unwrap();
    let tv = sv.clone();
    let (batches, _) = make_batches(&corpus, &sv, &tv, 8, 16, 1).unwrap();
    let batch = &batches[0];
    for variant in [
        Variant::ShallowMean,
        Variant::ShallowMax,
        Variant::ShallowAtt,
        Variant::DeepRnn,
    ] {
        let mut cfg = ModelConfig::base_toy(sv.len(), tv.len()).with_variant(variant);
        cfg.dropout = 0.0;
        let model: sctx::Model<f64> = sctx::Model::new(cfg).unwrap();
        // Rewrite pad positions with junk ids; g must not move.
        let mut junk = batch.src.data().to_vec();
        for (i, &m) in batch.src_mask.data().iter().enumerate() {
            if !m {
                junk[i] = 5;
            }
        }
        let src2 = sctx::tensor::Ids::new(batch.src.shape().to_vec(), junk).unwrap();
        let pv = ParamsView::Raw(&model.params);
        let enc1 = model.encode_detached(&batch.src, &batch.src_mask).unwrap();
        let enc2 = model.encode_detached(&src2, &batch.src_mask).unwrap();
        let g1 = sctx::context::static_context(&model.config, pv, &enc1, Mode::eval(), &mut None)
            .unwrap()
            .unwrap();
        let g2 = sctx::context::static_context(&model.config, pv, &enc2, Mode::eval(), &mut None)
            .unwrap()
            .unwrap();
        for (a, b) in g1.data().iter().zip(g2.data()) {
            assert!((a - b).abs() < 1e-9, "{}", variant.name());
        }
    }
}

#[test]
fn stacked_summaries_have_layer_major_layout() {
    let a = t(vec![2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let b = t(vec![2, 3], &[-1.0, -2.0, -3.0, -4.0, -5.0, -6.0]);
    let stack = stack_summaries(&[a, b]).unwrap();
    assert_eq!(stack.shape(), &[2, 2, 3]);
    // batch 0: [g1_row0, g2_row0]
    assert_eq!(&stack.data()[..6], &[1.0, 2.0, 3.0, -1.0, -2.0, -3.0]);
}
