//! Scratch diagnosis: teacher-forced argmax accuracy vs greedy accuracy
//! for the dynamic variant.

use sctx::data::{gen_task, make_batches, BatchStream, TaskKind, TaskSpec, Vocab, BOS, EOS};
use sctx::model::Variant;
use sctx::train::{greedy, greedy_token_accuracy, train, Adam, AdamConfig, ModelScorer, TrainOpts};
use sctx::{Model, ModelConfig};

fn main() {
    let variant = std::env::args()
        .nth(1)
        .map(|s| Variant::parse(&s).expect("variant name"))
        .unwrap_or(Variant::DeepTam);
    let steps: u64 = std::env::args()
        .nth(2)
        .map(|s| s.parse().unwrap())
        .unwrap_or(800);
    let dropout: f64 = std::env::args()
        .nth(3)
        .map(|s| s.parse().unwrap())
        .unwrap_or(0.1);
    let lr_scale: f64 = std::env::args()
        .nth(4)
        .map(|s| s.parse().unwrap())
        .unwrap_or(1.5);

    let spec = TaskSpec {
        kind: TaskKind::Copy,
        vocab: 12,
        min_len: 2,
        max_len: 8,
    };
    let seed = 1;
    let train_corpus = gen_task(&spec, 2000, seed);
    let eval_corpus = gen_task(&spec, 100, seed + 1);
    let sv = Vocab::from_sentences(train_corpus.pairs.iter().map(|(s, _)| s)).unwrap();
    let tv = Vocab::from_sentences(train_corpus.pairs.iter().map(|(_, t)| t)).unwrap();
    let (batches, _) = make_batches(&train_corpus, &sv, &tv, 32, 64, seed).unwrap();
    let stream = BatchStream::new(batches, seed).unwrap();

    let mut cfg = ModelConfig::base_toy(sv.len(), tv.len()).with_variant(variant);
    cfg.seed = seed;
    cfg.dropout = dropout;
    let mut model: Model<f32> = Model::new(cfg).unwrap();
    let mut adam_cfg = AdamConfig::for_model(model.config.d_model, 400);
    adam_cfg.lr_scale = lr_scale;
    let mut adam = Adam::new(&model.params, adam_cfg);
    let opts = TrainOpts {
        steps,
        label_smoothing: 0.1,
        log_every: 200,
        seed,
    };
    train(
        &mut model,
        &stream,
        &mut adam,
        &opts,
        0,
        &mut |s| println!("step {:5} loss {:.4}", s.step, s.loss),
        None,
        None,
    )
    .unwrap();

    // Teacher-forced argmax accuracy on the eval gold prefixes.
    let (eval_batches, _) = make_batches(&eval_corpus, &sv, &tv, 100, 64, seed).unwrap();
    let mut correct = 0usize;
    let mut total = 0usize;
    for batch in &eval_batches {
        let logits = model.teacher_logits_detached(batch, None).unwrap();
        let v = model.config.vocab_tgt;
        for r in 0..batch.tgt_out.len() {
            if !batch.tgt_mask.get(r) {
                continue;
            }
            let row = &logits.data()[r * v..(r + 1) * v];
            let mut best = 0;
            for (j, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = j;
                }
            }
            total += 1;
            if best == batch.tgt_out.data()[r] {
                correct += 1;
            }
        }
    }
    println!("teacher-forced argmax accuracy: {:.4}", correct as f64 / total as f64);

    let eval_pairs: Vec<(Vec<usize>, Vec<usize>)> = eval_corpus
        .pairs
        .iter()
        .map(|(s, t)| (sv.encode(s), tv.encode(t)))
        .collect();
    let acc = greedy_token_accuracy(&model, &eval_pairs, 16).unwrap();
    println!("greedy decode accuracy: {acc:.4}");

    for (src, reference) in eval_pairs.iter().take(4) {
        let scorer = ModelScorer::new(&model, src);
        let hyp = greedy(&scorer, 16).unwrap();
        println!("src {src:?}\nref {reference:?}\nhyp {hyp:?}");
        // Follow the gold prefix incrementally and show per-step argmax.
        let mut session = model.start_decode(src).unwrap();
        let mut prev = BOS;
        let mut preds = Vec::new();
        for &gold in reference.iter().chain(std::iter::once(&EOS)) {
            let logits = session.step(prev).unwrap();
            let mut best = 0;
            for (j, &x) in logits.iter().enumerate() {
                if x > logits[best] {
                    best = j;
                }
            }
            preds.push(best);
            prev = gold;
        }
        println!("gold-prefix argmax {preds:?}\n");
    }
}
