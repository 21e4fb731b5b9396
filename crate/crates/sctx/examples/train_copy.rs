//! Trains the base-toy model on the copy task and watches greedy accuracy
//! converge. Pass a variant name to try the context-equipped models:
//!
//! ```text
//! cargo run --release --example train_copy -- shallow-att
//! ```

use sctx::data::{gen_task, make_batches, BatchStream, TaskKind, TaskSpec, Vocab};
use sctx::model::Variant;
use sctx::train::{greedy_token_accuracy, train, Adam, AdamConfig, TrainOpts};
use sctx::{Model, ModelConfig};

fn main() {
    let variant = std::env::args()
        .nth(1)
        .map(|s| Variant::parse(&s).expect("variant name"))
        .unwrap_or(Variant::Vanilla);

    let spec = TaskSpec {
        kind: TaskKind::Copy,
        vocab: 20,
        min_len: 1,
        max_len: 12,
    };
    let seed = 1;
    let train_corpus = gen_task(&spec, 5000, seed);
    let eval_corpus = gen_task(&spec, 200, seed + 1);
    let sv = Vocab::from_sentences(train_corpus.pairs.iter().map(|(s, _)| s)).unwrap();
    let tv = Vocab::from_sentences(train_corpus.pairs.iter().map(|(_, t)| t)).unwrap();
    let (batches, _) = make_batches(&train_corpus, &sv, &tv, 32, 64, seed).unwrap();
    let stream = BatchStream::new(batches, seed).unwrap();

    let mut cfg = ModelConfig::base_toy(sv.len(), tv.len()).with_variant(variant);
    cfg.seed = seed;
    let mut model: Model<f32> = Model::new(cfg).unwrap();
    let mut adam_cfg = AdamConfig::for_model(model.config.d_model, 400);
    adam_cfg.lr_scale = 1.0;
    let mut adam = Adam::new(&model.params, adam_cfg);

    let eval_pairs: Vec<(Vec<usize>, Vec<usize>)> = eval_corpus
        .pairs
        .iter()
        .map(|(s, t)| (sv.encode(s), tv.encode(t)))
        .collect();

    let opts = TrainOpts {
        steps: 3000,
        label_smoothing: 0.1,
        log_every: 100,
        seed,
    };
    let started = std::time::Instant::now();
    let eval_pairs_ref = &eval_pairs;
    let mut stop = move |step: u64, m: &Model<f32>| {
        let acc = greedy_token_accuracy(m, eval_pairs_ref, 16).unwrap();
        println!("step {step:5}  greedy token accuracy {acc:.4}");
        acc >= 0.992
    };
    let summary = train(
        &mut model,
        &stream,
        &mut adam,
        &opts,
        0,
        &mut |s| println!("step {:5}  loss {:.4}  lr {:.5}", s.step, s.loss, s.lr),
        Some(&mut stop),
        None,
    )
    .unwrap();
    let acc = greedy_token_accuracy(&model, &eval_pairs, 16).unwrap();
    println!(
        "{}: {} steps in {:.1}s ({:.2} steps/s), final accuracy {:.4}",
        variant.name(),
        summary.final_step,
        started.elapsed().as_secs_f64(),
        summary.steps_per_sec,
        acc
    );
}
