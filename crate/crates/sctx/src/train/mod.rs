//! Optimization loop, decoding, BLEU, significance testing, probing.

mod bleu;
mod bootstrap;
mod decode;
mod metrics;
mod optim;
mod probe;

pub use bleu::{bleu, corpus_bleu_from_stats, sentence_bleu, sentence_stats, BleuStats};
pub use bootstrap::{bootstrap_by, bootstrap_test, paired_bleu_bootstrap};
pub use decode::{beam, greedy, ModelScorer, Scorer};
pub use metrics::{canonical_metrics_bytes, EvalReport, LogRecord, MetricsWriter, SpeedMeter};
pub use optim::{Adam, AdamConfig};
pub use probe::{
    extract_representations, probe, probing_suite, Extractor, ProbeConfig, ProbeReport,
    ProbingGrid, ALL_EXTRACTORS,
};

use crate::data::{derive_seed, Batch, BatchStream, DataError};
use crate::model::{Mode, Model, ModelError};
use crate::tensor::{Scalar, Tape, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("non-finite loss at step {step}; offending batch dumped to {dump}")]
    NonFiniteLoss { step: u64, dump: String },
    #[error("input error: {0}")]
    Input(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone)]
pub struct TrainOpts {
    pub steps: u64,
    pub label_smoothing: f64,
    pub log_every: u64,
    /// Seed for the per-step dropout streams (normally the experiment seed).
    pub seed: u64,
}

impl Default for TrainOpts {
    fn default() -> Self {
        TrainOpts {
            steps: 1000,
            label_smoothing: 0.1,
            log_every: 50,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepStats {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub final_step: u64,
    pub final_loss: f64,
    pub steps_per_sec: f64,
    pub stopped_early: bool,
}

/// One optimization step: forward, backward, Adam update. The dropout
/// stream is re-derived from `(seed, step)`, so step `k` computes the same
/// update whether reached in one run or after a resume.
pub fn train_step<S: Scalar>(
    model: &mut Model<S>,
    adam: &mut Adam<S>,
    batch: &Batch,
    smoothing: f64,
    seed: u64,
    step: u64,
) -> Result<StepStats> {
    let tape: Tape<S> = Tape::new().with_dropout_seed(derive_seed(seed, step ^ 0xD120));
    let watched = model.watch(&tape);
    let loss = model.loss_from(
        &watched,
        batch,
        smoothing,
        Mode::train(&model.config),
        None,
    )?;
    let grads = tape.backward(&loss)?;
    adam.apply(&mut model.params, &grads, &watched)?;
    Ok(StepStats {
        step: step + 1,
        loss: loss.item().as_f64(),
        lr: adam.rate(step + 1),
    })
}

/// Runs steps `start_step..opts.steps` over the stream. Logs every
/// `log_every` steps through `sink`; `stop_probe`, when given, is consulted
/// at those same points and may end training early (evaluation-based
/// stopping). A non-finite loss aborts with a diagnostic dump of the
/// offending batch next to nowhere in particular — the caller's run
/// directory decides where via `dump_dir`.
pub fn train<S: Scalar>(
    model: &mut Model<S>,
    stream: &BatchStream,
    adam: &mut Adam<S>,
    opts: &TrainOpts,
    start_step: u64,
    sink: &mut dyn FnMut(StepStats),
    mut stop_probe: Option<&mut dyn FnMut(u64, &Model<S>) -> bool>,
    dump_dir: Option<&std::path::Path>,
) -> Result<TrainSummary> {
    let started = std::time::Instant::now();
    let mut meter = SpeedMeter::for_total((opts.steps - start_step) as usize);
    let mut last_loss = f64::NAN;
    let mut stopped_early = false;
    let mut step = start_step;
    while step < opts.steps {
        let batch = stream.batch_at(step);
        let stats = match train_step(model, adam, batch, opts.label_smoothing, opts.seed, step) {
            Ok(stats) => stats,
            Err(TrainError::Tensor(TensorError::NonFinite { .. }))
            | Err(TrainError::Model(ModelError::Tensor(TensorError::NonFinite { .. }))) => {
                let dump = dump_batch(dump_dir, step, batch)?;
                return Err(TrainError::NonFiniteLoss { step, dump });
            }
            Err(e) => return Err(e),
        };
        meter.tick();
        step = stats.step;
        last_loss = stats.loss;
        if step % opts.log_every.max(1) == 0 || step == opts.steps {
            sink(stats);
            if let Some(probe) = stop_probe.as_mut() {
                if probe(step, model) {
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let fallback = (step - start_step) as f64 / elapsed.max(1e-9);
    let measured = meter.rate();
    Ok(TrainSummary {
        final_step: step,
        final_loss: last_loss,
        steps_per_sec: if measured > 0.0 { measured } else { fallback },
        stopped_early,
    })
}

fn dump_batch(dir: Option<&std::path::Path>, step: u64, batch: &Batch) -> Result<String> {
    let path = dir
        .map(|d| d.join(format!("diverged_step{step}.json")))
        .unwrap_or_else(|| std::env::temp_dir().join(format!("sctx_diverged_step{step}.json")));
    let dump = serde_json::json!({
        "step": step,
        "src": batch.src.data(),
        "src_shape": batch.src.shape(),
        "tgt_in": batch.tgt_in.data(),
        "tgt_out": batch.tgt_out.data(),
    });
    std::fs::write(&path, dump.to_string())?;
    Ok(path.display().to_string())
}

/// Greedy-decodes each source and scores token accuracy against the
/// references: matching positions over reference length (length mismatches
/// count as errors).
pub fn greedy_token_accuracy<S: Scalar>(
    model: &Model<S>,
    pairs: &[(Vec<usize>, Vec<usize>)],
    max_len: usize,
) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for (src, reference) in pairs {
        let scorer = ModelScorer::new(model, src);
        let hyp = greedy(&scorer, max_len)?;
        total += reference.len().max(hyp.len());
        correct += hyp
            .iter()
            .zip(reference)
            .filter(|(h, r)| h == r)
            .count();
    }
    Ok(correct as f64 / total.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_task, make_batches, TaskKind, TaskSpec, Vocab};
    use crate::model::ModelConfig;

    fn setup(seed: u64) -> (Model<f32>, BatchStream) {
        let spec = TaskSpec {
            kind: TaskKind::Copy,
            vocab: 8,
            min_len: 2,
            max_len: 6,
        };
        let corpus = gen_task(&spec, 64, seed);
        let sv = Vocab::from_sentences(corpus.pairs.iter().map(|(s, _)| s)).unwrap();
        let tv = Vocab::from_sentences(corpus.pairs.iter().map(|(_, t)| t)).unwrap();
        let (batches, _) = make_batches(&corpus, &sv, &tv, 16, 16, seed).unwrap();
        let mut cfg = ModelConfig::base_toy(sv.len(), tv.len());
        cfg.d_model = 32;
        cfg.d_ff_enc = 64;
        cfg.d_ff_dec = 64;
        cfg.seed = seed;
        let model = Model::new(cfg).unwrap();
        (model, BatchStream::new(batches, seed).unwrap())
    }

    #[test]
    fn zero_steps_leaves_initialization_untouched() {
        let (mut model, stream) = setup(4);
        let before = model.params.clone();
        let mut adam = Adam::new(&model.params, AdamConfig::for_model(32, 100));
        let opts = TrainOpts {
            steps: 0,
            ..Default::default()
        };
        let summary = train(
            &mut model,
            &stream,
            &mut adam,
            &opts,
            0,
            &mut |_| {},
            None,
            None,
        )
        .unwrap();
        assert_eq!(summary.final_step, 0);
        assert!(model.params.bit_identical(&before));
    }

    #[test]
    fn identical_seeds_produce_identical_loss_curves() {
        let run = || {
            let (mut model, stream) = setup(4);
            let mut adam = Adam::new(&model.params, AdamConfig::for_model(32, 100));
            let opts = TrainOpts {
                steps: 12,
                log_every: 1,
                seed: 4,
                ..Default::default()
            };
            let mut curve = Vec::new();
            train(
                &mut model,
                &stream,
                &mut adam,
                &opts,
                0,
                &mut |s| curve.push(s.loss.to_bits()),
                None,
                None,
            )
            .unwrap();
            (curve, model.params)
        };
        let (c1, p1) = run();
        let (c2, p2) = run();
        assert_eq!(c1, c2);
        assert!(p1.bit_identical(&p2));
    }

    #[test]
    fn resume_reproduces_the_straight_run_bit_for_bit() {
        let opts = |steps: u64| TrainOpts {
            steps,
            log_every: 1,
            seed: 4,
            ..Default::default()
        };
        // Straight run to 10.
        let (mut direct, stream) = setup(4);
        let mut adam = Adam::new(&direct.params, AdamConfig::for_model(32, 100));
        train(&mut direct, &stream, &mut adam, &opts(10), 0, &mut |_| {}, None, None).unwrap();
        // Run to 6, snapshot optimizer, resume to 10.
        let (mut resumed, stream2) = setup(4);
        let mut adam2 = Adam::new(&resumed.params, AdamConfig::for_model(32, 100));
        train(&mut resumed, &stream2, &mut adam2, &opts(6), 0, &mut |_| {}, None, None).unwrap();
        let stored = adam2.to_params(&resumed.params).unwrap();
        let mut adam3 =
            Adam::from_params(&resumed.params, AdamConfig::for_model(32, 100), &stored).unwrap();
        train(&mut resumed, &stream2, &mut adam3, &opts(10), 6, &mut |_| {}, None, None).unwrap();
        assert!(direct.params.bit_identical(&resumed.params));
    }
}
