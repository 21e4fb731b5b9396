//! Run directories: training with resume, evaluation, probing.
//!
//! A run directory is self-describing: the exact config text, the binary
//! version and its content hash, the generated corpora and vocabularies,
//! the metrics stream, and resumable trainer checkpoints. Everything a run
//! computes is a pure function of (config, seed); only wall-clock fields
//! vary between repetitions.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::data::{gen_task, make_batches, BatchStream, ParallelCorpus, Vocab};
use crate::model::{count_parameters, Model};
use crate::tensor::serialize::{load_checkpoint, save_checkpoint};
use crate::tensor::ParamSet;
use crate::train::{
    beam, bleu, greedy, greedy_token_accuracy, sentence_stats, train_step, Adam, AdamConfig,
    BleuStats, EvalReport, LogRecord, MetricsWriter, ModelScorer, ProbeConfig, SpeedMeter,
    TrainError,
};

use super::{version_info, ExpError, ExperimentConfig, Result};

const EVAL_CORPUS_STREAM: u64 = 0xE7A1;
const EARLY_STOP_SAMPLE: usize = 128;

pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: &Path) -> Self {
        RunPaths {
            root: root.to_path_buf(),
        }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.cfg")
    }

    pub fn version(&self) -> PathBuf {
        self.root.join("version.json")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.jsonl")
    }

    pub fn vocab_src(&self) -> PathBuf {
        self.root.join("vocab.src")
    }

    pub fn vocab_tgt(&self) -> PathBuf {
        self.root.join("vocab.tgt")
    }

    pub fn ckpt_dir(&self) -> PathBuf {
        self.root.join("ckpt")
    }

    pub fn trainer_ckpt(&self, step: u64) -> PathBuf {
        self.ckpt_dir().join(format!("trainer_{step:06}.ckpt"))
    }

    pub fn model_final(&self) -> PathBuf {
        self.root.join("model_final.ckpt")
    }

    pub fn train_summary(&self) -> PathBuf {
        self.root.join("train_summary.json")
    }

    pub fn eval_report(&self) -> PathBuf {
        self.root.join("eval_report.json")
    }

    pub fn probing_csv(&self) -> PathBuf {
        self.root.join("probing.csv")
    }

    /// Highest-step resumable checkpoint, if any.
    pub fn latest_trainer_ckpt(&self) -> Option<(u64, PathBuf)> {
        let dir = self.ckpt_dir();
        let mut best: Option<(u64, PathBuf)> = None;
        let entries = fs::read_dir(&dir).ok()?;
        for entry in entries.flatten() {
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if let Some(step) = name
                .strip_prefix("trainer_")
                .and_then(|s| s.strip_suffix(".ckpt"))
                .and_then(|s| s.parse::<u64>().ok())
            {
                if best.as_ref().map(|(b, _)| step > *b).unwrap_or(true) {
                    best = Some((step, entry.path()));
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainOutcome {
    pub final_step: u64,
    pub final_loss: f64,
    pub steps_per_sec: f64,
    pub stopped_early: bool,
    pub final_accuracy: Option<f64>,
    pub dropped_pairs: usize,
}

/// Generated inputs shared by training, evaluation and probing.
struct TaskData {
    train_corpus: ParallelCorpus,
    eval_corpus: ParallelCorpus,
    src_vocab: Vocab,
    tgt_vocab: Vocab,
}

fn task_data(cfg: &ExperimentConfig) -> Result<TaskData> {
    let train_corpus = gen_task(&cfg.task, cfg.train_pairs, cfg.train.seed);
    let eval_corpus = gen_task(
        &cfg.task,
        cfg.eval_pairs,
        cfg.train.seed ^ EVAL_CORPUS_STREAM,
    );
    let src_vocab = Vocab::from_sentences(train_corpus.pairs.iter().map(|(s, _)| s))
        .map_err(ExpError::from)?;
    let tgt_vocab = Vocab::from_sentences(train_corpus.pairs.iter().map(|(_, t)| t))
        .map_err(ExpError::from)?;
    Ok(TaskData {
        train_corpus,
        eval_corpus,
        src_vocab,
        tgt_vocab,
    })
}

fn encoded_pairs(corpus: &ParallelCorpus, sv: &Vocab, tv: &Vocab) -> Vec<(Vec<usize>, Vec<usize>)> {
    corpus
        .pairs
        .iter()
        .map(|(s, t)| (sv.encode(s), tv.encode(t)))
        .collect()
}

/// Trains (or resumes) a run in `out`. Deterministic given the config.
pub fn run_train(cfg: &ExperimentConfig, out: &Path) -> Result<TrainOutcome> {
    let paths = RunPaths::new(out);
    fs::create_dir_all(paths.ckpt_dir())?;
    let config_text = cfg.to_text();
    if paths.config().exists() {
        let existing = fs::read_to_string(paths.config())?;
        if existing != config_text {
            return Err(ExpError::Config(format!(
                "run directory {} was created with a different config",
                out.display()
            )));
        }
    } else {
        fs::write(paths.config(), &config_text)?;
    }
    let (version, hash) = version_info();
    fs::write(
        paths.version(),
        serde_json::json!({ "version": version, "content_hash": hash }).to_string() + "\n",
    )?;

    let data = task_data(cfg)?;
    data.train_corpus.save(out, "train")?;
    data.eval_corpus.save(out, "eval")?;
    data.src_vocab.save(&paths.vocab_src())?;
    data.tgt_vocab.save(&paths.vocab_tgt())?;

    let (batches, dropped) = make_batches(
        &data.train_corpus,
        &data.src_vocab,
        &data.tgt_vocab,
        cfg.train.batch_size,
        cfg.max_len,
        cfg.train.seed,
    )?;
    let stream = BatchStream::new(batches, cfg.train.seed)?;

    let model_cfg = cfg.model_config(data.src_vocab.len(), data.tgt_vocab.len());
    let mut adam_cfg = AdamConfig::for_model(model_cfg.d_model, cfg.train.warmup);
    adam_cfg.lr_scale = cfg.train.lr_scale;

    // Fresh start or resume from the newest trainer checkpoint.
    let (mut model, mut adam, start_step) = match paths.latest_trainer_ckpt() {
        Some((step, ckpt_path)) => {
            let stored: ParamSet<f32> = load_checkpoint(&ckpt_path)?;
            let (model_params, opt_params) = split_trainer_params(&stored)?;
            let model = Model::from_params(model_cfg.clone(), model_params)?;
            let adam = Adam::from_params(&model.params, adam_cfg.clone(), &opt_params)
                .map_err(ExpError::from)?;
            (model, adam, step)
        }
        None => {
            let model: Model<f32> = Model::new(model_cfg.clone())?;
            let adam = Adam::new(&model.params, adam_cfg.clone());
            (model, adam, 0)
        }
    };

    truncate_metrics(&paths.metrics(), start_step)?;
    let mut metrics = MetricsWriter::append(&paths.metrics()).map_err(ExpError::from)?;

    let eval_pairs = encoded_pairs(&data.eval_corpus, &data.src_vocab, &data.tgt_vocab);
    let stop_sample: Vec<(Vec<usize>, Vec<usize>)> = eval_pairs
        .iter()
        .take(EARLY_STOP_SAMPLE)
        .cloned()
        .collect();

    let started = Instant::now();
    let mut meter = SpeedMeter::for_total((cfg.train.steps.saturating_sub(start_step)) as usize);
    let mut step = start_step;
    let mut last_loss = f64::NAN;
    let mut stopped_early = false;
    let mut final_accuracy = None;
    while step < cfg.train.steps {
        let batch = stream.batch_at(step);
        let stats = match train_step(
            &mut model,
            &mut adam,
            batch,
            cfg.train.label_smoothing,
            cfg.train.seed,
            step,
        ) {
            Ok(stats) => stats,
            Err(TrainError::Tensor(t)) | Err(TrainError::Model(crate::model::ModelError::Tensor(t)))
                if matches!(t, crate::tensor::TensorError::NonFinite { .. }) =>
            {
                let dump = out.join(format!("diverged_step{step}.json"));
                let _ = fs::write(
                    &dump,
                    serde_json::json!({
                        "step": step,
                        "src": batch.src.data(),
                        "tgt_in": batch.tgt_in.data(),
                    })
                    .to_string(),
                );
                return Err(ExpError::Runtime(format!(
                    "non-finite loss at step {step}; batch dumped to {}",
                    dump.display()
                )));
            }
            Err(e) => return Err(e.into()),
        };
        meter.tick();
        step = stats.step;
        last_loss = stats.loss;
        if step % cfg.train.log_every.max(1) == 0 || step == cfg.train.steps {
            metrics
                .write(&LogRecord {
                    step,
                    loss: stats.loss,
                    lr: stats.lr,
                    wall_seconds: started.elapsed().as_secs_f64(),
                })
                .map_err(ExpError::from)?;
        }
        if step % cfg.train.ckpt_every.max(1) == 0 && step < cfg.train.steps {
            save_trainer_ckpt(&paths, step, &model, &adam)?;
        }
        if let Some(threshold) = cfg.train.early_stop_accuracy {
            if step % cfg.train.eval_every.max(1) == 0 {
                let acc = greedy_token_accuracy(&model, &stop_sample, cfg.max_len)
                    .map_err(ExpError::from)?;
                final_accuracy = Some(acc);
                if acc >= threshold {
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    save_trainer_ckpt(&paths, step, &model, &adam)?;
    save_checkpoint(&paths.model_final(), &model.params)?;

    let elapsed = started.elapsed().as_secs_f64();
    let measured = meter.rate();
    let outcome = TrainOutcome {
        final_step: step,
        final_loss: last_loss,
        steps_per_sec: if measured > 0.0 {
            measured
        } else {
            (step - start_step) as f64 / elapsed.max(1e-9)
        },
        stopped_early,
        final_accuracy,
        dropped_pairs: dropped,
    };
    fs::write(
        paths.train_summary(),
        serde_json::to_string_pretty(&outcome).unwrap() + "\n",
    )?;
    Ok(outcome)
}

fn save_trainer_ckpt(paths: &RunPaths, step: u64, model: &Model<f32>, adam: &Adam<f32>) -> Result<()> {
    let mut combined = ParamSet::new();
    for (name, t) in model.params.iter() {
        combined.insert(name, t.clone())?;
    }
    let opt = adam.to_params(&model.params).map_err(ExpError::from)?;
    for (name, t) in opt.iter() {
        combined.insert(name, t.clone())?;
    }
    let tmp = paths.trainer_ckpt(step).with_extension("tmp");
    save_checkpoint(&tmp, &combined)?;
    fs::rename(&tmp, paths.trainer_ckpt(step))?;
    Ok(())
}

fn split_trainer_params(stored: &ParamSet<f32>) -> Result<(ParamSet<f32>, ParamSet<f32>)> {
    let mut model = ParamSet::new();
    let mut opt = ParamSet::new();
    for (name, t) in stored.iter() {
        if name.starts_with("opt.") {
            opt.insert(name, t.clone())?;
        } else {
            model.insert(name, t.clone())?;
        }
    }
    Ok((model, opt))
}

fn truncate_metrics(path: &Path, keep_up_to: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let text = fs::read_to_string(path)?;
    let mut kept = String::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| ExpError::Runtime(format!("bad metrics line: {e}")))?;
        let step = value.get("step").and_then(|s| s.as_u64()).unwrap_or(0);
        if step <= keep_up_to {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    fs::write(path, kept)?;
    Ok(())
}

/// Loads the final model of a finished run.
pub fn load_run_model(run_dir: &Path) -> Result<(ExperimentConfig, Model<f32>)> {
    let paths = RunPaths::new(run_dir);
    let cfg = ExperimentConfig::load(&paths.config())?;
    let model = load_model_for(&cfg, &paths.model_final())?;
    Ok((cfg, model))
}

/// Loads a model checkpoint against the configuration's registry layout.
pub fn load_model_for(cfg: &ExperimentConfig, ckpt: &Path) -> Result<Model<f32>> {
    let data = task_data(cfg)?;
    let model_cfg = cfg.model_config(data.src_vocab.len(), data.tgt_vocab.len());
    let params: ParamSet<f32> = load_checkpoint(ckpt)?;
    Ok(Model::from_params(model_cfg, params)?)
}

/// Decodes the held-out corpus and assembles the evaluation report. Returns
/// the per-sentence BLEU sufficient statistics alongside, for paired
/// significance testing.
pub fn eval_model(
    cfg: &ExperimentConfig,
    model: &Model<f32>,
    train_steps_per_sec: f64,
) -> Result<(EvalReport, Vec<BleuStats>)> {
    let data = task_data(cfg)?;
    let pairs = encoded_pairs(&data.eval_corpus, &data.src_vocab, &data.tgt_vocab);
    let mut hyps: Vec<Vec<usize>> = Vec::with_capacity(pairs.len());
    let mut meter = SpeedMeter::for_total(pairs.len());
    for (src, _) in &pairs {
        let scorer = ModelScorer::new(model, src);
        let hyp = if cfg.eval.beam <= 1 {
            greedy(&scorer, cfg.max_len).map_err(ExpError::from)?
        } else {
            beam(&scorer, cfg.eval.beam, cfg.eval.length_penalty, cfg.max_len)
                .map_err(ExpError::from)?
        };
        hyps.push(hyp);
        meter.tick();
    }
    let refs: Vec<Vec<usize>> = pairs.iter().map(|(_, t)| t.clone()).collect();
    let (corpus_bleu, per_sentence) = bleu(&hyps, &refs).map_err(ExpError::from)?;
    let stats: Vec<BleuStats> = hyps
        .iter()
        .zip(&refs)
        .map(|(h, r)| sentence_stats(h, r))
        .collect();
    let mut correct = 0usize;
    let mut total = 0usize;
    for (hyp, reference) in hyps.iter().zip(&refs) {
        total += reference.len().max(hyp.len());
        correct += hyp.iter().zip(reference).filter(|(h, r)| h == r).count();
    }
    let report = EvalReport {
        variant: model.config.variant.name().to_string(),
        corpus_bleu,
        per_sentence_bleu: per_sentence,
        token_accuracy: correct as f64 / total.max(1) as f64,
        decode_sentences_per_sec: meter.rate(),
        train_steps_per_sec,
        param_count: count_parameters(&model.config).total,
    };
    Ok((report, stats))
}

/// Evaluates a checkpoint and writes the report.
pub fn run_eval(cfg: &ExperimentConfig, ckpt: &Path, out: Option<&Path>) -> Result<EvalReport> {
    let model = load_model_for(cfg, ckpt)?;
    let steps_per_sec = ckpt
        .parent()
        .map(|dir| RunPaths::new(dir).train_summary())
        .filter(|p| p.exists())
        .and_then(|p| fs::read_to_string(p).ok())
        .and_then(|text| serde_json::from_str::<TrainOutcome>(&text).ok())
        .map(|o| o.steps_per_sec)
        .unwrap_or(0.0);
    let (report, _) = eval_model(cfg, &model, steps_per_sec)?;
    if let Some(path) = out {
        report.save(path).map_err(ExpError::from)?;
    }
    Ok(report)
}

/// Runs the 3-extractor × 3-task probing grid on a checkpoint and writes
/// the CSV. Every extractor must be supported by the checkpoint's variant.
pub fn run_probe(
    cfg: &ExperimentConfig,
    ckpt: &Path,
    out: Option<&Path>,
) -> Result<crate::train::ProbingGrid> {
    use crate::data::{gen_probe_bshif, gen_probe_selen, gen_probe_wc};
    use crate::train::{probing_suite, ALL_EXTRACTORS};
    let model = load_model_for(cfg, ckpt)?;
    let data = task_data(cfg)?;
    let seed = cfg.train.seed;
    let corpora = vec![
        gen_probe_selen(cfg.task.vocab, cfg.probe.size, seed),
        gen_probe_wc(cfg.task.vocab, cfg.probe.size, seed),
        gen_probe_bshif(cfg.task.vocab, cfg.probe.size, seed),
    ];
    let probe_cfg = ProbeConfig {
        hidden: cfg.probe.hidden,
        epochs: cfg.probe.epochs,
        seed,
        ..ProbeConfig::default()
    };
    let grid = probing_suite(&model, &data.src_vocab, &corpora, &probe_cfg, &ALL_EXTRACTORS)
        .map_err(ExpError::from)?;
    if let Some(path) = out {
        fs::write(path, grid.to_csv())?;
    }
    Ok(grid)
}
