//! Representation probing: a one-hidden-layer classifier over frozen
//! sentence vectors, and the probing grid over extractors × tasks.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::context;
use crate::data::{derive_seed, ProbeCorpus, Vocab};
use crate::model::{Mode, Model, ParamsView, Variant};
use crate::tensor::{Ids, Mask, ParamSet, Scalar, Tape, Tensor};

use super::optim::{Adam, AdamConfig};
use super::{Result, TrainError};

#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            hidden: 64,
            epochs: 40,
            batch: 32,
            warmup: 60,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub accuracy: f64,
    pub majority_baseline: f64,
    pub classes: usize,
}

/// Trains the probe on an 80/10/10 seeded split and reports test accuracy
/// at the best validation epoch, plus the majority-class baseline.
pub fn probe(reps: &[Vec<f64>], labels: &[usize], cfg: &ProbeConfig) -> Result<ProbeReport> {
    if reps.len() != labels.len() || reps.is_empty() {
        return Err(TrainError::Input(format!(
            "{} representations vs {} labels",
            reps.len(),
            labels.len()
        )));
    }
    let classes = labels.iter().max().unwrap() + 1;
    if labels.iter().collect::<std::collections::HashSet<_>>().len() < 2 {
        return Err(TrainError::Input(
            "probing needs at least two distinct classes".into(),
        ));
    }
    let n = reps.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x5911));
    order.shuffle(&mut rng);
    let n_train = (n * 8) / 10;
    let n_val = n / 10;
    let (train_idx, rest) = order.split_at(n_train.max(1));
    let (val_idx, test_idx) = rest.split_at(n_val.min(rest.len().saturating_sub(1)).max(1));
    for (name, split) in [("train", train_idx), ("validation", val_idx), ("test", test_idx)] {
        let distinct: std::collections::HashSet<usize> =
            split.iter().map(|&i| labels[i]).collect();
        if distinct.len() < 2 {
            return Err(TrainError::Input(format!(
                "{name} split holds fewer than two classes"
            )));
        }
    }

    let d = reps[0].len();
    let mut params: ParamSet<f64> = ParamSet::new();
    {
        let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x1A1));
        use rand::Rng;
        let mut mat = |r: usize, c: usize| {
            let limit = (6.0 / (r + c) as f64).sqrt();
            let data: Vec<f64> = (0..r * c).map(|_| init_rng.random_range(-limit..limit)).collect();
            Tensor::new(vec![r, c], data).unwrap()
        };
        params.insert("w1", mat(d, cfg.hidden))?;
        params.insert("b1", Tensor::zeros(vec![cfg.hidden]))?;
        params.insert("w2", mat(cfg.hidden, classes))?;
        params.insert("b2", Tensor::zeros(vec![classes]))?;
    }
    let mut adam = Adam::new(&params, AdamConfig::for_model(cfg.hidden, cfg.warmup));

    let tensor_of = |idx: &[usize]| -> Tensor<f64> {
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(&reps[i]);
        }
        Tensor::new(vec![idx.len(), d], data).unwrap()
    };
    let labels_of = |idx: &[usize]| Ids::from_slice(&idx.iter().map(|&i| labels[i]).collect::<Vec<_>>());

    let eval_acc = |params: &ParamSet<f64>, idx: &[usize]| -> Result<f64> {
        let x = tensor_of(idx);
        let pv_x = x;
        let h = pv_x
            .matmul(params.get("w1").unwrap())?
            .add_bias(params.get("b1").unwrap())?
            .relu()?;
        let logits = h
            .matmul(params.get("w2").unwrap())?
            .add_bias(params.get("b2").unwrap())?;
        let mut correct = 0usize;
        for (r, &i) in idx.iter().enumerate() {
            let row = &logits.data()[r * classes..(r + 1) * classes];
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            if best == labels[i] {
                correct += 1;
            }
        }
        Ok(correct as f64 / idx.len() as f64)
    };

    let mut best_val = f64::NEG_INFINITY;
    let mut best_test = 0.0;
    let mut step_seed = derive_seed(cfg.seed, 0xD0);
    for epoch in 0..cfg.epochs {
        let mut epoch_order = train_idx.to_vec();
        let mut ernd = ChaCha8Rng::seed_from_u64(derive_seed(step_seed, epoch as u64));
        epoch_order.shuffle(&mut ernd);
        for chunk in epoch_order.chunks(cfg.batch) {
            let tape: Tape<f64> = Tape::new();
            let watched = params.watch_all(&tape);
            let x = tensor_of(chunk);
            let h = x
                .matmul(watched.get("w1"))?
                .add_bias(watched.get("b1"))?
                .relu()?;
            let logits = h.matmul(watched.get("w2"))?.add_bias(watched.get("b2"))?;
            let mask = Mask::all_true(vec![chunk.len()]);
            let loss = logits.cross_entropy(&labels_of(chunk), &mask, 0.0)?;
            let grads = tape.backward(&loss)?;
            adam.apply(&mut params, &grads, &watched)?;
        }
        step_seed = step_seed.wrapping_add(1);
        let val = eval_acc(&params, val_idx)?;
        if val > best_val {
            best_val = val;
            best_test = eval_acc(&params, test_idx)?;
        }
    }

    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    let majority = *counts.iter().max().unwrap() as f64 / n as f64;
    Ok(ProbeReport {
        accuracy: best_test,
        majority_baseline: majority,
        classes,
    })
}

/// Which frozen vector the probe reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extractor {
    /// Mean-pooled top encoder layer (available for every variant).
    PooledTop,
    /// The top-layer sentence summary (shallow context, or the deep
    /// variants' top-layer summary).
    ShallowG,
    /// The aggregated deep context vector (deep variants only).
    DeepG,
}

pub const ALL_EXTRACTORS: [Extractor; 3] = [
    Extractor::PooledTop,
    Extractor::ShallowG,
    Extractor::DeepG,
];

impl Extractor {
    pub fn name(&self) -> &'static str {
        match self {
            Extractor::PooledTop => "pooled-top",
            Extractor::ShallowG => "shallow-g",
            Extractor::DeepG => "deep-g",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pooled-top" => Ok(Extractor::PooledTop),
            "shallow-g" => Ok(Extractor::ShallowG),
            "deep-g" => Ok(Extractor::DeepG),
            other => Err(TrainError::Input(format!(
                "unknown extractor {other:?} (pooled-top | shallow-g | deep-g)"
            ))),
        }
    }

    pub fn supported_by(&self, variant: Variant) -> bool {
        match self {
            Extractor::PooledTop => true,
            Extractor::ShallowG => variant.uses_context(),
            Extractor::DeepG => variant.is_deep(),
        }
    }
}

/// Extracts the chosen representation for each sentence.
pub fn extract_representations<S: Scalar>(
    model: &Model<S>,
    extractor: Extractor,
    sentences: &[Vec<String>],
    vocab: &Vocab,
) -> Result<Vec<Vec<f64>>> {
    if !extractor.supported_by(model.config.variant) {
        return Err(TrainError::Config(format!(
            "extractor {} requires a {} variant, checkpoint is {}",
            extractor.name(),
            if extractor == Extractor::DeepG {
                "deep"
            } else {
                "context"
            },
            model.config.variant.name()
        )));
    }
    let cfg = &model.config;
    let pv = ParamsView::Raw(&model.params);
    let mut out = Vec::with_capacity(sentences.len());
    for sentence in sentences {
        let ids = vocab.encode(sentence);
        let n = ids.len();
        let src = Ids::new(vec![1, n], ids)?;
        let mask = Mask::from_lens(&[n], n);
        let enc = model.encode_detached(&src, &mask)?;
        let vec = match extractor {
            Extractor::PooledTop => enc.top().mean_pool(&enc.pad)?,
            Extractor::ShallowG => {
                if cfg.variant.is_deep() {
                    let summaries =
                        context::summarize_layers(cfg, pv, &enc, Mode::eval(), &mut None)?;
                    summaries.last().unwrap().clone()
                } else {
                    context::static_context(cfg, pv, &enc, Mode::eval(), &mut None)?
                        .expect("context variant")
                }
            }
            Extractor::DeepG => match cfg.variant {
                Variant::DeepRnn => context::static_context(cfg, pv, &enc, Mode::eval(), &mut None)?
                    .expect("deep variant"),
                Variant::DeepTam => {
                    // Source-only vector: condition on the first layer's
                    // learned start state.
                    let summaries =
                        context::summarize_layers(cfg, pv, &enc, Mode::eval(), &mut None)?;
                    let gstack = context::stack_summaries(&summaries)?;
                    let start = pv.get("ctx.tam.0.start").expand_time(1)?;
                    let (g, _beta) = context::tam_step(pv, 0, &start, &gstack, &mut None)?;
                    g
                }
                _ => unreachable!("guarded by supported_by"),
            },
        };
        out.push(vec.data().iter().map(|v| v.as_f64()).collect());
    }
    Ok(out)
}

/// Accuracy grid: rows are extractors, columns are probing tasks.
#[derive(Debug, Clone)]
pub struct ProbingGrid {
    pub tasks: Vec<String>,
    pub rows: Vec<(String, Vec<ProbeReport>)>,
}

impl ProbingGrid {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("extractor");
        for t in &self.tasks {
            out.push(',');
            out.push_str(t);
        }
        out.push('\n');
        for (name, cells) in &self.rows {
            out.push_str(name);
            for report in cells {
                out.push_str(&format!(",{:.4}", report.accuracy));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs every supported extractor over every probing task.
pub fn probing_suite<S: Scalar>(
    model: &Model<S>,
    vocab: &Vocab,
    corpora: &[ProbeCorpus],
    cfg: &ProbeConfig,
    extractors: &[Extractor],
) -> Result<ProbingGrid> {
    let tasks = corpora.iter().map(|c| c.name.clone()).collect();
    let mut rows = Vec::new();
    for &ex in extractors {
        let mut cells = Vec::new();
        for corpus in corpora {
            let reps = extract_representations(model, ex, &corpus.sentences, vocab)?;
            cells.push(probe(&reps, &corpus.labels, cfg)?);
        }
        rows.push((ex.name().to_string(), cells));
    }
    Ok(ProbingGrid { tasks, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn constant_labels_are_rejected() {
        let reps = vec![vec![0.0; 4]; 10];
        let labels = vec![1usize; 10];
        assert!(probe(&reps, &labels, &ProbeConfig::default()).is_err());
    }

    #[test]
    fn linearly_separable_data_reaches_high_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut reps = Vec::new();
        let mut labels = Vec::new();
        for i in 0..240 {
            let class = i % 2;
            let center = if class == 0 { 1.5 } else { -1.5 };
            reps.push(
                (0..8)
                    .map(|j| center * if j % 2 == 0 { 1.0 } else { -0.5 } + rng.random_range(-0.3..0.3))
                    .collect(),
            );
            labels.push(class);
        }
        let report = probe(&reps, &labels, &ProbeConfig::default()).unwrap();
        assert!(report.accuracy >= 0.99, "{report:?}");
    }

    #[test]
    fn random_representations_stay_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reps: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..300).map(|i| i % 2).collect();
        let report = probe(&reps, &labels, &ProbeConfig::default()).unwrap();
        assert!(
            (report.accuracy - 0.5).abs() <= 0.1,
            "accuracy {}",
            report.accuracy
        );
    }

    #[test]
    fn probe_is_reproducible_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let reps: Vec<Vec<f64>> = (0..120)
            .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..120).map(|i| (i / 3) % 2).collect();
        let a = probe(&reps, &labels, &ProbeConfig::default()).unwrap();
        let b = probe(&reps, &labels, &ProbeConfig::default()).unwrap();
        assert_eq!(a.accuracy.to_bits(), b.accuracy.to_bits());
    }
}
