//! Experiment configuration: flat `key = value` text with `[section]`
//! headers. No quoting, no nesting; `#` starts a comment line. The format
//! is written back canonically so a run directory always carries the exact
//! configuration it ran with.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::{TaskKind, TaskSpec};
use crate::model::{GlobalKind, ModelConfig, Variant};

use super::ExpError;

type Result<T> = std::result::Result<T, ExpError>;

#[derive(Debug, Clone)]
pub struct TrainSection {
    pub steps: u64,
    pub batch_size: usize,
    pub warmup: usize,
    pub lr_scale: f64,
    pub label_smoothing: f64,
    pub log_every: u64,
    pub ckpt_every: u64,
    pub eval_every: u64,
    pub early_stop_accuracy: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct EvalSection {
    pub beam: usize,
    pub length_penalty: f64,
}

#[derive(Debug, Clone)]
pub struct AblationSection {
    pub variants: Vec<String>,
    pub bootstrap_resamples: usize,
}

#[derive(Debug, Clone)]
pub struct ProbeSection {
    pub size: usize,
    pub hidden: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub deep_global: GlobalKind,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff_enc: usize,
    pub d_ff_dec: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub task: TaskSpec,
    pub train_pairs: usize,
    pub eval_pairs: usize,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub ablation: AblationSection,
    pub probe: ProbeSection,
}

impl ExperimentConfig {
    /// Model hyperparameters with the vocabulary sizes filled in (they come
    /// from the generated corpus, not the config file).
    pub fn model_config(&self, vocab_src: usize, vocab_tgt: usize) -> ModelConfig {
        ModelConfig {
            vocab_src,
            vocab_tgt,
            d_model: self.d_model,
            n_heads: self.n_heads,
            d_ff_enc: self.d_ff_enc,
            d_ff_dec: self.d_ff_dec,
            n_enc_layers: self.n_enc_layers,
            n_dec_layers: self.n_dec_layers,
            dropout: self.dropout,
            variant: self.variant,
            deep_global: self.deep_global,
            max_len: self.max_len,
            seed: self.train.seed,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let map = KeyMap::parse(text)?;
        let cfg = ExperimentConfig {
            variant: Variant::parse(&map.get_or("model", "variant", "vanilla")?)
                .map_err(|e| ExpError::Config(e.to_string()))?,
            deep_global: GlobalKind::parse(&map.get_or("model", "deep_global", "att")?)
                .map_err(|e| ExpError::Config(e.to_string()))?,
            d_model: map.parse_or("model", "d_model", 64)?,
            n_heads: map.parse_or("model", "n_heads", 4)?,
            d_ff_enc: map.parse_or("model", "d_ff_enc", 128)?,
            d_ff_dec: map.parse_or("model", "d_ff_dec", 128)?,
            n_enc_layers: map.parse_or("model", "n_enc_layers", 2)?,
            n_dec_layers: map.parse_or("model", "n_dec_layers", 2)?,
            dropout: map.parse_or("model", "dropout", 0.1)?,
            max_len: map.parse_or("model", "max_len", 64)?,
            task: TaskSpec {
                kind: TaskKind::parse(&map.require("task", "kind")?)
                    .map_err(|e| ExpError::Config(e.to_string()))?,
                vocab: map.parse_or("task", "vocab", 20)?,
                min_len: map.parse_or("task", "min_len", 1)?,
                max_len: map.parse_or("task", "max_len", 12)?,
            },
            train_pairs: map.parse_or("task", "train_pairs", 5000)?,
            eval_pairs: map.parse_or("task", "eval_pairs", 200)?,
            train: TrainSection {
                steps: map.parse_require("train", "steps")?,
                batch_size: map.parse_or("train", "batch_size", 32)?,
                warmup: map.parse_or("train", "warmup", 400)?,
                lr_scale: map.parse_or("train", "lr_scale", 1.0)?,
                label_smoothing: map.parse_or("train", "label_smoothing", 0.1)?,
                log_every: map.parse_or("train", "log_every", 100)?,
                ckpt_every: map.parse_or("train", "ckpt_every", 1000)?,
                eval_every: map.parse_or("train", "eval_every", 150)?,
                early_stop_accuracy: map.parse_optional("train", "early_stop_accuracy")?,
                seed: map.parse_require("train", "seed")?,
            },
            eval: EvalSection {
                beam: map.parse_or("eval", "beam", 1)?,
                length_penalty: map.parse_or("eval", "length_penalty", 0.6)?,
            },
            ablation: AblationSection {
                variants: map
                    .get_or(
                        "ablation",
                        "variants",
                        "vanilla, medium, shallow-mean, shallow-max, shallow-att, deep-rnn, deep-tam",
                    )?
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect(),
                bootstrap_resamples: map.parse_or("ablation", "bootstrap_resamples", 1000)?,
            },
            probe: ProbeSection {
                size: map.parse_or("probe", "size", 600)?,
                hidden: map.parse_or("probe", "hidden", 64)?,
                epochs: map.parse_or("probe", "epochs", 40)?,
            },
        };
        map.reject_unknown()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExpError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical text form; `parse(to_text(c))` reproduces `c`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("[model]\n");
        s.push_str(&format!("variant = {}\n", self.variant.name()));
        s.push_str(&format!("deep_global = {}\n", self.deep_global.name()));
        s.push_str(&format!("d_model = {}\n", self.d_model));
        s.push_str(&format!("n_heads = {}\n", self.n_heads));
        s.push_str(&format!("d_ff_enc = {}\n", self.d_ff_enc));
        s.push_str(&format!("d_ff_dec = {}\n", self.d_ff_dec));
        s.push_str(&format!("n_enc_layers = {}\n", self.n_enc_layers));
        s.push_str(&format!("n_dec_layers = {}\n", self.n_dec_layers));
        s.push_str(&format!("dropout = {}\n", self.dropout));
        s.push_str(&format!("max_len = {}\n", self.max_len));
        s.push_str("\n[task]\n");
        s.push_str(&format!("kind = {}\n", self.task.kind.name()));
        s.push_str(&format!("vocab = {}\n", self.task.vocab));
        s.push_str(&format!("min_len = {}\n", self.task.min_len));
        s.push_str(&format!("max_len = {}\n", self.task.max_len));
        s.push_str(&format!("train_pairs = {}\n", self.train_pairs));
        s.push_str(&format!("eval_pairs = {}\n", self.eval_pairs));
        s.push_str("\n[train]\n");
        s.push_str(&format!("steps = {}\n", self.train.steps));
        s.push_str(&format!("batch_size = {}\n", self.train.batch_size));
        s.push_str(&format!("warmup = {}\n", self.train.warmup));
        s.push_str(&format!("lr_scale = {}\n", self.train.lr_scale));
        s.push_str(&format!("label_smoothing = {}\n", self.train.label_smoothing));
        s.push_str(&format!("log_every = {}\n", self.train.log_every));
        s.push_str(&format!("ckpt_every = {}\n", self.train.ckpt_every));
        s.push_str(&format!("eval_every = {}\n", self.train.eval_every));
        if let Some(acc) = self.train.early_stop_accuracy {
            s.push_str(&format!("early_stop_accuracy = {acc}\n"));
        }
        s.push_str(&format!("seed = {}\n", self.train.seed));
        s.push_str("\n[eval]\n");
        s.push_str(&format!("beam = {}\n", self.eval.beam));
        s.push_str(&format!("length_penalty = {}\n", self.eval.length_penalty));
        s.push_str("\n[ablation]\n");
        s.push_str(&format!("variants = {}\n", self.ablation.variants.join(", ")));
        s.push_str(&format!(
            "bootstrap_resamples = {}\n",
            self.ablation.bootstrap_resamples
        ));
        s.push_str("\n[probe]\n");
        s.push_str(&format!("size = {}\n", self.probe.size));
        s.push_str(&format!("hidden = {}\n", self.probe.hidden));
        s.push_str(&format!("epochs = {}\n", self.probe.epochs));
        s
    }
}

/// Section-qualified key/value store with line diagnostics.
struct KeyMap {
    entries: BTreeMap<(String, String), (String, usize)>,
    consumed: std::cell::RefCell<std::collections::HashSet<(String, String)>>,
}

impl KeyMap {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                if section.is_empty() {
                    return Err(ExpError::Parse {
                        line: line_no,
                        message: "empty section name".into(),
                    });
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ExpError::Parse {
                    line: line_no,
                    message: format!("expected `key = value`, got {line:?}"),
                });
            };
            if section.is_empty() {
                return Err(ExpError::Parse {
                    line: line_no,
                    message: "key outside any [section]".into(),
                });
            }
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(ExpError::Parse {
                    line: line_no,
                    message: "empty key".into(),
                });
            }
            let prev = entries.insert(
                (section.clone(), key.clone()),
                (value.trim().to_string(), line_no),
            );
            if prev.is_some() {
                return Err(ExpError::Parse {
                    line: line_no,
                    message: format!("duplicate key [{section}] {key}"),
                });
            }
        }
        Ok(KeyMap {
            entries,
            consumed: Default::default(),
        })
    }

    fn mark(&self, section: &str, key: &str) {
        self.consumed
            .borrow_mut()
            .insert((section.to_string(), key.to_string()));
    }

    fn get(&self, section: &str, key: &str) -> Option<String> {
        self.mark(section, key);
        self.entries
            .get(&(section.to_string(), key.to_string()))
            .map(|(v, _)| v.clone())
    }

    fn require(&self, section: &str, key: &str) -> Result<String> {
        self.get(section, key).ok_or_else(|| {
            ExpError::Config(format!("missing required key [{section}] {key}"))
        })
    }

    fn get_or(&self, section: &str, key: &str, default: &str) -> Result<String> {
        Ok(self.get(section, key).unwrap_or_else(|| default.to_string()))
    }

    fn parse_value<T: std::str::FromStr>(&self, section: &str, key: &str, v: &str) -> Result<T> {
        let line = self
            .entries
            .get(&(section.to_string(), key.to_string()))
            .map(|(_, l)| *l)
            .unwrap_or(0);
        v.parse().map_err(|_| ExpError::Parse {
            line,
            message: format!("[{section}] {key}: cannot parse {v:?}"),
        })
    }

    fn parse_require<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<T> {
        let v = self.require(section, key)?;
        self.parse_value(section, key, &v)
    }

    fn parse_or<T: std::str::FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        match self.get(section, key) {
            Some(v) => self.parse_value(section, key, &v),
            None => Ok(default),
        }
    }

    fn parse_optional<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            Some(v) => Ok(Some(self.parse_value(section, key, &v)?)),
            None => Ok(None),
        }
    }

    fn reject_unknown(&self) -> Result<()> {
        let consumed = self.consumed.borrow();
        for ((section, key), (_, line)) in &self.entries {
            if !consumed.contains(&(section.clone(), key.clone())) {
                return Err(ExpError::Parse {
                    line: *line,
                    message: format!("unknown key [{section}] {key}"),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[task]\nkind = copy\n\n[train]\nsteps = 100\nseed = 7\n";

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.train.steps, 100);
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.d_model, 64);
        assert_eq!(cfg.ablation.variants.len(), 7);
    }

    #[test]
    fn missing_required_key_names_the_key() {
        let err = ExperimentConfig::parse("[task]\nkind = copy\n[train]\nseed = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[train] steps"), "{msg}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = ExperimentConfig::parse("[task]\nkind copy\n").unwrap_err();
        match err {
            ExpError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = format!("{MINIMAL}\n[train]\n");
        // Reuse a valid config but add a stray key.
        let text = text.replace("[train]\nsteps", "[train]\nstepz = 3\nsteps");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("stepz"), "{err}");
    }

    #[test]
    fn canonical_round_trip() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        let text = cfg.to_text();
        let cfg2 = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(text, cfg2.to_text());
    }
}
