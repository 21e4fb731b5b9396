//! Metrics stream (JSON lines), evaluation reports, speed measurement.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Result, TrainError};

/// One training log event.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    #[serde(rename = "wall-seconds")]
    pub wall_seconds: f64,
}

/// Append-only JSON-lines sink.
pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(MetricsWriter {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn append(path: &Path) -> Result<Self> {
        Ok(MetricsWriter {
            out: BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?),
        })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)
            .map_err(|e| TrainError::Input(format!("metrics serialization: {e}")))?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Metrics file with volatile wall-clock fields zeroed, for determinism
/// comparisons: everything the run computes must be bit-identical, only
/// elapsed real time may differ.
pub fn canonical_metrics_bytes(path: &Path) -> Result<Vec<u8>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| TrainError::Input(format!("bad metrics line: {e}")))?;
        if let Some(obj) = value.as_object_mut() {
            if obj.contains_key("wall-seconds") {
                obj.insert("wall-seconds".to_string(), serde_json::json!(0.0));
            }
        }
        out.extend_from_slice(value.to_string().as_bytes());
        out.push(b'\n');
    }
    Ok(out)
}

/// Evaluation summary for one trained model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub corpus_bleu: f64,
    pub per_sentence_bleu: Vec<f64>,
    pub token_accuracy: f64,
    pub decode_sentences_per_sec: f64,
    pub train_steps_per_sec: f64,
    pub param_count: usize,
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| TrainError::Input(format!("report serialization: {e}")))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| TrainError::Input(format!("bad report: {e}")))
    }
}

/// Throughput as the median over timed windows, excluding the first
/// (cache-warming) window.
pub struct SpeedMeter {
    window: usize,
    in_window: usize,
    window_start: Instant,
    rates: Vec<f64>,
}

impl SpeedMeter {
    /// `window` = number of items per timed window.
    pub fn new(window: usize) -> Self {
        SpeedMeter {
            window: window.max(1),
            in_window: 0,
            window_start: Instant::now(),
            rates: Vec::new(),
        }
    }

    /// Splits `total` items into the canonical six windows.
    pub fn for_total(total: usize) -> Self {
        Self::new((total / 6).max(1))
    }

    pub fn tick(&mut self) {
        self.in_window += 1;
        if self.in_window == self.window {
            let dt = self.window_start.elapsed().as_secs_f64();
            self.rates.push(self.window as f64 / dt.max(1e-9));
            self.in_window = 0;
            self.window_start = Instant::now();
        }
    }

    /// Median items/second over completed windows after the first.
    pub fn rate(&self) -> f64 {
        let usable = if self.rates.len() > 1 {
            &self.rates[1..]
        } else {
            &self.rates[..]
        };
        if usable.is_empty() {
            return 0.0;
        }
        let mut sorted = usable.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted[sorted.len() / 2]
    }
}
