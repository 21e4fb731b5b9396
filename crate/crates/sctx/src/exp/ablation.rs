//! The ablation grid: every variant plus the parameter-matched plain
//! baseline, trained and evaluated under one shared budget, with paired
//! bootstrap significance against both baselines.

use std::fs;
use std::path::Path;

use crate::model::{count_parameters, Variant};
use crate::train::{paired_bleu_bootstrap, BleuStats};

use super::runner::{eval_model, load_model_for, run_train, RunPaths};
use super::{ExpError, ExperimentConfig, Result};

#[derive(Debug, Clone, serde::Serialize)]
pub struct AblationRow {
    pub name: String,
    pub total_params: usize,
    pub delta_params: i64,
    pub train_steps_per_sec: f64,
    pub decode_sentences_per_sec: f64,
    pub bleu: f64,
    pub p_vs_vanilla: Option<f64>,
    pub p_vs_medium: Option<f64>,
}

/// Builds the per-row experiment config. `medium` is the plain model with
/// the decoder feed-forward width tripled; every other name is a variant.
fn row_config(base: &ExperimentConfig, name: &str) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    cfg.ablation.variants = vec![name.to_string()];
    if name == "medium" {
        cfg.variant = Variant::Vanilla;
        cfg.d_ff_dec = 3 * base.d_ff_dec;
        Ok(cfg)
    } else {
        cfg.variant =
            Variant::parse(name).map_err(|e| ExpError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

fn run_row(base: &ExperimentConfig, name: &str, out: &Path) -> Result<(AblationRow, Vec<BleuStats>)> {
    let cfg = row_config(base, name)?;
    let row_dir = out.join("rows").join(name);
    let outcome = run_train(&cfg, &row_dir)?;
    let model = load_model_for(&cfg, &RunPaths::new(&row_dir).model_final())?;
    let (report, stats) = eval_model(&cfg, &model, outcome.steps_per_sec)?;
    report
        .save(&RunPaths::new(&row_dir).eval_report())
        .map_err(ExpError::from)?;
    let total = count_parameters(&model.config).total;
    Ok((
        AblationRow {
            name: name.to_string(),
            total_params: total,
            delta_params: 0, // filled in relative to the vanilla row
            train_steps_per_sec: outcome.steps_per_sec,
            decode_sentences_per_sec: report.decode_sentences_per_sec,
            bleu: report.corpus_bleu,
            p_vs_vanilla: None,
            p_vs_medium: None,
        },
        stats,
    ))
}

fn thread_cap(rows: usize) -> usize {
    let available = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let cap = std::env::var("SCTX_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(available);
    cap.min(rows).max(1)
}

/// Trains and evaluates every grid row. Sequential by default for timing
/// fairness on a shared machine; `parallel` runs rows concurrently, capped
/// by `SCTX_THREADS`.
pub fn run_ablation(
    base: &ExperimentConfig,
    out: &Path,
    parallel: bool,
) -> Result<Vec<AblationRow>> {
    fs::create_dir_all(out)?;
    let names = base.ablation.variants.clone();
    // Validate all names up front.
    for name in &names {
        row_config(base, name)?;
    }
    let mut results: Vec<(AblationRow, Vec<BleuStats>)> = Vec::with_capacity(names.len());
    if parallel {
        let cap = thread_cap(names.len());
        for chunk in names.chunks(cap) {
            let mut wave: Vec<Result<(AblationRow, Vec<BleuStats>)>> = Vec::new();
            std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|name| scope.spawn(|| run_row(base, name, out)))
                    .collect();
                for handle in handles {
                    wave.push(handle.join().expect("ablation worker panicked"));
                }
            });
            for item in wave {
                results.push(item?);
            }
        }
    } else {
        for name in &names {
            results.push(run_row(base, name, out)?);
        }
    }

    // Deltas and significance are relative to the baselines in this grid.
    let vanilla_idx = names.iter().position(|n| n == "vanilla");
    let medium_idx = names.iter().position(|n| n == "medium");
    let resamples = base.ablation.bootstrap_resamples;
    let seed = base.train.seed ^ 0xB00;
    let baseline_total = vanilla_idx.map(|i| results[i].0.total_params);
    let vanilla_stats = vanilla_idx.map(|i| results[i].1.clone());
    let medium_stats = medium_idx.map(|i| results[i].1.clone());
    let mut rows = Vec::with_capacity(results.len());
    for (i, (mut row, stats)) in results.into_iter().enumerate() {
        if let Some(base_total) = baseline_total {
            row.delta_params = row.total_params as i64 - base_total as i64;
        }
        if let Some(vs) = &vanilla_stats {
            if Some(i) != vanilla_idx {
                row.p_vs_vanilla =
                    Some(paired_bleu_bootstrap(vs, &stats, resamples, seed).map_err(ExpError::from)?);
            }
        }
        if let Some(ms) = &medium_stats {
            if Some(i) != medium_idx {
                row.p_vs_medium =
                    Some(paired_bleu_bootstrap(ms, &stats, resamples, seed).map_err(ExpError::from)?);
            }
        }
        rows.push(row);
    }

    fs::write(out.join("ablation.csv"), to_csv(&rows))?;
    fs::write(out.join("ablation.txt"), to_table(&rows))?;
    Ok(rows)
}

pub fn to_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from(
        "variant,total_params,delta_params,train_steps_per_sec,decode_sentences_per_sec,bleu,p_vs_vanilla,p_vs_medium\n",
    );
    for r in rows {
        let p1 = r.p_vs_vanilla.map(|p| format!("{p:.4}")).unwrap_or_default();
        let p2 = r.p_vs_medium.map(|p| format!("{p:.4}")).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{:+},{:.3},{:.3},{:.2},{},{}\n",
            r.name,
            r.total_params,
            r.delta_params,
            r.train_steps_per_sec,
            r.decode_sentences_per_sec,
            r.bleu,
            p1,
            p2
        ));
    }
    s
}

pub fn to_table(rows: &[AblationRow]) -> String {
    let mut s = format!(
        "{:<14} {:>12} {:>10} {:>8} {:>8} {:>7} {:>10} {:>10}\n",
        "variant", "params", "Δparams", "steps/s", "sent/s", "BLEU", "p(vanilla)", "p(medium)"
    );
    for r in rows {
        let p1 = r
            .p_vs_vanilla
            .map(|p| format!("{p:.3}"))
            .unwrap_or_else(|| "-".into());
        let p2 = r
            .p_vs_medium
            .map(|p| format!("{p:.3}"))
            .unwrap_or_else(|| "-".into());
        s.push_str(&format!(
            "{:<14} {:>12} {:>+10} {:>8.2} {:>8.2} {:>7.2} {:>10} {:>10}\n",
            r.name,
            r.total_params,
            r.delta_params,
            r.train_steps_per_sec,
            r.decode_sentences_per_sec,
            r.bleu,
            p1,
            p2
        ));
    }
    s
}
