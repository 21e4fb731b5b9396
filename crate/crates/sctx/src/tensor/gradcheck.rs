//! Finite-difference gradient verification.
//!
//! Central differences in 64-bit precision against tape gradients. The
//! relative error per scalar is `|analytic − numeric| / (|analytic| +
//! |numeric| + 1e-12)`; the report carries the max per parameter.
//!
//! The report also carries the forward pass's kink margin: the smallest
//! distance to a non-differentiable point (relu at 0, max-pool ties). A
//! margin comfortably above the probe step certifies that no probe interval
//! straddled a kink, i.e. the finite-difference estimate is valid everywhere.

use super::params::{ParamSet, WatchedParams};
use super::{Result, Tape, Tensor, TensorError};

#[derive(Debug, Clone)]
pub struct ParamError {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub per_param: Vec<ParamError>,
    pub max_rel_err: f64,
    pub worst_param: String,
    pub kink_margin: f64,
    pub tol: f64,
    pub pass: bool,
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "grad check: {} (max rel err {:.3e} at {}, tol {:.1e}, kink margin {:.3e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.max_rel_err,
            self.worst_param,
            self.tol,
            self.kink_margin,
        )?;
        for p in &self.per_param {
            writeln!(f, "  {:40} {:.3e}", p.name, p.max_rel_err)?;
        }
        Ok(())
    }
}

/// Checks tape gradients of a deterministic scalar function of `params`
/// against central differences with step `h`. Passes iff the max relative
/// error over all scalars stays below `tol`.
pub fn grad_check<F>(params: &ParamSet<f64>, h: f64, tol: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&WatchedParams<f64>, &Tape<f64>) -> Result<Tensor<f64>>,
{
    let tape = Tape::new();
    let watched = params.watch_all(&tape);
    let loss = f(&watched, &tape)?;
    if loss.len() != 1 {
        return Err(TensorError::Dimension {
            op: "grad_check",
            detail: format!("f must be scalar-valued, got {:?}", loss.shape()),
        });
    }
    if !loss.item().is_finite() {
        return Err(TensorError::NonFinite { op: "grad_check" });
    }
    let kink_margin = tape.kink_margin();
    let grads = tape.backward(&loss)?;

    let mut per_param = Vec::with_capacity(params.len());
    let mut max_rel_err = 0.0f64;
    let mut worst_param = String::new();
    for (name, tensor) in params.iter() {
        let analytic: Vec<f64> = grads
            .wrt(watched.get(name))
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; tensor.len()]);
        let mut worst = 0.0f64;
        let mut worst_index = 0usize;
        for idx in 0..tensor.len() {
            let fp = eval_at(params, name, idx, h, &f)?;
            let fm = eval_at(params, name, idx, -h, &f)?;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[idx];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
            if rel > worst {
                worst = rel;
                worst_index = idx;
            }
        }
        if worst > max_rel_err {
            max_rel_err = worst;
            worst_param = name.to_string();
        }
        per_param.push(ParamError {
            name: name.to_string(),
            max_rel_err: worst,
            worst_index,
        });
    }
    Ok(GradCheckReport {
        per_param,
        max_rel_err,
        worst_param,
        kink_margin,
        tol,
        pass: max_rel_err < tol,
    })
}

fn eval_at<F>(params: &ParamSet<f64>, name: &str, idx: usize, delta: f64, f: &F) -> Result<f64>
where
    F: Fn(&WatchedParams<f64>, &Tape<f64>) -> Result<Tensor<f64>>,
{
    let probed = params.with_perturbed(name, idx, delta)?;
    let tape = Tape::new();
    let watched = probed.watch_all(&tape);
    let loss = f(&watched, &tape)?;
    let v = loss.item();
    if !v.is_finite() {
        return Err(TensorError::NonFinite { op: "grad_check" });
    }
    Ok(v)
}
