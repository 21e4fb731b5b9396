//! Adam with the inverse-square-root warmup schedule.

use crate::tensor::{Grads, ParamSet, Scalar, Tensor, WatchedParams};

use super::{Result, TrainError};

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Schedule reference width (the model width).
    pub d_model: usize,
    pub warmup: usize,
    pub lr_scale: f64,
}

impl AdamConfig {
    pub fn for_model(d_model: usize, warmup: usize) -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
            d_model,
            warmup,
            lr_scale: 1.0,
        }
    }
}

/// First/second moment buffers aligned with the parameter registry order.
pub struct Adam<S: Scalar> {
    pub cfg: AdamConfig,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
    step: u64,
}

impl<S: Scalar> Adam<S> {
    pub fn new(params: &ParamSet<S>, cfg: AdamConfig) -> Self {
        let m = params.iter().map(|(_, t)| vec![S::zero(); t.len()]).collect();
        let v = params.iter().map(|(_, t)| vec![S::zero(); t.len()]).collect();
        Adam {
            cfg,
            m,
            v,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// `rate(step) = scale · d^(−1/2) · min(step^(−1/2), step · warmup^(−3/2))`,
    /// peaking exactly at `step == warmup`.
    pub fn rate(&self, step: u64) -> f64 {
        let s = step.max(1) as f64;
        let w = self.cfg.warmup.max(1) as f64;
        self.cfg.lr_scale * (self.cfg.d_model as f64).powf(-0.5) * s.sqrt().recip().min(s * w.powf(-1.5))
    }

    /// One update over every parameter, in registry order.
    pub fn apply(
        &mut self,
        params: &mut ParamSet<S>,
        grads: &Grads<S>,
        watched: &WatchedParams<S>,
    ) -> Result<()> {
        self.step += 1;
        let lr = self.rate(self.step);
        let b1 = S::from_f64(self.cfg.beta1);
        let b2 = S::from_f64(self.cfg.beta2);
        let eps = S::from_f64(self.cfg.eps);
        let c1 = S::from_f64(1.0 - self.cfg.beta1.powi(self.step as i32));
        let c2 = S::from_f64(1.0 - self.cfg.beta2.powi(self.step as i32));
        let lr_s = S::from_f64(lr);
        let one = S::one();
        let names: Vec<String> = params.names().map(|s| s.to_string()).collect();
        for (idx, name) in names.iter().enumerate() {
            let tensor = params.get(name).unwrap();
            let zero_grad;
            let g = match grads.wrt(watched.get(name)) {
                Some(g) => g,
                None => {
                    zero_grad = vec![S::zero(); tensor.len()];
                    &zero_grad[..]
                }
            };
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            let mut data = tensor.to_vec();
            for j in 0..data.len() {
                m[j] = b1 * m[j] + (one - b1) * g[j];
                v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                data[j] = data[j] - lr_s * mhat / (vhat.sqrt() + eps);
            }
            let shape = tensor.shape().to_vec();
            params.set(name, Tensor::new(shape, data)?)?;
        }
        Ok(())
    }

    /// Serializes moments and step counter as checkpoint entries.
    pub fn to_params(&self, params: &ParamSet<S>) -> Result<ParamSet<S>> {
        let mut out = ParamSet::new();
        out.insert("opt.step", Tensor::new(vec![1], vec![S::from_f64(self.step as f64)])?)?;
        for (idx, (name, t)) in params.iter().enumerate() {
            out.insert(
                format!("opt.m.{name}"),
                Tensor::new(t.shape().to_vec(), self.m[idx].clone())?,
            )?;
            out.insert(
                format!("opt.v.{name}"),
                Tensor::new(t.shape().to_vec(), self.v[idx].clone())?,
            )?;
        }
        Ok(out)
    }

    pub fn from_params(params: &ParamSet<S>, cfg: AdamConfig, stored: &ParamSet<S>) -> Result<Self> {
        let step = stored
            .get("opt.step")
            .ok_or_else(|| TrainError::Input("optimizer state lacks opt.step".into()))?
            .item()
            .as_f64() as u64;
        let mut m = Vec::with_capacity(params.len());
        let mut v = Vec::with_capacity(params.len());
        for (name, t) in params.iter() {
            let ms = stored
                .get(&format!("opt.m.{name}"))
                .ok_or_else(|| TrainError::Input(format!("optimizer state lacks m for {name}")))?;
            let vs = stored
                .get(&format!("opt.v.{name}"))
                .ok_or_else(|| TrainError::Input(format!("optimizer state lacks v for {name}")))?;
            if ms.shape() != t.shape() || vs.shape() != t.shape() {
                return Err(TrainError::Input(format!("optimizer state shape mismatch for {name}")));
            }
            m.push(ms.to_vec());
            v.push(vs.to_vec());
        }
        Ok(Adam { cfg, m, v, step })
    }
}
