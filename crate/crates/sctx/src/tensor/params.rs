//! Named parameter registry.
//!
//! A `ParamSet` is the unit of checkpointing and optimization: an ordered
//! list of named tensors. Order is insertion order and is part of the
//! determinism contract (optimizer updates and checkpoint layout follow it).

use std::collections::HashMap;

use super::{Result, Scalar, Tape, Tensor, TensorError};

pub struct ParamSet<S: Scalar> {
    entries: Vec<(String, Tensor<S>)>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> Default for ParamSet<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Clone for ParamSet<S> {
    fn clone(&self) -> Self {
        ParamSet {
            entries: self.entries.clone(),
            index: self.index.clone(),
        }
    }
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        ParamSet {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<S>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::Format(format!("duplicate parameter {name}")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, t.detached()));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn set(&mut self, name: &str, t: Tensor<S>) -> Result<()> {
        match self.index.get(name) {
            Some(&i) => {
                if self.entries[i].1.shape() != t.shape() {
                    return Err(TensorError::Dimension {
                        op: "param_set",
                        detail: format!(
                            "{name}: {:?} vs {:?}",
                            self.entries[i].1.shape(),
                            t.shape()
                        ),
                    });
                }
                self.entries[i].1 = t.detached();
                Ok(())
            }
            None => Err(TensorError::Format(format!("unknown parameter {name}"))),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Registers every parameter on a tape and returns the tracked view.
    pub fn watch_all(&self, tape: &Tape<S>) -> WatchedParams<S> {
        let mut map = HashMap::with_capacity(self.entries.len());
        for (name, t) in &self.entries {
            map.insert(name.clone(), tape.watch(t));
        }
        WatchedParams { map }
    }

    /// Copy with one scalar nudged by `delta` (finite-difference probes).
    pub fn with_perturbed(&self, name: &str, idx: usize, delta: S) -> Result<ParamSet<S>> {
        let mut out = self.clone();
        let t = out.get(name).ok_or_else(|| {
            TensorError::Format(format!("unknown parameter {name}"))
        })?;
        if idx >= t.len() {
            return Err(TensorError::Index {
                op: "with_perturbed",
                index: idx,
                bound: t.len(),
            });
        }
        let mut data = t.to_vec();
        data[idx] += delta;
        let shape = t.shape().to_vec();
        out.set(name, Tensor::new(shape, data)?)?;
        Ok(out)
    }

    pub fn cast<T: Scalar>(&self) -> ParamSet<T> {
        let mut out = ParamSet::new();
        for (name, t) in &self.entries {
            out.insert(name.clone(), t.cast::<T>()).unwrap();
        }
        out
    }

    /// Bytewise equality of shapes and values, in order.
    pub fn bit_identical(&self, other: &ParamSet<S>) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| {
                a.0 == b.0
                    && a.1.shape() == b.1.shape()
                    && a.1
                        .data()
                        .iter()
                        .zip(b.1.data())
                        .all(|(x, y)| x.as_f64().to_bits() == y.as_f64().to_bits())
            })
    }
}

/// Tape-tracked view of a `ParamSet` for one forward pass.
pub struct WatchedParams<S: Scalar> {
    map: HashMap<String, Tensor<S>>,
}

impl<S: Scalar> WatchedParams<S> {
    /// Panics on unknown names: parameter naming is an internal invariant.
    pub fn get(&self, name: &str) -> &Tensor<S> {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not registered"))
    }

    pub fn try_get(&self, name: &str) -> Option<&Tensor<S>> {
        self.map.get(name)
    }
}
