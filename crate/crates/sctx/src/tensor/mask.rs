//! Boolean masks for padding and causal attention.
//!
//! Masks are plain bool buffers, never differentiated. A `true` entry marks
//! a position that participates; `false` marks padding or a forbidden
//! attention edge.

use super::{Result, TensorError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    shape: Vec<usize>,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(shape: Vec<usize>, data: Vec<bool>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(TensorError::Dimension {
                op: "mask",
                detail: format!("shape {shape:?} implies {n} entries, got {}", data.len()),
            });
        }
        Ok(Mask { shape, data })
    }

    pub fn all_true(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Mask {
            shape,
            data: vec![true; n],
        }
    }

    /// `[len]` mask with the first `real` entries true (suffix padding).
    pub fn prefix(real: usize, len: usize) -> Self {
        Mask {
            shape: vec![len],
            data: (0..len).map(|i| i < real).collect(),
        }
    }

    /// `[B, len]` mask from per-row real lengths.
    pub fn from_lens(lens: &[usize], len: usize) -> Self {
        let mut data = Vec::with_capacity(lens.len() * len);
        for &r in lens {
            data.extend((0..len).map(|i| i < r));
        }
        Mask {
            shape: vec![lens.len(), len],
            data,
        }
    }

    /// Square `[t, t]` lower-triangular mask: query i may see keys j <= i.
    pub fn causal(t: usize) -> Self {
        let mut data = vec![false; t * t];
        for i in 0..t {
            for j in 0..=i {
                data[i * t + j] = true;
            }
        }
        Mask {
            shape: vec![t, t],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, idx: usize) -> bool {
        self.data[idx]
    }

    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Elementwise conjunction; shapes must match.
    pub fn and(&self, other: &Mask) -> Result<Mask> {
        if self.shape != other.shape {
            return Err(TensorError::Dimension {
                op: "mask_and",
                detail: format!("{:?} vs {:?}", self.shape, other.shape),
            });
        }
        Ok(Mask {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a && b)
                .collect(),
        })
    }

    /// Expands a `[B, Tk]` key mask to `[B, Tq, Tk]` attention shape.
    pub fn broadcast_rows(&self, t_q: usize) -> Result<Mask> {
        if self.shape.len() != 2 {
            return Err(TensorError::Dimension {
                op: "mask_broadcast_rows",
                detail: format!("expected rank-2 key mask, got {:?}", self.shape),
            });
        }
        let (b, t_k) = (self.shape[0], self.shape[1]);
        let mut data = Vec::with_capacity(b * t_q * t_k);
        for bi in 0..b {
            let row = &self.data[bi * t_k..(bi + 1) * t_k];
            for _ in 0..t_q {
                data.extend_from_slice(row);
            }
        }
        Mask {
            shape: vec![b, t_q, t_k],
            data,
        }
        .validate()
    }

    /// Combines a causal `[Tq, Tk]` mask with a `[B, Tk]` key-padding mask
    /// into `[B, Tq, Tk]`.
    pub fn causal_with_pad(causal: &Mask, pad: &Mask) -> Result<Mask> {
        if causal.shape.len() != 2 || pad.shape.len() != 2 || causal.shape[1] != pad.shape[1] {
            return Err(TensorError::Dimension {
                op: "causal_with_pad",
                detail: format!("causal {:?} pad {:?}", causal.shape, pad.shape),
            });
        }
        let (t_q, t_k) = (causal.shape[0], causal.shape[1]);
        let b = pad.shape[0];
        let mut data = Vec::with_capacity(b * t_q * t_k);
        for bi in 0..b {
            for qi in 0..t_q {
                for ki in 0..t_k {
                    data.push(causal.data[qi * t_k + ki] && pad.data[bi * t_k + ki]);
                }
            }
        }
        Ok(Mask {
            shape: vec![b, t_q, t_k],
            data,
        })
    }

    fn validate(self) -> Result<Mask> {
        Ok(self)
    }

    /// Selects the batch row of a `[B, T]` mask.
    pub fn row(&self, b: usize) -> &[bool] {
        let t = *self.shape.last().unwrap();
        &self.data[b * t..(b + 1) * t]
    }
}
