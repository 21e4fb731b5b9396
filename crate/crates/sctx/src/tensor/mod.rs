//! Dense tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a row-major buffer plus a shape. Tensors are cheap to
//! clone (the buffer is shared) and immutable once built. When an operation
//! runs while at least one operand is watched by a [`Tape`], the result is
//! recorded so [`Tape::backward`] can replay the graph in reverse.
//!
//! Precision is a type parameter: `Tensor<f32>` for training, `Tensor<f64>`
//! for gradient verification, where finite differences need the headroom.

use std::cell::RefCell;
use std::rc::{Rc, Weak};

mod gradcheck;
mod mask;
mod ops;
mod params;
pub mod serialize;
mod tape;

pub use gradcheck::{grad_check, GradCheckReport, ParamError};
pub use mask::Mask;
pub use params::{ParamSet, WatchedParams};
pub use tape::{Grads, Tape};

use tape::TapeInner;

/// Element type of a tensor: `f32` or `f64`.
pub trait Scalar:
    num_traits::Float
    + num_traits::NumAssign
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Errors raised by tensor construction, operations, and checkpoint I/O.
#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: dimension error: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("{op}: degenerate mask (no unmasked position)")]
    DegenerateMask { op: &'static str },
    #[error("{op}: index {index} out of range (bound {bound})")]
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },
    #[error("{op}: operands recorded on different tapes")]
    TapeMismatch { op: &'static str },
    #[error("checkpoint i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

pub(crate) struct NodeRef<S: Scalar> {
    pub(crate) tape: Weak<RefCell<TapeInner<S>>>,
    pub(crate) id: usize,
}

impl<S: Scalar> Clone for NodeRef<S> {
    fn clone(&self) -> Self {
        NodeRef {
            tape: Weak::clone(&self.tape),
            id: self.id,
        }
    }
}

/// Dense n-dimensional array in row-major order.
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Rc<Vec<S>>,
    pub(crate) node: Option<NodeRef<S>>,
}

impl<S: Scalar> Clone for Tensor<S> {
    fn clone(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: Rc::clone(&self.data),
            node: self.node.clone(),
        }
    }
}

impl<S: Scalar> std::fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let preview: Vec<&S> = self.data.iter().take(8).collect();
        write!(
            f,
            "Tensor{:?} {:?}{}",
            self.shape,
            preview,
            if self.data.len() > 8 { "…" } else { "" }
        )
    }
}

impl<S: Scalar> Tensor<S> {
    /// Builds a detached tensor. The data length must match the shape product.
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.iter().any(|&e| e == 0) {
            return Err(TensorError::Dimension {
                op: "new",
                detail: format!("zero extent in shape {shape:?}"),
            });
        }
        if n != data.len() {
            return Err(TensorError::Dimension {
                op: "new",
                detail: format!("shape {shape:?} implies {n} elements, got {}", data.len()),
            });
        }
        Ok(Tensor {
            shape,
            data: Rc::new(data),
            node: None,
        })
    }

    pub fn scalar(v: S) -> Self {
        Tensor {
            shape: vec![1],
            data: Rc::new(vec![v]),
            node: None,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: Rc::new(vec![S::zero(); n]),
            node: None,
        }
    }

    pub fn full(shape: Vec<usize>, v: S) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: Rc::new(vec![v; n]),
            node: None,
        }
    }

    pub fn ones(shape: Vec<usize>) -> Self {
        Self::full(shape, S::one())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<S> {
        self.data.to_vec()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> S {
        debug_assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    /// True when this tensor is recorded on a live tape.
    pub fn is_tracked(&self) -> bool {
        self.node
            .as_ref()
            .map(|n| n.tape.strong_count() > 0)
            .unwrap_or(false)
    }

    /// Same values, no tape membership.
    pub fn detached(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: Rc::clone(&self.data),
            node: None,
        }
    }

    /// Copies values into a fresh buffer (used by optimizer updates).
    pub fn map_data(&self, f: impl Fn(&[S]) -> Vec<S>) -> Result<Self> {
        Tensor::new(self.shape.clone(), f(&self.data))
    }

    /// Converts element precision.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: Rc::new(self.data.iter().map(|v| T::from_f64(v.as_f64())).collect()),
            node: None,
        }
    }

    pub(crate) fn same_data(&self, other: &Tensor<S>) -> bool {
        Rc::ptr_eq(&self.data, &other.data)
    }

    /// Interprets the shape as (batch, rows, cols): rank-2 tensors get
    /// batch 1, rank-1 tensors are a single row.
    pub(crate) fn view3(&self) -> (usize, usize, usize) {
        match self.shape.len() {
            1 => (1, 1, self.shape[0]),
            2 => (1, self.shape[0], self.shape[1]),
            3 => (self.shape[0], self.shape[1], self.shape[2]),
            _ => (0, 0, 0),
        }
    }
}

/// Integer id array used for token inputs and class targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ids {
    shape: Vec<usize>,
    data: Vec<usize>,
}

impl Ids {
    pub fn new(shape: Vec<usize>, data: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(TensorError::Dimension {
                op: "ids",
                detail: format!("shape {shape:?} implies {n} entries, got {}", data.len()),
            });
        }
        Ok(Ids { shape, data })
    }

    pub fn from_slice(data: &[usize]) -> Self {
        Ids {
            shape: vec![data.len()],
            data: data.to_vec(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[usize] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

pub(crate) fn check_finite<S: Scalar>(op: &'static str, data: &[S]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_mismatched_length() {
        let err = Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, TensorError::Dimension { .. }));
    }

    #[test]
    fn clone_shares_buffer() {
        let t = Tensor::<f64>::ones(vec![4]);
        let u = t.clone();
        assert!(t.same_data(&u));
    }

    #[test]
    fn cast_round_trips_values() {
        let t = Tensor::<f64>::new(vec![3], vec![1.5, -2.25, 0.125]).unwrap();
        let u: Tensor<f32> = t.cast();
        assert_eq!(u.to_vec(), vec![1.5f32, -2.25, 0.125]);
    }
}
