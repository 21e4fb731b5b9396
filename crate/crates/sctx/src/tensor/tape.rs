//! Reverse-mode differentiation tape.
//!
//! The tape is define-by-run: every tracked operation appends one node in
//! execution order, so node ids are already a topological order and the
//! backward pass is a single reverse sweep that visits each node exactly
//! once. Tapes are per-model-instance, single-threaded, and rebuilt each
//! training step.

use std::cell::RefCell;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NodeRef, Result, Scalar, Tensor, TensorError};

pub(crate) type BackFn<S> = Box<dyn Fn(&[S], &mut GradSink<'_, S>)>;

pub(crate) struct Node<S: Scalar> {
    pub(crate) len: usize,
    pub(crate) backward: Option<BackFn<S>>,
}

pub(crate) struct TapeInner<S: Scalar> {
    pub(crate) nodes: Vec<Node<S>>,
    dropout: Option<ChaCha8Rng>,
    kink_margin: f64,
}

/// Accumulates gradient contributions into per-node buffers during the
/// reverse sweep. Contributions add, so values reused by several downstream
/// ops receive the sum of all paths.
pub struct GradSink<'a, S: Scalar> {
    bufs: &'a mut [Option<Vec<S>>],
    lens: &'a [usize],
}

impl<'a, S: Scalar> GradSink<'a, S> {
    /// Gradient buffer for a node, zero-initialized on first touch.
    pub fn grad_mut(&mut self, id: usize) -> &mut [S] {
        if self.bufs[id].is_none() {
            self.bufs[id] = Some(vec![S::zero(); self.lens[id]]);
        }
        self.bufs[id].as_mut().unwrap()
    }
}

/// Owns the recorded graph for one forward pass.
pub struct Tape<S: Scalar> {
    pub(crate) inner: Rc<RefCell<TapeInner<S>>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner {
                nodes: Vec::new(),
                dropout: None,
                kink_margin: f64::INFINITY,
            })),
        }
    }

    /// Arms the dropout stream for this tape. Without a stream, dropout ops
    /// are the identity (evaluation / verification mode).
    pub fn with_dropout_seed(self, seed: u64) -> Self {
        self.arm_dropout(seed);
        self
    }

    /// See [`Tape::with_dropout_seed`].
    pub fn arm_dropout(&self, seed: u64) {
        self.inner.borrow_mut().dropout = Some(ChaCha8Rng::seed_from_u64(seed));
    }

    /// Registers a leaf whose gradient should be collected.
    pub fn watch(&self, t: &Tensor<S>) -> Tensor<S> {
        let id = {
            let mut inner = self.inner.borrow_mut();
            inner.nodes.push(Node {
                len: t.len(),
                backward: None,
            });
            inner.nodes.len() - 1
        };
        Tensor {
            shape: t.shape().to_vec(),
            data: Rc::clone(&t.data),
            node: Some(NodeRef {
                tape: Rc::downgrade(&self.inner),
                id,
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Smallest margin to a non-differentiable point (relu pre-activation
    /// magnitude, max-pool runner-up gap) seen during the forward pass.
    /// Infinite when no kinked op ran. Used to validate finite-difference
    /// checks: a margin well above the probe step means no kink can sit
    /// inside any probe interval.
    pub fn kink_margin(&self) -> f64 {
        self.inner.borrow().kink_margin
    }

    /// Runs the reverse sweep from a scalar loss and returns all gradients.
    pub fn backward(&self, loss: &Tensor<S>) -> Result<Grads<S>> {
        let loss_id = match &loss.node {
            Some(nref) if Weak_points_to(&nref.tape, &self.inner) => nref.id,
            _ => return Err(TensorError::TapeMismatch { op: "backward" }),
        };
        if loss.len() != 1 {
            return Err(TensorError::Dimension {
                op: "backward",
                detail: format!("loss must be scalar, got shape {:?}", loss.shape()),
            });
        }
        let inner = self.inner.borrow();
        let lens: Vec<usize> = inner.nodes.iter().map(|n| n.len).collect();
        let mut bufs: Vec<Option<Vec<S>>> = (0..inner.nodes.len()).map(|_| None).collect();
        bufs[loss_id] = Some(vec![S::one()]);
        for id in (0..=loss_id).rev() {
            if bufs[id].is_none() {
                continue;
            }
            if let Some(back) = inner.nodes[id].backward.as_ref() {
                let (lo, hi) = bufs.split_at_mut(id);
                let grad = hi[0].as_ref().unwrap();
                let mut sink = GradSink {
                    bufs: lo,
                    lens: &lens[..id],
                };
                back(grad, &mut sink);
            }
        }
        Ok(Grads {
            bufs,
            tape: Rc::downgrade(&self.inner),
        })
    }

    pub(crate) fn note_kink_margin(inner: &Rc<RefCell<TapeInner<S>>>, margin: f64) {
        let mut b = inner.borrow_mut();
        if margin < b.kink_margin {
            b.kink_margin = margin;
        }
    }

    /// Inverted-dropout mask: entries are 0 with probability `p`, else
    /// `1/(1-p)`. Returns `None` when the tape has no dropout stream.
    pub(crate) fn dropout_mask(
        inner: &Rc<RefCell<TapeInner<S>>>,
        len: usize,
        p: f64,
    ) -> Option<Vec<S>> {
        let mut b = inner.borrow_mut();
        let rng = b.dropout.as_mut()?;
        let keep = 1.0 - p;
        let scale = S::from_f64(1.0 / keep);
        Some(
            (0..len)
                .map(|_| {
                    if rng.random::<f64>() < keep {
                        scale
                    } else {
                        S::zero()
                    }
                })
                .collect(),
        )
    }
}

#[allow(non_snake_case)]
fn Weak_points_to<T>(weak: &std::rc::Weak<T>, rc: &Rc<T>) -> bool {
    weak.upgrade().map(|u| Rc::ptr_eq(&u, rc)).unwrap_or(false)
}

/// Gradient buffers produced by [`Tape::backward`].
pub struct Grads<S: Scalar> {
    bufs: Vec<Option<Vec<S>>>,
    tape: std::rc::Weak<RefCell<TapeInner<S>>>,
}

impl<S: Scalar> Grads<S> {
    /// Gradient with respect to a tensor recorded on the originating tape.
    /// `None` when the tensor is untracked, from another tape, or not on
    /// any path to the loss.
    pub fn wrt(&self, t: &Tensor<S>) -> Option<&[S]> {
        let nref = t.node.as_ref()?;
        let mine = self.tape.upgrade()?;
        let theirs = nref.tape.upgrade()?;
        if !Rc::ptr_eq(&mine, &theirs) {
            return None;
        }
        self.bufs.get(nref.id)?.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn watch_tracks_leaf() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.watch(&Tensor::ones(vec![3]));
        assert!(x.is_tracked());
        assert_eq!(tape.len(), 1);
    }

    #[test]
    fn backward_rejects_foreign_tensor() {
        let tape: Tape<f64> = Tape::new();
        let other: Tape<f64> = Tape::new();
        let x = other.watch(&Tensor::scalar(2.0));
        assert!(matches!(
            tape.backward(&x),
            Err(TensorError::TapeMismatch { .. })
        ));
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.watch(&Tensor::ones(vec![2]));
        assert!(matches!(
            tape.backward(&x),
            Err(TensorError::Dimension { .. })
        ));
    }
}
