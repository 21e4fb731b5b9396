//! Differentiable tensor operations.
//!
//! Every op validates shapes, computes the forward value, checks it for
//! non-finite entries, and — when an operand is tracked — records a backward
//! closure on the tape. Gradient rules are written against flat row-major
//! buffers; batching is the leading dimension only, everything else is
//! explicit (slice / expand / concat), which keeps each rule auditable.

use std::cell::RefCell;
use std::rc::Rc;

use super::tape::{BackFn, Node, TapeInner};
use super::{check_finite, Ids, Mask, NodeRef, Result, Scalar, Tape, Tensor, TensorError};

// ── Kernels ────────────────────────────────────────────────────────────────

/// out[m,n] += a[m,k] · b[k,n]
fn mm_nn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, out: &mut [S]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &apv) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += apv * bv;
            }
        }
    }
}

/// out[m,n] += a[m,k] · b[n,k]ᵀ
fn mm_nt<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, out: &mut [S]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = S::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *o += acc;
        }
    }
}

/// out[k,n] += a[m,k]ᵀ · b[m,n]
fn mm_tn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, out: &mut [S]) {
    for p in 0..m {
        let arow = &a[p * k..(p + 1) * k];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &apv) in arow.iter().enumerate() {
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += apv * bv;
            }
        }
    }
}

fn axpy<S: Scalar>(dst: &mut [S], src: &[S], scale: S) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

// ── Recording helpers ──────────────────────────────────────────────────────

type TapeRc<S> = Rc<RefCell<TapeInner<S>>>;

/// Tape shared by the tracked operands, if any. Two live distinct tapes in
/// one op is a programming error.
fn joint_tape<S: Scalar>(op: &'static str, inputs: &[&Tensor<S>]) -> Result<Option<TapeRc<S>>> {
    let mut found: Option<TapeRc<S>> = None;
    for t in inputs {
        if let Some(nref) = &t.node {
            if let Some(tape) = nref.tape.upgrade() {
                match &found {
                    None => found = Some(tape),
                    Some(prev) if Rc::ptr_eq(prev, &tape) => {}
                    Some(_) => return Err(TensorError::TapeMismatch { op }),
                }
            }
        }
    }
    Ok(found)
}

/// Node id of `t` on `tape`, if tracked there.
fn pid<S: Scalar>(t: &Tensor<S>, tape: &Option<TapeRc<S>>) -> Option<usize> {
    let tape = tape.as_ref()?;
    let nref = t.node.as_ref()?;
    let theirs = nref.tape.upgrade()?;
    if Rc::ptr_eq(tape, &theirs) {
        Some(nref.id)
    } else {
        None
    }
}

fn emit<S: Scalar>(
    op: &'static str,
    shape: Vec<usize>,
    data: Vec<S>,
    tape: Option<TapeRc<S>>,
    back: impl FnOnce() -> BackFn<S>,
) -> Result<Tensor<S>> {
    check_finite(op, &data)?;
    let node = tape.map(|tape| {
        let id = {
            let mut inner = tape.borrow_mut();
            inner.nodes.push(Node {
                len: data.len(),
                backward: Some(back()),
            });
            inner.nodes.len() - 1
        };
        NodeRef {
            tape: Rc::downgrade(&tape),
            id,
        }
    });
    Ok(Tensor {
        shape,
        data: Rc::new(data),
        node,
    })
}

fn same_shape<S: Scalar>(op: &'static str, a: &Tensor<S>, b: &Tensor<S>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::Dimension {
            op,
            detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    Ok(())
}

/// How a mask's rows map onto the rows of a `[..., n]` tensor.
enum MaskMap {
    Full,
    Shared,
    PerBatch { rows_per_batch: usize },
    Suffix { rows: usize },
}

impl MaskMap {
    fn offset(&self, row: usize, n: usize) -> usize {
        match self {
            MaskMap::Full => row * n,
            MaskMap::Shared => 0,
            MaskMap::PerBatch { rows_per_batch } => (row / rows_per_batch) * n,
            MaskMap::Suffix { rows } => (row % rows) * n,
        }
    }
}

fn resolve_mask_map(op: &'static str, x_shape: &[usize], m_shape: &[usize]) -> Result<MaskMap> {
    let n = *x_shape.last().unwrap();
    if *m_shape.last().unwrap() != n {
        return Err(TensorError::Dimension {
            op,
            detail: format!("mask last dim {:?} vs tensor {:?}", m_shape, x_shape),
        });
    }
    if m_shape == x_shape {
        Ok(MaskMap::Full)
    } else if m_shape.len() == 1 {
        Ok(MaskMap::Shared)
    } else if x_shape.len() == 3 && m_shape.len() == 2 && m_shape[0] == x_shape[0] {
        Ok(MaskMap::PerBatch {
            rows_per_batch: x_shape[1],
        })
    } else if x_shape.len() == 3 && m_shape == &x_shape[1..] {
        Ok(MaskMap::Suffix { rows: x_shape[1] })
    } else {
        Err(TensorError::Dimension {
            op,
            detail: format!("mask shape {:?} incompatible with {:?}", m_shape, x_shape),
        })
    }
}

// ── Operations ─────────────────────────────────────────────────────────────

impl<S: Scalar> Tensor<S> {
    /// Matrix product. Ranks 2/3 with leading-batch broadcast on either side:
    /// `[m,k]·[k,n]`, `[B,m,k]·[k,n]`, `[m,k]·[B,k,n]`, `[B,m,k]·[B,k,n]`.
    pub fn matmul(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.matmul_impl(rhs, false)
    }

    /// `self · rhsᵀ` over the last two dims, same batch rules as [`matmul`].
    /// rhs is `[n,k]` (or `[B,n,k]`).
    pub fn matmul_t(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.matmul_impl(rhs, true)
    }

    fn matmul_impl(&self, rhs: &Tensor<S>, transpose_rhs: bool) -> Result<Tensor<S>> {
        let op: &'static str = if transpose_rhs { "matmul_t" } else { "matmul" };
        if !(2..=3).contains(&self.rank()) || !(2..=3).contains(&rhs.rank()) {
            return Err(TensorError::Dimension {
                op,
                detail: format!("ranks {:?} x {:?}", self.shape(), rhs.shape()),
            });
        }
        let (ba, m, ka) = self.view3();
        let (bb, r0, r1) = rhs.view3();
        let (kb, n) = if transpose_rhs { (r1, r0) } else { (r0, r1) };
        if ka != kb {
            return Err(TensorError::Dimension {
                op,
                detail: format!("inner extents {ka} vs {kb}"),
            });
        }
        if ba != bb && ba != 1 && bb != 1 {
            return Err(TensorError::Dimension {
                op,
                detail: format!("batch extents {ba} vs {bb}"),
            });
        }
        let b = ba.max(bb);
        let k = ka;
        let out_shape = if self.rank() == 3 || rhs.rank() == 3 {
            vec![b, m, n]
        } else {
            vec![m, n]
        };
        let mut data = vec![S::zero(); b * m * n];
        let (sa, sb) = (
            if ba == 1 { 0 } else { m * k },
            if bb == 1 { 0 } else { k * n },
        );
        for bi in 0..b {
            let av = &self.data[bi * sa..bi * sa + m * k];
            let bv = &rhs.data[bi * sb..bi * sb + k * n];
            let ov = &mut data[bi * m * n..(bi + 1) * m * n];
            if transpose_rhs {
                mm_nt(av, bv, m, k, n, ov);
            } else {
                mm_nn(av, bv, m, k, n, ov);
            }
        }
        let tape = joint_tape(op, &[self, rhs])?;
        let pa = pid(self, &tape);
        let pb = pid(rhs, &tape);
        let a_data = Rc::clone(&self.data);
        let b_data = Rc::clone(&rhs.data);
        emit(op, out_shape, data, tape, move || {
            Box::new(move |g, sink| {
                for bi in 0..b {
                    let gv = &g[bi * m * n..(bi + 1) * m * n];
                    if let Some(ia) = pa {
                        let bv = &b_data[bi * sb..bi * sb + k * n];
                        let ga = &mut sink.grad_mut(ia)[bi * sa..bi * sa + m * k];
                        if transpose_rhs {
                            // C = A·Bᵀ  =>  dA += dC·B
                            mm_nn(gv, bv, m, n, k, ga);
                        } else {
                            // dA += dC·Bᵀ
                            mm_nt(gv, bv, m, n, k, ga);
                        }
                    }
                    if let Some(ib) = pb {
                        let av = &a_data[bi * sa..bi * sa + m * k];
                        let gb = &mut sink.grad_mut(ib)[bi * sb..bi * sb + k * n];
                        if transpose_rhs {
                            // dB += dCᵀ·A
                            mm_tn(gv, av, m, n, k, gb);
                        } else {
                            // dB += Aᵀ·dC
                            mm_tn(av, gv, m, k, n, gb);
                        }
                    }
                }
            })
        })
    }

    pub fn add(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        same_shape("add", self, rhs)?;
        let data = self
            .data
            .iter()
            .zip(rhs.data.iter())
            .map(|(&a, &b)| a + b)
            .collect();
        let tape = joint_tape("add", &[self, rhs])?;
        let pa = pid(self, &tape);
        let pb = pid(rhs, &tape);
        emit("add", self.shape.clone(), data, tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    axpy(sink.grad_mut(ia), g, S::one());
                }
                if let Some(ib) = pb {
                    axpy(sink.grad_mut(ib), g, S::one());
                }
            })
        })
    }

    pub fn sub(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        same_shape("sub", self, rhs)?;
        let data = self
            .data
            .iter()
            .zip(rhs.data.iter())
            .map(|(&a, &b)| a - b)
            .collect();
        let tape = joint_tape("sub", &[self, rhs])?;
        let pa = pid(self, &tape);
        let pb = pid(rhs, &tape);
        emit("sub", self.shape.clone(), data, tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    axpy(sink.grad_mut(ia), g, S::one());
                }
                if let Some(ib) = pb {
                    axpy(sink.grad_mut(ib), g, -S::one());
                }
            })
        })
    }

    /// Elementwise product.
    pub fn mul(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        same_shape("mul", self, rhs)?;
        let data = self
            .data
            .iter()
            .zip(rhs.data.iter())
            .map(|(&a, &b)| a * b)
            .collect();
        let tape = joint_tape("mul", &[self, rhs])?;
        let pa = pid(self, &tape);
        let pb = pid(rhs, &tape);
        let a_data = Rc::clone(&self.data);
        let b_data = Rc::clone(&rhs.data);
        emit("mul", self.shape.clone(), data, tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    let buf = sink.grad_mut(ia);
                    for ((d, &gv), &bv) in buf.iter_mut().zip(g).zip(b_data.iter()) {
                        *d += gv * bv;
                    }
                }
                if let Some(ib) = pb {
                    let buf = sink.grad_mut(ib);
                    for ((d, &gv), &av) in buf.iter_mut().zip(g).zip(a_data.iter()) {
                        *d += gv * av;
                    }
                }
            })
        })
    }

    /// Elementwise `scale·x + shift`.
    pub fn affine(&self, scale: S, shift: S) -> Result<Tensor<S>> {
        let data = self.data.iter().map(|&v| scale * v + shift).collect();
        let tape = joint_tape("affine", &[self])?;
        let pa = pid(self, &tape);
        emit("affine", self.shape.clone(), data, tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    axpy(sink.grad_mut(ia), g, scale);
                }
            })
        })
    }

    pub fn scale(&self, s: S) -> Result<Tensor<S>> {
        self.affine(s, S::zero())
    }

    /// Adds a `[n]` bias to every row of a `[..., n]` tensor.
    pub fn add_bias(&self, bias: &Tensor<S>) -> Result<Tensor<S>> {
        let n = *self.shape.last().unwrap();
        if bias.shape() != [n] {
            return Err(TensorError::Dimension {
                op: "add_bias",
                detail: format!("bias {:?} vs rows of {:?}", bias.shape(), self.shape()),
            });
        }
        let rows = self.len() / n;
        let mut data = self.to_vec();
        for r in 0..rows {
            axpy(&mut data[r * n..(r + 1) * n], &bias.data, S::one());
        }
        let tape = joint_tape("add_bias", &[self, bias])?;
        let pa = pid(self, &tape);
        let pb = pid(bias, &tape);
        emit("add_bias", self.shape.clone(), data, tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    axpy(sink.grad_mut(ia), g, S::one());
                }
                if let Some(ib) = pb {
                    let buf = sink.grad_mut(ib);
                    for r in 0..rows {
                        axpy(buf, &g[r * n..(r + 1) * n], S::one());
                    }
                }
            })
        })
    }

    pub fn relu(&self) -> Result<Tensor<S>> {
        let data: Vec<S> = self
            .data
            .iter()
            .map(|&v| if v > S::zero() { v } else { S::zero() })
            .collect();
        let tape = joint_tape("relu", &[self])?;
        if let Some(t) = &tape {
            let margin = self
                .data
                .iter()
                .map(|v| v.as_f64().abs())
                .fold(f64::INFINITY, f64::min);
            Tape::note_kink_margin(t, margin);
        }
        let pa = pid(self, &tape);
        let x = Rc::clone(&self.data);
        emit("relu", self.shape.clone(), data, tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    let buf = sink.grad_mut(ia);
                    for ((d, &gv), &xv) in buf.iter_mut().zip(g).zip(x.iter()) {
                        if xv > S::zero() {
                            *d += gv;
                        }
                    }
                }
            })
        })
    }

    pub fn sigmoid(&self) -> Result<Tensor<S>> {
        let data: Vec<S> = self
            .data
            .iter()
            .map(|&v| S::one() / (S::one() + (-v).exp()))
            .collect();
        let tape = joint_tape("sigmoid", &[self])?;
        let pa = pid(self, &tape);
        let y = data.clone();
        emit("sigmoid", self.shape.clone(), data, tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    let buf = sink.grad_mut(ia);
                    for ((d, &gv), &yv) in buf.iter_mut().zip(g).zip(y.iter()) {
                        *d += gv * yv * (S::one() - yv);
                    }
                }
            })
        })
    }

    pub fn tanh(&self) -> Result<Tensor<S>> {
        let data: Vec<S> = self.data.iter().map(|&v| v.tanh()).collect();
        let tape = joint_tape("tanh", &[self])?;
        let pa = pid(self, &tape);
        let y = data.clone();
        emit("tanh", self.shape.clone(), data, tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    let buf = sink.grad_mut(ia);
                    for ((d, &gv), &yv) in buf.iter_mut().zip(g).zip(y.iter()) {
                        *d += gv * (S::one() - yv * yv);
                    }
                }
            })
        })
    }

    /// Max-subtraction-stabilized softmax over the last dimension. Masked
    /// positions come out exactly 0; a row with no unmasked position is a
    /// degenerate-mask error.
    pub fn softmax(&self, mask: Option<&Mask>) -> Result<Tensor<S>> {
        let n = *self.shape.last().unwrap();
        let rows = self.len() / n;
        let map = match mask {
            Some(m) => Some(resolve_mask_map("softmax", &self.shape, m.shape())?),
            None => None,
        };
        let mut data = vec![S::zero(); self.len()];
        for r in 0..rows {
            let xrow = &self.data[r * n..(r + 1) * n];
            let mrow = map
                .as_ref()
                .zip(mask)
                .map(|(map, m)| &m.data()[map.offset(r, n)..map.offset(r, n) + n]);
            let active = |j: usize| mrow.map(|m| m[j]).unwrap_or(true);
            let mut mx = S::neg_infinity();
            for j in 0..n {
                if active(j) && xrow[j] > mx {
                    mx = xrow[j];
                }
            }
            if mx == S::neg_infinity() {
                return Err(TensorError::DegenerateMask { op: "softmax" });
            }
            let orow = &mut data[r * n..(r + 1) * n];
            let mut sum = S::zero();
            for j in 0..n {
                if active(j) {
                    let e = (xrow[j] - mx).exp();
                    orow[j] = e;
                    sum += e;
                }
            }
            for o in orow.iter_mut() {
                *o /= sum;
            }
        }
        let tape = joint_tape("softmax", &[self])?;
        let pa = pid(self, &tape);
        let y = data.clone();
        emit("softmax", self.shape.clone(), data, tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    let buf = sink.grad_mut(ia);
                    for r in 0..rows {
                        let yrow = &y[r * n..(r + 1) * n];
                        let grow = &g[r * n..(r + 1) * n];
                        let dot: S = yrow.iter().zip(grow).map(|(&yv, &gv)| yv * gv).sum();
                        let brow = &mut buf[r * n..(r + 1) * n];
                        for ((d, &yv), &gv) in brow.iter_mut().zip(yrow).zip(grow) {
                            *d += yv * (gv - dot);
                        }
                    }
                }
            })
        })
    }

    /// Layer normalization over the last dimension with affine parameters.
    pub fn layer_norm(&self, gamma: &Tensor<S>, beta: &Tensor<S>, eps: f64) -> Result<Tensor<S>> {
        let n = *self.shape.last().unwrap();
        if gamma.shape() != [n] || beta.shape() != [n] {
            return Err(TensorError::Dimension {
                op: "layer_norm",
                detail: format!(
                    "gamma {:?} / beta {:?} vs rows of {:?}",
                    gamma.shape(),
                    beta.shape(),
                    self.shape()
                ),
            });
        }
        let rows = self.len() / n;
        let nf = S::from_f64(n as f64);
        let epss = S::from_f64(eps);
        let mut data = vec![S::zero(); self.len()];
        let mut xhat = vec![S::zero(); self.len()];
        let mut inv_std = vec![S::zero(); rows];
        for r in 0..rows {
            let xrow = &self.data[r * n..(r + 1) * n];
            let mean = xrow.iter().copied().sum::<S>() / nf;
            let var = xrow
                .iter()
                .map(|&v| (v - mean) * (v - mean))
                .sum::<S>()
                / nf;
            let istd = S::one() / (var + epss).sqrt();
            inv_std[r] = istd;
            for j in 0..n {
                let xh = (xrow[j] - mean) * istd;
                xhat[r * n + j] = xh;
                data[r * n + j] = xh * gamma.data[j] + beta.data[j];
            }
        }
        let tape = joint_tape("layer_norm", &[self, gamma, beta])?;
        let px = pid(self, &tape);
        let pg = pid(gamma, &tape);
        let pb = pid(beta, &tape);
        let gamma_data = Rc::clone(&gamma.data);
        emit("layer_norm", self.shape.clone(), data, tape, move || {
            Box::new(move |g, sink| {
                if let Some(ig) = pg {
                    let buf = sink.grad_mut(ig);
                    for r in 0..rows {
                        for j in 0..n {
                            buf[j] += g[r * n + j] * xhat[r * n + j];
                        }
                    }
                }
                if let Some(ib) = pb {
                    let buf = sink.grad_mut(ib);
                    for r in 0..rows {
                        axpy(buf, &g[r * n..(r + 1) * n], S::one());
                    }
                }
                if let Some(ix) = px {
                    let buf = sink.grad_mut(ix);
                    for r in 0..rows {
                        let grow = &g[r * n..(r + 1) * n];
                        let xrow = &xhat[r * n..(r + 1) * n];
                        // dyg = dy ⊙ gamma; dx = istd·(dyg − mean(dyg) − x̂·mean(dyg⊙x̂))
                        let mut m1 = S::zero();
                        let mut m2 = S::zero();
                        for j in 0..n {
                            let dyg = grow[j] * gamma_data[j];
                            m1 += dyg;
                            m2 += dyg * xrow[j];
                        }
                        m1 /= nf;
                        m2 /= nf;
                        let istd = inv_std[r];
                        let brow = &mut buf[r * n..(r + 1) * n];
                        for j in 0..n {
                            let dyg = grow[j] * gamma_data[j];
                            brow[j] += istd * (dyg - m1 - xrow[j] * m2);
                        }
                    }
                }
            })
        })
    }

    /// Mean over unmasked time positions: `[B,T,d]` with mask `[B,T]` gives
    /// `[B,d]` (rank-2 input: `[T,d]` + `[T]` → `[d]`).
    pub fn mean_pool(&self, mask: &Mask) -> Result<Tensor<S>> {
        let (b, t, d) = self.pool_dims("mean_pool", mask)?;
        let mut data = vec![S::zero(); b * d];
        for bi in 0..b {
            let mrow = &mask.data()[bi * t..(bi + 1) * t];
            let count = mrow.iter().filter(|&&m| m).count();
            if count == 0 {
                return Err(TensorError::DegenerateMask { op: "mean_pool" });
            }
            let inv = S::from_f64(1.0 / count as f64);
            let orow = &mut data[bi * d..(bi + 1) * d];
            for (ti, &m) in mrow.iter().enumerate() {
                if m {
                    axpy(orow, &self.data[(bi * t + ti) * d..(bi * t + ti + 1) * d], inv);
                }
            }
        }
        let out_shape = if self.rank() == 3 { vec![b, d] } else { vec![d] };
        let tape = joint_tape("mean_pool", &[self])?;
        let pa = pid(self, &tape);
        let mdata = mask.data().to_vec();
        emit("mean_pool", out_shape, data, tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    let buf = sink.grad_mut(ia);
                    for bi in 0..b {
                        let mrow = &mdata[bi * t..(bi + 1) * t];
                        let count = mrow.iter().filter(|&&m| m).count();
                        let inv = S::from_f64(1.0 / count as f64);
                        let grow = &g[bi * d..(bi + 1) * d];
                        for (ti, &m) in mrow.iter().enumerate() {
                            if m {
                                axpy(
                                    &mut buf[(bi * t + ti) * d..(bi * t + ti + 1) * d],
                                    grow,
                                    inv,
                                );
                            }
                        }
                    }
                }
            })
        })
    }

    /// Elementwise max over unmasked time positions. Gradient flows to the
    /// argmax position only; ties break toward the lowest index.
    pub fn max_pool(&self, mask: &Mask) -> Result<Tensor<S>> {
        let (b, t, d) = self.pool_dims("max_pool", mask)?;
        let mut data = vec![S::zero(); b * d];
        let mut arg = vec![0usize; b * d];
        let mut margin = f64::INFINITY;
        for bi in 0..b {
            let mrow = &mask.data()[bi * t..(bi + 1) * t];
            if !mrow.iter().any(|&m| m) {
                return Err(TensorError::DegenerateMask { op: "max_pool" });
            }
            for j in 0..d {
                let mut best = S::neg_infinity();
                let mut best_t = 0usize;
                let mut second = S::neg_infinity();
                for (ti, &m) in mrow.iter().enumerate() {
                    if !m {
                        continue;
                    }
                    let v = self.data[(bi * t + ti) * d + j];
                    if v > best {
                        second = best;
                        best = v;
                        best_t = ti;
                    } else if v > second {
                        second = v;
                    }
                }
                if second > S::neg_infinity() {
                    margin = margin.min((best - second).as_f64());
                }
                data[bi * d + j] = best;
                arg[bi * d + j] = best_t;
            }
        }
        let out_shape = if self.rank() == 3 { vec![b, d] } else { vec![d] };
        let tape = joint_tape("max_pool", &[self])?;
        if let Some(tp) = &tape {
            Tape::note_kink_margin(tp, margin);
        }
        let pa = pid(self, &tape);
        emit("max_pool", out_shape, data, tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    let buf = sink.grad_mut(ia);
                    for bi in 0..b {
                        for j in 0..d {
                            let ti = arg[bi * d + j];
                            buf[(bi * t + ti) * d + j] += g[bi * d + j];
                        }
                    }
                }
            })
        })
    }

    fn pool_dims(&self, op: &'static str, mask: &Mask) -> Result<(usize, usize, usize)> {
        let (b, t, d) = match self.rank() {
            2 => (1, self.shape[0], self.shape[1]),
            3 => (self.shape[0], self.shape[1], self.shape[2]),
            _ => {
                return Err(TensorError::Dimension {
                    op,
                    detail: format!("expected rank 2/3, got {:?}", self.shape()),
                })
            }
        };
        let expect: &[usize] = if self.rank() == 3 {
            &self.shape[..2]
        } else {
            &self.shape[..1]
        };
        if mask.shape() != expect {
            return Err(TensorError::Dimension {
                op,
                detail: format!("mask {:?} vs time dims {:?}", mask.shape(), expect),
            });
        }
        Ok((b, t, d))
    }

    /// Concatenates along the last dimension.
    pub fn concat_last(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        if self.rank() != rhs.rank()
            || self.shape[..self.rank() - 1] != rhs.shape[..rhs.rank() - 1]
        {
            return Err(TensorError::Dimension {
                op: "concat_last",
                detail: format!("{:?} vs {:?}", self.shape(), rhs.shape()),
            });
        }
        let na = *self.shape.last().unwrap();
        let nb = *rhs.shape.last().unwrap();
        let rows = self.len() / na;
        let mut data = Vec::with_capacity(rows * (na + nb));
        for r in 0..rows {
            data.extend_from_slice(&self.data[r * na..(r + 1) * na]);
            data.extend_from_slice(&rhs.data[r * nb..(r + 1) * nb]);
        }
        let mut shape = self.shape.clone();
        *shape.last_mut().unwrap() = na + nb;
        let tape = joint_tape("concat_last", &[self, rhs])?;
        let pa = pid(self, &tape);
        let pb = pid(rhs, &tape);
        emit("concat_last", shape, data, tape, move || {
            Box::new(move |g, sink| {
                let nc = na + nb;
                if let Some(ia) = pa {
                    let buf = sink.grad_mut(ia);
                    for r in 0..rows {
                        axpy(&mut buf[r * na..(r + 1) * na], &g[r * nc..r * nc + na], S::one());
                    }
                }
                if let Some(ib) = pb {
                    let buf = sink.grad_mut(ib);
                    for r in 0..rows {
                        axpy(
                            &mut buf[r * nb..(r + 1) * nb],
                            &g[r * nc + na..(r + 1) * nc],
                            S::one(),
                        );
                    }
                }
            })
        })
    }

    /// Concatenates along the time (second-to-last) dimension.
    pub fn concat_time(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        let ra = self.rank();
        if ra != rhs.rank() || !(2..=3).contains(&ra) {
            return Err(TensorError::Dimension {
                op: "concat_time",
                detail: format!("{:?} vs {:?}", self.shape(), rhs.shape()),
            });
        }
        let (ba, ta, da) = self.view3();
        let (bb, tb, db) = rhs.view3();
        if ba != bb || da != db {
            return Err(TensorError::Dimension {
                op: "concat_time",
                detail: format!("{:?} vs {:?}", self.shape(), rhs.shape()),
            });
        }
        let (b, d) = (ba, da);
        let tc = ta + tb;
        let mut data = Vec::with_capacity(b * tc * d);
        for bi in 0..b {
            data.extend_from_slice(&self.data[bi * ta * d..(bi + 1) * ta * d]);
            data.extend_from_slice(&rhs.data[bi * tb * d..(bi + 1) * tb * d]);
        }
        let shape = if ra == 3 { vec![b, tc, d] } else { vec![tc, d] };
        let tape = joint_tape("concat_time", &[self, rhs])?;
        let pa = pid(self, &tape);
        let pb = pid(rhs, &tape);
        emit("concat_time", shape, data, tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    let buf = sink.grad_mut(ia);
                    for bi in 0..b {
                        axpy(
                            &mut buf[bi * ta * d..(bi + 1) * ta * d],
                            &g[bi * tc * d..bi * tc * d + ta * d],
                            S::one(),
                        );
                    }
                }
                if let Some(ib) = pb {
                    let buf = sink.grad_mut(ib);
                    for bi in 0..b {
                        axpy(
                            &mut buf[bi * tb * d..(bi + 1) * tb * d],
                            &g[bi * tc * d + ta * d..(bi + 1) * tc * d],
                            S::one(),
                        );
                    }
                }
            })
        })
    }

    /// Selects time rows `[r0, r1)` of a rank-2/3 tensor.
    pub fn slice_time(&self, r0: usize, r1: usize) -> Result<Tensor<S>> {
        if !(2..=3).contains(&self.rank()) {
            return Err(TensorError::Dimension {
                op: "slice_time",
                detail: format!("expected rank 2/3, got {:?}", self.shape()),
            });
        }
        let (b, t, d) = self.view3();
        if r0 >= r1 || r1 > t {
            return Err(TensorError::Index {
                op: "slice_time",
                index: r1,
                bound: t,
            });
        }
        let ts = r1 - r0;
        let mut data = Vec::with_capacity(b * ts * d);
        for bi in 0..b {
            data.extend_from_slice(&self.data[(bi * t + r0) * d..(bi * t + r1) * d]);
        }
        let shape = if self.rank() == 3 {
            vec![b, ts, d]
        } else {
            vec![ts, d]
        };
        let tape = joint_tape("slice_time", &[self])?;
        let pa = pid(self, &tape);
        emit("slice_time", shape, data, tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    let buf = sink.grad_mut(ia);
                    for bi in 0..b {
                        axpy(
                            &mut buf[(bi * t + r0) * d..(bi * t + r1) * d],
                            &g[bi * ts * d..(bi + 1) * ts * d],
                            S::one(),
                        );
                    }
                }
            })
        })
    }

    /// Selects feature columns `[c0, c1)` of the last dimension.
    pub fn slice_last(&self, c0: usize, c1: usize) -> Result<Tensor<S>> {
        let n = *self.shape.last().unwrap();
        if c0 >= c1 || c1 > n {
            return Err(TensorError::Index {
                op: "slice_last",
                index: c1,
                bound: n,
            });
        }
        let rows = self.len() / n;
        let w = c1 - c0;
        let mut data = Vec::with_capacity(rows * w);
        for r in 0..rows {
            data.extend_from_slice(&self.data[r * n + c0..r * n + c1]);
        }
        let mut shape = self.shape.clone();
        *shape.last_mut().unwrap() = w;
        let tape = joint_tape("slice_last", &[self])?;
        let pa = pid(self, &tape);
        emit("slice_last", shape, data, tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    let buf = sink.grad_mut(ia);
                    for r in 0..rows {
                        axpy(
                            &mut buf[r * n + c0..r * n + c1],
                            &g[r * w..(r + 1) * w],
                            S::one(),
                        );
                    }
                }
            })
        })
    }

    /// Reinterprets the shape; element count must be unchanged.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor<S>> {
        let n: usize = shape.iter().product();
        if n != self.len() {
            return Err(TensorError::Dimension {
                op: "reshape",
                detail: format!("{:?} -> {:?}", self.shape(), shape),
            });
        }
        let tape = joint_tape("reshape", &[self])?;
        let pa = pid(self, &tape);
        emit("reshape", shape, self.to_vec(), tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    axpy(sink.grad_mut(ia), g, S::one());
                }
            })
        })
    }

    /// Repeats a `[B,d]` tensor into `[B,t,d]` (or `[d]` into `[t,d]`).
    /// The gradient sums over the repeated axis.
    pub fn expand_time(&self, t: usize) -> Result<Tensor<S>> {
        let (b, d, rank3) = match self.rank() {
            1 => (1, self.shape[0], false),
            2 => (self.shape[0], self.shape[1], true),
            _ => {
                return Err(TensorError::Dimension {
                    op: "expand_time",
                    detail: format!("expected rank 1/2, got {:?}", self.shape()),
                })
            }
        };
        let mut data = Vec::with_capacity(b * t * d);
        for bi in 0..b {
            let row = &self.data[bi * d..(bi + 1) * d];
            for _ in 0..t {
                data.extend_from_slice(row);
            }
        }
        let shape = if rank3 { vec![b, t, d] } else { vec![t, d] };
        let tape = joint_tape("expand_time", &[self])?;
        let pa = pid(self, &tape);
        emit("expand_time", shape, data, tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    let buf = sink.grad_mut(ia);
                    for bi in 0..b {
                        for ti in 0..t {
                            axpy(
                                &mut buf[bi * d..(bi + 1) * d],
                                &g[(bi * t + ti) * d..(bi * t + ti + 1) * d],
                                S::one(),
                            );
                        }
                    }
                }
            })
        })
    }

    /// Embedding lookup: `self` is a `[V,d]` table, out is `ids.shape + [d]`.
    pub fn embedding(&self, ids: &Ids) -> Result<Tensor<S>> {
        if self.rank() != 2 {
            return Err(TensorError::Dimension {
                op: "embedding",
                detail: format!("table must be rank 2, got {:?}", self.shape()),
            });
        }
        let (v, d) = (self.shape[0], self.shape[1]);
        for &id in ids.data() {
            if id >= v {
                return Err(TensorError::Index {
                    op: "embedding",
                    index: id,
                    bound: v,
                });
            }
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids.data() {
            data.extend_from_slice(&self.data[id * d..(id + 1) * d]);
        }
        let mut shape = ids.shape().to_vec();
        shape.push(d);
        let tape = joint_tape("embedding", &[self])?;
        let pa = pid(self, &tape);
        let idv = ids.data().to_vec();
        emit("embedding", shape, data, tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    let buf = sink.grad_mut(ia);
                    for (r, &id) in idv.iter().enumerate() {
                        axpy(
                            &mut buf[id * d..(id + 1) * d],
                            &g[r * d..(r + 1) * d],
                            S::one(),
                        );
                    }
                }
            })
        })
    }

    /// Label-smoothed cross entropy averaged over unmasked target rows.
    /// `self` is logits `[..., V]`; targets and mask are flattened rows.
    /// Smoothing distributes `smoothing` mass uniformly over the vocabulary.
    pub fn cross_entropy(
        &self,
        targets: &Ids,
        target_mask: &Mask,
        smoothing: f64,
    ) -> Result<Tensor<S>> {
        let v = *self.shape.last().unwrap();
        let rows = self.len() / v;
        if targets.len() != rows || target_mask.data().len() != rows {
            return Err(TensorError::Dimension {
                op: "cross_entropy",
                detail: format!(
                    "logit rows {rows} vs targets {} vs mask {}",
                    targets.len(),
                    target_mask.data().len()
                ),
            });
        }
        for (&t, &m) in targets.data().iter().zip(target_mask.data()) {
            if m && t >= v {
                return Err(TensorError::Index {
                    op: "cross_entropy",
                    index: t,
                    bound: v,
                });
            }
        }
        let count = target_mask.count_true();
        if count == 0 {
            return Err(TensorError::DegenerateMask { op: "cross_entropy" });
        }
        let conf = S::from_f64(1.0 - smoothing);
        let unif = S::from_f64(smoothing / v as f64);
        let mut total = S::zero();
        for r in 0..rows {
            if !target_mask.get(r) {
                continue;
            }
            let xrow = &self.data[r * v..(r + 1) * v];
            let mx = xrow.iter().copied().fold(S::neg_infinity(), S::max);
            let lse = mx + xrow.iter().map(|&x| (x - mx).exp()).sum::<S>().ln();
            let sum_x: S = xrow.iter().copied().sum();
            total += lse - conf * xrow[targets.data()[r]] - unif * sum_x;
        }
        let inv_count = S::from_f64(1.0 / count as f64);
        let loss = total * inv_count;
        let tape = joint_tape("cross_entropy", &[self])?;
        let pa = pid(self, &tape);
        let x = Rc::clone(&self.data);
        let tgt = targets.data().to_vec();
        let msk = target_mask.data().to_vec();
        emit("cross_entropy", vec![1], vec![loss], tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    let scale = g[0] * inv_count;
                    let buf = sink.grad_mut(ia);
                    for r in 0..rows {
                        if !msk[r] {
                            continue;
                        }
                        let xrow = &x[r * v..(r + 1) * v];
                        let mx = xrow.iter().copied().fold(S::neg_infinity(), S::max);
                        let denom: S = xrow.iter().map(|&xv| (xv - mx).exp()).sum();
                        let brow = &mut buf[r * v..(r + 1) * v];
                        for j in 0..v {
                            let p = (xrow[j] - mx).exp() / denom;
                            let q = if j == tgt[r] { conf + unif } else { unif };
                            brow[j] += scale * (p - q);
                        }
                    }
                }
            })
        })
    }

    pub fn sum_all(&self) -> Result<Tensor<S>> {
        let total: S = self.data.iter().copied().sum();
        let len = self.len();
        let tape = joint_tape("sum_all", &[self])?;
        let pa = pid(self, &tape);
        emit("sum_all", vec![1], vec![total], tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    let buf = sink.grad_mut(ia);
                    for d in buf.iter_mut().take(len) {
                        *d += g[0];
                    }
                }
            })
        })
    }

    pub fn mean_all(&self) -> Result<Tensor<S>> {
        let len = self.len();
        self.sum_all()?.scale(S::from_f64(1.0 / len as f64))
    }

    /// Inverted dropout driven by the tape's dropout stream. Identity when
    /// `p == 0` or the tape carries no stream (evaluation / verification).
    pub fn dropout(&self, p: f64) -> Result<Tensor<S>> {
        if p <= 0.0 {
            return Ok(self.clone());
        }
        let tape = joint_tape("dropout", &[self])?;
        let mask = match &tape {
            Some(t) => Tape::dropout_mask(t, self.len(), p),
            None => None,
        };
        let Some(mask) = mask else {
            return Ok(self.clone());
        };
        let data: Vec<S> = self
            .data
            .iter()
            .zip(&mask)
            .map(|(&x, &m)| x * m)
            .collect();
        let pa = pid(self, &tape);
        emit("dropout", self.shape.clone(), data, tape, move || {
            Box::new(move |g, sink| {
                if let Some(ia) = pa {
                    let buf = sink.grad_mut(ia);
                    for ((d, &gv), &m) in buf.iter_mut().zip(g).zip(&mask) {
                        *d += gv * m;
                    }
                }
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Ids, Mask, Tape, Tensor, TensorError};

    fn t2(rows: usize, cols: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::new(vec![rows, cols], v.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let i = t2(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = t2(2, 2, &[3.0, 4.0, 5.0, 6.0]);
        assert_eq!(i.matmul(&b).unwrap().to_vec(), vec![3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn matmul_row_times_col() {
        let a = t2(1, 2, &[1.0, 2.0]);
        let b = t2(2, 1, &[3.0, 4.0]);
        assert_eq!(a.matmul(&b).unwrap().to_vec(), vec![11.0]);
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let a = t2(2, 3, &[0.0; 6]);
        let b = t2(2, 2, &[0.0; 4]);
        assert!(matches!(
            a.matmul(&b),
            Err(TensorError::Dimension { .. })
        ));
    }

    #[test]
    fn matmul_batched_broadcasts_rhs() {
        let a = Tensor::new(vec![2, 1, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = t2(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 1, 2]);
        assert_eq!(c.to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_t_matches_explicit_transpose() {
        let a = t2(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = t2(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        // a · bᵀ
        let c = a.matmul_t(&b).unwrap();
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.to_vec(), vec![4.0, 2.0, 10.0, 5.0]);
    }

    #[test]
    fn softmax_symmetry() {
        let x = Tensor::<f64>::new(vec![3], vec![0.0, 0.0, 0.0]).unwrap();
        let y = x.softmax(None).unwrap();
        for v in y.to_vec() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_is_stable_for_large_inputs() {
        let x = Tensor::<f64>::new(vec![2], vec![1000.0, 0.0]).unwrap();
        let y = x.softmax(None).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-9);
        assert!(y.data()[1] >= 0.0 && y.data()[1] < 1e-9);
    }

    #[test]
    fn softmax_hand_case() {
        // exp(1), exp(2), exp(3) normalized.
        let x = Tensor::<f64>::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = x.softmax(None).unwrap().to_vec();
        let expect = [0.09003, 0.24473, 0.66524];
        for (a, e) in y.iter().zip(expect) {
            assert!((a - e).abs() < 1e-5, "{a} vs {e}");
        }
    }

    #[test]
    fn softmax_masked_rows_are_exact_zero_and_sum_to_one() {
        let x = t2(2, 3, &[5.0, 1.0, 9.0, 2.0, 2.0, 2.0]);
        let m = Mask::new(vec![2, 3], vec![true, true, false, true, false, true]).unwrap();
        let y = x.softmax(Some(&m)).unwrap();
        assert_eq!(y.data()[2], 0.0);
        assert_eq!(y.data()[4], 0.0);
        let r0: f64 = y.data()[0..3].iter().sum();
        let r1: f64 = y.data()[3..6].iter().sum();
        assert!((r0 - 1.0).abs() < 1e-6 && (r1 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn softmax_all_masked_row_errors() {
        let x = t2(1, 2, &[1.0, 2.0]);
        let m = Mask::new(vec![1, 2], vec![false, false]).unwrap();
        assert!(matches!(
            x.softmax(Some(&m)),
            Err(TensorError::DegenerateMask { .. })
        ));
    }

    #[test]
    fn mean_pool_of_identical_rows_is_the_row() {
        let x = t2(3, 2, &[4.0, -1.0, 4.0, -1.0, 4.0, -1.0]);
        let m = Mask::all_true(vec![3]);
        assert_eq!(x.mean_pool(&m).unwrap().to_vec(), vec![4.0, -1.0]);
    }

    #[test]
    fn max_pool_elementwise() {
        let x = t2(2, 2, &[1.0, 5.0, 3.0, 2.0]);
        let m = Mask::all_true(vec![2]);
        assert_eq!(x.max_pool(&m).unwrap().to_vec(), vec![3.0, 5.0]);
    }

    #[test]
    fn mean_pool_masked_exclusion() {
        let x = t2(3, 2, &[2.0, 2.0, 4.0, 4.0, 99.0, 99.0]);
        let m = Mask::new(vec![3], vec![true, true, false]).unwrap();
        assert_eq!(x.mean_pool(&m).unwrap().to_vec(), vec![3.0, 3.0]);
    }

    #[test]
    fn pool_rejects_empty_sequence() {
        let x = t2(2, 2, &[0.0; 4]);
        let m = Mask::new(vec![2], vec![false, false]).unwrap();
        assert!(matches!(
            x.mean_pool(&m),
            Err(TensorError::DegenerateMask { .. })
        ));
        assert!(matches!(
            x.max_pool(&m),
            Err(TensorError::DegenerateMask { .. })
        ));
    }

    #[test]
    fn max_pool_ties_route_gradient_to_lowest_index() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.watch(&t2(2, 1, &[7.0, 7.0]));
        let y = x.max_pool(&Mask::all_true(vec![2])).unwrap();
        let loss = y.sum_all().unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.wrt(&x).unwrap(), &[1.0, 0.0]);
    }

    #[test]
    fn layer_norm_of_constant_row_is_affine_offset_only() {
        let x = t2(1, 4, &[3.0, 3.0, 3.0, 3.0]);
        let gamma = Tensor::ones(vec![4]);
        let beta = Tensor::zeros(vec![4]);
        let y = x.layer_norm(&gamma, &beta, 1e-6).unwrap();
        for v in y.to_vec() {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_v() {
        let logits = t2(1, 5, &[0.3; 5]);
        let targets = Ids::from_slice(&[2]);
        let mask = Mask::all_true(vec![1]);
        let loss = logits.cross_entropy(&targets, &mask, 0.0).unwrap();
        assert!((loss.item() - (5.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_smoothed_hand_case() {
        // Closed form: lse(x) − (1−ε)·x[t] − (ε/V)·Σx.
        let xs = [0.2, -0.1, 0.4, 0.0];
        let logits = t2(1, 4, &xs);
        let targets = Ids::from_slice(&[2]);
        let mask = Mask::all_true(vec![1]);
        let eps = 0.1;
        let loss = logits.cross_entropy(&targets, &mask, eps).unwrap();
        let lse = xs.iter().map(|v| v.exp()).sum::<f64>().ln();
        let expect = lse - (1.0 - eps) * 0.4 - (eps / 4.0) * xs.iter().sum::<f64>();
        assert!((loss.item() - expect).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_rejects_out_of_vocab_target() {
        let logits = t2(1, 3, &[0.0; 3]);
        let targets = Ids::from_slice(&[3]);
        let mask = Mask::all_true(vec![1]);
        assert!(matches!(
            logits.cross_entropy(&targets, &mask, 0.0),
            Err(TensorError::Index { .. })
        ));
    }

    #[test]
    fn embedding_rejects_out_of_range_id() {
        let table = t2(3, 2, &[0.0; 6]);
        assert!(matches!(
            table.embedding(&Ids::from_slice(&[5])),
            Err(TensorError::Index { .. })
        ));
    }

    #[test]
    fn shared_subexpression_accumulates_both_paths() {
        // y = x*x + x  =>  dy/dx = 2x + 1
        let tape: Tape<f64> = Tape::new();
        let x = tape.watch(&Tensor::new(vec![2], vec![3.0, -2.0]).unwrap());
        let y = x.mul(&x).unwrap().add(&x).unwrap();
        let loss = y.sum_all().unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.wrt(&x).unwrap(), &[7.0, -3.0]);
    }

    #[test]
    fn matmul_grad_of_sum_is_ones_times_b_transposed() {
        let tape: Tape<f64> = Tape::new();
        let a = tape.watch(&t2(2, 3, &[0.5, -1.0, 2.0, 1.5, 0.0, -0.5]));
        let b = t2(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let c = a.matmul(&b).unwrap();
        let loss = c.sum_all().unwrap();
        let grads = tape.backward(&loss).unwrap();
        // d sum(AB) / dA = ones(m,n) · Bᵀ
        let ones = t2(2, 2, &[1.0; 4]);
        let expect = ones.matmul_t(&b).unwrap();
        assert_eq!(grads.wrt(&a).unwrap(), expect.data());
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let x = Tensor::new(vec![1], vec![1.0e308]).unwrap();
        let y = x.mul(&x);
        assert!(matches!(y, Err(TensorError::NonFinite { .. })));
    }

    #[test]
    fn dropout_without_stream_is_identity() {
        let tape: Tape<f64> = Tape::new();
        let x = tape.watch(&Tensor::ones(vec![8]));
        let y = x.dropout(0.5).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn dropout_with_stream_zeroes_and_rescales() {
        let tape: Tape<f64> = Tape::new().with_dropout_seed(7);
        let x = tape.watch(&Tensor::ones(vec![512]));
        let y = x.dropout(0.25).unwrap();
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count();
        assert!(zeros > 64 && zeros < 192, "zeros={zeros}");
        for &v in y.data() {
            assert!(v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-12);
        }
    }
}
