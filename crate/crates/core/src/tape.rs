//! Reverse-mode differentiation over a linear tape of recorded primitives.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order and backward is a single reverse sweep.

use crate::error::{invalid, shape_err, Result};
use crate::ops::{self, Pad4, Padding};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    ReflectPad {
        x: Var,
        pad: Pad4,
    },
    Conv {
        x: Var,
        k: Var,
        b: Var,
        stride: usize,
    },
    Upsample {
        x: Var,
        factor: usize,
    },
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    InstanceNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor<T>,
        inv_std: Vec<T>,
    },
    SpatialMean(Var),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Gram(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    SumSquares(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros shaped like `like` if nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor<T>) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a constant; no gradient is propagated into it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a differentiable input.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn reflect_pad(&mut self, x: Var, pad: Pad4) -> Result<Var> {
        if pad.is_zero() {
            return Ok(x);
        }
        let value = ops::reflect_pad(self.value(x), pad)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::ReflectPad { x, pad }, rg))
    }

    /// Convolution; same-reflect padding is recorded as a separate pad node.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Var, stride: usize, padding: Padding) -> Result<Var> {
        let (kh, kw) = {
            let (_, _, kh, kw) = self.value(k).dims4()?;
            (kh, kw)
        };
        let (_, _, h, w) = self.value(x).dims4()?;
        ops::conv2d_output_dims(h, w, kh, kw, stride, padding)?;
        let xp = self.reflect_pad(x, padding.extents(kh, kw))?;
        let value = ops::conv2d_valid(self.value(xp), self.value(k), self.value(b), stride)?;
        let rg = self.rg(&[xp, k, b]);
        Ok(self.push(value, Op::Conv { x: xp, k, b, stride }, rg))
    }

    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Result<Var> {
        let value = ops::upsample_nearest(self.value(x), factor)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Upsample { x, factor }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = ops::relu(self.value(x));
        let rg = self.rg(&[x]);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = ops::sigmoid(self.value(x));
        let rg = self.rg(&[x]);
        self.push(value, Op::Sigmoid(x), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::add(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::sub(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::mul(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let value = ops::scale(self.value(x), s);
        let rg = self.rg(&[x]);
        self.push(value, Op::Scale(x, s), rg)
    }

    /// `gamma * (x - mu) / sqrt(var + eps) + beta` per (sample, channel).
    ///
    /// `gamma` and `beta` are either `[C]` (shared across the batch) or `[N, C]`.
    pub fn instance_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        if !(eps > T::zero()) {
            return Err(invalid!("normalization eps must be positive"));
        }
        let (n, c, h, w) = self.value(x).dims4()?;
        let per_sample = |t: &Tensor<T>, what: &str| -> Result<bool> {
            if t.shape() == [c] {
                Ok(false)
            } else if t.shape() == [n, c] {
                Ok(true)
            } else {
                Err(shape_err!(
                    "{} shape {:?} does not match {} channels (batch {})",
                    what,
                    t.shape(),
                    c,
                    n
                ))
            }
        };
        let g_ps = per_sample(self.value(gamma), "gamma")?;
        let b_ps = per_sample(self.value(beta), "beta")?;
        let hw = h * w;
        let inv_hw = T::one() / T::of(hw as f64);
        let xv = self.value(x).data();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut xhat = Vec::with_capacity(xv.len());
        let mut out = Vec::with_capacity(xv.len());
        let mut inv_std = Vec::with_capacity(n * c);
        for (plane, chunk) in xv.chunks(hw).enumerate() {
            let ci = plane % c;
            let g = gv[if g_ps { plane } else { ci }];
            let b = bv[if b_ps { plane } else { ci }];
            let mean = chunk.iter().copied().sum::<T>() * inv_hw;
            let var = chunk.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_hw;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for &v in chunk {
                let z = (v - mean) * is;
                xhat.push(z);
                out.push(g * z + b);
            }
        }
        let shape = [n, c, h, w];
        let value = Tensor::new(&shape, out)?;
        let xhat = Tensor::new(&shape, xhat)?;
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(
            value,
            Op::InstanceNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    pub fn spatial_mean(&mut self, x: Var) -> Result<Var> {
        let value = ops::spatial_mean(self.value(x))?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::SpatialMean(x), rg))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let value = ops::linear(self.value(x), self.value(w), self.value(b))?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(value, Op::Linear { x, w, b }, rg))
    }

    pub fn gram(&mut self, x: Var) -> Result<Var> {
        let value = ops::gram_matrix(self.value(x))?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Gram(x), rg))
    }

    /// Columns `start..start+len` of a rank-2 `[N, D]` value.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (n, d) = self.value(x).dims2()?;
        if start + len > d {
            return Err(shape_err!(
                "column slice {}..{} out of range for width {}",
                start,
                start + len,
                d
            ));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(n * len);
        for r in 0..n {
            out.extend_from_slice(&src[r * d + start..r * d + start + len]);
        }
        let value = Tensor::new(&[n, len], out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::SliceCols { x, start }, rg))
    }

    /// Sum of squared elements, as a rank-0 value.
    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|&v| v * v).sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::SumSquares(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Gradients of the rank-0 value `out` with respect to every recorded node.
    pub fn backward(&self, out: Var) -> Result<Gradients<T>> {
        if self.value(out).len() != 1 {
            return Err(shape_err!(
                "backward needs a scalar output, got shape {:?}",
                self.value(out).shape()
            ));
        }
        let seed = Tensor::full(self.value(out).shape(), T::one());
        self.backward_with(out, seed)
    }

    /// Backward sweep seeded with an arbitrary upstream gradient for `out`.
    pub fn backward_with(&self, out: Var, seed: Tensor<T>) -> Result<Gradients<T>> {
        if seed.shape() != self.value(out).shape() {
            return Err(shape_err!(
                "seed shape {:?} does not match output {:?}",
                seed.shape(),
                self.value(out).shape()
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        for idx in (0..=out.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += *b;
                }
            }
            slot => *slot = Some(g),
        }
    }

    /// Reduces a broadcast gradient back to the operand's shape.
    fn unbroadcast(&self, v: Var, g: Tensor<T>) -> Tensor<T> {
        let shape = self.value(v).shape();
        if shape == g.shape() {
            g
        } else {
            Tensor::full(shape, g.sum())
        }
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::ReflectPad { x, pad } => {
                let dx = ops::reflect_pad_backward(g, self.value(*x).shape(), *pad)?;
                self.accumulate(grads, *x, dx);
            }
            Op::Conv { x, k, b, stride } => {
                let (dx, dk, db) = ops::conv2d_valid_backward(
                    self.value(*x),
                    self.value(*k),
                    g,
                    *stride,
                    self.requires_grad(*x),
                    self.requires_grad(*k),
                )?;
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx);
                }
                if let Some(dk) = dk {
                    self.accumulate(grads, *k, dk);
                }
                self.accumulate(grads, *b, db);
            }
            Op::Upsample { x, factor } => {
                let dx = ops::upsample_nearest_backward(g, *factor)?;
                self.accumulate(grads, *x, dx);
            }
            Op::Relu(x) => {
                let dx = g.zip_map(self.value(*x), |gv, xv| if xv > T::zero() { gv } else { T::zero() })?;
                self.accumulate(grads, *x, dx);
            }
            Op::Sigmoid(x) => {
                let dx = g.zip_map(&node.value, |gv, y| gv * y * (T::one() - y))?;
                self.accumulate(grads, *x, dx);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, self.unbroadcast(*a, g.clone()));
                self.accumulate(grads, *b, self.unbroadcast(*b, g.clone()));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, self.unbroadcast(*a, g.clone()));
                let neg = g.map(|v| -v);
                self.accumulate(grads, *b, self.unbroadcast(*b, neg));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    let da = ops::mul(g, bv)?;
                    self.accumulate(grads, *a, self.unbroadcast(*a, da));
                }
                if self.requires_grad(*b) {
                    let db = ops::mul(g, av)?;
                    self.accumulate(grads, *b, self.unbroadcast(*b, db));
                }
            }
            Op::Scale(x, s) => {
                let s = *s;
                self.accumulate(grads, *x, g.map(|v| v * s));
            }
            Op::InstanceNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => self.instance_norm_backward(*x, *gamma, *beta, xhat, inv_std, g, grads)?,
            Op::SpatialMean(x) => {
                let dx = ops::spatial_mean_backward(g, self.value(*x).shape())?;
                self.accumulate(grads, *x, dx);
            }
            Op::Linear { x, w, b } => {
                let (dx, dw, db) = ops::linear_backward(self.value(*x), self.value(*w), g)?;
                self.accumulate(grads, *x, dx);
                self.accumulate(grads, *w, dw);
                self.accumulate(grads, *b, db);
            }
            Op::Gram(x) => {
                let dx = ops::gram_backward(self.value(*x), g)?;
                self.accumulate(grads, *x, dx);
            }
            Op::SliceCols { x, start } => {
                let (n, d) = self.value(*x).dims2()?;
                let (_, len) = g.dims2()?;
                let mut dx = vec![T::zero(); n * d];
                for r in 0..n {
                    dx[r * d + start..r * d + start + len].copy_from_slice(&g.data()[r * len..(r + 1) * len]);
                }
                self.accumulate(grads, *x, Tensor::new(&[n, d], dx)?);
            }
            Op::SumSquares(x) => {
                let s = g.item() + g.item();
                self.accumulate(grads, *x, self.value(*x).map(|v| s * v));
            }
            Op::Sum(x) => {
                let s = g.item();
                self.accumulate(grads, *x, Tensor::full(self.value(*x).shape(), s));
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn instance_norm_backward(
        &self,
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: &Tensor<T>,
        inv_std: &[T],
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let hw = h * w;
        let inv_hw = T::one() / T::of(hw as f64);
        let gv = self.value(gamma).data();
        let g_ps = self.value(gamma).shape() == [n, c];
        let b_ps = self.value(beta).shape() == [n, c];
        let mut dgamma = vec![T::zero(); n * c];
        let mut dbeta = vec![T::zero(); n * c];
        let mut dx = vec![T::zero(); n * c * hw];
        let need_x = self.requires_grad(x);
        for plane in 0..n * c {
            let gp = &g.data()[plane * hw..(plane + 1) * hw];
            let zp = &xhat.data()[plane * hw..(plane + 1) * hw];
            let sum_g: T = gp.iter().copied().sum();
            let sum_gz: T = gp.iter().zip(zp).map(|(&a, &b)| a * b).sum();
            dbeta[plane] = sum_g;
            dgamma[plane] = sum_gz;
            if need_x {
                let gam = gv[if g_ps { plane } else { plane % c }];
                let coef = gam * inv_std[plane];
                let mg = sum_g * inv_hw;
                let mgz = sum_gz * inv_hw;
                for ((d, &gi), &zi) in dx[plane * hw..(plane + 1) * hw].iter_mut().zip(gp).zip(zp) {
                    *d = coef * (gi - mg - zi * mgz);
                }
            }
        }
        let fold = |v: Vec<T>, per_sample: bool| -> Result<Tensor<T>> {
            if per_sample {
                Tensor::new(&[n, c], v)
            } else {
                let mut acc = vec![T::zero(); c];
                for (i, x) in v.into_iter().enumerate() {
                    acc[i % c] += x;
                }
                Tensor::new(&[c], acc)
            }
        };
        if need_x {
            self.accumulate(grads, x, Tensor::new(&[n, c, h, w], dx)?);
        }
        self.accumulate(grads, gamma, fold(dgamma, g_ps)?);
        self.accumulate(grads, beta, fold(dbeta, b_ps)?);
        Ok(())
    }
}
