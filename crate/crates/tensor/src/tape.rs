//! Reverse-mode differentiation record.
//!
//! A [`Tape`] owns every value produced during one forward pass. Operations
//! append nodes in execution order, so node indices are already a topological
//! order and the backward sweep is a single reverse pass.

use crate::error::{invalid, shape_mismatch, Result, TensorError};
use crate::ops::{self, Activation, ConvGeometry};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        geometry: ConvGeometry,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Activation(Var, Activation),
    Softmax(Var),
    Cosine(Var, Var),
    ChannelCosine(Var, Var),
    GlobalAvgPool(Var),
    Concat(Vec<Var>),
    Slice {
        input: Var,
        start: usize,
        len: usize,
    },
    Linear {
        weight: Var,
        input: Var,
        bias: Var,
    },
    Sum(Var),
    Norm(Var),
    ScaleChannels {
        input: Var,
        weights: Var,
    },
    ScaleBy {
        input: Var,
        factor: Var,
    },
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Single-threaded differentiation record for one pipeline instance.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable leaf: its gradient is populated by [`Tape::backward`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward root with respect to leaf `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let geometry = ConvGeometry::new(
            self.shape(input),
            self.shape(kernel),
            self.shape(bias),
            stride,
            padding,
        )?;
        let value = ops::conv2d_with(
            &geometry,
            self.value(input).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
        );
        let rg = self.any_grad(&[input, kernel, bias]);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geometry,
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::zip_with("add", self.value(a), self.value(b), |x, y| x + y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::zip_with("sub", self.value(a), self.value(b), |x, y| x - y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::zip_with("mul", self.value(a), self.value(b), |x, y| x * y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// Multiply by a fixed constant.
    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Scale(a, factor), rg)
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let value = ops::activation(self.value(a), kind);
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Activation(a, kind), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Relu)
    }

    pub fn softmax(&mut self, logits: Var) -> Result<Var> {
        let value = ops::softmax(self.value(logits))?;
        let rg = self.any_grad(&[logits]);
        Ok(self.push(value, Op::Softmax(logits), rg))
    }

    /// Cosine similarity of the flattened operands, as a `[1]` tensor.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = Tensor::scalar(ops::cosine_similarity(self.value(a), self.value(b))?);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Cosine(a, b), rg))
    }

    /// Per-channel cosine similarity of two `C×H×W` tensors, as a `[C]` vector.
    pub fn channel_cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::channel_cosine(self.value(a), self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::ChannelCosine(a, b), rg))
    }

    pub fn global_avg_pool(&mut self, a: Var) -> Result<Var> {
        let value = ops::global_avg_pool(self.value(a))?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::GlobalAvgPool(a), rg))
    }

    /// Concatenate along the leading (channel) axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = ops::concat(&values)?;
        let rg = self.any_grad(parts);
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    /// Rows `start..start+len` of the leading axis.
    pub fn slice(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let value = ops::slice_leading(self.value(input), start, len)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(value, Op::Slice { input, start, len }, rg))
    }

    pub fn linear(&mut self, weight: Var, input: Var, bias: Var) -> Result<Var> {
        let value = ops::linear(self.value(weight), self.value(input), self.value(bias))?;
        let rg = self.any_grad(&[weight, input, bias]);
        Ok(self.push(value, Op::Linear { weight, input, bias }, rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Sum(a), rg)
    }

    /// Euclidean norm of the flattened operand.
    pub fn norm(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(ops::l2_norm(self.value(a)));
        let rg = self.any_grad(&[a]);
        self.push(value, Op::Norm(a), rg)
    }

    pub fn scale_channels(&mut self, input: Var, weights: Var) -> Result<Var> {
        let value = ops::scale_channels(self.value(input), self.value(weights))?;
        let rg = self.any_grad(&[input, weights]);
        Ok(self.push(value, Op::ScaleChannels { input, weights }, rg))
    }

    /// Multiply a tensor by a one-element tensor.
    pub fn scale_by(&mut self, input: Var, factor: Var) -> Result<Var> {
        let f = ops::require_scalar("scale_by", self.value(factor))?;
        let value = self.value(input).map(|x| x * f);
        let rg = self.any_grad(&[input, factor]);
        Ok(self.push(value, Op::ScaleBy { input, factor }, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Sum of several same-shaped values, accumulated left to right.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let (&first, rest) = terms
            .split_first()
            .ok_or_else(|| invalid("add_all", "no terms"))?;
        let mut acc = first;
        for &t in rest {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    /// Replay the record backwards from a scalar `root`.
    ///
    /// Afterwards [`Tape::grad`] returns the derivative of `root` for every
    /// differentiable leaf that `root` depends on; leaves with no path to the
    /// root receive an all-zero gradient. Gradients from an earlier call are
    /// replaced.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_value = self.value(root);
        if root_value.numel() != 1 {
            return Err(TensorError::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut acc: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        acc[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let Some(upstream) = acc[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                acc[idx] = Some(upstream);
                continue;
            }
            self.propagate(idx, &upstream, &mut acc);
        }

        self.grads = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| {
                if !(node.requires_grad && matches!(node.op, Op::Leaf)) {
                    return None;
                }
                let g = acc.get_mut(i).and_then(Option::take);
                let data = g.unwrap_or_else(|| vec![0.0; node.value.numel()]);
                Some(Tensor::new(node.value.shape().to_vec(), data).expect("gradient shape"))
            })
            .collect();
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], acc: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => unreachable!("leaves are handled by the caller"),
            Op::Conv2d {
                input,
                kernel,
                bias,
                geometry,
            } => {
                let geo = geometry;
                let p = geo.out_pixels();
                let kl = geo.patch_len();
                if self.requires_grad(*bias) {
                    let gb: Vec<f64> = g.chunks(p).map(|row| row.iter().sum()).collect();
                    self.accumulate(acc, *bias, |dst| add_into(dst, &gb));
                }
                if self.requires_grad(*kernel) {
                    let cols = geo.im2col(self.value(*input).data());
                    self.accumulate(acc, *kernel, |dst| {
                        // dW (Cout×K) += dY (Cout×P) · colsᵀ (P×K)
                        ops::gemm(
                            geo.out_channels,
                            p,
                            kl,
                            g,
                            p as isize,
                            1,
                            &cols,
                            1,
                            p as isize,
                            dst,
                        );
                    });
                }
                if self.requires_grad(*input) {
                    let mut dcols = vec![0.0; kl * p];
                    // dcols (K×P) = Wᵀ (K×Cout) · dY (Cout×P)
                    ops::gemm(
                        kl,
                        geo.out_channels,
                        p,
                        self.value(*kernel).data(),
                        1,
                        kl as isize,
                        g,
                        p as isize,
                        1,
                        &mut dcols,
                    );
                    self.accumulate(acc, *input, |dst| geo.col2im(&dcols, dst));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(acc, *a, |dst| add_into(dst, g));
                self.accumulate(acc, *b, |dst| add_into(dst, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(acc, *a, |dst| add_into(dst, g));
                self.accumulate(acc, *b, |dst| dst.iter_mut().zip(g).for_each(|(d, &x)| *d -= x));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(acc, *a, |dst| {
                    for i in 0..dst.len() {
                        dst[i] += g[i] * vb[i];
                    }
                });
                self.accumulate(acc, *b, |dst| {
                    for i in 0..dst.len() {
                        dst[i] += g[i] * va[i];
                    }
                });
            }
            Op::Scale(a, f) => {
                self.accumulate(acc, *a, |dst| {
                    dst.iter_mut().zip(g).for_each(|(d, &x)| *d += f * x)
                });
            }
            Op::Activation(a, kind) => {
                self.accumulate(acc, *a, |dst| {
                    for i in 0..dst.len() {
                        dst[i] += g[i] * kind.derivative_from_output(out[i]);
                    }
                });
            }
            Op::Softmax(a) => {
                let gy: f64 = g.iter().zip(out).map(|(x, y)| x * y).sum();
                self.accumulate(acc, *a, |dst| {
                    for i in 0..dst.len() {
                        dst[i] += out[i] * (g[i] - gy);
                    }
                });
            }
            Op::Cosine(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let (ga, gb) = cosine_grads(va, vb, g[0]);
                self.accumulate(acc, *a, |dst| add_into(dst, &ga));
                self.accumulate(acc, *b, |dst| add_into(dst, &gb));
            }
            Op::ChannelCosine(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let c = ta.shape()[0];
                let plane = ta.numel() / c;
                let mut ga = vec![0.0; ta.numel()];
                let mut gb = vec![0.0; tb.numel()];
                for j in 0..c {
                    let (da, db) = cosine_grads(ta.channel(j), tb.channel(j), g[j]);
                    ga[j * plane..(j + 1) * plane].copy_from_slice(&da);
                    gb[j * plane..(j + 1) * plane].copy_from_slice(&db);
                }
                self.accumulate(acc, *a, |dst| add_into(dst, &ga));
                self.accumulate(acc, *b, |dst| add_into(dst, &gb));
            }
            Op::GlobalAvgPool(a) => {
                let shape = self.shape(*a);
                let plane = shape[1] * shape[2];
                let inv = 1.0 / plane as f64;
                self.accumulate(acc, *a, |dst| {
                    for (i, d) in dst.iter_mut().enumerate() {
                        *d += g[i / plane] * inv;
                    }
                });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &part in parts {
                    let n = self.value(part).numel();
                    let slice = &g[offset..offset + n];
                    self.accumulate(acc, part, |dst| add_into(dst, slice));
                    offset += n;
                }
            }
            Op::Slice { input, start, len } => {
                let shape = self.shape(*input);
                let row: usize = shape[1..].iter().product();
                let (lo, hi) = (start * row, (start + len) * row);
                self.accumulate(acc, *input, |dst| add_into(&mut dst[lo..hi], g));
            }
            Op::Linear { weight, input, bias } => {
                let w = self.value(*weight);
                let x = self.value(*input).data();
                let (n_out, n_in) = (w.shape()[0], w.shape()[1]);
                self.accumulate(acc, *bias, |dst| add_into(dst, g));
                self.accumulate(acc, *weight, |dst| {
                    for o in 0..n_out {
                        for i in 0..n_in {
                            dst[o * n_in + i] += g[o] * x[i];
                        }
                    }
                });
                self.accumulate(acc, *input, |dst| {
                    let wd = w.data();
                    for o in 0..n_out {
                        for i in 0..n_in {
                            dst[i] += g[o] * wd[o * n_in + i];
                        }
                    }
                });
            }
            Op::Sum(a) => {
                self.accumulate(acc, *a, |dst| dst.iter_mut().for_each(|d| *d += g[0]));
            }
            Op::Norm(a) => {
                let n = out[0];
                if n > 0.0 {
                    let va = self.value(*a).data();
                    self.accumulate(acc, *a, |dst| {
                        for i in 0..dst.len() {
                            dst[i] += g[0] * va[i] / n;
                        }
                    });
                }
            }
            Op::ScaleChannels { input, weights } => {
                let x = self.value(*input);
                let w = self.value(*weights).data();
                let plane = x.numel() / w.len();
                self.accumulate(acc, *input, |dst| {
                    for i in 0..dst.len() {
                        dst[i] += g[i] * w[i / plane];
                    }
                });
                self.accumulate(acc, *weights, |dst| {
                    let xd = x.data();
                    for (j, d) in dst.iter_mut().enumerate() {
                        let lo = j * plane;
                        *d += (lo..lo + plane).map(|i| g[i] * xd[i]).sum::<f64>();
                    }
                });
            }
            Op::ScaleBy { input, factor } => {
                let f = self.value(*factor).item();
                let x = self.value(*input).data();
                self.accumulate(acc, *input, |dst| {
                    dst.iter_mut().zip(g).for_each(|(d, &v)| *d += f * v)
                });
                self.accumulate(acc, *factor, |dst| {
                    dst[0] += g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                });
            }
            Op::Reshape(a) => {
                self.accumulate(acc, *a, |dst| add_into(dst, g));
            }
        }
    }

    fn accumulate(&self, acc: &mut [Option<Vec<f64>>], target: Var, write: impl FnOnce(&mut [f64])) {
        if !self.requires_grad(target) {
            return;
        }
        let slot = acc[target.0].get_or_insert_with(|| vec![0.0; self.value(target).numel()]);
        write(slot);
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
}

/// Gradients of `cos(a, b)` scaled by `upstream`; zero when a norm vanishes.
fn cosine_grads(a: &[f64], b: &[f64], upstream: f64) -> (Vec<f64>, Vec<f64>) {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return (vec![0.0; a.len()], vec![0.0; b.len()]);
    }
    let cos = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    let ga = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| upstream * (y / (na * nb) - cos * x / (na * na)))
        .collect();
    let gb = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| upstream * (x / (na * nb) - cos * y / (nb * nb)))
        .collect();
    (ga, gb)
}

/// Shape check helper for callers composing tape operations.
pub fn expect_shape(op: &'static str, tape: &Tape, v: Var, expected: &[usize]) -> Result<()> {
    if tape.shape(v) != expected {
        return Err(shape_mismatch(op, expected, tape.shape(v)));
    }
    Ok(())
}
