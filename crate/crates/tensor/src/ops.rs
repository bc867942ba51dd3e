//! Forward kernels shared by the tape and by callers that need plain values.
//!
//! Every function here is pure: it validates shapes, allocates a fresh output
//! and never touches its inputs.

use crate::error::{invalid, shape_mismatch, Result, TensorError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `y`.
    pub(crate) fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activation(input: &Tensor, kind: Activation) -> Tensor {
    input.map(|x| kind.apply(x))
}

/// Geometry of a 2D convolution, resolved from tensor shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    pub fn new(
        input: &[usize],
        kernel: &[usize],
        bias: &[usize],
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if input.len() != 3 {
            return Err(invalid("conv2d", format!("input must be C×H×W, got {input:?}")));
        }
        if kernel.len() != 4 || kernel[2] != kernel[3] {
            return Err(invalid(
                "conv2d",
                format!("kernel must be Cout×Cin×k×k, got {kernel:?}"),
            ));
        }
        if kernel[1] != input[0] {
            return Err(shape_mismatch("conv2d", &[kernel[1]], &[input[0]]));
        }
        if bias != [kernel[0]] {
            return Err(shape_mismatch("conv2d", &[kernel[0]], bias));
        }
        if stride == 0 {
            return Err(invalid("conv2d", "stride must be positive"));
        }
        let k = kernel[2];
        let (h, w) = (input[1], input[2]);
        if k == 0 || k > h + 2 * padding || k > w + 2 * padding {
            return Err(invalid(
                "conv2d",
                format!("kernel {k} does not fit {h}×{w} with padding {padding}"),
            ));
        }
        Ok(Self {
            in_channels: input[0],
            out_channels: kernel[0],
            height: h,
            width: w,
            kernel: k,
            stride,
            padding,
            out_height: (h + 2 * padding - k) / stride + 1,
            out_width: (w + 2 * padding - k) / stride + 1,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn out_pixels(&self) -> usize {
        self.out_height * self.out_width
    }

    /// Unfold the padded input into a `patch_len × out_pixels` matrix.
    pub(crate) fn im2col(&self, input: &[f64]) -> Vec<f64> {
        let p = self.out_pixels();
        let mut cols = vec![0.0; self.patch_len() * p];
        let k = self.kernel;
        for c in 0..self.in_channels {
            let plane = &input[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..self.out_height {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= self.height as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * self.width..(iy as usize + 1) * self.width];
                        for ox in 0..self.out_width {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix >= 0 && ix < self.width as isize {
                                dst[oy * self.out_width + ox] = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Scatter-add a `patch_len × out_pixels` matrix back onto the input grid.
    pub(crate) fn col2im(&self, cols: &[f64], out: &mut [f64]) {
        let p = self.out_pixels();
        let k = self.kernel;
        for c in 0..self.in_channels {
            let plane = &mut out[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..self.out_height {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= self.height as isize {
                            continue;
                        }
                        let base = iy as usize * self.width;
                        for ox in 0..self.out_width {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix >= 0 && ix < self.width as isize {
                                plane[base + ix as usize] += src[oy * self.out_width + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `c (m×n) += a (m×k) · b (k×n)` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // SAFETY: the strides describe matrices lying entirely within the given
    // slices; callers pass dense row-major buffers (or their transposes)
    // whose lengths were validated against the same extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn conv2d(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let g = ConvGeometry::new(input.shape(), kernel.shape(), bias.shape(), stride, padding)?;
    Ok(conv2d_with(&g, input.data(), kernel.data(), bias.data()))
}

pub(crate) fn conv2d_with(g: &ConvGeometry, input: &[f64], kernel: &[f64], bias: &[f64]) -> Tensor {
    let p = g.out_pixels();
    let kl = g.patch_len();
    let cols = g.im2col(input);
    let mut out = vec![0.0; g.out_channels * p];
    for (o, row) in out.chunks_mut(p).enumerate() {
        row.fill(bias[o]);
    }
    gemm(
        g.out_channels,
        kl,
        p,
        kernel,
        kl as isize,
        1,
        &cols,
        p as isize,
        1,
        &mut out,
    );
    Tensor::new(vec![g.out_channels, g.out_height, g.out_width], out).expect("conv2d output shape")
}

/// Numerically stable softmax of a 1-D tensor.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if logits.ndim() != 1 {
        return Err(invalid(
            "softmax",
            format!("expected a vector, got {:?}", logits.shape()),
        ));
    }
    if logits.numel() == 0 {
        return Err(invalid("softmax", "empty input"));
    }
    Ok(Tensor::vector(softmax_slice(logits.data())))
}

pub(crate) fn softmax_slice(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine of two flat slices; zero when either has zero norm.
pub(crate) fn cosine_slice(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

pub fn cosine_similarity(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(shape_mismatch("cosine_similarity", a.shape(), b.shape()));
    }
    Ok(cosine_slice(a.data(), b.data()))
}

/// Per-channel cosine similarity of two `C×H×W` tensors.
pub fn channel_cosine(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(shape_mismatch("channel_cosine", a.shape(), b.shape()));
    }
    if a.ndim() != 3 {
        return Err(invalid(
            "channel_cosine",
            format!("expected C×H×W, got {:?}", a.shape()),
        ));
    }
    let c = a.shape()[0];
    Ok(Tensor::vector(
        (0..c).map(|j| cosine_slice(a.channel(j), b.channel(j))).collect(),
    ))
}

pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    if input.ndim() != 3 || input.shape()[1] * input.shape()[2] == 0 {
        return Err(invalid(
            "global_avg_pool",
            format!("expected non-empty C×H×W, got {:?}", input.shape()),
        ));
    }
    let c = input.shape()[0];
    let area = (input.shape()[1] * input.shape()[2]) as f64;
    Ok(Tensor::vector(
        (0..c)
            .map(|j| input.channel(j).iter().sum::<f64>() / area)
            .collect(),
    ))
}

/// Concatenate along the leading axis; trailing extents must agree.
pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| invalid("concat", "no parts"))?;
    if first.ndim() == 0 {
        return Err(invalid("concat", "parts must have at least one axis"));
    }
    let tail = &first.shape()[1..];
    let mut lead = 0;
    let mut data = Vec::with_capacity(parts.iter().map(|p| p.numel()).sum());
    for part in parts {
        if part.ndim() == 0 || &part.shape()[1..] != tail {
            return Err(shape_mismatch(
                "concat",
                tail,
                part.shape().get(1..).unwrap_or(&[]),
            ));
        }
        lead += part.shape()[0];
        data.extend_from_slice(part.data());
    }
    let mut shape = vec![lead];
    shape.extend_from_slice(tail);
    Tensor::new(shape, data)
}

/// Rows `start..start+len` of the leading axis.
pub fn slice_leading(input: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    if input.ndim() == 0 || start + len > input.shape()[0] {
        return Err(invalid(
            "slice",
            format!(
                "range {start}..{} out of bounds for {:?}",
                start + len,
                input.shape()
            ),
        ));
    }
    let row: usize = input.shape()[1..].iter().product();
    let mut shape = input.shape().to_vec();
    shape[0] = len;
    Tensor::new(shape, input.data()[start * row..(start + len) * row].to_vec())
}

/// `weight (out×in) · input (in) + bias (out)`.
pub fn linear(weight: &Tensor, input: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if weight.ndim() != 2 {
        return Err(invalid(
            "linear",
            format!("weight must be 2-D, got {:?}", weight.shape()),
        ));
    }
    let (out, inn) = (weight.shape()[0], weight.shape()[1]);
    if input.shape() != [inn] {
        return Err(shape_mismatch("linear", &[inn], input.shape()));
    }
    if bias.shape() != [out] {
        return Err(shape_mismatch("linear", &[out], bias.shape()));
    }
    let w = weight.data();
    let x = input.data();
    Ok(Tensor::vector(
        (0..out)
            .map(|o| bias.data()[o] + dot(&w[o * inn..(o + 1) * inn], x))
            .collect(),
    ))
}

/// Multiply channel `j` of a `C×H×W` tensor by `weights[j]`.
pub fn scale_channels(input: &Tensor, weights: &Tensor) -> Result<Tensor> {
    if input.ndim() != 3 {
        return Err(invalid(
            "scale_channels",
            format!("expected C×H×W, got {:?}", input.shape()),
        ));
    }
    let c = input.shape()[0];
    if weights.shape() != [c] {
        return Err(shape_mismatch("scale_channels", &[c], weights.shape()));
    }
    let plane = input.shape()[1] * input.shape()[2];
    let w = weights.data();
    let data = input
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| x * w[i / plane])
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

pub(crate) fn zip_with(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(shape_mismatch(op, a.shape(), b.shape()));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data)
}

pub fn l2_norm(input: &Tensor) -> f64 {
    norm(input.data())
}

pub(crate) fn require_scalar(op: &'static str, t: &Tensor) -> Result<f64> {
    if t.numel() != 1 {
        return Err(TensorError::ShapeMismatch {
            op,
            expected: vec![1],
            got: t.shape().to_vec(),
        });
    }
    Ok(t.item())
}
