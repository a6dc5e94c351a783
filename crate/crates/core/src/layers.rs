//! Forward and backward passes with hand-derived gradients.
//!
//! Weight layouts:
//! - conv:   (c_out, c_in, k, k)
//! - deconv: (c_in, c_out, k, k)
//! - fc:     (c_out, fan_in, 1, 1)
//!
//! All spatial ops use stride 1 and no padding. Convolution is a
//! correlation (no kernel flip) and deconvolution is its exact adjoint.
//! Backward functions accumulate into the block's gradient buffers and
//! return the gradient with respect to the layer input.

use thiserror::Error;

use crate::tensor::{Shape, Tensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayerError {
    #[error("input has {actual} channels, weights expect {expected}")]
    Channels { expected: usize, actual: usize },
    #[error("fc fan-in mismatch: weights expect {expected}, input provides {actual}")]
    FanIn { expected: usize, actual: usize },
    #[error("kernel {kernel} does not fit input {rows}x{cols}")]
    KernelTooLarge { kernel: usize, rows: usize, cols: usize },
    #[error("cannot reshape {from} into {to}")]
    Reshape { from: Shape, to: Shape },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Trainable parameters of one layer plus gradient and momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub weights: Tensor,
    pub biases: Vec<f64>,
    pub weight_grad: Tensor,
    pub bias_grad: Vec<f64>,
    pub weight_momentum: Tensor,
    pub bias_momentum: Vec<f64>,
}

impl ParamBlock {
    pub fn zeros(weight_shape: impl Into<Shape>, bias_len: usize) -> Result<Self, TensorError> {
        let shape = weight_shape.into();
        Ok(ParamBlock {
            weights: Tensor::zeros(shape)?,
            biases: vec![0.0; bias_len],
            weight_grad: Tensor::zeros(shape)?,
            bias_grad: vec![0.0; bias_len],
            weight_momentum: Tensor::zeros(shape)?,
            bias_momentum: vec![0.0; bias_len],
        })
    }

    pub fn from_parts(weights: Tensor, biases: Vec<f64>) -> Result<Self, TensorError> {
        let mut block = Self::zeros(weights.shape(), biases.len())?;
        block.weights = weights;
        block.biases = biases;
        Ok(block)
    }

    pub fn zero_grad(&mut self) {
        self.weight_grad.fill(0.0);
        self.bias_grad.fill(0.0);
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

// ---------------------------------------------------------------------------
// Summation order
// ---------------------------------------------------------------------------
//
// Every kernel below is a direct loop nest, and every output element is
// accumulated in one fixed order:
//
//   conv    y  = b[o],  then (c, p, q)      dx: (o, p, q)   dW, db: (n, i, j)
//   deconv  y  = b[o],  then (c, p, q)      dx: (o, p, q)   dW, db: (n, i, j)
//   fc      y  = b[o],  then i              dx: o           dW, db: n
//
// Loops are arranged so the innermost one runs over independent outputs
// (it vectorizes without reassociating any sum), which keeps results
// bit-identical to the literal definitions whatever the loop order.
// Gradients accumulate onto whatever the buffers already hold.

/// dst[t] += a · src[t]
#[inline]
fn axpy(dst: &mut [f64], a: f64, src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

fn kernel_slice(w: &Tensor, a: usize, b: usize) -> &[f64] {
    let s = w.shape();
    let kk = s.h() * s.w();
    let start = (a * s.c() + b) * kk;
    &w.data()[start..start + kk]
}

fn kernel_slice_mut(w: &mut Tensor, a: usize, b: usize) -> &mut [f64] {
    let s = w.shape();
    let kk = s.h() * s.w();
    let start = (a * s.c() + b) * kk;
    &mut w.data_mut()[start..start + kk]
}

/// out[i,j] += Σ_{p,q} kernel[p,q] · src[i+p, j+q], terms added in (p, q) order.
fn correlate_valid(out: &mut [f64], out_w: usize, src: &[f64], src_w: usize, kernel: &[f64], k: usize) {
    let out_h = out.len() / out_w;
    if out.len() == 1 {
        // a single running sum; the kernel covers `src` row by row
        let mut acc = out[0];
        for p in 0..k {
            for (&kv, &sv) in kernel[p * k..(p + 1) * k].iter().zip(&src[p * src_w..p * src_w + k]) {
                acc += kv * sv;
            }
        }
        out[0] = acc;
        return;
    }
    for p in 0..k {
        for q in 0..k {
            let kv = kernel[p * k + q];
            for i in 0..out_h {
                let s = (i + p) * src_w + q;
                axpy(&mut out[i * out_w..(i + 1) * out_w], kv, &src[s..s + out_w]);
            }
        }
    }
}

/// out[i+p, j+q] += kernel[p,q] · src[i,j], terms added in (p, q) order;
/// out is (h+k−1)×(w+k−1).
fn scatter_full(out: &mut [f64], src: &[f64], src_w: usize, kernel: &[f64], k: usize) {
    let src_h = src.len() / src_w;
    let out_w = src_w + k - 1;
    if src.len() == 1 {
        // one source pixel: each output gets exactly one term, so rows of
        // the kernel can go in at once
        for p in 0..k {
            axpy(&mut out[p * out_w..p * out_w + k], src[0], &kernel[p * k..(p + 1) * k]);
        }
        return;
    }
    for p in 0..k {
        for q in 0..k {
            let kv = kernel[p * k + q];
            for i in 0..src_h {
                let d = (i + p) * out_w + q;
                axpy(&mut out[d..d + src_w], kv, &src[i * src_w..(i + 1) * src_w]);
            }
        }
    }
}

/// grad[p,q] += small[i,j] · big[i+p, j+q], terms added in (i, j) order.
fn correlate_into_kernel(grad: &mut [f64], k: usize, big: &[f64], big_w: usize, small: &[f64], small_w: usize) {
    if small.len() == 1 {
        for p in 0..k {
            axpy(&mut grad[p * k..(p + 1) * k], small[0], &big[p * big_w..p * big_w + k]);
        }
        return;
    }
    for p in 0..k {
        let row = &mut grad[p * k..(p + 1) * k];
        let mut q = 0;
        while q + 8 <= k {
            kernel_block::<8>(&mut row[q..q + 8], p, q, big, big_w, small, small_w);
            q += 8;
        }
        if q + 4 <= k {
            kernel_block::<4>(&mut row[q..q + 4], p, q, big, big_w, small, small_w);
            q += 4;
        }
        while q < k {
            kernel_block::<1>(&mut row[q..q + 1], p, q, big, big_w, small, small_w);
            q += 1;
        }
    }
}

/// W adjacent entries of one kernel-gradient row, held in registers while
/// `small` is swept once.
#[inline(always)]
fn kernel_block<const W: usize>(dst: &mut [f64], p: usize, q: usize, big: &[f64], big_w: usize, small: &[f64], small_w: usize) {
    let small_h = small.len() / small_w;
    let mut acc = [0.0; W];
    acc.copy_from_slice(dst);
    for i in 0..small_h {
        let srow = &small[i * small_w..(i + 1) * small_w];
        let base = (i + p) * big_w + q;
        for (j, &sv) in srow.iter().enumerate() {
            let b: &[f64; W] = big[base + j..base + j + W].try_into().expect("W-wide window");
            for t in 0..W {
                acc[t] += sv * b[t];
            }
        }
    }
    dst.copy_from_slice(&acc);
}

/// db[o] += every entry of plane o, in order.
fn accumulate_bias_grad(plane: &[f64], g: &mut f64) {
    for &v in plane {
        *g += v;
    }
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

fn conv_out_shape(x: Shape, w: Shape) -> Result<Shape, LayerError> {
    let k = w.h();
    if x.c() != w.c() {
        return Err(LayerError::Channels {
            expected: w.c(),
            actual: x.c(),
        });
    }
    if k > x.h() || k > x.w() {
        return Err(LayerError::KernelTooLarge {
            kernel: k,
            rows: x.h(),
            cols: x.w(),
        });
    }
    Ok(Shape::new(x.n(), w.n(), x.h() - k + 1, x.w() - k + 1))
}

/// y[n,o,i,j] = b[o] + Σ_{c,p,q} W[o,c,p,q] · x[n,c,i+p,j+q]
pub fn conv_forward(x: &Tensor, p: &ParamBlock) -> Result<Tensor, LayerError> {
    let ws = p.weights.shape();
    let xs = x.shape();
    let ys = conv_out_shape(xs, ws)?;
    let k = ws.h();
    let mut y = Tensor::zeros(ys)?;
    for n in 0..xs.n() {
        for o in 0..ys.c() {
            let plane = y.plane_mut(n, o);
            plane.fill(p.biases[o]);
            for c in 0..xs.c() {
                correlate_valid(plane, ys.w(), x.plane(n, c), xs.w(), kernel_slice(&p.weights, o, c), k);
            }
        }
    }
    Ok(y)
}

/// Accumulates dW, db and returns dx.
pub fn conv_backward(x: &Tensor, p: &mut ParamBlock, dy: &Tensor) -> Result<Tensor, LayerError> {
    conv_backward_params(x, p, dy)?;
    let ws = p.weights.shape();
    let xs = x.shape();
    let k = ws.h();
    let mut dx = Tensor::zeros(xs)?;
    for n in 0..xs.n() {
        for c in 0..xs.c() {
            let plane = dx.plane_mut(n, c);
            for o in 0..ws.n() {
                scatter_full(plane, dy.plane(n, o), dy.shape().w(), kernel_slice(&p.weights, o, c), k);
            }
        }
    }
    Ok(dx)
}

/// Parameter-gradient half of [`conv_backward`]; skips the input gradient.
pub fn conv_backward_params(x: &Tensor, p: &mut ParamBlock, dy: &Tensor) -> Result<(), LayerError> {
    let ws = p.weights.shape();
    let xs = x.shape();
    dy.expect_shape(conv_out_shape(xs, ws)?)?;
    let k = ws.h();
    for n in 0..xs.n() {
        for o in 0..ws.n() {
            let g = dy.plane(n, o);
            accumulate_bias_grad(g, &mut p.bias_grad[o]);
            for c in 0..xs.c() {
                correlate_into_kernel(
                    kernel_slice_mut(&mut p.weight_grad, o, c),
                    k,
                    x.plane(n, c),
                    xs.w(),
                    g,
                    dy.shape().w(),
                );
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Deconvolution (transposed convolution)
// ---------------------------------------------------------------------------

fn deconv_check(xs: Shape, ws: Shape) -> Result<Shape, LayerError> {
    if xs.c() != ws.n() {
        return Err(LayerError::Channels {
            expected: ws.n(),
            actual: xs.c(),
        });
    }
    let k = ws.h();
    Ok(Shape::new(xs.n(), ws.c(), xs.h() + k - 1, xs.w() + k - 1))
}

/// y[n,o,i+p,j+q] += W[c,o,p,q] · x[n,c,i,j], plus b[o]; output grows by k−1.
pub fn deconv_forward(x: &Tensor, p: &ParamBlock) -> Result<Tensor, LayerError> {
    let ws = p.weights.shape();
    let xs = x.shape();
    let ys = deconv_check(xs, ws)?;
    let k = ws.h();
    let mut y = Tensor::zeros(ys)?;
    for n in 0..xs.n() {
        for o in 0..ys.c() {
            let plane = y.plane_mut(n, o);
            plane.fill(p.biases[o]);
            for c in 0..xs.c() {
                scatter_full(plane, x.plane(n, c), xs.w(), kernel_slice(&p.weights, c, o), k);
            }
        }
    }
    Ok(y)
}

pub fn deconv_backward(x: &Tensor, p: &mut ParamBlock, dy: &Tensor) -> Result<Tensor, LayerError> {
    deconv_backward_params(x, p, dy)?;
    let ws = p.weights.shape();
    let xs = x.shape();
    let k = ws.h();
    let mut dx = Tensor::zeros(xs)?;
    for n in 0..xs.n() {
        for c in 0..xs.c() {
            let plane = dx.plane_mut(n, c);
            for o in 0..ws.c() {
                correlate_valid(plane, xs.w(), dy.plane(n, o), dy.shape().w(), kernel_slice(&p.weights, c, o), k);
            }
        }
    }
    Ok(dx)
}

pub fn deconv_backward_params(x: &Tensor, p: &mut ParamBlock, dy: &Tensor) -> Result<(), LayerError> {
    let ws = p.weights.shape();
    let xs = x.shape();
    dy.expect_shape(deconv_check(xs, ws)?)?;
    let k = ws.h();
    for n in 0..xs.n() {
        for o in 0..ws.c() {
            let g = dy.plane(n, o);
            accumulate_bias_grad(g, &mut p.bias_grad[o]);
            for c in 0..xs.c() {
                correlate_into_kernel(
                    kernel_slice_mut(&mut p.weight_grad, c, o),
                    k,
                    g,
                    dy.shape().w(),
                    x.plane(n, c),
                    xs.w(),
                );
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Fully connected
// ---------------------------------------------------------------------------

fn check_fan_in(x: &Tensor, p: &ParamBlock) -> Result<usize, LayerError> {
    let fan_in = p.weights.shape().c();
    if x.shape().per_sample() != fan_in {
        return Err(LayerError::FanIn {
            expected: fan_in,
            actual: x.shape().per_sample(),
        });
    }
    Ok(fan_in)
}

pub fn fc_forward(x: &Tensor, p: &ParamBlock) -> Result<Tensor, LayerError> {
    let fan_in = check_fan_in(x, p)?;
    let outs = p.weights.shape().n();
    let n = x.shape().n();
    let w = p.weights.data();
    let mut y = Tensor::zeros([n, outs, 1, 1])?;
    for (xs, ys) in x.data().chunks_exact(fan_in).zip(y.data_mut().chunks_exact_mut(outs)) {
        // four independent running sums at a time, each strictly in i order
        let mut o = 0;
        while o + 4 <= outs {
            let rows = [
                &w[o * fan_in..(o + 1) * fan_in],
                &w[(o + 1) * fan_in..(o + 2) * fan_in],
                &w[(o + 2) * fan_in..(o + 3) * fan_in],
                &w[(o + 3) * fan_in..(o + 4) * fan_in],
            ];
            let mut acc = [p.biases[o], p.biases[o + 1], p.biases[o + 2], p.biases[o + 3]];
            for (i, &xv) in xs.iter().enumerate() {
                acc[0] += rows[0][i] * xv;
                acc[1] += rows[1][i] * xv;
                acc[2] += rows[2][i] * xv;
                acc[3] += rows[3][i] * xv;
            }
            ys[o..o + 4].copy_from_slice(&acc);
            o += 4;
        }
        for o in o..outs {
            let mut acc = p.biases[o];
            for (&wv, &xv) in w[o * fan_in..(o + 1) * fan_in].iter().zip(xs) {
                acc += wv * xv;
            }
            ys[o] = acc;
        }
    }
    Ok(y)
}

pub fn fc_backward(x: &Tensor, p: &mut ParamBlock, dy: &Tensor) -> Result<Tensor, LayerError> {
    fc_backward_params(x, p, dy)?;
    let fan_in = p.weights.shape().c();
    let outs = p.weights.shape().n();
    let w = p.weights.data();
    let mut dx = Tensor::zeros(x.shape())?;
    for (g, d) in dy.data().chunks_exact(outs).zip(dx.data_mut().chunks_exact_mut(fan_in)) {
        for (o, &gv) in g.iter().enumerate() {
            axpy(d, gv, &w[o * fan_in..(o + 1) * fan_in]);
        }
    }
    Ok(dx)
}

pub fn fc_backward_params(x: &Tensor, p: &mut ParamBlock, dy: &Tensor) -> Result<(), LayerError> {
    let fan_in = check_fan_in(x, p)?;
    let outs = p.weights.shape().n();
    let n = x.shape().n();
    dy.expect_shape(Shape::new(n, outs, 1, 1))?;
    let wg = p.weight_grad.data_mut();
    for (g, xs) in dy.data().chunks_exact(outs).zip(x.data().chunks_exact(fan_in)) {
        for (o, &gv) in g.iter().enumerate() {
            axpy(&mut wg[o * fan_in..(o + 1) * fan_in], gv, xs);
            p.bias_grad[o] += gv;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Sigmoid and reshape
// ---------------------------------------------------------------------------

/// Logistic function evaluated without overflowing `exp`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_forward(x: &Tensor) -> Tensor {
    x.map(sigmoid)
}

/// dx = dy · y · (1 − y), given the forward output y.
pub fn sigmoid_backward(y: &Tensor, dy: &Tensor) -> Result<Tensor, LayerError> {
    dy.expect_shape(y.shape())?;
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&y, &g)| g * y * (1.0 - y))
        .collect();
    Ok(Tensor::from_vec(y.shape(), data)?)
}

/// Resolves reshape dims against an input shape; 0 copies that extent.
pub fn resolve_reshape(input: Shape, dims: [usize; 4]) -> Result<Shape, LayerError> {
    let mut out = [0; 4];
    for i in 0..4 {
        out[i] = if dims[i] == 0 { input.0[i] } else { dims[i] };
    }
    let out = Shape(out);
    if out.len() != input.len() {
        return Err(LayerError::Reshape { from: input, to: out });
    }
    Ok(out)
}

pub fn reshape_forward(x: Tensor, dims: [usize; 4]) -> Result<Tensor, LayerError> {
    let to = resolve_reshape(x.shape(), dims)?;
    Ok(x.reshaped(to)?)
}

pub fn reshape_backward(dy: Tensor, input_shape: Shape) -> Result<Tensor, LayerError> {
    if dy.len() != input_shape.len() {
        return Err(LayerError::Reshape {
            from: dy.shape(),
            to: input_shape,
        });
    }
    Ok(dy.reshaped(input_shape)?)
}
