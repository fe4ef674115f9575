//! Reverse-mode automatic differentiation over dense tensors.
//!
//! Operations are recorded on a [`Tape`] as they execute; [`Tape::backward`]
//! then walks the record in reverse and accumulates adjoints. Only the
//! operations needed by small image classifiers exist: matrix product, bias
//! add, ReLU, same-padding 2-D convolution, 2×2 max pooling, reshape and a
//! fused softmax cross-entropy against soft targets.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    batch: usize,
    in_ch: usize,
    out_ch: usize,
    height: usize,
    width: usize,
    kernel: usize,
}

impl ConvGeom {
    fn pad(&self) -> isize {
        (self.kernel / 2) as isize
    }
    fn patch(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }
    fn pixels(&self) -> usize {
        self.height * self.width
    }
}

enum Op<T> {
    Leaf,
    MatMul {
        x: Var,
        w: Var,
    },
    AddBias {
        x: Var,
        bias: Var,
    },
    Relu {
        x: Var,
    },
    Conv2d {
        x: Var,
        w: Var,
        bias: Var,
        geom: ConvGeom,
        cols: Vec<T>,
    },
    MaxPool2 {
        x: Var,
        argmax: Vec<u32>,
    },
    Reshape {
        x: Var,
    },
    SoftCrossEntropy {
        logits: Var,
        targets: Vec<T>,
        probs: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Operation record for one forward pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable input (parameter or attacked image).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// `x [b, i] · w [i, o] -> [b, o]`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xs, ws) = (self.value(x).shape(), self.value(w).shape());
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(Error::RejectedInput(format!(
                "matmul shapes {xs:?} and {ws:?}"
            )));
        }
        let (b, i, o) = (xs[0], xs[1], ws[1]);
        let mut out = Tensor::zeros(vec![b, o]);
        T::gemm(
            b,
            i,
            o,
            T::one(),
            self.value(x).data(),
            (i as isize, 1),
            self.value(w).data(),
            (o as isize, 1),
            T::zero(),
            out.data_mut(),
            (o as isize, 1),
        );
        let rg = self.needs(x) || self.needs(w);
        Ok(self.push(out, Op::MatMul { x, w }, rg))
    }

    /// Adds `bias [o]` to every row of `x [b, o]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xs = self.value(x).shape();
        let o = self.value(bias).len();
        if xs.len() != 2 || xs[1] != o {
            return Err(Error::RejectedInput(format!(
                "bias of length {o} for shape {xs:?}"
            )));
        }
        let mut out = self.value(x).clone();
        let bv = self.value(bias).data();
        for row in out.data_mut().chunks_mut(o) {
            for (v, &bb) in row.iter_mut().zip(bv) {
                *v += bb;
            }
        }
        let rg = self.needs(x) || self.needs(bias);
        Ok(self.push(out, Op::AddBias { x, bias }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self
            .value(x)
            .map(|v| if v > T::zero() { v } else { T::zero() });
        let rg = self.needs(x);
        self.push(out, Op::Relu { x }, rg)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(x).clone().reshaped(shape)?;
        let rg = self.needs(x);
        Ok(self.push(out, Op::Reshape { x }, rg))
    }

    /// Same-padding, stride-1 convolution.
    ///
    /// `x [b, c, h, w]`, `w [o, c, k, k]` with odd `k`, `bias [o]` -> `[b, o, h, w]`.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Var) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        if xs.len() != 4 || ws.len() != 4 || ws[1] != xs[1] || ws[2] != ws[3] || ws[2] % 2 == 0 {
            return Err(Error::RejectedInput(format!(
                "conv2d shapes {xs:?} and {ws:?}"
            )));
        }
        if self.value(bias).len() != ws[0] {
            return Err(Error::RejectedInput("conv2d bias length".into()));
        }
        let geom = ConvGeom {
            batch: xs[0],
            in_ch: xs[1],
            out_ch: ws[0],
            height: xs[2],
            width: xs[3],
            kernel: ws[2],
        };
        let cols = im2col(self.value(x).data(), &geom);
        let n = geom.batch * geom.pixels();
        let mut tmp = vec![T::zero(); geom.out_ch * n];
        T::gemm(
            geom.out_ch,
            geom.patch(),
            n,
            T::one(),
            self.value(w).data(),
            (geom.patch() as isize, 1),
            &cols,
            (n as isize, 1),
            T::zero(),
            &mut tmp,
            (n as isize, 1),
        );
        let hw = geom.pixels();
        let bv = self.value(bias).data();
        let mut out = Tensor::zeros(vec![geom.batch, geom.out_ch, geom.height, geom.width]);
        let od = out.data_mut();
        for o in 0..geom.out_ch {
            for b in 0..geom.batch {
                let src = &tmp[o * n + b * hw..o * n + (b + 1) * hw];
                let dst = &mut od[(b * geom.out_ch + o) * hw..(b * geom.out_ch + o + 1) * hw];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = s + bv[o];
                }
            }
        }
        let rg = self.needs(x) || self.needs(w) || self.needs(bias);
        Ok(self.push(
            out,
            Op::Conv2d {
                x,
                w,
                bias,
                geom,
                cols,
            },
            rg,
        ))
    }

    /// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 4 || xs[2] < 2 || xs[3] < 2 {
            return Err(Error::RejectedInput(format!("max_pool2 shape {xs:?}")));
        }
        let (b, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (oh, ow) = (h / 2, w / 2);
        let src = self.value(x).data();
        let mut out = Tensor::zeros(vec![b, c, oh, ow]);
        let mut argmax = vec![0u32; b * c * oh * ow];
        let od = out.data_mut();
        for plane in 0..b * c {
            let base = plane * h * w;
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = base + 2 * i * w + 2 * j;
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * i + di) * w + 2 * j + dj;
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                    let o = plane * oh * ow + i * ow + j;
                    od[o] = src[best];
                    argmax[o] = best as u32;
                }
            }
        }
        let rg = self.needs(x);
        Ok(self.push(out, Op::MaxPool2 { x, argmax }, rg))
    }

    /// Mean over the batch of `-Σ_k t_k log softmax(z)_k` for `logits [b, k]`.
    ///
    /// `targets` is row-major `[b, k]`. Returns a scalar node.
    pub fn soft_cross_entropy(&mut self, logits: Var, targets: &[T]) -> Result<Var> {
        let zs = self.value(logits).shape();
        if zs.len() != 2 || targets.len() != zs[0] * zs[1] {
            return Err(Error::RejectedInput(format!(
                "targets of length {} for logits {zs:?}",
                targets.len()
            )));
        }
        let (b, k) = (zs[0], zs[1]);
        let z = self.value(logits).data();
        let mut probs = vec![T::zero(); b * k];
        let mut total = 0.0f64;
        for r in 0..b {
            let row = &z[r * k..(r + 1) * k];
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
            let lse = max + sum.ln();
            for c in 0..k {
                let logp = row[c] - lse;
                probs[r * k + c] = logp.exp();
                total -= targets[r * k + c].f64() * logp.f64();
            }
        }
        let loss = Tensor::scalar(T::of(total / b as f64));
        let rg = self.needs(logits);
        Ok(self.push(
            loss,
            Op::SoftCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Identifies the linear region of a piecewise-linear forward pass:
    /// one entry per ReLU unit (on/off) and per pooling window (winner index).
    ///
    /// Two evaluations with equal signatures lie on the same linear piece, which
    /// is what finite-difference gradient checks need to know.
    pub fn piecewise_signature(&self) -> Vec<u32> {
        let mut sig = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu { x } => sig.extend(
                    self.nodes[x.0]
                        .value
                        .data()
                        .iter()
                        .map(|&v| u32::from(v > T::zero())),
                ),
                Op::MaxPool2 { argmax, .. } => sig.extend_from_slice(argmax),
                _ => {}
            }
        }
        sig
    }

    /// Reverse sweep from a scalar `output`.
    pub fn backward(&self, output: Var) -> Gradients<T> {
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::filled(
            self.value(output).shape().to_vec(),
            T::one(),
        ));
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::MatMul { x, w } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let (b, inn) = (xv.shape()[0], xv.shape()[1]);
                    let o = wv.shape()[1];
                    if self.needs(*x) {
                        let mut dx = Tensor::zeros(vec![b, inn]);
                        // dX = dY · Wᵀ
                        T::gemm(
                            b,
                            o,
                            inn,
                            T::one(),
                            g.data(),
                            (o as isize, 1),
                            wv.data(),
                            (1, o as isize),
                            T::zero(),
                            dx.data_mut(),
                            (inn as isize, 1),
                        );
                        accumulate(&mut grads, *x, dx);
                    }
                    if self.needs(*w) {
                        let mut dw = Tensor::zeros(vec![inn, o]);
                        // dW = Xᵀ · dY
                        T::gemm(
                            inn,
                            b,
                            o,
                            T::one(),
                            xv.data(),
                            (1, inn as isize),
                            g.data(),
                            (o as isize, 1),
                            T::zero(),
                            dw.data_mut(),
                            (o as isize, 1),
                        );
                        accumulate(&mut grads, *w, dw);
                    }
                }
                Op::AddBias { x, bias } => {
                    if self.needs(*bias) {
                        let o = self.value(*bias).len();
                        let mut db = Tensor::zeros(self.value(*bias).shape().to_vec());
                        for row in g.data().chunks(o) {
                            for (d, &v) in db.data_mut().iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                        accumulate(&mut grads, *bias, db);
                    }
                    if self.needs(*x) {
                        accumulate(&mut grads, *x, g);
                    }
                }
                Op::Relu { x } => {
                    if self.needs(*x) {
                        let mut dx = g;
                        for (d, &v) in dx.data_mut().iter_mut().zip(self.value(*x).data()) {
                            if v <= T::zero() {
                                *d = T::zero();
                            }
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Reshape { x } => {
                    if self.needs(*x) {
                        let shape = self.value(*x).shape().to_vec();
                        let dx = g.reshaped(shape).expect("reshape adjoint keeps size");
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::MaxPool2 { x, argmax } => {
                    if self.needs(*x) {
                        let mut dx = Tensor::zeros(self.value(*x).shape().to_vec());
                        let dd = dx.data_mut();
                        for (&src, &v) in argmax.iter().zip(g.data()) {
                            dd[src as usize] += v;
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Conv2d {
                    x,
                    w,
                    bias,
                    geom,
                    cols,
                } => {
                    let hw = geom.pixels();
                    let n = geom.batch * hw;
                    let patch = geom.patch();
                    // dY [b, o, hw] -> [o, b·hw]
                    let mut dout = vec![T::zero(); geom.out_ch * n];
                    let gd = g.data();
                    for b in 0..geom.batch {
                        for o in 0..geom.out_ch {
                            let src =
                                &gd[(b * geom.out_ch + o) * hw..(b * geom.out_ch + o + 1) * hw];
                            dout[o * n + b * hw..o * n + (b + 1) * hw].copy_from_slice(src);
                        }
                    }
                    if self.needs(*bias) {
                        let mut db = Tensor::zeros(vec![geom.out_ch]);
                        for (o, d) in db.data_mut().iter_mut().enumerate() {
                            *d = dout[o * n..(o + 1) * n].iter().copied().sum();
                        }
                        accumulate(&mut grads, *bias, db);
                    }
                    if self.needs(*w) {
                        let mut dw = Tensor::zeros(self.value(*w).shape().to_vec());
                        // dW = dOut · colsᵀ
                        T::gemm(
                            geom.out_ch,
                            n,
                            patch,
                            T::one(),
                            &dout,
                            (n as isize, 1),
                            cols,
                            (1, n as isize),
                            T::zero(),
                            dw.data_mut(),
                            (patch as isize, 1),
                        );
                        accumulate(&mut grads, *w, dw);
                    }
                    if self.needs(*x) {
                        let mut dcols = vec![T::zero(); patch * n];
                        // dCols = Wᵀ · dOut
                        T::gemm(
                            patch,
                            geom.out_ch,
                            n,
                            T::one(),
                            self.value(*w).data(),
                            (1, patch as isize),
                            &dout,
                            (n as isize, 1),
                            T::zero(),
                            &mut dcols,
                            (n as isize, 1),
                        );
                        let dx = col2im(&dcols, geom);
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::SoftCrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    if self.needs(*logits) {
                        let shape = self.value(*logits).shape().to_vec();
                        let (b, k) = (shape[0], shape[1]);
                        let scale = g.data()[0] / T::of(b as f64);
                        let mut dz = Tensor::zeros(shape);
                        for r in 0..b {
                            let t = &targets[r * k..(r + 1) * k];
                            let mass: T = t.iter().copied().sum();
                            for c in 0..k {
                                dz.data_mut()[r * k + c] = scale * (probs[r * k + c] * mass - t[c]);
                            }
                        }
                        accumulate(&mut grads, *logits, dz);
                    }
                }
            }
        }
        Gradients { grads }
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.axpy(T::one(), &g),
        slot @ None => *slot = Some(g),
    }
}

/// `[b, c, h, w]` -> `[c·k·k, b·h·w]` patch matrix with zero padding.
fn im2col<T: Scalar>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let hw = g.pixels();
    let n = g.batch * hw;
    let pad = g.pad();
    let mut cols = vec![T::zero(); g.patch() * n];
    for c in 0..g.in_ch {
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let dst = &mut cols[row * n..(row + 1) * n];
                let (di, dj) = (ki as isize - pad, kj as isize - pad);
                for b in 0..g.batch {
                    let plane = &x[(b * g.in_ch + c) * hw..(b * g.in_ch + c + 1) * hw];
                    for y in 0..g.height {
                        let sy = y as isize + di;
                        if sy < 0 || sy >= g.height as isize {
                            continue;
                        }
                        let out_row = b * hw + y * g.width;
                        let src_row = sy as usize * g.width;
                        for xx in 0..g.width {
                            let sx = xx as isize + dj;
                            if sx >= 0 && sx < g.width as isize {
                                dst[out_row + xx] = plane[src_row + sx as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom) -> Tensor<T> {
    let hw = g.pixels();
    let n = g.batch * hw;
    let pad = g.pad();
    let mut dx = Tensor::zeros(vec![g.batch, g.in_ch, g.height, g.width]);
    let dd = dx.data_mut();
    for c in 0..g.in_ch {
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let src = &cols[row * n..(row + 1) * n];
                let (di, dj) = (ki as isize - pad, kj as isize - pad);
                for b in 0..g.batch {
                    let base = (b * g.in_ch + c) * hw;
                    for y in 0..g.height {
                        let sy = y as isize + di;
                        if sy < 0 || sy >= g.height as isize {
                            continue;
                        }
                        for xx in 0..g.width {
                            let sx = xx as isize + dj;
                            if sx >= 0 && sx < g.width as isize {
                                dd[base + sy as usize * g.width + sx as usize] +=
                                    src[b * hw + y * g.width + xx];
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}
