//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every op of one forward pass. Values are immutable once recorded;
//! [`Graph::backward`] walks the tape in reverse and returns a gradient per node.

use crate::error::{Error, Result};
use crate::kernels::{self, row_major, transposed};
use crate::params::{ParamId, ParamSet};
use crate::tensor::Tensor;

/// Handle to a recorded value. Only meaningful for the graph that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    L2Normalize { x: Var, divisors: Vec<f64> },
    AvgPool { x: Var, kh: usize, kw: usize },
    Conv2d { x: Var, w: Var, b: Var, kh: usize, kw: usize, cols: Vec<f64> },
    Resize(Var),
    Concat(Vec<Var>),
    Channel { x: Var, index: usize },
    LinComb(Vec<(Var, f64)>),
    ScalarFn { x: Var, grad: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Per-node gradients of a scalar output.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}

fn dims3(t: &Tensor, op: &'static str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [h, w, c] => Ok((h, w, c)),
        ref s => Err(Error::shape(op, format!("expected H x W x C, got {s:?}"))),
    }
}

fn dims2(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        ref s => Err(Error::shape(op, format!("expected a matrix, got {s:?}"))),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        self.push(params.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2(self.value(a), "matmul")?;
        let (k2, n) = dims2(self.value(b), "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("{m}x{k} times {k2}x{n}")));
        }
        let out = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let t = Tensor::from_op("matmul", vec![m, n], out)?;
        Ok(self.push(t, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = dims2(self.value(a), "transpose")?;
        let src = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let t = Tensor::from_op("transpose", vec![c, r], out)?;
        Ok(self.push(t, Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape(a)))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_shape(a, b, op)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_op(op, ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    /// Adds a bias vector along the trailing axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let c = self.value(x).last_dim();
        if self.value(bias).len() != c {
            return Err(Error::shape(
                "add_bias",
                format!("bias {:?} against trailing dim {c}", self.value(bias).shape()),
            ));
        }
        let b = self.value(bias).data();
        let tx = self.value(x);
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(c) {
            row.iter_mut().zip(b).for_each(|(v, bv)| *v += bv);
        }
        let t = Tensor::from_op("add_bias", tx.shape().to_vec(), data)?;
        Ok(self.push(t, Op::AddBias(x, bias)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let t = self.value(x).map(|v| v * s)?;
        Ok(self.push(t, Op::Scale(x, s)))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(|v| v.max(0.0))?;
        Ok(self.push(t, Op::Relu(x)))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(f64::tanh)?;
        Ok(self.push(t, Op::Tanh(x)))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(|v| 1.0 / (1.0 + (-v).exp()))?;
        Ok(self.push(t, Op::Sigmoid(x)))
    }

    /// Softmax over the trailing axis, max-subtracted.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.is_empty() || tx.last_dim() == 0 {
            return Err(Error::invalid("softmax", "empty tensor"));
        }
        let data = kernels::softmax_rows(tx.data(), tx.last_dim());
        let t = Tensor::from_op("softmax", tx.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Softmax(x)))
    }

    /// Divides each trailing-axis row by `max(||row||_2, 1e-12)`.
    pub fn l2_normalize(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let (data, divisors) = kernels::l2_normalize_rows(tx.data(), tx.last_dim().max(1));
        let t = Tensor::from_op("l2_normalize", tx.shape().to_vec(), data)?;
        Ok(self.push(t, Op::L2Normalize { x, divisors }))
    }

    /// Average pooling over an H x W x C map with stride equal to the kernel. Ragged windows
    /// at the bottom/right edge average over their actual extent.
    pub fn avg_pool(&mut self, x: Var, kh: usize, kw: usize) -> Result<Var> {
        let (h, w, c) = dims3(self.value(x), "avg_pool")?;
        if kh == 0 || kw == 0 {
            return Err(Error::invalid("avg_pool", "kernel extents must be at least 1"));
        }
        if kh > h || kw > w {
            return Err(Error::invalid(
                "avg_pool",
                format!("kernel {kh}x{kw} exceeds input {h}x{w}"),
            ));
        }
        let data = kernels::avg_pool_forward(self.value(x).data(), (h, w, c), kh, kw);
        let shape = vec![kernels::pooled_extent(h, kh), kernels::pooled_extent(w, kw), c];
        let t = Tensor::from_op("avg_pool", shape, data)?;
        Ok(self.push(t, Op::AvgPool { x, kh, kw }))
    }

    /// Zero-padded "same" cross-correlation. `weight` is `kh x kw x cin x cout`, `bias` is `cout`.
    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let (h, w, cin) = dims3(self.value(x), "conv2d")?;
        let (kh, kw, wcin, cout) = match *self.value(weight).shape() {
            [a, b, c, d] => (a, b, c, d),
            ref s => return Err(Error::shape("conv2d", format!("weight must be rank 4, got {s:?}"))),
        };
        if wcin != cin {
            return Err(Error::shape("conv2d", format!("input has {cin} channels, weight expects {wcin}")));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::invalid("conv2d", format!("kernel {kh}x{kw} must have odd extents")));
        }
        if self.value(bias).len() != cout {
            return Err(Error::shape("conv2d", format!("bias length {} != {cout}", self.value(bias).len())));
        }
        let cols = kernels::im2col(self.value(x).data(), (h, w, cin), kh, kw);
        let kdim = kh * kw * cin;
        let mut out = vec![0.0; h * w * cout];
        for row in out.chunks_mut(cout) {
            row.copy_from_slice(self.value(bias).data());
        }
        kernels::gemm(
            h * w,
            kdim,
            cout,
            &cols,
            row_major(kdim),
            self.value(weight).data(),
            row_major(cout),
            1.0,
            &mut out,
        );
        let t = Tensor::from_op("conv2d", vec![h, w, cout], out)?;
        Ok(self.push(
            t,
            Op::Conv2d {
                x,
                w: weight,
                b: bias,
                kh,
                kw,
                cols,
            },
        ))
    }

    /// Bilinear resampling of an H x W x C map with half-pixel centers.
    pub fn resize(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let (h, w, c) = dims3(self.value(x), "resize")?;
        if out_h == 0 || out_w == 0 || h == 0 || w == 0 {
            return Err(Error::invalid("resize", "extents must be at least 1"));
        }
        let data = kernels::bilinear_forward(self.value(x).data(), (h, w, c), out_h, out_w);
        let t = Tensor::from_op("resize", vec![out_h, out_w, c], data)?;
        Ok(self.push(t, Op::Resize(x)))
    }

    /// Concatenates along the trailing axis; leading extents must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat", "no inputs"))?;
        let lead = &self.value(*first).shape()[..self.value(*first).rank() - 1];
        let rows: usize = lead.iter().product();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if &t.shape()[..t.rank() - 1] != lead {
                return Err(Error::shape("concat", format!("{:?} vs leading {lead:?}", t.shape())));
            }
            widths.push(t.last_dim());
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        let mut offset = 0;
        for (&p, &wd) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for r in 0..rows {
                data[r * total + offset..][..wd].copy_from_slice(&src[r * wd..][..wd]);
            }
            offset += wd;
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let t = Tensor::from_op("concat", shape, data)?;
        Ok(self.push(t, Op::Concat(parts.to_vec())))
    }

    /// Selects one index of the trailing axis, dropping that axis.
    pub fn channel(&mut self, x: Var, index: usize) -> Result<Var> {
        let tx = self.value(x);
        let c = tx.last_dim();
        if index >= c || tx.rank() < 2 {
            return Err(Error::shape("channel", format!("index {index} of {:?}", tx.shape())));
        }
        let data = tx.data().iter().skip(index).step_by(c).copied().collect();
        let shape = tx.shape()[..tx.rank() - 1].to_vec();
        let t = Tensor::from_op("channel", shape, data)?;
        Ok(self.push(t, Op::Channel { x, index }))
    }

    /// `sum_i coeff_i * x_i` over same-shaped inputs.
    pub fn lin_comb(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let (first, _) = *terms.first().ok_or_else(|| Error::invalid("lin_comb", "no terms"))?;
        let shape = self.value(first).shape().to_vec();
        let mut data = vec![0.0; self.value(first).len()];
        for &(v, c) in terms {
            if self.value(v).shape() != shape.as_slice() {
                return Err(Error::shape("lin_comb", format!("{:?} vs {shape:?}", self.value(v).shape())));
            }
            for (d, s) in data.iter_mut().zip(self.value(v).data()) {
                *d += c * s;
            }
        }
        let t = Tensor::from_op("lin_comb", shape, data)?;
        Ok(self.push(t, Op::LinComb(terms.to_vec())))
    }

    pub fn mean(&mut self, xs: &[Var]) -> Result<Var> {
        let w = 1.0 / xs.len().max(1) as f64;
        let terms: Vec<_> = xs.iter().map(|&v| (v, w)).collect();
        self.lin_comb(&terms)
    }

    /// Records a scalar computed outside the graph together with its gradient with respect to `x`.
    pub fn scalar_fn(&mut self, x: Var, value: f64, grad: Vec<f64>) -> Result<Var> {
        if grad.len() != self.value(x).len() {
            return Err(Error::shape("scalar_fn", "gradient length differs from input"));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { op: "scalar_fn" });
        }
        let t = Tensor::from_op("scalar_fn", vec![1], vec![value])?;
        Ok(self.push(t, Op::ScalarFn { x, grad }))
    }

    /// Pointwise affine map over the trailing axis: `x[..., cin] @ w[cin, cout] + b[cout]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        let cin = self.value(x).last_dim();
        let rows = self.value(x).len() / cin.max(1);
        let flat = self.reshape(x, &[rows, cin])?;
        let y = self.matmul(flat, weight)?;
        let y = self.add_bias(y, bias)?;
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = self.value(weight).last_dim();
        self.reshape(y, &out_shape)
    }

    /// Scaled dot-product attention `softmax(q k^T / sqrt(d_k)) v` on matrices.
    pub fn attention(&mut self, q: Var, k: Var, v: Var) -> Result<Var> {
        let d_k = self.value(k).last_dim();
        let kt = self.transpose(k)?;
        let scores = self.matmul(q, kt)?;
        let scores = self.scale(scores, 1.0 / (d_k as f64).sqrt())?;
        let weights = self.softmax(scores)?;
        self.matmul(weights, v)
    }

    /// Reverse pass from a single-element output.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        if self.value(out).len() != 1 {
            return Err(Error::shape("backward", format!("output must be scalar, got {:?}", self.value(out).shape())));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(vec![1.0]);
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Adds parameter gradients from `grads` into the matching buffers of `params`.
    pub fn accumulate_param_grads(&self, grads: &Gradients, params: &mut ParamSet) {
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads.grads[i]) {
                params.accumulate_grad(*id, g);
            }
        }
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let mut acc = |v: Var, delta: Vec<f64>| match &mut grads[v.0] {
            Some(existing) => existing.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
            slot @ None => *slot = Some(delta),
        };
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims2(self.value(*a), "").unwrap();
                let n = self.value(*b).last_dim();
                let mut da = vec![0.0; m * k];
                kernels::gemm(m, n, k, g, row_major(n), self.value(*b).data(), transposed(n), 0.0, &mut da);
                let mut db = vec![0.0; k * n];
                kernels::gemm(k, m, n, self.value(*a).data(), transposed(k), g, row_major(n), 0.0, &mut db);
                acc(*a, da);
                acc(*b, db);
            }
            Op::Transpose(a) => {
                let (r, c) = dims2(self.value(*a), "").unwrap();
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        d[i * c + j] = g[j * r + i];
                    }
                }
                acc(*a, d);
            }
            Op::Reshape(a) => acc(*a, g.to_vec()),
            Op::Add(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, g.iter().zip(vb).map(|(x, y)| x * y).collect());
                acc(*b, g.iter().zip(va).map(|(x, y)| x * y).collect());
            }
            Op::AddBias(x, b) => {
                let c = self.value(*b).len();
                let mut db = vec![0.0; c];
                for row in g.chunks(c) {
                    db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                }
                acc(*x, g.to_vec());
                acc(*b, db);
            }
            Op::Scale(x, s) => acc(*x, g.iter().map(|v| v * s).collect()),
            Op::Relu(x) => {
                let vx = self.value(*x).data();
                acc(*x, g.iter().zip(vx).map(|(d, &v)| if v > 0.0 { *d } else { 0.0 }).collect());
            }
            Op::Tanh(x) => {
                let y = node.value.data();
                acc(*x, g.iter().zip(y).map(|(d, y)| d * (1.0 - y * y)).collect());
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                acc(*x, g.iter().zip(y).map(|(d, y)| d * y * (1.0 - y)).collect());
            }
            Op::Softmax(x) => {
                let row = node.value.last_dim();
                acc(*x, kernels::softmax_rows_backward(node.value.data(), g, row));
            }
            Op::L2Normalize { x, divisors } => {
                let row = node.value.last_dim().max(1);
                acc(*x, kernels::l2_normalize_rows_backward(node.value.data(), divisors, g, row));
            }
            Op::AvgPool { x, kh, kw } => {
                let dims = dims3(self.value(*x), "").unwrap();
                acc(*x, kernels::avg_pool_backward(g, dims, *kh, *kw));
            }
            Op::Conv2d { x, w, b, kh, kw, cols } => {
                let (h, wd, cin) = dims3(self.value(*x), "").unwrap();
                let cout = node.value.last_dim();
                let kdim = kh * kw * cin;
                let hw = h * wd;
                let mut dw = vec![0.0; kdim * cout];
                kernels::gemm(kdim, hw, cout, cols, transposed(kdim), g, row_major(cout), 0.0, &mut dw);
                let mut db = vec![0.0; cout];
                for row in g.chunks(cout) {
                    db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                }
                let mut dcols = vec![0.0; hw * kdim];
                kernels::gemm(hw, cout, kdim, g, row_major(cout), self.value(*w).data(), transposed(cout), 0.0, &mut dcols);
                acc(*x, kernels::col2im(&dcols, (h, wd, cin), *kh, *kw));
                acc(*w, dw);
                acc(*b, db);
            }
            Op::Resize(x) => {
                let dims = dims3(self.value(*x), "").unwrap();
                let (oh, ow) = (node.value.shape()[0], node.value.shape()[1]);
                acc(*x, kernels::bilinear_backward(g, dims, oh, ow));
            }
            Op::Concat(parts) => {
                let total = node.value.last_dim();
                let rows = node.value.len() / total.max(1);
                let mut offset = 0;
                for &p in parts {
                    let wd = self.value(p).last_dim();
                    let mut d = vec![0.0; rows * wd];
                    for r in 0..rows {
                        d[r * wd..][..wd].copy_from_slice(&g[r * total + offset..][..wd]);
                    }
                    offset += wd;
                    acc(p, d);
                }
            }
            Op::Channel { x, index } => {
                let c = self.value(*x).last_dim();
                let mut d = vec![0.0; self.value(*x).len()];
                for (r, gv) in g.iter().enumerate() {
                    d[r * c + index] = *gv;
                }
                acc(*x, d);
            }
            Op::LinComb(terms) => {
                for &(v, c) in terms {
                    acc(v, g.iter().map(|d| d * c).collect());
                }
            }
            Op::ScalarFn { x, grad } => {
                let s = g[0];
                acc(*x, grad.iter().map(|d| d * s).collect());
            }
        }
    }
}
