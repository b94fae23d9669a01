//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation eagerly. Calling [`Graph::backward`]
//! on a scalar node walks the tape in reverse and returns gradients for every
//! node that depends on a parameter or on an input marked as differentiable.

use crate::conv::{self, ConvGeometry};
use crate::kernels::{self, MatRef};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    SumAll(Var),
    MeanAll(Var),
    SumRows(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    ScatterGroups { src: Var, groups: Vec<usize> },
    LayerNorm { src: Var, inv_std: Vec<f64> },
    ChannelAffine { x: Var, scale: Var, shift: Var, channels: usize },
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeometry },
    Upsample2x { x: Var, c: usize, h: usize, w: usize },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
    frozen: Vec<(ParamId, Var)>,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient for every parameter that was pulled onto the graph and
    /// received a nonzero path from the output.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params
            .iter()
            .filter_map(|(id, v)| self.grads[v.0].as_ref().map(|g| (*id, g)))
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, v)| self.grads[v.0].as_ref())
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

    #[inline]
    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A constant: no gradient flows into or through it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// An input leaf whose gradient is tracked.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Copies `v` into a fresh constant, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    /// Leaf for a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some((_, v)) = self.params.iter().find(|(p, _)| *p == id) {
            return *v;
        }
        let v = self.push(store.value(id).clone(), Op::Leaf, true);
        self.params.push((id, v));
        v
    }

    /// Parameter leaf that does not accumulate gradient (frozen phase).
    pub fn frozen_param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some((_, v)) = self.frozen.iter().find(|(p, _)| *p == id) {
            return *v;
        }
        let v = self.constant(store.value(id).clone());
        self.frozen.push((id, v));
        v
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64 + Send + Sync) -> Var {
        let src = self.value(a);
        let mut out = Tensor::zeros(src.rows(), src.cols());
        kernels::map_into(out.data_mut(), src.data(), f);
        let ng = self.ng(a);
        self.push(out, op, ng)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64 + Send + Sync) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "elementwise op on mismatched shapes");
        let mut out = Tensor::zeros(va.rows(), va.cols());
        kernels::zip_into(out.data_mut(), va.data(), vb.data(), f);
        let ng = self.ng(a) || self.ng(b);
        self.push(out, op, ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let (m, k) = va.shape();
        let (k2, n) = vb.shape();
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let out = kernels::matmul(va.data(), vb.data(), m, k, n);
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::from_vec(m, n, out).unwrap(), Op::MatMul(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// `a[n, k] + row[1, k]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (va, vr) = (self.value(a), self.value(row));
        assert_eq!(vr.rows(), 1);
        assert_eq!(va.cols(), vr.cols(), "add_row width mismatch");
        let mut out = va.clone();
        let k = va.cols();
        let r = vr.data().to_vec();
        kernels::for_each_chunk(out.data_mut(), k.max(1), va.len(), |_, o| {
            for (x, b) in o.iter_mut().zip(&r) {
                *x += b;
            }
        });
        let ng = self.ng(a) || self.ng(row);
        self.push(out, Op::AddRow(a, row), ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), move |x| c * x)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::AddScalar(a), move |x| x + c)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(a, Op::LeakyRelu(a, slope), move |x| if x > 0.0 { x } else { slope * x })
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, 0.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// Clamp to `[lo, hi]`; gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clamp(a, lo, hi), move |x| x.clamp(lo, hi))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::SumAll(a), ng)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let s = self.value(a).mean();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::MeanAll(a), ng)
    }

    /// Per-row sum: `[n, k] -> [n, 1]`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data: Vec<f64> = (0..va.rows()).map(|r| va.row(r).iter().sum()).collect();
        let out = Tensor::from_vec(va.rows(), 1, data).unwrap();
        let ng = self.ng(a);
        self.push(out, Op::SumRows(a), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let vals: Vec<&Tensor> = parts.iter().map(|v| self.value(*v)).collect();
        let out = Tensor::concat_cols(&vals).expect("concat_cols row mismatch");
        let ng = parts.iter().any(|v| self.ng(*v));
        self.push(out, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let out = self.value(a).slice_cols(start, len);
        let ng = self.ng(a);
        self.push(out, Op::SliceCols(a, start), ng)
    }

    /// Row gather; rows may repeat (embedding lookup, permutation).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let out = self.value(a).select_rows(idx);
        let ng = self.ng(a);
        self.push(out, Op::GatherRows(a, idx.to_vec()), ng)
    }

    /// Places row `i` of `src[n, d]` into column block `groups[i]` of an
    /// otherwise-zero `[n, num_groups·d]` matrix.
    pub fn scatter_groups(&mut self, src: Var, groups: &[usize], num_groups: usize) -> Var {
        let vs = self.value(src);
        let (n, d) = vs.shape();
        assert_eq!(groups.len(), n);
        let mut out = Tensor::zeros(n, num_groups * d);
        for (i, &g) in groups.iter().enumerate() {
            assert!(g < num_groups, "group index {g} out of range");
            out.row_mut(i)[g * d..(g + 1) * d].copy_from_slice(vs.row(i));
        }
        let ng = self.ng(src);
        self.push(
            out,
            Op::ScatterGroups {
                src,
                groups: groups.to_vec(),
            },
            ng,
        )
    }

    /// Standardizes each row to zero mean and unit variance.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let va = self.value(a);
        let (n, k) = va.shape();
        let mut out = va.clone();
        let mut inv_std = vec![0.0; n];
        for (r, inv) in inv_std.iter_mut().enumerate() {
            let row = out.row_mut(r);
            let mean = row.iter().sum::<f64>() / k as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / k as f64;
            *inv = 1.0 / (var + eps).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mean) * *inv;
            }
        }
        let ng = self.ng(a);
        self.push(out, Op::LayerNorm { src: a, inv_std }, ng)
    }

    /// Feature-wise affine modulation: `x[n, c·s]·scale[n, c] + shift[n, c]`,
    /// broadcast over the `s` spatial positions of each channel.
    pub fn channel_affine(&mut self, x: Var, scale: Var, shift: Var, channels: usize) -> Var {
        let (vx, vs, vb) = (self.value(x), self.value(scale), self.value(shift));
        let (n, f) = vx.shape();
        assert_eq!(f % channels, 0);
        assert_eq!(vs.shape(), (n, channels), "modulation scale shape");
        assert_eq!(vb.shape(), (n, channels), "modulation shift shape");
        let s = f / channels;
        let mut out = vx.clone();
        let (sd, bd) = (vs.data(), vb.data());
        kernels::for_each_chunk(out.data_mut(), f, n * f, |r, o| {
            for c in 0..channels {
                let (g, b) = (sd[r * channels + c], bd[r * channels + c]);
                for v in &mut o[c * s..(c + 1) * s] {
                    *v = *v * g + b;
                }
            }
        });
        let ng = self.ng(x) || self.ng(scale) || self.ng(shift);
        self.push(
            out,
            Op::ChannelAffine {
                x,
                scale,
                shift,
                channels,
            },
            ng,
        )
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, geom: ConvGeometry) -> Var {
        let vx = self.value(x);
        let n = vx.rows();
        assert_eq!(vx.cols(), geom.in_features(), "conv2d input width");
        assert_eq!(self.value(w).shape(), (geom.out_c, geom.patch_len()));
        let out = geom.forward(vx.data(), n, self.value(w).data(), self.value(b).data());
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(
            Tensor::from_vec(n, geom.out_features(), out).unwrap(),
            Op::Conv2d { x, w, b, geom },
            ng,
        )
    }

    pub fn upsample2x(&mut self, x: Var, c: usize, h: usize, w: usize) -> Var {
        let vx = self.value(x);
        let n = vx.rows();
        assert_eq!(vx.cols(), c * h * w);
        let out = conv::upsample2x(vx.data(), n, c, h, w);
        let ng = self.ng(x);
        self.push(
            Tensor::from_vec(n, 4 * c * h * w, out).unwrap(),
            Op::Upsample2x { x, c, h, w },
            ng,
        )
    }

    /// Reverse sweep from the scalar node `out`.
    pub fn backward(&self, out: Var) -> Gradients {
        assert_eq!(self.value(out).len(), 1, "backward from a non-scalar node");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Tensor::scalar(1.0));
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.needs_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Gradients {
            grads,
            params: self.params.clone(),
        }
    }

    fn accum(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn elementwise_grad(&self, a: Var, g: &Tensor, f: impl Fn(f64, f64, f64) -> f64 + Send + Sync, out: &Tensor) -> Tensor {
        // f(input, output, upstream)
        let x = self.value(a);
        let mut res = Tensor::zeros(x.rows(), x.cols());
        let (xd, od, gd) = (x.data(), out.data(), g.data());
        const CHUNK: usize = 4096;
        kernels::for_each_chunk(res.data_mut(), CHUNK, xd.len(), |ci, r| {
            let base = ci * CHUNK;
            for (j, v) in r.iter_mut().enumerate() {
                *v = f(xd[base + j], od[base + j], gd[base + j]);
            }
        });
        res
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k) = va.shape();
                let n = vb.cols();
                if self.ng(*a) {
                    // dA = G·Bᵀ
                    let mut da = vec![0.0; m * k];
                    kernels::gemm(m, n, k, 1.0, MatRef::new(g.data(), n), MatRef::transposed(vb.data(), n), 0.0, &mut da);
                    self.accum(grads, *a, Tensor::from_vec(m, k, da).unwrap());
                }
                if self.ng(*b) {
                    // dB = Aᵀ·G
                    let mut db = vec![0.0; k * n];
                    kernels::gemm(k, m, n, 1.0, MatRef::transposed(va.data(), k), MatRef::new(g.data(), n), 0.0, &mut db);
                    self.accum(grads, *b, Tensor::from_vec(k, n, db).unwrap());
                }
            }
            Op::Add(a, b) => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    let vb = self.value(*b);
                    let mut d = Tensor::zeros(g.rows(), g.cols());
                    kernels::zip_into(d.data_mut(), g.data(), vb.data(), |x, y| x * y);
                    self.accum(grads, *a, d);
                }
                if self.ng(*b) {
                    let va = self.value(*a);
                    let mut d = Tensor::zeros(g.rows(), g.cols());
                    kernels::zip_into(d.data_mut(), g.data(), va.data(), |x, y| x * y);
                    self.accum(grads, *b, d);
                }
            }
            Op::AddRow(a, row) => {
                self.accum(grads, *a, g.clone());
                if self.ng(*row) {
                    let mut d = vec![0.0; g.cols()];
                    for r in 0..g.rows() {
                        for (acc, v) in d.iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                    self.accum(grads, *row, Tensor::row_vector(d));
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.accum(grads, *a, g.map(|x| c * x));
            }
            Op::AddScalar(a) => self.accum(grads, *a, g.clone()),
            Op::LeakyRelu(a, s) => {
                let s = *s;
                let d = self.elementwise_grad(*a, g, move |x, _, gg| if x > 0.0 { gg } else { s * gg }, out);
                self.accum(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let d = self.elementwise_grad(*a, g, |_, y, gg| gg * y * (1.0 - y), out);
                self.accum(grads, *a, d);
            }
            Op::Tanh(a) => {
                let d = self.elementwise_grad(*a, g, |_, y, gg| gg * (1.0 - y * y), out);
                self.accum(grads, *a, d);
            }
            Op::Exp(a) => {
                let d = self.elementwise_grad(*a, g, |_, y, gg| gg * y, out);
                self.accum(grads, *a, d);
            }
            Op::Log(a) => {
                let d = self.elementwise_grad(*a, g, |x, _, gg| gg / x, out);
                self.accum(grads, *a, d);
            }
            Op::Square(a) => {
                let d = self.elementwise_grad(*a, g, |x, _, gg| 2.0 * x * gg, out);
                self.accum(grads, *a, d);
            }
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                let d = self.elementwise_grad(*a, g, move |x, _, gg| if x < lo || x > hi { 0.0 } else { gg }, out);
                self.accum(grads, *a, d);
            }
            Op::SumAll(a) => {
                let (r, c) = self.shape(*a);
                self.accum(grads, *a, Tensor::filled(r, c, g.item()));
            }
            Op::MeanAll(a) => {
                let (r, c) = self.shape(*a);
                let n = (r * c).max(1) as f64;
                self.accum(grads, *a, Tensor::filled(r, c, g.item() / n));
            }
            Op::SumRows(a) => {
                let (r, c) = self.shape(*a);
                let mut d = Tensor::zeros(r, c);
                for i in 0..r {
                    let gi = g.get(i, 0);
                    d.row_mut(i).iter_mut().for_each(|v| *v = gi);
                }
                self.accum(grads, *a, d);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    if self.ng(*p) {
                        self.accum(grads, *p, g.slice_cols(off, w));
                    }
                    off += w;
                }
            }
            Op::SliceCols(a, start) => {
                if self.ng(*a) {
                    let (r, c) = self.shape(*a);
                    let mut d = Tensor::zeros(r, c);
                    let w = g.cols();
                    for i in 0..r {
                        d.row_mut(i)[*start..*start + w].copy_from_slice(g.row(i));
                    }
                    self.accum(grads, *a, d);
                }
            }
            Op::GatherRows(a, idx) => {
                if self.ng(*a) {
                    let (r, c) = self.shape(*a);
                    let mut d = Tensor::zeros(r, c);
                    for (i, &src) in idx.iter().enumerate() {
                        for (acc, v) in d.row_mut(src).iter_mut().zip(g.row(i)) {
                            *acc += v;
                        }
                    }
                    self.accum(grads, *a, d);
                }
            }
            Op::ScatterGroups { src, groups } => {
                if self.ng(*src) {
                    let (n, d) = self.shape(*src);
                    let mut res = Tensor::zeros(n, d);
                    for (i, &grp) in groups.iter().enumerate() {
                        res.row_mut(i).copy_from_slice(&g.row(i)[grp * d..(grp + 1) * d]);
                    }
                    self.accum(grads, *src, res);
                }
            }
            Op::LayerNorm { src, inv_std } => {
                let (n, k) = out.shape();
                let mut d = Tensor::zeros(n, k);
                for r in 0..n {
                    let (y, gy) = (out.row(r), g.row(r));
                    let mean_g = gy.iter().sum::<f64>() / k as f64;
                    let mean_gy = gy.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / k as f64;
                    for (j, v) in d.row_mut(r).iter_mut().enumerate() {
                        *v = inv_std[r] * (gy[j] - mean_g - y[j] * mean_gy);
                    }
                }
                self.accum(grads, *src, d);
            }
            Op::ChannelAffine {
                x,
                scale,
                shift,
                channels,
            } => {
                let vx = self.value(*x);
                let vs = self.value(*scale);
                let (n, f) = vx.shape();
                let c = *channels;
                let s = f / c;
                if self.ng(*x) {
                    let mut dx = g.clone();
                    let sd = vs.data();
                    kernels::for_each_chunk(dx.data_mut(), f, n * f, |r, o| {
                        for ch in 0..c {
                            let gm = sd[r * c + ch];
                            for v in &mut o[ch * s..(ch + 1) * s] {
                                *v *= gm;
                            }
                        }
                    });
                    self.accum(grads, *x, dx);
                }
                if self.ng(*scale) || self.ng(*shift) {
                    let mut dscale = Tensor::zeros(n, c);
                    let mut dshift = Tensor::zeros(n, c);
                    for r in 0..n {
                        let (xr, gr) = (vx.row(r), g.row(r));
                        for ch in 0..c {
                            let mut a = 0.0;
                            let mut b = 0.0;
                            for j in ch * s..(ch + 1) * s {
                                a += gr[j] * xr[j];
                                b += gr[j];
                            }
                            dscale.set(r, ch, a);
                            dshift.set(r, ch, b);
                        }
                    }
                    self.accum(grads, *scale, dscale);
                    self.accum(grads, *shift, dshift);
                }
            }
            Op::Conv2d { x, w, b, geom } => {
                let vx = self.value(*x);
                let n = vx.rows();
                let (dx, dw, db) = geom.backward(vx.data(), n, self.value(*w).data(), g.data());
                self.accum(grads, *x, Tensor::from_vec(n, geom.in_features(), dx).unwrap());
                self.accum(grads, *w, Tensor::from_vec(geom.out_c, geom.patch_len(), dw).unwrap());
                self.accum(grads, *b, Tensor::row_vector(db));
            }
            Op::Upsample2x { x, c, h, w } => {
                let n = g.rows();
                let dx = conv::upsample2x_backward(g.data(), n, *c, *h, *w);
                self.accum(grads, *x, Tensor::from_vec(n, c * h * w, dx).unwrap());
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
