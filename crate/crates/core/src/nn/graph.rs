//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so the backward sweep is a reverse walk over the tape.

use super::params::{ParamId, ParamStore};
use super::tensor::{gemm, Tensor};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    batch: usize,
    len_in: usize,
    len_out: usize,
    c_in: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Relu(Var),
    Scale(Var, f64),
    Mask(Var, Vec<f64>),
    Reshape(Var),
    Transpose(Var),
    SoftmaxRows(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    Conv1d { x: Var, w: Var, g: ConvGeom, cols: Vec<f64> },
    ConvT1d { x: Var, w: Var, g: ConvGeom },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64>, train: bool },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Batch statistics recorded by a training-mode batch norm.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// BN parameter handles.
#[derive(Debug, Clone, Copy)]
pub struct BatchNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

pub const BN_EPS: f64 = 1e-5;

/// Per-parameter gradients, indexed like the [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub tensors: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.tensors.get(id.0).and_then(|t| t.as_ref())
    }
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    bn_stats: Vec<BatchStats>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            bn_stats: Vec::new(),
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    pub fn batch_stats(&self) -> &[BatchStats] {
        &self.bn_stats
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = match op {
            Op::Param(id) => self.params.is_trainable(id),
            Op::Leaf => false,
            _ => inputs.iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, &[])
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let t = self.params.get(id).clone();
        self.push(t, Op::Param(id), &[])
    }

    /// `[m, k] x [k, n]`, leading dims of `a` are flattened into `m`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let k = av.cols();
        let m = av.rows();
        assert_eq!(bv.shape.len(), 2, "matmul rhs must be 2-D");
        assert_eq!(bv.shape[0], k, "matmul inner dims {:?} x {:?}", av.shape, bv.shape);
        let n = bv.shape[1];
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, 1.0, &av.data, (k, 1), &bv.data, (n, 1), 0.0, &mut out);
        let mut shape = av.shape.clone();
        *shape.last_mut().unwrap() = n;
        self.push(Tensor::from_vec(&shape, out), Op::MatMul(a, b), &[a, b])
    }

    /// `[m, k] x [n, k]^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let k = av.cols();
        assert_eq!(bv.cols(), k, "matmul_nt inner dims {:?} x {:?}^T", av.shape, bv.shape);
        let (m, n) = (av.rows(), bv.rows());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, 1.0, &av.data, (k, 1), &bv.data, (1, k), 0.0, &mut out);
        self.push(Tensor::from_vec(&[m, n], out), Op::MatMulNT(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape, bv.shape, "add shapes");
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| x + y).collect();
        let shape = av.shape.clone();
        self.push(Tensor::from_vec(&shape, data), Op::Add(a, b), &[a, b])
    }

    /// Adds a `[n]` bias along the trailing dimension.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(b));
        let n = xv.cols();
        assert_eq!(bv.numel(), n, "bias length");
        let mut out = xv.data.clone();
        for row in out.chunks_mut(n) {
            for (o, bb) in row.iter_mut().zip(&bv.data) {
                *o += bb;
            }
        }
        let shape = xv.shape.clone();
        self.push(Tensor::from_vec(&shape, out), Op::AddBias(x, b), &[x, b])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data.iter().map(|&v| if v < 0.0 { 0.0 } else { v }).collect();
        let shape = xv.shape.clone();
        self.push(Tensor::from_vec(&shape, data), Op::Relu(x), &[x])
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let xv = self.value(x);
        let data = xv.data.iter().map(|v| v * s).collect();
        let shape = xv.shape.clone();
        self.push(Tensor::from_vec(&shape, data), Op::Scale(x, s), &[x])
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask(&mut self, x: Var, mask: Vec<f64>) -> Var {
        let xv = self.value(x);
        assert_eq!(mask.len(), xv.numel(), "mask length");
        let data = xv.data.iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = xv.shape.clone();
        self.push(Tensor::from_vec(&shape, data), Op::Mask(x, mask), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let xv = self.value(x);
        assert_eq!(shape.iter().product::<usize>(), xv.numel(), "reshape {:?} -> {shape:?}", xv.shape);
        let t = Tensor::from_vec(shape, xv.data.clone());
        self.push(t, Op::Reshape(x), &[x])
    }

    /// Transposes a 2-D tensor.
    pub fn transpose(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.shape.len(), 2);
        let (r, c) = (xv.shape[0], xv.shape[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = xv.data[i * c + j];
            }
        }
        self.push(Tensor::from_vec(&[c, r], out), Op::Transpose(x), &[x])
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let n = xv.cols();
        let mut out = xv.data.clone();
        for row in out.chunks_mut(n) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let shape = xv.shape.clone();
        self.push(Tensor::from_vec(&shape, out), Op::SoftmaxRows(x), &[x])
    }

    /// Columns `start..start + len` of a 2-D view `[rows, cols]`.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        let (r, c) = (xv.rows(), xv.cols());
        assert!(start + len <= c, "slice out of range");
        let mut out = Vec::with_capacity(r * len);
        for row in xv.data.chunks(c) {
            out.extend_from_slice(&row[start..start + len]);
        }
        self.push(Tensor::from_vec(&[r, len], out), Op::SliceCols { x, start }, &[x])
    }

    /// Concatenates 2-D views along columns.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Var {
        let r = self.value(xs[0]).rows();
        let widths: Vec<usize> = xs
            .iter()
            .map(|v| {
                assert_eq!(self.value(*v).rows(), r, "concat rows");
                self.value(*v).cols()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (v, w) in xs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(*v).data[i * w..(i + 1) * w]);
            }
        }
        self.push(Tensor::from_vec(&[r, total], out), Op::ConcatCols(xs.to_vec()), xs)
    }

    /// 1-D convolution on channels-last input `[n, len, c_in]`.
    ///
    /// The weight is `[kernel * c_in, c_out]`, tap-major.
    pub fn conv1d(&mut self, x: Var, w: Var, kernel: usize, stride: usize, pad: usize) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.shape.len(), 3, "conv1d input must be [n, len, c]");
        let (batch, len_in, c_in) = (xv.shape[0], xv.shape[1], xv.shape[2]);
        let wv = self.value(w);
        assert_eq!(wv.shape[0], kernel * c_in, "conv1d weight rows");
        let c_out = wv.shape[1];
        assert!(len_in + 2 * pad >= kernel, "conv1d input too short");
        let len_out = (len_in + 2 * pad - kernel) / stride + 1;
        let g = ConvGeom { batch, len_in, len_out, c_in, c_out, kernel, stride, pad };
        let kc = kernel * c_in;
        let mut cols = vec![0.0; batch * len_out * kc];
        for n in 0..batch {
            for lo in 0..len_out {
                let row = &mut cols[(n * len_out + lo) * kc..(n * len_out + lo + 1) * kc];
                for k in 0..kernel {
                    let li = (lo * stride + k) as isize - pad as isize;
                    if li >= 0 && (li as usize) < len_in {
                        let src = (n * len_in + li as usize) * c_in;
                        row[k * c_in..(k + 1) * c_in].copy_from_slice(&xv.data[src..src + c_in]);
                    }
                }
            }
        }
        let m = batch * len_out;
        let mut out = vec![0.0; m * c_out];
        gemm(m, kc, c_out, 1.0, &cols, (kc, 1), &wv.data, (c_out, 1), 0.0, &mut out);
        let t = Tensor::from_vec(&[batch, len_out, c_out], out);
        self.push(t, Op::Conv1d { x, w, g, cols }, &[x, w])
    }

    /// Transposed 1-D convolution on `[n, len, c_in]`, output cropped to `len_out`.
    ///
    /// The weight is `[c_in, kernel * c_out]`. Output position `l * stride + k - pad`
    /// receives tap `k` of input position `l`.
    pub fn conv_transpose1d(
        &mut self,
        x: Var,
        w: Var,
        kernel: usize,
        stride: usize,
        pad: usize,
        len_out: usize,
    ) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.shape.len(), 3, "conv_transpose1d input must be [n, len, c]");
        let (batch, len_in, c_in) = (xv.shape[0], xv.shape[1], xv.shape[2]);
        let wv = self.value(w);
        assert_eq!(wv.shape[0], c_in, "conv_transpose1d weight rows");
        let kco = wv.shape[1];
        assert_eq!(kco % kernel, 0);
        let c_out = kco / kernel;
        let g = ConvGeom { batch, len_in, len_out, c_in, c_out, kernel, stride, pad };
        let m = batch * len_in;
        let mut cols = vec![0.0; m * kco];
        gemm(m, c_in, kco, 1.0, &xv.data, (c_in, 1), &wv.data, (kco, 1), 0.0, &mut cols);
        let mut out = vec![0.0; batch * len_out * c_out];
        for n in 0..batch {
            for l in 0..len_in {
                let row = &cols[(n * len_in + l) * kco..(n * len_in + l + 1) * kco];
                for k in 0..kernel {
                    let lo = (l * stride + k) as isize - pad as isize;
                    if lo >= 0 && (lo as usize) < len_out {
                        let dst = (n * len_out + lo as usize) * c_out;
                        for (o, v) in out[dst..dst + c_out].iter_mut().zip(&row[k * c_out..(k + 1) * c_out]) {
                            *o += v;
                        }
                    }
                }
            }
        }
        let t = Tensor::from_vec(&[batch, len_out, c_out], out);
        self.push(t, Op::ConvT1d { x, w, g }, &[x, w])
    }

    /// Batch norm over the trailing (channel) axis.
    ///
    /// Training mode normalizes with biased batch statistics and records them
    /// for the running-average update; eval mode uses the stored running stats.
    pub fn batch_norm(&mut self, x: Var, p: BatchNormParams, train: bool) -> Var {
        let gamma = self.param(p.gamma);
        let beta = self.param(p.beta);
        let xv = self.value(x);
        let c = xv.cols();
        let rows = xv.rows();
        let (mean, var) = if train {
            let mut mean = vec![0.0; c];
            for row in xv.data.chunks(c) {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= rows as f64);
            let mut var = vec![0.0; c];
            for row in xv.data.chunks(c) {
                for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s /= rows as f64);
            (mean, var)
        } else {
            (
                self.params.get(p.running_mean).data.clone(),
                self.params.get(p.running_var).data.clone(),
            )
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = xv.data.clone();
        for row in xhat.chunks_mut(c) {
            for ((h, m), s) in row.iter_mut().zip(&mean).zip(&inv_std) {
                *h = (*h - m) * s;
            }
        }
        let (gv, bv) = (&self.value(gamma).data, &self.value(beta).data);
        let mut out = xhat.clone();
        for row in out.chunks_mut(c) {
            for ((o, g), b) in row.iter_mut().zip(gv).zip(bv) {
                *o = *o * g + b;
            }
        }
        let shape = xv.shape.clone();
        if train {
            self.bn_stats.push(BatchStats {
                running_mean: p.running_mean,
                running_var: p.running_var,
                mean,
                var,
            });
        }
        self.push(
            Tensor::from_vec(&shape, out),
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, train },
            &[x, gamma, beta],
        )
    }

    /// Reverse sweep seeded with `d output / d v` for each `(v, grad)`.
    pub fn backward(&self, seeds: Vec<(Var, Tensor)>) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut top = 0;
        for (v, g) in seeds {
            assert_eq!(g.numel(), self.nodes[v.0].value.numel(), "seed gradient size");
            top = top.max(v.0 + 1);
            accumulate(&mut grads, v, g.data);
        }
        let mut out = Gradients {
            tensors: (0..self.params.len()).map(|_| None).collect(),
        };
        for i in (0..top).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let g = Tensor::from_vec(&node.value.shape, g.data);
            self.backprop_node(node, g, &mut grads, &mut out);
        }
        out
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn backprop_node(&self, node: &Node, g: Tensor, grads: &mut [Option<Tensor>], out: &mut Gradients) {
        let gd = &g.data;
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => match &mut out.tensors[id.0] {
                Some(t) => t.add_assign(&g),
                slot => *slot = Some(Tensor::from_vec(&self.params.get(*id).shape, g.data)),
            },
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.shape[1]);
                if self.needs(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, 1.0, gd, (n, 1), &bv.data, (1, n), 0.0, &mut da);
                    accumulate(grads, *a, da);
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, 1.0, &av.data, (1, k), gd, (n, 1), 0.0, &mut db);
                    accumulate(grads, *b, db);
                }
            }
            Op::MatMulNT(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                if self.needs(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, 1.0, gd, (n, 1), &bv.data, (k, 1), 0.0, &mut da);
                    accumulate(grads, *a, da);
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; n * k];
                    gemm(n, m, k, 1.0, gd, (1, n), &av.data, (k, 1), 0.0, &mut db);
                    accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    accumulate(grads, *a, gd.clone());
                }
                if self.needs(*b) {
                    accumulate(grads, *b, g.data);
                }
            }
            Op::AddBias(x, b) => {
                if self.needs(*b) {
                    let n = g.cols();
                    let mut db = vec![0.0; n];
                    for row in gd.chunks(n) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate(grads, *b, db);
                }
                if self.needs(*x) {
                    accumulate(grads, *x, g.data);
                }
            }
            Op::Relu(x) => {
                let dx = gd
                    .iter()
                    .zip(&node.value.data)
                    .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
                    .collect();
                accumulate(grads, *x, dx);
            }
            Op::Scale(x, s) => accumulate(grads, *x, gd.iter().map(|v| v * s).collect()),
            Op::Mask(x, m) => accumulate(grads, *x, gd.iter().zip(m.iter()).map(|(v, m)| v * m).collect()),
            Op::Reshape(x) => accumulate(grads, *x, g.data),
            Op::Transpose(x) => {
                let (c, r) = (node.value.shape[0], node.value.shape[1]);
                let mut dx = vec![0.0; r * c];
                for j in 0..c {
                    for i in 0..r {
                        dx[i * c + j] = gd[j * r + i];
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::SoftmaxRows(x) => {
                let n = node.value.cols();
                let mut dx = vec![0.0; gd.len()];
                for ((d, gr), y) in dx.chunks_mut(n).zip(gd.chunks(n)).zip(node.value.data.chunks(n)) {
                    let dot: f64 = gr.iter().zip(y).map(|(a, b)| a * b).sum();
                    for ((dd, gg), yy) in d.iter_mut().zip(gr).zip(y) {
                        *dd = yy * (gg - dot);
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::SliceCols { x, start } => {
                let xv = self.value(*x);
                let (c, len) = (xv.cols(), g.cols());
                let mut dx = vec![0.0; xv.numel()];
                for (drow, grow) in dx.chunks_mut(c).zip(gd.chunks(len)) {
                    drow[*start..start + len].copy_from_slice(grow);
                }
                accumulate(grads, *x, dx);
            }
            Op::ConcatCols(xs) => {
                let total = g.cols();
                let mut offset = 0;
                for v in xs {
                    let w = self.value(*v).cols();
                    if self.needs(*v) {
                        let mut dx = Vec::with_capacity(self.value(*v).numel());
                        for row in gd.chunks(total) {
                            dx.extend_from_slice(&row[offset..offset + w]);
                        }
                        accumulate(grads, *v, dx);
                    }
                    offset += w;
                }
            }
            Op::Conv1d { x, w, g: geo, cols } => {
                let kc = geo.kernel * geo.c_in;
                let m = geo.batch * geo.len_out;
                if self.needs(*w) {
                    let mut dw = vec![0.0; kc * geo.c_out];
                    gemm(kc, m, geo.c_out, 1.0, cols, (1, kc), gd, (geo.c_out, 1), 0.0, &mut dw);
                    accumulate(grads, *w, dw);
                }
                if self.needs(*x) {
                    let wv = self.value(*w);
                    let mut dcols = vec![0.0; m * kc];
                    gemm(m, geo.c_out, kc, 1.0, gd, (geo.c_out, 1), &wv.data, (1, geo.c_out), 0.0, &mut dcols);
                    let mut dx = vec![0.0; geo.batch * geo.len_in * geo.c_in];
                    for n in 0..geo.batch {
                        for lo in 0..geo.len_out {
                            let row = &dcols[(n * geo.len_out + lo) * kc..(n * geo.len_out + lo + 1) * kc];
                            for k in 0..geo.kernel {
                                let li = (lo * geo.stride + k) as isize - geo.pad as isize;
                                if li >= 0 && (li as usize) < geo.len_in {
                                    let dst = (n * geo.len_in + li as usize) * geo.c_in;
                                    for (d, v) in dx[dst..dst + geo.c_in]
                                        .iter_mut()
                                        .zip(&row[k * geo.c_in..(k + 1) * geo.c_in])
                                    {
                                        *d += v;
                                    }
                                }
                            }
                        }
                    }
                    accumulate(grads, *x, dx);
                }
            }
            Op::ConvT1d { x, w, g: geo } => {
                let kco = geo.kernel * geo.c_out;
                let m = geo.batch * geo.len_in;
                let mut dcols = vec![0.0; m * kco];
                for n in 0..geo.batch {
                    for l in 0..geo.len_in {
                        let row = &mut dcols[(n * geo.len_in + l) * kco..(n * geo.len_in + l + 1) * kco];
                        for k in 0..geo.kernel {
                            let lo = (l * geo.stride + k) as isize - geo.pad as isize;
                            if lo >= 0 && (lo as usize) < geo.len_out {
                                let src = (n * geo.len_out + lo as usize) * geo.c_out;
                                row[k * geo.c_out..(k + 1) * geo.c_out].copy_from_slice(&gd[src..src + geo.c_out]);
                            }
                        }
                    }
                }
                if self.needs(*w) {
                    let xv = self.value(*x);
                    let mut dw = vec![0.0; geo.c_in * kco];
                    gemm(geo.c_in, m, kco, 1.0, &xv.data, (1, geo.c_in), &dcols, (kco, 1), 0.0, &mut dw);
                    accumulate(grads, *w, dw);
                }
                if self.needs(*x) {
                    let wv = self.value(*w);
                    let mut dx = vec![0.0; m * geo.c_in];
                    gemm(m, kco, geo.c_in, 1.0, &dcols, (kco, 1), &wv.data, (1, kco), 0.0, &mut dx);
                    accumulate(grads, *x, dx);
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
                let c = g.cols();
                let rows = g.rows() as f64;
                if self.needs(*gamma) {
                    let mut dg = vec![0.0; c];
                    for (grow, hrow) in gd.chunks(c).zip(xhat.chunks(c)) {
                        for ((d, gg), h) in dg.iter_mut().zip(grow).zip(hrow) {
                            *d += gg * h;
                        }
                    }
                    accumulate(grads, *gamma, dg);
                }
                if self.needs(*beta) {
                    let mut db = vec![0.0; c];
                    for grow in gd.chunks(c) {
                        for (d, gg) in db.iter_mut().zip(grow) {
                            *d += gg;
                        }
                    }
                    accumulate(grads, *beta, db);
                }
                if self.needs(*x) {
                    let gv = &self.value(*gamma).data;
                    let mut dx = vec![0.0; gd.len()];
                    if *train {
                        let mut sum = vec![0.0; c];
                        let mut sum_h = vec![0.0; c];
                        for (grow, hrow) in gd.chunks(c).zip(xhat.chunks(c)) {
                            for j in 0..c {
                                let dh = grow[j] * gv[j];
                                sum[j] += dh;
                                sum_h[j] += dh * hrow[j];
                            }
                        }
                        for ((drow, grow), hrow) in dx.chunks_mut(c).zip(gd.chunks(c)).zip(xhat.chunks(c)) {
                            for j in 0..c {
                                let dh = grow[j] * gv[j];
                                drow[j] = inv_std[j] / rows * (rows * dh - sum[j] - hrow[j] * sum_h[j]);
                            }
                        }
                    } else {
                        for (drow, grow) in dx.chunks_mut(c).zip(gd.chunks(c)) {
                            for j in 0..c {
                                drow[j] = grow[j] * gv[j] * inv_std[j];
                            }
                        }
                    }
                    accumulate(grads, *x, dx);
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(t) => {
            for (a, b) in t.data.iter_mut().zip(&g) {
                *a += b;
            }
        }
        slot => {
            let n = g.len();
            *slot = Some(Tensor::from_vec(&[n], g));
        }
    }
}
