//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied during one forward pass.
//! Parameters are borrowed from a [`ParamStore`] and appear on the tape once,
//! so repeated use (recurrent weights, shared heads) accumulates naturally.
//! [`Graph::backward`] walks the tape in reverse and returns gradients for
//! parameters and for inputs created with [`Graph::input_with_grad`].

use rayon::prelude::*;

use super::params::{ParamId, ParamStore};
use super::{NnError, Tensor};

/// Handle to a value on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Below this many multiply-adds convolution stays on the calling thread.
const PARALLEL_CONV_WORK: usize = 1 << 20;

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Concat(Vec<Var>),
    SumRows(Var),
    Row(Var, usize),
    GatherRows {
        table: Var,
        ids: Vec<usize>,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
    },
    GlobalMaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    GraphAttention {
        wh: Var,
        att: Var,
        neighbors: Vec<Vec<usize>>,
        slope: f64,
        pre: Vec<Vec<f64>>,
        alpha: Vec<Vec<f64>>,
    },
    NeighborSum {
        x: Var,
        neighbors: Vec<Vec<usize>>,
    },
    Reshape(Var),
    Mse {
        pred: Var,
        target: Vec<f64>,
    },
}

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

struct Node {
    value: Value,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    params: Vec<Option<Vec<f64>>>,
    leaves: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        self.params.get(id.index()).and_then(|g| g.as_deref())
    }

    /// Gradient w.r.t. an input created with [`Graph::input_with_grad`].
    pub fn input(&self, v: Var) -> Option<&[f64]> {
        self.leaves.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.params
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_deref().map(|g| (ParamId(i), g)))
    }
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

fn mismatch(op: &'static str, detail: String) -> NnError {
    NnError::ShapeMismatch { op, detail }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.params.get(*id),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.value(v).data()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Constant input; no gradient is tracked.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Input whose gradient is reported by [`Gradients::input`].
    pub fn input_with_grad(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.index()] = Some(v);
        v
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NnError> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn zip_with(&mut self, op: Op, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Var {
        let shape = self.shape(a).to_vec();
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        let ng = self.needs(&[a, b]);
        self.push(Tensor::new(shape, data).expect("same shape"), op, ng)
    }

    fn map(&mut self, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let shape = self.shape(a).to_vec();
        let data = self.data(a).iter().map(|&x| f(x)).collect();
        let ng = self.needs(&[a]);
        self.push(Tensor::new(shape, data).expect("same shape"), op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(Op::Add(a, b), a, b, |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(Op::Sub(a, b), a, b, |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(Op::Mul(a, b), a, b, |x, y| x * y))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(Op::Scale(a, c), a, |x| c * x)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(Op::Sigmoid(a), a, sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(Op::Tanh(a), a, f64::tanh)
    }

    /// `max(0, x)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, a: Var) -> Var {
        self.map(Op::Relu(a), a, |x| x.max(0.0))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.map(Op::LeakyRelu(a, slope), a, |x| if x > 0.0 { x } else { slope * x })
    }

    /// `x W^T + b` for `x` of shape `[in]` or `[n, in]`, `W` of shape `[out, in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, NnError> {
        let ws = self.shape(w).to_vec();
        let xs = self.shape(x).to_vec();
        if ws.len() != 2 {
            return Err(mismatch("linear", format!("weight must be 2-D, got {ws:?}")));
        }
        let (n_out, n_in) = (ws[0], ws[1]);
        let rows = match xs.as_slice() {
            [k] if *k == n_in => 1,
            [r, k] if *k == n_in => *r,
            _ => return Err(mismatch("linear", format!("input {xs:?} vs weight {ws:?}"))),
        };
        if let Some(b) = b {
            if self.shape(b) != [n_out] {
                return Err(mismatch("linear", format!("bias {:?} vs out {n_out}", self.shape(b))));
            }
        }
        let (xd, wd) = (self.data(x), self.data(w));
        let bd = b.map(|b| self.data(b));
        let mut out = vec![0.0; rows * n_out];
        for r in 0..rows {
            let xr = &xd[r * n_in..(r + 1) * n_in];
            for o in 0..n_out {
                let mut acc = dot(&wd[o * n_in..(o + 1) * n_in], xr);
                if let Some(bd) = bd {
                    acc += bd[o];
                }
                out[r * n_out + o] = acc;
            }
        }
        let shape = if xs.len() == 1 { vec![n_out] } else { vec![rows, n_out] };
        let mut deps = vec![x, w];
        deps.extend(b);
        let ng = self.needs(&deps);
        Ok(self.push(Tensor::new(shape, out)?, Op::Linear { x, w, b }, ng))
    }

    /// Concatenation along the last axis. All parts share rank and leading extent.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let first = *parts.first().ok_or_else(|| mismatch("concat", "no inputs".into()))?;
        let rank = self.shape(first).len();
        let rows = if rank == 2 { self.shape(first)[0] } else { 1 };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            match (rank, s) {
                (1, [w]) => widths.push(*w),
                (2, [r, w]) if *r == rows => widths.push(*w),
                _ => return Err(mismatch("concat", format!("part {s:?} incompatible"))),
            }
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.data(p)[r * w..(r + 1) * w]);
            }
        }
        let shape = if rank == 1 { vec![total] } else { vec![rows, total] };
        let ng = self.needs(parts);
        Ok(self.push(Tensor::new(shape, out)?, Op::Concat(parts.to_vec()), ng))
    }

    /// `[n, d] -> [d]` by summation over rows.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var, NnError> {
        let &[n, d] = self.shape(a) else {
            return Err(mismatch("sum_rows", format!("{:?}", self.shape(a))));
        };
        let src = self.data(a);
        let mut out = vec![0.0; d];
        for r in 0..n {
            axpy(1.0, &src[r * d..(r + 1) * d], &mut out);
        }
        let ng = self.needs(&[a]);
        Ok(self.push(Tensor::vector(out), Op::SumRows(a), ng))
    }

    /// Row `i` of a `[n, d]` matrix.
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var, NnError> {
        let &[n, d] = self.shape(a) else {
            return Err(mismatch("row", format!("{:?}", self.shape(a))));
        };
        if i >= n {
            return Err(mismatch("row", format!("row {i} of {n}")));
        }
        let out = self.data(a)[i * d..(i + 1) * d].to_vec();
        let ng = self.needs(&[a]);
        Ok(self.push(Tensor::vector(out), Op::Row(a, i), ng))
    }

    /// Rows of `table` (`[V, d]`) selected by `ids`, giving `[ids.len(), d]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var, NnError> {
        let &[v, d] = self.shape(table) else {
            return Err(mismatch("gather_rows", format!("{:?}", self.shape(table))));
        };
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(mismatch("gather_rows", format!("id {bad} outside table of {v}")));
        }
        let src = self.data(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let ng = self.needs(&[table]);
        let t = Tensor::new(vec![ids.len(), d], out)?;
        Ok(self.push(
            t,
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, NnError> {
        let t = self.value(a).clone().reshaped(shape.to_vec())?;
        let ng = self.needs(&[a]);
        Ok(self.push(t, Op::Reshape(a), ng))
    }

    /// Valid cross-correlation: `x [C_in, H, W]`, `w [C_out, C_in, k, k]`, `b [C_out]`
    /// gives `[C_out, H-k+1, W-k+1]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let &[c_in, h, wd] = self.shape(x) else {
            return Err(mismatch("conv2d", format!("input {:?}", self.shape(x))));
        };
        let &[c_out, wc_in, kh, kw] = self.shape(w) else {
            return Err(mismatch("conv2d", format!("kernel {:?}", self.shape(w))));
        };
        if wc_in != c_in || kh != kw || self.shape(b) != [c_out] {
            return Err(mismatch(
                "conv2d",
                format!(
                    "input {:?} kernel {:?} bias {:?}",
                    self.shape(x),
                    self.shape(w),
                    self.shape(b)
                ),
            ));
        }
        let k = kh;
        if k == 0 || h < k || wd < k {
            return Err(NnError::KernelTooLarge {
                kernel: k,
                height: h,
                width: wd,
            });
        }
        let (oh, ow) = (h - k + 1, wd - k + 1);
        let (xd, kd, bd) = (self.data(x), self.data(w), self.data(b));
        let plane = oh * ow;
        let mut out = vec![0.0; c_out * plane];
        let fill = |co: usize, dst: &mut [f64]| {
            dst.fill(bd[co]);
            for ci in 0..c_in {
                let xin = &xd[ci * h * wd..(ci + 1) * h * wd];
                let kern = &kd[(co * c_in + ci) * k * k..(co * c_in + ci + 1) * k * k];
                for ki in 0..k {
                    for kj in 0..k {
                        let wv = kern[ki * k + kj];
                        if wv == 0.0 {
                            continue;
                        }
                        for i in 0..oh {
                            let src = &xin[(i + ki) * wd + kj..(i + ki) * wd + kj + ow];
                            axpy(wv, src, &mut dst[i * ow..(i + 1) * ow]);
                        }
                    }
                }
            }
        };
        if c_out * plane * c_in * k * k >= PARALLEL_CONV_WORK {
            out.par_chunks_mut(plane)
                .enumerate()
                .for_each(|(co, dst)| fill(co, dst));
        } else {
            out.chunks_mut(plane).enumerate().for_each(|(co, dst)| fill(co, dst));
        }
        let ng = self.needs(&[x, w, b]);
        let t = Tensor::new(vec![c_out, oh, ow], out)?;
        Ok(self.push(t, Op::Conv2d { x, w, b }, ng))
    }

    /// `[C, H, W] -> [C]` by per-channel maximum; gradient goes to the first argmax.
    pub fn global_max_pool(&mut self, x: Var) -> Result<Var, NnError> {
        let &[c, h, w] = self.shape(x) else {
            return Err(mismatch("global_max_pool", format!("{:?}", self.shape(x))));
        };
        if h == 0 || w == 0 {
            return Err(mismatch("global_max_pool", "empty spatial extent".into()));
        }
        let plane = h * w;
        let src = self.data(x);
        let mut out = Vec::with_capacity(c);
        let mut argmax = Vec::with_capacity(c);
        for ch in 0..c {
            let p = &src[ch * plane..(ch + 1) * plane];
            let mut best = 0;
            for (i, &v) in p.iter().enumerate() {
                if v > p[best] {
                    best = i;
                }
            }
            out.push(p[best]);
            argmax.push(ch * plane + best);
        }
        let ng = self.needs(&[x]);
        Ok(self.push(Tensor::vector(out), Op::GlobalMaxPool { x, argmax }, ng))
    }

    /// Single-head graph attention over pre-projected node vectors `wh [n, d]`.
    ///
    /// `att` has length `2d`: the first half scores the receiving node, the
    /// second half the sending node. For node `i` the scores
    /// `LeakyReLU(att . [wh_i ; wh_j])` over `j in neighbors[i]` are softmax
    /// normalised and used to average `wh_j`. Callers include `i` in its own
    /// neighbor list for self-attention.
    pub fn graph_attention(&mut self, wh: Var, att: Var, neighbors: &[Vec<usize>], slope: f64) -> Result<Var, NnError> {
        let &[n, d] = self.shape(wh) else {
            return Err(mismatch("graph_attention", format!("{:?}", self.shape(wh))));
        };
        if n == 0 {
            return Err(NnError::EmptyGraph);
        }
        if self.shape(att) != [2 * d] || neighbors.len() != n {
            return Err(mismatch(
                "graph_attention",
                format!(
                    "att {:?}, {} neighbor lists for {n} nodes",
                    self.shape(att),
                    neighbors.len()
                ),
            ));
        }
        if neighbors.iter().any(|nb| nb.is_empty() || nb.iter().any(|&j| j >= n)) {
            return Err(mismatch(
                "graph_attention",
                "empty or out-of-range neighbor list".into(),
            ));
        }
        let (h, a) = (self.data(wh), self.data(att));
        let src: Vec<f64> = (0..n).map(|i| dot(&a[..d], &h[i * d..(i + 1) * d])).collect();
        let dst: Vec<f64> = (0..n).map(|j| dot(&a[d..], &h[j * d..(j + 1) * d])).collect();
        let mut out = vec![0.0; n * d];
        let mut pre = Vec::with_capacity(n);
        let mut alpha = Vec::with_capacity(n);
        for i in 0..n {
            let u: Vec<f64> = neighbors[i].iter().map(|&j| src[i] + dst[j]).collect();
            let e: Vec<f64> = u.iter().map(|&x| if x > 0.0 { x } else { slope * x }).collect();
            let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let ex: Vec<f64> = e.iter().map(|&x| (x - m).exp()).collect();
            let z: f64 = ex.iter().sum();
            let al: Vec<f64> = ex.iter().map(|x| x / z).collect();
            for (&j, &aij) in neighbors[i].iter().zip(&al) {
                axpy(aij, &h[j * d..(j + 1) * d], &mut out[i * d..(i + 1) * d]);
            }
            pre.push(u);
            alpha.push(al);
        }
        let ng = self.needs(&[wh, att]);
        let t = Tensor::new(vec![n, d], out)?;
        Ok(self.push(
            t,
            Op::GraphAttention {
                wh,
                att,
                neighbors: neighbors.to_vec(),
                slope,
                pre,
                alpha,
            },
            ng,
        ))
    }

    /// Attention coefficients of a `graph_attention` node, per receiving node.
    pub fn attention_weights(&self, v: Var) -> Option<&[Vec<f64>]> {
        match &self.nodes[v.0].op {
            Op::GraphAttention { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// `out_i = sum_{j in neighbors[i]} x_j` for `x [n, d]`.
    pub fn neighbor_sum(&mut self, x: Var, neighbors: &[Vec<usize>]) -> Result<Var, NnError> {
        let &[n, d] = self.shape(x) else {
            return Err(mismatch("neighbor_sum", format!("{:?}", self.shape(x))));
        };
        if neighbors.len() != n || neighbors.iter().flatten().any(|&j| j >= n) {
            return Err(mismatch("neighbor_sum", "neighbor lists do not match nodes".into()));
        }
        let src = self.data(x);
        let mut out = vec![0.0; n * d];
        for (i, nb) in neighbors.iter().enumerate() {
            for &j in nb {
                axpy(1.0, &src[j * d..(j + 1) * d], &mut out[i * d..(i + 1) * d]);
            }
        }
        let ng = self.needs(&[x]);
        let t = Tensor::new(vec![n, d], out)?;
        Ok(self.push(
            t,
            Op::NeighborSum {
                x,
                neighbors: neighbors.to_vec(),
            },
            ng,
        ))
    }

    /// `(1/N) sum (pred_i - target_i)^2` as a scalar.
    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Result<Var, NnError> {
        let p = self.data(pred);
        if p.len() != target.len() {
            return Err(mismatch(
                "mse",
                format!("{} predictions, {} labels", p.len(), target.len()),
            ));
        }
        if p.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        let loss = p.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
        let ng = self.needs(&[pred]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Mse {
                pred,
                target: target.to_vec(),
            },
            ng,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NnError> {
        if self.value(loss).numel() != 1 {
            return Err(mismatch("backward", format!("loss shape {:?}", self.shape(loss))));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut out = Gradients {
            params: vec![None; self.params.len()],
            leaves: vec![None; n],
        };
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf => out.leaves[idx] = Some(g),
                Op::Param(id) => out.params[id.index()] = Some(g),
                op => self.backward_op(idx, op, &g, &mut grads),
            }
        }
        Ok(out)
    }

    fn grad_buf<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let len = self.value(v).numel();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn backward_op(&self, idx: usize, op: &Op, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = self.data(Var(idx));
        match op {
            Op::Leaf | Op::Param(_) => unreachable!(),
            Op::Add(a, b) => {
                if let Some(ga) = self.grad_buf(grads, *a) {
                    axpy(1.0, g, ga);
                }
                if let Some(gb) = self.grad_buf(grads, *b) {
                    axpy(1.0, g, gb);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.grad_buf(grads, *a) {
                    axpy(1.0, g, ga);
                }
                if let Some(gb) = self.grad_buf(grads, *b) {
                    axpy(-1.0, g, gb);
                }
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                if let Some(ga) = self.grad_buf(grads, *a) {
                    for ((d, gi), bi) in ga.iter_mut().zip(g).zip(bd) {
                        *d += gi * bi;
                    }
                }
                if let Some(gb) = self.grad_buf(grads, *b) {
                    for ((d, gi), ai) in gb.iter_mut().zip(g).zip(ad) {
                        *d += gi * ai;
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(ga) = self.grad_buf(grads, *a) {
                    axpy(*c, g, ga);
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = self.grad_buf(grads, *a) {
                    for ((d, gi), y) in ga.iter_mut().zip(g).zip(out) {
                        *d += gi * y * (1.0 - y);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(ga) = self.grad_buf(grads, *a) {
                    for ((d, gi), y) in ga.iter_mut().zip(g).zip(out) {
                        *d += gi * (1.0 - y * y);
                    }
                }
            }
            Op::Relu(a) => {
                let x = self.data(*a);
                if let Some(ga) = self.grad_buf(grads, *a) {
                    for ((d, gi), xi) in ga.iter_mut().zip(g).zip(x) {
                        if *xi > 0.0 {
                            *d += gi;
                        }
                    }
                }
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.data(*a);
                if let Some(ga) = self.grad_buf(grads, *a) {
                    for ((d, gi), xi) in ga.iter_mut().zip(g).zip(x) {
                        *d += if *xi > 0.0 { *gi } else { slope * gi };
                    }
                }
            }
            Op::Linear { x, w, b } => {
                let ws = self.shape(*w);
                let (n_out, n_in) = (ws[0], ws[1]);
                let rows = g.len() / n_out;
                let (xd, wd) = (self.data(*x), self.data(*w));
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for r in 0..rows {
                        let gxr = &mut gx[r * n_in..(r + 1) * n_in];
                        for o in 0..n_out {
                            let go = g[r * n_out + o];
                            if go != 0.0 {
                                axpy(go, &wd[o * n_in..(o + 1) * n_in], gxr);
                            }
                        }
                    }
                }
                if let Some(gw) = self.grad_buf(grads, *w) {
                    for r in 0..rows {
                        let xr = &xd[r * n_in..(r + 1) * n_in];
                        for o in 0..n_out {
                            let go = g[r * n_out + o];
                            if go != 0.0 {
                                axpy(go, xr, &mut gw[o * n_in..(o + 1) * n_in]);
                            }
                        }
                    }
                }
                if let Some(b) = b {
                    if let Some(gb) = self.grad_buf(grads, *b) {
                        for r in 0..rows {
                            axpy(1.0, &g[r * n_out..(r + 1) * n_out], gb);
                        }
                    }
                }
            }
            Op::Concat(parts) => {
                let shape = self.shape(Var(idx));
                let rows = if shape.len() == 2 { shape[0] } else { 1 };
                let total = *shape.last().expect("rank >= 1");
                let mut offset = 0;
                for &p in parts {
                    let w = *self.shape(p).last().expect("rank >= 1");
                    if let Some(gp) = self.grad_buf(grads, p) {
                        for r in 0..rows {
                            axpy(
                                1.0,
                                &g[r * total + offset..r * total + offset + w],
                                &mut gp[r * w..(r + 1) * w],
                            );
                        }
                    }
                    offset += w;
                }
            }
            Op::SumRows(a) => {
                let d = g.len();
                if let Some(ga) = self.grad_buf(grads, *a) {
                    for chunk in ga.chunks_mut(d) {
                        axpy(1.0, g, chunk);
                    }
                }
            }
            Op::Row(a, i) => {
                let d = g.len();
                if let Some(ga) = self.grad_buf(grads, *a) {
                    axpy(1.0, g, &mut ga[i * d..(i + 1) * d]);
                }
            }
            Op::GatherRows { table, ids } => {
                let d = self.shape(*table)[1];
                if let Some(gt) = self.grad_buf(grads, *table) {
                    for (r, &id) in ids.iter().enumerate() {
                        axpy(1.0, &g[r * d..(r + 1) * d], &mut gt[id * d..(id + 1) * d]);
                    }
                }
            }
            Op::Reshape(a) => {
                if let Some(ga) = self.grad_buf(grads, *a) {
                    axpy(1.0, g, ga);
                }
            }
            Op::Conv2d { x, w, b } => self.conv2d_backward(*x, *w, *b, g, grads),
            Op::GlobalMaxPool { x, argmax } => {
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for (gi, &pos) in g.iter().zip(argmax) {
                        gx[pos] += gi;
                    }
                }
            }
            Op::GraphAttention {
                wh,
                att,
                neighbors,
                slope,
                pre,
                alpha,
            } => {
                let d = self.shape(*wh)[1];
                let n = neighbors.len();
                let (h, a) = (self.data(*wh), self.data(*att));
                let mut g_wh = vec![0.0; n * d];
                let mut g_src = vec![0.0; n];
                let mut g_dst = vec![0.0; n];
                for i in 0..n {
                    let gi = &g[i * d..(i + 1) * d];
                    let d_alpha: Vec<f64> = neighbors[i].iter().map(|&j| dot(gi, &h[j * d..(j + 1) * d])).collect();
                    let mean: f64 = alpha[i].iter().zip(&d_alpha).map(|(x, y)| x * y).sum();
                    for (k, &j) in neighbors[i].iter().enumerate() {
                        axpy(alpha[i][k], gi, &mut g_wh[j * d..(j + 1) * d]);
                        let de = alpha[i][k] * (d_alpha[k] - mean);
                        let du = if pre[i][k] > 0.0 { de } else { slope * de };
                        g_src[i] += du;
                        g_dst[j] += du;
                    }
                }
                if let Some(ga) = self.grad_buf(grads, *att) {
                    for i in 0..n {
                        let hi = &h[i * d..(i + 1) * d];
                        axpy(g_src[i], hi, &mut ga[..d]);
                        axpy(g_dst[i], hi, &mut ga[d..]);
                    }
                }
                if let Some(gw) = self.grad_buf(grads, *wh) {
                    for i in 0..n {
                        let row = &mut gw[i * d..(i + 1) * d];
                        axpy(1.0, &g_wh[i * d..(i + 1) * d], row);
                        axpy(g_src[i], &a[..d], row);
                        axpy(g_dst[i], &a[d..], row);
                    }
                }
            }
            Op::NeighborSum { x, neighbors } => {
                let d = self.shape(*x)[1];
                if let Some(gx) = self.grad_buf(grads, *x) {
                    for (i, nb) in neighbors.iter().enumerate() {
                        for &j in nb {
                            axpy(1.0, &g[i * d..(i + 1) * d], &mut gx[j * d..(j + 1) * d]);
                        }
                    }
                }
            }
            Op::Mse { pred, target } => {
                let p = self.data(*pred);
                let scale = 2.0 * g[0] / p.len() as f64;
                if let Some(gp) = self.grad_buf(grads, *pred) {
                    for ((d, pi), ti) in gp.iter_mut().zip(p).zip(target) {
                        *d += scale * (pi - ti);
                    }
                }
            }
        }
    }

    fn conv2d_backward(&self, x: Var, w: Var, b: Var, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let (c_in, h, wd) = {
            let s = self.shape(x);
            (s[0], s[1], s[2])
        };
        let (c_out, k) = {
            let s = self.shape(w);
            (s[0], s[2])
        };
        let (oh, ow) = (h - k + 1, wd - k + 1);
        let plane = oh * ow;
        let (xd, kd) = (self.data(x), self.data(w));
        let parallel = c_out * plane * c_in * k * k >= PARALLEL_CONV_WORK;

        if let Some(gb) = self.grad_buf(grads, b) {
            for co in 0..c_out {
                gb[co] += g[co * plane..(co + 1) * plane].iter().sum::<f64>();
            }
        }
        if let Some(gw) = self.grad_buf(grads, w) {
            let per_co = c_in * k * k;
            let work = |co: usize, gwc: &mut [f64]| {
                let gp = &g[co * plane..(co + 1) * plane];
                for ci in 0..c_in {
                    let xin = &xd[ci * h * wd..(ci + 1) * h * wd];
                    for ki in 0..k {
                        for kj in 0..k {
                            let mut acc = 0.0;
                            for i in 0..oh {
                                let src = &xin[(i + ki) * wd + kj..(i + ki) * wd + kj + ow];
                                acc += dot(&gp[i * ow..(i + 1) * ow], src);
                            }
                            gwc[(ci * k + ki) * k + kj] += acc;
                        }
                    }
                }
            };
            if parallel {
                gw.par_chunks_mut(per_co).enumerate().for_each(|(co, c)| work(co, c));
            } else {
                gw.chunks_mut(per_co).enumerate().for_each(|(co, c)| work(co, c));
            }
        }
        if let Some(gx) = self.grad_buf(grads, x) {
            let work = |ci: usize, gxc: &mut [f64]| {
                for co in 0..c_out {
                    let gp = &g[co * plane..(co + 1) * plane];
                    let kern = &kd[(co * c_in + ci) * k * k..(co * c_in + ci + 1) * k * k];
                    for ki in 0..k {
                        for kj in 0..k {
                            let wv = kern[ki * k + kj];
                            if wv == 0.0 {
                                continue;
                            }
                            for i in 0..oh {
                                let dst = &mut gxc[(i + ki) * wd + kj..(i + ki) * wd + kj + ow];
                                axpy(wv, &gp[i * ow..(i + 1) * ow], dst);
                            }
                        }
                    }
                }
            };
            if parallel {
                gx.par_chunks_mut(h * wd).enumerate().for_each(|(ci, c)| work(ci, c));
            } else {
                gx.chunks_mut(h * wd).enumerate().for_each(|(ci, c)| work(ci, c));
            }
        }
    }
}
