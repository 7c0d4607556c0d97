//! Reverse-mode computation record.
//!
//! Every operation appends a node holding its forward value and the ids of
//! its parents. Parents always precede children, so reverse id order is a
//! valid topological order for the backward sweep.

use std::cell::{Ref, RefCell};
use std::fmt;

use super::params::{ParamId, ParamStore};
use super::tensor::{dims2, Tensor};
use crate::error::{Error, Result};

/// Clamp applied to `log` inputs.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Binary(Elementwise, usize, usize),
    AddConst(usize),
    MulConst(usize, f64),
    Neg(usize),
    Relu(usize),
    Exp(usize),
    Log(usize),
    Sqrt(usize),
    ClampMin(usize, f64),
    MatMul(usize, usize),
    Transpose(usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    ScaleRows(usize, usize),
    Softmax(usize, f64),
    LogSumExp(usize),
    Concat(Vec<usize>, usize),
    Reduce(Reduce, usize, Option<usize>, Vec<usize>),
    Gather(usize, Vec<usize>),
    SegmentSum(usize, Vec<usize>),
    Propagate {
        h: usize,
        src: Vec<usize>,
        dst: Vec<usize>,
        weight: Option<usize>,
    },
    Dense(usize, Vec<(usize, usize)>),
    StraightThrough(usize),
    Reshape(usize),
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// A single-threaded record of differentiable operations.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("len", &self.len()).finish()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
            param: None,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Leaf value that receives gradients.
    pub fn var(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf value that never receives gradients.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    /// Records a parameter from `store` as a gradient-receiving leaf.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var<'_> {
        let v = self.push(store.value(id).clone(), Op::Leaf, true);
        self.nodes.borrow_mut()[v.id].param = Some(id);
        v
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn unary(&self, x: usize, op: Op, f: impl Fn(f64) -> f64) -> Var<'_> {
        let value = {
            let nodes = self.nodes.borrow();
            let t = &nodes[x].value;
            Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect()).unwrap()
        };
        let rg = self.requires(&[x]);
        self.push(value, op, rg)
    }

    /// Runs the backward sweep from a scalar root, accumulating (`+=`) into
    /// the gradients of every reachable leaf that requires them.
    pub fn backward(&self, root: Var<'_>) -> Result<()> {
        let nodes = self.nodes.borrow();
        if nodes[root.id].value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar root, got shape {:?}",
                nodes[root.id].value.shape()
            )));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; root.id + 1];
        adj[root.id] = Some(Tensor::full(nodes[root.id].value.shape(), 1.0));
        let mut leaf_grads: Vec<(usize, Tensor)> = Vec::new();

        for id in (0..=root.id).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                leaf_grads.push((id, g));
                continue;
            }
            backprop(&nodes, node, &g, &mut adj);
        }
        drop(nodes);

        let mut nodes = self.nodes.borrow_mut();
        for (id, g) in leaf_grads {
            match &mut nodes[id].grad {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    pub fn zero_grad(&self) {
        for n in self.nodes.borrow_mut().iter_mut() {
            n.grad = None;
        }
    }

    /// Pairs of (parameter, gradient) for every parameter leaf with a gradient.
    pub fn param_grads(&self) -> Vec<(ParamId, Tensor)> {
        self.nodes
            .borrow()
            .iter()
            .filter_map(|n| match (n.param, &n.grad) {
                (Some(p), Some(g)) => Some((p, g.clone())),
                _ => None,
            })
            .collect()
    }
}

fn accumulate(adj: &mut [Option<Tensor>], nodes: &[Node], id: usize, g: Tensor) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut adj[id] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn map2(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
    .unwrap()
}

/// Reduces a broadcast gradient back onto an operand's shape.
fn unbroadcast(g: Tensor, shape: &[usize]) -> Tensor {
    if g.shape() == shape {
        g
    } else {
        Tensor::full(shape, g.data().iter().sum())
    }
}

fn broadcast_get(t: &Tensor, i: usize) -> f64 {
    if t.numel() == 1 {
        t.data()[0]
    } else {
        t.data()[i]
    }
}

fn backprop(nodes: &[Node], node: &Node, g: &Tensor, adj: &mut [Option<Tensor>]) {
    let val = |i: usize| &nodes[i].value;
    let y = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::Binary(kind, a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let n = g.numel();
            let (mut ga, mut gb) = (vec![0.0; n], vec![0.0; n]);
            for i in 0..n {
                let (x, z, gi) = (broadcast_get(av, i), broadcast_get(bv, i), g.data()[i]);
                let (da, db) = match kind {
                    Elementwise::Add => (gi, gi),
                    Elementwise::Sub => (gi, -gi),
                    Elementwise::Mul => (gi * z, gi * x),
                    Elementwise::Div => (gi / z, -gi * x / (z * z)),
                };
                ga[i] = da;
                gb[i] = db;
            }
            let ga = Tensor::new(g.shape().to_vec(), ga).unwrap();
            let gb = Tensor::new(g.shape().to_vec(), gb).unwrap();
            accumulate(adj, nodes, *a, unbroadcast(ga, av.shape()));
            accumulate(adj, nodes, *b, unbroadcast(gb, bv.shape()));
        }
        Op::AddConst(x) => accumulate(adj, nodes, *x, g.clone()),
        Op::MulConst(x, c) => {
            let c = *c;
            accumulate(adj, nodes, *x, map2(g, g, |gi, _| gi * c));
        }
        Op::Neg(x) => accumulate(adj, nodes, *x, map2(g, g, |gi, _| -gi)),
        Op::Relu(x) => accumulate(adj, nodes, *x, map2(g, val(*x), |gi, xi| if xi > 0.0 { gi } else { 0.0 })),
        Op::Exp(x) => accumulate(adj, nodes, *x, map2(g, y, |gi, yi| gi * yi)),
        Op::Log(x) => accumulate(
            adj,
            nodes,
            *x,
            map2(g, val(*x), |gi, xi| if xi > LOG_EPS { gi / xi } else { 0.0 }),
        ),
        Op::Sqrt(x) => accumulate(adj, nodes, *x, map2(g, y, |gi, yi| if yi > 0.0 { gi / (2.0 * yi) } else { 0.0 })),
        Op::ClampMin(x, c) => {
            let c = *c;
            accumulate(adj, nodes, *x, map2(g, val(*x), |gi, xi| if xi >= c { gi } else { 0.0 }))
        }
        Op::MatMul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (m, k) = av.dims2();
            let n = bv.cols();
            if nodes[*a].requires_grad {
                // dA = dC · Bᵀ
                let mut ga = vec![0.0; m * k];
                for i in 0..m {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g.data()[i * n + j] * bv.data()[p * n + j];
                        }
                        ga[i * k + p] = s;
                    }
                }
                accumulate(adj, nodes, *a, Tensor::new(av.shape().to_vec(), ga).unwrap());
            }
            if nodes[*b].requires_grad {
                // dB = Aᵀ · dC
                let mut gb = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let aip = av.data()[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            gb[p * n + j] += aip * g.data()[i * n + j];
                        }
                    }
                }
                accumulate(adj, nodes, *b, Tensor::new(bv.shape().to_vec(), gb).unwrap());
            }
        }
        Op::Transpose(x) => {
            accumulate(adj, nodes, *x, transpose(g));
        }
        Op::AddRow(x, r) => {
            let (m, n) = g.dims2();
            accumulate(adj, nodes, *x, g.clone());
            let mut gr = vec![0.0; n];
            for i in 0..m {
                for j in 0..n {
                    gr[j] += g.data()[i * n + j];
                }
            }
            accumulate(adj, nodes, *r, Tensor::new(val(*r).shape().to_vec(), gr).unwrap());
        }
        Op::MulRow(x, r) => {
            let (xv, rv) = (val(*x), val(*r));
            let (m, n) = g.dims2();
            let mut gx = vec![0.0; m * n];
            let mut gr = vec![0.0; n];
            for i in 0..m {
                for j in 0..n {
                    let gi = g.data()[i * n + j];
                    gx[i * n + j] = gi * rv.data()[j];
                    gr[j] += gi * xv.data()[i * n + j];
                }
            }
            accumulate(adj, nodes, *x, Tensor::new(xv.shape().to_vec(), gx).unwrap());
            accumulate(adj, nodes, *r, Tensor::new(rv.shape().to_vec(), gr).unwrap());
        }
        Op::ScaleRows(x, w) => {
            let (xv, wv) = (val(*x), val(*w));
            let (m, n) = g.dims2();
            let mut gx = vec![0.0; m * n];
            let mut gw = vec![0.0; m];
            for i in 0..m {
                let wi = wv.data()[i];
                for j in 0..n {
                    let gi = g.data()[i * n + j];
                    gx[i * n + j] = gi * wi;
                    gw[i] += gi * xv.data()[i * n + j];
                }
            }
            accumulate(adj, nodes, *x, Tensor::new(xv.shape().to_vec(), gx).unwrap());
            accumulate(adj, nodes, *w, Tensor::new(wv.shape().to_vec(), gw).unwrap());
        }
        Op::Softmax(x, temp) => {
            let (m, n) = y.dims2();
            let mut gx = vec![0.0; m * n];
            for i in 0..m {
                let yr = &y.data()[i * n..(i + 1) * n];
                let gr = &g.data()[i * n..(i + 1) * n];
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for j in 0..n {
                    gx[i * n + j] = yr[j] * (gr[j] - dot) / temp;
                }
            }
            accumulate(adj, nodes, *x, Tensor::new(val(*x).shape().to_vec(), gx).unwrap());
        }
        Op::LogSumExp(x) => {
            let xv = val(*x);
            let (m, n) = xv.dims2();
            let mut gx = vec![0.0; m * n];
            for i in 0..m {
                let lse = y.data()[i];
                for j in 0..n {
                    gx[i * n + j] = g.data()[i] * (xv.data()[i * n + j] - lse).exp();
                }
            }
            accumulate(adj, nodes, *x, Tensor::new(xv.shape().to_vec(), gx).unwrap());
        }
        Op::Concat(parts, axis) => {
            let (_, total_cols) = g.dims2();
            let mut offset = 0;
            for &p in parts {
                let pv = val(p);
                let (pr, pc) = pv.dims2();
                let part = if *axis == 0 && pv.rank() <= 1 {
                    g.data()[offset..offset + pv.numel()].to_vec()
                } else if *axis == 0 {
                    g.data()[offset * pc..(offset + pr) * pc].to_vec()
                } else {
                    let mut d = Vec::with_capacity(pr * pc);
                    for i in 0..pr {
                        d.extend_from_slice(&g.data()[i * total_cols + offset..i * total_cols + offset + pc]);
                    }
                    d
                };
                offset += if *axis == 0 && pv.rank() <= 1 {
                    pv.numel()
                } else if *axis == 0 {
                    pr
                } else {
                    pc
                };
                accumulate(adj, nodes, p, Tensor::new(pv.shape().to_vec(), part).unwrap());
            }
        }
        Op::Reduce(kind, x, axis, argmax) => {
            let xv = val(*x);
            let mut gx = vec![0.0; xv.numel()];
            match axis {
                None => {
                    let gi = g.data()[0];
                    match kind {
                        Reduce::Sum => gx.iter_mut().for_each(|v| *v = gi),
                        Reduce::Mean => {
                            let n = xv.numel() as f64;
                            gx.iter_mut().for_each(|v| *v = gi / n)
                        }
                        Reduce::Max => gx[argmax[0]] = gi,
                    }
                }
                Some(ax) => {
                    let (m, n) = xv.dims2();
                    let (m, n) = if xv.rank() == 1 { (1, n) } else { (m, n) };
                    for i in 0..m {
                        for j in 0..n {
                            let out = if *ax == 0 && xv.rank() == 2 { j } else { i };
                            let extent = if *ax == 0 && xv.rank() == 2 { m } else { n };
                            let gi = g.data()[out];
                            gx[i * n + j] = match kind {
                                Reduce::Sum => gi,
                                Reduce::Mean => gi / extent as f64,
                                Reduce::Max => {
                                    let pos = if *ax == 0 && xv.rank() == 2 { i } else { j };
                                    if argmax[out] == pos {
                                        gi
                                    } else {
                                        0.0
                                    }
                                }
                            };
                        }
                    }
                }
            }
            accumulate(adj, nodes, *x, Tensor::new(xv.shape().to_vec(), gx).unwrap());
        }
        Op::Gather(x, idx) => {
            let xv = val(*x);
            let mut gx = vec![0.0; xv.numel()];
            let width = if xv.rank() == 2 { xv.cols() } else { 1 };
            for (o, &i) in idx.iter().enumerate() {
                for j in 0..width {
                    gx[i * width + j] += g.data()[o * width + j];
                }
            }
            accumulate(adj, nodes, *x, Tensor::new(xv.shape().to_vec(), gx).unwrap());
        }
        Op::SegmentSum(x, seg) => {
            let xv = val(*x);
            let width = if xv.rank() == 2 { xv.cols() } else { 1 };
            let mut gx = vec![0.0; xv.numel()];
            for (i, &s) in seg.iter().enumerate() {
                gx[i * width..(i + 1) * width].copy_from_slice(&g.data()[s * width..(s + 1) * width]);
            }
            accumulate(adj, nodes, *x, Tensor::new(xv.shape().to_vec(), gx).unwrap());
        }
        Op::Propagate { h, src, dst, weight } => {
            let hv = val(*h);
            let c = hv.cols();
            let wv = weight.map(&val);
            let mut gh = vec![0.0; hv.numel()];
            let mut gw = vec![0.0; src.len()];
            for e in 0..src.len() {
                let (s, d) = (src[e], dst[e]);
                let we = wv.map_or(1.0, |w| w.data()[e]);
                let gd = &g.data()[d * c..(d + 1) * c];
                let hs = &hv.data()[s * c..(s + 1) * c];
                let mut dot = 0.0;
                for j in 0..c {
                    gh[s * c + j] += we * gd[j];
                    dot += gd[j] * hs[j];
                }
                gw[e] = dot;
            }
            accumulate(adj, nodes, *h, Tensor::new(hv.shape().to_vec(), gh).unwrap());
            if let Some(w) = weight {
                accumulate(adj, nodes, *w, Tensor::new(val(*w).shape().to_vec(), gw).unwrap());
            }
        }
        Op::Dense(w, pairs) => {
            let n = y.rows();
            let gw: Vec<f64> = pairs
                .iter()
                .map(|&(u, v)| g.data()[u * n + v] + g.data()[v * n + u])
                .collect();
            accumulate(adj, nodes, *w, Tensor::new(val(*w).shape().to_vec(), gw).unwrap());
        }
        Op::StraightThrough(soft) => accumulate(adj, nodes, *soft, g.clone()),
        Op::Reshape(x) => {
            let gx = g.clone().reshaped(val(*x).shape()).unwrap();
            accumulate(adj, nodes, *x, gx);
        }
    }
}

fn transpose(t: &Tensor) -> Tensor {
    let (m, n) = t.dims2();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = t.data()[i * n + j];
        }
    }
    Tensor::new(vec![n, m], out).unwrap()
}

fn row_max(r: &[f64]) -> f64 {
    r.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Borrow of the forward value. Do not hold across further tape operations.
    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn to_tensor(&self) -> Tensor {
        self.value().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn grad(&self) -> Option<Tensor> {
        self.tape.nodes.borrow()[self.id].grad.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    fn binary(self, other: Var<'t>, kind: Elementwise) -> Result<Var<'t>> {
        let value = {
            let (a, b) = (self.value(), other.value());
            let shape = if a.shape() == b.shape() || b.numel() == 1 {
                a.shape().to_vec()
            } else if a.numel() == 1 {
                b.shape().to_vec()
            } else {
                return Err(Error::dim("elementwise", a.shape(), b.shape()));
            };
            let n: usize = shape.iter().product();
            let data = (0..n)
                .map(|i| {
                    let (x, y) = (broadcast_get(&a, i), broadcast_get(&b, i));
                    match kind {
                        Elementwise::Add => x + y,
                        Elementwise::Sub => x - y,
                        Elementwise::Mul => x * y,
                        Elementwise::Div => x / y,
                    }
                })
                .collect();
            Tensor::new(shape, data)?
        };
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(value, Op::Binary(kind, self.id, other.id), rg))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Elementwise::Add)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Elementwise::Sub)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Elementwise::Mul)
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Elementwise::Div)
    }

    pub fn elementwise(self, op: Elementwise, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, op)
    }

    /// Adds a constant tensor of identical shape (or a scalar).
    pub fn add_const(self, c: &Tensor) -> Result<Var<'t>> {
        let value = {
            let a = self.value();
            if c.numel() != 1 && c.shape() != a.shape() {
                return Err(Error::dim("add_const", a.shape(), c.shape()));
            }
            Tensor::new(
                a.shape().to_vec(),
                a.data().iter().enumerate().map(|(i, &x)| x + broadcast_get(c, i)).collect(),
            )?
        };
        let rg = self.requires_grad();
        Ok(self.tape.push(value, Op::AddConst(self.id), rg))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.tape.unary(self.id, Op::AddConst(self.id), |x| x + c)
    }

    pub fn mul_scalar(self, c: f64) -> Var<'t> {
        self.tape.unary(self.id, Op::MulConst(self.id, c), |x| x * c)
    }

    /// `1 - self`.
    pub fn one_minus(self) -> Var<'t> {
        self.neg().add_scalar(1.0)
    }

    pub fn neg(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Neg(self.id), |x| -x)
    }

    pub fn relu(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Relu(self.id), |x| x.max(0.0))
    }

    pub fn exp(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Exp(self.id), f64::exp)
    }

    /// Natural log with the input clamped below at [`LOG_EPS`].
    pub fn log(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Log(self.id), |x| x.max(LOG_EPS).ln())
    }

    pub fn sqrt(self) -> Var<'t> {
        self.tape.unary(self.id, Op::Sqrt(self.id), |x| x.max(0.0).sqrt())
    }

    pub fn clamp_min(self, c: f64) -> Var<'t> {
        self.tape.unary(self.id, Op::ClampMin(self.id, c), |x| x.max(c))
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let value = {
            let (a, b) = (self.value(), other.value());
            if a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows() {
                return Err(Error::dim("matmul", a.shape(), b.shape()));
            }
            let (m, k, n) = (a.rows(), a.cols(), b.cols());
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                for p in 0..k {
                    let aip = a.data()[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    let brow = &b.data()[p * n..(p + 1) * n];
                    let orow = &mut out[i * n..(i + 1) * n];
                    for j in 0..n {
                        orow[j] += aip * brow[j];
                    }
                }
            }
            Tensor::new(vec![m, n], out)?
        };
        let rg = self.tape.requires(&[self.id, other.id]);
        Ok(self.tape.push(value, Op::MatMul(self.id, other.id), rg))
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let value = {
            let a = self.value();
            if a.rank() != 2 {
                return Err(Error::dim("transpose", a.shape(), &[]));
            }
            transpose(&a)
        };
        let rg = self.requires_grad();
        Ok(self.tape.push(value, Op::Transpose(self.id), rg))
    }

    fn row_op(self, row: Var<'t>, mul: bool) -> Result<Var<'t>> {
        let value = {
            let (a, r) = (self.value(), row.value());
            if a.rank() != 2 || r.numel() != a.cols() {
                return Err(Error::dim(if mul { "mul_row" } else { "add_row" }, a.shape(), r.shape()));
            }
            let n = a.cols();
            let data = a
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| if mul { x * r.data()[i % n] } else { x + r.data()[i % n] })
                .collect();
            Tensor::new(a.shape().to_vec(), data)?
        };
        let rg = self.tape.requires(&[self.id, row.id]);
        let op = if mul {
            Op::MulRow(self.id, row.id)
        } else {
            Op::AddRow(self.id, row.id)
        };
        Ok(self.tape.push(value, op, rg))
    }

    /// Adds `row` (length = cols) to every row of a matrix.
    pub fn add_row(self, row: Var<'t>) -> Result<Var<'t>> {
        self.row_op(row, false)
    }

    /// Multiplies every row of a matrix elementwise by `row`.
    pub fn mul_row(self, row: Var<'t>) -> Result<Var<'t>> {
        self.row_op(row, true)
    }

    /// Scales row `i` of a matrix by `weights[i]`.
    pub fn scale_rows(self, weights: Var<'t>) -> Result<Var<'t>> {
        let value = {
            let (a, w) = (self.value(), weights.value());
            if a.rank() != 2 || w.numel() != a.rows() {
                return Err(Error::dim("scale_rows", a.shape(), w.shape()));
            }
            let n = a.cols();
            let data = a
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| x * w.data()[i / n.max(1)])
                .collect();
            Tensor::new(a.shape().to_vec(), data)?
        };
        let rg = self.tape.requires(&[self.id, weights.id]);
        Ok(self.tape.push(value, Op::ScaleRows(self.id, weights.id), rg))
    }

    /// Row-wise softmax of `self / temperature`, stabilized by the row max.
    pub fn softmax(self, temperature: f64) -> Result<Var<'t>> {
        if !(temperature > 0.0) {
            return Err(Error::Parameter(format!("softmax temperature must be > 0, got {temperature}")));
        }
        let value = {
            let a = self.value();
            let (m, n) = a.dims2();
            if n == 0 {
                return Err(Error::Domain("softmax over an empty row".into()));
            }
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let r = &a.data()[i * n..(i + 1) * n];
                let mx = row_max(r);
                let mut z = 0.0;
                for j in 0..n {
                    let e = ((r[j] - mx) / temperature).exp();
                    out[i * n + j] = e;
                    z += e;
                }
                out[i * n..(i + 1) * n].iter_mut().for_each(|v| *v /= z);
            }
            Tensor::new(a.shape().to_vec(), out)?
        };
        let rg = self.requires_grad();
        Ok(self.tape.push(value, Op::Softmax(self.id, temperature), rg))
    }

    /// Row-wise `log Σ exp`; a vector yields a scalar, a matrix a vector.
    pub fn logsumexp(self) -> Result<Var<'t>> {
        let value = {
            let a = self.value();
            let (m, n) = a.dims2();
            if n == 0 {
                return Err(Error::Domain("logsumexp over an empty row".into()));
            }
            let out: Vec<f64> = (0..m)
                .map(|i| {
                    let r = &a.data()[i * n..(i + 1) * n];
                    let mx = row_max(r);
                    mx + r.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
                })
                .collect();
            if a.rank() == 2 {
                Tensor::vector(out)
            } else {
                Tensor::scalar(out[0])
            }
        };
        let rg = self.requires_grad();
        Ok(self.tape.push(value, Op::LogSumExp(self.id), rg))
    }

    pub fn sum(self) -> Result<Var<'t>> {
        reduce(self, Reduce::Sum, None)
    }

    pub fn mean(self) -> Result<Var<'t>> {
        reduce(self, Reduce::Mean, None)
    }

    pub fn max(self) -> Result<Var<'t>> {
        reduce(self, Reduce::Max, None)
    }

    pub fn reduce(self, kind: Reduce, axis: Option<usize>) -> Result<Var<'t>> {
        reduce(self, kind, axis)
    }

    /// Rows of a matrix (or elements of a vector) at `idx`.
    pub fn gather(self, idx: &[usize]) -> Result<Var<'t>> {
        let value = {
            let a = self.value();
            let (len, width) = match a.rank() {
                1 => (a.numel(), 1),
                2 => (a.rows(), a.cols()),
                _ => return Err(Error::dim("gather", a.shape(), &[])),
            };
            let mut out = Vec::with_capacity(idx.len() * width);
            for &i in idx {
                if i >= len {
                    return Err(Error::Contract(format!("gather index {i} out of range {len}")));
                }
                out.extend_from_slice(&a.data()[i * width..(i + 1) * width]);
            }
            if a.rank() == 1 {
                Tensor::vector(out)
            } else {
                Tensor::new(vec![idx.len(), width], out)?
            }
        };
        let rg = self.requires_grad();
        Ok(self.tape.push(value, Op::Gather(self.id, idx.to_vec()), rg))
    }

    /// Sums rows (or elements) into `segments` buckets given per-row segment ids.
    pub fn segment_sum(self, seg: &[usize], segments: usize) -> Result<Var<'t>> {
        let value = {
            let a = self.value();
            let (len, width) = match a.rank() {
                1 => (a.numel(), 1),
                2 => (a.rows(), a.cols()),
                _ => return Err(Error::dim("segment_sum", a.shape(), &[])),
            };
            if seg.len() != len {
                return Err(Error::dim("segment_sum", a.shape(), &[seg.len()]));
            }
            let mut out = vec![0.0; segments * width];
            for (i, &s) in seg.iter().enumerate() {
                if s >= segments {
                    return Err(Error::Contract(format!("segment id {s} out of range {segments}")));
                }
                for j in 0..width {
                    out[s * width + j] += a.data()[i * width + j];
                }
            }
            if a.rank() == 1 {
                Tensor::vector(out)
            } else {
                Tensor::new(vec![segments, width], out)?
            }
        };
        let rg = self.requires_grad();
        Ok(self.tape.push(value, Op::SegmentSum(self.id, seg.to_vec()), rg))
    }

    /// Weighted message passing: `out[dst[e]] += weight[e] · self[src[e]]`.
    pub fn propagate(self, src: &[usize], dst: &[usize], weight: Option<Var<'t>>) -> Result<Var<'t>> {
        if src.len() != dst.len() {
            return Err(Error::dim("propagate", &[src.len()], &[dst.len()]));
        }
        let value = {
            let h = self.value();
            if h.rank() != 2 {
                return Err(Error::dim("propagate", h.shape(), &[]));
            }
            let (n, c) = (h.rows(), h.cols());
            let w = weight.map(|w| w.value());
            if let Some(w) = &w {
                if w.numel() != src.len() {
                    return Err(Error::dim("propagate weight", w.shape(), &[src.len()]));
                }
            }
            let mut out = vec![0.0; n * c];
            for e in 0..src.len() {
                let (s, d) = (src[e], dst[e]);
                if s >= n || d >= n {
                    return Err(Error::Contract(format!("edge ({s},{d}) out of range {n}")));
                }
                let we = w.as_ref().map_or(1.0, |w| w.data()[e]);
                for j in 0..c {
                    out[d * c + j] += we * h.data()[s * c + j];
                }
            }
            Tensor::new(vec![n, c], out)?
        };
        let mut ids = vec![self.id];
        ids.extend(weight.map(|w| w.id));
        let rg = self.tape.requires(&ids);
        Ok(self.tape.push(
            value,
            Op::Propagate {
                h: self.id,
                src: src.to_vec(),
                dst: dst.to_vec(),
                weight: weight.map(|w| w.id),
            },
            rg,
        ))
    }

    /// Scatters per-pair weights into a symmetric `n×n` matrix.
    pub fn to_dense_symmetric(self, pairs: &[(usize, usize)], n: usize) -> Result<Var<'t>> {
        let value = {
            let w = self.value();
            if w.numel() != pairs.len() {
                return Err(Error::dim("dense", w.shape(), &[pairs.len()]));
            }
            let mut out = vec![0.0; n * n];
            for (e, &(u, v)) in pairs.iter().enumerate() {
                if u >= n || v >= n {
                    return Err(Error::Contract(format!("pair ({u},{v}) out of range {n}")));
                }
                out[u * n + v] += w.data()[e];
                out[v * n + u] += w.data()[e];
            }
            Tensor::new(vec![n, n], out)?
        };
        let rg = self.requires_grad();
        Ok(self.tape.push(value, Op::Dense(self.id, pairs.to_vec()), rg))
    }

    /// Forward value `hard`, gradient routed unchanged into `self`.
    pub fn straight_through(self, hard: Tensor) -> Result<Var<'t>> {
        if hard.shape() != self.value().shape() {
            return Err(Error::dim("straight_through", &self.shape(), hard.shape()));
        }
        let rg = self.requires_grad();
        Ok(self.tape.push(hard, Op::StraightThrough(self.id), rg))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let value = self.to_tensor().reshaped(shape)?;
        let rg = self.requires_grad();
        Ok(self.tape.push(value, Op::Reshape(self.id), rg))
    }

    pub fn flatten(self) -> Result<Var<'t>> {
        let n = self.value().numel();
        self.reshape(&[n])
    }

    /// Column `j` of a matrix as a vector.
    pub fn column(self, j: usize) -> Result<Var<'t>> {
        let (m, n) = dims2(&self.shape());
        if j >= n {
            return Err(Error::dim("column", &[m, n], &[j]));
        }
        let idx: Vec<usize> = (0..m).map(|i| i * n + j).collect();
        self.flatten()?.gather(&idx)
    }
}

/// Concatenates along `axis`. Vectors concatenate end to end on axis 0.
pub fn concat<'t>(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Contract("concat of zero parts".into()))?;
    let tape = first.tape;
    let value = {
        let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let rank = vals[0].rank();
        if vals.iter().any(|v| v.rank() != rank) || axis > 1 || (rank < 2 && axis != 0) {
            return Err(Error::dim("concat", vals[0].shape(), &[axis]));
        }
        if rank <= 1 {
            Tensor::vector(vals.iter().flat_map(|v| v.data().iter().copied()).collect())
        } else if axis == 0 {
            let cols = vals[0].cols();
            if let Some(bad) = vals.iter().find(|v| v.cols() != cols) {
                return Err(Error::dim("concat", vals[0].shape(), bad.shape()));
            }
            let rows = vals.iter().map(|v| v.rows()).sum();
            Tensor::new(vec![rows, cols], vals.iter().flat_map(|v| v.data().iter().copied()).collect())?
        } else {
            let rows = vals[0].rows();
            if let Some(bad) = vals.iter().find(|v| v.rows() != rows) {
                return Err(Error::dim("concat", vals[0].shape(), bad.shape()));
            }
            let cols: usize = vals.iter().map(|v| v.cols()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for i in 0..rows {
                for v in &vals {
                    data.extend_from_slice(v.row(i));
                }
            }
            Tensor::new(vec![rows, cols], data)?
        }
    };
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let rg = tape.requires(&ids);
    Ok(tape.push(value, Op::Concat(ids, axis), rg))
}

fn reduce<'t>(x: Var<'t>, kind: Reduce, axis: Option<usize>) -> Result<Var<'t>> {
    let (value, argmax) = {
        let a = x.value();
        if a.numel() == 0 {
            return Err(Error::Domain("reduction over an empty extent".into()));
        }
        let fold = |vals: &mut dyn Iterator<Item = f64>, n: usize| -> (f64, usize) {
            match kind {
                Reduce::Sum => (vals.sum(), 0),
                Reduce::Mean => (vals.sum::<f64>() / n as f64, 0),
                Reduce::Max => {
                    let mut best = (f64::NEG_INFINITY, 0);
                    for (i, v) in vals.enumerate() {
                        if v > best.0 || i == 0 {
                            best = (v, i);
                        }
                    }
                    best
                }
            }
        };
        match axis {
            None => {
                let (v, am) = fold(&mut a.data().iter().copied(), a.numel());
                (Tensor::scalar(v), vec![am])
            }
            Some(ax) => {
                let (m, n) = a.dims2();
                match (a.rank(), ax) {
                    (1, 0) => {
                        let (v, am) = fold(&mut a.data().iter().copied(), n);
                        (Tensor::scalar(v), vec![am])
                    }
                    (2, 0) => {
                        if m == 0 {
                            return Err(Error::Domain("reduction over an empty extent".into()));
                        }
                        let (vals, ams): (Vec<_>, Vec<_>) =
                            (0..n).map(|j| fold(&mut (0..m).map(|i| a.data()[i * n + j]), m)).unzip();
                        (Tensor::vector(vals), ams)
                    }
                    (2, 1) => {
                        if n == 0 {
                            return Err(Error::Domain("reduction over an empty extent".into()));
                        }
                        let (vals, ams): (Vec<_>, Vec<_>) =
                            (0..m).map(|i| fold(&mut a.row(i).iter().copied(), n)).unzip();
                        (Tensor::vector(vals), ams)
                    }
                    _ => return Err(Error::dim("reduce", a.shape(), &[ax])),
                }
            }
        }
    };
    let rg = x.requires_grad();
    Ok(x.tape.push(value, Op::Reduce(kind, x.id, axis, argmax), rg))
}
