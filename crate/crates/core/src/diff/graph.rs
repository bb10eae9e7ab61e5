//! Define-by-run computation tape with reverse-mode differentiation.
//!
//! Every operation on a [`Var`] appends a node to the owning [`Graph`].
//! Nodes only reference earlier nodes, so the insertion order is already a
//! topological order and the backward pass is a single reverse sweep.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use super::tensor::{gemm, gemm_nt, gemm_tn, Tensor};
use crate::error::{Error, Result};

/// Operation kinds, used for instrumentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    MatMul,
    AddBias,
    Add,
    Sub,
    Mul,
    MulCol,
    Scale,
    AddScalar,
    Tanh,
    Sigmoid,
    Softplus,
    Exp,
    Log,
    Square,
    Relu,
    Sum,
    Mean,
    SumCols,
    ConcatCols,
    ConcatRows,
    SliceCols,
    SliceRows,
    GatherRows,
    Reshape,
    Clamp,
    Minimum,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    AddBias(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MulCol(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Tanh(usize),
    Sigmoid(usize),
    Softplus(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    Relu(usize),
    Sum(usize),
    Mean(usize),
    SumCols(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols(usize, usize, usize),
    SliceRows(usize, usize, usize),
    GatherRows(usize, Vec<usize>),
    Reshape(usize),
    Clamp(usize, f64, f64),
    Minimum(usize, usize),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul(..) => OpKind::MatMul,
            Op::AddBias(..) => OpKind::AddBias,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::MulCol(..) => OpKind::MulCol,
            Op::Scale(..) => OpKind::Scale,
            Op::AddScalar(..) => OpKind::AddScalar,
            Op::Tanh(..) => OpKind::Tanh,
            Op::Sigmoid(..) => OpKind::Sigmoid,
            Op::Softplus(..) => OpKind::Softplus,
            Op::Exp(..) => OpKind::Exp,
            Op::Log(..) => OpKind::Log,
            Op::Square(..) => OpKind::Square,
            Op::Relu(..) => OpKind::Relu,
            Op::Sum(..) => OpKind::Sum,
            Op::Mean(..) => OpKind::Mean,
            Op::SumCols(..) => OpKind::SumCols,
            Op::ConcatCols(..) => OpKind::ConcatCols,
            Op::ConcatRows(..) => OpKind::ConcatRows,
            Op::SliceCols(..) => OpKind::SliceCols,
            Op::SliceRows(..) => OpKind::SliceRows,
            Op::GatherRows(..) => OpKind::GatherRows,
            Op::Reshape(..) => OpKind::Reshape,
            Op::Clamp(..) => OpKind::Clamp,
            Op::Minimum(..) => OpKind::Minimum,
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// The computation tape.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    backward_visits: Cell<usize>,
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn shape_err(op: &str, a: &Tensor, b: &Tensor) -> Error {
    Error::config(format!(
        "{op}: incompatible shapes {:?} and {:?}",
        a.shape(),
        b.shape()
    ))
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("zip_map shapes")
}

fn add_into(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        None => *slot = Some(g),
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of recorded nodes of the given kind.
    pub fn op_count(&self, kind: OpKind) -> usize {
        self.nodes
            .borrow()
            .iter()
            .filter(|n| n.op.kind() == kind)
            .count()
    }

    /// Nodes touched by the most recent backward pass.
    pub fn backward_visits(&self) -> usize {
        self.backward_visits.get()
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        self.nodes.borrow()[id].value.clone()
    }

    fn rg(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// A differentiable leaf (parameters, or inputs under a gradient check).
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Only nodes that require gradients and lie upstream of `loss` are
    /// visited, each exactly once.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if !root.value.is_scalar() {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::full(root.value.shape(), 1.0));
        let mut visits = 0;
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            visits += 1;
            let y = &node.value;
            let val = |i: usize| -> &Tensor { &nodes[i].value };
            let needs = |i: usize| nodes[i].requires_grad;
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                    if needs(*a) {
                        let da = gemm_nt(m, n, k, g.data(), bv.data());
                        add_into(&mut grads[*a], Tensor::matrix(m, k, da).reshape(av.shape()).unwrap());
                    }
                    if needs(*b) {
                        let db = gemm_tn(k, m, n, av.data(), g.data());
                        add_into(&mut grads[*b], Tensor::matrix(k, n, db).reshape(bv.shape()).unwrap());
                    }
                }
                Op::AddBias(x, b) => {
                    if needs(*b) {
                        let n = g.cols();
                        let mut db = vec![0.0; n];
                        for r in 0..g.rows() {
                            for (d, v) in db.iter_mut().zip(g.row_slice(r)) {
                                *d += v;
                            }
                        }
                        add_into(&mut grads[*b], Tensor::new(val(*b).shape().to_vec(), db).unwrap());
                    }
                    if needs(*x) {
                        add_into(&mut grads[*x], g);
                    }
                }
                Op::Add(a, b) => {
                    if needs(*b) {
                        add_into(&mut grads[*b], g.clone());
                    }
                    if needs(*a) {
                        add_into(&mut grads[*a], g);
                    }
                }
                Op::Sub(a, b) => {
                    if needs(*b) {
                        add_into(&mut grads[*b], g.map(|v| -v));
                    }
                    if needs(*a) {
                        add_into(&mut grads[*a], g);
                    }
                }
                Op::Mul(a, b) => {
                    if needs(*a) {
                        add_into(&mut grads[*a], zip_map(&g, val(*b), |g, y| g * y));
                    }
                    if needs(*b) {
                        add_into(&mut grads[*b], zip_map(&g, val(*a), |g, x| g * x));
                    }
                }
                Op::MulCol(x, c) => {
                    let (xv, cv) = (val(*x), val(*c));
                    let cols = xv.cols();
                    if needs(*x) {
                        let mut dx = g.clone();
                        for (r, chunk) in dx.data_mut().chunks_mut(cols).enumerate() {
                            let s = cv.data()[r];
                            chunk.iter_mut().for_each(|v| *v *= s);
                        }
                        add_into(&mut grads[*x], dx);
                    }
                    if needs(*c) {
                        let dc: Vec<f64> = (0..xv.rows())
                            .map(|r| {
                                g.row_slice(r)
                                    .iter()
                                    .zip(xv.row_slice(r))
                                    .map(|(a, b)| a * b)
                                    .sum()
                            })
                            .collect();
                        add_into(&mut grads[*c], Tensor::new(cv.shape().to_vec(), dc).unwrap());
                    }
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    add_into(&mut grads[*a], g.map(|v| v * s));
                }
                Op::AddScalar(a) => add_into(&mut grads[*a], g),
                Op::Tanh(a) => add_into(&mut grads[*a], zip_map(&g, y, |g, t| g * (1.0 - t * t))),
                Op::Sigmoid(a) => {
                    add_into(&mut grads[*a], zip_map(&g, y, |g, s| g * s * (1.0 - s)))
                }
                Op::Softplus(a) => {
                    add_into(&mut grads[*a], zip_map(&g, val(*a), |g, x| g * sigmoid(x)))
                }
                Op::Exp(a) => add_into(&mut grads[*a], zip_map(&g, y, |g, e| g * e)),
                Op::Log(a) => add_into(&mut grads[*a], zip_map(&g, val(*a), |g, x| g / x)),
                Op::Square(a) => {
                    add_into(&mut grads[*a], zip_map(&g, val(*a), |g, x| 2.0 * g * x))
                }
                Op::Relu(a) => add_into(
                    &mut grads[*a],
                    zip_map(&g, val(*a), |g, x| if x > 0.0 { g } else { 0.0 }),
                ),
                Op::Sum(a) => {
                    let gv = g.item();
                    add_into(&mut grads[*a], Tensor::full(val(*a).shape(), gv));
                }
                Op::Mean(a) => {
                    let av = val(*a);
                    let gv = g.item() / av.len() as f64;
                    add_into(&mut grads[*a], Tensor::full(av.shape(), gv));
                }
                Op::SumCols(a) => {
                    let av = val(*a);
                    let cols = av.cols();
                    let mut d = Vec::with_capacity(av.len());
                    for &gr in g.data() {
                        d.extend(std::iter::repeat(gr).take(cols));
                    }
                    add_into(&mut grads[*a], Tensor::new(av.shape().to_vec(), d).unwrap());
                }
                Op::ConcatCols(parts) => {
                    let rows = g.rows();
                    let total = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let pc = val(p).cols();
                        if needs(p) {
                            let mut d = Vec::with_capacity(rows * pc);
                            for r in 0..rows {
                                d.extend_from_slice(&g.data()[r * total + offset..r * total + offset + pc]);
                            }
                            add_into(&mut grads[p], Tensor::matrix(rows, pc, d));
                        }
                        offset += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let cols = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let pr = val(p).rows();
                        if needs(p) {
                            let d = g.data()[offset * cols..(offset + pr) * cols].to_vec();
                            add_into(&mut grads[p], Tensor::matrix(pr, cols, d));
                        }
                        offset += pr;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let av = val(*a);
                    let (rows, cols) = (av.rows(), av.cols());
                    let w = end - start;
                    let mut d = vec![0.0; rows * cols];
                    for r in 0..rows {
                        d[r * cols + start..r * cols + end]
                            .copy_from_slice(&g.data()[r * w..(r + 1) * w]);
                    }
                    add_into(&mut grads[*a], Tensor::matrix(rows, cols, d));
                }
                Op::SliceRows(a, start, end) => {
                    let av = val(*a);
                    let cols = av.cols();
                    let mut d = vec![0.0; av.len()];
                    d[start * cols..end * cols].copy_from_slice(g.data());
                    add_into(&mut grads[*a], Tensor::new(av.shape().to_vec(), d).unwrap());
                }
                Op::GatherRows(a, idx) => {
                    let av = val(*a);
                    let cols = av.cols();
                    let mut d = vec![0.0; av.len()];
                    for (k, &r) in idx.iter().enumerate() {
                        for c in 0..cols {
                            d[r * cols + c] += g.data()[k * cols + c];
                        }
                    }
                    add_into(&mut grads[*a], Tensor::new(av.shape().to_vec(), d).unwrap());
                }
                Op::Reshape(a) => {
                    let shape = val(*a).shape().to_vec();
                    add_into(&mut grads[*a], g.reshape(&shape).unwrap());
                }
                Op::Clamp(a, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    add_into(
                        &mut grads[*a],
                        zip_map(&g, val(*a), |g, x| if x > lo && x < hi { g } else { 0.0 }),
                    );
                }
                Op::Minimum(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    if needs(*a) {
                        let d = g.data().iter().zip(av.data().iter().zip(bv.data()))
                            .map(|(g, (x, y))| if x <= y { *g } else { 0.0 })
                            .collect();
                        add_into(&mut grads[*a], Tensor::new(av.shape().to_vec(), d).unwrap());
                    }
                    if needs(*b) {
                        let d = g.data().iter().zip(av.data().iter().zip(bv.data()))
                            .map(|(g, (x, y))| if x <= y { 0.0 } else { *g })
                            .collect();
                        add_into(&mut grads[*b], Tensor::new(bv.shape().to_vec(), d).unwrap());
                    }
                }
            }
        }
        self.backward_visits.set(visits);
        Ok(Gradients { grads })
    }
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.graph.value_of(self.id)
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.rg(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn rows(&self) -> usize {
        self.value().rows()
    }

    pub fn cols(&self) -> usize {
        self.value().cols()
    }

    /// Records the current value as a new constant, cutting gradient flow.
    pub fn detach(&self) -> Var<'g> {
        self.graph.constant((*self.value()).clone())
    }

    fn unary(self, op: Op, f: impl Fn(f64) -> f64) -> Var<'g> {
        let v = self.value().map(f);
        self.graph.push(v, op, self.requires_grad())
    }

    fn binary(self, other: Var<'g>, name: &str, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var<'g>> {
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(shape_err(name, &a, &b));
        }
        let v = zip_map(&a, &b, f);
        Ok(self.graph.push(v, op, self.requires_grad() || other.requires_grad()))
    }

    pub fn matmul(self, other: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = (self.value(), other.value());
        if a.shape().len() != 2 || b.shape().len() != 2 || a.cols() != b.rows() {
            return Err(shape_err("matmul", &a, &b));
        }
        let (m, k, n) = (a.rows(), a.cols(), b.cols());
        let v = Tensor::matrix(m, n, gemm(m, k, n, a.data(), b.data()));
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.graph.push(v, Op::MatMul(self.id, other.id), rg))
    }

    /// Adds a `[1, n]` (or `[n]`) bias to every row.
    pub fn add_bias(self, bias: Var<'g>) -> Result<Var<'g>> {
        let (x, b) = (self.value(), bias.value());
        if b.len() != x.cols() || b.rows() != 1 {
            return Err(shape_err("add_bias", &x, &b));
        }
        let cols = x.cols();
        let mut d = x.data().to_vec();
        for chunk in d.chunks_mut(cols) {
            for (v, bb) in chunk.iter_mut().zip(b.data()) {
                *v += bb;
            }
        }
        let v = Tensor::new(x.shape().to_vec(), d).unwrap();
        let rg = self.requires_grad() || bias.requires_grad();
        Ok(self.graph.push(v, Op::AddBias(self.id, bias.id), rg))
    }

    /// `x · w + b`.
    pub fn affine(self, w: Var<'g>, b: Var<'g>) -> Result<Var<'g>> {
        self.matmul(w)?.add_bias(b)
    }

    pub fn add(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    pub fn mul(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    /// Scales each row of `self` by the matching entry of a `[rows, 1]` column.
    pub fn mul_col(self, col: Var<'g>) -> Result<Var<'g>> {
        let (x, c) = (self.value(), col.value());
        if c.len() != x.rows() {
            return Err(shape_err("mul_col", &x, &c));
        }
        let cols = x.cols();
        let mut d = x.data().to_vec();
        for (r, chunk) in d.chunks_mut(cols).enumerate() {
            let s = c.data()[r];
            chunk.iter_mut().for_each(|v| *v *= s);
        }
        let v = Tensor::new(x.shape().to_vec(), d).unwrap();
        let rg = self.requires_grad() || col.requires_grad();
        Ok(self.graph.push(v, Op::MulCol(self.id, col.id), rg))
    }

    pub fn minimum(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "minimum", Op::Minimum(self.id, other.id), f64::min)
    }

    pub fn scale(self, s: f64) -> Var<'g> {
        self.unary(Op::Scale(self.id, s), |x| x * s)
    }

    pub fn neg(self) -> Var<'g> {
        self.scale(-1.0)
    }

    pub fn add_scalar(self, c: f64) -> Var<'g> {
        self.unary(Op::AddScalar(self.id), |x| x + c)
    }

    pub fn tanh(self) -> Var<'g> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn sigmoid(self) -> Var<'g> {
        self.unary(Op::Sigmoid(self.id), sigmoid)
    }

    pub fn softplus(self) -> Var<'g> {
        self.unary(Op::Softplus(self.id), softplus)
    }

    pub fn exp(self) -> Var<'g> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn log(self) -> Var<'g> {
        self.unary(Op::Log(self.id), f64::ln)
    }

    pub fn square(self) -> Var<'g> {
        self.unary(Op::Square(self.id), |x| x * x)
    }

    pub fn relu(self) -> Var<'g> {
        self.unary(Op::Relu(self.id), |x| x.max(0.0))
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Var<'g> {
        self.unary(Op::Clamp(self.id, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn sum(self) -> Var<'g> {
        let v = Tensor::scalar(self.value().sum());
        self.graph.push(v, Op::Sum(self.id), self.requires_grad())
    }

    pub fn mean(self) -> Var<'g> {
        let t = self.value();
        let v = Tensor::scalar(t.sum() / t.len() as f64);
        self.graph.push(v, Op::Mean(self.id), self.requires_grad())
    }

    /// Row sums, `[rows, cols] -> [rows, 1]`.
    pub fn sum_cols(self) -> Var<'g> {
        let t = self.value();
        let d: Vec<f64> = (0..t.rows()).map(|r| t.row_slice(r).iter().sum()).collect();
        let v = Tensor::matrix(t.rows(), 1, d);
        self.graph.push(v, Op::SumCols(self.id), self.requires_grad())
    }

    pub fn concat_cols(parts: &[Var<'g>]) -> Result<Var<'g>> {
        let graph = parts
            .first()
            .ok_or_else(|| Error::config("concat_cols: no inputs"))?
            .graph;
        let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let rows = vals[0].rows();
        if let Some(bad) = vals.iter().find(|v| v.rows() != rows) {
            return Err(shape_err("concat_cols", &vals[0], bad));
        }
        let total: usize = vals.iter().map(|v| v.cols()).sum();
        let mut d = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for v in &vals {
                d.extend_from_slice(v.row_slice(r));
            }
        }
        let rg = parts.iter().any(|p| p.requires_grad());
        let ids = parts.iter().map(|p| p.id).collect();
        Ok(graph.push(Tensor::matrix(rows, total, d), Op::ConcatCols(ids), rg))
    }

    pub fn concat_rows(parts: &[Var<'g>]) -> Result<Var<'g>> {
        let graph = parts
            .first()
            .ok_or_else(|| Error::config("concat_rows: no inputs"))?
            .graph;
        let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor> = vals.iter().map(|v| v.as_ref()).collect();
        let v = Tensor::vstack(&refs).map_err(|_| {
            Error::config(format!(
                "concat_rows: column mismatch among {:?}",
                vals.iter().map(|v| v.shape().to_vec()).collect::<Vec<_>>()
            ))
        })?;
        let rg = parts.iter().any(|p| p.requires_grad());
        let ids = parts.iter().map(|p| p.id).collect();
        Ok(graph.push(v, Op::ConcatRows(ids), rg))
    }

    pub fn slice_cols(self, start: usize, end: usize) -> Result<Var<'g>> {
        let t = self.value();
        if start > end || end > t.cols() {
            return Err(Error::config(format!(
                "slice_cols {start}..{end} out of range for shape {:?}",
                t.shape()
            )));
        }
        let (rows, cols) = (t.rows(), t.cols());
        let mut d = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            d.extend_from_slice(&t.data()[r * cols + start..r * cols + end]);
        }
        let v = Tensor::matrix(rows, end - start, d);
        Ok(self.graph.push(v, Op::SliceCols(self.id, start, end), self.requires_grad()))
    }

    pub fn slice_rows(self, start: usize, end: usize) -> Result<Var<'g>> {
        let t = self.value();
        if start > end || end > t.rows() {
            return Err(Error::config(format!(
                "slice_rows {start}..{end} out of range for shape {:?}",
                t.shape()
            )));
        }
        let cols = t.cols();
        let v = Tensor::matrix(end - start, cols, t.data()[start * cols..end * cols].to_vec());
        Ok(self.graph.push(v, Op::SliceRows(self.id, start, end), self.requires_grad()))
    }

    pub fn gather_rows(self, idx: &[usize]) -> Result<Var<'g>> {
        let t = self.value();
        if let Some(&bad) = idx.iter().find(|&&r| r >= t.rows()) {
            return Err(Error::config(format!(
                "gather_rows: row {bad} out of range for shape {:?}",
                t.shape()
            )));
        }
        let mut d = Vec::with_capacity(idx.len() * t.cols());
        for &r in idx {
            d.extend_from_slice(t.row_slice(r));
        }
        let v = Tensor::matrix(idx.len(), t.cols(), d);
        Ok(self
            .graph
            .push(v, Op::GatherRows(self.id, idx.to_vec()), self.requires_grad()))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'g>> {
        let v = (*self.value()).clone().reshape(shape)?;
        Ok(self.graph.push(v, Op::Reshape(self.id), self.requires_grad()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, d: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, d.to_vec())
    }

    #[test]
    fn matmul_identity() {
        let g = Graph::new();
        let a = g.constant(m(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let i = g.constant(Tensor::identity(2));
        assert_eq!(a.matmul(i).unwrap().value().data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_shape_error_names_op() {
        let g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = a.matmul(b).err().unwrap().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
        assert!(a.add(g.constant(Tensor::zeros(&[3, 2]))).is_err());
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let g = Graph::new();
        let x = g.constant(Tensor::scalar(0.0));
        assert_eq!(x.sigmoid().value().item(), 0.5);
    }

    #[test]
    fn log_inverts_exp() {
        let g = Graph::new();
        for x in [-1.0, 0.0, 2.5] {
            let v = g.constant(Tensor::scalar(x)).exp().log().value().item();
            assert!((v - x).abs() < 1e-12);
        }
    }

    #[test]
    fn square_gradient_at_three() {
        let g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let grads = g.backward(x.square()).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn unreachable_param_has_no_gradient() {
        let g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let p = g.param(Tensor::scalar(1.0));
        let grads = g.backward(x.square()).unwrap();
        assert!(grads.get(p).is_none());
    }

    #[test]
    fn non_scalar_loss_is_usage_error() {
        let g = Graph::new();
        let x = g.param(Tensor::zeros(&[2, 2]));
        assert!(matches!(g.backward(x.tanh()), Err(Error::Usage(_))));
    }

    #[test]
    fn backward_visits_each_node_once() {
        let g = Graph::new();
        let x = g.param(m(1, 3, &[0.1, -0.2, 0.3]));
        let w = g.param(m(3, 2, &[0.5, -0.1, 0.2, 0.3, -0.4, 0.6]));
        let h = x.matmul(w).unwrap().tanh();
        let y = h.mul(h).unwrap().sum();
        g.backward(y).unwrap();
        // x, w, matmul, tanh, mul, sum
        assert_eq!(g.len(), 6);
        assert_eq!(g.backward_visits(), 6);
    }

    #[test]
    fn structural_ops_round_trip_gradients() {
        let g = Graph::new();
        let a = g.param(m(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let b = g.param(m(2, 1, &[5.0, 6.0]));
        let c = Var::concat_cols(&[a, b]).unwrap();
        assert_eq!(c.value().data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let s = c.slice_cols(1, 3).unwrap();
        let r = Var::concat_rows(&[s, s]).unwrap().gather_rows(&[0, 3]).unwrap();
        assert_eq!(r.value().data(), &[2.0, 5.0, 4.0, 6.0]);
        let grads = g.backward(r.sum()).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[1.0, 1.0]);
    }
}
