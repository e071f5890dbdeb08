//! Static computation graphs with reverse-mode differentiation.
//!
//! A [`CompGraph`] is built once and then evaluated many times with different
//! leaf bindings. Nodes can only reference nodes created before them, so the
//! insertion order is a topological order and the graph is acyclic by
//! construction. Both [`forward`] and [`backward`] take the graph by shared
//! reference and keep no state between calls.

use std::collections::HashMap;

use super::array::DenseArray;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafKind {
    /// Trainable parameter; gradients are reported for it.
    Param,
    /// Data fed in per evaluation (windows, targets, noise draws).
    Input,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Leaf { name: String, kind: LeafKind },
    MatMul,
    /// Elementwise sum; the right operand may be a `1 x n` row broadcast
    /// over the rows of an `m x n` left operand.
    Add,
    /// Elementwise difference, same broadcasting rule as `Add`.
    Sub,
    Mul,
    Tanh,
    Exp,
    /// `scale * x + shift`, elementwise.
    Affine { scale: f64, shift: f64 },
    /// Clamp to `[lo, hi]`; the gradient is zero where the clamp is active.
    Clamp { lo: f64, hi: f64 },
    Sum,
    SumSquares,
    /// Concatenation along the last axis.
    Concat,
}

impl Op {
    fn label(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::MatMul => "matmul",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Tanh => "tanh",
            Op::Exp => "exp",
            Op::Affine { .. } => "affine",
            Op::Clamp { .. } => "clamp",
            Op::Sum => "sum",
            Op::SumSquares => "sum_squares",
            Op::Concat => "concat",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    inputs: Vec<NodeId>,
}

#[derive(Debug, Clone, Default)]
pub struct CompGraph {
    nodes: Vec<Node>,
}

impl CompGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn op(&self, node: NodeId) -> &Op {
        &self.nodes[node.0].op
    }

    pub fn inputs(&self, node: NodeId) -> &[NodeId] {
        &self.nodes[node.0].inputs
    }

    /// Leaves in creation order.
    pub fn leaves(&self) -> impl Iterator<Item = (NodeId, &str, LeafKind)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match &n.op {
            Op::Leaf { name, kind } => Some((NodeId(i), name.as_str(), *kind)),
            _ => None,
        })
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>) -> NodeId {
        for input in &inputs {
            assert!(
                input.0 < self.nodes.len(),
                "node inputs must precede the node"
            );
        }
        self.nodes.push(Node { op, inputs });
        NodeId(self.nodes.len() - 1)
    }

    pub fn param(&mut self, name: impl Into<String>) -> NodeId {
        self.push(
            Op::Leaf {
                name: name.into(),
                kind: LeafKind::Param,
            },
            Vec::new(),
        )
    }

    pub fn input(&mut self, name: impl Into<String>) -> NodeId {
        self.push(
            Op::Leaf {
                name: name.into(),
                kind: LeafKind::Input,
            },
            Vec::new(),
        )
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul, vec![a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add, vec![a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub, vec![a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul, vec![a, b])
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Tanh, vec![a])
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Exp, vec![a])
    }

    pub fn affine(&mut self, a: NodeId, scale: f64, shift: f64) -> NodeId {
        self.push(Op::Affine { scale, shift }, vec![a])
    }

    pub fn scale(&mut self, a: NodeId, scale: f64) -> NodeId {
        self.affine(a, scale, 0.0)
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        self.push(Op::Clamp { lo, hi }, vec![a])
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum, vec![a])
    }

    pub fn sum_squares(&mut self, a: NodeId) -> NodeId {
        self.push(Op::SumSquares, vec![a])
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        self.push(Op::Concat, parts.to_vec())
    }

    /// `x W + b` with `b` broadcast over rows.
    pub fn linear(&mut self, x: NodeId, weight: NodeId, bias: NodeId) -> NodeId {
        let xw = self.matmul(x, weight);
        self.add(xw, bias)
    }
}

/// Values bound to leaves for one evaluation.
#[derive(Debug, Default, Clone)]
pub struct Bindings<'a> {
    slots: HashMap<NodeId, &'a DenseArray>,
}

impl<'a> Bindings<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, leaf: NodeId, value: &'a DenseArray) -> &mut Self {
        self.slots.insert(leaf, value);
        self
    }

    pub fn get(&self, leaf: NodeId) -> Option<&'a DenseArray> {
        self.slots.get(&leaf).copied()
    }
}

/// The value of every node after a forward pass.
#[derive(Debug, Clone)]
pub struct Values {
    values: Vec<DenseArray>,
}

impl Values {
    pub fn get(&self, node: NodeId) -> &DenseArray {
        &self.values[node.0]
    }

    pub fn scalar(&self, node: NodeId) -> f64 {
        self.values[node.0].data()[0]
    }
}

/// Gradients of a scalar seed with respect to every leaf.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<DenseArray>>,
}

impl Gradients {
    /// Gradient for a leaf; `None` for interior nodes.
    pub fn get(&self, leaf: NodeId) -> Option<&DenseArray> {
        self.grads.get(leaf.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, leaf: NodeId) -> Option<DenseArray> {
        self.grads.get_mut(leaf.0).and_then(Option::take)
    }
}

fn broadcast_ok(a: &DenseArray, b: &DenseArray) -> bool {
    a.shape() == b.shape()
        || (a.shape().len() == 2 && b.shape() == [1, a.shape()[1]])
}

fn elementwise2(
    a: &DenseArray,
    b: &DenseArray,
    f: impl Fn(f64, f64) -> f64,
) -> DenseArray {
    let mut out = a.clone();
    if a.shape() == b.shape() {
        for (o, &y) in out.data_mut().iter_mut().zip(b.data()) {
            *o = f(*o, y);
        }
    } else {
        let cols = b.len();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o = f(*o, b.data()[i % cols]);
        }
    }
    out
}

pub(crate) fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn eval_node(graph: &CompGraph, idx: usize, values: &[DenseArray]) -> Result<DenseArray> {
    let node = &graph.nodes[idx];
    let arg = |i: usize| &values[node.inputs[i].0];
    let ctx = || format!("node {idx} ({})", node.op.label());
    let out = match &node.op {
        Op::Leaf { .. } => unreachable!("leaves are bound, not evaluated"),
        Op::MatMul => {
            let (a, b) = (arg(0), arg(1));
            if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
                return Err(Error::shape(
                    ctx(),
                    format!("cannot multiply {:?} by {:?}", a.shape(), b.shape()),
                ));
            }
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            DenseArray::matrix(m, n, matmul_kernel(a.data(), b.data(), m, k, n))?
        }
        Op::Add | Op::Sub => {
            let (a, b) = (arg(0), arg(1));
            if !broadcast_ok(a, b) {
                return Err(Error::shape(
                    ctx(),
                    format!("incompatible operands {:?} and {:?}", a.shape(), b.shape()),
                ));
            }
            if node.op == Op::Add {
                elementwise2(a, b, |x, y| x + y)
            } else {
                elementwise2(a, b, |x, y| x - y)
            }
        }
        Op::Mul => {
            let (a, b) = (arg(0), arg(1));
            if a.shape() != b.shape() {
                return Err(Error::shape(
                    ctx(),
                    format!("incompatible operands {:?} and {:?}", a.shape(), b.shape()),
                ));
            }
            elementwise2(a, b, |x, y| x * y)
        }
        Op::Tanh => arg(0).map(f64::tanh),
        Op::Exp => arg(0).map(f64::exp),
        Op::Affine { scale, shift } => arg(0).map(|x| scale * x + shift),
        Op::Clamp { lo, hi } => arg(0).map(|x| x.clamp(*lo, *hi)),
        Op::Sum => DenseArray::scalar(arg(0).sum()),
        Op::SumSquares => DenseArray::scalar(arg(0).data().iter().map(|x| x * x).sum()),
        Op::Concat => {
            let parts: Vec<&DenseArray> = node.inputs.iter().map(|n| &values[n.0]).collect();
            concat_last(&parts).map_err(|detail| Error::shape(ctx(), detail))?
        }
    };
    if !out.all_finite() {
        return Err(Error::non_finite(ctx()));
    }
    Ok(out)
}

fn concat_last(parts: &[&DenseArray]) -> std::result::Result<DenseArray, String> {
    let first = parts.first().ok_or("concat of zero operands")?;
    let lead = &first.shape()[..first.shape().len().saturating_sub(1)];
    let rows: usize = lead.iter().product();
    for p in parts {
        if p.shape().len() != first.shape().len() || &p.shape()[..lead.len()] != lead {
            return Err(format!(
                "operand {:?} does not match leading dims {:?}",
                p.shape(),
                lead
            ));
        }
    }
    let total_cols: usize = parts.iter().map(|p| p.cols()).sum();
    let mut data = Vec::with_capacity(rows * total_cols);
    for r in 0..rows {
        for p in parts {
            let c = p.cols();
            data.extend_from_slice(&p.data()[r * c..(r + 1) * c]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(total_cols);
    DenseArray::new(shape, data).map_err(|e| e.to_string())
}

/// Evaluate every node of `graph` under `bindings`.
pub fn forward(graph: &CompGraph, bindings: &Bindings<'_>) -> Result<Values> {
    let mut values: Vec<DenseArray> = Vec::with_capacity(graph.nodes.len());
    for (idx, node) in graph.nodes.iter().enumerate() {
        let value = match &node.op {
            Op::Leaf { name, .. } => {
                let bound = bindings.get(NodeId(idx)).ok_or_else(|| Error::UnboundLeaf {
                    node: idx,
                    name: name.clone(),
                })?;
                if !bound.all_finite() {
                    return Err(Error::non_finite(format!("binding of leaf {name}")));
                }
                bound.clone()
            }
            _ => eval_node(graph, idx, &values)?,
        };
        values.push(value);
    }
    Ok(Values { values })
}

fn accumulate(slot: &mut Option<DenseArray>, shape: &[usize], delta: impl FnOnce(&mut [f64])) {
    let target = slot.get_or_insert_with(|| DenseArray::zeros(shape.to_vec()));
    delta(target.data_mut());
}

/// Gradient of the scalar node `seed` with respect to every leaf.
///
/// Adjoints are propagated in decreasing node index, so the summation order
/// of every gradient is fixed by the graph and results are reproducible.
pub fn backward(graph: &CompGraph, values: &Values, seed: NodeId) -> Result<Gradients> {
    let seed_value = values.get(seed);
    if !seed_value.is_scalar() {
        return Err(Error::SeedNotScalar {
            node: seed.0,
            shape: seed_value.shape().to_vec(),
        });
    }
    let mut adj: Vec<Option<DenseArray>> = vec![None; graph.nodes.len()];
    adj[seed.0] = Some(DenseArray::full(seed_value.shape().to_vec(), 1.0));

    for idx in (0..=seed.0).rev() {
        let node = &graph.nodes[idx];
        if matches!(node.op, Op::Leaf { .. }) {
            continue;
        }
        let Some(g) = adj[idx].take() else { continue };
        let out = &values.values[idx];
        let ins: Vec<usize> = node.inputs.iter().map(|n| n.0).collect();
        match &node.op {
            Op::Leaf { .. } => unreachable!(),
            Op::MatMul => {
                let a = &values.values[ins[0]];
                let b = &values.values[ins[1]];
                let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                // dA = G B^T
                accumulate(&mut adj[ins[0]], a.shape(), |da| {
                    for i in 0..m {
                        let g_row = &g.data()[i * n..(i + 1) * n];
                        for p in 0..k {
                            let b_row = &b.data()[p * n..(p + 1) * n];
                            da[i * k + p] += g_row.iter().zip(b_row).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                // dB = A^T G
                accumulate(&mut adj[ins[1]], b.shape(), |db| {
                    for i in 0..m {
                        let g_row = &g.data()[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = a.data()[i * k + p];
                            for (d, &gv) in db[p * n..(p + 1) * n].iter_mut().zip(g_row) {
                                *d += aip * gv;
                            }
                        }
                    }
                });
            }
            Op::Add | Op::Sub => {
                let sign = if node.op == Op::Add { 1.0 } else { -1.0 };
                let a_shape = values.values[ins[0]].shape().to_vec();
                let b_shape = values.values[ins[1]].shape().to_vec();
                accumulate(&mut adj[ins[0]], &a_shape, |da| {
                    for (d, &gv) in da.iter_mut().zip(g.data()) {
                        *d += gv;
                    }
                });
                let cols = b_shape.iter().product::<usize>();
                accumulate(&mut adj[ins[1]], &b_shape, |db| {
                    for (i, &gv) in g.data().iter().enumerate() {
                        db[i % cols] += sign * gv;
                    }
                });
            }
            Op::Mul => {
                let a = &values.values[ins[0]];
                let b = &values.values[ins[1]];
                accumulate(&mut adj[ins[0]], a.shape(), |da| {
                    for ((d, &gv), &bv) in da.iter_mut().zip(g.data()).zip(b.data()) {
                        *d += gv * bv;
                    }
                });
                accumulate(&mut adj[ins[1]], b.shape(), |db| {
                    for ((d, &gv), &av) in db.iter_mut().zip(g.data()).zip(a.data()) {
                        *d += gv * av;
                    }
                });
            }
            Op::Tanh => {
                accumulate(&mut adj[ins[0]], out.shape(), |da| {
                    for ((d, &gv), &y) in da.iter_mut().zip(g.data()).zip(out.data()) {
                        *d += gv * (1.0 - y * y);
                    }
                });
            }
            Op::Exp => {
                accumulate(&mut adj[ins[0]], out.shape(), |da| {
                    for ((d, &gv), &y) in da.iter_mut().zip(g.data()).zip(out.data()) {
                        *d += gv * y;
                    }
                });
            }
            Op::Affine { scale, .. } => {
                accumulate(&mut adj[ins[0]], out.shape(), |da| {
                    for (d, &gv) in da.iter_mut().zip(g.data()) {
                        *d += scale * gv;
                    }
                });
            }
            Op::Clamp { lo, hi } => {
                let x = &values.values[ins[0]];
                accumulate(&mut adj[ins[0]], x.shape(), |da| {
                    for ((d, &gv), &xv) in da.iter_mut().zip(g.data()).zip(x.data()) {
                        if xv >= *lo && xv <= *hi {
                            *d += gv;
                        }
                    }
                });
            }
            Op::Sum => {
                let x = &values.values[ins[0]];
                let gv = g.data()[0];
                accumulate(&mut adj[ins[0]], x.shape(), |da| {
                    for d in da.iter_mut() {
                        *d += gv;
                    }
                });
            }
            Op::SumSquares => {
                let x = &values.values[ins[0]];
                let gv = g.data()[0];
                accumulate(&mut adj[ins[0]], x.shape(), |da| {
                    for (d, &xv) in da.iter_mut().zip(x.data()) {
                        *d += 2.0 * xv * gv;
                    }
                });
            }
            Op::Concat => {
                let rows = out.len() / out.cols();
                let total = out.cols();
                let mut offset = 0;
                for &i in &ins {
                    let part_shape = values.values[i].shape().to_vec();
                    let c = values.values[i].cols();
                    accumulate(&mut adj[i], &part_shape, |dp| {
                        for r in 0..rows {
                            for j in 0..c {
                                dp[r * c + j] += g.data()[r * total + offset + j];
                            }
                        }
                    });
                    offset += c;
                }
            }
        }
    }

    let grads = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| match n.op {
            Op::Leaf { .. } => Some(
                adj[i]
                    .take()
                    .unwrap_or_else(|| DenseArray::zeros(values.values[i].shape().to_vec())),
            ),
            _ => None,
        })
        .collect();
    Ok(Gradients { grads })
}
