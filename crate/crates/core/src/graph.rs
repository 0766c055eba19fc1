//! Reverse-mode differentiation over a dynamically recorded operation graph.
//!
//! A [`Graph`] borrows a [`ParamStore`] for the duration of one forward pass.
//! Parameters enter the graph through [`Graph::param`], which returns the same
//! node for every request of the same [`ParamId`]; a tensor used by several
//! languages or time steps therefore sums its gradient contributions in
//! [`Graph::backward`].

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{masked_softmax, matmul_nt_raw, matmul_raw, matmul_tn_raw, Activation, Tensor};

/// Lower/upper probability clamp applied inside the binary cross-entropy.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Owns every trainable tensor of a model (or of several models sharing tensors).
#[derive(Clone, Debug, Default)]
pub struct ParamStore<S> {
    names: Vec<String>,
    tensors: Vec<Tensor<S>>,
    index: HashMap<String, ParamId>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<S>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.tensors.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<S>)> {
        self.tensors
            .iter()
            .enumerate()
            .map(|(i, t)| (ParamId(i), self.names[i].as_str(), t))
    }

    /// Total scalar count over distinct tensors.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Adds a backward pass's gradients into each tensor's grad slot.
    pub fn accumulate(&mut self, grads: &Gradients<S>) {
        for (tensor, g) in self.tensors.iter_mut().zip(&grads.by_param) {
            if let Some(g) = g {
                for (dst, &src) in tensor.grad_mut().iter_mut().zip(g) {
                    *dst += src;
                }
            }
        }
    }
}

/// Parameter gradients produced by one backward pass, indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Gradients<S> {
    by_param: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, id: ParamId) -> Option<&[S]> {
        self.by_param.get(id.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `id`, or zeros of length `len` when it was unreachable.
    pub fn get_or_zeros(&self, id: ParamId, len: usize) -> Vec<S> {
        self.get(id).map_or_else(|| vec![S::zero(); len], <[S]>::to_vec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Value<S> {
    Owned(Tensor<S>),
    Param(ParamId),
}

#[derive(Debug)]
enum Op<S> {
    Input,
    Param,
    MatMul(NodeId, NodeId),
    MatVec(NodeId, NodeId),
    VecMat(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    OneMinus(NodeId),
    Act(NodeId, Activation),
    MaskedSoftmax(NodeId),
    GatherRows(NodeId, Vec<usize>),
    StackRows(Vec<NodeId>),
    ConcatCols(NodeId, NodeId),
    Reshape(NodeId),
    Scale(NodeId, S),
    SumAll(NodeId),
    AddN(Vec<NodeId>),
    Bce(NodeId, Vec<S>),
}

#[derive(Debug)]
struct Node<S> {
    value: Value<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// One forward pass worth of recorded operations.
#[derive(Debug)]
pub struct Graph<'p, S> {
    store: &'p ParamStore<S>,
    nodes: Vec<Node<S>>,
    param_nodes: HashMap<ParamId, NodeId>,
}

impl<'p, S: Scalar> Graph<'p, S> {
    pub fn new(store: &'p ParamStore<S>) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore<S> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        match &self.nodes[id.0].value {
            Value::Owned(t) => t,
            Value::Param(p) => self.store.get(*p),
        }
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.value(id).shape()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, inputs: &[NodeId], name: &str) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// A constant: receives no gradient.
    pub fn input(&mut self, tensor: Tensor<S>) -> Result<NodeId> {
        self.push(tensor, Op::Input, &[], "input")
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&node) = self.param_nodes.get(&id) {
            return node;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param,
            requires_grad: true,
        });
        let node = NodeId(self.nodes.len() - 1);
        self.param_nodes.insert(id, node);
        node
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(v, Op::MatMul(a, b), &[a, b], "matmul")
    }

    pub fn matvec(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        let out = self.value(m).matvec(self.value(v))?;
        self.push(out, Op::MatVec(m, v), &[m, v], "matvec")
    }

    pub fn vecmat(&mut self, v: NodeId, m: NodeId) -> Result<NodeId> {
        let out = self.value(v).vecmat(self.value(m))?;
        self.push(out, Op::VecMat(v, m), &[v, m], "vecmat")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        self.push(v, Op::Add(a, b), &[a, b], "add")
    }

    /// Adds a length-n bias to every row.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let v = self.value(a).add_row_broadcast(self.value(bias))?;
        self.push(v, Op::AddRow(a, bias), &[a, bias], "add_row")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        self.push(v, Op::Mul(a, b), &[a, b], "mul")
    }

    /// `1 − a`, elementwise.
    pub fn one_minus(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| S::one() - x);
        self.push(v, Op::OneMinus(a), &[a], "one_minus")
    }

    pub fn activation(&mut self, a: NodeId, kind: Activation) -> Result<NodeId> {
        let v = self.value(a).activation(kind)?;
        self.push(v, Op::Act(a, kind), &[a], "activation")
    }

    pub fn masked_softmax(&mut self, a: NodeId, mask: &[bool]) -> Result<NodeId> {
        let v = masked_softmax(self.value(a), mask)?;
        self.push(v, Op::MaskedSoftmax(a), &[a], "masked_softmax")
    }

    /// Selects rows of a matrix (duplicates allowed) into a `[len × n]` matrix.
    pub fn gather_rows(&mut self, a: NodeId, rows: &[usize]) -> Result<NodeId> {
        let src = self.value(a);
        let (m, n) = match src.shape() {
            [m, n] => (*m, *n),
            s => return Err(Error::dim("gather_rows", s, &[rows.len()])),
        };
        if rows.is_empty() || rows.iter().any(|&r| r >= m) {
            return Err(Error::Contract(format!(
                "gather_rows: indices {rows:?} out of range for {m} rows"
            )));
        }
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            data.extend_from_slice(&src.data()[r * n..(r + 1) * n]);
        }
        let v = Tensor::new(vec![rows.len(), n], data)?;
        self.push(v, Op::GatherRows(a, rows.to_vec()), &[a], "gather_rows")
    }

    /// Concatenates along rows. Each part is a rank-1 `[n]` (one row) or a
    /// `[m × n]` matrix; all parts share `n`.
    pub fn stack_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts.first().ok_or(Error::EmptySequence("stack_rows: no rows"))?;
        let n = self.value(*first).as_matrix_dims().1;
        let mut rows = 0;
        let mut data = Vec::new();
        for &r in parts {
            let t = self.value(r);
            if t.rank() > 2 || t.as_matrix_dims().1 != n {
                return Err(Error::dim("stack_rows", self.shape(*first), t.shape()));
            }
            rows += t.as_matrix_dims().0;
            data.extend_from_slice(t.data());
        }
        let v = Tensor::new(vec![rows, n], data)?;
        self.push(v, Op::StackRows(parts.to_vec()), parts, "stack_rows")
    }

    /// Column-wise concatenation of two matrices with equal row counts
    /// (or of two vectors).
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != tb.rank() || ta.rank() > 2 {
            return Err(Error::dim("concat_cols", ta.shape(), tb.shape()));
        }
        let (ma, na) = ta.as_matrix_dims();
        let (mb, nb) = tb.as_matrix_dims();
        if ma != mb {
            return Err(Error::dim("concat_cols", ta.shape(), tb.shape()));
        }
        let mut data = Vec::with_capacity(ma * (na + nb));
        for i in 0..ma {
            data.extend_from_slice(&ta.data()[i * na..(i + 1) * na]);
            data.extend_from_slice(&tb.data()[i * nb..(i + 1) * nb]);
        }
        let shape = if ta.rank() == 1 {
            vec![na + nb]
        } else {
            vec![ma, na + nb]
        };
        let v = Tensor::new(shape, data)?;
        self.push(v, Op::ConcatCols(a, b), &[a, b], "concat_cols")
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(a).reshape(shape)?;
        self.push(v, Op::Reshape(a), &[a], "reshape")
    }

    pub fn scale(&mut self, a: NodeId, c: S) -> Result<NodeId> {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c), &[a], "scale")
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Tensor::scalar(self.value(a).sum())?;
        self.push(v, Op::SumAll(a), &[a], "sum")
    }

    /// Elementwise sum of same-shape nodes.
    pub fn add_n(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let first = xs.first().ok_or(Error::EmptySequence("add_n: no terms"))?;
        let mut acc = self.value(*first).clone();
        acc.clear_grad();
        for &x in &xs[1..] {
            acc = acc.zip_map(self.value(x), "add_n", |a, b| a + b)?;
        }
        self.push(acc, Op::AddN(xs.to_vec()), xs, "add_n")
    }

    /// Mean over labels of the binary cross-entropy between `target` and the
    /// probabilities in `probs`, with probabilities clamped to
    /// `[PROB_CLAMP, 1 − PROB_CLAMP]`.
    pub fn bce(&mut self, probs: NodeId, target: &[S]) -> Result<NodeId> {
        let p = self.value(probs);
        if p.numel() != target.len() {
            return Err(Error::dim("bce", p.shape(), &[target.len()]));
        }
        let v = Tensor::scalar(bce_value(p.data(), target))?;
        self.push(v, Op::Bce(probs, target.to_vec()), &[probs], "bce")
    }

    /// Back-propagates from a scalar `loss` and returns the parameter gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<S>> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<S>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![S::one()]);
        let mut out = Gradients {
            by_param: vec![None; self.store.len()],
        };

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Input => {}
                Op::Param => {
                    if let Value::Param(pid) = node.value {
                        add_into(&mut out.by_param[pid.0], &dy);
                    }
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, n) = (ta.shape()[0], ta.shape()[1]);
                    let p = tb.shape()[1];
                    if self.needs(*a) {
                        let da = matmul_nt_raw(&dy, tb.data(), m, p, n);
                        add_into(&mut grads[a.0], &da);
                    }
                    if self.needs(*b) {
                        let db = matmul_tn_raw(ta.data(), &dy, m, n, p);
                        add_into(&mut grads[b.0], &db);
                    }
                }
                Op::MatVec(m_id, v_id) => {
                    let (tm, tv) = (self.value(*m_id), self.value(*v_id));
                    let (m, n) = (tm.shape()[0], tm.shape()[1]);
                    if self.needs(*m_id) {
                        let dm = matmul_raw(&dy, tv.data(), m, 1, n);
                        add_into(&mut grads[m_id.0], &dm);
                    }
                    if self.needs(*v_id) {
                        let dv = matmul_raw(&dy, tm.data(), 1, m, n);
                        add_into(&mut grads[v_id.0], &dv);
                    }
                }
                Op::VecMat(v_id, m_id) => {
                    let (tv, tm) = (self.value(*v_id), self.value(*m_id));
                    let (m, n) = (tm.shape()[0], tm.shape()[1]);
                    if self.needs(*v_id) {
                        let dv = matmul_nt_raw(&dy, tm.data(), 1, n, m);
                        add_into(&mut grads[v_id.0], &dv);
                    }
                    if self.needs(*m_id) {
                        let dm = matmul_raw(tv.data(), &dy, m, 1, n);
                        add_into(&mut grads[m_id.0], &dm);
                    }
                }
                Op::Add(a, b) => {
                    add_into(&mut grads[a.0], &dy);
                    add_into(&mut grads[b.0], &dy);
                }
                Op::AddRow(a, bias) => {
                    add_into(&mut grads[a.0], &dy);
                    if self.needs(*bias) {
                        let n = self.value(*bias).numel();
                        let mut db = vec![S::zero(); n];
                        for (i, &g) in dy.iter().enumerate() {
                            db[i % n] += g;
                        }
                        add_into(&mut grads[bias.0], &db);
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        let da: Vec<S> = dy.iter().zip(tb.data()).map(|(&g, &y)| g * y).collect();
                        add_into(&mut grads[a.0], &da);
                    }
                    if self.needs(*b) {
                        let db: Vec<S> = dy.iter().zip(ta.data()).map(|(&g, &x)| g * x).collect();
                        add_into(&mut grads[b.0], &db);
                    }
                }
                Op::OneMinus(a) => {
                    let da: Vec<S> = dy.iter().map(|&g| -g).collect();
                    add_into(&mut grads[a.0], &da);
                }
                Op::Act(a, kind) => {
                    let x = self.value(*a).data();
                    let y = self.value(NodeId(idx)).data();
                    let da: Vec<S> = dy
                        .iter()
                        .zip(x.iter().zip(y))
                        .map(|(&g, (&x, &y))| g * kind.derivative(x, y))
                        .collect();
                    add_into(&mut grads[a.0], &da);
                }
                Op::MaskedSoftmax(a) => {
                    let y = self.value(NodeId(idx)).data();
                    let dot: S = y.iter().zip(&dy).map(|(&p, &g)| p * g).sum();
                    let da: Vec<S> = y.iter().zip(&dy).map(|(&p, &g)| p * (g - dot)).collect();
                    add_into(&mut grads[a.0], &da);
                }
                Op::GatherRows(a, rows) if self.needs(*a) => {
                    let src = self.value(*a);
                    let n = src.shape()[1];
                    let slot = grads[a.0].get_or_insert_with(|| vec![S::zero(); src.numel()]);
                    for (k, &r) in rows.iter().enumerate() {
                        for j in 0..n {
                            slot[r * n + j] += dy[k * n + j];
                        }
                    }
                }
                Op::StackRows(parts) => {
                    let mut offset = 0;
                    for r in parts {
                        let len = self.value(*r).numel();
                        if self.needs(*r) {
                            add_into(&mut grads[r.0], &dy[offset..offset + len]);
                        }
                        offset += len;
                    }
                }
                Op::ConcatCols(a, b) => {
                    let (m, na) = self.value(*a).as_matrix_dims();
                    let nb = self.value(*b).as_matrix_dims().1;
                    let mut da = Vec::with_capacity(m * na);
                    let mut db = Vec::with_capacity(m * nb);
                    for i in 0..m {
                        let row = &dy[i * (na + nb)..(i + 1) * (na + nb)];
                        da.extend_from_slice(&row[..na]);
                        db.extend_from_slice(&row[na..]);
                    }
                    add_into(&mut grads[a.0], &da);
                    add_into(&mut grads[b.0], &db);
                }
                Op::GatherRows(..) => {}
                Op::Reshape(a) => add_into(&mut grads[a.0], &dy),
                Op::Scale(a, c) => {
                    let da: Vec<S> = dy.iter().map(|&g| g * *c).collect();
                    add_into(&mut grads[a.0], &da);
                }
                Op::SumAll(a) => {
                    let da = vec![dy[0]; self.value(*a).numel()];
                    add_into(&mut grads[a.0], &da);
                }
                Op::AddN(xs) => {
                    for x in xs {
                        add_into(&mut grads[x.0], &dy);
                    }
                }
                Op::Bce(p, target) => {
                    let probs = self.value(*p).data();
                    let da = bce_grad(probs, target, dy[0]);
                    add_into(&mut grads[p.0], &da);
                }
            }
        }
        Ok(out)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }
}

fn add_into<S: Scalar>(slot: &mut Option<Vec<S>>, g: &[S]) {
    match slot {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}

fn clamp_prob<S: Scalar>(p: S) -> S {
    let lo = S::of(PROB_CLAMP);
    p.max(lo).min(S::one() - lo)
}

pub(crate) fn bce_value<S: Scalar>(probs: &[S], target: &[S]) -> S {
    let k = S::from_usize(probs.len()).unwrap();
    let total: S = probs
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let p = clamp_prob(p);
            -(y * p.ln() + (S::one() - y) * (S::one() - p).ln())
        })
        .sum();
    total / k
}

/// d(bce)/dp; zero where the clamp is active.
fn bce_grad<S: Scalar>(probs: &[S], target: &[S], upstream: S) -> Vec<S> {
    let k = S::from_usize(probs.len()).unwrap();
    let lo = S::of(PROB_CLAMP);
    let hi = S::one() - lo;
    probs
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            if p < lo || p > hi {
                S::zero()
            } else {
                upstream * ((S::one() - y) / (S::one() - p) - y / p) / k
            }
        })
        .collect()
}
