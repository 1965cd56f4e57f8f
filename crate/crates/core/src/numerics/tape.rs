//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! A [`Tape`] records one forward pass. Every op appends a node whose inputs
//! precede it, so a single reverse sweep over the node list visits each node
//! exactly once in a valid topological order. Parameters live outside the
//! tape in a [`ParamSet`]; binding one copies its current value onto the tape
//! and backward reports its gradient through [`Gradients`].

use std::collections::BTreeMap;

use super::tensor::{matmul_at_into, matmul_bt_into, Tensor};
use super::Activation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }
}

/// Ordered collection of named parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::Validation(format!("duplicate parameter name `{name}`")));
        }
        self.params.push(Parameter::new(name, value));
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Adds `grads` into the stored parameter gradients.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (id, g) in &grads.grads {
            let target = self.params[id.0].grad.values_mut();
            for (t, v) in target.iter_mut().zip(g.values()) {
                *t += v;
            }
        }
    }

    /// Copies parameter values from `other`, which must have the same layout.
    pub fn copy_values_from(&mut self, other: &ParamSet) {
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            dst.value.values_mut().copy_from_slice(src.value.values());
        }
    }
}

/// Per-parameter gradients produced by one backward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    grads: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamId, &Tensor)> {
        self.grads.iter()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.values_mut() {
            g.values_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Activate(Var, Activation),
    MaskedSoftmax(Var, Vec<bool>),
    Row(Var, usize),
    StackRows(Vec<Var>),
    ConcatCols(Var, Var),
    Reshape(Var),
    Sum(Var),
    Bce { p: Var, y: f64, w: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Probability clipping used before taking logarithms in the BCE op.
pub const PROB_CLIP: f64 = 1e-12;

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        self.push(params.get(id).value.clone(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).dims2(), self.value(b).dims2());
        if sa != sb {
            return Err(Error::Shape {
                op,
                left: self.value(a).shape().to_vec(),
                right: self.value(b).shape().to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let va = self.value(a);
        let values = va
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(va.shape().to_vec(), values).expect("shape preserved");
        let rg = self.rg(a) || self.rg(b);
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    /// Adds the row vector `b` to every row of the matrix `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2();
        if self.value(b).len() != n {
            return Err(Error::Shape {
                op: "add_row",
                left: self.value(a).shape().to_vec(),
                right: self.value(b).shape().to_vec(),
            });
        }
        let bias = self.value(b).values().to_vec();
        let mut value = self.value(a).clone();
        for r in 0..m {
            for (x, bb) in value.values_mut()[r * n..(r + 1) * n].iter_mut().zip(&bias) {
                *x += bb;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::AddRow(a, b), rg))
    }

    /// `scale · a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let mut value = self.value(a).clone();
        value
            .values_mut()
            .iter_mut()
            .for_each(|x| *x = scale * *x + shift);
        let rg = self.rg(a);
        self.push(value, Op::Affine(a, scale), rg)
    }

    pub fn activate(&mut self, a: Var, kind: Activation) -> Var {
        let mut value = self.value(a).clone();
        value
            .values_mut()
            .iter_mut()
            .for_each(|x| *x = kind.apply(*x));
        let rg = self.rg(a);
        self.push(value, Op::Activate(a, kind), rg)
    }

    pub fn masked_softmax(&mut self, scores: Var, mask: &[bool]) -> Result<Var> {
        let values = super::masked_softmax(self.value(scores).values(), mask)?;
        let value = Tensor::new(self.value(scores).shape().to_vec(), values)?;
        let rg = self.rg(scores);
        Ok(self.push(value, Op::MaskedSoftmax(scores, mask.to_vec()), rg))
    }

    /// Row `r` of a matrix as a `1 × n` tensor.
    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        let (m, _) = self.value(a).dims2();
        if r >= m {
            return Err(Error::Shape {
                op: "row",
                left: self.value(a).shape().to_vec(),
                right: vec![r],
            });
        }
        let value = Tensor::row(self.value(a).row_slice(r).to_vec());
        let rg = self.rg(a);
        Ok(self.push(value, Op::Row(a, r), rg))
    }

    /// Stacks `1 × n` rows into an `len × n` matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let n = rows.first().map_or(0, |&r| self.value(r).len());
        let mut values = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if self.value(r).len() != n {
                return Err(Error::Shape {
                    op: "stack_rows",
                    left: vec![n],
                    right: self.value(r).shape().to_vec(),
                });
            }
            values.extend_from_slice(self.value(r).values());
        }
        let rg = rows.iter().any(|&r| self.rg(r));
        let value = Tensor::new(vec![rows.len(), n], values)?;
        Ok(self.push(value, Op::StackRows(rows.to_vec()), rg))
    }

    /// Concatenates two matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, na) = self.value(a).dims2();
        let (mb, nb) = self.value(b).dims2();
        if ma != mb {
            return Err(Error::Shape {
                op: "concat_cols",
                left: self.value(a).shape().to_vec(),
                right: self.value(b).shape().to_vec(),
            });
        }
        let mut values = Vec::with_capacity(ma * (na + nb));
        for r in 0..ma {
            values.extend_from_slice(&self.value(a).values()[r * na..(r + 1) * na]);
            values.extend_from_slice(&self.value(b).values()[r * nb..(r + 1) * nb]);
        }
        let rg = self.rg(a) || self.rg(b);
        let value = Tensor::new(vec![ma, na + nb], values)?;
        Ok(self.push(value, Op::ConcatCols(a, b), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(a).clone().reshaped(shape)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).values().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Class-weighted binary cross-entropy of a scalar probability.
    pub fn weighted_bce(&mut self, p: Var, y: f64, w: f64) -> Result<Var> {
        if !self.value(p).is_scalar() {
            return Err(Error::Contract("weighted_bce expects a scalar probability".into()));
        }
        let value = super::weighted_bce(self.value(p).values()[0], y, w);
        let rg = self.rg(p);
        Ok(self.push(Tensor::scalar(value), Op::Bce { p, y, w }, rg))
    }

    /// Reverse sweep from a scalar `loss`. A tape can be swept only once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::Contract(
                "backward already ran on this tape; record a new forward pass".into(),
            ));
        }
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let nodes = &self.nodes;
            let mut send = |v: Var, f: &dyn Fn(&mut [f64])| {
                if !nodes[v.0].requires_grad {
                    return;
                }
                let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
                f(slot);
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    let shape = node.value.shape().to_vec();
                    match out.grads.get_mut(id) {
                        Some(t) => t.values_mut().iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                        None => {
                            out.grads.insert(*id, Tensor::new(shape, g)?);
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = nodes[a.0].value.dims2();
                    let (_, n) = nodes[b.0].value.dims2();
                    let av = nodes[a.0].value.values();
                    let bv = nodes[b.0].value.values();
                    send(*a, &|s| matmul_bt_into(&g, bv, s, m, n, k));
                    send(*b, &|s| matmul_at_into(av, &g, s, m, k, n));
                }
                Op::Add(a, b) => {
                    send(*a, &|s| add_assign(s, &g));
                    send(*b, &|s| add_assign(s, &g));
                }
                Op::Sub(a, b) => {
                    send(*a, &|s| add_assign(s, &g));
                    send(*b, &|s| s.iter_mut().zip(&g).for_each(|(x, y)| *x -= y));
                }
                Op::Mul(a, b) => {
                    let av = nodes[a.0].value.values();
                    let bv = nodes[b.0].value.values();
                    send(*a, &|s| {
                        for ((x, gi), bi) in s.iter_mut().zip(&g).zip(bv) {
                            *x += gi * bi;
                        }
                    });
                    send(*b, &|s| {
                        for ((x, gi), ai) in s.iter_mut().zip(&g).zip(av) {
                            *x += gi * ai;
                        }
                    });
                }
                Op::AddRow(a, b) => {
                    let n = nodes[b.0].value.len();
                    send(*a, &|s| add_assign(s, &g));
                    send(*b, &|s| {
                        for chunk in g.chunks(n) {
                            add_assign(s, chunk);
                        }
                    });
                }
                Op::Affine(a, scale) => {
                    send(*a, &|s| s.iter_mut().zip(&g).for_each(|(x, y)| *x += scale * y));
                }
                Op::Activate(a, kind) => {
                    let y = node.value.values();
                    send(*a, &|s| {
                        for ((x, gi), yi) in s.iter_mut().zip(&g).zip(y) {
                            *x += gi * kind.derivative_from_output(*yi);
                        }
                    });
                }
                Op::MaskedSoftmax(a, mask) => {
                    let y = node.value.values();
                    let mut dot = 0.0;
                    for ((yi, gi), &m) in y.iter().zip(&g).zip(mask) {
                        if m {
                            dot += yi * gi;
                        }
                    }
                    send(*a, &|s| {
                        for (((x, gi), yi), &m) in s.iter_mut().zip(&g).zip(y).zip(mask) {
                            if m {
                                *x += yi * (gi - dot);
                            }
                        }
                    });
                }
                Op::Row(a, r) => {
                    let n = g.len();
                    send(*a, &|s| add_assign(&mut s[r * n..(r + 1) * n], &g));
                }
                Op::StackRows(rows) => {
                    let n = g.len() / rows.len().max(1);
                    for (r, v) in rows.iter().enumerate() {
                        send(*v, &|s| add_assign(s, &g[r * n..(r + 1) * n]));
                    }
                }
                Op::ConcatCols(a, b) => {
                    let (m, na) = nodes[a.0].value.dims2();
                    let (_, nb) = nodes[b.0].value.dims2();
                    let w = na + nb;
                    send(*a, &|s| {
                        for r in 0..m {
                            add_assign(&mut s[r * na..(r + 1) * na], &g[r * w..r * w + na]);
                        }
                    });
                    send(*b, &|s| {
                        for r in 0..m {
                            add_assign(&mut s[r * nb..(r + 1) * nb], &g[r * w + na..(r + 1) * w]);
                        }
                    });
                }
                Op::Reshape(a) => send(*a, &|s| add_assign(s, &g)),
                Op::Sum(a) => send(*a, &|s| s.iter_mut().for_each(|x| *x += g[0])),
                Op::Bce { p, y, w } => {
                    let pv = nodes[p.0].value.values()[0].clamp(PROB_CLIP, 1.0 - PROB_CLIP);
                    let d = -w * (y / pv - (1.0 - y) / (1.0 - pv));
                    send(*p, &|s| s[0] += g[0] * d);
                }
            }
        }
        Ok(out)
    }

    /// Runs [`Tape::backward`] and accumulates the result into `params`.
    pub fn backward_into(&mut self, loss: Var, params: &mut ParamSet) -> Result<()> {
        let grads = self.backward(loss)?;
        params.accumulate(&grads);
        Ok(())
    }
}

fn add_assign(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}
