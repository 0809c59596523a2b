//! Reverse-mode differentiation record.
//!
//! A [`Tape`] is a define-by-run sequence of primitive operations in
//! topological order (inputs always precede their consumers). [`Var`] is a
//! cheap handle into the tape; building an op records the forward value and
//! the backward rule. `backward` walks the record in reverse and accumulates
//! gradients into every node that descends from a trainable leaf.

use std::cell::RefCell;
use std::rc::Rc;

use crate::scalar::Scalar;
use crate::tensor::{BoolMat, NumError, Tensor};

enum Op<T> {
    Leaf,
    Matmul,
    Transpose,
    Add,
    AddRow,
    Mul,
    Scale(T),
    Relu,
    Reshape { from: Vec<usize> },
    Concat { axis: usize, extents: Vec<usize> },
    MeanAxis0,
    SumAll,
    Softmax { axis: usize },
    MaskedSoftmax { mask: Rc<BoolMat> },
    Embedding { ids: Vec<usize> },
    CrossEntropy { targets: Vec<usize> },
    LayerNorm { eps: T },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    op: Op<T>,
    inputs: Vec<usize>,
    needs_grad: bool,
}

pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a tape node. Copyable; all arithmetic goes through the tape.
#[derive(Clone, Copy)]
pub struct Var<'t, T: Scalar> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, inputs: Vec<usize>, needs_grad: bool) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            grad: None,
            op,
            inputs,
            needs_grad,
        });
        nodes.len() - 1
    }

    /// Record a constant; no gradient flows into it.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        let id = self.push(value, Op::Leaf, vec![], false);
        Var { tape: self, id }
    }

    /// Record a trainable leaf; `backward` populates its gradient.
    pub fn trainable(&self, value: Tensor<T>) -> Var<'_, T> {
        let id = self.push(value, Op::Leaf, vec![], true);
        Var { tape: self, id }
    }

    fn unary(
        &self,
        a: Var<'_, T>,
        value: Tensor<T>,
        op: Op<T>,
    ) -> Var<'_, T> {
        let needs = self.nodes.borrow()[a.id].needs_grad;
        let id = self.push(value, op, vec![a.id], needs);
        Var { tape: self, id }
    }

    fn binary(&self, a: Var<'_, T>, b: Var<'_, T>, value: Tensor<T>, op: Op<T>) -> Var<'_, T> {
        let needs = {
            let nodes = self.nodes.borrow();
            nodes[a.id].needs_grad || nodes[b.id].needs_grad
        };
        let id = self.push(value, op, vec![a.id, b.id], needs);
        Var { tape: self, id }
    }

    pub fn concat<'t>(&'t self, parts: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>, NumError> {
        if parts.is_empty() {
            return Err(NumError::Empty { op: "concat" });
        }
        for p in parts {
            assert!(std::ptr::eq(p.tape, self), "vars from a different tape");
        }
        let (value, extents, needs) = {
            let nodes = self.nodes.borrow();
            let tensors: Vec<&Tensor<T>> = parts.iter().map(|p| &nodes[p.id].value).collect();
            let value = Tensor::concat(&tensors, axis)?;
            let extents = tensors
                .iter()
                .map(|t| if t.rank() == 1 { t.len() } else { t.shape()[axis] })
                .collect();
            let needs = parts.iter().any(|p| nodes[p.id].needs_grad);
            (value, extents, needs)
        };
        let id = self.push(
            value,
            Op::Concat { axis, extents },
            parts.iter().map(|p| p.id).collect(),
            needs,
        );
        Ok(Var { tape: self, id })
    }

    /// Smallest |x| fed into any relu so far; tests use this to keep
    /// finite-difference checks away from the kink.
    pub fn relu_margin(&self) -> Option<T> {
        let nodes = self.nodes.borrow();
        let mut margin: Option<T> = None;
        for node in nodes.iter() {
            if matches!(node.op, Op::Relu) {
                let input = &nodes[node.inputs[0]];
                for &x in input.value.data() {
                    let a = x.abs();
                    margin = Some(match margin {
                        Some(m) if m < a => m,
                        _ => a,
                    });
                }
            }
        }
        margin
    }

    /// Backpropagate from a scalar loss node, populating gradients of every
    /// trainable-descended node.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<(), NumError> {
        assert!(std::ptr::eq(loss.tape, self), "loss from a different tape");
        let mut nodes = self.nodes.borrow_mut();
        {
            let l = &nodes[loss.id];
            if l.value.len() != 1 {
                return Err(NumError::BadShape {
                    op: "backward",
                    expected: "scalar loss",
                    shape: l.value.shape().to_vec(),
                });
            }
            if !l.value.all_finite() {
                return Err(NumError::NonFinite { op: "backward" });
            }
        }
        let shape = nodes[loss.id].value.shape().to_vec();
        nodes[loss.id].grad = Some(Tensor::filled(&shape, T::one()));

        for i in (0..=loss.id).rev() {
            if nodes[i].grad.is_none() || !nodes[i].needs_grad {
                continue;
            }
            let grad = nodes[i].grad.clone().expect("checked above");
            let inputs = nodes[i].inputs.clone();
            match &nodes[i].op {
                Op::Leaf => {}
                Op::Matmul => {
                    let a = nodes[inputs[0]].value.clone();
                    let b = nodes[inputs[1]].value.clone();
                    if nodes[inputs[0]].needs_grad {
                        let da = grad.matmul(&b.transpose()?)?;
                        accumulate(&mut nodes, inputs[0], da)?;
                    }
                    if nodes[inputs[1]].needs_grad {
                        let db = a.transpose()?.matmul(&grad)?;
                        accumulate(&mut nodes, inputs[1], db)?;
                    }
                }
                Op::Transpose => {
                    let da = grad.transpose()?;
                    accumulate(&mut nodes, inputs[0], da)?;
                }
                Op::Add => {
                    if nodes[inputs[0]].needs_grad {
                        accumulate(&mut nodes, inputs[0], grad.clone())?;
                    }
                    if nodes[inputs[1]].needs_grad {
                        accumulate(&mut nodes, inputs[1], grad)?;
                    }
                }
                Op::AddRow => {
                    if nodes[inputs[0]].needs_grad {
                        accumulate(&mut nodes, inputs[0], grad.clone())?;
                    }
                    if nodes[inputs[1]].needs_grad {
                        let (n, d) = grad.dims2("add_row backward")?;
                        let mut db = vec![T::zero(); d];
                        for i in 0..n {
                            for j in 0..d {
                                db[j] += grad.data()[i * d + j];
                            }
                        }
                        accumulate(&mut nodes, inputs[1], Tensor::vector(db))?;
                    }
                }
                Op::Mul => {
                    let a = nodes[inputs[0]].value.clone();
                    let b = nodes[inputs[1]].value.clone();
                    if nodes[inputs[0]].needs_grad {
                        accumulate(&mut nodes, inputs[0], grad.mul(&b)?)?;
                    }
                    if nodes[inputs[1]].needs_grad {
                        accumulate(&mut nodes, inputs[1], grad.mul(&a)?)?;
                    }
                }
                Op::Scale(c) => {
                    let c = *c;
                    accumulate(&mut nodes, inputs[0], grad.scale(c))?;
                }
                Op::Relu => {
                    let x = nodes[inputs[0]].value.clone();
                    let da = grad.zip_map(&x, "relu backward", |g, xv| {
                        if xv > T::zero() {
                            g
                        } else {
                            T::zero()
                        }
                    })?;
                    accumulate(&mut nodes, inputs[0], da)?;
                }
                Op::Reshape { from } => {
                    let from = from.clone();
                    let da = grad.clone().reshaped(&from)?;
                    accumulate(&mut nodes, inputs[0], da)?;
                }
                Op::Concat { axis, extents } => {
                    let axis = *axis;
                    let extents = extents.clone();
                    let rank = nodes[inputs[0]].value.rank();
                    let mut offset = 0usize;
                    for (k, &ext) in extents.iter().enumerate() {
                        if !nodes[inputs[k]].needs_grad {
                            offset += ext;
                            continue;
                        }
                        let piece = if rank == 1 {
                            Tensor::vector(grad.data()[offset..offset + ext].to_vec())
                        } else if axis == 0 {
                            let cols = nodes[inputs[k]].value.shape()[1];
                            Tensor::matrix(
                                ext,
                                cols,
                                grad.data()[offset * cols..(offset + ext) * cols].to_vec(),
                            )?
                        } else {
                            let rows = nodes[inputs[k]].value.shape()[0];
                            let total_cols = grad.shape()[1];
                            let mut data = Vec::with_capacity(rows * ext);
                            for i in 0..rows {
                                let base = i * total_cols + offset;
                                data.extend_from_slice(&grad.data()[base..base + ext]);
                            }
                            Tensor::matrix(rows, ext, data)?
                        };
                        accumulate(&mut nodes, inputs[k], piece)?;
                        offset += ext;
                    }
                }
                Op::MeanAxis0 => {
                    let (n, d) = nodes[inputs[0]].value.dims2("mean backward")?;
                    let inv = T::one() / T::from_f64_lossy(n as f64);
                    let mut da = Tensor::zeros(&[n, d]);
                    for i in 0..n {
                        for j in 0..d {
                            da.data_mut()[i * d + j] = grad.data()[j] * inv;
                        }
                    }
                    accumulate(&mut nodes, inputs[0], da)?;
                }
                Op::SumAll => {
                    let g = grad.item()?;
                    let shape = nodes[inputs[0]].value.shape().to_vec();
                    accumulate(&mut nodes, inputs[0], Tensor::filled(&shape, g))?;
                }
                Op::Softmax { axis } => {
                    let axis = *axis;
                    let y = nodes[i].value.clone();
                    let da = softmax_backward(&y, &grad, axis)?;
                    accumulate(&mut nodes, inputs[0], da)?;
                }
                Op::MaskedSoftmax { mask } => {
                    let mask = mask.clone();
                    let y = nodes[i].value.clone();
                    let (n, m) = y.dims2("masked_softmax backward")?;
                    let mut da = Tensor::zeros(&[n, m]);
                    for r in 0..n {
                        let mut dot = T::zero();
                        for c in 0..m {
                            if mask.at(r, c) {
                                dot += grad.at(r, c) * y.at(r, c);
                            }
                        }
                        for c in 0..m {
                            if mask.at(r, c) {
                                *da.at_mut(r, c) = y.at(r, c) * (grad.at(r, c) - dot);
                            }
                        }
                    }
                    accumulate(&mut nodes, inputs[0], da)?;
                }
                Op::Embedding { ids } => {
                    let ids = ids.clone();
                    let (v, d) = nodes[inputs[0]].value.dims2("embedding backward")?;
                    let mut da = Tensor::zeros(&[v, d]);
                    for (row, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            *da.at_mut(id, j) += grad.at(row, j);
                        }
                    }
                    accumulate(&mut nodes, inputs[0], da)?;
                }
                Op::CrossEntropy { targets } => {
                    let targets = targets.clone();
                    let logits = nodes[inputs[0]].value.clone();
                    let probs = logits.softmax(1)?;
                    let g = grad.item()?;
                    let (n, _) = logits.dims2("cross_entropy backward")?;
                    let scale = g / T::from_f64_lossy(n as f64);
                    let mut da = probs.scale(scale);
                    for (row, &t) in targets.iter().enumerate() {
                        *da.at_mut(row, t) -= scale;
                    }
                    accumulate(&mut nodes, inputs[0], da)?;
                }
                Op::LayerNorm { eps } => {
                    let eps = *eps;
                    let x = nodes[inputs[0]].value.clone();
                    let gain = nodes[inputs[1]].value.clone();
                    let (n, d) = x.dims2("layer_norm backward")?;
                    let inv_d = T::one() / T::from_f64_lossy(d as f64);
                    let mut dx = Tensor::zeros(&[n, d]);
                    let mut dgain = vec![T::zero(); d];
                    let mut dbias = vec![T::zero(); d];
                    for r in 0..n {
                        let row = x.row(r);
                        let mu = row.iter().copied().sum::<T>() * inv_d;
                        let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() * inv_d;
                        let inv_std = T::one() / (var + eps).sqrt();
                        let xhat: Vec<T> = row.iter().map(|&v| (v - mu) * inv_std).collect();
                        let mut mean_dxhat = T::zero();
                        let mut mean_dxhat_xhat = T::zero();
                        let dxhat: Vec<T> = (0..d)
                            .map(|c| grad.at(r, c) * gain.data()[c])
                            .collect();
                        for c in 0..d {
                            mean_dxhat += dxhat[c];
                            mean_dxhat_xhat += dxhat[c] * xhat[c];
                            dgain[c] += grad.at(r, c) * xhat[c];
                            dbias[c] += grad.at(r, c);
                        }
                        mean_dxhat *= inv_d;
                        mean_dxhat_xhat *= inv_d;
                        for c in 0..d {
                            *dx.at_mut(r, c) =
                                inv_std * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
                        }
                    }
                    if nodes[inputs[0]].needs_grad {
                        accumulate(&mut nodes, inputs[0], dx)?;
                    }
                    if nodes[inputs[1]].needs_grad {
                        accumulate(&mut nodes, inputs[1], Tensor::vector(dgain))?;
                    }
                    if nodes[inputs[2]].needs_grad {
                        accumulate(&mut nodes, inputs[2], Tensor::vector(dbias))?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(
    nodes: &mut [Node<T>],
    id: usize,
    delta: Tensor<T>,
) -> Result<(), NumError> {
    if !nodes[id].needs_grad {
        return Ok(());
    }
    match &mut nodes[id].grad {
        Some(g) => {
            *g = g.add(&delta)?;
        }
        slot @ None => *slot = Some(delta),
    }
    Ok(())
}

fn softmax_backward<T: Scalar>(
    y: &Tensor<T>,
    grad: &Tensor<T>,
    axis: usize,
) -> Result<Tensor<T>, NumError> {
    // dz_i = y_i * (g_i - sum_j g_j y_j) along the softmax axis
    match y.rank() {
        1 => {
            let dot: T = y
                .data()
                .iter()
                .zip(grad.data())
                .map(|(&yv, &g)| yv * g)
                .sum();
            Ok(Tensor::vector(
                y.data()
                    .iter()
                    .zip(grad.data())
                    .map(|(&yv, &g)| yv * (g - dot))
                    .collect(),
            ))
        }
        2 => {
            let (n, m) = y.dims2("softmax backward")?;
            let mut out = Tensor::zeros(&[n, m]);
            match axis {
                1 => {
                    for i in 0..n {
                        let mut dot = T::zero();
                        for j in 0..m {
                            dot += y.at(i, j) * grad.at(i, j);
                        }
                        for j in 0..m {
                            *out.at_mut(i, j) = y.at(i, j) * (grad.at(i, j) - dot);
                        }
                    }
                }
                0 => {
                    for j in 0..m {
                        let mut dot = T::zero();
                        for i in 0..n {
                            dot += y.at(i, j) * grad.at(i, j);
                        }
                        for i in 0..n {
                            *out.at_mut(i, j) = y.at(i, j) * (grad.at(i, j) - dot);
                        }
                    }
                }
                _ => unreachable!(),
            }
            Ok(out)
        }
        _ => unreachable!(),
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Tensor<T> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn grad(&self) -> Option<Tensor<T>> {
        self.tape.nodes.borrow()[self.id].grad.clone()
    }

    fn same_tape(&self, other: &Var<'t, T>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "vars from different tapes"
        );
    }

    pub fn matmul(self, rhs: Var<'t, T>) -> Result<Var<'t, T>, NumError> {
        self.same_tape(&rhs);
        let value = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id].value.matmul(&nodes[rhs.id].value)?
        };
        Ok(self.tape.binary(self, rhs, value, Op::Matmul))
    }

    pub fn transpose(self) -> Result<Var<'t, T>, NumError> {
        let value = self.tape.nodes.borrow()[self.id].value.transpose()?;
        Ok(self.tape.unary(self, value, Op::Transpose))
    }

    pub fn add(self, rhs: Var<'t, T>) -> Result<Var<'t, T>, NumError> {
        self.same_tape(&rhs);
        let value = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id].value.add(&nodes[rhs.id].value)?
        };
        Ok(self.tape.binary(self, rhs, value, Op::Add))
    }

    pub fn add_row(self, bias: Var<'t, T>) -> Result<Var<'t, T>, NumError> {
        self.same_tape(&bias);
        let value = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id].value.add_row(&nodes[bias.id].value)?
        };
        Ok(self.tape.binary(self, bias, value, Op::AddRow))
    }

    pub fn mul(self, rhs: Var<'t, T>) -> Result<Var<'t, T>, NumError> {
        self.same_tape(&rhs);
        let value = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id].value.mul(&nodes[rhs.id].value)?
        };
        Ok(self.tape.binary(self, rhs, value, Op::Mul))
    }

    pub fn scale(self, c: T) -> Var<'t, T> {
        let value = self.tape.nodes.borrow()[self.id].value.scale(c);
        self.tape.unary(self, value, Op::Scale(c))
    }

    pub fn relu(self) -> Var<'t, T> {
        let value = self.tape.nodes.borrow()[self.id].value.relu();
        self.tape.unary(self, value, Op::Relu)
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t, T>, NumError> {
        let (value, from) = {
            let nodes = self.tape.nodes.borrow();
            let from = nodes[self.id].value.shape().to_vec();
            (nodes[self.id].value.clone().reshaped(shape)?, from)
        };
        Ok(self.tape.unary(self, value, Op::Reshape { from }))
    }

    pub fn mean_axis0(self) -> Result<Var<'t, T>, NumError> {
        let value = self.tape.nodes.borrow()[self.id].value.mean_axis0()?;
        Ok(self.tape.unary(self, value, Op::MeanAxis0))
    }

    pub fn sum_all(self) -> Var<'t, T> {
        let value = self.tape.nodes.borrow()[self.id].value.sum_all();
        self.tape.unary(self, value, Op::SumAll)
    }

    pub fn softmax(self, axis: usize) -> Result<Var<'t, T>, NumError> {
        let value = self.tape.nodes.borrow()[self.id].value.softmax(axis)?;
        Ok(self.tape.unary(self, value, Op::Softmax { axis }))
    }

    pub fn masked_softmax(self, mask: Rc<BoolMat>) -> Result<Var<'t, T>, NumError> {
        let value = self.tape.nodes.borrow()[self.id].value.masked_softmax(&mask)?;
        Ok(self.tape.unary(self, value, Op::MaskedSoftmax { mask }))
    }

    /// `self` is the `[V, d]` table; gathers one row per id.
    pub fn embedding(self, ids: &[usize]) -> Result<Var<'t, T>, NumError> {
        let value = self.tape.nodes.borrow()[self.id].value.embedding_rows(ids)?;
        Ok(self
            .tape
            .unary(self, value, Op::Embedding { ids: ids.to_vec() }))
    }

    /// `self` is row-wise logits `[n, V]`; mean cross-entropy against targets.
    pub fn cross_entropy_mean(self, targets: &[usize]) -> Result<Var<'t, T>, NumError> {
        let value = self.tape.nodes.borrow()[self.id]
            .value
            .cross_entropy_mean(targets)?;
        Ok(self.tape.unary(
            self,
            value,
            Op::CrossEntropy {
                targets: targets.to_vec(),
            },
        ))
    }

    pub fn layer_norm(
        self,
        gain: Var<'t, T>,
        bias: Var<'t, T>,
        eps: T,
    ) -> Result<Var<'t, T>, NumError> {
        self.same_tape(&gain);
        self.same_tape(&bias);
        let value = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id]
                .value
                .layer_norm(&nodes[gain.id].value, &nodes[bias.id].value, eps)?
        };
        let needs = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id].needs_grad || nodes[gain.id].needs_grad || nodes[bias.id].needs_grad
        };
        let id = self.tape.push(
            value,
            Op::LayerNorm { eps },
            vec![self.id, gain.id, bias.id],
            needs,
        );
        Ok(Var { tape: self.tape, id })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type T64 = Tensor<f64>;

    #[test]
    fn backward_add_gives_ones() {
        let tape: Tape<f64> = Tape::new();
        let a = tape.trainable(T64::vector(vec![1.0, 2.0]));
        let b = tape.trainable(T64::vector(vec![3.0, 4.0]));
        let loss = a.add(b).unwrap().sum_all();
        tape.backward(loss).unwrap();
        assert_eq!(a.grad().unwrap().data(), &[1.0, 1.0]);
        assert_eq!(b.grad().unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn backward_matmul_matches_hand_derivation() {
        // loss = sum(A @ B) with A = [[1, 2]], B = [[3], [4]]
        // dA = [[3, 4]], dB = [[1], [2]]
        let tape: Tape<f64> = Tape::new();
        let a = tape.trainable(T64::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let b = tape.trainable(T64::matrix(2, 1, vec![3.0, 4.0]).unwrap());
        let loss = a.matmul(b).unwrap().sum_all();
        tape.backward(loss).unwrap();
        assert_eq!(a.grad().unwrap().data(), &[3.0, 4.0]);
        assert_eq!(b.grad().unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let tape: Tape<f64> = Tape::new();
        let a = tape.trainable(T64::vector(vec![1.0, 2.0]));
        assert!(tape.backward(a).is_err());
    }

    #[test]
    fn constants_accumulate_no_grad() {
        let tape: Tape<f64> = Tape::new();
        let a = tape.constant(T64::vector(vec![1.0, 2.0]));
        let b = tape.trainable(T64::vector(vec![3.0, 4.0]));
        let loss = a.mul(b).unwrap().sum_all();
        tape.backward(loss).unwrap();
        assert!(a.grad().is_none());
        assert_eq!(b.grad().unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn embedding_scatters_gradient() {
        let tape: Tape<f64> = Tape::new();
        let table = tape.trainable(T64::matrix(3, 2, vec![0.0; 6]).unwrap());
        let rows = table.embedding(&[1, 1, 2]).unwrap();
        let loss = rows.sum_all();
        tape.backward(loss).unwrap();
        let g = table.grad().unwrap();
        assert_eq!(g.row(0), &[0.0, 0.0]);
        assert_eq!(g.row(1), &[2.0, 2.0]);
        assert_eq!(g.row(2), &[1.0, 1.0]);
    }

    #[test]
    fn relu_margin_reports_smallest_input() {
        let tape: Tape<f64> = Tape::new();
        let a = tape.trainable(T64::vector(vec![-0.5, 0.25, 3.0]));
        let _ = a.relu();
        assert_eq!(tape.relu_margin(), Some(0.25));
    }
}
