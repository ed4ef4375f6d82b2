//! Reverse-mode automatic differentiation on a linear tape.
//!
//! Every operation appends a node holding its output value and the rule that
//! maps the output adjoint back to its inputs. Inputs always precede outputs on
//! the tape, so a single reverse sweep visits nodes in a valid order.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{gelu_derivative, gemm_nt, gemm_tn, split_axis, MatmulDims, ReduceKind, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule for operations defined outside this module.
///
/// `backward` returns one adjoint per input, each shaped like that input.
pub trait BackwardRule<T: Scalar> {
    fn name(&self) -> &'static str;

    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad_out: &[T]) -> Vec<Vec<T>>;
}

enum Op<T: Scalar> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Gelu(Var),
    AddRow(Var, Var),
    Reduce { x: Var, axis: usize, kind: ReduceKind, argmax: Vec<usize> },
    Custom { inputs: Vec<Var>, rule: Box<dyn BackwardRule<T>> },
}

impl<T: Scalar> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) => vec![*a, *b],
            Op::Transpose(x) | Op::Reshape(x) | Op::Scale(x, _) | Op::Gelu(x) => vec![*x],
            Op::Reduce { x, .. } => vec![*x],
            Op::Custom { inputs, .. } => inputs.clone(),
        }
    }
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Recording of one forward computation.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    check_finite: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), check_finite: false }
    }

    /// Fail any operation whose output contains NaN or infinity.
    pub fn set_check_finite(&mut self, on: bool) {
        self.check_finite = on;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad
    }

    pub fn zero_grads(&mut self) {
        self.nodes.iter_mut().for_each(|n| n.value.zero_grad());
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, mut value: Tensor<T>) -> Var {
        value.requires_grad = false;
        self.leaf(value)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value.with_grad())
    }

    fn push(&mut self, mut value: Tensor<T>, op: Op<T>) -> Result<Var> {
        if self.check_finite {
            value.check_finite(op_name(&op))?;
        }
        value.requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].value.requires_grad);
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::MatMul(a, b))
    }

    pub fn transpose_last2(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).transpose_last2()?;
        self.push(out, Op::Transpose(x))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        self.push(out, Op::Reshape(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).mul(self.value(b))?;
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var> {
        let out = self.value(x).scale(factor);
        self.push(out, Op::Scale(x, factor))
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).gelu();
        self.push(out, Op::Gelu(x))
    }

    /// Broadcast-adds a rank-1 `row` along the last axis of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let out = self.value(x).add_row(self.value(row))?;
        self.push(out, Op::AddRow(x, row))
    }

    pub fn reduce(&mut self, x: Var, axis: usize, kind: ReduceKind) -> Result<Var> {
        let (out, argmax) = self.value(x).reduce_with_argmax(axis, kind)?;
        self.push(out, Op::Reduce { x, axis, kind, argmax })
    }

    /// `x · w + b` over the last axis of `x`; `w` is `[in, out]`, `b` is `[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let h = self.matmul(x, w)?;
        self.add_row(h, b)
    }

    /// Records an operation whose value was computed by the caller.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor<T>, rule: Box<dyn BackwardRule<T>>) -> Result<Var> {
        self.push(value, Op::Custom { inputs: inputs.to_vec(), rule })
    }

    /// Propagates d(loss)/d(node) to every node that requires a gradient and
    /// adds it to the node's gradient slot.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape();
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!("backward needs a scalar loss, got shape {shape:?}")));
        }
        let mut adj: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(vec![T::one()]);

        for id in (0..=loss.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.value.requires_grad {
                continue;
            }
            for (input, delta) in self.input_adjoints(id, &g) {
                if !self.nodes[input.0].value.requires_grad {
                    continue;
                }
                match adj[input.0].as_mut() {
                    Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, &d)| *a += d),
                    None => adj[input.0] = Some(delta),
                }
            }
            self.nodes[id].value.accumulate_grad(&g);
        }
        Ok(())
    }

    fn input_adjoints(&self, id: usize, g: &[T]) -> Vec<(Var, Vec<T>)> {
        let node = &self.nodes[id];
        let val = |v: &Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let (av, bv) = (val(a), val(b));
                let d = MatmulDims::infer(av.shape(), bv.shape()).expect("shapes checked in forward");
                let mut ga = vec![T::zero(); av.len()];
                let mut gb = vec![T::zero(); bv.len()];
                for bi in 0..d.batch {
                    let (mk, kn, mn) = (d.m * d.k, d.k * d.n, d.m * d.n);
                    let boff = if d.broadcast_b { 0 } else { bi * kn };
                    let gs = &g[bi * mn..(bi + 1) * mn];
                    gemm_nt(gs, &bv.data()[boff..boff + kn], &mut ga[bi * mk..(bi + 1) * mk], d.m, d.k, d.n);
                    gemm_tn(&av.data()[bi * mk..(bi + 1) * mk], gs, &mut gb[boff..boff + kn], d.m, d.k, d.n);
                }
                vec![(*a, ga), (*b, gb)]
            }
            Op::Transpose(x) => {
                let s = node.value.shape();
                let (r0, r1) = (s[s.len() - 2], s[s.len() - 1]);
                let mut out = vec![T::zero(); g.len()];
                crate::tensor::transpose_batched(g, &mut out, r0, r1);
                vec![(*x, out)]
            }
            Op::Reshape(x) => vec![(*x, g.to_vec())],
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Sub(a, b) => vec![(*a, g.to_vec()), (*b, g.iter().map(|&v| -v).collect())],
            Op::Mul(a, b) => {
                let (av, bv) = (val(a).data(), val(b).data());
                vec![
                    (*a, g.iter().zip(bv).map(|(&g, &y)| g * y).collect()),
                    (*b, g.iter().zip(av).map(|(&g, &x)| g * x).collect()),
                ]
            }
            Op::Scale(x, f) => vec![(*x, g.iter().map(|&v| v * *f).collect())],
            Op::Gelu(x) => {
                let xv = val(x).data();
                vec![(*x, g.iter().zip(xv).map(|(&g, &x)| g * gelu_derivative(x)).collect())]
            }
            Op::AddRow(x, row) => {
                let d = val(row).len();
                let mut grow = vec![T::zero(); d];
                for chunk in g.chunks(d) {
                    grow.iter_mut().zip(chunk).for_each(|(a, &v)| *a += v);
                }
                vec![(*x, g.to_vec()), (*row, grow)]
            }
            Op::Reduce { x, axis, kind, argmax } => {
                let xs = val(x).shape();
                let (outer, len, inner) = split_axis(xs, *axis);
                let mut out = vec![T::zero(); val(x).len()];
                let inv = T::one() / T::from_usize_lossy(len);
                for o in 0..outer {
                    for i in 0..inner {
                        let gv = g[o * inner + i];
                        match kind {
                            ReduceKind::Sum | ReduceKind::Mean => {
                                let gv = if *kind == ReduceKind::Mean { gv * inv } else { gv };
                                for j in 0..len {
                                    out[(o * len + j) * inner + i] = gv;
                                }
                            }
                            ReduceKind::Max => {
                                let j = argmax[o * inner + i];
                                out[(o * len + j) * inner + i] = gv;
                            }
                        }
                    }
                }
                vec![(*x, out)]
            }
            Op::Custom { inputs, rule } => {
                let ins: Vec<&Tensor<T>> = inputs.iter().map(val).collect();
                let grads = rule.backward(&ins, &node.value, g);
                debug_assert_eq!(grads.len(), inputs.len(), "{} returned wrong arity", rule.name());
                inputs.iter().copied().zip(grads).collect()
            }
        }
    }
}

fn op_name<T: Scalar>(op: &Op<T>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::Transpose(_) => "transpose_last2",
        Op::Reshape(_) => "reshape",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::Gelu(_) => "gelu",
        Op::AddRow(..) => "add_row",
        Op::Reduce { .. } => "reduce",
        Op::Custom { rule, .. } => rule.name(),
    }
}
