//! Reverse-mode automatic differentiation on a scalar computation tape.
//!
//! A [`Tape`] is built once per problem: the topology is fixed, while
//! [`Tape::forward`] re-evaluates it for new leaf values and
//! [`Tape::backward`] accumulates adjoints in a single reverse sweep.
//! Fitting rebuilds nothing per optimization step, which keeps the hot
//! path allocation-free.
//!
//! Kink-bearing ops (`max`, `min`) route the gradient to the *first*
//! argument on ties, the left-branch subgradient convention used by the
//! saturating baseline form.

use crate::numerics::{sigmoid, softplus};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(u32);

#[derive(Debug, Clone, Copy)]
enum Op {
    /// Leaf read from the input slot carried in the payload.
    Var(u32),
    Const(f64),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Neg(u32),
    Abs(u32),
    Exp(u32),
    Ln(u32),
    Ln1p(u32),
    Softplus(u32),
    Max(u32, u32),
    Min(u32, u32),
    /// Stable log-sum-exp over `args[start..start+len]`.
    LogSumExp { start: u32, len: u32 },
}

/// Fixed-topology scalar computation graph with value and adjoint buffers.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    ops: Vec<Op>,
    args: Vec<u32>,
    vals: Vec<f64>,
    adj: Vec<f64>,
    n_vars: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.n_vars
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, op: Op) -> NodeId {
        let id = self.ops.len() as u32;
        self.ops.push(op);
        self.vals.push(0.0);
        self.adj.push(0.0);
        NodeId(id)
    }

    /// Allocates the next input slot and returns its leaf node.
    pub fn var(&mut self) -> NodeId {
        let slot = self.n_vars as u32;
        self.n_vars += 1;
        self.push(Op::Var(slot))
    }

    pub fn constant(&mut self, v: f64) -> NodeId {
        self.push(Op::Const(v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a.0, b.0))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Div(a.0, b.0))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Neg(a.0))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Abs(a.0))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Exp(a.0))
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Ln(a.0))
    }

    pub fn ln_1p(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Ln1p(a.0))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Softplus(a.0))
    }

    pub fn max(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Max(a.0, b.0))
    }

    pub fn min(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Min(a.0, b.0))
    }

    pub fn logsumexp(&mut self, ids: &[NodeId]) -> NodeId {
        assert!(!ids.is_empty(), "logsumexp over no terms");
        let start = self.args.len() as u32;
        self.args.extend(ids.iter().map(|n| n.0));
        self.push(Op::LogSumExp {
            start,
            len: ids.len() as u32,
        })
    }

    /// Convenience: sum a slice of nodes pairwise.
    pub fn sum(&mut self, ids: &[NodeId]) -> NodeId {
        assert!(!ids.is_empty());
        let mut acc = ids[0];
        for &id in &ids[1..] {
            acc = self.add(acc, id);
        }
        acc
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let c = self.constant(factor);
        self.mul(a, c)
    }

    pub fn value(&self, id: NodeId) -> f64 {
        self.vals[id.0 as usize]
    }

    /// Re-evaluates every node given the leaf inputs (indexed by var slot).
    pub fn forward(&mut self, inputs: &[f64]) {
        debug_assert_eq!(inputs.len(), self.n_vars);
        for i in 0..self.ops.len() {
            let v = match self.ops[i] {
                Op::Var(slot) => inputs[slot as usize],
                Op::Const(c) => c,
                Op::Add(a, b) => self.vals[a as usize] + self.vals[b as usize],
                Op::Sub(a, b) => self.vals[a as usize] - self.vals[b as usize],
                Op::Mul(a, b) => self.vals[a as usize] * self.vals[b as usize],
                Op::Div(a, b) => self.vals[a as usize] / self.vals[b as usize],
                Op::Neg(a) => -self.vals[a as usize],
                Op::Abs(a) => self.vals[a as usize].abs(),
                Op::Exp(a) => self.vals[a as usize].exp(),
                Op::Ln(a) => self.vals[a as usize].ln(),
                Op::Ln1p(a) => self.vals[a as usize].ln_1p(),
                Op::Softplus(a) => softplus(self.vals[a as usize]),
                Op::Max(a, b) => {
                    let (x, y) = (self.vals[a as usize], self.vals[b as usize]);
                    if x >= y {
                        x
                    } else {
                        y
                    }
                }
                Op::Min(a, b) => {
                    let (x, y) = (self.vals[a as usize], self.vals[b as usize]);
                    if x <= y {
                        x
                    } else {
                        y
                    }
                }
                Op::LogSumExp { start, len } => {
                    let slice = &self.args[start as usize..(start + len) as usize];
                    let m = slice
                        .iter()
                        .map(|&a| self.vals[a as usize])
                        .fold(f64::NEG_INFINITY, f64::max);
                    if m == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        let s: f64 = slice
                            .iter()
                            .map(|&a| (self.vals[a as usize] - m).exp())
                            .sum();
                        m + s.ln()
                    }
                }
            };
            self.vals[i] = v;
        }
    }

    /// Single reverse sweep seeding the adjoint of `output` with 1.
    /// Writes `d output / d input_slot` into `grad` (which must have
    /// `num_vars` entries). Call [`Tape::forward`] first.
    pub fn backward(&mut self, output: NodeId, grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.n_vars);
        for g in grad.iter_mut() {
            *g = 0.0;
        }
        for a in self.adj.iter_mut() {
            *a = 0.0;
        }
        self.adj[output.0 as usize] = 1.0;
        for i in (0..self.ops.len()).rev() {
            let w = self.adj[i];
            if w == 0.0 {
                continue;
            }
            match self.ops[i] {
                Op::Var(slot) => grad[slot as usize] += w,
                Op::Const(_) => {}
                Op::Add(a, b) => {
                    self.adj[a as usize] += w;
                    self.adj[b as usize] += w;
                }
                Op::Sub(a, b) => {
                    self.adj[a as usize] += w;
                    self.adj[b as usize] -= w;
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.vals[a as usize], self.vals[b as usize]);
                    self.adj[a as usize] += w * y;
                    self.adj[b as usize] += w * x;
                }
                Op::Div(a, b) => {
                    let (x, y) = (self.vals[a as usize], self.vals[b as usize]);
                    self.adj[a as usize] += w / y;
                    self.adj[b as usize] -= w * x / (y * y);
                }
                Op::Neg(a) => self.adj[a as usize] -= w,
                Op::Abs(a) => {
                    let s = if self.vals[a as usize] >= 0.0 { 1.0 } else { -1.0 };
                    self.adj[a as usize] += w * s;
                }
                Op::Exp(a) => self.adj[a as usize] += w * self.vals[i],
                Op::Ln(a) => self.adj[a as usize] += w / self.vals[a as usize],
                Op::Ln1p(a) => self.adj[a as usize] += w / (1.0 + self.vals[a as usize]),
                Op::Softplus(a) => self.adj[a as usize] += w * sigmoid(self.vals[a as usize]),
                Op::Max(a, b) => {
                    if self.vals[a as usize] >= self.vals[b as usize] {
                        self.adj[a as usize] += w;
                    } else {
                        self.adj[b as usize] += w;
                    }
                }
                Op::Min(a, b) => {
                    if self.vals[a as usize] <= self.vals[b as usize] {
                        self.adj[a as usize] += w;
                    } else {
                        self.adj[b as usize] += w;
                    }
                }
                Op::LogSumExp { start, len } => {
                    let out = self.vals[i];
                    if out == f64::NEG_INFINITY {
                        continue;
                    }
                    for k in start as usize..(start + len) as usize {
                        let a = self.args[k] as usize;
                        self.adj[a] += w * (self.vals[a] - out).exp();
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
        let h = 1e-6 * x[i].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut tape = Tape::new();
        let a = tape.var();
        let b = tape.var();
        let c = tape.var();
        let p = tape.mul(a, b);
        let s = tape.softplus(p);
        let l = tape.ln(c);
        let q = tape.div(s, l);
        let e = tape.exp(b);
        let out = tape.logsumexp(&[q, e, p]);

        let x = [0.7, -0.3, 2.5];
        tape.forward(&x);
        let mut grad = vec![0.0; 3];
        tape.backward(out, &mut grad);

        let mut f = |x: &[f64]| {
            let p = x[0] * x[1];
            let q = softplus(p) / x[2].ln();
            crate::numerics::logsumexp(&[q, x[1].exp(), p])
        };
        for i in 0..3 {
            let fd = central_diff(&mut f, &x, i);
            assert!(
                (grad[i] - fd).abs() <= 1e-7 * grad[i].abs().max(1.0),
                "grad[{i}] = {} vs fd {}",
                grad[i],
                fd
            );
        }
    }

    #[test]
    fn max_min_take_left_branch_on_ties() {
        let mut tape = Tape::new();
        let a = tape.var();
        let b = tape.var();
        let m = tape.max(a, b);
        let n = tape.min(a, b);
        let out = tape.add(m, n);
        tape.forward(&[1.0, 1.0]);
        let mut grad = vec![0.0; 2];
        tape.backward(out, &mut grad);
        assert_eq!(grad, vec![2.0, 0.0]);
    }

    #[test]
    fn forward_is_repeatable_with_new_inputs() {
        let mut tape = Tape::new();
        let a = tape.var();
        let out = tape.softplus(a);
        tape.forward(&[0.0]);
        let first = tape.value(out);
        tape.forward(&[3.0]);
        assert!((tape.value(out) - softplus(3.0)).abs() < 1e-15);
        tape.forward(&[0.0]);
        assert_eq!(tape.value(out), first);
    }
}
