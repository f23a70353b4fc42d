//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every op records its inputs; `backward` walks the tape once in reverse
//! and applies the hand-written adjoint of each op.

use std::collections::HashMap;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Square(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    StackRows(Vec<Var>),
    Row(Var, usize),
    Transpose(Var),
    Sum(Var),
    Pick(Var, usize),
    Select(Vec<Var>, usize),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor2,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

fn softmax_values(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
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

    fn push(&mut self, value: Tensor2, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).item()
    }

    pub fn constant(&mut self, t: Tensor2) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn column(&mut self, data: Vec<f64>) -> Var {
        self.constant(Tensor2::column(data))
    }

    /// Binds a parameter, reusing the node if it is already on the tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Param(id));
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddConst(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    /// Softmax over all entries of `a`, keeping its shape.
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = Tensor2::new(t.rows, t.cols, softmax_values(&t.data));
        self.push(v, Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + t.data.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        let v = t.map(|x| x - lse);
        self.push(v, Op::LogSoftmax(a))
    }

    /// Vertical concatenation; all parts must share a column count.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols, cols, "concat column mismatch");
            rows += t.rows;
            data.extend_from_slice(&t.data);
        }
        self.push(Tensor2::new(rows, cols, data), Op::Concat(parts.to_vec()))
    }

    /// Rows `start..start + len` of `a`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        assert!(start + len <= t.rows, "slice out of range");
        let data = t.data[start * t.cols..(start + len) * t.cols].to_vec();
        let v = Tensor2::new(len, t.cols, data);
        self.push(v, Op::Slice(a, start))
    }

    /// Stacks `d x 1` columns as the rows of an `n x d` matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Var {
        let d = self.value(rows[0]).len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            let t = self.value(r);
            assert_eq!(t.len(), d, "stack_rows length mismatch");
            data.extend_from_slice(&t.data);
        }
        self.push(Tensor2::new(rows.len(), d, data), Op::StackRows(rows.to_vec()))
    }

    /// Row `i` of `a` as a column vector.
    pub fn row(&mut self, a: Var, i: usize) -> Var {
        let v = Tensor2::column(self.value(a).row(i).to_vec());
        self.push(v, Op::Row(a, i))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor2::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// Entry `i` (row-major) of `a` as a scalar.
    pub fn pick(&mut self, a: Var, i: usize) -> Var {
        let v = Tensor2::scalar(self.value(a).data[i]);
        self.push(v, Op::Pick(a, i))
    }

    /// Elementwise max over same-shaped tensors, resolved to the single
    /// operand with the largest sum (ties: first). Used for scalars.
    pub fn max_of(&mut self, xs: &[Var]) -> Var {
        let mut best = 0;
        for (i, &x) in xs.iter().enumerate() {
            if self.value(x).sum() > self.value(xs[best]).sum() {
                best = i;
            }
        }
        let v = self.value(xs[best]).clone();
        self.push(v, Op::Select(xs.to_vec(), best))
    }

    pub fn sum_all(&mut self, xs: &[Var]) -> Var {
        let mut acc = xs[0];
        for &x in &xs[1..] {
            acc = self.add(acc, x);
        }
        acc
    }

    /// Reverse sweep from the scalar `out`; returns parameter gradients.
    pub fn backward(&self, out: Var, store: &ParamStore) -> Gradients {
        let mut grads = Gradients::zeros_like(store);
        self.backward_into(out, &mut grads);
        grads
    }

    pub fn backward_into(&self, out: Var, grads: &mut Gradients) {
        assert_eq!(self.value(out).len(), 1, "backward needs a scalar output");
        let mut adj: Vec<Option<Tensor2>> = vec![None; out.0 + 1];
        adj[out.0] = Some(Tensor2::scalar(1.0));

        fn acc(adj: &mut [Option<Tensor2>], v: Var, g: Tensor2) {
            match &mut adj[v.0] {
                Some(t) => t.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for i in (0..=out.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            let y = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => grads.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut adj, *a, g.matmul(&bv.transpose()));
                    acc(&mut adj, *b, av.transpose().matmul(&g));
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *a, g.clone());
                    acc(&mut adj, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut adj, *b, g.scale(-1.0));
                    acc(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    acc(&mut adj, *a, g.zip_map(self.value(*b), |d, x| d * x));
                    acc(&mut adj, *b, g.zip_map(self.value(*a), |d, x| d * x));
                }
                Op::Scale(a, s) => acc(&mut adj, *a, g.scale(*s)),
                Op::AddConst(a) => acc(&mut adj, *a, g),
                Op::Tanh(a) => acc(&mut adj, *a, g.zip_map(y, |d, t| d * (1.0 - t * t))),
                Op::Sigmoid(a) => acc(&mut adj, *a, g.zip_map(y, |d, s| d * s * (1.0 - s))),
                Op::Relu(a) => {
                    acc(&mut adj, *a, g.zip_map(self.value(*a), |d, x| if x > 0.0 { d } else { 0.0 }))
                }
                Op::Square(a) => acc(&mut adj, *a, g.zip_map(self.value(*a), |d, x| 2.0 * d * x)),
                Op::Softmax(a) => {
                    let dot: f64 = g.data.iter().zip(&y.data).map(|(d, s)| d * s).sum();
                    acc(&mut adj, *a, g.zip_map(y, |d, s| s * (d - dot)));
                }
                Op::LogSoftmax(a) => {
                    let total = g.sum();
                    acc(&mut adj, *a, g.zip_map(y, |d, l| d - l.exp() * total));
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        let t = self.value(p);
                        acc(
                            &mut adj,
                            p,
                            Tensor2::new(t.rows, t.cols, g.data[offset..offset + n].to_vec()),
                        );
                        offset += n;
                    }
                }
                Op::Slice(a, start) => {
                    let t = self.value(*a);
                    let mut full = Tensor2::zeros(t.rows, t.cols);
                    let off = start * t.cols;
                    full.data[off..off + g.len()].copy_from_slice(&g.data);
                    acc(&mut adj, *a, full);
                }
                Op::StackRows(rows) => {
                    let d = g.cols;
                    for (r, &v) in rows.iter().enumerate() {
                        let t = self.value(v);
                        acc(
                            &mut adj,
                            v,
                            Tensor2::new(t.rows, t.cols, g.data[r * d..(r + 1) * d].to_vec()),
                        );
                    }
                }
                Op::Row(a, r) => {
                    let t = self.value(*a);
                    let mut full = Tensor2::zeros(t.rows, t.cols);
                    full.data[r * t.cols..(r + 1) * t.cols].copy_from_slice(&g.data);
                    acc(&mut adj, *a, full);
                }
                Op::Transpose(a) => acc(&mut adj, *a, g.transpose()),
                Op::Sum(a) => {
                    let t = self.value(*a);
                    let d = g.item();
                    acc(&mut adj, *a, Tensor2::new(t.rows, t.cols, vec![d; t.len()]));
                }
                Op::Pick(a, idx) => {
                    let t = self.value(*a);
                    let mut full = Tensor2::zeros(t.rows, t.cols);
                    full.data[*idx] = g.item();
                    acc(&mut adj, *a, full);
                }
                Op::Select(xs, best) => acc(&mut adj, xs[*best], g),
            }
        }
    }
}
