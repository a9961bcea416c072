//! Minimal reverse-mode tape over [`Tensor`] values.
//!
//! Forward values are computed eagerly as nodes are pushed; `backward`
//! walks the tape once in reverse. Every layer in the crate builds its
//! graph on a fresh tape per batch, so node indices stay small and the
//! whole tape is dropped after the optimizer step.

use super::tensor::{matmul, softmax, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var),
    /// [m,n] + broadcast of [1,n] over rows.
    AddRowBroadcast(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var, usize),
    SquashRows(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    GatherRows(Var, Vec<usize>),
    Transpose(Var),
    Reshape(Var),
    MeanRows(Var),
    /// Elementwise product with a constant mask (no gradient to the mask).
    MulMask(Var, Tensor),
    /// -log softmax(logits)[label] for a [1,C] logits row.
    CrossEntropyFromLogits(Var, usize),
}

struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Tensor>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
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

    /// Gradient of the last `backward` target w.r.t. `v`.
    pub fn grad(&self, v: Var) -> &Tensor {
        &self.grads[v.0]
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = matmul(self.value(a), self.value(b)).expect("tape matmul shapes");
        self.push(Op::Matmul(a, b), value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        self.push(Op::Add(a, b), value)
    }

    pub fn add_row_broadcast(&mut self, a: Var, bias: Var) -> Var {
        let x = self.value(a);
        let b = self.value(bias);
        assert_eq!(b.shape(), &[1, x.cols()], "bias must be [1,n]");
        let (m, n) = (x.rows(), x.cols());
        let mut value = x.clone();
        for i in 0..m {
            for j in 0..n {
                let v = value.at2(i, j) + b.at2(0, j);
                value.set2(i, j, v);
            }
        }
        self.push(Op::AddRowBroadcast(a, bias), value)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let x = self.value(a);
        let y = self.value(b);
        assert_eq!(x.shape(), y.shape());
        let data: Vec<f64> = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let value = Tensor::new(x.shape().to_vec(), data);
        self.push(Op::Mul(a, b), value)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let x = self.value(a);
        let value = Tensor::new(x.shape().to_vec(), x.data().iter().map(|v| v * k).collect());
        self.push(Op::Scale(a, k), value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let value = Tensor::new(
            x.shape().to_vec(),
            x.data().iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect(),
        );
        self.push(Op::Sigmoid(a), value)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let value = Tensor::new(x.shape().to_vec(), x.data().iter().map(|v| v.tanh()).collect());
        self.push(Op::Tanh(a), value)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let value = Tensor::new(x.shape().to_vec(), x.data().iter().map(|v| v.max(0.0)).collect());
        self.push(Op::Relu(a), value)
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Var {
        let value = softmax(self.value(a), axis);
        self.push(Op::Softmax(a, axis), value)
    }

    /// Squash nonlinearity applied to every row of a rank-2 tensor:
    /// g(s) = (|s|^2 / (1 + |s|^2)) * s / |s|.
    pub fn squash_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let (m, n) = (x.rows(), x.cols());
        let mut value = x.clone();
        for i in 0..m {
            let row = x.row(i);
            let n2: f64 = row.iter().map(|v| v * v).sum();
            let alpha = if n2 < SQUASH_EPS { 0.0 } else { n2.sqrt() / (1.0 + n2) };
            for j in 0..n {
                value.set2(i, j, row[j] * alpha);
            }
        }
        self.push(Op::SquashRows(a), value)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let n = self.value(parts[0]).cols();
        let m: usize = parts.iter().map(|p| self.value(*p).rows()).sum();
        let mut data = Vec::with_capacity(m * n);
        for p in parts {
            let t = self.value(*p);
            assert_eq!(t.cols(), n);
            data.extend_from_slice(t.data());
        }
        self.push(Op::ConcatRows(parts.to_vec()), Tensor::new(vec![m, n], data))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let m = self.value(parts[0]).rows();
        let n: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut value = Tensor::zeros(&[m, n]);
        let mut off = 0;
        for p in parts {
            let t = self.value(*p);
            assert_eq!(t.rows(), m);
            for i in 0..m {
                for j in 0..t.cols() {
                    value.set2(i, off + j, t.at2(i, j));
                }
            }
            off += t.cols();
        }
        self.push(Op::ConcatCols(parts.to_vec()), value)
    }

    pub fn slice_cols(&mut self, a: Var, c0: usize, c1: usize) -> Var {
        let x = self.value(a);
        let m = x.rows();
        let mut value = Tensor::zeros(&[m, c1 - c0]);
        for i in 0..m {
            for j in c0..c1 {
                value.set2(i, j - c0, x.at2(i, j));
            }
        }
        self.push(Op::SliceCols(a, c0, c1), value)
    }

    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Var {
        let x = self.value(a);
        let n = x.cols();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(x.row(i));
        }
        self.push(
            Op::GatherRows(a, indices.to_vec()),
            Tensor::new(vec![indices.len(), n], data),
        )
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(Op::Transpose(a), value)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let value = self.value(a).reshape(shape);
        self.push(Op::Reshape(a), value)
    }

    /// Mean over rows: [m,n] -> [1,n].
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let (m, n) = (x.rows(), x.cols());
        let mut value = Tensor::zeros(&[1, n]);
        for i in 0..m {
            for j in 0..n {
                let v = value.at2(0, j) + x.at2(i, j) / m as f64;
                value.set2(0, j, v);
            }
        }
        self.push(Op::MeanRows(a), value)
    }

    pub fn mul_mask(&mut self, a: Var, mask: Tensor) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape(), mask.shape());
        let data: Vec<f64> = x.data().iter().zip(mask.data()).map(|(p, q)| p * q).collect();
        let value = Tensor::new(x.shape().to_vec(), data);
        self.push(Op::MulMask(a, mask), value)
    }

    /// Cross-entropy of a [1,C] logits row against an integer label.
    pub fn cross_entropy_from_logits(&mut self, logits: Var, label: usize) -> Var {
        let x = self.value(logits);
        assert_eq!(x.rows(), 1);
        let row = x.row(0);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let value = Tensor::scalar(lse - row[label]);
        self.push(Op::CrossEntropyFromLogits(logits, label), value)
    }

    /// Reverse sweep seeding d(target)/d(target) = 1.
    pub fn backward(&mut self, target: Var) {
        self.grads = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.shape()))
            .collect();
        assert_eq!(self.nodes[target.0].value.len(), 1, "backward target must be scalar");
        self.grads[target.0].data_mut()[0] = 1.0;

        for idx in (0..=target.0).rev() {
            let g = std::mem::replace(&mut self.grads[idx], Tensor::zeros(&[0]));
            if g.max_abs() == 0.0 && !matches!(self.nodes[idx].op, Op::Leaf) {
                self.grads[idx] = g;
                continue;
            }
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let (a, b) = (*a, *b);
                    let bt = self.nodes[b.0].value.transpose();
                    let at = self.nodes[a.0].value.transpose();
                    let da = matmul(&g, &bt).unwrap();
                    let db = matmul(&at, &g).unwrap();
                    self.grads[a.0].add_assign(&da);
                    self.grads[b.0].add_assign(&db);
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    self.grads[a.0].add_assign(&g);
                    self.grads[b.0].add_assign(&g);
                }
                Op::AddRowBroadcast(a, bias) => {
                    let (a, bias) = (*a, *bias);
                    self.grads[a.0].add_assign(&g);
                    let (m, n) = (g.rows(), g.cols());
                    let db = self.grads[bias.0].data_mut();
                    for i in 0..m {
                        for j in 0..n {
                            db[j] += g.at2(i, j);
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let bv = self.nodes[b.0].value.clone();
                    let av = self.nodes[a.0].value.clone();
                    for ((da, gv), bv) in self.grads[a.0].data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                        *da += gv * bv;
                    }
                    for ((db, gv), av) in self.grads[b.0].data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                        *db += gv * av;
                    }
                }
                Op::Scale(a, k) => {
                    let (a, k) = (*a, *k);
                    for (da, gv) in self.grads[a.0].data_mut().iter_mut().zip(g.data()) {
                        *da += gv * k;
                    }
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    let y = self.nodes[idx].value.clone();
                    for ((da, gv), yv) in self.grads[a.0].data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *da += gv * yv * (1.0 - yv);
                    }
                }
                Op::Tanh(a) => {
                    let a = *a;
                    let y = self.nodes[idx].value.clone();
                    for ((da, gv), yv) in self.grads[a.0].data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *da += gv * (1.0 - yv * yv);
                    }
                }
                Op::Relu(a) => {
                    let a = *a;
                    let x = self.nodes[a.0].value.clone();
                    for ((da, gv), xv) in self.grads[a.0].data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                        *da += if *xv > 0.0 { *gv } else { 0.0 };
                    }
                }
                Op::Softmax(a, axis) => {
                    let (a, axis) = (*a, *axis);
                    let y = self.nodes[idx].value.clone();
                    let da = softmax_backward(&y, &g, axis);
                    self.grads[a.0].add_assign(&da);
                }
                Op::SquashRows(a) => {
                    let a = *a;
                    let x = self.nodes[a.0].value.clone();
                    let (m, n) = (x.rows(), x.cols());
                    let mut da = Tensor::zeros(&[m, n]);
                    for i in 0..m {
                        let s = x.row(i);
                        let grow = g.row(i);
                        let n2: f64 = s.iter().map(|v| v * v).sum();
                        if n2 < SQUASH_EPS {
                            continue; // Jacobian vanishes at the origin
                        }
                        let norm = n2.sqrt();
                        let alpha = norm / (1.0 + n2);
                        // d alpha / d norm = (1 - n2) / (1 + n2)^2
                        let dalpha = (1.0 - n2) / ((1.0 + n2) * (1.0 + n2));
                        let sg: f64 = s.iter().zip(grow).map(|(sv, gv)| sv * gv).sum();
                        for j in 0..n {
                            da.set2(i, j, alpha * grow[j] + sg * dalpha / norm * s[j]);
                        }
                    }
                    self.grads[a.0].add_assign(&da);
                }
                Op::ConcatRows(parts) => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let rows = self.nodes[p.0].value.rows();
                        let n = g.cols();
                        let gp = self.grads[p.0].data_mut();
                        for i in 0..rows {
                            for j in 0..n {
                                gp[i * n + j] += g.at2(off + i, j);
                            }
                        }
                        off += rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let cols = self.nodes[p.0].value.cols();
                        let rows = g.rows();
                        let gp = self.grads[p.0].data_mut();
                        for i in 0..rows {
                            for j in 0..cols {
                                gp[i * cols + j] += g.at2(i, off + j);
                            }
                        }
                        off += cols;
                    }
                }
                Op::SliceCols(a, c0, _c1) => {
                    let (a, c0) = (*a, *c0);
                    let an = self.nodes[a.0].value.cols();
                    let (m, n) = (g.rows(), g.cols());
                    let ga = self.grads[a.0].data_mut();
                    for i in 0..m {
                        for j in 0..n {
                            ga[i * an + c0 + j] += g.at2(i, j);
                        }
                    }
                }
                Op::GatherRows(a, indices) => {
                    let (a, indices) = (*a, indices.clone());
                    let n = g.cols();
                    let ga = self.grads[a.0].data_mut();
                    for (r, &src) in indices.iter().enumerate() {
                        for j in 0..n {
                            ga[src * n + j] += g.at2(r, j);
                        }
                    }
                }
                Op::Transpose(a) => {
                    let a = *a;
                    let da = g.transpose();
                    self.grads[a.0].add_assign(&da);
                }
                Op::Reshape(a) => {
                    let a = *a;
                    let shape = self.nodes[a.0].value.shape().to_vec();
                    let da = g.reshape(shape);
                    self.grads[a.0].add_assign(&da);
                }
                Op::MeanRows(a) => {
                    let a = *a;
                    let m = self.nodes[a.0].value.rows();
                    let n = g.cols();
                    let ga = self.grads[a.0].data_mut();
                    for i in 0..m {
                        for j in 0..n {
                            ga[i * n + j] += g.at2(0, j) / m as f64;
                        }
                    }
                }
                Op::MulMask(a, mask) => {
                    let a = *a;
                    let mask = mask.clone();
                    for ((da, gv), mv) in self.grads[a.0].data_mut().iter_mut().zip(g.data()).zip(mask.data()) {
                        *da += gv * mv;
                    }
                }
                Op::CrossEntropyFromLogits(logits, label) => {
                    let (logits, label) = (*logits, *label);
                    let probs = softmax(&self.nodes[logits.0].value, 1);
                    let seed = g.data()[0];
                    let gl = self.grads[logits.0].data_mut();
                    for (j, p) in probs.data().iter().enumerate() {
                        gl[j] += seed * (p - if j == label { 1.0 } else { 0.0 });
                    }
                }
            }
            self.grads[idx] = g;
        }
    }
}

const SQUASH_EPS: f64 = 1e-30;

fn softmax_backward(y: &Tensor, g: &Tensor, axis: usize) -> Tensor {
    let (m, n) = (y.rows(), y.cols());
    let mut out = Tensor::zeros(&[m, n]);
    if axis == 1 {
        for i in 0..m {
            let dot: f64 = (0..n).map(|j| g.at2(i, j) * y.at2(i, j)).sum();
            for j in 0..n {
                out.set2(i, j, y.at2(i, j) * (g.at2(i, j) - dot));
            }
        }
    } else {
        for j in 0..n {
            let dot: f64 = (0..m).map(|i| g.at2(i, j) * y.at2(i, j)).sum();
            for i in 0..m {
                out.set2(i, j, y.at2(i, j) * (g.at2(i, j) - dot));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_gradients() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let b = tape.leaf(Tensor::from_rows(&[vec![1.0], vec![1.0]]));
        let c = tape.matmul(a, b); // [[3],[7]]
        let s = tape.mean_rows(c);
        let s = tape.reshape(s, vec![1]);
        tape.backward(s);
        // d mean / da = [[0.5, 0.5], [0.5, 0.5]] since b is ones
        for v in tape.grad(a).data() {
            assert!((v - 0.5).abs() < 1e-12);
        }
        // db = a^T * [0.5, 0.5]^T = [2, 3]
        assert!((tape.grad(b).data()[0] - 2.0).abs() < 1e-12);
        assert!((tape.grad(b).data()[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn squash_closed_form() {
        let mut tape = Tape::new();
        let s = tape.leaf(Tensor::from_rows(&[vec![3.0, 4.0]]));
        let v = tape.squash_rows(s);
        let out = tape.value(v);
        assert!((out.at2(0, 0) - 15.0 / 26.0).abs() < 1e-12);
        assert!((out.at2(0, 1) - 20.0 / 26.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_matches_softmax() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::from_rows(&[vec![0.0, 3.0f64.ln()]]));
        let loss = tape.cross_entropy_from_logits(logits, 1);
        assert!((tape.value(loss).data()[0] - (-0.75f64.ln())).abs() < 1e-12);
        tape.backward(loss);
        let g = tape.grad(logits);
        assert!((g.at2(0, 0) - 0.25).abs() < 1e-12);
        assert!((g.at2(0, 1) + 0.25).abs() < 1e-12);
    }

    #[test]
    fn grad_zero_when_disconnected() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(2.0));
        let b = tape.leaf(Tensor::scalar(5.0));
        let c = tape.scale(a, 3.0);
        tape.backward(c);
        assert_eq!(tape.grad(b).data()[0], 0.0);
        assert_eq!(tape.grad(a).data()[0], 3.0);
    }
}
