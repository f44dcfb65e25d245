use std::collections::HashMap;

use rand::Rng;

use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    MatVec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize),
    Row(NodeId, usize),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Mask(NodeId, Vec<f64>),
    Sum(Vec<NodeId>),
    SoftmaxXent(NodeId, usize, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    rows: usize,
    cols: usize,
    op: Op,
}

/// Records a computation for one forward pass and replays it backwards.
///
/// Nodes are appended in evaluation order, so the index order is a
/// topological order and the backward pass is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
    params: HashMap<ParamId, NodeId>,
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
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

    fn push(&mut self, value: Vec<f64>, rows: usize, cols: usize, op: Op) -> NodeId {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            value,
            rows,
            cols,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[0]
    }

    /// Gradient of the last `backward` root with respect to `id`.
    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn constant(&mut self, value: Vec<f64>) -> NodeId {
        let n = value.len();
        self.push(value, n, 1, Op::Constant)
    }

    pub fn constant_matrix(&mut self, value: Vec<f64>, rows: usize, cols: usize) -> NodeId {
        assert_eq!(value.len(), rows * cols, "matrix payload does not match shape");
        self.push(value, rows, cols, Op::Constant)
    }

    /// Trainable leaf. A parameter is copied onto the tape once; repeated
    /// calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&node) = self.params.get(&id) {
            return node;
        }
        let p = store.get(id);
        let node = self.push(p.value.clone(), p.rows, p.cols, Op::Param);
        self.params.insert(id, node);
        node
    }

    fn vec_len(&self, id: NodeId) -> usize {
        self.nodes[id.0].value.len()
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.shape(w);
        let (xr, xc) = self.shape(x);
        if xc != 1 || xr != cols {
            return Err(shape_err(
                "matvec",
                format!("matrix {rows}x{cols} times vector {xr}x{xc}"),
            ));
        }
        let wv = &self.nodes[w.0].value;
        let xv = &self.nodes[x.0].value;
        let out: Vec<f64> = wv
            .chunks_exact(cols)
            .map(|row| row.iter().zip(xv).map(|(a, b)| a * b).sum())
            .collect();
        Ok(self.push(out, rows, 1, Op::MatVec(w, x)))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<(usize, usize)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(shape_err(
                op,
                format!("{}x{} vs {}x{}", sa.0, sa.1, sb.0, sb.1),
            ));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (r, c) = self.same_shape("add", a, b)?;
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(out, r, c, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (r, c) = self.same_shape("mul", a, b)?;
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(out, r, c, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let (r, c) = self.shape(a);
        let out = self.nodes[a.0].value.iter().map(|x| x * k).collect();
        self.push(out, r, c, Op::Scale(a, k))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let mut out = Vec::new();
        for &p in parts {
            let (_, c) = self.shape(p);
            if c != 1 {
                return Err(shape_err("concat", format!("part has {c} columns")));
            }
            out.extend_from_slice(&self.nodes[p.0].value);
        }
        let n = out.len();
        Ok(self.push(out, n, 1, Op::Concat(parts.to_vec())))
    }

    /// Elements `start..start+len` of a vector.
    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let n = self.vec_len(a);
        if start + len > n || self.shape(a).1 != 1 {
            return Err(shape_err(
                "slice",
                format!("range {start}..{} of vector length {n}", start + len),
            ));
        }
        let out = self.nodes[a.0].value[start..start + len].to_vec();
        Ok(self.push(out, len, 1, Op::Slice(a, start)))
    }

    /// Row `idx` of a matrix, as a vector.
    pub fn row(&mut self, m: NodeId, idx: usize) -> Result<NodeId> {
        let (rows, cols) = self.shape(m);
        if idx >= rows {
            return Err(shape_err("row", format!("row {idx} of {rows}x{cols} matrix")));
        }
        let out = self.nodes[m.0].value[idx * cols..(idx + 1) * cols].to_vec();
        Ok(self.push(out, cols, 1, Op::Row(m, idx)))
    }

    fn unary(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let (r, c) = self.shape(a);
        let out = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        self.push(out, r, c, op)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    /// Inverted dropout: in train mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
    pub fn dropout<R: Rng>(&mut self, a: NodeId, rate: f64, mode: Mode, rng: &mut R) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.vec_len(a))
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let (r, c) = self.shape(a);
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&mask)
            .map(|(x, m)| x * m)
            .collect();
        Ok(self.push(out, r, c, Op::Mask(a, mask)))
    }

    /// Sum of scalar nodes.
    pub fn sum(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let mut total = 0.0;
        for &p in parts {
            if self.vec_len(p) != 1 {
                return Err(shape_err("sum", format!("operand of length {}", self.vec_len(p))));
            }
            total += self.nodes[p.0].value[0];
        }
        Ok(self.push(vec![total], 1, 1, Op::Sum(parts.to_vec())))
    }

    pub fn mean(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let s = self.sum(parts)?;
        Ok(self.scale(s, 1.0 / parts.len().max(1) as f64))
    }

    /// Cross-entropy of a softmax over `logits` against `gold`. Returns the
    /// scalar loss node and the probabilities.
    pub fn softmax_xent(&mut self, logits: NodeId, gold: usize) -> Result<(NodeId, Vec<f64>)> {
        let n = self.vec_len(logits);
        if gold >= n {
            return Err(shape_err(
                "softmax_xent",
                format!("gold index {gold} with {n} classes"),
            ));
        }
        let probs = softmax(&self.nodes[logits.0].value);
        let loss = -log_softmax_at(&self.nodes[logits.0].value, gold);
        let node = self.push(vec![loss], 1, 1, Op::SoftmaxXent(logits, gold, probs.clone()));
        Ok((node, probs))
    }

    /// Reverse sweep from a scalar `root`. Gradients of earlier passes are
    /// discarded.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if self.vec_len(root) != 1 {
            return Err(shape_err("backward", format!("root has {} elements", self.vec_len(root))));
        }
        self.grads = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        self.grads[root.0][0] = 1.0;

        for i in (0..=root.0).rev() {
            let g = std::mem::take(&mut self.grads[i]);
            if g.iter().all(|&x| x == 0.0) {
                self.grads[i] = g;
                continue;
            }
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant | Op::Param => {}
                Op::MatVec(w, x) => {
                    let cols = self.nodes[w.0].cols;
                    let wv = &self.nodes[w.0].value;
                    let xv = &self.nodes[x.0].value;
                    let (gw, gx) = two_mut(&mut self.grads, w.0, x.0);
                    for (r, &gr) in g.iter().enumerate() {
                        if gr == 0.0 {
                            continue;
                        }
                        let row = &wv[r * cols..(r + 1) * cols];
                        let grow = &mut gw[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            grow[c] += gr * xv[c];
                            gx[c] += gr * row[c];
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(&mut self.grads[a.0], &g);
                    add_into(&mut self.grads[b.0], &g);
                }
                Op::Mul(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    if a == b {
                        for k in 0..g.len() {
                            self.grads[a.0][k] += 2.0 * g[k] * av[k];
                        }
                    } else {
                        let (ga, gb) = two_mut(&mut self.grads, a.0, b.0);
                        for k in 0..g.len() {
                            ga[k] += g[k] * bv[k];
                            gb[k] += g[k] * av[k];
                        }
                    }
                }
                Op::Scale(a, k) => {
                    for (dst, &x) in self.grads[a.0].iter_mut().zip(&g) {
                        *dst += x * k;
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        add_into(&mut self.grads[p.0], &g[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::Slice(a, start) => {
                    add_into(&mut self.grads[a.0][*start..*start + g.len()], &g);
                }
                Op::Row(m, idx) => {
                    let cols = g.len();
                    add_into(&mut self.grads[m.0][idx * cols..(idx + 1) * cols], &g);
                }
                Op::Sigmoid(a) => {
                    for k in 0..g.len() {
                        let y = node.value[k];
                        self.grads[a.0][k] += g[k] * y * (1.0 - y);
                    }
                }
                Op::Tanh(a) => {
                    for k in 0..g.len() {
                        let y = node.value[k];
                        self.grads[a.0][k] += g[k] * (1.0 - y * y);
                    }
                }
                Op::Relu(a) => {
                    for k in 0..g.len() {
                        if self.nodes[a.0].value[k] > 0.0 {
                            self.grads[a.0][k] += g[k];
                        }
                    }
                }
                Op::Mask(a, mask) => {
                    for k in 0..g.len() {
                        self.grads[a.0][k] += g[k] * mask[k];
                    }
                }
                Op::Sum(parts) => {
                    for p in parts {
                        self.grads[p.0][0] += g[0];
                    }
                }
                Op::SoftmaxXent(logits, gold, probs) => {
                    let dst = &mut self.grads[logits.0];
                    for k in 0..probs.len() {
                        let target = if k == *gold { 1.0 } else { 0.0 };
                        dst[k] += g[0] * (probs[k] - target);
                    }
                }
            }
            self.grads[i] = g;
        }
        Ok(())
    }

    /// Gradients of the parameter leaves on this tape.
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &[f64])> + '_ {
        self.params
            .iter()
            .filter_map(|(&pid, &node)| self.grads.get(node.0).map(|g| (pid, g.as_slice())))
    }

    /// Adds the gradients of parameter leaves into the store.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for (&pid, &node) in &self.params {
            if let Some(g) = self.grads.get(node.0) {
                let p = store.get_mut(pid);
                add_into(&mut p.grad, g);
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn two_mut(v: &mut [Vec<f64>], a: usize, b: usize) -> (&mut Vec<f64>, &mut Vec<f64>) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = v.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_softmax_at(logits: &[f64], k: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    logits[k] - lse
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn elementary_values() {
        let mut t = Tape::new();
        let z = t.constant(vec![0.0]);
        let s = t.sigmoid(z);
        let th = t.tanh(z);
        assert_eq!(t.value(s), &[0.5]);
        assert_eq!(t.value(th), &[0.0]);
        let a = t.constant(vec![1.0, 2.0, 3.0]);
        let b = t.constant(vec![4.0, 5.0]);
        let c = t.concat(&[a, b]).unwrap();
        assert_eq!(t.shape(c), (5, 1));
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut t = Tape::new();
        let a = t.constant(vec![1.0, 2.0, 3.0]);
        let b = t.constant(vec![1.0, 2.0]);
        let err = t.add(a, b).unwrap_err().to_string();
        assert!(err.contains("add") && err.contains("3x1") && err.contains("2x1"), "{err}");
        let w = t.constant_matrix(vec![0.0; 6], 2, 3);
        assert!(t.matvec(w, b).unwrap_err().to_string().contains("matvec"));
        assert!(t.slice(a, 2, 2).is_err());
    }

    #[test]
    fn uniform_logits_give_ln3() {
        let mut t = Tape::new();
        let l = t.constant(vec![0.0, 0.0, 0.0]);
        let (loss, probs) = t.softmax_xent(l, 1).unwrap();
        for p in probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((t.scalar(loss) - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let mut t = Tape::new();
        let l = t.constant(vec![1000.0, 0.0]);
        let (loss, probs) = t.softmax_xent(l, 1).unwrap();
        assert!((probs[0] - 1.0).abs() < 1e-12 && probs[1] < 1e-300);
        assert!(t.scalar(loss).is_finite());
        assert!((t.scalar(loss) - 1000.0).abs() < 1e-9);
        t.backward(loss).unwrap();
        assert!(t.grad(l).iter().all(|g| g.is_finite()));
        assert!(t.softmax_xent(l, 2).is_err());
    }

    #[test]
    fn fan_out_accumulates() {
        // y = x * x + x, dy/dx = 2x + 1
        let mut t = Tape::new();
        let x = t.constant(vec![3.0]);
        let sq = t.mul(x, x).unwrap();
        let y = t.add(sq, x).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.grad(x), &[7.0]);
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = Tape::new();
        let x = t.constant(vec![1.0; 8]);
        assert_eq!(t.dropout(x, 0.0, Mode::Train, &mut rng).unwrap(), x);
        assert_eq!(t.dropout(x, 0.6, Mode::Eval, &mut rng).unwrap(), x);
        assert!(t.dropout(x, 1.0, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropout_zero_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut t = Tape::new();
        let x = t.constant(vec![1.0; 100_000]);
        let y = t.dropout(x, 0.6, Mode::Train, &mut rng).unwrap();
        let v = t.value(y);
        let zeros = v.iter().filter(|&&e| e == 0.0).count() as f64 / v.len() as f64;
        assert!((zeros - 0.6).abs() <= 0.01, "zero fraction {zeros}");
        let kept = v.iter().find(|&&e| e != 0.0).unwrap();
        assert!((kept - 2.5).abs() < 1e-12);
    }
}
