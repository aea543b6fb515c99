//! Reverse-mode differentiation over dense matrices.
//!
//! Forward ops evaluate eagerly and record themselves on a tape; `backward`
//! replays the tape in reverse. The tape lives for one forward/backward pass
//! and is rebuilt per pass.

use std::cell::RefCell;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf { param: Option<String> },
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    LeakyRelu(usize, f64),
    ConcatCols(Vec<usize>),
    GatherRows(usize, Vec<usize>),
    ScatterRows { src: usize, indices: Vec<usize> },
    SegmentMax { src: usize, argmax: Vec<usize> },
    SegmentSum { src: usize, seg: Vec<usize> },
    RowScale(usize, Vec<f64>),
    SoftmaxRows(usize),
    RowNorm(usize),
    Sum(usize),
    Reshape(usize),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// One computation tape. All `Var`s passed to its methods must have been
/// created by the same graph.
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: RefCell::new(Vec::new()) }
    }

    fn push(&self, value: Tensor, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var(nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let nodes = self.nodes.borrow();
        let t = &nodes[v.0].value;
        (t.rows(), t.cols())
    }

    /// Constant input (no parameter gradient, but receives a grad slot like
    /// any node, so inputs can be gradient-checked too).
    pub fn leaf(&self, t: Tensor) -> Var {
        self.push(t, Op::Leaf { param: None })
    }

    pub fn scalar(&self, v: f64) -> Var {
        self.leaf(Tensor::scalar(v))
    }

    /// Leaf bound to a named parameter; `backward` accumulates its gradient
    /// into the store.
    pub fn param(&self, store: &ParamStore, name: &str) -> Result<Var> {
        let t = store
            .get(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name}")))?;
        Ok(self.push(t.clone(), Op::Leaf { param: Some(name.to_string()) }))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let nodes = self.nodes.borrow();
        let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
        assert_eq!(ta.cols(), tb.rows(), "matmul inner dims {}x{} * {}x{}", ta.rows(), ta.cols(), tb.rows(), tb.cols());
        let out = matmul(ta, tb);
        drop(nodes);
        self.push(out, Op::MatMul(a.0, b.0))
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, |x, y| x + y, "add");
        self.push(out, Op::Add(a.0, b.0))
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, |x, y| x - y, "sub");
        self.push(out, Op::Sub(a.0, b.0))
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, |x, y| x * y, "mul");
        self.push(out, Op::Mul(a.0, b.0))
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, what: &str) -> Tensor {
        let nodes = self.nodes.borrow();
        let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
        assert_eq!((ta.rows(), ta.cols()), (tb.rows(), tb.cols()), "{what} shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.rows(), ta.cols(), data)
    }

    /// Broadcast-add a 1xN row vector to every row of an MxN matrix.
    pub fn add_row(&self, a: Var, row: Var) -> Var {
        let nodes = self.nodes.borrow();
        let (ta, tr) = (&nodes[a.0].value, &nodes[row.0].value);
        assert_eq!(tr.rows(), 1, "add_row expects a row vector");
        assert_eq!(ta.cols(), tr.cols(), "add_row width mismatch");
        let cols = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + tr.data()[i % cols])
            .collect();
        let out = Tensor::new(ta.rows(), cols, data);
        drop(nodes);
        self.push(out, Op::AddRow(a.0, row.0))
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        let nodes = self.nodes.borrow();
        let ta = &nodes[a.0].value;
        let out = Tensor::new(ta.rows(), ta.cols(), ta.data().iter().map(|&x| x * c).collect());
        drop(nodes);
        self.push(out, Op::Scale(a.0, c))
    }

    pub fn leaky_relu(&self, a: Var, slope: f64) -> Var {
        let nodes = self.nodes.borrow();
        let ta = &nodes[a.0].value;
        let data = ta.data().iter().map(|&x| if x >= 0.0 { x } else { slope * x }).collect();
        let out = Tensor::new(ta.rows(), ta.cols(), data);
        drop(nodes);
        self.push(out, Op::LeakyRelu(a.0, slope))
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let nodes = self.nodes.borrow();
        let rows = nodes[parts[0].0].value.rows();
        let total: usize = parts.iter().map(|p| nodes[p.0].value.cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                let t = &nodes[p.0].value;
                assert_eq!(t.rows(), rows, "concat_cols row mismatch");
                data.extend_from_slice(t.row(r));
            }
        }
        let out = Tensor::new(rows, total, data);
        drop(nodes);
        self.push(out, Op::ConcatCols(parts.iter().map(|p| p.0).collect()))
    }

    pub fn gather_rows(&self, a: Var, indices: &[usize]) -> Var {
        let nodes = self.nodes.borrow();
        let ta = &nodes[a.0].value;
        let cols = ta.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(ta.row(i));
        }
        let out = Tensor::new(indices.len(), cols, data);
        drop(nodes);
        self.push(out, Op::GatherRows(a.0, indices.to_vec()))
    }

    /// Place the rows of `a` at `indices` within an `n_rows`-row zero matrix.
    pub fn scatter_rows(&self, a: Var, indices: &[usize], n_rows: usize) -> Var {
        let nodes = self.nodes.borrow();
        let ta = &nodes[a.0].value;
        assert_eq!(ta.rows(), indices.len(), "scatter_rows index count");
        let cols = ta.cols();
        let mut out = Tensor::zeros(n_rows, cols);
        for (r, &i) in indices.iter().enumerate() {
            out.data_mut()[i * cols..(i + 1) * cols].copy_from_slice(ta.row(r));
        }
        drop(nodes);
        self.push(out, Op::ScatterRows { src: a.0, indices: indices.to_vec() })
    }

    /// Column-wise max over rows sharing a segment id. Segments with no rows
    /// yield zeros. Ties keep the earliest row.
    pub fn segment_max(&self, a: Var, seg: &[usize], n_segments: usize) -> Var {
        let nodes = self.nodes.borrow();
        let ta = &nodes[a.0].value;
        assert_eq!(ta.rows(), seg.len(), "segment_max id count");
        let cols = ta.cols();
        let mut out = Tensor::zeros(n_segments, cols);
        // usize::MAX marks an empty slot (no contributing row).
        let mut argmax = vec![usize::MAX; n_segments * cols];
        for (r, &s) in seg.iter().enumerate() {
            debug_assert!(s < n_segments);
            let row = ta.row(r);
            for c in 0..cols {
                let slot = s * cols + c;
                if argmax[slot] == usize::MAX || row[c] > out.get(s, c) {
                    out.set(s, c, row[c]);
                    argmax[slot] = r;
                }
            }
        }
        drop(nodes);
        self.push(out, Op::SegmentMax { src: a.0, argmax })
    }

    pub fn segment_sum(&self, a: Var, seg: &[usize], n_segments: usize) -> Var {
        let nodes = self.nodes.borrow();
        let ta = &nodes[a.0].value;
        assert_eq!(ta.rows(), seg.len(), "segment_sum id count");
        let cols = ta.cols();
        let mut out = Tensor::zeros(n_segments, cols);
        for (r, &s) in seg.iter().enumerate() {
            let row = ta.row(r);
            for c in 0..cols {
                out.set(s, c, out.get(s, c) + row[c]);
            }
        }
        drop(nodes);
        self.push(out, Op::SegmentSum { src: a.0, seg: seg.to_vec() })
    }

    /// Multiply each row by a fixed per-row factor.
    pub fn row_scale(&self, a: Var, factors: &[f64]) -> Var {
        let nodes = self.nodes.borrow();
        let ta = &nodes[a.0].value;
        assert_eq!(ta.rows(), factors.len(), "row_scale factor count");
        let cols = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * factors[i / cols])
            .collect();
        let out = Tensor::new(ta.rows(), cols, data);
        drop(nodes);
        self.push(out, Op::RowScale(a.0, factors.to_vec()))
    }

    /// Row-wise softmax with max-subtraction stabilization.
    pub fn softmax_rows(&self, a: Var) -> Var {
        let nodes = self.nodes.borrow();
        let ta = &nodes[a.0].value;
        let (rows, cols) = (ta.rows(), ta.cols());
        assert!(cols >= 1, "softmax over empty rows");
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let row = ta.row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for c in 0..cols {
                let e = (row[c] - m).exp();
                out.set(r, c, e);
                z += e;
            }
            for c in 0..cols {
                out.set(r, c, out.get(r, c) / z);
            }
        }
        drop(nodes);
        self.push(out, Op::SoftmaxRows(a.0))
    }

    /// Euclidean norm of each row, as an Mx1 column.
    pub fn row_norm(&self, a: Var) -> Var {
        let nodes = self.nodes.borrow();
        let ta = &nodes[a.0].value;
        let data = (0..ta.rows())
            .map(|r| ta.row(r).iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let out = Tensor::new(ta.rows(), 1, data);
        drop(nodes);
        self.push(out, Op::RowNorm(a.0))
    }

    /// Sum all entries to a scalar.
    pub fn sum(&self, a: Var) -> Var {
        let nodes = self.nodes.borrow();
        let s = nodes[a.0].value.data().iter().sum();
        drop(nodes);
        self.push(Tensor::scalar(s), Op::Sum(a.0))
    }

    pub fn reshape(&self, a: Var, rows: usize, cols: usize) -> Var {
        let nodes = self.nodes.borrow();
        let ta = &nodes[a.0].value;
        assert_eq!(ta.len(), rows * cols, "reshape element count");
        let out = Tensor::new(rows, cols, ta.data().to_vec());
        drop(nodes);
        self.push(out, Op::Reshape(a.0))
    }

    /// Reverse-mode sweep from a scalar loss. Returns per-node gradients;
    /// parameter-leaf gradients are also accumulated into `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.backward_no_store(loss)?;
        let nodes = self.nodes.borrow();
        for (i, node) in nodes.iter().enumerate() {
            if let Op::Leaf { param: Some(name) } = &node.op {
                if let Some(g) = &grads.per_node[i] {
                    store.accumulate_grad(name, g)?;
                }
            }
        }
        Ok(grads)
    }

    /// Reverse sweep without touching any ParamStore.
    pub fn backward_no_store(&self, loss: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if !nodes[loss.0].value.is_scalar() {
            let t = &nodes[loss.0].value;
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got {}x{}",
                t.rows(),
                t.cols()
            )));
        }
        let mut per_node: Vec<Option<Tensor>> = vec![None; nodes.len()];
        per_node[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = per_node[i].take() else { continue };
            self.propagate(&nodes, i, &g, &mut per_node);
            per_node[i] = Some(g);
        }
        Ok(Gradients { per_node })
    }

    fn propagate(&self, nodes: &[Node], i: usize, g: &Tensor, acc: &mut [Option<Tensor>]) {
        let add_to = |acc: &mut [Option<Tensor>], j: usize, delta: Tensor| {
            match &mut acc[j] {
                Some(t) => {
                    for (a, b) in t.data_mut().iter_mut().zip(delta.data()) {
                        *a += b;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
        };
        match &nodes[i].op {
            Op::Leaf { .. } => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&nodes[*a].value, &nodes[*b].value);
                add_to(acc, *a, matmul_nt(g, tb));
                add_to(acc, *b, matmul_tn(ta, g));
            }
            Op::Add(a, b) => {
                add_to(acc, *a, g.clone());
                add_to(acc, *b, g.clone());
            }
            Op::Sub(a, b) => {
                add_to(acc, *a, g.clone());
                let neg = Tensor::new(g.rows(), g.cols(), g.data().iter().map(|x| -x).collect());
                add_to(acc, *b, neg);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (&nodes[*a].value, &nodes[*b].value);
                let da = Tensor::new(g.rows(), g.cols(), g.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect());
                let db = Tensor::new(g.rows(), g.cols(), g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect());
                add_to(acc, *a, da);
                add_to(acc, *b, db);
            }
            Op::AddRow(a, row) => {
                add_to(acc, *a, g.clone());
                let cols = g.cols();
                let mut dr = Tensor::zeros(1, cols);
                for r in 0..g.rows() {
                    for c in 0..cols {
                        dr.data_mut()[c] += g.get(r, c);
                    }
                }
                add_to(acc, *row, dr);
            }
            Op::Scale(a, c) => {
                let da = Tensor::new(g.rows(), g.cols(), g.data().iter().map(|x| x * c).collect());
                add_to(acc, *a, da);
            }
            Op::LeakyRelu(a, slope) => {
                let ta = &nodes[*a].value;
                let data = g
                    .data()
                    .iter()
                    .zip(ta.data())
                    .map(|(&gx, &x)| if x >= 0.0 { gx } else { slope * gx })
                    .collect();
                add_to(acc, *a, Tensor::new(g.rows(), g.cols(), data));
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let tc = nodes[p].value.cols();
                    let mut dp = Tensor::zeros(g.rows(), tc);
                    for r in 0..g.rows() {
                        for c in 0..tc {
                            dp.set(r, c, g.get(r, offset + c));
                        }
                    }
                    add_to(acc, p, dp);
                    offset += tc;
                }
            }
            Op::GatherRows(a, indices) => {
                let ta = &nodes[*a].value;
                let cols = ta.cols();
                let mut da = Tensor::zeros(ta.rows(), cols);
                for (r, &i) in indices.iter().enumerate() {
                    for c in 0..cols {
                        da.set(i, c, da.get(i, c) + g.get(r, c));
                    }
                }
                add_to(acc, *a, da);
            }
            Op::ScatterRows { src, indices, .. } => {
                let cols = g.cols();
                let mut ds = Tensor::zeros(indices.len(), cols);
                for (r, &i) in indices.iter().enumerate() {
                    for c in 0..cols {
                        ds.set(r, c, g.get(i, c));
                    }
                }
                add_to(acc, *src, ds);
            }
            Op::SegmentMax { src, argmax } => {
                let ts = &nodes[*src].value;
                let cols = ts.cols();
                let mut ds = Tensor::zeros(ts.rows(), cols);
                for s in 0..g.rows() {
                    for c in 0..cols {
                        let r = argmax[s * cols + c];
                        if r != usize::MAX {
                            ds.set(r, c, ds.get(r, c) + g.get(s, c));
                        }
                    }
                }
                add_to(acc, *src, ds);
            }
            Op::SegmentSum { src, seg, .. } => {
                let cols = g.cols();
                let mut ds = Tensor::zeros(seg.len(), cols);
                for (r, &s) in seg.iter().enumerate() {
                    for c in 0..cols {
                        ds.set(r, c, g.get(s, c));
                    }
                }
                add_to(acc, *src, ds);
            }
            Op::RowScale(a, factors) => {
                let cols = g.cols();
                let data = g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| x * factors[i / cols])
                    .collect();
                add_to(acc, *a, Tensor::new(g.rows(), cols, data));
            }
            Op::SoftmaxRows(a) => {
                let y = &nodes[i].value;
                let cols = y.cols();
                let mut da = Tensor::zeros(g.rows(), cols);
                for r in 0..g.rows() {
                    let dot: f64 = (0..cols).map(|c| g.get(r, c) * y.get(r, c)).sum();
                    for c in 0..cols {
                        da.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                add_to(acc, *a, da);
            }
            Op::RowNorm(a) => {
                let ta = &nodes[*a].value;
                let y = &nodes[i].value;
                let cols = ta.cols();
                let mut da = Tensor::zeros(ta.rows(), cols);
                for r in 0..ta.rows() {
                    let n = y.get(r, 0);
                    if n > 0.0 {
                        let gr = g.get(r, 0) / n;
                        for c in 0..cols {
                            da.set(r, c, gr * ta.get(r, c));
                        }
                    }
                }
                add_to(acc, *a, da);
            }
            Op::Sum(a) => {
                let ta = &nodes[*a].value;
                let gv = g.scalar_value();
                add_to(acc, *a, Tensor::new(ta.rows(), ta.cols(), vec![gv; ta.len()]));
            }
            Op::Reshape(a) => {
                let ta = &nodes[*a].value;
                add_to(acc, *a, Tensor::new(ta.rows(), ta.cols(), g.data().to_vec()));
            }
        }
    }
}

/// Per-node gradients from one backward sweep.
pub struct Gradients {
    per_node: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the swept loss w.r.t. `v`, zero if unreachable.
    pub fn grad(&self, g: &Graph, v: Var) -> Tensor {
        match &self.per_node[v.0] {
            Some(t) => t.clone(),
            None => {
                let (r, c) = g.shape(v);
                Tensor::zeros(r, c)
            }
        }
    }
}

fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let ar = a.row(i);
        let or = &mut out[i * n..(i + 1) * n];
        for (p, &av) in ar.iter().enumerate() {
            let br = b.row(p);
            for j in 0..n {
                or[j] += av * br[j];
            }
        }
    }
    let _ = k;
    Tensor::new(m, n, out)
}

// g . b^T
fn matmul_nt(g: &Tensor, b: &Tensor) -> Tensor {
    let (m, n, k) = (g.rows(), g.cols(), b.rows());
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let gr = g.row(i);
        let or = &mut out[i * k..(i + 1) * k];
        for p in 0..k {
            let br = b.row(p);
            let mut s = 0.0;
            for j in 0..n {
                s += gr[j] * br[j];
            }
            or[p] = s;
        }
    }
    Tensor::new(m, k, out)
}

// a^T . g
fn matmul_tn(a: &Tensor, g: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), g.cols());
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let ar = a.row(i);
        let gr = g.row(i);
        for (p, &av) in ar.iter().enumerate() {
            let or = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                or[j] += av * gr[j];
            }
        }
    }
    Tensor::new(k, n, out)
}
