//! Minimal reverse-mode tape over dense row-major matrices.
//!
//! Every node holds an `Array2<f64>`; column vectors are `N × 1`, scalars
//! `1 × 1`. Parameters enter either whole ([`Tape::param`]) or as a row
//! gather from an embedding table ([`Tape::gather`]); gradients for the
//! latter come back as sparse rows.

use std::collections::HashMap;

use ndarray::{s, Array1, Array2, Axis};

use crate::graph::Csr;

pub type NodeId = usize;

enum Op<'g> {
    Leaf,
    Param(usize),
    Gather { slot: usize, rows: Vec<usize> },
    SpMM { bwd: &'g Csr, x: NodeId },
    MatMulT { x: NodeId, w: NodeId },
    Add(NodeId, NodeId),
    AddBias { x: NodeId, b: NodeId },
    Mul(NodeId, NodeId),
    LeakyRelu { x: NodeId, slope: f64 },
    Concat(Vec<NodeId>),
    SelectRows { x: NodeId, rows: Vec<usize> },
    RowDot(NodeId, NodeId),
    GroupSoftmax { x: NodeId, group: usize },
    ScaleRows { x: NodeId, s: NodeId },
    GroupSum { x: NodeId, group: usize },
    Bce { logits: NodeId, labels: Vec<f64>, eps: f64 },
}

struct Node<'g> {
    value: Array2<f64>,
    op: Op<'g>,
}

/// Gradient of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorGrad {
    /// Not reached by the computation: exactly zero.
    Zero,
    Dense(Array2<f64>),
    /// Gradient restricted to the listed rows (sorted, unique).
    Rows { rows: Vec<usize>, values: Array2<f64> },
}

impl TensorGrad {
    /// Materialise as a dense matrix of the given shape.
    pub fn to_dense(&self, shape: (usize, usize)) -> Array2<f64> {
        match self {
            TensorGrad::Zero => Array2::zeros(shape),
            TensorGrad::Dense(d) => d.clone(),
            TensorGrad::Rows { rows, values } => {
                let mut out = Array2::zeros(shape);
                for (k, &r) in rows.iter().enumerate() {
                    out.row_mut(r).assign(&values.row(k));
                }
                out
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            TensorGrad::Zero => true,
            TensorGrad::Dense(d) => d.iter().all(|x| x.is_finite()),
            TensorGrad::Rows { values, .. } => values.iter().all(|x| x.is_finite()),
        }
    }

    pub fn scale(&mut self, k: f64) {
        match self {
            TensorGrad::Zero => {}
            TensorGrad::Dense(d) => *d *= k,
            TensorGrad::Rows { values, .. } => *values *= k,
        }
    }
}

/// One gradient per parameter slot.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub grads: Vec<TensorGrad>,
}

impl GradientSet {
    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(TensorGrad::is_finite)
    }
}

#[derive(Default)]
struct RowAccum {
    pos: HashMap<usize, usize>,
    rows: Vec<usize>,
    values: Vec<Array1<f64>>,
}

enum Accum {
    Zero,
    Dense(Array2<f64>),
    Rows(RowAccum),
}

pub struct Tape<'g> {
    nodes: Vec<Node<'g>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn leaky(x: f64, slope: f64) -> f64 {
    crate::leaky_relu(x, slope)
}

impl<'g> Tape<'g> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Array2<f64>, op: Op<'g>) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant (no gradient).
    pub fn constant(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// A whole parameter tensor.
    pub fn param(&mut self, slot: usize, value: &Array2<f64>) -> NodeId {
        self.push(value.clone(), Op::Param(slot))
    }

    /// Rows of an embedding table, in the given order (repeats allowed).
    pub fn gather(&mut self, slot: usize, table: &Array2<f64>, rows: &[usize]) -> NodeId {
        let value = table.select(Axis(0), rows);
        self.push(value, Op::Gather { slot, rows: rows.to_vec() })
    }

    /// `fwd · x`; `bwd` must be the transpose of `fwd` (same weights).
    pub fn spmm(&mut self, fwd: &'g Csr, bwd: &'g Csr, x: NodeId) -> NodeId {
        let value = csr_matmul(fwd, &self.nodes[x].value);
        self.push(value, Op::SpMM { bwd, x })
    }

    /// `x · wᵀ` (row vectors through a linear map stored as `out × in`).
    pub fn matmul_t(&mut self, x: NodeId, w: NodeId) -> NodeId {
        let value = self.nodes[x].value.dot(&self.nodes[w].value.t());
        self.push(value, Op::MatMulT { x, w })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = &self.nodes[a].value + &self.nodes[b].value;
        self.push(value, Op::Add(a, b))
    }

    /// `x + b` with `b` a `1 × D` row broadcast over rows of `x`.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> NodeId {
        let value = &self.nodes[x].value + &self.nodes[b].value;
        self.push(value, Op::AddBias { x, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = &self.nodes[a].value * &self.nodes[b].value;
        self.push(value, Op::Mul(a, b))
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        let value = self.nodes[x].value.mapv(|v| leaky(v, slope));
        self.push(value, Op::LeakyRelu { x, slope })
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<_> = parts.iter().map(|&p| self.nodes[p].value.view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat rows agree");
        self.push(value, Op::Concat(parts.to_vec()))
    }

    pub fn select_rows(&mut self, x: NodeId, rows: &[usize]) -> NodeId {
        let value = self.nodes[x].value.select(Axis(0), rows);
        self.push(value, Op::SelectRows { x, rows: rows.to_vec() })
    }

    /// Row-wise inner products, `N × 1`.
    pub fn row_dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let prod = &self.nodes[a].value * &self.nodes[b].value;
        let value = prod.sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(value, Op::RowDot(a, b))
    }

    /// Softmax within consecutive groups of `group` rows of an `N × 1` column.
    pub fn group_softmax(&mut self, x: NodeId, group: usize) -> NodeId {
        let xv = &self.nodes[x].value;
        let mut value = Array2::zeros(xv.raw_dim());
        for (src, mut dst) in xv
            .column(0)
            .exact_chunks(group)
            .into_iter()
            .zip(value.column_mut(0).exact_chunks_mut(group))
        {
            let max = src.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let mut z = 0.0;
            for (d, &s) in dst.iter_mut().zip(src.iter()) {
                *d = (s - max).exp();
                z += *d;
            }
            dst.mapv_inplace(|d| d / z);
        }
        self.push(value, Op::GroupSoftmax { x, group })
    }

    /// `y[i] = s[i] · x[i]` with `s` an `N × 1` column.
    pub fn scale_rows(&mut self, x: NodeId, s: NodeId) -> NodeId {
        let value = &self.nodes[x].value * &self.nodes[s].value;
        self.push(value, Op::ScaleRows { x, s })
    }

    /// Sum consecutive groups of `group` rows.
    pub fn group_sum(&mut self, x: NodeId, group: usize) -> NodeId {
        let xv = &self.nodes[x].value;
        let (n, d) = xv.dim();
        let value = xv
            .view()
            .into_shape_with_order((n / group, group, d))
            .expect("rows divisible by group")
            .sum_axis(Axis(1));
        self.push(value, Op::GroupSum { x, group })
    }

    /// Summed binary cross-entropy of `sigmoid(logits)` clamped to `[eps, 1-eps]`.
    pub fn bce(&mut self, logits: NodeId, labels: &[f64], eps: f64) -> NodeId {
        let z = self.nodes[logits].value.column(0);
        let loss: f64 = z
            .iter()
            .zip(labels)
            .map(|(&z, &y)| {
                let p = crate::sigmoid(z).clamp(eps, 1.0 - eps);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum();
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::Bce { logits, labels: labels.to_vec(), eps },
        )
    }

    /// Reverse sweep from a scalar node. `slot_count` sizes the result.
    pub fn backward(&self, root: NodeId, slot_count: usize) -> GradientSet {
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root] = Some(Array2::ones(self.nodes[root].value.raw_dim()));
        let mut accum: Vec<Accum> = (0..slot_count).map(|_| Accum::Zero).collect();

        fn acc(g: &mut [Option<Array2<f64>>], id: NodeId, delta: Array2<f64>) {
            match &mut g[id] {
                Some(existing) => *existing += &delta,
                slot => *slot = Some(delta),
            }
        }

        for id in (0..=root).rev() {
            let Some(gy) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::Param(slot) => match &mut accum[*slot] {
                    Accum::Dense(d) => *d += &gy,
                    a @ Accum::Zero => *a = Accum::Dense(gy),
                    Accum::Rows(_) => panic!("slot {slot} used both whole and gathered"),
                },
                Op::Gather { slot, rows } => {
                    if let Accum::Zero = accum[*slot] {
                        accum[*slot] = Accum::Rows(RowAccum::default());
                    }
                    let Accum::Rows(ra) = &mut accum[*slot] else {
                        panic!("slot {slot} used both whole and gathered")
                    };
                    for (k, &r) in rows.iter().enumerate() {
                        match ra.pos.get(&r) {
                            Some(&p) => ra.values[p] += &gy.row(k),
                            None => {
                                ra.pos.insert(r, ra.rows.len());
                                ra.rows.push(r);
                                ra.values.push(gy.row(k).to_owned());
                            }
                        }
                    }
                }
                Op::SpMM { bwd, x } => acc(&mut grads, *x, csr_matmul(bwd, &gy)),
                Op::MatMulT { x, w } => {
                    let gx = gy.dot(&self.nodes[*w].value);
                    let gw = gy.t().dot(&self.nodes[*x].value);
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *w, gw);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, gy.clone());
                    acc(&mut grads, *b, gy);
                }
                Op::AddBias { x, b } => {
                    let gb = gy.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *x, gy);
                    acc(&mut grads, *b, gb);
                }
                Op::Mul(a, b) => {
                    let ga = &gy * &self.nodes[*b].value;
                    let gb = &gy * &self.nodes[*a].value;
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::LeakyRelu { x, slope } => {
                    let mut gx = gy;
                    ndarray::Zip::from(&mut gx)
                        .and(&self.nodes[*x].value)
                        .for_each(|g, &v| {
                            if v < 0.0 {
                                *g *= slope
                            }
                        });
                    acc(&mut grads, *x, gx);
                }
                Op::Concat(parts) => {
                    let mut col = 0;
                    for &p in parts {
                        let w = self.nodes[p].value.ncols();
                        acc(&mut grads, p, gy.slice(s![.., col..col + w]).to_owned());
                        col += w;
                    }
                }
                Op::SelectRows { x, rows } => {
                    let mut gx = Array2::zeros(self.nodes[*x].value.raw_dim());
                    for (k, &r) in rows.iter().enumerate() {
                        let mut dst = gx.row_mut(r);
                        dst += &gy.row(k);
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::RowDot(a, b) => {
                    let ga = &self.nodes[*b].value * &gy;
                    let gb = &self.nodes[*a].value * &gy;
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::GroupSoftmax { x, group } => {
                    let p = &node.value;
                    let mut gx = Array2::zeros(p.raw_dim());
                    for ((pc, gc), mut dst) in p
                        .column(0)
                        .exact_chunks(*group)
                        .into_iter()
                        .zip(gy.column(0).exact_chunks(*group))
                        .zip(gx.column_mut(0).exact_chunks_mut(*group))
                    {
                        let dotp: f64 = pc.iter().zip(gc.iter()).map(|(a, b)| a * b).sum();
                        for ((d, &pi), &gi) in dst.iter_mut().zip(pc.iter()).zip(gc.iter()) {
                            *d = pi * (gi - dotp);
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::ScaleRows { x, s } => {
                    let gx = &gy * &self.nodes[*s].value;
                    let gs = (&gy * &self.nodes[*x].value).sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *s, gs);
                }
                Op::GroupSum { x, group } => {
                    let (n, d) = self.nodes[*x].value.dim();
                    let gx = gy
                        .view()
                        .insert_axis(Axis(1))
                        .broadcast((n / group, *group, d))
                        .expect("broadcast group")
                        .to_owned()
                        .into_shape_with_order((n, d))
                        .expect("reshape group");
                    acc(&mut grads, *x, gx);
                }
                Op::Bce { logits, labels, eps } => {
                    let scale = gy[[0, 0]];
                    let z = &self.nodes[*logits].value;
                    let mut gz = Array2::zeros(z.raw_dim());
                    for ((g, &zi), &y) in gz.column_mut(0).iter_mut().zip(z.column(0)).zip(labels) {
                        let p = crate::sigmoid(zi);
                        // zero slope inside the clamped region
                        if p > *eps && p < 1.0 - eps {
                            *g = scale * (p - y);
                        }
                    }
                    acc(&mut grads, *logits, gz);
                }
            }
        }

        let grads = accum
            .into_iter()
            .map(|a| match a {
                Accum::Zero => TensorGrad::Zero,
                Accum::Dense(d) => TensorGrad::Dense(d),
                Accum::Rows(ra) => {
                    let mut order: Vec<usize> = (0..ra.rows.len()).collect();
                    order.sort_unstable_by_key(|&k| ra.rows[k]);
                    let width = ra.values.first().map_or(0, |v| v.len());
                    let mut values = Array2::zeros((order.len(), width));
                    for (dst, &k) in order.iter().enumerate() {
                        values.row_mut(dst).assign(&ra.values[k]);
                    }
                    TensorGrad::Rows {
                        rows: order.iter().map(|&k| ra.rows[k]).collect(),
                        values,
                    }
                }
            })
            .collect();
        GradientSet { grads }
    }
}

/// Sparse × dense product.
pub fn csr_matmul(a: &Csr, x: &Array2<f64>) -> Array2<f64> {
    assert_eq!(a.cols, x.nrows(), "csr_matmul shape");
    let mut out = Array2::zeros((a.rows, x.ncols()));
    for (r, mut dst) in out.outer_iter_mut().enumerate() {
        let (cols, ws) = a.row(r);
        for (&c, &w) in cols.iter().zip(ws) {
            dst.scaled_add(w, &x.row(c));
        }
    }
    out
}
