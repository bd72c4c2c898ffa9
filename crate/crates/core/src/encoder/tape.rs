//! Reverse-mode differentiation over a recorded sequence of matrix ops.
//!
//! A [`Tape`] is built fresh for every forward pass. Parameters enter as
//! leaves tied to a [`ParamStore`] slot; frozen parameters enter as
//! constants and never receive gradients. [`Tape::backward`] returns exact
//! gradients of a 1x1 node with respect to every trainable leaf.

use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use thiserror::Error;

use super::matrix::{gemm, Matrix};
use super::params::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TapeError {
    #[error("backward needs a 1x1 node, got {0}x{1}")]
    NotScalar(usize, usize),
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    ScaleBy(NodeId, NodeId),
    AddScalar(NodeId),
    Relu(NodeId),
    GatherRows(NodeId, Rc<Vec<usize>>),
    GatherSum(NodeId, Rc<Vec<Vec<usize>>>),
    SegmentSoftmax(NodeId, Rc<Vec<usize>>),
    HeadDot {
        keys: NodeId,
        query: NodeId,
        heads: usize,
        scale: f64,
    },
    AttnPool {
        alpha: NodeId,
        values: NodeId,
        offsets: Rc<Vec<usize>>,
        shared: bool,
    },
    PairDist(NodeId, NodeId, Rc<Vec<(usize, usize)>>),
    Sum(NodeId),
    Mean(NodeId),
    SoftmaxRows(NodeId),
    Pick(NodeId, usize, usize),
    SmoothL1(NodeId, Matrix),
    BceLogits(NodeId, Matrix),
    RowNorm(NodeId),
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

const ROW_NORM_EPS: f64 = 1e-5;

/// Gradients keyed by parameter slot.
#[derive(Debug, Default, Clone)]
pub struct Gradients(pub BTreeMap<ParamId, Matrix>);

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.0.get(&id)
    }

    pub fn merge(&mut self, other: Gradients) {
        for (id, g) in other.0 {
            match self.0.get_mut(&id) {
                Some(acc) => acc.add_assign(&g),
                None => {
                    self.0.insert(id, g);
                }
            }
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, NodeId>,
}

fn check(op: &'static str, left: (usize, usize), right: (usize, usize)) {
    if left != right {
        panic!("{}", TapeError::Shape { op, left, right });
    }
}

fn segments(offsets: &[usize]) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
    offsets.windows(2).map(|w| w[0]..w[1])
}

fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        z += *x;
    }
    for x in xs.iter_mut() {
        *x /= z;
    }
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

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, inputs: &[NodeId]) -> NodeId {
        let needs_grad = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&n) = self.params.get(&id) {
            return n;
        }
        let trainable = !store.is_frozen(id);
        self.nodes.push(Node {
            value: store.value(id).clone(),
            op: if trainable { Op::Param(id) } else { Op::Leaf },
            needs_grad: trainable,
        });
        let n = NodeId(self.nodes.len() - 1);
        self.params.insert(id, n);
        n
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b), &[a, b])
    }

    /// Adds a 1xC bias row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(bias));
        check("add_row", (1, av.cols()), bv.shape());
        let mut v = av.clone();
        for r in 0..v.rows() {
            for (x, b) in v.row_mut(r).iter_mut().zip(bv.data()) {
                *x += b;
            }
        }
        self.push(v, Op::AddRow(a, bias), &[a, bias])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        check("add", self.value(a).shape(), self.value(b).shape());
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        check("sub", self.value(a).shape(), self.value(b).shape());
        let mut v = self.value(a).clone();
        for (x, y) in v.data_mut().iter_mut().zip(self.value(b).data()) {
            *x -= y;
        }
        self.push(v, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        check("mul", self.value(a).shape(), self.value(b).shape());
        let mut v = self.value(a).clone();
        for (x, y) in v.data_mut().iter_mut().zip(self.value(b).data()) {
            *x *= y;
        }
        self.push(v, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s), &[a])
    }

    /// Multiplies `a` by the 1x1 node `s`.
    pub fn scale_by(&mut self, a: NodeId, s: NodeId) -> NodeId {
        check("scale_by", self.value(s).shape(), (1, 1));
        let v = self.value(a).scale(self.value(s).item());
        self.push(v, Op::ScaleBy(a, s), &[a, s])
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a), &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a), &[a])
    }

    pub fn gather_rows(&mut self, a: NodeId, idx: Rc<Vec<usize>>) -> NodeId {
        let v = self.value(a).select_rows(&idx);
        self.push(v, Op::GatherRows(a, idx), &[a])
    }

    /// Row `o` of the result is the sum of rows `lists[o]` of `a`.
    pub fn gather_sum(&mut self, a: NodeId, lists: Rc<Vec<Vec<usize>>>) -> NodeId {
        let av = self.value(a);
        let mut v = Matrix::zeros(lists.len(), av.cols());
        for (o, list) in lists.iter().enumerate() {
            let row = v.row_mut(o);
            for &i in list {
                for (x, y) in row.iter_mut().zip(av.row(i)) {
                    *x += y;
                }
            }
        }
        self.push(v, Op::GatherSum(a, lists), &[a])
    }

    /// Column-wise softmax within each row segment `offsets[s]..offsets[s+1]`.
    pub fn segment_softmax(&mut self, a: NodeId, offsets: Rc<Vec<usize>>) -> NodeId {
        let av = self.value(a);
        let mut v = av.clone();
        let mut buf = Vec::new();
        for seg in segments(&offsets) {
            for c in 0..av.cols() {
                buf.clear();
                buf.extend(seg.clone().map(|r| av.get(r, c)));
                softmax_in_place(&mut buf);
                for (r, &p) in seg.clone().zip(&buf) {
                    v.set(r, c, p);
                }
            }
        }
        self.push(v, Op::SegmentSoftmax(a, offsets), &[a])
    }

    /// `out[x, h] = scale · Σ_{c in block h} query[c] · keys[x, c]`, with the
    /// columns split into `heads` equal blocks.
    pub fn head_dot(&mut self, keys: NodeId, query: NodeId, heads: usize, scale: f64) -> NodeId {
        let (kv, qv) = (self.value(keys), self.value(query));
        check("head_dot", (1, kv.cols()), qv.shape());
        assert_eq!(
            kv.cols() % heads,
            0,
            "head_dot: width not divisible by heads"
        );
        let dk = kv.cols() / heads;
        let mut v = Matrix::zeros(kv.rows(), heads);
        for x in 0..kv.rows() {
            let row = kv.row(x);
            for h in 0..heads {
                let s: f64 = (h * dk..(h + 1) * dk).map(|c| qv.data()[c] * row[c]).sum();
                v.set(x, h, scale * s);
            }
        }
        self.push(
            v,
            Op::HeadDot {
                keys,
                query,
                heads,
                scale,
            },
            &[keys, query],
        )
    }

    /// Attention pooling per row segment. With `shared = false`, head `h`
    /// pools column block `h` of `values`; with `shared = true`, every head
    /// pools all columns. Head outputs are concatenated.
    pub fn attn_pool(
        &mut self,
        alpha: NodeId,
        values: NodeId,
        offsets: Rc<Vec<usize>>,
        shared: bool,
    ) -> NodeId {
        let (av, vv) = (self.value(alpha), self.value(values));
        assert_eq!(av.rows(), vv.rows(), "attn_pool rows");
        let heads = av.cols();
        let dv = if shared { vv.cols() } else { vv.cols() / heads };
        assert!(
            shared || vv.cols() % heads == 0,
            "attn_pool: width not divisible by heads"
        );
        let mut v = Matrix::zeros(offsets.len() - 1, heads * dv);
        for (g, seg) in segments(&offsets).enumerate() {
            for x in seg {
                let vrow = vv.row(x);
                for h in 0..heads {
                    let a = av.get(x, h);
                    let src = if shared { 0 } else { h * dv };
                    let out = &mut v.row_mut(g)[h * dv..(h + 1) * dv];
                    for (o, s) in out.iter_mut().zip(&vrow[src..src + dv]) {
                        *o += a * s;
                    }
                }
            }
        }
        self.push(
            v,
            Op::AttnPool {
                alpha,
                values,
                offsets,
                shared,
            },
            &[alpha, values],
        )
    }

    /// Column vector of Euclidean distances `‖a[i] − b[j]‖` for each pair.
    pub fn pair_dist(&mut self, a: NodeId, b: NodeId, pairs: Rc<Vec<(usize, usize)>>) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols(), bv.cols(), "pair_dist width");
        let d = pairs
            .iter()
            .map(|&(i, j)| {
                av.row(i)
                    .iter()
                    .zip(bv.row(j))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        self.push(Matrix::column_vector(d), Op::PairDist(a, b, pairs), &[a, b])
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Matrix::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a), &[a])
    }

    /// Mean of all entries; 0 for an empty matrix.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let m = if av.is_empty() {
            0.0
        } else {
            av.sum() / av.len() as f64
        };
        self.push(Matrix::scalar(m), Op::Mean(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        for r in 0..v.rows() {
            softmax_in_place(v.row_mut(r));
        }
        self.push(v, Op::SoftmaxRows(a), &[a])
    }

    pub fn pick(&mut self, a: NodeId, r: usize, c: usize) -> NodeId {
        let v = Matrix::scalar(self.value(a).get(r, c));
        self.push(v, Op::Pick(a, r, c), &[a])
    }

    /// Elementwise smooth-L1 (threshold 1) against a constant target.
    pub fn smooth_l1(&mut self, a: NodeId, target: Matrix) -> NodeId {
        check("smooth_l1", self.value(a).shape(), target.shape());
        let mut v = self.value(a).clone();
        for (x, t) in v.data_mut().iter_mut().zip(target.data()) {
            let d = *x - t;
            *x = if d.abs() < 1.0 {
                0.5 * d * d
            } else {
                d.abs() - 0.5
            };
        }
        self.push(v, Op::SmoothL1(a, target), &[a])
    }

    /// Elementwise binary cross-entropy of logits against constant targets.
    pub fn bce_logits(&mut self, a: NodeId, target: Matrix) -> NodeId {
        check("bce_logits", self.value(a).shape(), target.shape());
        let mut v = self.value(a).clone();
        for (x, t) in v.data_mut().iter_mut().zip(target.data()) {
            *x = x.max(0.0) - *x * t + (-x.abs()).exp().ln_1p();
        }
        self.push(v, Op::BceLogits(a, target), &[a])
    }

    /// Per-row standardisation (zero mean, unit variance), no affine part.
    pub fn row_norm(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        for r in 0..v.rows() {
            let row = v.row_mut(r);
            let n = row.len() as f64;
            let mu = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
            let inv = 1.0 / (var + ROW_NORM_EPS).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mu) * inv;
            }
        }
        self.push(v, Op::RowNorm(a), &[a])
    }

    /// Exact gradients of the 1x1 node `loss` for all trainable leaves.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, TapeError> {
        let (r, c) = self.value(loss).shape();
        if (r, c) != (1, 1) {
            return Err(TapeError::NotScalar(r, c));
        }
        let mut grads: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));
        let mut out = Gradients::default();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads, &mut out);
        }
        Ok(out)
    }

    fn slot<'a>(&self, grads: &'a mut [Option<Matrix>], id: NodeId) -> Option<&'a mut Matrix> {
        let node = &self.nodes[id.0];
        if !node.needs_grad {
            return None;
        }
        let (r, c) = node.value.shape();
        Some(grads[id.0].get_or_insert_with(|| Matrix::zeros(r, c)))
    }

    fn propagate(
        &self,
        node: &Node,
        g: &Matrix,
        grads: &mut [Option<Matrix>],
        out: &mut Gradients,
    ) {
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => {
                out.merge(Gradients(BTreeMap::from([(*id, g.clone())])));
            }
            Op::MatMul(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    gemm(false, g, true, &self.nodes[b.0].value, 1.0, ga);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    gemm(true, &self.nodes[a.0].value, false, g, 1.0, gb);
                }
            }
            Op::AddRow(a, bias) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.slot(grads, *bias) {
                    for r in 0..g.rows() {
                        for (x, y) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *x += y;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    gb.add_assign(g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for (x, y) in gb.data_mut().iter_mut().zip(g.data()) {
                        *x -= y;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                if let Some(ga) = self.slot(grads, *a) {
                    for ((x, d), y) in ga.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                        *x += d * y;
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for ((x, d), y) in gb.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                        *x += d * y;
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for (x, d) in ga.data_mut().iter_mut().zip(g.data()) {
                        *x += s * d;
                    }
                }
            }
            Op::ScaleBy(a, s) => {
                let sv = self.nodes[s.0].value.item();
                if let Some(ga) = self.slot(grads, *a) {
                    for (x, d) in ga.data_mut().iter_mut().zip(g.data()) {
                        *x += sv * d;
                    }
                }
                let av = &self.nodes[a.0].value;
                if let Some(gs) = self.slot(grads, *s) {
                    gs.data_mut()[0] += g
                        .data()
                        .iter()
                        .zip(av.data())
                        .map(|(d, x)| d * x)
                        .sum::<f64>();
                }
            }
            Op::AddScalar(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.add_assign(g);
                }
            }
            Op::Relu(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for ((x, d), y) in ga
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(node.value.data())
                    {
                        if *y > 0.0 {
                            *x += d;
                        }
                    }
                }
            }
            Op::GatherRows(a, idx) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for (o, &i) in idx.iter().enumerate() {
                        for (x, d) in ga.row_mut(i).iter_mut().zip(g.row(o)) {
                            *x += d;
                        }
                    }
                }
            }
            Op::GatherSum(a, lists) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for (o, list) in lists.iter().enumerate() {
                        for &i in list {
                            for (x, d) in ga.row_mut(i).iter_mut().zip(g.row(o)) {
                                *x += d;
                            }
                        }
                    }
                }
            }
            Op::SegmentSoftmax(a, offsets) => {
                if let Some(ga) = self.slot(grads, *a) {
                    let y = &node.value;
                    for seg in segments(offsets) {
                        for c in 0..y.cols() {
                            let dot: f64 = seg.clone().map(|r| y.get(r, c) * g.get(r, c)).sum();
                            for r in seg.clone() {
                                let cur = ga.get(r, c);
                                ga.set(r, c, cur + y.get(r, c) * (g.get(r, c) - dot));
                            }
                        }
                    }
                }
            }
            Op::HeadDot {
                keys,
                query,
                heads,
                scale,
            } => {
                let (kv, qv) = (&self.nodes[keys.0].value, &self.nodes[query.0].value);
                let dk = kv.cols() / heads;
                if let Some(gk) = self.slot(grads, *keys) {
                    for x in 0..kv.rows() {
                        let row = gk.row_mut(x);
                        for h in 0..*heads {
                            let d = scale * g.get(x, h);
                            for c in h * dk..(h + 1) * dk {
                                row[c] += d * qv.data()[c];
                            }
                        }
                    }
                }
                if let Some(gq) = self.slot(grads, *query) {
                    for x in 0..kv.rows() {
                        let row = kv.row(x);
                        for h in 0..*heads {
                            let d = scale * g.get(x, h);
                            for c in h * dk..(h + 1) * dk {
                                gq.data_mut()[c] += d * row[c];
                            }
                        }
                    }
                }
            }
            Op::AttnPool {
                alpha,
                values,
                offsets,
                shared,
            } => {
                let (av, vv) = (&self.nodes[alpha.0].value, &self.nodes[values.0].value);
                let heads = av.cols();
                let dv = if *shared {
                    vv.cols()
                } else {
                    vv.cols() / heads
                };
                if let Some(ga) = self.slot(grads, *alpha) {
                    for (gi, seg) in segments(offsets).enumerate() {
                        let grow = g.row(gi);
                        for x in seg {
                            let vrow = vv.row(x);
                            for h in 0..heads {
                                let src = if *shared { 0 } else { h * dv };
                                let s: f64 = grow[h * dv..(h + 1) * dv]
                                    .iter()
                                    .zip(&vrow[src..src + dv])
                                    .map(|(p, q)| p * q)
                                    .sum();
                                let cur = ga.get(x, h);
                                ga.set(x, h, cur + s);
                            }
                        }
                    }
                }
                if let Some(gv) = self.slot(grads, *values) {
                    for (gi, seg) in segments(offsets).enumerate() {
                        let grow = g.row(gi);
                        for x in seg {
                            for h in 0..heads {
                                let a = av.get(x, h);
                                let src = if *shared { 0 } else { h * dv };
                                let row = &mut gv.row_mut(x)[src..src + dv];
                                for (t, d) in row.iter_mut().zip(&grow[h * dv..(h + 1) * dv]) {
                                    *t += a * d;
                                }
                            }
                        }
                    }
                }
            }
            Op::PairDist(a, b, pairs) => {
                let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                // the gradient of a zero distance is taken as zero
                let dirs: Vec<Option<Vec<f64>>> = pairs
                    .iter()
                    .enumerate()
                    .map(|(p, &(i, j))| {
                        let d = node.value.data()[p];
                        (d > 0.0).then(|| {
                            av.row(i)
                                .iter()
                                .zip(bv.row(j))
                                .map(|(x, y)| g.data()[p] * (x - y) / d)
                                .collect()
                        })
                    })
                    .collect();
                if let Some(ga) = self.slot(grads, *a) {
                    for (&(i, _), dir) in pairs.iter().zip(&dirs) {
                        if let Some(dir) = dir {
                            for (x, d) in ga.row_mut(i).iter_mut().zip(dir) {
                                *x += d;
                            }
                        }
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for (&(_, j), dir) in pairs.iter().zip(&dirs) {
                        if let Some(dir) = dir {
                            for (x, d) in gb.row_mut(j).iter_mut().zip(dir) {
                                *x -= d;
                            }
                        }
                    }
                }
            }
            Op::Sum(a) => {
                let d = g.item();
                if let Some(ga) = self.slot(grads, *a) {
                    for x in ga.data_mut() {
                        *x += d;
                    }
                }
            }
            Op::Mean(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    let d = g.item() / ga.len().max(1) as f64;
                    for x in ga.data_mut() {
                        *x += d;
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                if let Some(ga) = self.slot(grads, *a) {
                    let y = &node.value;
                    for r in 0..y.rows() {
                        let dot: f64 = y.row(r).iter().zip(g.row(r)).map(|(p, q)| p * q).sum();
                        for ((x, p), d) in ga.row_mut(r).iter_mut().zip(y.row(r)).zip(g.row(r)) {
                            *x += p * (d - dot);
                        }
                    }
                }
            }
            Op::Pick(a, r, c) => {
                if let Some(ga) = self.slot(grads, *a) {
                    let cur = ga.get(*r, *c);
                    ga.set(*r, *c, cur + g.item());
                }
            }
            Op::SmoothL1(a, t) => {
                let av = &self.nodes[a.0].value;
                if let Some(ga) = self.slot(grads, *a) {
                    for (((x, d), v), t) in ga
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(av.data())
                        .zip(t.data())
                    {
                        let diff = v - t;
                        *x += d * if diff.abs() < 1.0 {
                            diff
                        } else {
                            diff.signum()
                        };
                    }
                }
            }
            Op::BceLogits(a, t) => {
                let av = &self.nodes[a.0].value;
                if let Some(ga) = self.slot(grads, *a) {
                    for (((x, d), v), t) in ga
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(av.data())
                        .zip(t.data())
                    {
                        let s = 1.0 / (1.0 + (-v).exp());
                        *x += d * (s - t);
                    }
                }
            }
            Op::RowNorm(a) => {
                let av = &self.nodes[a.0].value;
                if let Some(ga) = self.slot(grads, *a) {
                    let y = &node.value;
                    for r in 0..y.rows() {
                        let xs = av.row(r);
                        let n = xs.len() as f64;
                        let mu = xs.iter().sum::<f64>() / n;
                        let var = xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
                        let inv = 1.0 / (var + ROW_NORM_EPS).sqrt();
                        let gy = g.row(r);
                        let mean_g = gy.iter().sum::<f64>() / n;
                        let mean_gy = gy.iter().zip(y.row(r)).map(|(p, q)| p * q).sum::<f64>() / n;
                        for ((x, d), yy) in ga.row_mut(r).iter_mut().zip(gy).zip(y.row(r)) {
                            *x += inv * (d - mean_g - yy * mean_gy);
                        }
                    }
                }
            }
        }
    }
}
