//! Reverse-mode differentiation over a dynamically recorded tape.
//!
//! A [`Tape`] records one forward pass as a Wengert list: every operation
//! appends a node holding its output value and the ids of its inputs, so
//! insertion order is already a topological order. [`Tape::backward`] walks
//! the list once in reverse, accumulating gradients; shared subexpressions
//! therefore sum their contributions. Inputs are never mutated and every
//! recorded output is checked finite.

use super::array::Array;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    SoftmaxRows(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        eps: f64,
    },
    AddRowBias {
        x: NodeId,
        bias: NodeId,
    },
    ConcatCols(Vec<NodeId>),
    SliceCols {
        x: NodeId,
        start: usize,
        stop: usize,
    },
    SliceRows {
        x: NodeId,
        start: usize,
        stop: usize,
    },
    GatherRows {
        x: NodeId,
        idx: Vec<usize>,
    },
    /// Mean over contiguous row segments; `bounds` has one extra entry and
    /// segment `i` covers input rows `bounds[i]..bounds[i+1]`. Empty segments
    /// yield a zero row.
    SegmentMeanRows {
        x: NodeId,
        bounds: Vec<usize>,
    },
    MeanRows(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    Transpose(NodeId),
    Reshape(NodeId),
}

struct Node {
    value: Array,
    op: Op,
    is_param: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Array>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Array> {
        self.grads[id.0].as_ref()
    }

    pub fn take(&mut self, id: NodeId) -> Option<Array> {
        self.grads[id.0].take()
    }

    /// Gradient of a node, densified to its value shape when it never
    /// received a contribution.
    pub fn take_or_zeros(&mut self, id: NodeId, tape: &Tape) -> Array {
        self.grads[id.0].take().unwrap_or_else(|| {
            let v = tape.value(id);
            Array::with_shape_of(v, vec![0.0; v.len()])
        })
    }
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

    pub fn value(&self, id: NodeId) -> &Array {
        &self.nodes[id.0].value
    }

    pub fn is_param(&self, id: NodeId) -> bool {
        self.nodes[id.0].is_param
    }

    /// Record an input that does not require a gradient.
    pub fn constant(&mut self, value: Array) -> Result<NodeId> {
        self.push("constant", value, Op::Leaf, false)
    }

    /// Record a trainable leaf; backward always populates its gradient.
    pub fn param(&mut self, value: Array) -> Result<NodeId> {
        self.push("param", value, Op::Leaf, true)
    }

    fn push(&mut self, what: &str, value: Array, op: Op, is_param: bool) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::Numerical(format!(
                "non-finite values produced by {what}"
            )));
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            value,
            op,
            is_param,
        });
        Ok(id)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, ka) = self.value(a).dims2()?;
        let (kb, n) = self.value(b).dims2()?;
        if ka != kb {
            return Err(Error::Dimension(format!(
                "matmul: inner dimensions differ ({m}x{ka} vs {kb}x{n})"
            )));
        }
        let out = matmul_nn(self.value(a), self.value(b));
        self.push("matmul", out, Op::MatMul(a, b), false)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = elementwise(self.value(a), self.value(b), "add", |x, y| x + y)?;
        self.push("add", out, Op::Add(a, b), false)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = elementwise(self.value(a), self.value(b), "sub", |x, y| x - y)?;
        self.push("sub", out, Op::Sub(a, b), false)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = elementwise(self.value(a), self.value(b), "mul", |x, y| x * y)?;
        self.push("mul", out, Op::Mul(a, b), false)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let v = self.value(a);
        let out = Array::with_shape_of(v, v.data().iter().map(|x| x * c).collect());
        self.push("scale", out, Op::Scale(a, c), false)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a);
        let out = Array::with_shape_of(v, v.data().iter().map(|x| x.max(0.0)).collect());
        self.push("relu", out, Op::Relu(a), false)
    }

    /// Row-wise softmax, stabilized by row-max subtraction.
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a);
        let (m, n) = v.dims2()?;
        let mut data = vec![0.0; m * n];
        for r in 0..m {
            let row = v.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out = &mut data[r * n..(r + 1) * n];
            let mut sum = 0.0;
            for (o, &x) in out.iter_mut().zip(row) {
                *o = (x - max).exp();
                sum += *o;
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
        }
        let out = Array::matrix(m, n, data)?;
        self.push("softmax_rows", out, Op::SoftmaxRows(a), false)
    }

    /// Per-row normalization to zero mean / unit variance followed by an
    /// affine transform (`gain`, `bias` are `1 x d`).
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> Result<NodeId> {
        let v = self.value(x);
        let (m, d) = v.dims2()?;
        if d < 2 {
            return Err(Error::Dimension(format!(
                "layer_norm: feature dimension must be >= 2, got {d}"
            )));
        }
        if eps <= 0.0 {
            return Err(Error::Validation("layer_norm: eps must be positive".into()));
        }
        let g = self.value(gain);
        let b = self.value(bias);
        if g.len() != d || b.len() != d {
            return Err(Error::Dimension(format!(
                "layer_norm: gain/bias length must equal {d}, got {}/{}",
                g.len(),
                b.len()
            )));
        }
        let (gd, bd) = (g.data().to_vec(), b.data().to_vec());
        let mut data = vec![0.0; m * d];
        for r in 0..m {
            let row = v.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d as f64;
            let s = (var + eps).sqrt();
            let out = &mut data[r * d..(r + 1) * d];
            for c in 0..d {
                out[c] = (row[c] - mean) / s * gd[c] + bd[c];
            }
        }
        let out = Array::matrix(m, d, data)?;
        self.push("layer_norm", out, Op::LayerNorm { x, gain, bias, eps }, false)
    }

    /// Row-broadcast bias add: every row of `x` gets `bias` (`1 x n`) added.
    /// This is the only broadcasting the engine performs.
    pub fn add_row_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        let (m, n) = v.dims2()?;
        let b = self.value(bias);
        if b.len() != n {
            return Err(Error::Dimension(format!(
                "add_row_bias: bias length {} != column count {n}",
                b.len()
            )));
        }
        let bd = b.data().to_vec();
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            for (xv, bv) in v.row(r).iter().zip(&bd) {
                data.push(xv + bv);
            }
        }
        let out = Array::matrix(m, n, data)?;
        self.push("add_row_bias", out, Op::AddRowBias { x, bias }, false)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Contract("concat_cols: no inputs".into()));
        }
        let (m, _) = self.value(parts[0]).dims2()?;
        let mut total = 0;
        for &p in parts {
            let (pm, pc) = self.value(p).dims2()?;
            if pm != m {
                return Err(Error::Dimension(format!(
                    "concat_cols: row counts differ ({m} vs {pm})"
                )));
            }
            total += pc;
        }
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Array::matrix(m, total, data)?;
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()), false)
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, stop: usize) -> Result<NodeId> {
        let v = self.value(x);
        let (m, n) = v.dims2()?;
        if start >= stop || stop > n {
            return Err(Error::Dimension(format!(
                "slice_cols: range {start}..{stop} invalid for {n} columns"
            )));
        }
        let w = stop - start;
        let mut data = Vec::with_capacity(m * w);
        for r in 0..m {
            data.extend_from_slice(&v.row(r)[start..stop]);
        }
        let out = Array::matrix(m, w, data)?;
        self.push("slice_cols", out, Op::SliceCols { x, start, stop }, false)
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, stop: usize) -> Result<NodeId> {
        let v = self.value(x);
        let (m, n) = v.dims2()?;
        if start >= stop || stop > m {
            return Err(Error::Dimension(format!(
                "slice_rows: range {start}..{stop} invalid for {m} rows"
            )));
        }
        let data = v.data()[start * n..stop * n].to_vec();
        let out = Array::matrix(stop - start, n, data)?;
        self.push("slice_rows", out, Op::SliceRows { x, start, stop }, false)
    }

    /// Output row `e` is input row `idx[e]`; indices may repeat.
    pub fn gather_rows(&mut self, x: NodeId, idx: &[usize]) -> Result<NodeId> {
        let v = self.value(x);
        let (m, n) = v.dims2()?;
        if idx.is_empty() {
            return Err(Error::Contract("gather_rows: empty index list".into()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(Error::Dimension(format!(
                "gather_rows: index {bad} out of range for {m} rows"
            )));
        }
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            data.extend_from_slice(v.row(i));
        }
        let out = Array::matrix(idx.len(), n, data)?;
        self.push(
            "gather_rows",
            out,
            Op::GatherRows {
                x,
                idx: idx.to_vec(),
            },
            false,
        )
    }

    /// Mean over contiguous row segments (see [`Op::SegmentMeanRows`]).
    pub fn segment_mean_rows(&mut self, x: NodeId, bounds: &[usize]) -> Result<NodeId> {
        let v = self.value(x);
        let (m, n) = v.dims2()?;
        if bounds.len() < 2 || bounds[0] != 0 || *bounds.last().unwrap() != m {
            return Err(Error::Contract(format!(
                "segment_mean_rows: bounds must start at 0 and end at {m}"
            )));
        }
        if bounds.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Contract(
                "segment_mean_rows: bounds must be non-decreasing".into(),
            ));
        }
        let segs = bounds.len() - 1;
        let mut data = vec![0.0; segs * n];
        for s in 0..segs {
            let (lo, hi) = (bounds[s], bounds[s + 1]);
            if hi == lo {
                continue; // empty neighborhood: mean message defined as zero
            }
            let out = &mut data[s * n..(s + 1) * n];
            for r in lo..hi {
                for (o, &xv) in out.iter_mut().zip(v.row(r)) {
                    *o += xv;
                }
            }
            let inv = 1.0 / (hi - lo) as f64;
            for o in out.iter_mut() {
                *o *= inv;
            }
        }
        let out = Array::matrix(segs, n, data)?;
        self.push(
            "segment_mean_rows",
            out,
            Op::SegmentMeanRows {
                x,
                bounds: bounds.to_vec(),
            },
            false,
        )
    }

    /// Mean of the rows: `m x n -> 1 x n`.
    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        let (m, n) = v.dims2()?;
        let mut data = vec![0.0; n];
        for r in 0..m {
            for (o, &xv) in data.iter_mut().zip(v.row(r)) {
                *o += xv;
            }
        }
        for o in data.iter_mut() {
            *o /= m as f64;
        }
        let out = Array::matrix(1, n, data)?;
        self.push("mean_rows", out, Op::MeanRows(x), false)
    }

    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).data().iter().sum::<f64>();
        self.push("sum_all", Array::scalar(s), Op::SumAll(x), false)
    }

    pub fn mean_all(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push("mean_all", Array::scalar(s), Op::MeanAll(x), false)
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        let (m, n) = v.dims2()?;
        let mut data = vec![0.0; m * n];
        for r in 0..m {
            for c in 0..n {
                data[c * m + r] = v.get(r, c);
            }
        }
        let out = Array::matrix(n, m, data)?;
        self.push("transpose", out, Op::Transpose(x), false)
    }

    pub fn reshape(&mut self, x: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let v = self.value(x);
        if rows * cols != v.len() {
            return Err(Error::Dimension(format!(
                "reshape: {rows}x{cols} incompatible with {} elements",
                v.len()
            )));
        }
        let out = Array::matrix(rows, cols, v.data().to_vec())?;
        self.push("reshape", out, Op::Reshape(x), false)
    }

    /// Backpropagate from a scalar loss node. Returns one gradient slot per
    /// node; parameters always get a (possibly zero) gradient.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Array>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array::with_shape_of(self.value(loss), vec![1.0]));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        // Parameters untouched by the loss still report a zero gradient.
        for (i, node) in self.nodes.iter().enumerate() {
            if node.is_param && grads[i].is_none() {
                grads[i] = Some(Array::with_shape_of(
                    &node.value,
                    vec![0.0; node.value.len()],
                ));
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &Array, grads: &mut [Option<Array>]) -> Result<()> {
        let acc = |grads: &mut [Option<Array>], id: NodeId, delta: Array| {
            match &mut grads[id.0] {
                Some(existing) => {
                    for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                        *e += d;
                    }
                }
                slot => *slot = Some(delta),
            }
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(grads, *a, matmul_nt(g, bv));
                acc(grads, *b, matmul_tn(av, g));
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                let neg = Array::with_shape_of(g, g.data().iter().map(|v| -v).collect());
                acc(grads, *b, neg);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(
                    grads,
                    *a,
                    Array::with_shape_of(
                        g,
                        g.data().iter().zip(bv.data()).map(|(gv, v)| gv * v).collect(),
                    ),
                );
                acc(
                    grads,
                    *b,
                    Array::with_shape_of(
                        g,
                        g.data().iter().zip(av.data()).map(|(gv, v)| gv * v).collect(),
                    ),
                );
            }
            Op::Scale(a, c) => {
                acc(
                    grads,
                    *a,
                    Array::with_shape_of(g, g.data().iter().map(|v| v * c).collect()),
                );
            }
            Op::Relu(a) => {
                let xv = self.value(*a);
                acc(
                    grads,
                    *a,
                    Array::with_shape_of(
                        g,
                        g.data()
                            .iter()
                            .zip(xv.data())
                            .map(|(gv, &x)| if x > 0.0 { *gv } else { 0.0 })
                            .collect(),
                    ),
                );
            }
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[i].value;
                let (m, n) = (y.rows(), y.cols());
                let mut dx = vec![0.0; m * n];
                for r in 0..m {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let dot: f64 = yr.iter().zip(gr).map(|(yv, gv)| yv * gv).sum();
                    let out = &mut dx[r * n..(r + 1) * n];
                    for c in 0..n {
                        out[c] = yr[c] * (gr[c] - dot);
                    }
                }
                acc(grads, *a, Array::matrix(m, n, dx).unwrap());
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                let xv = self.value(*x);
                let gv = self.value(*gain);
                let (m, d) = (xv.rows(), xv.cols());
                let df = d as f64;
                let mut dx = vec![0.0; m * d];
                let mut dgain = vec![0.0; d];
                let mut dbias = vec![0.0; d];
                for r in 0..m {
                    let row = xv.row(r);
                    let gr = g.row(r);
                    let mean = row.iter().sum::<f64>() / df;
                    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / df;
                    let s = (var + eps).sqrt();
                    // dy through the affine: dhat = g * gain
                    let mut mean_dhat = 0.0;
                    let mut mean_dhat_xhat = 0.0;
                    let mut xhat = vec![0.0; d];
                    let mut dhat = vec![0.0; d];
                    for c in 0..d {
                        xhat[c] = (row[c] - mean) / s;
                        dhat[c] = gr[c] * gv.data()[c];
                        dgain[c] += gr[c] * xhat[c];
                        dbias[c] += gr[c];
                        mean_dhat += dhat[c];
                        mean_dhat_xhat += dhat[c] * xhat[c];
                    }
                    mean_dhat /= df;
                    mean_dhat_xhat /= df;
                    let out = &mut dx[r * d..(r + 1) * d];
                    for c in 0..d {
                        out[c] = (dhat[c] - mean_dhat - xhat[c] * mean_dhat_xhat) / s;
                    }
                }
                acc(grads, *x, Array::matrix(m, d, dx).unwrap());
                let gshape = self.value(*gain);
                acc(grads, *gain, Array::with_shape_of(gshape, dgain));
                let bshape = self.value(*bias);
                acc(grads, *bias, Array::with_shape_of(bshape, dbias));
            }
            Op::AddRowBias { x, bias } => {
                acc(grads, *x, g.clone());
                let (m, n) = (g.rows(), g.cols());
                let mut db = vec![0.0; n];
                for r in 0..m {
                    for (o, &gv) in db.iter_mut().zip(g.row(r)) {
                        *o += gv;
                    }
                }
                let bshape = self.value(*bias);
                acc(grads, *bias, Array::with_shape_of(bshape, db));
            }
            Op::ConcatCols(parts) => {
                let m = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let mut data = Vec::with_capacity(m * w);
                    for r in 0..m {
                        data.extend_from_slice(&g.row(r)[offset..offset + w]);
                    }
                    acc(grads, p, Array::matrix(m, w, data).unwrap());
                    offset += w;
                }
            }
            Op::SliceCols { x, start, stop } => {
                let xv = self.value(*x);
                let (m, n) = (xv.rows(), xv.cols());
                let mut dx = vec![0.0; m * n];
                for r in 0..m {
                    let gr = g.row(r);
                    dx[r * n + start..r * n + stop].copy_from_slice(gr);
                }
                acc(grads, *x, Array::matrix(m, n, dx).unwrap());
            }
            Op::SliceRows { x, start, stop } => {
                let xv = self.value(*x);
                let (m, n) = (xv.rows(), xv.cols());
                let mut dx = vec![0.0; m * n];
                dx[start * n..stop * n].copy_from_slice(g.data());
                acc(grads, *x, Array::matrix(m, n, dx).unwrap());
            }
            Op::GatherRows { x, idx } => {
                let xv = self.value(*x);
                let (m, n) = (xv.rows(), xv.cols());
                let mut dx = vec![0.0; m * n];
                for (e, &src) in idx.iter().enumerate() {
                    let gr = g.row(e);
                    let out = &mut dx[src * n..(src + 1) * n];
                    for (o, &gv) in out.iter_mut().zip(gr) {
                        *o += gv;
                    }
                }
                acc(grads, *x, Array::matrix(m, n, dx).unwrap());
            }
            Op::SegmentMeanRows { x, bounds } => {
                let xv = self.value(*x);
                let (m, n) = (xv.rows(), xv.cols());
                let mut dx = vec![0.0; m * n];
                for s in 0..bounds.len() - 1 {
                    let (lo, hi) = (bounds[s], bounds[s + 1]);
                    if hi == lo {
                        continue;
                    }
                    let inv = 1.0 / (hi - lo) as f64;
                    let gr = g.row(s);
                    for r in lo..hi {
                        let out = &mut dx[r * n..(r + 1) * n];
                        for (o, &gv) in out.iter_mut().zip(gr) {
                            *o += gv * inv;
                        }
                    }
                }
                acc(grads, *x, Array::matrix(m, n, dx).unwrap());
            }
            Op::MeanRows(x) => {
                let xv = self.value(*x);
                let (m, n) = (xv.rows(), xv.cols());
                let inv = 1.0 / m as f64;
                let gr = g.row(0);
                let mut dx = Vec::with_capacity(m * n);
                for _ in 0..m {
                    dx.extend(gr.iter().map(|&gv| gv * inv));
                }
                acc(grads, *x, Array::matrix(m, n, dx).unwrap());
            }
            Op::SumAll(x) => {
                let xv = self.value(*x);
                let gv = g.data()[0];
                acc(grads, *x, Array::with_shape_of(xv, vec![gv; xv.len()]));
            }
            Op::MeanAll(x) => {
                let xv = self.value(*x);
                let gv = g.data()[0] / xv.len() as f64;
                acc(grads, *x, Array::with_shape_of(xv, vec![gv; xv.len()]));
            }
            Op::Transpose(x) => {
                let (m, n) = (g.rows(), g.cols());
                let mut dx = vec![0.0; m * n];
                for r in 0..m {
                    for c in 0..n {
                        dx[c * m + r] = g.get(r, c);
                    }
                }
                acc(grads, *x, Array::matrix(n, m, dx).unwrap());
            }
            Op::Reshape(x) => {
                let xv = self.value(*x);
                acc(grads, *x, Array::with_shape_of(xv, g.data().to_vec()));
            }
        }
        Ok(())
    }
}

fn elementwise(
    a: &Array,
    b: &Array,
    what: &str,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Array> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "{what}: shapes differ ({:?} vs {:?})",
            a.shape(),
            b.shape()
        )));
    }
    Ok(Array::with_shape_of(
        a,
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| f(*x, *y))
            .collect(),
    ))
}

/// `a (m x k) . b (k x n)`, ikj order so the inner loop runs over contiguous
/// rows of both `out` and `b`. Zero entries of `a` are skipped, which makes
/// gather/aggregate matrices cheap.
pub(crate) fn matmul_nn(a: &Array, b: &Array) -> Array {
    let m = a.rows();
    let n = b.cols();
    let mut data = vec![0.0; m * n];
    for i in 0..m {
        let arow = a.row(i);
        let orow = &mut data[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av != 0.0 {
                let brow = &b.data()[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
    Array::matrix(m, n, data).unwrap()
}

/// `g (m x n) . b^T (n x k)` without materializing the transpose.
fn matmul_nt(g: &Array, b: &Array) -> Array {
    let m = g.rows();
    let k = b.rows();
    let mut data = vec![0.0; m * k];
    for i in 0..m {
        let grow = g.row(i);
        let orow = &mut data[i * k..(i + 1) * k];
        for (p, o) in orow.iter_mut().enumerate() {
            let brow = b.row(p);
            *o = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    Array::matrix(m, k, data).unwrap()
}

/// `a^T (k x m) . g (m x n)` without materializing the transpose.
fn matmul_tn(a: &Array, g: &Array) -> Array {
    let (m, k) = (a.rows(), a.cols());
    let n = g.cols();
    let mut data = vec![0.0; k * n];
    for i in 0..m {
        let arow = a.row(i);
        let grow = g.row(i);
        for (p, &av) in arow.iter().enumerate() {
            if av != 0.0 {
                let orow = &mut data[p * n..(p + 1) * n];
                for (o, &gv) in orow.iter_mut().zip(grow) {
                    *o += av * gv;
                }
            }
        }
    }
    Array::matrix(k, n, data).unwrap()
}
