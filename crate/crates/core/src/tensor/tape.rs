use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;

use super::sparse::{AggregationMode, Propagation};
use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::graph::CsrAdjacency;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
    rows: usize,
    cols: usize,
}

impl Var {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    SubRow(Var, Var),
    ScaleBy(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    PowI(Var, u32),
    SqrtEps(Var),
    Sum(Var),
    MeanRows(Var),
    SliceRows(Var, usize),
    SegmentMean(Var, Arc<[usize]>),
    Dropout(Var, Vec<f64>),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Propagate(Var, Arc<Propagation>),
    WeightedCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        weights: Vec<f64>,
        probs: Vec<f64>,
        norm: f64,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Per-feature statistics of one batch-norm forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (1/n) variance.
    pub var: Vec<f64>,
    pub count: usize,
}

/// Gradient of a scalar with respect to every parameter that fed it.
#[derive(Clone, Debug)]
pub struct Gradients {
    by_param: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.by_param.get(id.0).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.by_param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }
}

/// Records operations in execution order; inputs always precede outputs.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::Autodiff("variable belongs to a different tape".into()));
        }
        Ok(())
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.index].requires_grad);
        let var = Var {
            tape: self.id,
            index: self.nodes.len(),
            rows: value.rows(),
            cols: value.cols(),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        var
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.index].value
    }

    /// Records a value that gradients do not flow into.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, &[])
    }

    /// Records parameter `id` as a differentiable leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.get(id).clone(), Op::Leaf, &[]);
        let node = &mut self.nodes[v.index];
        node.requires_grad = true;
        node.param = Some(id);
        v
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        if a.shape() != b.shape() {
            return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
        }
        Ok(())
    }

    fn row_broadcast(&self, op: &'static str, x: Var, row: Var) -> Result<()> {
        self.check(x)?;
        self.check(row)?;
        if row.rows != 1 || row.cols != x.cols {
            return Err(Error::shape(op, format!("{:?} with row {:?}", x.shape(), row.shape())));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.rows(), ta.cols(), data).unwrap()
    }

    fn map_rows(&self, x: Var, row: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (tx, tr) = (self.value(x), self.value(row));
        let c = tx.cols();
        let data = tx.data().iter().enumerate().map(|(i, &v)| f(v, tr.data()[i % c])).collect();
        Tensor::new(tx.rows(), c, data).unwrap()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(value, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    /// `x + row`, broadcasting a `1 x d` row over every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        self.row_broadcast("add_row", x, row)?;
        let value = self.map_rows(x, row, |v, r| v + r);
        Ok(self.push(value, Op::AddRow(x, row), &[x, row]))
    }

    /// `x - row`, broadcasting a `1 x d` row over every row of `x`.
    pub fn sub_row(&mut self, x: Var, row: Var) -> Result<Var> {
        self.row_broadcast("sub_row", x, row)?;
        let value = self.map_rows(x, row, |v, r| v - r);
        Ok(self.push(value, Op::SubRow(x, row), &[x, row]))
    }

    /// `x * s` for a `1 x 1` variable `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        self.check(x)?;
        self.check(s)?;
        if s.shape() != [1, 1] {
            return Err(Error::shape("scale_by", format!("scale has shape {:?}", s.shape())));
        }
        let k = self.value(s).item();
        let value = self.value(x).map(|v| v * k);
        Ok(self.push(value, Op::ScaleBy(x, s), &[x, s]))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Result<Var> {
        self.check(x)?;
        let value = self.value(x).map(|v| v * k);
        Ok(self.push(value, Op::Scale(x, k), &[x]))
    }

    pub fn add_scalar(&mut self, x: Var, k: f64) -> Result<Var> {
        self.check(x)?;
        let value = self.value(x).map(|v| v + k);
        Ok(self.push(value, Op::AddScalar(x), &[x]))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let value = self.value(x).map(|v| v.max(0.0));
        Ok(self.push(value, Op::Relu(x), &[x]))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let value = self.value(x).map(f64::tanh);
        Ok(self.push(value, Op::Tanh(x), &[x]))
    }

    /// Elementwise `x^k` for integer `k >= 1`.
    pub fn powi(&mut self, x: Var, k: u32) -> Result<Var> {
        self.check(x)?;
        if k < 1 {
            return Err(Error::InvalidArgument("pow exponent must be at least 1".into()));
        }
        let value = self.value(x).map(|v| v.powi(k as i32));
        Ok(self.push(value, Op::PowI(x, k), &[x]))
    }

    /// Elementwise `sqrt(x + eps)`.
    pub fn sqrt_eps(&mut self, x: Var, eps: f64) -> Result<Var> {
        self.check(x)?;
        let value = self.value(x).map(|v| (v + eps).sqrt());
        Ok(self.push(value, Op::SqrtEps(x), &[x]))
    }

    /// Sum of all entries, `1 x 1`.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let value = Tensor::scalar(self.value(x).data().iter().sum());
        Ok(self.push(value, Op::Sum(x), &[x]))
    }

    /// Mean over rows, `1 x d`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        if x.rows == 0 {
            return Err(Error::shape("mean_rows", "no rows"));
        }
        let value = self.value(x).column_means();
        Ok(self.push(value, Op::MeanRows(x), &[x]))
    }

    /// Rows `start..end` of `x`.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        self.check(x)?;
        if start > end || end > x.rows {
            return Err(Error::shape("slice_rows", format!("rows {start}..{end} of {}", x.rows)));
        }
        let c = x.cols;
        let data = self.value(x).data()[start * c..end * c].to_vec();
        let value = Tensor::new(end - start, c, data)?;
        Ok(self.push(value, Op::SliceRows(x, start), &[x]))
    }

    /// Mean of each contiguous row segment; `offsets` has one more entry than
    /// there are segments and every segment must be nonempty.
    pub fn segment_mean(&mut self, x: Var, offsets: Arc<[usize]>) -> Result<Var> {
        self.check(x)?;
        if offsets.first() != Some(&0) || offsets.last() != Some(&x.rows) || offsets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::shape("segment_mean", format!("offsets {offsets:?} for {} rows", x.rows)));
        }
        let c = x.cols;
        let src = self.value(x).data();
        let segments = offsets.len() - 1;
        let mut out = vec![0.0; segments * c];
        for s in 0..segments {
            let n = (offsets[s + 1] - offsets[s]) as f64;
            for r in offsets[s]..offsets[s + 1] {
                for j in 0..c {
                    out[s * c + j] += src[r * c + j];
                }
            }
            for o in &mut out[s * c..(s + 1) * c] {
                *o /= n;
            }
        }
        let value = Tensor::new(segments, c, out)?;
        Ok(self.push(value, Op::SegmentMean(x, offsets), &[x]))
    }

    /// Inverted dropout: zeroes entries with probability `p` and rescales the
    /// survivors by `1 / (1 - p)`. Identity when `train` is false.
    pub fn dropout<R: Rng>(&mut self, x: Var, p: f64, train: bool, rng: &mut R) -> Result<Var> {
        self.check(x)?;
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout probability {p} outside [0, 1)")));
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..x.rows * x.cols).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
        let tx = self.value(x);
        let data = tx.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(x.rows, x.cols, data)?;
        Ok(self.push(value, Op::Dropout(x, mask), &[x]))
    }

    /// Batch normalization over the row dimension using the statistics of `x`
    /// itself. Returns the normalized output and the batch statistics.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats)> {
        self.row_broadcast("batch_norm", x, gamma)?;
        self.row_broadcast("batch_norm", x, beta)?;
        if x.rows == 0 {
            return Err(Error::shape("batch_norm", "no rows"));
        }
        let tx = self.value(x);
        let (n, c) = (x.rows, x.cols);
        let mean = tx.column_means().into_data();
        let mut var = vec![0.0; c];
        for r in 0..n {
            for j in 0..c {
                let d = tx.data()[r * c + j] - mean[j];
                var[j] += d * d;
            }
        }
        for v in &mut var {
            *v /= n as f64;
        }
        let stats = BatchStats { mean, var, count: n };
        let out = self.normalize(x, gamma, beta, &stats.mean, &stats.var, eps, true);
        Ok((out, stats))
    }

    /// Batch normalization with fixed statistics (evaluation mode).
    pub fn batch_norm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], var: &[f64], eps: f64) -> Result<Var> {
        self.row_broadcast("batch_norm", x, gamma)?;
        self.row_broadcast("batch_norm", x, beta)?;
        if mean.len() != x.cols || var.len() != x.cols {
            return Err(Error::shape("batch_norm", "running statistics width"));
        }
        Ok(self.normalize(x, gamma, beta, mean, var, eps, false))
    }

    #[allow(clippy::too_many_arguments)]
    fn normalize(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], var: &[f64], eps: f64, batch_stats: bool) -> Var {
        let (n, c) = (x.rows, x.cols);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let tx = self.value(x).data();
        let mut xhat = vec![0.0; n * c];
        for r in 0..n {
            for j in 0..c {
                xhat[r * c + j] = (tx[r * c + j] - mean[j]) * inv_std[j];
            }
        }
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let data = xhat.iter().enumerate().map(|(i, h)| g[i % c] * h + b[i % c]).collect();
        let value = Tensor::new(n, c, data).unwrap();
        self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            &[x, gamma, beta],
        )
    }

    /// Applies a fixed sparse operator to the rows of `h`.
    pub fn propagate(&mut self, h: Var, op: &Arc<Propagation>) -> Result<Var> {
        self.check(h)?;
        if h.rows != op.num_nodes() {
            return Err(Error::shape("propagate", format!("{} rows for {} nodes", h.rows, op.num_nodes())));
        }
        let value = op.apply(self.value(h));
        Ok(self.push(value, Op::Propagate(h, Arc::clone(op)), &[h]))
    }

    /// Neighbor aggregation over `adj`.
    pub fn neighbor_aggregate(&mut self, h: Var, adj: &CsrAdjacency, mode: AggregationMode) -> Result<Var> {
        let op = Arc::new(Propagation::new(adj, mode));
        self.propagate(h, &op)
    }

    /// Class-weighted softmax cross-entropy averaged as
    /// `Σ_i w[y_i] * CE_i / Σ_i w[y_i]`. Returns `1 x 1`.
    pub fn weighted_cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[f64]) -> Result<Var> {
        self.check(logits)?;
        let (n, c) = (logits.rows, logits.cols);
        if targets.len() != n || weights.len() != c {
            return Err(Error::shape(
                "weighted_cross_entropy",
                format!("{n}x{c} logits, {} targets, {} class weights", targets.len(), weights.len()),
            ));
        }
        if let Some(bad) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::InvalidArgument(format!("target class {bad} with {c} classes")));
        }
        let z = self.value(logits).data();
        let mut probs = vec![0.0; n * c];
        let mut total = 0.0;
        let mut norm = 0.0;
        for i in 0..n {
            let row = &z[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_z = max + sum_exp.ln();
            for j in 0..c {
                probs[i * c + j] = (row[j] - log_z).exp();
            }
            let w = weights[targets[i]];
            total += w * (log_z - row[targets[i]]);
            norm += w;
        }
        let loss = if norm > 0.0 { total / norm } else { 0.0 };
        Ok(self.push(
            Tensor::scalar(loss),
            Op::WeightedCrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs,
                norm,
            },
            &[logits],
        ))
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var, n_params: usize) -> Result<Gradients> {
        self.check(loss)?;
        if loss.shape() != [1, 1] {
            return Err(Error::Autodiff(format!("loss must be scalar, got shape {:?}", loss.shape())));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.index + 1];
        grads[loss.index] = Some(Tensor::scalar(1.0));
        let mut by_param: Vec<Option<Tensor>> = vec![None; n_params];

        for idx in (0..=loss.index).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Some(pid) = node.param {
                if pid.0 >= n_params {
                    return Err(Error::Autodiff(format!("parameter {} outside store of {n_params}", pid.0)));
                }
                match &mut by_param[pid.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                }
                continue;
            }
            self.backward_node(node, g, &mut grads)?;
        }
        Ok(Gradients { by_param })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.index].requires_grad {
            return;
        }
        match &mut grads[v.index] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn backward_node(&self, node: &Node, g: Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.nodes[a.index].requires_grad {
                    let ga = g.matmul_t(self.value(*b))?;
                    self.accumulate(grads, *a, ga);
                }
                if self.nodes[b.index].requires_grad {
                    let gb = self.value(*a).t_matmul(&g)?;
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *b, g.clone());
                self.accumulate(grads, *a, g);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *b, g.map(|v| -v));
                self.accumulate(grads, *a, g);
            }
            Op::Mul(a, b) => {
                let ga = mul_elem(&g, self.value(*b));
                let gb = mul_elem(&g, self.value(*a));
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::AddRow(x, row) => {
                self.accumulate(grads, *row, column_sums(&g));
                self.accumulate(grads, *x, g);
            }
            Op::SubRow(x, row) => {
                self.accumulate(grads, *row, column_sums(&g).map(|v| -v));
                self.accumulate(grads, *x, g);
            }
            Op::ScaleBy(x, s) => {
                let k = self.value(*s).item();
                let gs: f64 = g.data().iter().zip(self.value(*x).data()).map(|(a, b)| a * b).sum();
                self.accumulate(grads, *s, Tensor::scalar(gs));
                self.accumulate(grads, *x, g.map(|v| v * k));
            }
            Op::Scale(x, k) => self.accumulate(grads, *x, g.map(|v| v * k)),
            Op::AddScalar(x) => self.accumulate(grads, *x, g),
            Op::Relu(x) => {
                let gx = zip(&g, self.value(*x), |gv, xv| if xv > 0.0 { gv } else { 0.0 });
                self.accumulate(grads, *x, gx);
            }
            Op::Tanh(x) => {
                let gx = zip(&g, out, |gv, y| gv * (1.0 - y * y));
                self.accumulate(grads, *x, gx);
            }
            Op::PowI(x, k) => {
                let k = *k;
                let gx = zip(&g, self.value(*x), |gv, xv| gv * k as f64 * xv.powi(k as i32 - 1));
                self.accumulate(grads, *x, gx);
            }
            Op::SqrtEps(x) => {
                let gx = zip(&g, out, |gv, y| gv * 0.5 / y);
                self.accumulate(grads, *x, gx);
            }
            Op::Sum(x) => {
                let gv = g.item();
                self.accumulate(grads, *x, Tensor::filled(x.rows, x.cols, gv));
            }
            Op::MeanRows(x) => {
                let n = x.rows as f64;
                let mut gx = Tensor::zeros(x.rows, x.cols);
                for r in 0..x.rows {
                    for (o, v) in gx.data_mut()[r * x.cols..(r + 1) * x.cols].iter_mut().zip(g.data()) {
                        *o = v / n;
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::SliceRows(x, start) => {
                let c = x.cols;
                let mut gx = Tensor::zeros(x.rows, c);
                gx.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                self.accumulate(grads, *x, gx);
            }
            Op::SegmentMean(x, offsets) => {
                let c = x.cols;
                let mut gx = Tensor::zeros(x.rows, c);
                for s in 0..offsets.len() - 1 {
                    let n = (offsets[s + 1] - offsets[s]) as f64;
                    for r in offsets[s]..offsets[s + 1] {
                        for j in 0..c {
                            gx.data_mut()[r * c + j] = g.data()[s * c + j] / n;
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Dropout(x, mask) => {
                let data = g.data().iter().zip(mask).map(|(a, m)| a * m).collect();
                self.accumulate(grads, *x, Tensor::new(x.rows, x.cols, data)?);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let (n, c) = (x.rows, x.cols);
                let gd = g.data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for r in 0..n {
                    for j in 0..c {
                        dgamma[j] += gd[r * c + j] * xhat[r * c + j];
                        dbeta[j] += gd[r * c + j];
                    }
                }
                let gam = self.value(*gamma).data();
                let mut dx = vec![0.0; n * c];
                for r in 0..n {
                    for j in 0..c {
                        let i = r * c + j;
                        dx[i] = if *batch_stats {
                            gam[j] * inv_std[j] / n as f64 * (n as f64 * gd[i] - dbeta[j] - xhat[i] * dgamma[j])
                        } else {
                            gam[j] * inv_std[j] * gd[i]
                        };
                    }
                }
                self.accumulate(grads, *x, Tensor::new(n, c, dx)?);
                self.accumulate(grads, *gamma, Tensor::new(1, c, dgamma)?);
                self.accumulate(grads, *beta, Tensor::new(1, c, dbeta)?);
            }
            Op::Propagate(h, op) => {
                self.accumulate(grads, *h, op.apply_transpose(&g));
            }
            Op::WeightedCrossEntropy {
                logits,
                targets,
                weights,
                probs,
                norm,
            } => {
                let (n, c) = (logits.rows, logits.cols);
                let mut gz = vec![0.0; n * c];
                if *norm > 0.0 {
                    let scale = g.item() / norm;
                    for i in 0..n {
                        let w = weights[targets[i]] * scale;
                        for j in 0..c {
                            let onehot = if j == targets[i] { 1.0 } else { 0.0 };
                            gz[i * c + j] = w * (probs[i * c + j] - onehot);
                        }
                    }
                }
                self.accumulate(grads, *logits, Tensor::new(n, c, gz)?);
            }
        }
        Ok(())
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).unwrap()
}

fn mul_elem(a: &Tensor, b: &Tensor) -> Tensor {
    zip(a, b, |x, y| x * y)
}

fn column_sums(g: &Tensor) -> Tensor {
    let mut out = vec![0.0; g.cols()];
    for r in 0..g.rows() {
        for (o, v) in out.iter_mut().zip(g.row(r)) {
            *o += v;
        }
    }
    Tensor::new(1, g.cols(), out).unwrap()
}
