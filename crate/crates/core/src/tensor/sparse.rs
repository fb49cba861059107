use crate::graph::CsrAdjacency;

use super::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggregationMode {
    /// `row v = Σ_{u ∈ N(v)} H_u`
    Sum,
    /// `row v = Σ_{u ∈ N(v) ∪ {v}} H_u / sqrt(d̃_v d̃_u)` with `d̃ = degree + 1`
    SymNorm,
}

/// Fixed sparse linear operator `S` applied to node-feature matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Propagation {
    row_offsets: Vec<usize>,
    columns: Vec<usize>,
    weights: Vec<f64>,
}

impl Propagation {
    pub fn new(adj: &CsrAdjacency, mode: AggregationMode) -> Self {
        let n = adj.num_nodes();
        let mut row_offsets = Vec::with_capacity(n + 1);
        row_offsets.push(0);
        let mut columns = Vec::new();
        let mut weights = Vec::new();
        match mode {
            AggregationMode::Sum => {
                for v in 0..n {
                    for &u in adj.neighbors(v) {
                        columns.push(u);
                        weights.push(1.0);
                    }
                    row_offsets.push(columns.len());
                }
            }
            AggregationMode::SymNorm => {
                let inv_sqrt: Vec<f64> = adj.degrees.iter().map(|&d| 1.0 / ((d + 1) as f64).sqrt()).collect();
                for v in 0..n {
                    let mut placed_self = false;
                    for &u in adj.neighbors(v) {
                        if !placed_self && u > v {
                            columns.push(v);
                            weights.push(inv_sqrt[v] * inv_sqrt[v]);
                            placed_self = true;
                        }
                        columns.push(u);
                        weights.push(inv_sqrt[v] * inv_sqrt[u]);
                    }
                    if !placed_self {
                        columns.push(v);
                        weights.push(inv_sqrt[v] * inv_sqrt[v]);
                    }
                    row_offsets.push(columns.len());
                }
            }
        }
        Self {
            row_offsets,
            columns,
            weights,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.row_offsets.len() - 1
    }

    /// `S * x`
    pub fn apply(&self, x: &Tensor) -> Tensor {
        let d = x.cols();
        let mut out = Tensor::zeros(self.num_nodes(), d);
        let (src, dst) = (x.data(), out.data_mut());
        for v in 0..self.num_nodes() {
            let orow = &mut dst[v * d..(v + 1) * d];
            for e in self.row_offsets[v]..self.row_offsets[v + 1] {
                let (u, w) = (self.columns[e], self.weights[e]);
                for (o, s) in orow.iter_mut().zip(&src[u * d..(u + 1) * d]) {
                    *o += w * s;
                }
            }
        }
        out
    }

    /// `Sᵀ * g`
    pub fn apply_transpose(&self, g: &Tensor) -> Tensor {
        let d = g.cols();
        let mut out = Tensor::zeros(self.num_nodes(), d);
        let (src, dst) = (g.data(), out.data_mut());
        for v in 0..self.num_nodes() {
            let grow = &src[v * d..(v + 1) * d];
            for e in self.row_offsets[v]..self.row_offsets[v + 1] {
                let (u, w) = (self.columns[e], self.weights[e]);
                for (o, s) in dst[u * d..(u + 1) * d].iter_mut().zip(grow) {
                    *o += w * s;
                }
            }
        }
        out
    }
}
