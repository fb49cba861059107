//! Undirected attributed graphs, CSR adjacency and datasets.
//!
//! Graphs are stored simple: edges are kept as `(u, v)` pairs with `u < v`,
//! no self-loops and no duplicates. Layers that need self-loops add them
//! on the fly.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of node features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "feature buffer of length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged feature rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(r)) {
                *s += v;
            }
        }
        sums
    }
}

/// A single undirected graph with node features and a class label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributedGraph {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub features: FeatureMatrix,
    pub label: usize,
    pub graph_id: usize,
}

impl AttributedGraph {
    /// Builds a graph, normalizing each edge to `(min, max)` order and
    /// rejecting anything that fails [`validate_graph`].
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: FeatureMatrix,
        label: usize,
        graph_id: usize,
    ) -> Result<Self> {
        let edges = edges
            .into_iter()
            .map(|(u, v)| if u <= v { (u, v) } else { (v, u) })
            .collect();
        let g = Self {
            num_nodes,
            edges,
            features,
            label,
            graph_id,
        };
        let report = validate_graph(&g);
        if report.is_ok() {
            Ok(g)
        } else {
            Err(Error::InvalidGraph(report.to_string()))
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    EndpointOutOfRange { edge: (usize, usize), num_nodes: usize },
    DuplicateEdge { edge: (usize, usize) },
    SelfLoop { node: usize },
    FeatureRowMismatch { rows: usize, num_nodes: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EndpointOutOfRange { edge, num_nodes } => write!(
                f,
                "endpoint out of range: edge ({}, {}) with {num_nodes} nodes",
                edge.0, edge.1
            ),
            Violation::DuplicateEdge { edge } => {
                write!(f, "duplicate undirected edge ({}, {})", edge.0, edge.1)
            }
            Violation::SelfLoop { node } => write!(f, "self-loop on node {node}"),
            Violation::FeatureRowMismatch { rows, num_nodes } => {
                write!(f, "feature matrix has {rows} rows for {num_nodes} nodes")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "OK");
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Checks the structural invariants of a graph and lists every violation.
pub fn validate_graph(g: &AttributedGraph) -> ValidationReport {
    let mut violations = Vec::new();
    let mut seen = HashSet::with_capacity(g.edges.len());
    for &(u, v) in &g.edges {
        if u >= g.num_nodes || v >= g.num_nodes {
            violations.push(Violation::EndpointOutOfRange {
                edge: (u, v),
                num_nodes: g.num_nodes,
            });
            continue;
        }
        if u == v {
            violations.push(Violation::SelfLoop { node: u });
            continue;
        }
        let key = (u.min(v), u.max(v));
        if !seen.insert(key) {
            violations.push(Violation::DuplicateEdge { edge: key });
        }
    }
    if g.features.rows() != g.num_nodes {
        violations.push(Violation::FeatureRowMismatch {
            rows: g.features.rows(),
            num_nodes: g.num_nodes,
        });
    }
    ValidationReport { violations }
}

/// Compressed sparse row adjacency of an undirected simple graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsrAdjacency {
    pub row_offsets: Vec<usize>,
    pub column_indices: Vec<usize>,
    pub degrees: Vec<usize>,
}

impl CsrAdjacency {
    pub fn num_nodes(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.column_indices[self.row_offsets[v]..self.row_offsets[v + 1]]
    }

    /// Block-diagonal union of several adjacencies; node ids of block `b`
    /// are shifted by the total node count of blocks `0..b`.
    pub fn disjoint_union<'a>(parts: impl IntoIterator<Item = &'a CsrAdjacency>) -> Self {
        let mut row_offsets = vec![0];
        let mut column_indices = Vec::new();
        let mut degrees = Vec::new();
        let mut shift = 0;
        for part in parts {
            for v in 0..part.num_nodes() {
                column_indices.extend(part.neighbors(v).iter().map(|u| u + shift));
                row_offsets.push(column_indices.len());
            }
            degrees.extend_from_slice(&part.degrees);
            shift += part.num_nodes();
        }
        Self {
            row_offsets,
            column_indices,
            degrees,
        }
    }
}

/// Builds the CSR form of `g`. Neighbor lists come out sorted.
pub fn build_csr(g: &AttributedGraph) -> Result<CsrAdjacency> {
    let report = validate_graph(g);
    if !report.is_ok() {
        return Err(Error::InvalidGraph(report.to_string()));
    }
    let n = g.num_nodes;
    let mut degrees = vec![0usize; n];
    for &(u, v) in &g.edges {
        degrees[u] += 1;
        degrees[v] += 1;
    }
    let mut row_offsets = Vec::with_capacity(n + 1);
    row_offsets.push(0);
    for d in &degrees {
        row_offsets.push(row_offsets.last().unwrap() + d);
    }
    let mut fill = row_offsets[..n].to_vec();
    let mut column_indices = vec![0usize; row_offsets[n]];
    for &(u, v) in &g.edges {
        column_indices[fill[u]] = v;
        fill[u] += 1;
        column_indices[fill[v]] = u;
        fill[v] += 1;
    }
    for v in 0..n {
        column_indices[row_offsets[v]..row_offsets[v + 1]].sort_unstable();
    }
    Ok(CsrAdjacency {
        row_offsets,
        column_indices,
        degrees,
    })
}

/// An ordered collection of graphs sharing feature width and label space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDataset {
    pub name: String,
    pub graphs: Vec<AttributedGraph>,
    pub num_classes: usize,
    pub feature_dim: usize,
}

impl GraphDataset {
    pub fn new(name: impl Into<String>, graphs: Vec<AttributedGraph>, num_classes: usize) -> Result<Self> {
        let feature_dim = graphs.first().map_or(0, AttributedGraph::feature_dim);
        for g in &graphs {
            if g.feature_dim() != feature_dim {
                return Err(Error::InvalidGraph(format!(
                    "graph {} has feature width {}, dataset uses {feature_dim}",
                    g.graph_id,
                    g.feature_dim()
                )));
            }
            if g.label >= num_classes {
                return Err(Error::InvalidGraph(format!(
                    "graph {} has label {} outside [0, {num_classes})",
                    g.graph_id, g.label
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            graphs,
            num_classes,
            feature_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.num_nodes).collect()
    }

    pub fn average_size(&self, ids: &[usize]) -> f64 {
        if ids.is_empty() {
            return 0.0;
        }
        ids.iter().map(|&i| self.graphs[i].num_nodes as f64).sum::<f64>() / ids.len() as f64
    }

    /// Keeps only the graphs at `ids`, in that order.
    pub fn subset(&self, ids: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            graphs: ids.iter().map(|&i| self.graphs[i].clone()).collect(),
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
        }
    }
}
