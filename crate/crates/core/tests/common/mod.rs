#![allow(dead_code)]

use std::collections::BTreeSet;

use proptest::prelude::*;
use sizereg::graph::{AttributedGraph, FeatureMatrix};

/// Simple undirected graph with `1..=max_nodes` nodes and `dim` features.
pub fn graph_strategy(max_nodes: usize, dim: usize) -> impl Strategy<Value = AttributedGraph> {
    (1..=max_nodes)
        .prop_flat_map(move |n| {
            let pairs = prop::collection::vec((0..n, 0..n), 0..=3 * n);
            (Just(n), pairs, prop::collection::vec(-1.0f64..1.0, n * dim), 0usize..2)
        })
        .prop_map(move |(n, pairs, feats, label)| build(n, &pairs, feats, dim, label))
}

pub fn build(n: usize, pairs: &[(usize, usize)], feats: Vec<f64>, dim: usize, label: usize) -> AttributedGraph {
    let edges: BTreeSet<(usize, usize)> = pairs.iter().filter(|(u, v)| u != v).map(|&(u, v)| (u.min(v), u.max(v))).collect();
    AttributedGraph::new(n, edges, FeatureMatrix::new(n, dim, feats).unwrap(), label, 0).unwrap()
}

pub fn dense_adjacency(g: &AttributedGraph) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; g.num_nodes]; g.num_nodes];
    for &(u, v) in &g.edges {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    a
}

pub fn dense_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| (0..cols).map(|j| row.iter().zip(b).map(|(x, br)| x * br[j]).sum()).collect())
        .collect()
}

pub fn feature_rows(g: &AttributedGraph) -> Vec<Vec<f64>> {
    (0..g.num_nodes).map(|v| g.features.row(v).to_vec()).collect()
}
