//! Graph coarsening: partition the node set, then contract every part into a
//! super-node whose features aggregate the features of its members.
//!
//! Three partitioners are available behind one interface:
//! heavy-edge matching, spectral clustering and k-means on node features.

mod cache;
mod heavy_edge;
mod kmeans;
mod spectral;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, FeatureMatrix, GraphDataset};
use crate::seed::mix_seed;

pub use cache::{dataset_digest, decode_cache, encode_cache, load_or_compute, CacheKey, CacheStatus};
pub use heavy_edge::heavy_edge_partition;
pub use kmeans::{kmeans, kmeans_partition};
pub use spectral::{normalized_laplacian, spectral_cluster_partition, symmetric_eigen};

/// Assignment of every node to one of `num_clusters` nonempty clusters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    assignment: Vec<usize>,
    num_clusters: usize,
}

impl Partition {
    /// Validates that every cluster in `0..num_clusters` is used and every
    /// assignment is in range.
    pub fn new(assignment: Vec<usize>, num_clusters: usize) -> Result<Self> {
        let mut used = vec![false; num_clusters];
        for (v, &c) in assignment.iter().enumerate() {
            if c >= num_clusters {
                return Err(Error::InvalidPartition(format!(
                    "node {v} assigned to cluster {c}, only {num_clusters} clusters"
                )));
            }
            used[c] = true;
        }
        if let Some(empty) = used.iter().position(|u| !u) {
            return Err(Error::InvalidPartition(format!("cluster {empty} is empty")));
        }
        Ok(Self {
            assignment,
            num_clusters,
        })
    }

    /// Relabels arbitrary cluster ids to `0..k` in order of first appearance.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let assignment = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Self {
            assignment,
            num_clusters: map.len(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            assignment: (0..n).collect(),
            num_clusters: n,
        }
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn num_nodes(&self) -> usize {
        self.assignment.len()
    }

    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (v, &c) in self.assignment.iter().enumerate() {
            out[c].push(v);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    Mean,
    Max,
    Sum,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Mean => "mean",
            Aggregation::Max => "max",
            Aggregation::Sum => "sum",
        })
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "max" => Ok(Aggregation::Max),
            "sum" => Ok(Aggregation::Sum),
            other => Err(Error::InvalidArgument(format!("unknown aggregation {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CoarsenMethod {
    #[serde(rename = "heavy-edge")]
    HeavyEdge,
    #[serde(rename = "sc")]
    Spectral,
    #[serde(rename = "kmeans")]
    KMeans,
}

impl CoarsenMethod {
    pub const ALL: [CoarsenMethod; 3] = [CoarsenMethod::HeavyEdge, CoarsenMethod::Spectral, CoarsenMethod::KMeans];

    pub fn partition(self, g: &AttributedGraph, k: usize, seed: u64) -> Result<Partition> {
        match self {
            CoarsenMethod::HeavyEdge => heavy_edge_partition(g, k, seed),
            CoarsenMethod::Spectral => spectral_cluster_partition(g, k, seed),
            CoarsenMethod::KMeans => kmeans_partition(g, k, seed),
        }
    }
}

impl fmt::Display for CoarsenMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoarsenMethod::HeavyEdge => "heavy-edge",
            CoarsenMethod::Spectral => "sc",
            CoarsenMethod::KMeans => "kmeans",
        })
    }
}

impl FromStr for CoarsenMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heavy-edge" => Ok(CoarsenMethod::HeavyEdge),
            "sc" => Ok(CoarsenMethod::Spectral),
            "kmeans" => Ok(CoarsenMethod::KMeans),
            other => Err(Error::InvalidArgument(format!("unknown coarsening method {other:?}"))),
        }
    }
}

/// A contracted graph together with the partition that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarsenedGraph {
    pub graph: AttributedGraph,
    pub source_id: usize,
    pub ratio: f64,
    pub membership: Partition,
}

pub(crate) fn check_cluster_count(g: &AttributedGraph, k: usize) -> Result<()> {
    if k == 0 || k > g.num_nodes {
        return Err(Error::InvalidArgument(format!(
            "cannot split graph {} with {} nodes into {k} clusters",
            g.graph_id, g.num_nodes
        )));
    }
    Ok(())
}

/// Contracts every part of `p` into one node. Super-nodes `i != j` are joined
/// iff some original edge crosses the two parts; intra-part edges vanish.
pub fn contract_partition(g: &AttributedGraph, p: &Partition, agg: Aggregation) -> Result<CoarsenedGraph> {
    if p.num_nodes() != g.num_nodes {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} nodes, graph has {}",
            p.num_nodes(),
            g.num_nodes
        )));
    }
    let p = Partition::new(p.assignment.clone(), p.num_clusters)?;
    let k = p.num_clusters();
    let a = p.assignment();

    let edges: BTreeSet<(usize, usize)> = g
        .edges
        .iter()
        .filter_map(|&(u, v)| {
            let (cu, cv) = (a[u], a[v]);
            (cu != cv).then(|| (cu.min(cv), cu.max(cv)))
        })
        .collect();

    let d = g.feature_dim();
    let mut features = FeatureMatrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for v in 0..g.num_nodes {
        let c = a[v];
        let src = g.features.row(v);
        let dst = features.row_mut(c);
        if agg == Aggregation::Max && counts[c] == 0 {
            dst.copy_from_slice(src);
        } else {
            for (x, y) in dst.iter_mut().zip(src) {
                match agg {
                    Aggregation::Max => *x = x.max(*y),
                    Aggregation::Mean | Aggregation::Sum => *x += y,
                }
            }
        }
        counts[c] += 1;
    }
    if agg == Aggregation::Mean {
        for (c, &n) in counts.iter().enumerate() {
            for x in features.row_mut(c) {
                *x /= n as f64;
            }
        }
    }

    let graph = AttributedGraph::new(k, edges, features, g.label, g.graph_id)?;
    Ok(CoarsenedGraph {
        graph,
        source_id: g.graph_id,
        ratio: k as f64 / g.num_nodes as f64,
        membership: p,
    })
}

/// Number of super-nodes for ratio `r`: `max(1, floor(r * n))`.
pub fn target_size(n: usize, r: f64) -> usize {
    ((r * n as f64).floor() as usize).max(1)
}

/// Coarsens `g` to `max(1, floor(r * n))` nodes.
pub fn coarsen(g: &AttributedGraph, r: f64, method: CoarsenMethod, agg: Aggregation, seed: u64) -> Result<CoarsenedGraph> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidArgument(format!("coarsening ratio {r} outside (0, 1)")));
    }
    if g.num_nodes == 0 {
        return Err(Error::InvalidArgument(format!("graph {} is empty", g.graph_id)));
    }
    let k = target_size(g.num_nodes, r);
    let p = method.partition(g, k, seed)?;
    let mut out = contract_partition(g, &p, agg)?;
    out.ratio = r;
    Ok(out)
}

/// Coarsened copies of a dataset, one list per ratio, aligned with
/// `graph_ids` (the source graphs' ids, in dataset order).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarsenedDatasets {
    pub ratios: Vec<f64>,
    pub method: CoarsenMethod,
    pub aggregation: Aggregation,
    pub seed: u64,
    pub graph_ids: Vec<usize>,
    pub per_ratio: Vec<Vec<CoarsenedGraph>>,
}

impl CoarsenedDatasets {
    /// Position of the source graph with `graph_id`, if covered.
    pub fn position(&self, graph_id: usize) -> Option<usize> {
        self.graph_ids.binary_search(&graph_id).ok().or_else(|| self.graph_ids.iter().position(|&g| g == graph_id))
    }

    /// Coarsened graph for ratio index `j` and source graph `graph_id`.
    pub fn get(&self, j: usize, graph_id: usize) -> Option<&CoarsenedGraph> {
        self.position(graph_id).map(|i| &self.per_ratio[j][i])
    }
}

pub(crate) fn graph_seed(seed: u64, graph_id: usize, ratio: f64) -> u64 {
    mix_seed(mix_seed(seed, graph_id as u64), ratio.to_bits())
}

/// Coarsens every graph of `ds` at every ratio. Work fans out over graphs;
/// the output does not depend on scheduling.
pub fn precompute_coarsened_datasets(
    ds: &GraphDataset,
    ratios: &[f64],
    method: CoarsenMethod,
    agg: Aggregation,
    seed: u64,
) -> Result<CoarsenedDatasets> {
    if let Some(bad) = ratios.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return Err(Error::InvalidArgument(format!("coarsening ratio {bad} outside (0, 1)")));
    }
    let per_ratio = ratios
        .iter()
        .map(|&r| {
            ds.graphs
                .par_iter()
                .map(|g| coarsen(g, r, method, agg, graph_seed(seed, g.graph_id, r)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoarsenedDatasets {
        ratios: ratios.to_vec(),
        method,
        aggregation: agg,
        seed,
        graph_ids: ds.graphs.iter().map(|g| g.graph_id).collect(),
        per_ratio,
    })
}
