use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_cluster_count, Partition};
use crate::error::Result;
use crate::graph::AttributedGraph;

/// Multilevel matching: each round visits clusters in a seeded random order
/// and merges every unmatched cluster with the unmatched neighbor that
/// maximizes `1 / sqrt(deg(u) * deg(v))` on the current cluster graph.
/// Rounds stop as soon as `k` clusters remain. When no edge joins two
/// clusters any more, the two smallest clusters are merged instead.
pub fn heavy_edge_partition(g: &AttributedGraph, k: usize, seed: u64) -> Result<Partition> {
    check_cluster_count(g, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..g.num_nodes).collect();
    let mut count = g.num_nodes;

    while count > k {
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); count];
        let mut sizes = vec![0usize; count];
        for &l in &labels {
            sizes[l] += 1;
        }
        for &(u, v) in &g.edges {
            let (a, b) = (labels[u], labels[v]);
            if a != b {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }

        let mut merged_into: Vec<usize> = (0..count).collect();
        let mut matched = vec![false; count];
        let mut order: Vec<usize> = (0..count).collect();
        order.shuffle(&mut rng);
        let mut remaining = count;
        for &c in &order {
            if remaining == k {
                break;
            }
            if matched[c] {
                continue;
            }
            let dc = adj[c].len() as f64;
            let mut best: Option<(usize, f64)> = None;
            for &u in &adj[c] {
                if matched[u] {
                    continue;
                }
                let w = 1.0 / (dc * adj[u].len() as f64).sqrt();
                if best.is_none_or(|(_, bw)| w > bw) {
                    best = Some((u, w));
                }
            }
            if let Some((u, _)) = best {
                matched[c] = true;
                matched[u] = true;
                merged_into[u] = c;
                remaining -= 1;
            }
        }

        if remaining == count {
            // no cross-cluster edges left: fold the two smallest clusters together
            let mut by_size: Vec<usize> = (0..count).collect();
            by_size.sort_by_key(|&c| (sizes[c], c));
            merged_into[by_size[1]] = by_size[0];
            remaining -= 1;
        }

        let relabeled: Vec<usize> = labels.iter().map(|&l| merged_into[l]).collect();
        let p = Partition::from_labels(&relabeled);
        labels = p.assignment().to_vec();
        count = remaining;
        debug_assert_eq!(p.num_clusters(), count);
    }
    Ok(Partition::from_labels(&labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::FeatureMatrix;

    fn graph(n: usize, edges: &[(usize, usize)]) -> AttributedGraph {
        AttributedGraph::new(n, edges.iter().copied(), FeatureMatrix::zeros(n, 1), 0, 0).unwrap()
    }

    #[test]
    fn single_edge_to_one_cluster() {
        let p = heavy_edge_partition(&graph(2, &[(0, 1)]), 1, 0).unwrap();
        assert_eq!(p.assignment(), &[0, 0]);
    }

    #[test]
    fn path_of_four_pairs_up() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        for seed in 0..20 {
            let p = heavy_edge_partition(&g, 2, seed).unwrap();
            let mut sizes: Vec<usize> = p.clusters().iter().map(Vec::len).collect();
            sizes.sort();
            assert_eq!(sizes, vec![2, 2], "seed {seed}");
        }
    }

    #[test]
    fn k_equals_n_is_identity() {
        let g = graph(5, &[(0, 1), (2, 3)]);
        assert_eq!(heavy_edge_partition(&g, 5, 3).unwrap(), Partition::identity(5));
    }

    #[test]
    fn edgeless_graph_still_reaches_target() {
        let g = graph(7, &[]);
        for k in 1..=7 {
            assert_eq!(heavy_edge_partition(&g, k, 1).unwrap().num_clusters(), k);
        }
    }

    #[test]
    fn rejects_k_above_n() {
        assert!(heavy_edge_partition(&graph(2, &[]), 3, 0).is_err());
        assert!(heavy_edge_partition(&graph(2, &[]), 0, 0).is_err());
    }
}
