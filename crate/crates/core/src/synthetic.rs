//! Seeded synthetic graph-classification data with a wide size range.
//!
//! Class 0 graphs are random trees; class 1 graphs are random trees with
//! extra chords, so the label depends on cycle density rather than size.
//! Node features one-hot encode a random node type that carries no label
//! information.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

use crate::graph::{AttributedGraph, FeatureMatrix, GraphDataset};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub num_graphs: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Chords added to class-1 graphs, as a fraction of the node count.
    pub chord_fraction: f64,
    pub node_types: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_graphs: 200,
            min_nodes: 6,
            max_nodes: 60,
            chord_fraction: 0.3,
            node_types: 3,
            seed: 0,
        }
    }
}

pub fn size_shift_dataset(cfg: &SyntheticConfig) -> GraphDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let types = cfg.node_types.max(1);
    let graphs = (0..cfg.num_graphs)
        .map(|id| {
            let n = rng.gen_range(cfg.min_nodes.max(2)..=cfg.max_nodes.max(cfg.min_nodes.max(2)));
            let label = id % 2;
            let mut edges = BTreeSet::new();
            for v in 1..n {
                edges.insert((rng.gen_range(0..v), v));
            }
            if label == 1 {
                let chords = ((cfg.chord_fraction * n as f64).round() as usize).max(1);
                let mut added = 0;
                let mut attempts = 0;
                while added < chords && attempts < 50 * chords {
                    attempts += 1;
                    let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
                    if a != b && edges.insert((a.min(b), a.max(b))) {
                        added += 1;
                    }
                }
            }
            let mut features = FeatureMatrix::zeros(n, types);
            for v in 0..n {
                features.row_mut(v)[rng.gen_range(0..types)] = 1.0;
            }
            AttributedGraph::new(n, edges, features, label, id).expect("generated graph is valid")
        })
        .collect();
    GraphDataset::new("SYNTHETIC", graphs, 2).expect("generated dataset is valid")
}
