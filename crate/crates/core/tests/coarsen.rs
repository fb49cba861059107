mod common;

use std::collections::BTreeSet;

use common::graph_strategy;
use proptest::prelude::*;
use sizereg::coarsen::{coarsen, contract_partition, precompute_coarsened_datasets, target_size, Aggregation, CoarsenMethod, Partition};
use sizereg::graph::{validate_graph, GraphDataset};

const METHODS: [CoarsenMethod; 3] = [CoarsenMethod::HeavyEdge, CoarsenMethod::Spectral, CoarsenMethod::KMeans];

fn crossing_edges(edges: &[(usize, usize)], assignment: &[usize]) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for &(u, v) in edges {
        let (a, b) = (assignment[u], assignment[v]);
        if a != b {
            out.insert((a.min(b), a.max(b)));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coarsened_size_edges_and_partition(g in graph_strategy(40, 2), r in 0.05f64..0.95, m in 0usize..3, seed in any::<u64>()) {
        let c = coarsen(&g, r, METHODS[m], Aggregation::Mean, seed).unwrap();
        let k = ((r * g.num_nodes as f64).floor() as usize).max(1);
        prop_assert_eq!(c.graph.num_nodes, k);
        prop_assert_eq!(target_size(g.num_nodes, r), k);
        prop_assert_eq!(c.membership.num_nodes(), g.num_nodes);
        prop_assert!(c.membership.clusters().iter().all(|s| !s.is_empty()));
        let got: BTreeSet<(usize, usize)> = c.graph.edges.iter().copied().collect();
        prop_assert_eq!(got, crossing_edges(&g.edges, c.membership.assignment()));
        prop_assert!(validate_graph(&c.graph).is_ok());
        prop_assert_eq!(c.graph.label, g.label);
    }

    #[test]
    fn sum_aggregation_conserves_column_sums(g in graph_strategy(40, 3), r in 0.05f64..0.95, m in 0usize..3) {
        let c = coarsen(&g, r, METHODS[m], Aggregation::Sum, 3).unwrap();
        for (a, b) in g.features.column_sums().iter().zip(c.graph.features.column_sums()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn mean_and_max_stay_within_member_range(g in graph_strategy(30, 2), labels in prop::collection::vec(0usize..5, 30)) {
        let p = Partition::from_labels(&labels[..g.num_nodes]);
        let mean = contract_partition(&g, &p, Aggregation::Mean).unwrap();
        let max = contract_partition(&g, &p, Aggregation::Max).unwrap();
        for (c, members) in p.clusters().iter().enumerate() {
            for j in 0..2 {
                let vals: Vec<f64> = members.iter().map(|&v| g.features.row(v)[j]).collect();
                let hi = vals.iter().copied().fold(f64::MIN, f64::max);
                let avg = vals.iter().sum::<f64>() / vals.len() as f64;
                prop_assert!((max.graph.features.row(c)[j] - hi).abs() < 1e-15);
                prop_assert!((mean.graph.features.row(c)[j] - avg).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coarsening_is_seed_deterministic(g in graph_strategy(30, 2), r in 0.1f64..0.9, m in 0usize..3, seed in any::<u64>()) {
        let a = coarsen(&g, r, METHODS[m], Aggregation::Mean, seed).unwrap();
        let b = coarsen(&g, r, METHODS[m], Aggregation::Mean, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn ratio_outside_unit_interval_is_rejected() {
    let g = sizereg::synthetic::size_shift_dataset(&Default::default()).graphs.remove(0);
    for r in [0.0, 1.0, 1.2, -0.1, f64::NAN] {
        assert!(coarsen(&g, r, CoarsenMethod::HeavyEdge, Aggregation::Mean, 0).is_err(), "{r}");
    }
}

#[test]
fn precompute_aligns_with_dataset_order() {
    let mut ds = sizereg::synthetic::size_shift_dataset(&sizereg::synthetic::SyntheticConfig {
        num_graphs: 12,
        ..Default::default()
    });
    ds = GraphDataset::new("S", ds.graphs, 2).unwrap();
    let c = precompute_coarsened_datasets(&ds, &[0.3, 0.7], CoarsenMethod::KMeans, Aggregation::Sum, 5).unwrap();
    assert_eq!(c.per_ratio.len(), 2);
    for (j, &r) in [0.3, 0.7].iter().enumerate() {
        for g in &ds.graphs {
            let cg = c.get(j, g.graph_id).unwrap();
            assert_eq!(cg.source_id, g.graph_id);
            assert_eq!(cg.graph.num_nodes, target_size(g.num_nodes, r));
        }
    }
    let again = precompute_coarsened_datasets(&ds, &[0.3, 0.7], CoarsenMethod::KMeans, Aggregation::Sum, 5).unwrap();
    assert_eq!(c, again);
}
