use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sizereg::coarsen::{coarsen, Aggregation, CoarsenMethod};
use sizereg::gnn::{GnnModel, ModelConfig, ModelKind};
use sizereg::graph::AttributedGraph;
use sizereg::metrics::CmdConfig;
use sizereg::synthetic::{size_shift_dataset, SyntheticConfig};
use sizereg::tensor::Tape;
use sizereg::train::{aggregate_report, objective, EpochRecord, ObjectiveInput, RunResult};

fn graphs() -> Vec<AttributedGraph> {
    size_shift_dataset(&SyntheticConfig {
        num_graphs: 6,
        max_nodes: 20,
        ..SyntheticConfig::default()
    })
    .graphs
}

fn model(kind: ModelKind) -> GnnModel {
    GnnModel::new(
        ModelConfig {
            kind,
            input_dim: 3,
            hidden: 8,
            num_classes: 2,
            dropout: 0.3,
        },
        4,
    )
    .unwrap()
}

fn coarse(gs: &[AttributedGraph], r: f64, method: CoarsenMethod) -> Vec<AttributedGraph> {
    gs.iter().map(|g| coarsen(g, r, method, Aggregation::Mean, 9).unwrap().graph).collect()
}

fn size_loss(m: &GnnModel, gs: &[AttributedGraph], lists: &[Vec<AttributedGraph>]) -> f64 {
    let originals: Vec<&AttributedGraph> = gs.iter().collect();
    let refs: Vec<Vec<&AttributedGraph>> = lists.iter().map(|l| l.iter().collect()).collect();
    let input = ObjectiveInput {
        graphs: &originals,
        coarsened: &refs,
        class_weights: &[1.0, 1.0],
        lambda: 0.1,
        cmd: CmdConfig::default(),
    };
    let mut tape = Tape::new();
    let obj = objective(m, m.params(), &mut tape, &input, None).unwrap();
    tape.value(obj.size.unwrap()).item()
}

#[test]
fn dropping_a_ratio_never_increases_size_loss() {
    let gs = graphs();
    for kind in [ModelKind::Gcn, ModelKind::Gin] {
        let m = model(kind);
        let (a, b) = (coarse(&gs, 0.3, CoarsenMethod::HeavyEdge), coarse(&gs, 0.7, CoarsenMethod::HeavyEdge));
        let both = size_loss(&m, &gs, &[a.clone(), b.clone()]);
        let only_a = size_loss(&m, &gs, &[a]);
        let only_b = size_loss(&m, &gs, &[b]);
        assert!(only_a <= both && only_b <= both);
        assert!((only_a + only_b - both).abs() < 1e-9);
    }
}

#[test]
fn supervised_loss_ignores_coarsened_graphs_without_regularization() {
    let gs = graphs();
    let m = model(ModelKind::Gin);
    let originals: Vec<&AttributedGraph> = gs.iter().collect();
    let run = |lists: &[Vec<AttributedGraph>]| {
        let refs: Vec<Vec<&AttributedGraph>> = lists.iter().map(|l| l.iter().collect()).collect();
        let input = ObjectiveInput {
            graphs: &originals,
            coarsened: &refs,
            class_weights: &[0.7, 1.3],
            lambda: 0.0,
            cmd: CmdConfig::default(),
        };
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let obj = objective(&m, m.params(), &mut tape, &input, Some(&mut rng)).unwrap();
        assert!(obj.size.is_none());
        assert_eq!(obj.cmd_terms, 0);
        tape.value(obj.total).item()
    };
    let base = run(&[coarse(&gs, 0.5, CoarsenMethod::HeavyEdge)]);
    let perturbed = run(&[coarse(&gs, 0.2, CoarsenMethod::KMeans), coarse(&gs[..2], 0.9, CoarsenMethod::Spectral)]);
    assert_eq!(base.to_bits(), perturbed.to_bits());
    assert_eq!(base.to_bits(), run(&[]).to_bits());
}

fn record(dataset: usize, gin: bool, lambda: f64, seed: u64, mcc: f64) -> RunResult {
    RunResult {
        config_hash: format!("h{dataset}{gin}{lambda}"),
        manifest_hash: None,
        dataset: format!("D{dataset}"),
        model: if gin { ModelKind::Gin } else { ModelKind::Gcn },
        lambda,
        ratios: vec![0.8, 0.9],
        seed,
        history: vec![EpochRecord {
            epoch: 0,
            train_loss: 0.0,
            supervised_loss: 0.0,
            size_loss: 0.0,
            val_mcc: 0.0,
        }],
        best_epoch: 0,
        best_val_mcc: 0.0,
        test_mcc: mcc,
        epoch_seconds: Vec::new(),
    }
}

proptest! {
    #[test]
    fn report_equals_brute_force(rows in prop::collection::vec((0usize..3, any::<bool>(), prop::sample::select(vec![0.0, 0.1, 0.5]), -1.0f64..1.0), 1..40)) {
        let records: Vec<RunResult> = rows.iter().enumerate().map(|(i, &(d, gin, l, m))| record(d, gin, l, i as u64, m)).collect();
        let report = aggregate_report(&records);
        let mut brute: BTreeMap<(String, String), [Vec<f64>; 2]> = BTreeMap::new();
        for r in &records {
            brute.entry((r.dataset.clone(), r.model.to_string())).or_default()[usize::from(r.lambda > 0.0)].push(r.test_mcc);
        }
        prop_assert_eq!(report.len(), brute.len());
        for row in &report {
            let groups = &brute[&(row.dataset.clone(), row.model.to_string())];
            for (summary, values) in [(&row.without_reg, &groups[0]), (&row.with_reg, &groups[1])] {
                match summary {
                    None => prop_assert!(values.is_empty()),
                    Some(s) => {
                        let n = values.len() as f64;
                        let mean = values.iter().sum::<f64>() / n;
                        let var = if values.len() > 1 { values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
                        prop_assert_eq!(s.runs, values.len());
                        prop_assert!((s.mean - mean).abs() < 1e-12);
                        prop_assert!((s.std - var.sqrt()).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
