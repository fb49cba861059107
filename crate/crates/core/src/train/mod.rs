//! Size-regularized training.
//!
//! Each optimization step minimizes weighted cross-entropy on the original
//! graphs of a batch plus `λ` times the summed discrepancy between every
//! graph's node embeddings and those of its coarsened copies. Model
//! selection keeps the epoch with the best validation MCC.

mod adam;
mod cka;
mod config;
mod results;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use cka::{cka_analysis, CkaCurves, CkaRow};
pub use config::ExperimentConfig;
pub use results::{aggregate_report, read_jsonl, upsert_jsonl, ReportRow, Summary, TimingRecord};

use crate::coarsen::CoarsenedDatasets;
use crate::error::{Error, Result};
use crate::gnn::{ForwardOutput, GnnModel, Mode, ModelConfig, ModelKind};
use crate::graph::{AttributedGraph, GraphDataset};
use crate::metrics::{cmd, mcc, CmdConfig};
use crate::seed::mix_seed;
use crate::tensor::{BatchStats, ParamStore, Tape, Var};
use crate::tudataset::{class_weights, SizeSplit};

const INIT_STREAM: u64 = 0x1417;
const SHUFFLE_STREAM: u64 = 0x5408;
const DROPOUT_STREAM: u64 = 0xd209;
const EVAL_CHUNK: usize = 256;

/// `Σ_r Σ_i CMD(H_i, H_{r,i})` over graphs `i` of a batch and ratios `r`.
/// Returns the loss and the number of summed terms.
pub fn batch_regularization_loss(tape: &mut Tape, original: &ForwardOutput, coarsened: &[ForwardOutput], cfg: &CmdConfig) -> Result<(Var, usize)> {
    let n = original.num_graphs();
    if let Some(bad) = coarsened.iter().find(|c| c.num_graphs() != n) {
        return Err(Error::InvalidArgument(format!(
            "coarsened batch of {} graphs is not aligned with {n} originals",
            bad.num_graphs()
        )));
    }
    let mut total = tape.constant(crate::tensor::Tensor::scalar(0.0));
    let mut terms = 0;
    for c in coarsened {
        for i in 0..n {
            let hp = original.graph_embeddings(tape, i)?;
            let hq = c.graph_embeddings(tape, i)?;
            let d = cmd(tape, hp, hq, cfg)?;
            total = tape.add(total, d)?;
            terms += 1;
        }
    }
    Ok((total, terms))
}

/// Everything one loss evaluation needs.
pub struct ObjectiveInput<'a> {
    pub graphs: &'a [&'a AttributedGraph],
    /// One list per ratio, aligned index-for-index with `graphs`.
    pub coarsened: &'a [Vec<&'a AttributedGraph>],
    pub class_weights: &'a [f64],
    pub lambda: f64,
    pub cmd: CmdConfig,
}

pub struct Objective {
    pub total: Var,
    pub supervised: Var,
    pub size: Option<Var>,
    pub cmd_terms: usize,
    /// Batch-norm statistics of every train-mode pass, originals first.
    pub batch_stats: Vec<Vec<BatchStats>>,
}

fn mode<'a>(rng: &'a mut Option<&mut ChaCha8Rng>) -> Mode<'a> {
    match rng {
        Some(r) => Mode::Train(r),
        None => Mode::Eval,
    }
}

/// Supervised loss on the originals plus `λ · L_size`. With `λ = 0` no
/// coarsened graph is touched. `rng` selects train mode.
pub fn objective(model: &GnnModel, store: &ParamStore, tape: &mut Tape, input: &ObjectiveInput<'_>, mut rng: Option<&mut ChaCha8Rng>) -> Result<Objective> {
    let batch = model.batch(input.graphs)?;
    let out = model.forward_with(store, tape, &batch, mode(&mut rng))?;
    let targets: Vec<usize> = input.graphs.iter().map(|g| g.label).collect();
    let supervised = tape.weighted_cross_entropy(out.logits, &targets, input.class_weights)?;
    let mut batch_stats = vec![out.batch_stats.clone()];
    if input.lambda == 0.0 {
        return Ok(Objective {
            total: supervised,
            supervised,
            size: None,
            cmd_terms: 0,
            batch_stats,
        });
    }
    let mut coarse_outs = Vec::with_capacity(input.coarsened.len());
    for list in input.coarsened {
        if list.len() != input.graphs.len() {
            return Err(Error::InvalidArgument(format!("{} coarsened graphs for a batch of {}", list.len(), input.graphs.len())));
        }
        let cb = model.batch(list)?;
        let co = model.forward_with(store, tape, &cb, mode(&mut rng))?;
        batch_stats.push(co.batch_stats.clone());
        coarse_outs.push(co);
    }
    let (size, cmd_terms) = batch_regularization_loss(tape, &out, &coarse_outs, &input.cmd)?;
    let weighted = tape.scale(size, input.lambda)?;
    let total = tape.add(supervised, weighted)?;
    Ok(Objective {
        total,
        supervised,
        size: Some(size),
        cmd_terms,
        batch_stats,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean total loss over the epoch's batches.
    pub train_loss: f64,
    pub supervised_loss: f64,
    pub size_loss: f64,
    pub val_mcc: f64,
}

/// One training run. Wall-clock times are kept out of the serialized form so
/// records of identical runs are byte-identical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config_hash: String,
    #[serde(default)]
    pub manifest_hash: Option<String>,
    pub dataset: String,
    pub model: ModelKind,
    pub lambda: f64,
    pub ratios: Vec<f64>,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mcc: f64,
    pub test_mcc: f64,
    #[serde(skip)]
    pub epoch_seconds: Vec<f64>,
}

pub struct TrainedRun {
    pub result: RunResult,
    /// Parameters of the selected epoch.
    pub model: GnnModel,
}

pub struct TrainData<'a> {
    pub dataset: &'a GraphDataset,
    pub split: &'a SizeSplit,
    /// Coarsened copies of at least the training graphs.
    pub coarsened: Option<&'a CoarsenedDatasets>,
}

fn ratio_indices(cfg: &ExperimentConfig, coarsened: &CoarsenedDatasets) -> Result<Vec<usize>> {
    cfg.ratios
        .iter()
        .map(|r| {
            coarsened
                .ratios
                .iter()
                .position(|c| (c - r).abs() < 1e-12)
                .ok_or_else(|| Error::Cache(format!("no coarsened graphs for ratio {r}")))
        })
        .collect()
}

/// Eval-mode MCC of `model` on the dataset graphs at `ids`.
pub fn evaluate_mcc(model: &GnnModel, ds: &GraphDataset, ids: &[usize]) -> Result<f64> {
    if ids.is_empty() {
        return Ok(0.0);
    }
    let graphs: Vec<&AttributedGraph> = ids.iter().map(|&i| &ds.graphs[i]).collect();
    let inf = model.infer_chunked(&graphs, EVAL_CHUNK)?;
    let labels: Vec<usize> = graphs.iter().map(|g| g.label).collect();
    mcc(&inf.predictions(), &labels)
}

pub fn model_config(cfg: &ExperimentConfig, ds: &GraphDataset) -> ModelConfig {
    ModelConfig {
        kind: cfg.model,
        input_dim: ds.feature_dim,
        hidden: cfg.hidden,
        num_classes: ds.num_classes,
        dropout: cfg.dropout,
    }
}

/// Trains one model for `seed`.
pub fn train(cfg: &ExperimentConfig, data: &TrainData<'_>, seed: u64) -> Result<TrainedRun> {
    cfg.validate()?;
    let ds = data.dataset;
    let split = data.split;
    if split.train_ids.is_empty() {
        return Err(Error::DegenerateSplit("no training graphs".into()));
    }
    let coarse = if cfg.is_regularized() {
        let c = data.coarsened.ok_or_else(|| Error::Cache("regularized training needs coarsened graphs".into()))?;
        let idx = ratio_indices(cfg, c)?;
        for &i in &split.train_ids {
            if c.position(ds.graphs[i].graph_id).is_none() {
                return Err(Error::Cache(format!("graph {} missing from the coarsened cache", ds.graphs[i].graph_id)));
            }
        }
        Some((c, idx))
    } else {
        None
    };

    let mut model = GnnModel::new(model_config(cfg, ds), mix_seed(seed, INIT_STREAM))?;
    let mut opt = Adam::new(model.params(), cfg.learning_rate);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, SHUFFLE_STREAM));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, DROPOUT_STREAM));
    let weights = class_weights(ds, &split.train_ids);
    let cmd_cfg = CmdConfig {
        max_moment: cfg.max_moment,
        ..CmdConfig::default()
    };

    let mut history = Vec::new();
    let mut epoch_seconds = Vec::new();
    let mut best: Option<(usize, f64, GnnModel)> = None;
    let mut since_best = 0;
    let mut order = split.train_ids.clone();
    for epoch in 0..cfg.max_epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let (mut total, mut sup, mut size, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let graphs: Vec<&AttributedGraph> = chunk.iter().map(|&i| &ds.graphs[i]).collect();
            let coarsened: Vec<Vec<&AttributedGraph>> = match &coarse {
                Some((c, idx)) => idx
                    .iter()
                    .map(|&j| graphs.iter().map(|g| &c.get(j, g.graph_id).expect("checked above").graph).collect())
                    .collect(),
                None => Vec::new(),
            };
            let input = ObjectiveInput {
                graphs: &graphs,
                coarsened: &coarsened,
                class_weights: &weights,
                lambda: cfg.lambda,
                cmd: cmd_cfg,
            };
            let mut tape = Tape::new();
            let obj = objective(&model, model.params(), &mut tape, &input, Some(&mut dropout_rng))?;
            let loss = tape.value(obj.total).item();
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "seed {seed}, epoch {epoch}, batch {b}: loss {loss} (supervised {}, size {:?})",
                    tape.value(obj.supervised).item(),
                    obj.size.map(|s| tape.value(s).item())
                )));
            }
            let grads = tape.backward(obj.total, model.params().len())?;
            for stats in &obj.batch_stats {
                model.update_running_stats(stats)?;
            }
            opt.step(model.params_mut(), &grads);
            total += loss;
            sup += tape.value(obj.supervised).item();
            size += obj.size.map_or(0.0, |s| tape.value(s).item());
            batches += 1;
        }
        epoch_seconds.push(start.elapsed().as_secs_f64());
        let val_mcc = evaluate_mcc(&model, ds, &split.val_ids)?;
        let n = batches as f64;
        history.push(EpochRecord {
            epoch,
            train_loss: total / n,
            supervised_loss: sup / n,
            size_loss: size / n,
            val_mcc,
        });
        if best.as_ref().is_none_or(|(_, v, _)| val_mcc > *v) {
            best = Some((epoch, val_mcc, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }
    let (best_epoch, best_val_mcc, best_model) = best.expect("at least one epoch");
    let test_mcc = evaluate_mcc(&best_model, ds, &split.test_ids)?;
    Ok(TrainedRun {
        result: RunResult {
            config_hash: cfg.config_hash(),
            manifest_hash: None,
            dataset: ds.name.clone(),
            model: cfg.model,
            lambda: cfg.lambda,
            ratios: cfg.ratios.clone(),
            seed,
            history,
            best_epoch,
            best_val_mcc,
            test_mcc,
            epoch_seconds,
        },
        model: best_model,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub regularized_seconds: f64,
    pub unregularized_seconds: f64,
    /// Regularized over unregularized mean epoch time.
    pub ratio: f64,
    pub timed_epochs: usize,
}

fn mean_after_warmup(secs: &[f64]) -> f64 {
    let timed = &secs[1..];
    timed.iter().sum::<f64>() / timed.len() as f64
}

/// Mean epoch time of `cfg` relative to the same run with `λ = 0`, each over
/// `timed_epochs` epochs after one warmup epoch.
pub fn epoch_overhead(cfg: &ExperimentConfig, data: &TrainData<'_>, timed_epochs: usize) -> Result<OverheadReport> {
    if timed_epochs < 3 {
        return Err(Error::InvalidArgument("overhead needs at least 3 timed epochs".into()));
    }
    let timed = |c: &ExperimentConfig| -> Result<f64> {
        let c = ExperimentConfig {
            max_epochs: timed_epochs + 1,
            patience: None,
            ..c.clone()
        };
        let run = train(&c, data, c.seeds[0])?;
        Ok(mean_after_warmup(&run.result.epoch_seconds))
    };
    let unregularized_seconds = timed(&cfg.unregularized())?;
    let regularized_seconds = timed(cfg)?;
    Ok(OverheadReport {
        regularized_seconds,
        unregularized_seconds,
        ratio: regularized_seconds / unregularized_seconds,
        timed_epochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarsen::{contract_partition, precompute_coarsened_datasets, Aggregation, CoarsenMethod, Partition};
    use crate::synthetic::{size_shift_dataset, SyntheticConfig};
    use crate::tudataset::size_split;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            dataset: "synthetic".into(),
            hidden: 8,
            batch_size: 16,
            max_epochs: 4,
            learning_rate: 0.01,
            ..ExperimentConfig::default()
        }
    }

    fn fixture() -> (GraphDataset, SizeSplit, CoarsenedDatasets) {
        let ds = size_shift_dataset(&SyntheticConfig {
            num_graphs: 80,
            ..SyntheticConfig::default()
        });
        let split = size_split(&ds, 0).unwrap();
        let train = ds.subset(&split.train_ids);
        let coarse = precompute_coarsened_datasets(&train, &[0.8, 0.9], CoarsenMethod::HeavyEdge, Aggregation::Mean, 0).unwrap();
        (ds, split, coarse)
    }

    #[test]
    fn identity_coarsening_gives_near_zero_size_loss() {
        let (ds, _, _) = fixture();
        let graphs: Vec<&AttributedGraph> = ds.graphs.iter().take(4).collect();
        let copies: Vec<AttributedGraph> = graphs
            .iter()
            .map(|g| contract_partition(g, &Partition::identity(g.num_nodes), Aggregation::Mean).unwrap().graph)
            .collect();
        let model = GnnModel::new(model_config(&small_config(), &ds), 1).unwrap();
        let coarsened = vec![copies.iter().collect::<Vec<_>>()];
        let input = ObjectiveInput {
            graphs: &graphs,
            coarsened: &coarsened,
            class_weights: &[1.0, 1.0],
            lambda: 0.1,
            cmd: CmdConfig::default(),
        };
        let mut tape = Tape::new();
        let obj = objective(&model, model.params(), &mut tape, &input, None).unwrap();
        assert!(tape.value(obj.size.unwrap()).item() < 1e-6 * graphs.len() as f64);
        assert_eq!(obj.cmd_terms, 4);
    }

    #[test]
    fn term_count_and_lambda_zero_guard() {
        let (ds, split, coarse) = fixture();
        let ids = &split.train_ids[..5];
        let graphs: Vec<&AttributedGraph> = ids.iter().map(|&i| &ds.graphs[i]).collect();
        let coarsened: Vec<Vec<&AttributedGraph>> = (0..2).map(|j| graphs.iter().map(|g| &coarse.get(j, g.graph_id).unwrap().graph).collect()).collect();
        let model = GnnModel::new(model_config(&small_config(), &ds), 1).unwrap();
        let mut input = ObjectiveInput {
            graphs: &graphs,
            coarsened: &coarsened,
            class_weights: &[1.0, 1.0],
            lambda: 0.1,
            cmd: CmdConfig::default(),
        };
        let mut tape = Tape::new();
        let obj = objective(&model, model.params(), &mut tape, &input, None).unwrap();
        assert_eq!(obj.cmd_terms, 10);
        let with_reg_supervised = tape.value(obj.supervised).item();

        input.lambda = 0.0;
        let mut tape = Tape::new();
        let obj = objective(&model, model.params(), &mut tape, &input, None).unwrap();
        assert_eq!(obj.cmd_terms, 0);
        assert!(obj.size.is_none());
        assert_eq!(tape.value(obj.supervised).item(), with_reg_supervised);

        let short = vec![coarsened[0][..3].to_vec()];
        input.lambda = 0.1;
        input.coarsened = &short;
        assert!(objective(&model, model.params(), &mut Tape::new(), &input, None).is_err());
    }

    #[test]
    fn training_is_deterministic_and_selects_best_epoch() {
        let (ds, split, coarse) = fixture();
        let data = TrainData {
            dataset: &ds,
            split: &split,
            coarsened: Some(&coarse),
        };
        let cfg = small_config();
        let a = train(&cfg, &data, 3).unwrap().result;
        let b = train(&cfg, &data, 3).unwrap().result;
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.history.len(), cfg.max_epochs);
        let best = a.history.iter().map(|h| h.val_mcc).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.best_val_mcc, best);
        let first = a.history.iter().position(|h| h.val_mcc == best).unwrap();
        assert_eq!(a.best_epoch, first);
        assert!(a.history.iter().all(|h| h.size_loss > 0.0));
    }

    #[test]
    fn missing_cache_is_an_error() {
        let (ds, split, _) = fixture();
        let data = TrainData {
            dataset: &ds,
            split: &split,
            coarsened: None,
        };
        assert!(matches!(train(&small_config(), &data, 0), Err(Error::Cache(_))));
        let plain = train(&small_config().unregularized(), &data, 0).unwrap().result;
        assert!(plain.history.iter().all(|h| h.size_loss == 0.0));
    }

    #[test]
    fn overhead_requires_three_epochs() {
        let (ds, split, coarse) = fixture();
        let data = TrainData {
            dataset: &ds,
            split: &split,
            coarsened: Some(&coarse),
        };
        assert!(epoch_overhead(&small_config(), &data, 2).is_err());
    }
}
