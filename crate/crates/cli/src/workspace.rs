//! Dataset loading, manifests, caches and per-seed runs shared by commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use sizereg::coarsen::{load_or_compute, Aggregation, CacheStatus, CoarsenMethod, CoarsenedDatasets};
use sizereg::gnn::GnnModel;
use sizereg::graph::GraphDataset;
use sizereg::train::{read_jsonl, train, upsert_jsonl, ExperimentConfig, RunResult, TimingRecord, TrainData};
use sizereg::tudataset::{dataset_files, locate_dataset, parse_tudataset, SizeSplit};

use crate::error::{io_err, CliError, CliResult};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";

pub struct LoadedDataset {
    pub dataset: GraphDataset,
    /// File name to hex SHA-256.
    pub checksums: BTreeMap<String, String>,
}

pub fn load_dataset(root: &Path, name: &str) -> CliResult<LoadedDataset> {
    let dir = locate_dataset(root, name);
    let dataset = parse_tudataset(&dir, name)?;
    let mut checksums = BTreeMap::new();
    for path in dataset_files(&dir, name) {
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        checksums.insert(file, hex::encode(Sha256::digest(&bytes)));
    }
    Ok(LoadedDataset { dataset, checksums })
}

#[derive(Serialize)]
struct RunManifest<'a, C: Serialize> {
    tool_version: &'a str,
    command: &'a str,
    config_path: Option<&'a str>,
    config: &'a C,
    dataset: &'a str,
    dataset_checksums: &'a BTreeMap<String, String>,
    output_dir: &'a str,
}

/// Writes `manifest-<command>-<hash prefix>.json` into `out_dir` and returns
/// the manifest hash.
pub fn write_manifest<C: Serialize>(
    out_dir: &Path,
    command: &str,
    config_path: Option<&Path>,
    config: &C,
    data: &LoadedDataset,
) -> CliResult<String> {
    let config_path = config_path.map(|p| p.to_string_lossy().into_owned());
    let output_dir = out_dir.to_string_lossy().into_owned();
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        command,
        config_path: config_path.as_deref(),
        config,
        dataset: &data.dataset.name,
        dataset_checksums: &data.checksums,
        output_dir: &output_dir,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Usage(e.to_string()))?;
    let hash = hex::encode(Sha256::digest(json.as_bytes()));
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let path = out_dir.join(format!("manifest-{command}-{}.json", &hash[..12]));
    fs::write(&path, format!("{json}\n")).map_err(io_err(&path))?;
    Ok(hash)
}

fn ratio_tag(ratios: &[f64]) -> String {
    ratios.iter().map(|r| format!("{r}")).collect::<Vec<_>>().join("_")
}

pub fn cache_path(out_dir: &Path, dataset: &str, method: CoarsenMethod, agg: Aggregation, ratios: &[f64], seed: u64, split_seed: u64) -> PathBuf {
    out_dir
        .join("cache")
        .join(format!("{dataset}-{method}-{agg}-r{}-s{seed}-split{split_seed}.bin", ratio_tag(ratios)))
}

/// Coarsened copies of the training graphs of `split`, from cache when valid.
pub fn coarsened_training_graphs(
    out_dir: &Path,
    ds: &GraphDataset,
    split: &SizeSplit,
    method: CoarsenMethod,
    agg: Aggregation,
    ratios: &[f64],
    seed: u64,
) -> CliResult<(CoarsenedDatasets, CacheStatus, PathBuf)> {
    let path = cache_path(out_dir, &ds.name, method, agg, ratios, seed, split.seed);
    let train = ds.subset(&split.train_ids);
    let (data, status) = load_or_compute(&path, &train, ratios, method, agg, seed)?;
    Ok((data, status, path))
}

pub fn checkpoint_path(out_dir: &Path, config_hash: &str, seed: u64) -> PathBuf {
    out_dir.join("models").join(format!("{}-{seed}.ckpt", &config_hash[..16]))
}

pub struct SeedRun {
    pub result: RunResult,
    pub model: Option<GnnModel>,
}

/// Trains every seed of `cfg`, recording results (and timings) in `out_dir`.
/// With `reuse`, seeds whose record and checkpoint already exist under the
/// same manifest are loaded instead of retrained.
pub fn run_seeds(
    cfg: &ExperimentConfig,
    data: &TrainData<'_>,
    out_dir: &Path,
    results_file: &str,
    manifest_hash: &str,
    reuse: bool,
    keep_models: bool,
) -> CliResult<Vec<SeedRun>> {
    let results_path = out_dir.join(results_file);
    let hash = cfg.config_hash();
    let existing: Vec<RunResult> = if reuse { read_jsonl(&results_path)? } else { Vec::new() };
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let ckpt = checkpoint_path(out_dir, &hash, seed);
        let prior = existing
            .iter()
            .find(|r| r.config_hash == hash && r.seed == seed && r.manifest_hash.as_deref() == Some(manifest_hash));
        if let Some(prior) = prior {
            if !keep_models {
                runs.push(SeedRun {
                    result: prior.clone(),
                    model: None,
                });
                continue;
            }
            if ckpt.exists() {
                log::info!("seed {seed}: reusing {}", ckpt.display());
                runs.push(SeedRun {
                    result: prior.clone(),
                    model: Some(GnnModel::load(&ckpt)?),
                });
                continue;
            }
        }
        let trained = train(cfg, data, seed)?;
        let mut result = trained.result;
        result.manifest_hash = Some(manifest_hash.to_string());
        if let Some(parent) = ckpt.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        trained.model.save(&ckpt)?;
        upsert_jsonl(&results_path, std::slice::from_ref(&result), |r: &RunResult| (r.config_hash.clone(), r.seed))?;
        let timing = TimingRecord {
            config_hash: hash.clone(),
            seed,
            epoch_seconds: result.epoch_seconds.clone(),
        };
        upsert_jsonl(&out_dir.join(TIMINGS_FILE), &[timing], |t: &TimingRecord| (t.config_hash.clone(), t.seed))?;
        log::info!(
            "{} {} λ={} seed {seed}: best epoch {}, val MCC {:.4}, test MCC {:.4}",
            result.dataset,
            result.model,
            result.lambda,
            result.best_epoch,
            result.best_val_mcc,
            result.test_mcc
        );
        runs.push(SeedRun {
            result,
            model: keep_models.then_some(trained.model),
        });
    }
    Ok(runs)
}
