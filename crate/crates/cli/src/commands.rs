use std::fs;
use std::io::{self, Write};

use serde::Serialize;
use sizereg::coarsen::{CacheStatus, CoarsenMethod};
use sizereg::train::{aggregate_report, cka_analysis, read_jsonl, upsert_jsonl, CkaCurves, ExperimentConfig, RunResult, Summary, TrainData};
use sizereg::tudataset::size_split;

use crate::args::{CkaArgs, CoarsenArgs, ExperimentArgs, Format, GraphSet, PrepareArgs, ReportArgs, TrainArgs};
use crate::error::{io_err, CliError, CliResult};
use crate::workspace::{coarsened_training_graphs, load_dataset, run_seeds, write_manifest, RESULTS_FILE};

const ALL_RATIOS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Serialize)]
struct PrepareReport {
    dataset: String,
    graphs: usize,
    classes: usize,
    feature_dim: usize,
    average_size: f64,
    low_threshold: f64,
    high_threshold: f64,
    pool: usize,
    train: usize,
    val: usize,
    test: usize,
    average_train_size: f64,
    average_test_size: f64,
}

pub fn prepare(args: &PrepareArgs) -> CliResult<()> {
    let data = load_dataset(&args.dataset_dir, &args.name)?;
    let manifest = match &args.out_dir {
        Some(dir) => Some((dir, write_manifest(dir, "prepare", None, &serde_json::json!({ "seed": args.seed }), &data)?)),
        None => None,
    };
    let ds = &data.dataset;
    let split = size_split(ds, args.seed)?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let pool = split.pool_ids();
    let report = PrepareReport {
        dataset: ds.name.clone(),
        graphs: ds.len(),
        classes: ds.num_classes,
        feature_dim: ds.feature_dim,
        average_size: ds.average_size(&all),
        low_threshold: split.low_threshold,
        high_threshold: split.high_threshold,
        pool: pool.len(),
        train: split.train_ids.len(),
        val: split.val_ids.len(),
        test: split.test_ids.len(),
        average_train_size: ds.average_size(&pool),
        average_test_size: ds.average_size(&split.test_ids),
    };
    println!("dataset {}: {} graphs, {} classes, feature width {}", report.dataset, report.graphs, report.classes, report.feature_dim);
    println!("average size {:.2} nodes", report.average_size);
    println!("size thresholds: 50th percentile {:.2}, 90th percentile {:.2}", report.low_threshold, report.high_threshold);
    println!(
        "smallest 50%: {} graphs (train {}, val {}), average size {:.2}",
        report.pool, report.train, report.val, report.average_train_size
    );
    println!("largest 10%: {} graphs, average size {:.2}", report.test, report.average_test_size);
    if let Some((dir, hash)) = manifest {
        let path = dir.join(format!("prepare-{}.json", ds.name));
        let mut value = serde_json::to_value(&report).map_err(|e| CliError::Usage(e.to_string()))?;
        value["manifest_hash"] = hash.into();
        let json = serde_json::to_string_pretty(&value).map_err(|e| CliError::Usage(e.to_string()))?;
        fs::write(&path, format!("{json}\n")).map_err(io_err(&path))?;
    }
    Ok(())
}

fn check_ratios(ratios: &[f64]) -> CliResult<()> {
    if ratios.is_empty() {
        return Err(CliError::Usage("at least one ratio is required".into()));
    }
    match ratios.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        Some(r) => Err(CliError::Usage(format!("coarsening ratio {r} outside (0, 1)"))),
        None => Ok(()),
    }
}

pub fn coarsen(args: &CoarsenArgs) -> CliResult<()> {
    check_ratios(&args.ratios)?;
    let data = load_dataset(&args.data_dir, &args.dataset)?;
    let settings = serde_json::json!({
        "ratios": args.ratios,
        "method": CoarsenMethod::from(args.method).to_string(),
        "aggregation": sizereg::coarsen::Aggregation::from(args.agg).to_string(),
        "seed": args.seed,
        "split_seed": args.split_seed,
    });
    write_manifest(&args.out_dir, "coarsen", None, &settings, &data)?;
    let split = size_split(&data.dataset, args.split_seed)?;
    let (coarse, status, path) = coarsened_training_graphs(
        &args.out_dir,
        &data.dataset,
        &split,
        args.method.into(),
        args.agg.into(),
        &args.ratios,
        args.seed,
    )?;
    let state = match status {
        CacheStatus::UpToDate => "up-to-date",
        CacheStatus::Written => "written",
    };
    println!(
        "cache {} {state}: {} graphs x {} ratios",
        path.display(),
        coarse.graph_ids.len(),
        coarse.ratios.len()
    );
    Ok(())
}

fn load_config(args: &ExperimentArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config).map_err(|e| match e {
        sizereg::Error::InvalidArgument(msg) => CliError::Usage(format!("{}: {msg}", args.config.display())),
        other => other.into(),
    })?;
    if let Some(seeds) = &args.seeds {
        cfg.seeds = seeds.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train_cmd(args: &TrainArgs) -> CliResult<()> {
    let mut cfg = load_config(&args.experiment)?;
    if args.no_reg {
        cfg.lambda = 0.0;
    }
    let out = &args.experiment.out_dir;
    let data = load_dataset(&cfg.data_dir, &cfg.dataset)?;
    let manifest = write_manifest(out, "train", Some(&args.experiment.config), &cfg, &data)?;
    let ds = &data.dataset;
    let split = size_split(ds, cfg.split_seed)?;
    let coarse = if cfg.is_regularized() {
        Some(coarsened_training_graphs(out, ds, &split, cfg.coarsener, cfg.aggregation, &cfg.ratios, cfg.coarsen_seed)?.0)
    } else {
        None
    };
    let train_data = TrainData {
        dataset: ds,
        split: &split,
        coarsened: coarse.as_ref(),
    };
    let runs = run_seeds(&cfg, &train_data, out, RESULTS_FILE, &manifest, false, false)?;
    for run in &runs {
        let r = &run.result;
        println!(
            "{} {} lambda={} seed={} best_epoch={} val_mcc={:.4} test_mcc={:.4}",
            r.dataset, r.model, r.lambda, r.seed, r.best_epoch, r.best_val_mcc, r.test_mcc
        );
    }
    Ok(())
}

fn fmt_summary(s: &Option<Summary>) -> String {
    match s {
        Some(s) => format!("{:.3} ± {:.3} ({})", s.mean, s.std, s.runs),
        None => "-".into(),
    }
}

fn summary_cells(s: &Option<Summary>) -> [String; 3] {
    match s {
        Some(s) => [format!("{}", s.mean), format!("{}", s.std), s.runs.to_string()],
        None => [String::new(), String::new(), "0".into()],
    }
}

pub fn report(args: &ReportArgs) -> CliResult<()> {
    if !args.results.exists() {
        return Err(CliError::Core(sizereg::Error::MissingFile(args.results.clone())));
    }
    let records: Vec<RunResult> = read_jsonl(&args.results)?;
    let rows = aggregate_report(&records);
    let stdout = io::stdout();
    match args.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(stdout.lock());
            w.write_record(["dataset", "model", "without_mean", "without_std", "without_runs", "with_mean", "with_std", "with_runs"])?;
            for r in &rows {
                let mut rec = vec![r.dataset.clone(), r.model.to_string()];
                rec.extend(summary_cells(&r.without_reg));
                rec.extend(summary_cells(&r.with_reg));
                w.write_record(&rec)?;
            }
            w.flush().map_err(io_err("<stdout>"))?;
        }
        Format::Text => {
            let mut out = stdout.lock();
            let line = |out: &mut io::StdoutLock<'_>, cols: [&str; 4]| writeln!(out, "{:<12} {:<6} {:<24} {:<24}", cols[0], cols[1], cols[2], cols[3]);
            line(&mut out, ["dataset", "model", "test MCC without reg", "test MCC with reg"]).map_err(io_err("<stdout>"))?;
            for r in &rows {
                let (a, b) = (fmt_summary(&r.without_reg), fmt_summary(&r.with_reg));
                line(&mut out, [&r.dataset, &r.model.to_string(), &a, &b]).map_err(io_err("<stdout>"))?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize, serde::Deserialize)]
struct CkaRecord {
    config_hash: String,
    manifest_hash: String,
    seed: u64,
    curves: CkaCurves,
}

pub fn analyze_cka(args: &CkaArgs) -> CliResult<()> {
    check_ratios(&args.ratios)?;
    let cfg = load_config(&args.experiment)?;
    if !cfg.is_regularized() {
        return Err(CliError::Usage("analyze-cka compares a regularized model with its baseline; set lambda > 0".into()));
    }
    let out = &args.experiment.out_dir;
    let data = load_dataset(&cfg.data_dir, &cfg.dataset)?;
    let manifest = write_manifest(
        out,
        "analyze-cka",
        Some(&args.experiment.config),
        &serde_json::json!({ "config": cfg, "ratios": args.ratios, "graphs": format!("{:?}", args.graphs).to_lowercase() }),
        &data,
    )?;
    let ds = &data.dataset;
    let split = size_split(ds, cfg.split_seed)?;
    let coarse = coarsened_training_graphs(out, ds, &split, cfg.coarsener, cfg.aggregation, &cfg.ratios, cfg.coarsen_seed)?.0;
    let train_data = TrainData {
        dataset: ds,
        split: &split,
        coarsened: Some(&coarse),
    };
    let reg = run_seeds(&cfg, &train_data, out, RESULTS_FILE, &manifest, true, true)?;
    let noreg = run_seeds(&cfg.unregularized(), &train_data, out, RESULTS_FILE, &manifest, true, true)?;
    let ids = match args.graphs {
        GraphSet::Train => &split.train_ids,
        GraphSet::Val => &split.val_ids,
        GraphSet::Test => &split.test_ids,
    };
    let mut records = Vec::new();
    for (a, b) in reg.iter().zip(&noreg) {
        let (ma, mb) = (a.model.as_ref().expect("kept"), b.model.as_ref().expect("kept"));
        let curves = cka_analysis(ma, mb, ds, ids, &args.ratios, cfg.coarsener, cfg.aggregation, cfg.coarsen_seed)?;
        records.push(CkaRecord {
            config_hash: cfg.config_hash(),
            manifest_hash: manifest.clone(),
            seed: a.result.seed,
            curves,
        });
    }
    upsert_jsonl(&out.join("cka.jsonl"), &records, |r: &CkaRecord| (r.config_hash.clone(), r.seed))?;

    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&CkaCurves) -> f64| records.iter().map(|r| f(&r.curves)).sum::<f64>() / n;
    let csv_path = out.join(format!("cka-{}.csv", &cfg.config_hash()[..12]));
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["ratio", "between_models", "within_regularized", "within_unregularized"])?;
    println!("{:<8} {:>16} {:>20} {:>22}", "ratio", "between models", "within regularized", "within unregularized");
    let orig = mean(&|c| c.original_between);
    println!("{:<8} {:>16.4} {:>20.4} {:>22.4}", "1.0", orig, 1.0, 1.0);
    w.write_record(["1", &orig.to_string(), "1", "1"])?;
    for (j, ratio) in args.ratios.iter().enumerate() {
        let between = mean(&|c| c.rows[j].between_models);
        let within_reg = mean(&|c| c.rows[j].within_regularized);
        let within_noreg = mean(&|c| c.rows[j].within_unregularized);
        println!("{:<8} {:>16.4} {:>20.4} {:>22.4}", ratio, between, within_reg, within_noreg);
        w.write_record([ratio.to_string(), between.to_string(), within_reg.to_string(), within_noreg.to_string()])?;
    }
    w.flush().map_err(io_err(&csv_path))?;
    println!("table written to {}", csv_path.display());
    Ok(())
}

struct AblationRow {
    label: String,
    cfg: ExperimentConfig,
}

fn run_ablation(args: &ExperimentArgs, name: &str, rows: impl Fn(&ExperimentConfig) -> Vec<AblationRow>) -> CliResult<()> {
    let cfg = load_config(args)?;
    if !cfg.is_regularized() {
        return Err(CliError::Usage(format!("{name} needs lambda > 0")));
    }
    let out = &args.out_dir;
    let data = load_dataset(&cfg.data_dir, &cfg.dataset)?;
    let manifest = write_manifest(out, name, Some(&args.config), &cfg, &data)?;
    let ds = &data.dataset;
    let split = size_split(ds, cfg.split_seed)?;
    let results_file = format!("{name}.jsonl");
    let csv_path = out.join(format!("{name}.csv"));
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["setting", "mean_test_mcc", "std_test_mcc", "runs"])?;
    println!("{:<24} test MCC", "setting");
    for row in rows(&cfg) {
        let coarse = if row.cfg.is_regularized() {
            let all_ratios = if row.cfg.coarsener == cfg.coarsener { ALL_RATIOS.to_vec() } else { row.cfg.ratios.clone() };
            Some(coarsened_training_graphs(out, ds, &split, row.cfg.coarsener, row.cfg.aggregation, &all_ratios, row.cfg.coarsen_seed)?.0)
        } else {
            None
        };
        let train_data = TrainData {
            dataset: ds,
            split: &split,
            coarsened: coarse.as_ref(),
        };
        let runs = run_seeds(&row.cfg, &train_data, out, &results_file, &manifest, true, false)?;
        let mccs: Vec<f64> = runs.iter().map(|r| r.result.test_mcc).collect();
        let s = Summary::of(&mccs).expect("at least one seed");
        println!("{:<24} {:.3} ± {:.3} ({})", row.label, s.mean, s.std, s.runs);
        w.write_record([row.label.clone(), s.mean.to_string(), s.std.to_string(), s.runs.to_string()])?;
    }
    w.flush().map_err(io_err(&csv_path))?;
    println!("table written to {}", csv_path.display());
    Ok(())
}

fn ratio_label(ratios: &[f64]) -> String {
    if ratios == ALL_RATIOS {
        return "ALL".into();
    }
    format!("{{{}}}", ratios.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(","))
}

/// Ratio sets of the ratio ablation: each single ratio, three pairs, all nine.
pub fn ratio_sets() -> Vec<Vec<f64>> {
    let mut sets: Vec<Vec<f64>> = ALL_RATIOS.iter().map(|&r| vec![r]).collect();
    sets.extend([vec![0.8, 0.9], vec![0.5, 0.9], vec![0.3, 0.7], ALL_RATIOS.to_vec()]);
    sets
}

pub fn ablate_ratios(args: &ExperimentArgs) -> CliResult<()> {
    run_ablation(args, "ablate-ratios", |cfg| {
        let mut rows = vec![AblationRow {
            label: "none (lambda=0)".into(),
            cfg: cfg.unregularized(),
        }];
        rows.extend(ratio_sets().into_iter().map(|ratios| AblationRow {
            label: ratio_label(&ratios),
            cfg: ExperimentConfig { ratios, ..cfg.clone() },
        }));
        rows
    })
}

pub fn ablate_coarsener(args: &ExperimentArgs) -> CliResult<()> {
    run_ablation(args, "ablate-coarsener", |cfg| {
        let mut rows = vec![AblationRow {
            label: "none (lambda=0)".into(),
            cfg: cfg.unregularized(),
        }];
        rows.extend(CoarsenMethod::ALL.iter().map(|&m| AblationRow {
            label: m.to_string(),
            cfg: ExperimentConfig {
                coarsener: m,
                ..cfg.clone()
            },
        }));
        rows
    })
}
