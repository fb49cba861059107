use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::RunResult;
use crate::error::{Error, Result};
use crate::gnn::ModelKind;

/// Per-epoch wall-clock times of one run, stored beside the results file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub config_hash: String,
    pub seed: u64,
    pub epoch_seconds: Vec<f64>,
}

/// Reads every record of a JSON-lines file; a missing file is empty.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                file: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Inserts `records` into a JSON-lines file, replacing existing records with
/// the same key in place and appending new ones. The file is rewritten
/// through a temporary sibling.
pub fn upsert_jsonl<T, K, F>(path: &Path, records: &[T], key: F) -> Result<()>
where
    T: Serialize + DeserializeOwned,
    K: PartialEq,
    F: Fn(&T) -> K,
{
    let mut all: Vec<T> = read_jsonl(path)?;
    for r in records {
        let k = key(r);
        let line = serde_json::to_string(r).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let copy: T = serde_json::from_str(&line).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        match all.iter().position(|x| key(x) == k) {
            Some(i) => all[i] = copy,
            None => all.push(copy),
        }
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    for r in &all {
        let line = serde_json::to_string(r).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        writeln!(f, "{line}").map_err(|e| Error::io(&tmp, e))?;
    }
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (0 for a single run).
    pub std: f64,
    pub runs: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self {
            mean,
            std,
            runs: values.len(),
        })
    }
}

/// Test MCC of one dataset and model with and without the regularizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub model: ModelKind,
    pub without_reg: Option<Summary>,
    pub with_reg: Option<Summary>,
}

/// Groups records by dataset and model, splitting on `λ > 0`.
pub fn aggregate_report(records: &[RunResult]) -> Vec<ReportRow> {
    let mut groups: BTreeMap<(String, String), (ModelKind, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let entry = groups
            .entry((r.dataset.clone(), r.model.to_string()))
            .or_insert_with(|| (r.model, Vec::new(), Vec::new()));
        if r.lambda > 0.0 {
            entry.2.push(r.test_mcc);
        } else {
            entry.1.push(r.test_mcc);
        }
    }
    groups
        .into_iter()
        .map(|((dataset, _), (model, without, with))| ReportRow {
            dataset,
            model,
            without_reg: Summary::of(&without),
            with_reg: Summary::of(&with),
        })
        .collect()
}
