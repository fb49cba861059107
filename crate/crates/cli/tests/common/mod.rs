#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sizereg::synthetic::{size_shift_dataset, SyntheticConfig};
use sizereg::tudataset::write_tudataset;

pub fn sizereg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sizereg")).args(args).output().expect("spawn sizereg")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes a small synthetic dataset under `root/SYNTHETIC/`.
pub fn synthetic_data(root: &Path, num_graphs: usize) -> PathBuf {
    let ds = size_shift_dataset(&SyntheticConfig {
        num_graphs,
        max_nodes: 40,
        ..SyntheticConfig::default()
    });
    write_tudataset(&ds, &root.join("SYNTHETIC"), "SYNTHETIC").expect("write dataset");
    root.to_path_buf()
}

/// Writes a fast experiment configuration, with `overrides` (a JSON object)
/// applied on top, and returns its path.
pub fn quick_config(dir: &Path, data_dir: &Path, overrides: &str) -> PathBuf {
    let path = dir.join("config.json");
    let mut cfg = serde_json::json!({
        "dataset": "SYNTHETIC",
        "data_dir": data_dir,
        "hidden": 8,
        "batch_size": 16,
        "max_epochs": 3,
        "seeds": [0, 1],
    });
    let extra: serde_json::Value = serde_json::from_str(overrides).expect("override json");
    for (k, v) in extra.as_object().expect("object") {
        cfg[k] = v.clone();
    }
    std::fs::write(&path, cfg.to_string()).expect("write config");
    path
}
