use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coarsen::{Aggregation, CoarsenMethod};
use crate::error::{Error, Result};
use crate::gnn::ModelKind;

/// Every hyperparameter of one experiment. Unset keys in a config file take
/// the documented defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// TUDataset name, e.g. `PROTEINS`.
    pub dataset: String,
    /// Directory holding `<dataset>/<dataset>_*.txt` or the files directly.
    pub data_dir: PathBuf,
    pub model: ModelKind,
    /// Hidden width (32 or 64).
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
    /// Weight λ of the size regularizer; 0 trains the baseline.
    pub lambda: f64,
    /// Coarsening ratios used by the regularizer.
    pub ratios: Vec<f64>,
    pub coarsener: CoarsenMethod,
    pub aggregation: Aggregation,
    pub max_epochs: usize,
    /// Stop after this many epochs without validation improvement.
    pub patience: Option<usize>,
    /// Highest moment order of the discrepancy.
    pub max_moment: u32,
    pub seeds: Vec<u64>,
    /// Seed of the size split (shared by all runs).
    pub split_seed: u64,
    /// Seed of the coarsening partitioners.
    pub coarsen_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: "PROTEINS".into(),
            data_dir: PathBuf::from("data"),
            model: ModelKind::Gin,
            hidden: 64,
            learning_rate: 0.001,
            batch_size: 64,
            dropout: 0.3,
            lambda: 0.1,
            ratios: vec![0.8, 0.9],
            coarsener: CoarsenMethod::HeavyEdge,
            aggregation: Aggregation::Mean,
            max_epochs: 200,
            patience: None,
            max_moment: 5,
            seeds: vec![0, 1, 2, 3, 4],
            split_seed: 0,
            coarsen_seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be a finite non-negative number", self.lambda));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return bad(format!("coarsening ratio {r} outside (0, 1)"));
        }
        if self.lambda > 0.0 && self.ratios.is_empty() {
            return bad("regularized training needs at least one ratio".into());
        }
        if self.hidden == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return bad("hidden, batch_size and max_epochs must be positive".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.max_moment < 2 {
            return bad(format!("max_moment {} must be at least 2", self.max_moment));
        }
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        Ok(())
    }

    pub fn is_regularized(&self) -> bool {
        self.lambda > 0.0
    }

    /// The same experiment with the regularizer disabled.
    pub fn unregularized(&self) -> Self {
        Self {
            lambda: 0.0,
            ..self.clone()
        }
    }

    /// Hex SHA-256 of the canonical JSON of every setting that affects a
    /// single run's outcome (the seed list and data location excluded).
    pub fn config_hash(&self) -> String {
        let canonical = Self {
            seeds: Vec::new(),
            data_dir: PathBuf::new(),
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
