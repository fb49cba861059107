//! Reader and writer for the TUDataset text format, plus the size-shift
//! train/validation/test split.
//!
//! A dataset `NAME` lives in one directory:
//!
//! ```text
//! NAME_A.txt                "i, j" per line, 1-based global node ids, both directions
//! NAME_graph_indicator.txt  line k = 1-based graph id of node k
//! NAME_graph_labels.txt     line g = integer label of graph g
//! NAME_node_labels.txt      optional, line k = integer label of node k
//! NAME_node_attributes.txt  optional, line k = comma-separated reals
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, FeatureMatrix, GraphDataset};
use crate::seed::mix_seed;

const SPLIT_STREAM: u64 = 0x5350_4c49_5400_0001;

struct DatasetFile {
    path: PathBuf,
    lines: Vec<String>,
}

impl DatasetFile {
    fn read(path: PathBuf) -> Result<Self> {
        let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.clone()),
            _ => Error::io(&path, e),
        })?;
        let mut lines: Vec<String> = text.lines().map(|l| l.trim().to_string()).collect();
        while lines.last().is_some_and(|l| l.is_empty()) {
            lines.pop();
        }
        let file = Self { path, lines };
        if let Some(idx) = file.lines.iter().position(String::is_empty) {
            return Err(file.error(idx, "unexpected blank line"));
        }
        Ok(file)
    }

    fn read_optional(path: PathBuf) -> Result<Option<Self>> {
        if path.exists() {
            Self::read(path).map(Some)
        } else {
            Ok(None)
        }
    }

    fn error(&self, idx: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            file: self.path.clone(),
            line: idx + 1,
            msg: msg.into(),
        }
    }

    fn int_at(&self, idx: usize, token: &str) -> Result<i64> {
        token
            .trim()
            .parse::<i64>()
            .map_err(|_| self.error(idx, format!("expected an integer, found {token:?}")))
    }

    fn ints(&self) -> Result<Vec<i64>> {
        self.lines
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let first = l.split(',').next().unwrap_or("");
                self.int_at(i, first)
            })
            .collect()
    }
}

fn dataset_path(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

/// Directory holding the files of dataset `name` under `root`: `root/name`
/// when it contains them, otherwise `root` itself.
pub fn locate_dataset(root: &Path, name: &str) -> PathBuf {
    let nested = root.join(name);
    if dataset_path(&nested, name, "A").exists() {
        nested
    } else {
        root.to_path_buf()
    }
}

/// Files that make up dataset `name` in `dir`, mandatory ones first.
pub fn dataset_files(dir: &Path, name: &str) -> Vec<PathBuf> {
    ["A", "graph_indicator", "graph_labels", "node_labels", "node_attributes"]
        .iter()
        .map(|s| dataset_path(dir, name, s))
        .filter(|p| p.exists())
        .collect()
}

/// Parses dataset `name` from `dir`.
///
/// Node labels become one-hot columns; node attributes, when present, are
/// appended after them. Without either, every node gets the constant feature 1.
/// Graph labels are remapped onto `0..num_classes` in ascending order.
pub fn parse_tudataset(dir: &Path, name: &str) -> Result<GraphDataset> {
    let indicator = DatasetFile::read(dataset_path(dir, name, "graph_indicator"))?;
    let graph_labels = DatasetFile::read(dataset_path(dir, name, "graph_labels"))?;
    let adjacency = DatasetFile::read(dataset_path(dir, name, "A"))?;
    let node_labels = DatasetFile::read_optional(dataset_path(dir, name, "node_labels"))?;
    let node_attrs = DatasetFile::read_optional(dataset_path(dir, name, "node_attributes"))?;

    let raw_graph_labels = graph_labels.ints()?;
    let num_graphs = raw_graph_labels.len();
    let num_nodes = indicator.lines.len();

    // node k (0-based) -> (graph index, local index)
    let mut node_graph = Vec::with_capacity(num_nodes);
    let mut node_local = Vec::with_capacity(num_nodes);
    let mut graph_sizes = vec![0usize; num_graphs];
    for (k, gid) in indicator.ints()?.into_iter().enumerate() {
        if gid < 1 || gid as usize > num_graphs {
            return Err(indicator.error(
                k,
                format!("graph id {gid} outside 1..={num_graphs} (from graph labels file)"),
            ));
        }
        let g = gid as usize - 1;
        node_graph.push(g);
        node_local.push(graph_sizes[g]);
        graph_sizes[g] += 1;
    }

    let mut directed = HashSet::new();
    let mut self_loops = 0usize;
    for (idx, line) in adjacency.lines.iter().enumerate() {
        let mut parts = line.split(',');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(adjacency.error(idx, format!("expected \"i, j\", found {line:?}")));
        };
        let (i, j) = (adjacency.int_at(idx, a)?, adjacency.int_at(idx, b)?);
        for v in [i, j] {
            if v < 1 || v as usize > num_nodes {
                return Err(adjacency.error(idx, format!("node id {v} outside 1..={num_nodes}")));
            }
        }
        let (i, j) = (i as usize - 1, j as usize - 1);
        if node_graph[i] != node_graph[j] {
            return Err(adjacency.error(
                idx,
                format!("edge ({}, {}) joins graphs {} and {}", i + 1, j + 1, node_graph[i] + 1, node_graph[j] + 1),
            ));
        }
        if i == j {
            self_loops += 1;
            continue;
        }
        directed.insert((i, j));
    }
    if self_loops > 0 {
        log::warn!("{name}: dropped {self_loops} self-loop entries");
    }
    let mut per_graph_edges: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); num_graphs];
    for &(i, j) in &directed {
        if !directed.contains(&(j, i)) {
            return Err(Error::Parse {
                file: adjacency.path.clone(),
                line: 0,
                msg: format!("directed edge ({}, {}) has no reverse entry", i + 1, j + 1),
            });
        }
        let (li, lj) = (node_local[i], node_local[j]);
        per_graph_edges[node_graph[i]].insert((li.min(lj), li.max(lj)));
    }

    let label_values: Option<Vec<i64>> = match &node_labels {
        Some(f) => {
            let v = f.ints()?;
            if v.len() != num_nodes {
                return Err(f.error(v.len().min(f.lines.len()), format!("expected {num_nodes} node labels, found {}", v.len())));
            }
            Some(v)
        }
        None => None,
    };
    let label_index: BTreeMap<i64, usize> = label_values
        .iter()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    let attributes: Option<Vec<Vec<f64>>> = match &node_attrs {
        Some(f) => {
            if f.lines.len() != num_nodes {
                return Err(f.error(f.lines.len().min(num_nodes), format!("expected {num_nodes} attribute rows, found {}", f.lines.len())));
            }
            let rows = f
                .lines
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    l.split(',')
                        .map(|t| {
                            t.trim()
                                .parse::<f64>()
                                .map_err(|_| f.error(i, format!("expected a real number, found {t:?}")))
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let width = rows.first().map_or(0, Vec::len);
            if let Some(bad) = rows.iter().position(|r| r.len() != width) {
                return Err(f.error(bad, format!("expected {width} attributes")));
            }
            Some(rows)
        }
        None => None,
    };

    let one_hot_width = label_index.len();
    let attr_width = attributes.as_ref().and_then(|a| a.first()).map_or(0, Vec::len);
    let feature_dim = if one_hot_width + attr_width == 0 { 1 } else { one_hot_width + attr_width };

    let mut features: Vec<FeatureMatrix> = graph_sizes.iter().map(|&n| FeatureMatrix::zeros(n, feature_dim)).collect();
    for k in 0..num_nodes {
        let row = features[node_graph[k]].row_mut(node_local[k]);
        if one_hot_width + attr_width == 0 {
            row[0] = 1.0;
            continue;
        }
        if let Some(labels) = &label_values {
            row[label_index[&labels[k]]] = 1.0;
        }
        if let Some(attrs) = &attributes {
            row[one_hot_width..].copy_from_slice(&attrs[k]);
        }
    }

    let class_index: BTreeMap<i64, usize> = raw_graph_labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();

    let graphs = features
        .into_iter()
        .zip(per_graph_edges)
        .enumerate()
        .map(|(g, (x, edges))| {
            AttributedGraph::new(graph_sizes[g], edges, x, class_index[&raw_graph_labels[g]], g)
        })
        .collect::<Result<Vec<_>>>()?;
    GraphDataset::new(name, graphs, class_index.len())
}

/// Writes `ds` in TUDataset format. Features go to `NAME_node_attributes.txt`;
/// graph labels are written as their class index.
pub fn write_tudataset(ds: &GraphDataset, dir: &Path, name: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut a = String::new();
    let mut indicator = String::new();
    let mut labels = String::new();
    let mut attrs = String::new();
    let mut offset = 0usize;
    for (gi, g) in ds.graphs.iter().enumerate() {
        let mut pairs: Vec<(usize, usize)> = g.edges.iter().flat_map(|&(u, v)| [(u, v), (v, u)]).collect();
        pairs.sort_unstable();
        for (u, v) in pairs {
            a.push_str(&format!("{}, {}\n", u + offset + 1, v + offset + 1));
        }
        for v in 0..g.num_nodes {
            indicator.push_str(&format!("{}\n", gi + 1));
            let row: Vec<String> = g.features.row(v).iter().map(|x| format!("{x}")).collect();
            attrs.push_str(&row.join(", "));
            attrs.push('\n');
        }
        labels.push_str(&format!("{}\n", g.label));
        offset += g.num_nodes;
    }
    for (suffix, body) in [("A", a), ("graph_indicator", indicator), ("graph_labels", labels), ("node_attributes", attrs)] {
        let path = dataset_path(dir, name, suffix);
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Percentile with linear interpolation between closest ranks
/// (position `p/100 * (len - 1)` in the sorted list).
pub fn percentile(sorted: &[usize], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] as f64 + frac * (sorted[hi] as f64 - sorted[lo] as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeSplit {
    pub train_ids: Vec<usize>,
    pub val_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub percentile_low: f64,
    pub percentile_high: f64,
    pub val_fraction: f64,
    pub low_threshold: f64,
    pub high_threshold: f64,
    pub seed: u64,
}

impl SizeSplit {
    /// Training pool before the validation carve-out.
    pub fn pool_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.train_ids.iter().chain(&self.val_ids).copied().collect();
        ids.sort_unstable();
        ids
    }
}

/// Small-train / large-test split: graphs at or below the 50th size percentile
/// form the training pool (10% of it, stratified by class, held out for
/// validation); graphs at or above the 90th percentile form the test set.
pub fn size_split(ds: &GraphDataset, seed: u64) -> Result<SizeSplit> {
    size_split_with(ds, seed, 50.0, 90.0, 0.1)
}

pub fn size_split_with(ds: &GraphDataset, seed: u64, low: f64, high: f64, val_fraction: f64) -> Result<SizeSplit> {
    if ds.is_empty() {
        return Err(Error::DegenerateSplit("dataset is empty".into()));
    }
    let mut sorted = ds.sizes();
    sorted.sort_unstable();
    let low_threshold = percentile(&sorted, low);
    let high_threshold = percentile(&sorted, high);
    if low_threshold >= high_threshold {
        return Err(Error::DegenerateSplit(format!(
            "{low}th percentile ({low_threshold}) and {high}th percentile ({high_threshold}) coincide"
        )));
    }
    let mut pool_by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes];
    let mut test_ids = Vec::new();
    for (i, g) in ds.graphs.iter().enumerate() {
        let n = g.num_nodes as f64;
        if n <= low_threshold {
            pool_by_class[g.label].push(i);
        } else if n >= high_threshold {
            test_ids.push(i);
        }
    }
    let pool_size: usize = pool_by_class.iter().map(Vec::len).sum();
    let val_total = (val_fraction * pool_size as f64).round() as usize;

    // largest-remainder allocation of the validation quota across classes
    let exact: Vec<f64> = pool_by_class.iter().map(|c| val_fraction * c.len() as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..quota.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut remaining = val_total.saturating_sub(quota.iter().sum());
    for &c in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        if quota[c] < pool_by_class[c].len() {
            quota[c] += 1;
            remaining -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, SPLIT_STREAM));
    let mut train_ids = Vec::new();
    let mut val_ids = Vec::new();
    for (members, q) in pool_by_class.into_iter().zip(quota) {
        let mut shuffled = members;
        shuffled.shuffle(&mut rng);
        val_ids.extend_from_slice(&shuffled[..q]);
        train_ids.extend_from_slice(&shuffled[q..]);
    }
    train_ids.sort_unstable();
    val_ids.sort_unstable();
    Ok(SizeSplit {
        train_ids,
        val_ids,
        test_ids,
        percentile_low: low,
        percentile_high: high,
        val_fraction,
        low_threshold,
        high_threshold,
        seed,
    })
}

/// Inverse-frequency class weights `N / (num_classes * count_c)` over `ids`.
/// Classes that never occur get weight 0.
pub fn class_weights(ds: &GraphDataset, ids: &[usize]) -> Vec<f64> {
    let mut counts = vec![0usize; ds.num_classes];
    for &i in ids {
        counts[ds.graphs[i].label] += 1;
    }
    weights_from_counts(&counts)
}

pub fn weights_from_counts(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    let k = counts.len() as f64;
    counts
        .iter()
        .enumerate()
        .map(|(c, &n)| {
            if n == 0 {
                log::warn!("class {c} is absent; its loss weight is 0");
                0.0
            } else {
                total as f64 / (k * n as f64)
            }
        })
        .collect()
}
