//! Versioned binary cache of precomputed coarsened datasets.
//!
//! Layout (all integers little-endian `u64`, reals `f64` bit patterns):
//!
//! ```text
//! magic "SZRCOARS" | version u32
//! key: dataset name, dataset digest, method, aggregation (length-prefixed UTF-8),
//!      ratio count + ratios, seed
//! graph count, graph ids
//! per ratio, per graph: source id, node count, edge count, edges,
//!      feature width, features, label, cluster count, assignment length, assignment
//! SHA-256 of everything above (32 bytes)
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{precompute_coarsened_datasets, Aggregation, CoarsenMethod, CoarsenedDatasets, CoarsenedGraph, Partition};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, FeatureMatrix, GraphDataset};

const MAGIC: &[u8; 8] = b"SZRCOARS";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CacheKey {
    pub dataset: String,
    pub dataset_digest: String,
    pub method: CoarsenMethod,
    pub aggregation: Aggregation,
    pub ratios: Vec<f64>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheStatus {
    UpToDate,
    Written,
}

/// Hex SHA-256 over the structure, features and labels of every graph.
pub fn dataset_digest(ds: &GraphDataset) -> String {
    let mut h = Sha256::new();
    h.update(ds.name.as_bytes());
    for g in &ds.graphs {
        let mut w = Writer::default();
        write_graph(&mut w, g);
        h.update(&w.buf);
    }
    hex::encode(h.finalize())
}

fn write_graph(w: &mut Writer, g: &AttributedGraph) {
    w.usize(g.num_nodes);
    w.usize(g.edges.len());
    for &(u, v) in &g.edges {
        w.usize(u);
        w.usize(v);
    }
    w.usize(g.features.cols());
    for &x in g.features.as_slice() {
        w.f64(x);
    }
    w.usize(g.label);
}

fn read_graph(r: &mut Reader<'_>, graph_id: usize) -> Result<AttributedGraph> {
    let n = r.usize()?;
    let m = r.usize()?;
    let mut edges = Vec::with_capacity(m.min(1 << 20));
    for _ in 0..m {
        edges.push((r.usize()?, r.usize()?));
    }
    let d = r.usize()?;
    let mut data = Vec::with_capacity((n * d).min(1 << 24));
    for _ in 0..n * d {
        data.push(r.f64()?);
    }
    let label = r.usize()?;
    let features = FeatureMatrix::new(n, d, data).map_err(|e| Error::Cache(e.to_string()))?;
    AttributedGraph::new(n, edges, features, label, graph_id).map_err(|e| Error::Cache(e.to_string()))
}

pub fn encode_cache(key: &CacheKey, data: &CoarsenedDatasets) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.str(&key.dataset);
    w.str(&key.dataset_digest);
    w.str(&key.method.to_string());
    w.str(&key.aggregation.to_string());
    w.usize(key.ratios.len());
    for &r in &key.ratios {
        w.f64(r);
    }
    w.u64(key.seed);
    w.usize(data.graph_ids.len());
    for &id in &data.graph_ids {
        w.usize(id);
    }
    for list in &data.per_ratio {
        for c in list {
            w.usize(c.source_id);
            write_graph(&mut w, &c.graph);
            w.usize(c.membership.num_clusters());
            w.usize(c.membership.num_nodes());
            for &a in c.membership.assignment() {
                w.usize(a);
            }
        }
    }
    w.finish()
}

pub fn decode_cache(bytes: &[u8]) -> Result<(CacheKey, CoarsenedDatasets)> {
    let mut r = Reader::checked(bytes, Error::Cache)?;
    if r.take(8)? != MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Cache(format!("unsupported version {version}")));
    }
    let dataset = r.str()?;
    let dataset_digest = r.str()?;
    let method: CoarsenMethod = r.str()?.parse()?;
    let aggregation: Aggregation = r.str()?.parse()?;
    let nr = r.usize()?;
    let ratios = (0..nr).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let seed = r.u64()?;
    let ng = r.usize()?;
    let graph_ids = (0..ng).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let mut per_ratio = Vec::with_capacity(nr);
    for &ratio in &ratios {
        let mut list = Vec::with_capacity(ng);
        for _ in 0..ng {
            let source_id = r.usize()?;
            let graph = read_graph(&mut r, source_id)?;
            let k = r.usize()?;
            let len = r.usize()?;
            let assignment = (0..len).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
            let membership = Partition::new(assignment, k).map_err(|e| Error::Cache(e.to_string()))?;
            list.push(CoarsenedGraph {
                graph,
                source_id,
                ratio,
                membership,
            });
        }
        per_ratio.push(list);
    }
    r.expect_end()?;
    let key = CacheKey {
        dataset,
        dataset_digest,
        method,
        aggregation,
        ratios: ratios.clone(),
        seed,
    };
    let data = CoarsenedDatasets {
        ratios,
        method,
        aggregation,
        seed,
        graph_ids,
        per_ratio,
    };
    Ok((key, data))
}

/// Loads the cache at `path` when its key matches, otherwise recomputes and
/// writes it.
pub fn load_or_compute(path: &Path, ds: &GraphDataset, ratios: &[f64], method: CoarsenMethod, agg: Aggregation, seed: u64) -> Result<(CoarsenedDatasets, CacheStatus)> {
    let key = CacheKey {
        dataset: ds.name.clone(),
        dataset_digest: dataset_digest(ds),
        method,
        aggregation: agg,
        ratios: ratios.to_vec(),
        seed,
    };
    if let Ok(bytes) = fs::read(path) {
        match decode_cache(&bytes) {
            Ok((stored, data)) if stored == key => return Ok((data, CacheStatus::UpToDate)),
            Ok(_) => log::info!("{}: cache key changed, recomputing", path.display()),
            Err(e) => log::warn!("{}: unreadable cache ({e}), recomputing", path.display()),
        }
    }
    let data = precompute_coarsened_datasets(ds, ratios, method, agg, seed)?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode_cache(&key, &data)).map_err(|e| Error::io(path, e))?;
    Ok((data, CacheStatus::Written))
}
