//! Three-layer GCN and GIN graph classifiers.
//!
//! A forward pass runs over the disjoint union of a batch of graphs. The last
//! message-passing layer ends in `tanh`, so node embeddings lie in `(-1, 1)`;
//! graph representations are the mean of their node embeddings and feed a
//! two-layer head producing class logits.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::graph::{build_csr, AttributedGraph, CsrAdjacency};
use crate::tensor::{AggregationMode, BatchStats, ParamId, ParamStore, Propagation, Tape, Tensor, Var};

pub const NUM_LAYERS: usize = 3;
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

const CHECKPOINT_MAGIC: &[u8; 8] = b"SZRMODEL";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gcn,
    Gin,
}

impl ModelKind {
    pub fn aggregation(self) -> AggregationMode {
        match self {
            ModelKind::Gcn => AggregationMode::SymNorm,
            ModelKind::Gin => AggregationMode::Sum,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Gcn => "gcn",
            ModelKind::Gin => "gin",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(ModelKind::Gcn),
            "gin" => Ok(ModelKind::Gin),
            other => Err(Error::InvalidArgument(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub hidden: usize,
    pub num_classes: usize,
    pub dropout: f64,
}

#[derive(Clone, Copy, Debug)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Clone, Copy, Debug)]
enum Layer {
    Gcn {
        w: ParamId,
        b: ParamId,
    },
    Gin {
        eps: ParamId,
        w1: ParamId,
        b1: ParamId,
        w2: ParamId,
        b2: ParamId,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Node features and propagation operator for a batch of graphs.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    features: Tensor,
    propagation: Arc<Propagation>,
    offsets: Arc<[usize]>,
}

impl GraphBatch {
    pub fn new(graphs: &[&AttributedGraph], mode: AggregationMode) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let dim = graphs[0].feature_dim();
        let mut offsets = vec![0];
        let mut data = Vec::new();
        let mut adjs: Vec<CsrAdjacency> = Vec::with_capacity(graphs.len());
        for g in graphs {
            if g.num_nodes == 0 {
                return Err(Error::InvalidGraph(format!("graph {} has no nodes", g.graph_id)));
            }
            if g.feature_dim() != dim {
                return Err(Error::shape("batch", format!("feature width {} vs {dim}", g.feature_dim())));
            }
            data.extend_from_slice(g.features.as_slice());
            offsets.push(offsets.last().unwrap() + g.num_nodes);
            adjs.push(build_csr(g)?);
        }
        let adj = CsrAdjacency::disjoint_union(&adjs);
        Ok(Self {
            features: Tensor::new(*offsets.last().unwrap(), dim, data)?,
            propagation: Arc::new(Propagation::new(&adj, mode)),
            offsets: offsets.into(),
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }
}

pub enum Mode<'a> {
    /// Batch statistics, dropout drawn from the given generator.
    Train(&'a mut ChaCha8Rng),
    /// Running statistics, no dropout.
    Eval,
}

pub struct ForwardOutput {
    /// Stacked node embeddings of all graphs in the batch.
    pub embeddings: Var,
    /// One row of logits per graph.
    pub logits: Var,
    /// Statistics of each batch-norm layer in train mode.
    pub batch_stats: Vec<BatchStats>,
    offsets: Arc<[usize]>,
}

impl ForwardOutput {
    pub fn num_graphs(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Node embeddings of graph `i` of the batch.
    pub fn graph_embeddings(&self, tape: &mut Tape, i: usize) -> Result<Var> {
        tape.slice_rows(self.embeddings, self.offsets[i], self.offsets[i + 1])
    }
}

/// Eval-mode outputs detached from any tape.
#[derive(Clone, Debug)]
pub struct Inference {
    pub node_embeddings: Tensor,
    pub offsets: Vec<usize>,
    pub logits: Tensor,
}

impl Inference {
    pub fn predictions(&self) -> Vec<usize> {
        (0..self.logits.rows())
            .map(|r| {
                let row = self.logits.row(r);
                (0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best })
            })
            .collect()
    }

    /// Mean node embedding per graph (rows = graphs).
    pub fn pooled(&self) -> Vec<Vec<f64>> {
        let d = self.node_embeddings.cols();
        self.offsets
            .windows(2)
            .map(|w| {
                let mut acc = vec![0.0; d];
                for r in w[0]..w[1] {
                    for (a, x) in acc.iter_mut().zip(self.node_embeddings.row(r)) {
                        *a += x;
                    }
                }
                acc.iter().map(|a| a / (w[1] - w[0]) as f64).collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct GnnModel {
    config: ModelConfig,
    params: ParamStore,
    layers: Vec<Layer>,
    norms: Vec<Norm>,
    head: [ParamId; 4],
    running: Vec<RunningStats>,
}

/// `ReLU(S·H·W + b)` without normalization.
pub fn gcn_layer(tape: &mut Tape, h: Var, prop: &Arc<Propagation>, w: Var, b: Var) -> Result<Var> {
    let pre = gcn_preactivation(tape, h, prop, w, b)?;
    tape.relu(pre)
}

fn gcn_preactivation(tape: &mut Tape, h: Var, prop: &Arc<Propagation>, w: Var, b: Var) -> Result<Var> {
    let agg = tape.propagate(h, prop)?;
    let lin = tape.matmul(agg, w)?;
    tape.add_row(lin, b)
}

/// `MLP((1 + ε)·H + Σ_neighbors H)` with `MLP = Linear, ReLU, Linear`.
pub fn gin_layer(tape: &mut Tape, h: Var, prop: &Arc<Propagation>, eps: Var, mlp: [Var; 4]) -> Result<Var> {
    let agg = tape.propagate(h, prop)?;
    let scaled = tape.scale_by(h, eps)?;
    let own = tape.add(h, scaled)?;
    let z = tape.add(own, agg)?;
    let z = tape.matmul(z, mlp[0])?;
    let z = tape.add_row(z, mlp[1])?;
    let z = tape.relu(z)?;
    let z = tape.matmul(z, mlp[2])?;
    tape.add_row(z, mlp[3])
}

impl GnnModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        if config.input_dim == 0 || config.hidden == 0 || config.num_classes == 0 {
            return Err(Error::InvalidArgument(format!("degenerate model widths {config:?}")));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} outside [0, 1)", config.dropout)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let h = config.hidden;
        let mut layers = Vec::with_capacity(NUM_LAYERS);
        let mut norms = Vec::with_capacity(NUM_LAYERS - 1);
        for l in 0..NUM_LAYERS {
            let fan_in = if l == 0 { config.input_dim } else { h };
            let layer = match config.kind {
                ModelKind::Gcn => Layer::Gcn {
                    w: params.add(format!("layer{l}.w"), Tensor::glorot_uniform(fan_in, h, &mut rng)),
                    b: params.add(format!("layer{l}.b"), Tensor::zeros(1, h)),
                },
                ModelKind::Gin => Layer::Gin {
                    eps: params.add(format!("layer{l}.eps"), Tensor::scalar(0.0)),
                    w1: params.add(format!("layer{l}.mlp0.w"), Tensor::glorot_uniform(fan_in, h, &mut rng)),
                    b1: params.add(format!("layer{l}.mlp0.b"), Tensor::zeros(1, h)),
                    w2: params.add(format!("layer{l}.mlp1.w"), Tensor::glorot_uniform(h, h, &mut rng)),
                    b2: params.add(format!("layer{l}.mlp1.b"), Tensor::zeros(1, h)),
                },
            };
            layers.push(layer);
            if l + 1 < NUM_LAYERS {
                norms.push(Norm {
                    gamma: params.add(format!("layer{l}.bn.gamma"), Tensor::filled(1, h, 1.0)),
                    beta: params.add(format!("layer{l}.bn.beta"), Tensor::zeros(1, h)),
                });
            }
        }
        let head = [
            params.add("head0.w", Tensor::glorot_uniform(h, h, &mut rng)),
            params.add("head0.b", Tensor::zeros(1, h)),
            params.add("head1.w", Tensor::glorot_uniform(h, config.num_classes, &mut rng)),
            params.add("head1.b", Tensor::zeros(1, config.num_classes)),
        ];
        let running = (0..NUM_LAYERS - 1)
            .map(|_| RunningStats {
                mean: vec![0.0; h],
                var: vec![1.0; h],
            })
            .collect();
        Ok(Self {
            config,
            params,
            layers,
            norms,
            head,
            running,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn running_stats(&self) -> &[RunningStats] {
        &self.running
    }

    pub fn batch(&self, graphs: &[&AttributedGraph]) -> Result<GraphBatch> {
        let batch = GraphBatch::new(graphs, self.config.kind.aggregation())?;
        if batch.features.cols() != self.config.input_dim {
            return Err(Error::shape(
                "forward",
                format!("feature width {} but model expects {}", batch.features.cols(), self.config.input_dim),
            ));
        }
        Ok(batch)
    }

    pub fn forward(&self, tape: &mut Tape, batch: &GraphBatch, mode: Mode<'_>) -> Result<ForwardOutput> {
        self.forward_with(&self.params, tape, batch, mode)
    }

    /// Forward pass reading parameter values from `store` instead of the model.
    pub fn forward_with(&self, store: &ParamStore, tape: &mut Tape, batch: &GraphBatch, mut mode: Mode<'_>) -> Result<ForwardOutput> {
        if batch.features.cols() != self.config.input_dim {
            return Err(Error::shape(
                "forward",
                format!("feature width {} but model expects {}", batch.features.cols(), self.config.input_dim),
            ));
        }
        let prop = &batch.propagation;
        let mut h = tape.constant(batch.features.clone());
        let mut batch_stats = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let last = l + 1 == NUM_LAYERS;
            let z = match *layer {
                Layer::Gcn { w, b } => {
                    let (w, b) = (tape.param(store, w), tape.param(store, b));
                    let pre = gcn_preactivation(tape, h, prop, w, b)?;
                    if last {
                        pre
                    } else {
                        tape.relu(pre)?
                    }
                }
                Layer::Gin { eps, w1, b1, w2, b2 } => {
                    let eps = tape.param(store, eps);
                    let mlp = [w1, b1, w2, b2].map(|p| tape.param(store, p));
                    gin_layer(tape, h, prop, eps, mlp)?
                }
            };
            h = if last {
                tape.tanh(z)?
            } else {
                let norm = self.norms[l];
                let gamma = tape.param(store, norm.gamma);
                let beta = tape.param(store, norm.beta);
                match &mut mode {
                    Mode::Train(rng) => {
                        let (out, stats) = tape.batch_norm_train(z, gamma, beta, BN_EPS)?;
                        batch_stats.push(stats);
                        tape.dropout(out, self.config.dropout, true, &mut **rng)?
                    }
                    Mode::Eval => {
                        let rs = &self.running[l];
                        tape.batch_norm_eval(z, gamma, beta, &rs.mean, &rs.var, BN_EPS)?
                    }
                }
            };
        }
        let pooled = tape.segment_mean(h, Arc::clone(&batch.offsets))?;
        let [w0, b0, w1, b1] = self.head.map(|p| tape.param(store, p));
        let z = tape.matmul(pooled, w0)?;
        let z = tape.add_row(z, b0)?;
        let z = tape.relu(z)?;
        let z = tape.matmul(z, w1)?;
        let logits = tape.add_row(z, b1)?;
        Ok(ForwardOutput {
            embeddings: h,
            logits,
            batch_stats,
            offsets: Arc::clone(&batch.offsets),
        })
    }

    /// Folds train-mode batch statistics into the running estimates
    /// (momentum update, unbiased variance).
    pub fn update_running_stats(&mut self, stats: &[BatchStats]) -> Result<()> {
        if stats.len() != self.running.len() {
            return Err(Error::InvalidArgument(format!("{} batch-norm stats for {} layers", stats.len(), self.running.len())));
        }
        for (rs, s) in self.running.iter_mut().zip(stats) {
            let correction = if s.count > 1 { s.count as f64 / (s.count - 1) as f64 } else { 1.0 };
            for j in 0..rs.mean.len() {
                rs.mean[j] = (1.0 - BN_MOMENTUM) * rs.mean[j] + BN_MOMENTUM * s.mean[j];
                rs.var[j] = (1.0 - BN_MOMENTUM) * rs.var[j] + BN_MOMENTUM * s.var[j] * correction;
            }
        }
        Ok(())
    }

    /// Eval-mode pass over `graphs` in one batch.
    pub fn infer(&self, graphs: &[&AttributedGraph]) -> Result<Inference> {
        let batch = self.batch(graphs)?;
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, &batch, Mode::Eval)?;
        Ok(Inference {
            node_embeddings: tape.value(out.embeddings).clone(),
            offsets: batch.offsets.to_vec(),
            logits: tape.value(out.logits).clone(),
        })
    }

    /// Eval-mode pass in chunks of `chunk` graphs, concatenated.
    pub fn infer_chunked(&self, graphs: &[&AttributedGraph], chunk: usize) -> Result<Inference> {
        let chunk = chunk.max(1);
        let mut emb = Vec::new();
        let mut logits = Vec::new();
        let mut offsets = vec![0];
        for part in graphs.chunks(chunk) {
            let inf = self.infer(part)?;
            let base = *offsets.last().unwrap();
            offsets.extend(inf.offsets[1..].iter().map(|o| o + base));
            emb.extend_from_slice(inf.node_embeddings.data());
            logits.extend_from_slice(inf.logits.data());
        }
        let h = self.config.hidden;
        Ok(Inference {
            node_embeddings: Tensor::new(emb.len() / h, h, emb)?,
            offsets,
            logits: Tensor::new(graphs.len(), self.config.num_classes, logits)?,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.str(&self.config.kind.to_string());
        w.usize(self.config.input_dim);
        w.usize(self.config.hidden);
        w.usize(self.config.num_classes);
        w.f64(self.config.dropout);
        w.usize(self.params.len());
        for (_, p) in self.params.iter() {
            w.str(&p.name);
            w.usize(p.value.rows());
            w.usize(p.value.cols());
            for &x in p.value.data() {
                w.f64(x);
            }
        }
        w.usize(self.running.len());
        for rs in &self.running {
            w.f64s(&rs.mean);
            w.f64s(&rs.var);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::checked(bytes, Error::Checkpoint)?;
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(r.fail("bad magic"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(r.fail(format!("unsupported version {version}")));
        }
        let config = ModelConfig {
            kind: r.str()?.parse()?,
            input_dim: r.usize()?,
            hidden: r.usize()?,
            num_classes: r.usize()?,
            dropout: r.f64()?,
        };
        let mut model = Self::new(config, 0)?;
        let count = r.usize()?;
        if count != model.params.len() {
            return Err(r.fail(format!("{count} parameters, expected {}", model.params.len())));
        }
        for id in model.params.ids().collect::<Vec<_>>() {
            let name = r.str()?;
            if name != model.params.name(id) {
                return Err(r.fail(format!("parameter '{name}' where '{}' expected", model.params.name(id))));
            }
            let rows = r.usize()?;
            let cols = r.usize()?;
            if [rows, cols] != model.params.get(id).shape() {
                return Err(r.fail(format!("parameter '{name}' has shape {rows}x{cols}")));
            }
            let data = (0..rows * cols).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            *model.params.get_mut(id) = Tensor::new(rows, cols, data)?;
        }
        let layers = r.usize()?;
        if layers != model.running.len() {
            return Err(r.fail("batch-norm layer count"));
        }
        for rs in &mut model.running {
            let mean = r.f64s()?;
            let var = r.f64s()?;
            if mean.len() != rs.mean.len() || var.len() != rs.var.len() {
                return Err(r.fail("batch-norm width"));
            }
            *rs = RunningStats { mean, var };
        }
        r.expect_end()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::FeatureMatrix;
    use crate::tensor::gradient_check;

    fn graph(n: usize, edges: &[(usize, usize)], feats: Vec<f64>, d: usize) -> AttributedGraph {
        AttributedGraph::new(n, edges.iter().copied(), FeatureMatrix::new(n, d, feats).unwrap(), 0, 0).unwrap()
    }

    fn model(kind: ModelKind, input_dim: usize) -> GnnModel {
        GnnModel::new(
            ModelConfig {
                kind,
                input_dim,
                hidden: 8,
                num_classes: 2,
                dropout: 0.3,
            },
            7,
        )
        .unwrap()
    }

    fn prop(g: &AttributedGraph, mode: AggregationMode) -> Arc<Propagation> {
        Arc::new(Propagation::new(&build_csr(g).unwrap(), mode))
    }

    #[test]
    fn gcn_isolated_node_identity() {
        let g = graph(1, &[], vec![-0.5, 2.0], 2);
        let mut t = Tape::new();
        let h = t.constant(Tensor::from_rows(&[vec![-0.5, 2.0]]).unwrap());
        let w = t.constant(Tensor::identity(2));
        let b = t.constant(Tensor::zeros(1, 2));
        let out = gcn_layer(&mut t, h, &prop(&g, AggregationMode::SymNorm), w, b).unwrap();
        assert_eq!(t.value(out).data(), &[0.0, 2.0]);
    }

    #[test]
    fn gcn_two_node_preactivation() {
        let g = graph(2, &[(0, 1)], vec![1.0, 1.0], 1);
        let mut t = Tape::new();
        let h = t.constant(Tensor::filled(2, 1, 1.0));
        let w = t.constant(Tensor::scalar(1.0));
        let b = t.constant(Tensor::zeros(1, 1));
        let pre = gcn_preactivation(&mut t, h, &prop(&g, AggregationMode::SymNorm), w, b).unwrap();
        for v in t.value(pre).data() {
            assert!((v - 1.0).abs() < 1e-15);
        }
        let w0 = t.constant(Tensor::zeros(1, 1));
        let out = gcn_layer(&mut t, h, &prop(&g, AggregationMode::SymNorm), w0, b).unwrap();
        assert_eq!(t.value(out).data(), &[0.0, 0.0]);
    }

    fn identity_mlp(t: &mut Tape, d: usize) -> [Var; 4] {
        [
            t.constant(Tensor::identity(d)),
            t.constant(Tensor::zeros(1, d)),
            t.constant(Tensor::identity(d)),
            t.constant(Tensor::zeros(1, d)),
        ]
    }

    #[test]
    fn gin_examples() {
        let star = graph(4, &[(0, 1), (0, 2), (0, 3)], vec![1.0; 4], 1);
        let mut t = Tape::new();
        let h = t.constant(Tensor::filled(4, 1, 1.0));
        let eps = t.constant(Tensor::scalar(0.0));
        let mlp = identity_mlp(&mut t, 1);
        let out = gin_layer(&mut t, h, &prop(&star, AggregationMode::Sum), eps, mlp).unwrap();
        assert_eq!(t.value(out).data(), &[4.0, 2.0, 2.0, 2.0]);

        let single = graph(1, &[], vec![0.7], 1);
        let h = t.constant(Tensor::scalar(0.7));
        let out = gin_layer(&mut t, h, &prop(&single, AggregationMode::Sum), eps, mlp).unwrap();
        assert_eq!(t.value(out).item(), 0.7);
        let minus_one = t.constant(Tensor::scalar(-1.0));
        let out = gin_layer(&mut t, h, &prop(&single, AggregationMode::Sum), minus_one, mlp).unwrap();
        assert_eq!(t.value(out).item(), 0.0);
    }

    #[test]
    fn embeddings_bounded_and_single_node_head() {
        for kind in [ModelKind::Gcn, ModelKind::Gin] {
            let m = model(kind, 2);
            let g = graph(1, &[], vec![30.0, -40.0], 2);
            let inf = m.infer(&[&g]).unwrap();
            assert!(inf.node_embeddings.max_abs() < 1.0);
            assert_eq!(inf.logits.shape(), [1, 2]);
            assert_eq!(inf.pooled()[0], inf.node_embeddings.row(0));
        }
    }

    #[test]
    fn feature_width_mismatch() {
        let m = model(ModelKind::Gin, 3);
        let g = graph(2, &[(0, 1)], vec![1.0, 2.0], 1);
        assert!(matches!(m.infer(&[&g]), Err(Error::Shape { .. })));
    }

    #[test]
    fn batching_matches_individual_inference() {
        let a = graph(3, &[(0, 1), (1, 2)], vec![1.0, 0.0, 0.5, 1.0, 0.0, 1.0], 2);
        let b = graph(2, &[(0, 1)], vec![0.2, 0.3, -1.0, 1.0], 2);
        for kind in [ModelKind::Gcn, ModelKind::Gin] {
            let m = model(kind, 2);
            let both = m.infer(&[&a, &b]).unwrap();
            let only_b = m.infer(&[&b]).unwrap();
            for (x, y) in both.logits.row(1).iter().zip(only_b.logits.row(0)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn train_mode_returns_stats_and_updates_running() {
        let g = graph(3, &[(0, 1), (1, 2)], vec![1.0, 0.0, 0.5, 1.0, 0.0, 1.0], 2);
        let mut m = model(ModelKind::Gcn, 2);
        let batch = m.batch(&[&g]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = Tape::new();
        let out = m.forward(&mut t, &batch, Mode::Train(&mut rng)).unwrap();
        assert_eq!(out.batch_stats.len(), NUM_LAYERS - 1);
        let before = m.running_stats().to_vec();
        m.update_running_stats(&out.batch_stats).unwrap();
        assert_ne!(before, m.running_stats());
        let s = &out.batch_stats[0];
        let expected = 0.9 * 1.0 + 0.1 * s.var[0] * 3.0 / 2.0;
        assert!((m.running_stats()[0].var[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let g = graph(3, &[(0, 1), (1, 2)], vec![1.0, 0.0, 0.5, 1.0, 0.0, 1.0], 2);
        for kind in [ModelKind::Gcn, ModelKind::Gin] {
            let mut m = model(kind, 2);
            let batch = m.batch(&[&g]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut t = Tape::new();
            let out = m.forward(&mut t, &batch, Mode::Train(&mut rng)).unwrap();
            m.update_running_stats(&out.batch_stats).unwrap();
            let restored = GnnModel::from_bytes(&m.to_bytes()).unwrap();
            let (a, b) = (m.infer(&[&g]).unwrap(), restored.infer(&[&g]).unwrap());
            assert_eq!(a.logits, b.logits);
            assert_eq!(a.node_embeddings, b.node_embeddings);

            let mut bytes = m.to_bytes();
            bytes[20] ^= 1;
            assert!(matches!(GnnModel::from_bytes(&bytes), Err(Error::Checkpoint(_))));
        }
    }

    #[test]
    fn end_to_end_gradient_check() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (1, 4)], (0..10).map(|i| (i as f64 * 0.37).sin()).collect(), 2);
        for kind in [ModelKind::Gcn, ModelKind::Gin] {
            let mut m = model(kind, 2);
            if let Some(eps) = m.params().find("layer1.eps") {
                m.params_mut().get_mut(eps).data_mut()[0] = 0.2;
            }
            let batch = m.batch(&[&g]).unwrap();
            let ids: Vec<_> = m.params().ids().collect();
            let report = gradient_check(m.params(), &ids, 1e-5, |t, s| {
                let out = m.forward_with(s, t, &batch, Mode::Eval)?;
                t.weighted_cross_entropy(out.logits, &[1], &[1.0, 1.0])
            })
            .unwrap();
            assert!(report.max_relative_error < 1e-4, "{kind}: {report:?}");
        }
    }
}
