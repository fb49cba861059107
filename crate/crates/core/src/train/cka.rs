use serde::{Deserialize, Serialize};

use crate::coarsen::{precompute_coarsened_datasets, Aggregation, CoarsenMethod};
use crate::error::{Error, Result};
use crate::gnn::GnnModel;
use crate::graph::{AttributedGraph, GraphDataset};
use crate::metrics::linear_cka;

const CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CkaRow {
    pub ratio: f64,
    /// Regularized vs unregularized model on the coarsened graphs.
    pub between_models: f64,
    /// Original vs coarsened graphs, regularized model.
    pub within_regularized: f64,
    /// Original vs coarsened graphs, unregularized model.
    pub within_unregularized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CkaCurves {
    /// Regularized vs unregularized model on the original graphs.
    pub original_between: f64,
    pub rows: Vec<CkaRow>,
}

fn pooled(model: &GnnModel, graphs: &[&AttributedGraph]) -> Result<Vec<Vec<f64>>> {
    Ok(model.infer_chunked(graphs, CHUNK)?.pooled())
}

/// Linear CKA over graph-level representations (mean node embedding, one row
/// per graph) of the dataset graphs at `ids`, for originals and for copies
/// coarsened at each ratio.
pub fn cka_analysis(
    regularized: &GnnModel,
    unregularized: &GnnModel,
    ds: &GraphDataset,
    ids: &[usize],
    ratios: &[f64],
    method: CoarsenMethod,
    agg: Aggregation,
    seed: u64,
) -> Result<CkaCurves> {
    if ids.len() < 2 {
        return Err(Error::InvalidArgument("CKA analysis needs at least two graphs".into()));
    }
    let subset = ds.subset(ids);
    let originals: Vec<&AttributedGraph> = subset.graphs.iter().collect();
    let reg_orig = pooled(regularized, &originals)?;
    let noreg_orig = pooled(unregularized, &originals)?;
    let coarse = precompute_coarsened_datasets(&subset, ratios, method, agg, seed)?;
    let mut rows = Vec::with_capacity(ratios.len());
    for (j, &ratio) in ratios.iter().enumerate() {
        let graphs: Vec<&AttributedGraph> = coarse.per_ratio[j].iter().map(|c| &c.graph).collect();
        let reg = pooled(regularized, &graphs)?;
        let noreg = pooled(unregularized, &graphs)?;
        rows.push(CkaRow {
            ratio,
            between_models: linear_cka(&reg, &noreg)?,
            within_regularized: linear_cka(&reg_orig, &reg)?,
            within_unregularized: linear_cka(&noreg_orig, &noreg)?,
        });
    }
    Ok(CkaCurves {
        original_between: linear_cka(&reg_orig, &noreg_orig)?,
        rows,
    })
}
