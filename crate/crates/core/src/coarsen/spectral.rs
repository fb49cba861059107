//! Spectral clustering on the symmetric normalized Laplacian.

use super::kmeans::kmeans;
use super::{check_cluster_count, Partition};
use crate::error::Result;
use crate::graph::{build_csr, AttributedGraph};

const MAX_SWEEPS: usize = 100;

/// Dense `L = I - D^{-1/2} A D^{-1/2}` in row-major order. Isolated nodes
/// get a zero row, so each of them spans its own null-space direction.
pub fn normalized_laplacian(g: &AttributedGraph) -> Result<Vec<f64>> {
    let csr = build_csr(g)?;
    let n = g.num_nodes;
    let inv_sqrt: Vec<f64> = csr
        .degrees
        .iter()
        .map(|&d| if d > 0 { 1.0 / (d as f64).sqrt() } else { 0.0 })
        .collect();
    let mut l = vec![0.0; n * n];
    for v in 0..n {
        if csr.degrees[v] > 0 {
            l[v * n + v] = 1.0;
        }
        for &u in csr.neighbors(v) {
            l[v * n + u] = -inv_sqrt[v] * inv_sqrt[u];
        }
    }
    Ok(l)
}

/// Cyclic Jacobi eigen-decomposition of a symmetric `n x n` matrix.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// columns of a row-major `n x n` matrix.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(matrix.len(), n * n);
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + new_col] = v[r * n + old_col];
        }
    }
    (values, vectors)
}

/// k-means on the rows of the eigenvectors belonging to the `k` smallest
/// eigenvalues of the normalized Laplacian.
pub fn spectral_cluster_partition(g: &AttributedGraph, k: usize, seed: u64) -> Result<Partition> {
    check_cluster_count(g, k)?;
    let n = g.num_nodes;
    if k == n {
        return Ok(Partition::identity(n));
    }
    if k == 1 {
        return Partition::new(vec![0; n], 1);
    }
    let lap = normalized_laplacian(g)?;
    let (_, vectors) = symmetric_eigen(&lap, n);
    let points: Vec<Vec<f64>> = (0..n).map(|r| vectors[r * n..r * n + k].to_vec()).collect();
    Ok(Partition::from_labels(&kmeans(&points, k, seed)))
}
