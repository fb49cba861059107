use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_cluster_count, Partition};
use crate::error::Result;
use crate::graph::{build_csr, AttributedGraph};
use crate::seed::mix_seed;

const MAX_ITERATIONS: usize = 50;
const RESTARTS: u64 = 10;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.gen_range(0..n)].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in dist.iter().enumerate() {
                if *d > 0.0 && target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            // float round-off can run past the end; fall back to the last positive weight
            if dist[chosen] == 0.0 {
                chosen = dist.iter().rposition(|d| *d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.push(points[pick].clone());
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

/// Moves the point farthest from its own centroid (among clusters with at
/// least two members) into each empty cluster.
fn repair_empty(points: &[Vec<f64>], labels: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if sizes[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[labels[i]]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let i = far.expect("k <= number of points");
        labels[i] = empty;
        centroids[empty] = points[i].clone();
    }
}

fn update_centroids(points: &[Vec<f64>], labels: &[usize], centroids: &mut [Vec<f64>]) {
    let dim = points[0].len();
    let k = centroids.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    for j in 0..k {
        if counts[j] > 0 {
            centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
        }
    }
}

/// Lloyd's k-means with k-means++ seeding, best of several restarts by
/// inertia. Every one of the `k` clusters is nonempty in the result, so `k`
/// must not exceed the number of points.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    assert!(k >= 1 && k <= points.len(), "k = {k} with {} points", points.len());
    let mut best: Option<(f64, Vec<usize>)> = None;
    for run in 0..RESTARTS {
        let labels = lloyd(points, k, mix_seed(seed, run));
        let cost = inertia(points, &labels, k);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, labels));
        }
    }
    best.unwrap().1
}

fn inertia(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let mut centroids = vec![Vec::new(); k];
    update_centroids(points, labels, &mut centroids);
    points.iter().zip(labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum()
}

fn lloyd(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    repair_empty(points, &mut labels, &mut centroids);
    for _ in 0..MAX_ITERATIONS {
        update_centroids(points, &labels, &mut centroids);
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        repair_empty(points, &mut next, &mut centroids);
        if next == labels {
            break;
        }
        labels = next;
    }
    labels
}

/// k-means over per-node vectors `[features | degree]`.
pub fn kmeans_partition(g: &AttributedGraph, k: usize, seed: u64) -> Result<Partition> {
    check_cluster_count(g, k)?;
    if k == g.num_nodes {
        return Ok(Partition::identity(k));
    }
    let csr = build_csr(g)?;
    let points: Vec<Vec<f64>> = (0..g.num_nodes)
        .map(|v| {
            let mut p = g.features.row(v).to_vec();
            p.push(csr.degrees[v] as f64);
            p
        })
        .collect();
    Ok(Partition::from_labels(&kmeans(&points, k, seed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::FeatureMatrix;

    fn graph(n: usize, edges: &[(usize, usize)], feats: &[f64]) -> AttributedGraph {
        let f = FeatureMatrix::new(n, 1, feats.to_vec()).unwrap();
        AttributedGraph::new(n, edges.iter().copied(), f, 0, 0).unwrap()
    }

    /// Exhaustive optimal 2-means of small point sets.
    fn brute_force_two_means(points: &[Vec<f64>]) -> Vec<Vec<usize>> {
        let n = points.len();
        let mut best = f64::INFINITY;
        let mut best_sets = vec![];
        for mask in 1..(1u32 << n) - 1 {
            if mask & 1 == 0 {
                continue;
            }
            let sets: Vec<Vec<usize>> = vec![
                (0..n).filter(|i| mask >> i & 1 == 1).collect(),
                (0..n).filter(|i| mask >> i & 1 == 0).collect(),
            ];
            let cost: f64 = sets
                .iter()
                .map(|s| {
                    let dim = points[0].len();
                    let mean: Vec<f64> = (0..dim).map(|d| s.iter().map(|&i| points[i][d]).sum::<f64>() / s.len() as f64).collect();
                    s.iter().map(|&i| sq_dist(&points[i], &mean)).sum::<f64>()
                })
                .sum();
            if cost < best - 1e-12 {
                best = cost;
                best_sets = sets;
            }
        }
        best_sets
    }

    fn as_sets(p: &Partition) -> Vec<Vec<usize>> {
        let mut c = p.clusters();
        c.sort();
        c
    }

    #[test]
    fn separated_one_dimensional_points() {
        let g = graph(4, &[], &[0.0, 0.0, 10.0, 10.0]);
        let pts: Vec<Vec<f64>> = [0.0, 0.0, 10.0, 10.0].iter().map(|&x| vec![x, 0.0]).collect();
        let mut oracle = brute_force_two_means(&pts);
        oracle.sort();
        assert_eq!(oracle, vec![vec![0, 1], vec![2, 3]]);
        for seed in 0..10 {
            let p = kmeans_partition(&g, 2, seed).unwrap();
            assert_eq!(as_sets(&p), oracle);
        }
    }

    #[test]
    fn k_equals_n_is_identity() {
        let g = graph(5, &[(0, 1)], &[1.0; 5]);
        assert_eq!(kmeans_partition(&g, 5, 0).unwrap(), Partition::identity(5));
    }

    #[test]
    fn constant_features_split_by_degree() {
        // star: center degree 4, leaves degree 1, plus two isolated nodes (degree 0)
        let g = graph(7, &[(0, 1), (0, 2), (0, 3), (0, 4)], &[3.0; 7]);
        let csr = build_csr(&g).unwrap();
        let pts: Vec<Vec<f64>> = (0..7).map(|v| vec![3.0, csr.degrees[v] as f64]).collect();
        let mut oracle = brute_force_two_means(&pts);
        oracle.sort();
        assert_eq!(oracle, vec![vec![0], vec![1, 2, 3, 4, 5, 6]]);
        for seed in 0..10 {
            assert_eq!(as_sets(&kmeans_partition(&g, 2, seed).unwrap()), oracle);
        }
    }

    #[test]
    fn duplicates_still_fill_every_cluster() {
        let pts = vec![vec![1.0]; 6];
        let labels = kmeans(&pts, 4, 9);
        let p = Partition::from_labels(&labels);
        assert_eq!(p.num_clusters(), 4);
    }

    #[test]
    fn too_many_clusters() {
        let g = graph(2, &[], &[0.0, 1.0]);
        assert!(kmeans_partition(&g, 3, 0).is_err());
    }
}
