use rand::Rng;

use crate::error::{invalid, Result};
use crate::seed::stage_rng;

/// Lloyd iterations stop once no centroid moves farther than this.
pub const SHIFT_TOL: f64 = 1e-6;

/// Index of the nearest row of `table` to `x` by squared distance, lowest
/// index on ties, together with that distance.
pub fn nearest_f64(x: &[f64], table: &[f64], d: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in table.chunks_exact(d).enumerate() {
        let dist: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
        if dist < best.1 {
            best = (k, dist);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansModel {
    /// `k × dim`, row-major.
    pub centroids: Vec<f64>,
    pub k: usize,
    pub dim: usize,
    /// Inertia after every assignment pass, nonincreasing.
    pub inertia_history: Vec<f64>,
}

fn assign_all(x: &[f64], c: &[f64], d: usize) -> (Vec<usize>, Vec<f64>, f64) {
    let mut idx = Vec::with_capacity(x.len() / d);
    let mut dist = Vec::with_capacity(x.len() / d);
    for row in x.chunks_exact(d) {
        let (i, e) = nearest_f64(row, c, d);
        idx.push(i);
        dist.push(e);
    }
    let inertia = dist.iter().sum();
    (idx, dist, inertia)
}

/// k-means++ seeding: the first centre uniformly, later ones with probability
/// proportional to squared distance from the nearest chosen centre.
fn seed_plus_plus(x: &[f64], d: usize, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = x.len() / d;
    let first = rng.random_range(0..n);
    let mut c = x[first * d..(first + 1) * d].to_vec();
    let mut best: Vec<f64> = x
        .chunks_exact(d)
        .map(|r| nearest_f64(r, &c, d).1)
        .collect();
    while c.len() < k * d {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in best.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let row = &x[pick * d..(pick + 1) * d];
        c.extend_from_slice(row);
        for (b, r) in best.iter_mut().zip(x.chunks_exact(d)) {
            let e: f64 = r.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
            *b = b.min(e);
        }
    }
    c
}

/// Means of the assigned points. Empty clusters move to the points farthest
/// from their current centres, each point used at most once.
fn update(x: &[f64], d: usize, k: usize, idx: &[usize], dist: &[f64]) -> Vec<f64> {
    let mut sum = vec![0.0f64; k * d];
    let mut count = vec![0usize; k];
    for (row, &i) in x.chunks_exact(d).zip(idx) {
        count[i] += 1;
        for (s, v) in sum[i * d..(i + 1) * d].iter_mut().zip(row) {
            *s += v;
        }
    }
    let mut far: Vec<usize> = (0..dist.len()).collect();
    far.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    let mut far = far.into_iter();
    for j in 0..k {
        let out = &mut sum[j * d..(j + 1) * d];
        if count[j] == 0 {
            let p = far.next().expect("N >= K leaves a point for every empty cluster");
            out.copy_from_slice(&x[p * d..(p + 1) * d]);
        } else {
            let inv = 1.0 / count[j] as f64;
            out.iter_mut().for_each(|s| *s *= inv);
        }
    }
    sum
}

/// k-means++ then Lloyd until every centroid moves less than [`SHIFT_TOL`]
/// or `max_iters` passes. A pass whose inertia would rise (round-off at
/// convergence) is discarded, so the history never increases.
pub fn kmeans_fit(features: &[f64], dim: usize, k: usize, max_iters: usize, seed: u64) -> Result<KMeansModel> {
    if dim == 0 || features.len() % dim != 0 {
        return invalid(format!("kmeans: {} values do not form rows of {dim}", features.len()));
    }
    let n = features.len() / dim;
    if k == 0 || n < k {
        return invalid(format!("kmeans: need at least K = {k} points, got {n}"));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return invalid("kmeans: features must be finite");
    }
    let mut rng = stage_rng(seed, "baseline/kmeans");
    let mut c = seed_plus_plus(features, dim, k, &mut rng);
    let mut history: Vec<f64> = Vec::new();
    let mut prev = c.clone();
    for _ in 0..max_iters.max(1) {
        let (idx, dist, inertia) = assign_all(features, &c, dim);
        if history.last().is_some_and(|&last| inertia > last) {
            c = prev.clone();
            break;
        }
        history.push(inertia);
        let next = update(features, dim, k, &idx, &dist);
        let shift = c
            .chunks_exact(dim)
            .zip(next.chunks_exact(dim))
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        prev = std::mem::replace(&mut c, next);
        if shift < SHIFT_TOL {
            break;
        }
    }
    let (_, _, inertia) = assign_all(features, &c, dim);
    match history.last() {
        Some(&last) if inertia > last => c = prev,
        _ => history.push(inertia),
    }
    Ok(KMeansModel {
        centroids: c,
        k,
        dim,
        inertia_history: history,
    })
}

impl KMeansModel {
    /// Builds a model from stored centroids.
    pub fn from_centroids(centroids: Vec<f64>, dim: usize, inertia_history: Vec<f64>) -> Result<Self> {
        if dim == 0 || centroids.is_empty() || centroids.len() % dim != 0 {
            return invalid("kmeans: centroid table must be a nonempty multiple of dim");
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return invalid("kmeans: centroids must be finite");
        }
        Ok(Self {
            k: centroids.len() / dim,
            centroids,
            dim,
            inertia_history,
        })
    }

    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    /// Nearest-centroid index of every row.
    pub fn assign(&self, features: &[f64]) -> Result<Vec<u32>> {
        if features.len() % self.dim != 0 {
            return invalid(format!(
                "kmeans: feature rows of {} values cannot be split into dim {}",
                features.len(),
                self.dim
            ));
        }
        Ok(features
            .chunks_exact(self.dim)
            .map(|r| nearest_f64(r, &self.centroids, self.dim).0 as u32)
            .collect())
    }

    pub fn inertia(&self, features: &[f64]) -> f64 {
        assign_all(features, &self.centroids, self.dim).2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_pairs() {
        let x = [0.0, 0.0, 0.0, 1.0, 10.0, 0.0, 10.0, 1.0];
        for seed in 0..8 {
            let m = kmeans_fit(&x, 2, 2, 50, seed).unwrap();
            let mut got: Vec<(f64, f64)> = m.centroids.chunks(2).map(|c| (c[0], c[1])).collect();
            got.sort_by(|a, b| a.0.total_cmp(&b.0));
            assert_eq!(got, vec![(0.0, 0.5), (10.0, 0.5)], "seed {seed}");
            assert_eq!(*m.inertia_history.last().unwrap(), 1.0);
        }
    }

    #[test]
    fn k_equal_n_is_exact() {
        let x = [0.3, -1.0, 2.0, 5.5, 7.0];
        let m = kmeans_fit(&x, 1, 5, 10, 3).unwrap();
        assert_eq!(*m.inertia_history.last().unwrap(), 0.0);
        let mut c = m.centroids.clone();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![-1.0, 0.3, 2.0, 5.5, 7.0]);
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let x = [1.0; 6];
        let m = kmeans_fit(&x, 2, 3, 10, 0).unwrap();
        assert_eq!(m.k, 3);
        assert_eq!(m.assign(&x).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(kmeans_fit(&[1.0, 2.0], 2, 2, 5, 0).is_err());
        assert!(kmeans_fit(&[1.0, 2.0, 3.0], 2, 1, 5, 0).is_err());
        assert!(kmeans_fit(&[f64::NAN, 1.0], 1, 1, 5, 0).is_err());
        let m = kmeans_fit(&[1.0, 2.0], 1, 1, 5, 0).unwrap();
        assert!(KMeansModel::assign(&KMeansModel { dim: 2, ..m }, &[1.0]).is_err());
    }

    #[test]
    fn seeded_fit_is_deterministic() {
        let x: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let a = kmeans_fit(&x, 2, 6, 30, 9).unwrap();
        let b = kmeans_fit(&x, 2, 6, 30, 9).unwrap();
        assert_eq!(a, b);
    }
}
