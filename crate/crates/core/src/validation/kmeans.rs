use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GbsError, Result};
use crate::exec::Exec;
use crate::pattern::OutputPattern;
use crate::rng::{derive_seed, RngStream};

const MAX_ITERATIONS: usize = 300;
const SHIFT_TOL: f64 = 1e-6;

/// Centroids in photon-count space with per-cluster acceptance radii.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Largest distance of a training sample to its centroid.
    pub radii: Vec<f64>,
    pub training_counts: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn embed(s: &OutputPattern) -> Vec<f64> {
    s.0.iter().map(|&c| c as f64).collect()
}

impl ClusterModel {
    pub fn m(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Nearest centroid and its distance; ties go to the lower index.
    pub fn nearest(&self, point: &[f64]) -> (usize, f64) {
        nearest(&self.centroids, point)
    }

    /// Nearest cluster if the point lies within that cluster's radius.
    pub fn accept(&self, point: &[f64]) -> Option<usize> {
        let (i, d) = self.nearest(point);
        (d <= self.radii[i] + 1e-12).then_some(i)
    }
}

fn nearest(centroids: &[Vec<f64>], point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(c, point);
        if d < best.1 {
            best = (i, d);
        }
    }
    (best.0, best.1.sqrt())
}

/// K-means++ seeding followed by Lloyd iterations on raw count vectors.
pub fn train_clusters(training: &[OutputPattern], k: usize, seed: u64, exec: Exec) -> Result<ClusterModel> {
    if k < 2 || k > training.len() {
        return Err(GbsError::InvalidParameter(format!(
            "k = {k} must lie between 2 and the training size {}",
            training.len()
        )));
    }
    let points: Vec<Vec<f64>> = training.iter().map(embed).collect();
    let mut rng = RngStream::new(derive_seed(seed, "kmeans"), 0).rng();
    let mut centroids = seed_plus_plus(&points, k, &mut rng);
    let mut assign = vec![0usize; points.len()];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let found = exec.map(points.len(), |i| nearest(&centroids, &points[i]));
        for (a, (i, _)) in assign.iter_mut().zip(&found) {
            *a = *i;
        }
        let mut sums = vec![vec![0.0; points[0].len()]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &c), old)| if c == 0 { old.clone() } else { s.into_iter().map(|x| x / c as f64).collect() })
            .collect();
        let mut reseeded = false;
        let mut slack: Vec<f64> = found.iter().map(|&(_, d)| d).collect();
        for j in 0..k {
            if counts[j] == 0 {
                // Move the empty centroid onto the point farthest from its centroid.
                let (far, d) = slack
                    .iter()
                    .enumerate()
                    .fold((0, -1.0), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
                if d > 0.0 {
                    next[j] = points[far].clone();
                    for (sl, p) in slack.iter_mut().zip(&points) {
                        *sl = sl.min(dist2(p, &next[j]).sqrt());
                    }
                    reseeded = true;
                }
            }
        }
        let shift = centroids.iter().zip(&next).map(|(a, b)| dist2(a, b).sqrt()).fold(0.0, f64::max);
        centroids = next;
        if shift < SHIFT_TOL && !reseeded {
            converged = true;
            break;
        }
    }
    let found = exec.map(points.len(), |i| nearest(&centroids, &points[i]));
    let mut radii = vec![0.0; k];
    let mut training_counts = vec![0; k];
    for &(i, d) in &found {
        training_counts[i] += 1;
        radii[i] = f64::max(radii[i], d);
    }
    Ok(ClusterModel { k, centroids, radii, training_counts, iterations, converged })
}

fn seed_plus_plus<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if u < acc && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[idx].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &c));
        }
        centroids.push(c);
    }
    centroids
}
