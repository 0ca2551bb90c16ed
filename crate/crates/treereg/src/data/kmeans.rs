//! Lloyd's algorithm with k-means++ seeding.

use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centroids: Matrix,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn assign(&self, row: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..self.centroids.rows() {
            let d = sq_dist(row, self.centroids.row(c));
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }

    pub fn assign_all(&self, x: &Matrix) -> Vec<usize> {
        (0..x.rows()).map(|i| self.assign(x.row(i))).collect()
    }

    /// Within-cluster sum of squares.
    pub fn wcss(&self, x: &Matrix) -> f64 {
        (0..x.rows())
            .map(|i| sq_dist(x.row(i), self.centroids.row(self.assign(x.row(i)))))
            .sum()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Run to convergence (max centroid shift below 1e-8) or 300 iterations.
/// An emptied cluster is reseeded to the point farthest from its assigned
/// centroid, which keeps the repair deterministic.
pub fn kmeans(x: &Matrix, k: usize, seed: u64) -> Result<KMeansModel> {
    if k == 0 {
        return Err(Error::Config("k-means needs k >= 1".to_string()));
    }
    if x.rows() < k {
        return Err(Error::TooFewExamples {
            context: "kmeans",
            count: x.rows(),
            min: k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(x, k, &mut rng);
    let mut assign = vec![0usize; x.rows()];
    for _ in 0..300 {
        let model = KMeansModel {
            centroids: centroids.clone(),
        };
        for (i, a) in assign.iter_mut().enumerate() {
            *a = model.assign(x.row(i));
        }
        let mut sums = Matrix::zeros(k, x.cols());
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (s, &v) in sums.row_mut(a).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        let mut next = Matrix::zeros(k, x.cols());
        for c in 0..k {
            if counts[c] == 0 {
                // Deterministic repair: farthest point from its centroid.
                let far = (0..x.rows())
                    .max_by(|&a, &b| {
                        let da = sq_dist(x.row(a), centroids.row(assign[a]));
                        let db = sq_dist(x.row(b), centroids.row(assign[b]));
                        da.partial_cmp(&db).expect("finite distances")
                    })
                    .expect("nonempty data");
                next.row_mut(c).copy_from_slice(x.row(far));
            } else {
                for (j, &s) in sums.row(c).iter().enumerate() {
                    next.set(c, j, s / counts[c] as f64);
                }
            }
        }
        let shift = (0..k)
            .map(|c| sq_dist(centroids.row(c), next.row(c)).sqrt())
            .fold(0.0f64, f64::max);
        centroids = next;
        if shift < 1e-8 {
            break;
        }
    }
    Ok(KMeansModel { centroids })
}

fn plus_plus_init(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut centroids = Matrix::zeros(k, x.cols());
    let first = rng.gen_range(0..x.rows());
    centroids.row_mut(0).copy_from_slice(x.row(first));
    let mut d2: Vec<f64> = (0..x.rows())
        .map(|i| sq_dist(x.row(i), centroids.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total <= 0.0 {
            rng.gen_range(0..x.rows())
        } else {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = x.rows() - 1;
            for (i, &d) in d2.iter().enumerate() {
                u -= d;
                if u <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centroids.row_mut(c).copy_from_slice(x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            let nd = sq_dist(x.row(i), centroids.row(c));
            if nd < *d {
                *d = nd;
            }
        }
    }
    centroids
}
