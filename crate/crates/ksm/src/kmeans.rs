//! Lloyd's k-means, seeded from dataset templates.
//!
//! Used both for landmark selection and for clustering-quality evaluation.
//! Centers are initialized to `k` distinct rows sampled without replacement,
//! then refined by alternating nearest-center assignment and cluster-mean
//! updates until the assignment reaches a fixpoint or `max_iters` passes.
//! Distance ties assign to the lowest center index; a cluster left empty is
//! re-seeded from the point farthest from its current center (the next
//! farthest if several clusters empty at once).

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{KsmError, Result};

/// Result of one Lloyd run.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    /// k × M center matrix.
    pub centers: DMatrix<f64>,
    /// Index of the nearest center for every input row.
    pub assignments: Vec<usize>,
    /// Sum of squared distances from each point to its assigned center.
    pub inertia: f64,
    /// Lloyd iterations actually performed.
    pub iterations: usize,
}

fn sq_dist(x: &DMatrix<f64>, t: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    let mut d = 0.0;
    for j in 0..x.ncols() {
        let diff = x[(t, j)] - centers[(c, j)];
        d += diff * diff;
    }
    d
}

pub(crate) fn nearest_center(x: &DMatrix<f64>, t: usize, centers: &DMatrix<f64>) -> usize {
    let mut best = 0;
    let mut best_d = sq_dist(x, t, centers, 0);
    for c in 1..centers.nrows() {
        let d = sq_dist(x, t, centers, c);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn assign_all(x: &DMatrix<f64>, centers: &DMatrix<f64>) -> Vec<usize> {
    (0..x.nrows()).map(|t| nearest_center(x, t, centers)).collect()
}

/// Re-seeds every empty cluster from the point currently farthest from its
/// assigned center, skipping points that are the sole member of their cluster.
fn fix_empty_clusters(x: &DMatrix<f64>, centers: &mut DMatrix<f64>, assignments: &mut [usize]) {
    let k = centers.nrows();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for t in 0..x.nrows() {
            if sizes[assignments[t]] < 2 {
                continue;
            }
            let d = sq_dist(x, t, centers, assignments[t]);
            if best.map_or(true, |(bd, _)| d > bd) {
                best = Some((d, t));
            }
        }
        if let Some((_, t)) = best {
            for j in 0..x.ncols() {
                centers[(c, j)] = x[(t, j)];
            }
            sizes[assignments[t]] -= 1;
            sizes[c] = 1;
            assignments[t] = c;
        }
    }
}

fn cluster_means(x: &DMatrix<f64>, assignments: &[usize], k: usize) -> DMatrix<f64> {
    let m = x.ncols();
    let mut centers = DMatrix::zeros(k, m);
    let mut counts = vec![0usize; k];
    for (t, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        for j in 0..m {
            centers[(a, j)] += x[(t, j)];
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = 1.0 / counts[c] as f64;
            for j in 0..m {
                centers[(c, j)] *= inv;
            }
        }
    }
    centers
}

/// Runs Lloyd's algorithm on the rows of `x`.
pub fn kmeans(x: &DMatrix<f64>, k: usize, seed: u64, max_iters: usize) -> Result<KMeansFit> {
    let t = x.nrows();
    if t == 0 || x.ncols() == 0 {
        return Err(KsmError::InvalidArgument(
            "kmeans: input matrix must be non-empty".to_string(),
        ));
    }
    if k == 0 || k > t {
        return Err(KsmError::InvalidArgument(format!(
            "kmeans: k must be in 1..={t}, got {k}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let template_idx = rand::seq::index::sample(&mut rng, t, k).into_vec();
    let mut centers = DMatrix::zeros(k, x.ncols());
    for (c, &ti) in template_idx.iter().enumerate() {
        for j in 0..x.ncols() {
            centers[(c, j)] = x[(ti, j)];
        }
    }

    let mut assignments = assign_all(x, &centers);
    fix_empty_clusters(x, &mut centers, &mut assignments);

    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        centers = cluster_means(x, &assignments, k);
        let mut next = assign_all(x, &centers);
        fix_empty_clusters(x, &mut centers, &mut next);
        let converged = next == assignments;
        assignments = next;
        if converged {
            break;
        }
    }

    let inertia = assignments
        .iter()
        .enumerate()
        .map(|(t, &a)| sq_dist(x, t, &centers, a))
        .sum();
    Ok(KMeansFit {
        centers,
        assignments,
        inertia,
        iterations,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
