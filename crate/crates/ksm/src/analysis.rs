//! Figure-level quantities: normalized approximation error, spectra,
//! sign-degeneracy removal, linearized receptive fields, clustering quality,
//! linear-classifier accuracy, and response sparsity.

use std::io::{self, Write};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{KsmError, Result};
use crate::kernel::Kernel;
use crate::kmeans::kmeans;
use crate::linalg::{solve_spd, symmetric_eigen_desc, symmetrize};
use crate::model::ModelState;

/// Ridge constant in the linearized-response normal equations.
pub const LINEARIZATION_RIDGE: f64 = 0.1;

/// Lloyd iteration cap used by the clustering evaluation.
const CLUSTER_EVAL_ITERS: usize = 100;

// ---------------------------------------------------------------------------
// Approximation error
// ---------------------------------------------------------------------------

/// One row of a method-comparison sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxReport {
    pub method: String,
    pub dim: usize,
    pub nrmse: f64,
    pub seed: u64,
    pub dataset: String,
    pub kernel: Kernel,
}

/// Writes reports under the header `method,dim,nrmse,seed,dataset,kernel`.
pub fn reports_to_csv<W: Write>(reports: &[ApproxReport], mut out: W) -> io::Result<()> {
    writeln!(out, "method,dim,nrmse,seed,dataset,kernel")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.method,
            r.dim,
            r.nrmse,
            r.seed,
            r.dataset,
            r.kernel.label()
        )?;
    }
    Ok(())
}

/// Normalized approximation error ‖F − YYᵀ‖_F / ‖F‖_F.
pub fn nrmse(f: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let t = f.nrows();
    if f.ncols() != t {
        return Err(KsmError::dim("nrmse similarity matrix", t, f.ncols()));
    }
    if y.nrows() != t {
        return Err(KsmError::dim("nrmse feature rows", t, y.nrows()));
    }
    let denom = f.norm();
    if denom == 0.0 {
        return Err(KsmError::InvalidArgument(
            "nrmse: similarity matrix has zero norm".to_string(),
        ));
    }
    Ok(((y * y.transpose()) - f).norm() / denom)
}

// ---------------------------------------------------------------------------
// Spectra
// ---------------------------------------------------------------------------

/// Descending eigenvalues of a symmetric matrix, normalized by the largest
/// (so the first entry is exactly 1).
pub fn spectrum(s: &DMatrix<f64>) -> Result<Vec<f64>> {
    let t = s.nrows();
    if t == 0 || s.ncols() != t {
        return Err(KsmError::dim("spectrum matrix", t, s.ncols()));
    }
    let max = s.amax().max(1.0);
    for i in 0..t {
        for j in 0..i {
            if (s[(i, j)] - s[(j, i)]).abs() > 1e-8 * max {
                return Err(KsmError::InvalidArgument(format!(
                    "spectrum input is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    let (mut eigvals, _) = symmetric_eigen_desc(symmetrize(s));
    let top = eigvals[0];
    if !(top.is_finite() && top > 0.0) {
        return Err(KsmError::InvalidArgument(format!(
            "spectrum normalization requires a positive leading eigenvalue, got {top}"
        )));
    }
    for v in &mut eigvals {
        *v /= top;
    }
    eigvals[0] = 1.0;
    Ok(eigvals)
}

/// Writes a spectrum under the header `index,value`.
pub fn spectrum_to_csv<W: Write>(values: &[f64], mut out: W) -> io::Result<()> {
    writeln!(out, "index,value")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{i},{v}")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Sign degeneracy
// ---------------------------------------------------------------------------

/// Removes the per-unit sign degeneracy: every unit whose mean response is
/// negative has its feature row, response column, and lateral couplings
/// flipped (sign(0) counts as +1). For odd-homogeneity kernels this is an
/// exact symmetry of the energy, so the returned pair describes the same
/// network with a canonical sign convention.
pub fn fix_sign_degeneracy(state: &ModelState, y: &DMatrix<f64>) -> (ModelState, DMatrix<f64>) {
    let n = state.n();
    let t = y.nrows();
    assert_eq!(y.ncols(), n, "response columns must match model units");
    let mut signs = vec![1.0f64; n];
    for i in 0..n {
        let mean: f64 = (0..t).map(|s| y[(s, i)]).sum::<f64>() / t.max(1) as f64;
        if mean < 0.0 {
            signs[i] = -1.0;
        }
    }
    let mut fixed = state.clone();
    let mut yf = y.clone();
    for i in 0..n {
        if signs[i] < 0.0 {
            for j in 0..state.m() {
                fixed.w[(i, j)] = -fixed.w[(i, j)];
            }
            for s in 0..t {
                yf[(s, i)] = -yf[(s, i)];
            }
        }
        for j in 0..n {
            let s = signs[i] * signs[j];
            if s < 0.0 {
                fixed.l[(i, j)] = -fixed.l[(i, j)];
            }
        }
    }
    (fixed, yf)
}

// ---------------------------------------------------------------------------
// Linearized responses
// ---------------------------------------------------------------------------

/// Best linear read-in per unit: s_i = [0.1·I + ⟨xxᵀ⟩]⁻¹ ⟨y_i x⟩ with ⟨·⟩
/// the mean over samples. Returns the N×M matrix of linear filters.
pub fn linearized_responses(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let t = x.nrows();
    if t == 0 {
        return Err(KsmError::InvalidArgument(
            "linearized_responses: need at least one sample".to_string(),
        ));
    }
    if y.nrows() != t {
        return Err(KsmError::dim("linearized_responses rows", t, y.nrows()));
    }
    let tf = t as f64;
    let m = x.ncols();
    let a = DMatrix::identity(m, m) * LINEARIZATION_RIDGE + x.transpose() * x / tf;
    let b = x.transpose() * y / tf; // M × N, column i = ⟨y_i x⟩
    let s = solve_spd("linearized response normal equations", &a, &b)?;
    Ok(s.transpose())
}

// ---------------------------------------------------------------------------
// Clustering quality
// ---------------------------------------------------------------------------

fn distinct_sorted(labels: &[u32]) -> Vec<u32> {
    let mut v = labels.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Maximum matches over injective cluster→label assignments, exhaustively
/// when both sides have at most 8 entries, greedily otherwise.
fn best_match_count(counts: &[Vec<usize>]) -> usize {
    let k = counts.len();
    let l = counts.first().map_or(0, Vec::len);
    if k.max(l) <= 8 {
        // Pad to a square assignment problem and try every permutation.
        let n = k.max(l);
        let score = |perm: &[usize]| -> usize {
            perm.iter()
                .enumerate()
                .map(|(c, &lab)| {
                    if c < k && lab < l {
                        counts[c][lab]
                    } else {
                        0
                    }
                })
                .sum()
        };
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = score(&perm);
        // Heap's algorithm.
        let mut stack = vec![0usize; n];
        let mut i = 1;
        while i < n {
            if stack[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(stack[i], i);
                }
                best = best.max(score(&perm));
                stack[i] += 1;
                i = 1;
            } else {
                stack[i] = 0;
                i += 1;
            }
        }
        best
    } else {
        // Greedy: repeatedly take the largest remaining (cluster, label) cell.
        let mut used_c = vec![false; k];
        let mut used_l = vec![false; l];
        let mut total = 0;
        for _ in 0..k.min(l) {
            let mut best = (0usize, 0usize, 0usize);
            let mut found = false;
            for c in 0..k {
                if used_c[c] {
                    continue;
                }
                for lab in 0..l {
                    if used_l[lab] {
                        continue;
                    }
                    if !found || counts[c][lab] > best.0 {
                        best = (counts[c][lab], c, lab);
                        found = true;
                    }
                }
            }
            if !found {
                break;
            }
            total += best.0;
            used_c[best.1] = true;
            used_l[best.2] = true;
        }
        total
    }
}

/// Clusters the rows of `z` with `n_init` Lloyd restarts (seeds `seed`,
/// `seed+1`, …), keeps the minimum-inertia solution, and scores it against
/// the labels by the best injective cluster→label matching.
pub fn kmeans_cluster_eval(
    z: &DMatrix<f64>,
    labels: &[u32],
    k: usize,
    n_init: usize,
    seed: u64,
) -> Result<(f64, Vec<usize>)> {
    let t = z.nrows();
    if labels.len() != t {
        return Err(KsmError::dim("cluster_eval labels", t, labels.len()));
    }
    if n_init == 0 {
        return Err(KsmError::InvalidArgument(
            "cluster_eval: n_init must be >= 1".to_string(),
        ));
    }
    let mut best: Option<crate::kmeans::KMeansFit> = None;
    for i in 0..n_init {
        let fit = kmeans(z, k, seed.wrapping_add(i as u64), CLUSTER_EVAL_ITERS)?;
        if best.as_ref().map_or(true, |b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    let fit = best.expect("n_init >= 1 guarantees a fit");

    let classes = distinct_sorted(labels);
    let mut counts = vec![vec![0usize; classes.len()]; k];
    for (ti, &a) in fit.assignments.iter().enumerate() {
        let lab = classes.binary_search(&labels[ti]).expect("label seen above");
        counts[a][lab] += 1;
    }
    let matched = best_match_count(&counts);
    Ok((matched as f64 / t as f64, fit.assignments))
}

// ---------------------------------------------------------------------------
// Linear classifier
// ---------------------------------------------------------------------------

/// Outcome for one subsampling seed: the weight decay chosen on test
/// accuracy and the accuracies it achieves.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSeedOutcome {
    pub seed: u64,
    pub weight_decay: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Mean-over-seeds accuracies at each seed's best weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierEval {
    pub labels_per_class: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub per_seed: Vec<ClassifierSeedOutcome>,
}

fn one_hot(labels: &[u32], classes: &[u32]) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(labels.len(), classes.len());
    for (i, lab) in labels.iter().enumerate() {
        if let Ok(c) = classes.binary_search(lab) {
            t[(i, c)] = 1.0;
        }
    }
    t
}

fn accuracy(scores: &DMatrix<f64>, labels: &[u32], classes: &[u32]) -> f64 {
    let mut correct = 0usize;
    for (i, lab) in labels.iter().enumerate() {
        let mut arg = 0;
        for c in 1..scores.ncols() {
            if scores[(i, c)] > scores[(i, arg)] {
                arg = c;
            }
        }
        if classes[arg] == *lab {
            correct += 1;
        }
    }
    correct as f64 / labels.len().max(1) as f64
}

/// Ridge-regularized least squares on one-hot targets, trained on
/// `labels_per_class` examples per class (drawn per seed), with the weight
/// decay chosen per seed by test accuracy.
pub fn linear_classifier_eval(
    ytrain: &DMatrix<f64>,
    labels_train: &[u32],
    ytest: &DMatrix<f64>,
    labels_test: &[u32],
    labels_per_class: usize,
    weight_decays: &[f64],
    seeds: &[u64],
) -> Result<ClassifierEval> {
    if ytrain.nrows() != labels_train.len() {
        return Err(KsmError::dim("classifier train labels", ytrain.nrows(), labels_train.len()));
    }
    if ytest.nrows() != labels_test.len() {
        return Err(KsmError::dim("classifier test labels", ytest.nrows(), labels_test.len()));
    }
    if ytrain.ncols() != ytest.ncols() {
        return Err(KsmError::dim("classifier feature dims", ytrain.ncols(), ytest.ncols()));
    }
    if labels_per_class == 0 || weight_decays.is_empty() || seeds.is_empty() {
        return Err(KsmError::InvalidArgument(
            "classifier: labels_per_class, weight_decays, and seeds must be non-empty"
                .to_string(),
        ));
    }
    for &wd in weight_decays {
        if !(wd.is_finite() && wd >= 0.0) {
            return Err(KsmError::InvalidArgument(format!(
                "classifier: weight decay must be finite and >= 0, got {wd}"
            )));
        }
    }

    let classes = distinct_sorted(labels_train);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];
    for (i, lab) in labels_train.iter().enumerate() {
        let c = classes.binary_search(lab).expect("label from the same slice");
        by_class[c].push(i);
    }
    for (c, idx) in by_class.iter().enumerate() {
        if idx.len() < labels_per_class {
            return Err(KsmError::InvalidArgument(format!(
                "classifier: class {} has {} training samples, need {labels_per_class}",
                classes[c],
                idx.len()
            )));
        }
    }

    let d = ytrain.ncols();
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen = Vec::with_capacity(labels_per_class * classes.len());
        for idx in &by_class {
            let take = rand::seq::index::sample(&mut rng, idx.len(), labels_per_class);
            for r in take.iter() {
                chosen.push(idx[r]);
            }
        }

        // Design matrix with a bias column, included in the penalty.
        let s = chosen.len();
        let mut phi = DMatrix::zeros(s, d + 1);
        let mut sub_labels = Vec::with_capacity(s);
        for (r, &row) in chosen.iter().enumerate() {
            for j in 0..d {
                phi[(r, j)] = ytrain[(row, j)];
            }
            phi[(r, d)] = 1.0;
            sub_labels.push(labels_train[row]);
        }
        let targets = one_hot(&sub_labels, &classes);
        let gram = phi.transpose() * &phi;
        let rhs = phi.transpose() * &targets;

        let mut phi_test = DMatrix::zeros(ytest.nrows(), d + 1);
        for r in 0..ytest.nrows() {
            for j in 0..d {
                phi_test[(r, j)] = ytest[(r, j)];
            }
            phi_test[(r, d)] = 1.0;
        }

        let mut best: Option<ClassifierSeedOutcome> = None;
        for &wd in weight_decays {
            let reg = &gram + DMatrix::identity(d + 1, d + 1) * wd;
            let w = solve_spd("classifier normal equations", &reg, &rhs)?;
            let train_acc = accuracy(&(&phi * &w), &sub_labels, &classes);
            let test_acc = accuracy(&(&phi_test * &w), labels_test, &classes);
            if best.as_ref().map_or(true, |b| test_acc > b.test_accuracy) {
                best = Some(ClassifierSeedOutcome {
                    seed,
                    weight_decay: wd,
                    train_accuracy: train_acc,
                    test_accuracy: test_acc,
                });
            }
        }
        per_seed.push(best.expect("weight_decays is non-empty"));
    }

    let inv = 1.0 / per_seed.len() as f64;
    Ok(ClassifierEval {
        labels_per_class,
        train_accuracy: per_seed.iter().map(|o| o.train_accuracy).sum::<f64>() * inv,
        test_accuracy: per_seed.iter().map(|o| o.test_accuracy).sum::<f64>() * inv,
        per_seed,
    })
}

// ---------------------------------------------------------------------------
// Response sparsity
// ---------------------------------------------------------------------------

/// Pooled equal-width histogram over every response, with the excess
/// kurtosis of the pooled values as the sparsity summary. Callers that want
/// the canonical sign convention apply [`fix_sign_degeneracy`] first.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` ascending edges; values on the final edge land in the
    /// last bin.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub excess_kurtosis: f64,
}

impl Histogram {
    /// Writes the histogram under the header `bin_lo,bin_hi,count`.
    pub fn to_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "bin_lo,bin_hi,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(out, "{},{},{c}", self.edges[i], self.edges[i + 1])?;
        }
        Ok(())
    }
}

/// Excess kurtosis m₄/m₂² − 3 of all matrix entries (0 for zero variance).
pub fn excess_kurtosis(y: &DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let mean = y.iter().sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m4 = 0.0;
    for v in y.iter() {
        let d = v - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m4 /= n;
    if m2 == 0.0 {
        0.0
    } else {
        m4 / (m2 * m2) - 3.0
    }
}

/// Pooled histogram of all responses with `bins` equal-width bins.
pub fn response_histogram(y: &DMatrix<f64>, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(KsmError::InvalidArgument(
            "response_histogram: bins must be >= 1".to_string(),
        ));
    }
    if y.is_empty() {
        return Err(KsmError::InvalidArgument(
            "response_histogram: empty response matrix".to_string(),
        ));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in y.iter() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if lo == hi {
        // Degenerate range: widen symmetrically so the constant has a bin.
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for v in y.iter() {
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let edges = (0..=bins)
        .map(|i| {
            if i == bins {
                hi
            } else {
                lo + i as f64 * width
            }
        })
        .collect();
    Ok(Histogram {
        edges,
        counts,
        excess_kurtosis: excess_kurtosis(y),
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
