//! Comparison feature constructions: kernel PCA, Nyström features with
//! three landmark sources, and random Fourier features.
//!
//! All three produce a T×N feature matrix Y whose Gram YYᵀ approximates the
//! input similarity matrix, making them directly comparable to the trained
//! model's responses under the same normalized error metric.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{KsmError, Result};
use crate::kernel::Kernel;
use crate::kmeans::kmeans;
use crate::linalg::{symmetric_eigen_desc, symmetrize};
use crate::model::ModelState;

/// Eigenvalues of the landmark Gram below this are treated as zero when
/// forming the pseudo-inverse square root.
pub const NYSTROM_EIG_FLOOR: f64 = 1e-10;

/// Default Lloyd iteration cap for k-means landmark selection.
pub const KMEANS_LANDMARK_ITERS: usize = 100;

// ---------------------------------------------------------------------------
// Landmarks
// ---------------------------------------------------------------------------

/// How a landmark set was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkSource {
    UniformSample,
    KMeans,
    LearnedHebbian,
}

/// N landmark vectors (rows) used to anchor a Nyström approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    pub w: DMatrix<f64>,
    pub source: LandmarkSource,
}

impl LandmarkSet {
    pub fn new(w: DMatrix<f64>, source: LandmarkSource) -> Result<LandmarkSet> {
        if w.nrows() == 0 || w.ncols() == 0 {
            return Err(KsmError::InvalidArgument(
                "landmark set must have at least one row and column".to_string(),
            ));
        }
        if !w.iter().all(|v| v.is_finite()) {
            return Err(KsmError::InvalidArgument(
                "landmark set contains non-finite entries".to_string(),
            ));
        }
        Ok(LandmarkSet { w, source })
    }

    /// A trained model's feature vectors, used directly as landmarks.
    pub fn from_model(state: &ModelState) -> LandmarkSet {
        LandmarkSet {
            w: state.w.clone(),
            source: LandmarkSource::LearnedHebbian,
        }
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }
}

/// Uniformly samples `n` distinct rows of `x` without replacement.
pub fn select_landmarks_uniform(x: &DMatrix<f64>, n: usize, seed: u64) -> Result<LandmarkSet> {
    if n == 0 || n > x.nrows() {
        return Err(KsmError::InvalidArgument(format!(
            "uniform landmarks: N must be in 1..={}, got {n}",
            x.nrows()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = rand::seq::index::sample(&mut rng, x.nrows(), n).into_vec();
    let mut w = DMatrix::zeros(n, x.ncols());
    for (r, &t) in idx.iter().enumerate() {
        for j in 0..x.ncols() {
            w[(r, j)] = x[(t, j)];
        }
    }
    LandmarkSet::new(w, LandmarkSource::UniformSample)
}

/// Landmarks from Lloyd's method, initialized with dataset templates and run
/// to a fixpoint or `max_iters` passes (conventionally
/// [`KMEANS_LANDMARK_ITERS`]).
pub fn select_landmarks_kmeans(
    x: &DMatrix<f64>,
    n: usize,
    seed: u64,
    max_iters: usize,
) -> Result<LandmarkSet> {
    let fit = kmeans(x, n, seed, max_iters)?;
    LandmarkSet::new(fit.centers, LandmarkSource::KMeans)
}

// ---------------------------------------------------------------------------
// Feature constructions
// ---------------------------------------------------------------------------

/// Features from the top-N eigenpairs of the similarity matrix `f`:
/// y^t_i = √max(λ_i, 0) · v_i[t]. YYᵀ is then the best rank-N positive
/// semidefinite approximation of `f` in Frobenius norm.
pub fn kernel_pca_features(f: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    let t = f.nrows();
    if f.ncols() != t {
        return Err(KsmError::dim("kernel_pca_features matrix", t, f.ncols()));
    }
    if n == 0 || n > t {
        return Err(KsmError::InvalidArgument(format!(
            "kernel PCA: N must be in 1..={t}, got {n}"
        )));
    }
    let max = f.amax().max(1.0);
    for i in 0..t {
        for j in 0..i {
            if (f[(i, j)] - f[(j, i)]).abs() > 1e-8 * max {
                return Err(KsmError::InvalidArgument(format!(
                    "kernel PCA input is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    let (eigvals, eigvecs) = symmetric_eigen_desc(symmetrize(f));
    let mut y = DMatrix::zeros(t, n);
    for i in 0..n {
        let scale = eigvals[i].max(0.0).sqrt();
        for s in 0..t {
            y[(s, i)] = scale * eigvecs[(s, i)];
        }
    }
    Ok(y)
}

/// Nyström features: Y = A·(B†)^{1/2} with A_{ti} = f(x^t, w_i) and
/// B_{ij} = f(w_i, w_j), so YYᵀ = A B† Aᵀ. The pseudo-inverse square root
/// is taken through a symmetric eigendecomposition with eigenvalues below
/// [`NYSTROM_EIG_FLOOR`] zeroed.
pub fn nystrom_features(
    kernel: Kernel,
    x: &DMatrix<f64>,
    landmarks: &LandmarkSet,
) -> Result<DMatrix<f64>> {
    let a = kernel.cross_gram(x, &landmarks.w)?;
    let b = kernel.gram(&landmarks.w);
    let n = landmarks.n();
    let (eigvals, v) = symmetric_eigen_desc(symmetrize(&b));

    // M = V diag(λ^{-1/2} or 0) Vᵀ, assembled as (V·diag) · Vᵀ.
    let mut scaled = v.clone();
    for i in 0..n {
        let s = if eigvals[i] < NYSTROM_EIG_FLOOR {
            0.0
        } else {
            1.0 / eigvals[i].sqrt()
        };
        for r in 0..n {
            scaled[(r, i)] *= s;
        }
    }
    let m = scaled * v.transpose();
    Ok(a * m)
}

/// Random Fourier features for the Gaussian kernel with bandwidth σ:
/// φ^t_i = √(2/N)·cos(w_i·x^t + b_i) with w_i ~ N(0, σ⁻²I) and
/// b_i ~ U[0, 2π). The features are used directly: E[φ(x)·φ(x′)] =
/// exp(−‖x−x′‖²/2σ²).
pub fn random_fourier_features(
    sigma: f64,
    x: &DMatrix<f64>,
    n: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(KsmError::InvalidArgument(format!(
            "random Fourier features: sigma must be finite and > 0, got {sigma}"
        )));
    }
    if n == 0 {
        return Err(KsmError::InvalidArgument(
            "random Fourier features: N must be >= 1".to_string(),
        ));
    }
    let (t, m) = (x.nrows(), x.ncols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Per feature: M frequency entries, then the phase.
    let mut w = DMatrix::zeros(n, m);
    let mut b = vec![0.0f64; n];
    for i in 0..n {
        for j in 0..m {
            let g: f64 = rng.sample(StandardNormal);
            w[(i, j)] = g / sigma;
        }
        b[i] = rng.random_range(0.0..std::f64::consts::TAU);
    }
    let amp = (2.0 / n as f64).sqrt();
    let mut y = DMatrix::zeros(t, n);
    for ti in 0..t {
        for i in 0..n {
            let mut dot = b[i];
            for j in 0..m {
                dot += w[(i, j)] * x[(ti, j)];
            }
            y[(ti, i)] = amp * dot.cos();
        }
    }
    Ok(y)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
