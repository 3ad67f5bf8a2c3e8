//! Learned parameters and everything computed from them: per-sample energies,
//! steady-state responses (closed form and recurrent dynamics), and the
//! parameter gradients that define the learning rules.
//!
//! The per-sample energy being optimized is
//!
//! ```text
//! e(x, y) = Σ_i −[q_i y_i f(w_i,x) − ½ q_i² f(w_i,w_i)]
//!         + ½ Σ_ij [L_ij y_i y_j − ½ L_ij²]
//!         + (λ/2) Σ_i y_i²
//! ```
//!
//! Responses minimize e over y, which is the linear system
//! (L + λI) y = q ∘ f(W, x). Parameter gradients returned by
//! [`ModelState::param_gradients`] are the exact partial derivatives of the
//! minibatch mean of e; the training loop applies descent in (W, q) and
//! ascent in L.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{KsmError, Result};
use crate::kernel::Kernel;
use crate::linalg;

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

/// Learned parameters: feedforward features W (row i = w_i), gains q, lateral
/// matrix L, plus the fixed ridge λ and the kernel.
///
/// L is symmetric by construction and must keep `L + λI` positive definite
/// for responses to exist; the solve reports the smallest eigenvalue when it
/// is not.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    /// N×M feature matrix.
    pub w: DMatrix<f64>,
    /// N gain terms.
    pub q: DVector<f64>,
    /// N×N lateral matrix.
    pub l: DMatrix<f64>,
    /// Ridge on the response norm.
    pub lambda: f64,
    pub kernel: Kernel,
}

/// Responses and energies for a batch of inputs, rows aligned with the batch.
#[derive(Debug, Clone)]
pub struct ResponseBatch {
    /// B×N matrix; row t is the response y^t.
    pub y: DMatrix<f64>,
    /// Per-sample energies e^t under the same state.
    pub energies: DVector<f64>,
}

/// Result of running the recurrent response dynamics on one input.
#[derive(Debug, Clone)]
pub struct DynamicsOutcome {
    pub y: DVector<f64>,
    /// Whether ‖Δy‖∞ dropped below the tolerance before `max_steps`.
    pub converged: bool,
    pub steps: usize,
}

impl ModelState {
    /// Fresh state: W i.i.d. standard normal (seeded, row-major draw order),
    /// q all ones, L the identity.
    pub fn init(n: usize, m: usize, kernel: Kernel, lambda: f64, seed: u64) -> ModelState {
        assert!(n >= 1 && m >= 1, "init needs N >= 1 and M >= 1");
        assert!(
            lambda.is_finite() && lambda >= 0.0,
            "lambda must be finite and non-negative"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = DMatrix::zeros(n, m);
        for i in 0..n {
            for j in 0..m {
                w[(i, j)] = StandardNormal.sample(&mut rng);
            }
        }
        ModelState {
            w,
            q: DVector::from_element(n, 1.0),
            l: DMatrix::identity(n, n),
            lambda,
            kernel,
        }
    }

    /// Number of output units N.
    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    /// Input dimension M.
    pub fn m(&self) -> usize {
        self.w.ncols()
    }

    /// L + λI, the system matrix of the response solve.
    fn lateral_plus_ridge(&self) -> DMatrix<f64> {
        let mut k = self.l.clone();
        for i in 0..k.nrows() {
            k[(i, i)] += self.lambda;
        }
        k
    }

    // -----------------------------------------------------------------------
    // Responses
    // -----------------------------------------------------------------------

    /// Solves (L + λI) y = q ∘ f(W, x) for every row of `x` and fills in the
    /// per-sample energies.
    pub fn response_closed_form(&self, x: &DMatrix<f64>) -> Result<ResponseBatch> {
        if x.ncols() != self.m() {
            return Err(KsmError::dim("response input dim", x.ncols(), self.m()));
        }
        let n = self.n();
        let b = x.nrows();
        let wrows = linalg::rows_of(&self.w);
        let xrows = linalg::rows_of(x);

        // One column per sample so a single Cholesky serves the whole batch.
        let mut a = DMatrix::zeros(n, b);
        for (t, xt) in xrows.iter().enumerate() {
            for (j, wj) in wrows.iter().enumerate() {
                a[(j, t)] = self.q[j] * self.kernel.eval_raw(wj, xt);
            }
        }
        let k = self.lateral_plus_ridge();
        let ycols = linalg::solve_spd("response solve (L + lambda*I)", &k, &a)?;
        let y = ycols.transpose();

        let energies = DVector::from_fn(b, |t, _| {
            let yt: Vec<f64> = y.row(t).iter().copied().collect();
            self.energy_with_rows(&wrows, &xrows[t], &yt)
        });
        Ok(ResponseBatch { y, energies })
    }

    /// Recurrent settling y ← y + η_y (q ∘ f(W,x) − (L + λI) y) from y = 0.
    ///
    /// Stops once ‖Δy‖∞ < tol or after `max_steps`. The step size must
    /// satisfy η_y < 2 / λ_max(L + λI); larger values are rejected up front,
    /// and an energy rise over 10 consecutive steps aborts as divergence.
    pub fn response_dynamics(
        &self,
        x: &[f64],
        eta_y: f64,
        max_steps: usize,
        tol: f64,
    ) -> Result<DynamicsOutcome> {
        if x.len() != self.m() {
            return Err(KsmError::dim("response input dim", x.len(), self.m()));
        }
        if !(eta_y.is_finite() && eta_y > 0.0) || !(tol.is_finite() && tol > 0.0) {
            return Err(KsmError::InvalidArgument(format!(
                "response_dynamics: eta_y {eta_y} and tol {tol} must be positive"
            )));
        }
        let k = self.lateral_plus_ridge();
        let limit = 2.0 / linalg::largest_eigenvalue(&k);
        if eta_y >= limit {
            return Err(KsmError::UnstableStepSize { eta: eta_y, limit });
        }

        let n = self.n();
        let wrows = linalg::rows_of(&self.w);
        let a = DVector::from_fn(n, |j, _| self.q[j] * self.kernel.eval_raw(&wrows[j], x));

        let mut y = DVector::zeros(n);
        let mut prev_energy = self.energy_with_rows(&wrows, x, y.as_slice());
        let mut rising = 0usize;
        let mut converged = false;
        let mut steps = 0;
        for step in 1..=max_steps {
            let mut dy = &a - &k * &y;
            dy *= eta_y;
            y += &dy;
            steps = step;

            let e = self.energy_with_rows(&wrows, x, y.as_slice());
            if e > prev_energy {
                rising += 1;
                if rising >= 10 {
                    return Err(KsmError::Diverged { steps: rising });
                }
            } else {
                rising = 0;
            }
            prev_energy = e;

            if dy.amax() < tol {
                converged = true;
                break;
            }
        }
        Ok(DynamicsOutcome { y, converged, steps })
    }

    // -----------------------------------------------------------------------
    // Energy
    // -----------------------------------------------------------------------

    /// Per-sample energy e(x, y); see the module docs for the expression.
    pub fn energy(&self, x: &[f64], y: &[f64]) -> f64 {
        let wrows = linalg::rows_of(&self.w);
        self.energy_with_rows(&wrows, x, y)
    }

    /// Energy with the W rows already extracted (hot path for batches).
    fn energy_with_rows(&self, wrows: &[Vec<f64>], x: &[f64], y: &[f64]) -> f64 {
        let n = self.n();
        assert_eq!(x.len(), self.m(), "energy: input dimension");
        assert_eq!(y.len(), n, "energy: response dimension");

        let mut e = 0.0;
        for i in 0..n {
            let f_wx = self.kernel.eval_raw(&wrows[i], x);
            let f_ww = self.kernel.eval_self(&wrows[i]);
            e -= self.q[i] * y[i] * f_wx - 0.5 * self.q[i] * self.q[i] * f_ww;
        }
        for i in 0..n {
            for j in 0..n {
                let l = self.l[(i, j)];
                e += 0.5 * (l * y[i] * y[j] - 0.5 * l * l);
            }
        }
        e += 0.5 * self.lambda * y.iter().map(|v| v * v).sum::<f64>();
        e
    }

    // -----------------------------------------------------------------------
    // Gradients
    // -----------------------------------------------------------------------

    /// Exact partial derivatives of the minibatch mean of the energy with
    /// respect to W, q and L, given responses `y` for inputs `x`:
    ///
    ///   ∂ē/∂w_i = −q_i · mean_t[y_i^t ∂f(w_i,x^t)/∂w_i] + ½ q_i² df(w_i,w_i)/dw_i
    ///   ∂ē/∂q_i = −mean_t[y_i^t f(w_i,x^t)] + q_i f(w_i,w_i)
    ///   ∂ē/∂L_ij = ½ (mean_t[y_i^t y_j^t] − L_ij)
    ///
    /// dL is exactly symmetric, so symmetric L stays symmetric under updates.
    pub fn param_gradients(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<ParamGradients> {
        let n = self.n();
        if x.ncols() != self.m() {
            return Err(KsmError::dim("param_gradients input dim", x.ncols(), self.m()));
        }
        if y.ncols() != n {
            return Err(KsmError::dim("param_gradients response dim", y.ncols(), n));
        }
        if x.nrows() != y.nrows() || x.nrows() == 0 {
            return Err(KsmError::dim("param_gradients batch", x.nrows(), y.nrows()));
        }
        let b = x.nrows();
        let bf = b as f64;
        let wrows = linalg::rows_of(&self.w);
        let xrows = linalg::rows_of(x);

        // ∂f(w_i,x)/∂w_i = p·x + s·w_i lets the x-dependent part of dW become
        // one matrix product: dW_corr = Cᵀ X with C[t][i] = y_i^t p_ti.
        let mut c = DMatrix::zeros(b, n);
        let mut s_sum = vec![0.0; n];
        let mut dq = DVector::zeros(n);
        for t in 0..b {
            for i in 0..n {
                let f = self.kernel.eval_raw(&wrows[i], &xrows[t]);
                let gt = self.kernel.grad_terms(&wrows[i], &xrows[t]);
                let yti = y[(t, i)];
                c[(t, i)] = yti * gt.p;
                s_sum[i] += yti * gt.s;
                dq[i] -= yti * f;
            }
        }
        for i in 0..n {
            dq[i] = dq[i] / bf + self.q[i] * self.kernel.eval_self(&wrows[i]);
        }

        let corr = c.transpose() * x; // N×M
        let mut dw = DMatrix::zeros(n, self.m());
        for i in 0..n {
            let qi = self.q[i];
            let self_t = self.kernel.self_term(&wrows[i]);
            let w_coeff = -(qi / bf) * s_sum[i] + 0.5 * qi * qi * self_t;
            for j in 0..self.m() {
                dw[(i, j)] = -(qi / bf) * corr[(i, j)] + w_coeff * self.w[(i, j)];
            }
        }

        let mut dl = y.transpose() * y;
        dl /= bf;
        dl -= &self.l;
        dl *= 0.5;

        Ok(ParamGradients { dw, dq, dl })
    }
}

/// Gradients of the minibatch-mean energy with respect to each parameter.
#[derive(Debug, Clone)]
pub struct ParamGradients {
    pub dw: DMatrix<f64>,
    pub dq: DVector<f64>,
    pub dl: DMatrix<f64>,
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
