//! Positive-semidefinite similarity kernels and their gradients.
//!
//! Four kernels are supported:
//!
//! * linear            f(u,v) = u·v
//! * Gaussian          f(u,v) = exp(-‖u-v‖² / 2σ²)
//! * power-cosine      f(u,v) = ‖u‖‖v‖ (û·v̂)^α,  α a positive integer
//! * homogeneous poly  f(u,v) = (u·v)^α
//!
//! The learning rules need two gradients: ∂f(w,x)/∂w and the total derivative
//! d f(w,w)/dw. For all four kernels both have the closed form
//!
//! ```text
//! ∂f(w,x)/∂w = p·x + s·w        d f(w,w)/dw = t·w
//! ```
//!
//! with scalar coefficients (p, s, t) depending on (w, x). The public
//! gradient functions and the batched gradient path in the model module both
//! go through these coefficients, so there is a single source of truth;
//! finite-difference tests pin them down independently.
//!
//! All arithmetic is f64. Kernel values are exactly order-symmetric:
//! `eval(u,v)` and `eval(v,u)` perform the same floating-point operations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{KsmError, Result};
use crate::linalg;

// ---------------------------------------------------------------------------
// Kernel type
// ---------------------------------------------------------------------------

/// A positive-semidefinite similarity function with evaluation, gradients and
/// an optional declared homogeneity degree.
///
/// Serialized form (config files, checkpoints):
/// `{"kind": "linear"}`, `{"kind": "gaussian", "sigma": 0.3}`,
/// `{"kind": "power_cosine", "alpha": 3}`,
/// `{"kind": "homogeneous_polynomial", "alpha": 2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSpec", into = "KernelSpec")]
pub enum Kernel {
    Linear,
    Gaussian { sigma: f64 },
    PowerCosine { alpha: u32 },
    HomogeneousPolynomial { alpha: u32 },
}

impl Kernel {
    /// Gaussian kernel with width `sigma` (same units as the input coordinates).
    pub fn gaussian(sigma: f64) -> Result<Kernel> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(KsmError::InvalidArgument(format!(
                "gaussian kernel needs a positive finite sigma, got {sigma}"
            )));
        }
        Ok(Kernel::Gaussian { sigma })
    }

    /// Power-cosine kernel ‖u‖‖v‖(û·v̂)^α with positive integer exponent.
    pub fn power_cosine(alpha: u32) -> Result<Kernel> {
        if alpha == 0 {
            return Err(KsmError::InvalidArgument(
                "power_cosine kernel needs alpha >= 1".to_string(),
            ));
        }
        Ok(Kernel::PowerCosine { alpha })
    }

    /// Homogeneous polynomial kernel (u·v)^α with positive integer exponent.
    pub fn homogeneous_polynomial(alpha: u32) -> Result<Kernel> {
        if alpha == 0 {
            return Err(KsmError::InvalidArgument(
                "homogeneous_polynomial kernel needs alpha >= 1".to_string(),
            ));
        }
        Ok(Kernel::HomogeneousPolynomial { alpha })
    }

    /// Degree d such that f(a·u, b·v) = (ab)^d f(u,v) for a,b > 0, when the
    /// kernel is homogeneous (the Gaussian is not).
    pub fn homogeneity(&self) -> Option<f64> {
        match self {
            Kernel::Linear => Some(1.0),
            Kernel::Gaussian { .. } => None,
            Kernel::PowerCosine { .. } => Some(1.0),
            Kernel::HomogeneousPolynomial { alpha } => Some(*alpha as f64),
        }
    }

    /// Compact single-token label used in CSV reports, e.g. `gaussian(sigma=0.3)`.
    pub fn label(&self) -> String {
        match self {
            Kernel::Linear => "linear".to_string(),
            Kernel::Gaussian { sigma } => format!("gaussian(sigma={sigma})"),
            Kernel::PowerCosine { alpha } => format!("power_cosine(alpha={alpha})"),
            Kernel::HomogeneousPolynomial { alpha } => {
                format!("homogeneous_polynomial(alpha={alpha})")
            }
        }
    }

    // -----------------------------------------------------------------------
    // Evaluation
    // -----------------------------------------------------------------------

    /// Kernel value f(u, v).
    pub fn eval(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        check_pair("kernel eval", u, v)?;
        Ok(self.eval_raw(u, v))
    }

    /// Evaluation without the dimension check; callers have validated shapes.
    pub(crate) fn eval_raw(&self, u: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), v.len());
        match *self {
            Kernel::Linear => dot(u, v),
            Kernel::Gaussian { sigma } => (-sq_dist(u, v) / (2.0 * sigma * sigma)).exp(),
            Kernel::PowerCosine { alpha } => {
                let nu = norm(u);
                let nv = norm(v);
                if nu == 0.0 || nv == 0.0 {
                    // Continuous extension: f → 0 as either argument → 0.
                    return 0.0;
                }
                let c = dot(u, v);
                // f = (u·v)^α · (‖u‖‖v‖)^{1-α}
                c.powi(alpha as i32) * (nu * nv).powi(1 - alpha as i32)
            }
            Kernel::HomogeneousPolynomial { alpha } => dot(u, v).powi(alpha as i32),
        }
    }

    /// Convenience for the diagonal term f(w, w).
    pub(crate) fn eval_self(&self, w: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(w, w),
            Kernel::Gaussian { .. } => 1.0,
            Kernel::PowerCosine { .. } => dot(w, w), // ‖w‖² exactly, cos term is 1
            Kernel::HomogeneousPolynomial { alpha } => dot(w, w).powi(alpha as i32),
        }
    }

    // -----------------------------------------------------------------------
    // Gradients
    // -----------------------------------------------------------------------

    /// ∂f(w, x)/∂w, the gradient in the first argument.
    pub fn grad_first_arg(&self, w: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        check_pair("kernel grad_first_arg", w, x)?;
        let GradTerms { p, s } = self.grad_terms(w, x);
        Ok(w.iter().zip(x).map(|(&wi, &xi)| p * xi + s * wi).collect())
    }

    /// d f(w, w)/dw, the total derivative of the self-similarity.
    pub fn grad_self(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.is_empty() {
            return Err(KsmError::InvalidArgument(
                "kernel grad_self: empty vector".to_string(),
            ));
        }
        let t = self.self_term(w);
        Ok(w.iter().map(|&wi| t * wi).collect())
    }

    /// Coefficients of ∂f(w,x)/∂w = p·x + s·w.
    pub(crate) fn grad_terms(&self, w: &[f64], x: &[f64]) -> GradTerms {
        debug_assert_eq!(w.len(), x.len());
        match *self {
            Kernel::Linear => GradTerms { p: 1.0, s: 0.0 },
            Kernel::Gaussian { sigma } => {
                // ∂f/∂w = f · (x - w)/σ²
                let p = self.eval_raw(w, x) / (sigma * sigma);
                GradTerms { p, s: -p }
            }
            Kernel::PowerCosine { alpha } => {
                let nw = norm(w);
                let nx = norm(x);
                if nw == 0.0 || nx == 0.0 {
                    // Continuous extension at the zero vector.
                    return GradTerms { p: 0.0, s: 0.0 };
                }
                let c = dot(w, x);
                let a = alpha as i32;
                // f = c^α (n_w n_x)^{1-α}:
                //   ∂f/∂w = α c^{α-1} (n_w n_x)^{1-α} · x
                //         + (1-α) c^α n_x^{1-α} n_w^{-α-1} · w
                let p = alpha as f64 * c.powi(a - 1) * (nw * nx).powi(1 - a);
                let s = (1.0 - alpha as f64) * c.powi(a) * nx.powi(1 - a) * nw.powi(-a - 1);
                GradTerms { p, s }
            }
            Kernel::HomogeneousPolynomial { alpha } => {
                let c = dot(w, x);
                GradTerms {
                    p: alpha as f64 * c.powi(alpha as i32 - 1),
                    s: 0.0,
                }
            }
        }
    }

    /// Coefficient of d f(w,w)/dw = t·w.
    pub(crate) fn self_term(&self, w: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => 2.0,
            Kernel::Gaussian { .. } => 0.0, // f(w,w) ≡ 1
            Kernel::PowerCosine { .. } => 2.0, // f(w,w) = ‖w‖²
            Kernel::HomogeneousPolynomial { alpha } => {
                // d (w·w)^α / dw = 2α (w·w)^{α-1} w
                2.0 * alpha as f64 * dot(w, w).powi(alpha as i32 - 1)
            }
        }
    }

    // -----------------------------------------------------------------------
    // Gram matrices
    // -----------------------------------------------------------------------

    /// T×T matrix of pairwise kernel values over the rows of `x`.
    ///
    /// Exactly symmetric: entry (s,t) is computed once and mirrored.
    pub fn gram(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let rows = linalg::rows_of(x);
        let t = rows.len();
        let mut g = DMatrix::zeros(t, t);
        for s in 0..t {
            for u in s..t {
                let v = self.eval_raw(&rows[s], &rows[u]);
                g[(s, u)] = v;
                g[(u, s)] = v;
            }
        }
        g
    }

    /// T×N matrix A with A[t][i] = f(x^t, w_i) for data rows `x` against
    /// landmark rows `w`.
    pub fn cross_gram(&self, x: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != w.ncols() {
            return Err(KsmError::dim("kernel cross_gram", x.ncols(), w.ncols()));
        }
        let xr = linalg::rows_of(x);
        let wr = linalg::rows_of(w);
        Ok(DMatrix::from_fn(xr.len(), wr.len(), |t, i| {
            self.eval_raw(&xr[t], &wr[i])
        }))
    }
}

/// Coefficients of the gradient decomposition ∂f(w,x)/∂w = p·x + s·w.
pub(crate) struct GradTerms {
    pub p: f64,
    pub s: f64,
}

fn check_pair(context: &str, u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(KsmError::dim(context, u.len(), v.len()));
    }
    if u.is_empty() {
        return Err(KsmError::InvalidArgument(format!(
            "{context}: vectors must have dimension >= 1"
        )));
    }
    Ok(())
}

#[inline]
fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| a * b).sum()
}

#[inline]
fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

#[inline]
fn sq_dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(&a, &b)| {
            let d = a - b;
            d * d
        })
        .sum()
}

// ---------------------------------------------------------------------------
// Serialized form
// ---------------------------------------------------------------------------

/// Raw serialized kernel description. Kept separate from `Kernel` so config
/// parsing can reject unknown keys and per-kind field mismatches with clear
/// messages (serde's internally-tagged enums cannot do both).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<u32>,
}

impl TryFrom<KernelSpec> for Kernel {
    type Error = KsmError;

    fn try_from(spec: KernelSpec) -> Result<Kernel> {
        let reject = |field: &str, kind: &str| -> Result<()> {
            Err(KsmError::InvalidArgument(format!(
                "kernel kind \"{kind}\" does not take a \"{field}\" field"
            )))
        };
        match spec.kind.as_str() {
            "linear" => {
                if spec.sigma.is_some() {
                    reject("sigma", "linear")?;
                }
                if spec.alpha.is_some() {
                    reject("alpha", "linear")?;
                }
                Ok(Kernel::Linear)
            }
            "gaussian" => {
                if spec.alpha.is_some() {
                    reject("alpha", "gaussian")?;
                }
                let sigma = spec.sigma.ok_or_else(|| {
                    KsmError::InvalidArgument(
                        "kernel kind \"gaussian\" requires a \"sigma\" field".to_string(),
                    )
                })?;
                Kernel::gaussian(sigma)
            }
            "power_cosine" => {
                if spec.sigma.is_some() {
                    reject("sigma", "power_cosine")?;
                }
                let alpha = spec.alpha.ok_or_else(|| {
                    KsmError::InvalidArgument(
                        "kernel kind \"power_cosine\" requires an \"alpha\" field".to_string(),
                    )
                })?;
                Kernel::power_cosine(alpha)
            }
            "homogeneous_polynomial" => {
                if spec.sigma.is_some() {
                    reject("sigma", "homogeneous_polynomial")?;
                }
                let alpha = spec.alpha.ok_or_else(|| {
                    KsmError::InvalidArgument(
                        "kernel kind \"homogeneous_polynomial\" requires an \"alpha\" field"
                            .to_string(),
                    )
                })?;
                Kernel::homogeneous_polynomial(alpha)
            }
            other => Err(KsmError::InvalidArgument(format!(
                "unknown kernel kind \"{other}\" (expected linear, gaussian, power_cosine or homogeneous_polynomial)"
            ))),
        }
    }
}

impl From<Kernel> for KernelSpec {
    fn from(k: Kernel) -> KernelSpec {
        match k {
            Kernel::Linear => KernelSpec {
                kind: "linear".to_string(),
                sigma: None,
                alpha: None,
            },
            Kernel::Gaussian { sigma } => KernelSpec {
                kind: "gaussian".to_string(),
                sigma: Some(sigma),
                alpha: None,
            },
            Kernel::PowerCosine { alpha } => KernelSpec {
                kind: "power_cosine".to_string(),
                sigma: None,
                alpha: Some(alpha),
            },
            Kernel::HomogeneousPolynomial { alpha } => KernelSpec {
                kind: "homogeneous_polynomial".to_string(),
                sigma: None,
                alpha: Some(alpha),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// The four kernels exercised by most property loops.
    fn all_kernels() -> Vec<Kernel> {
        vec![
            Kernel::Linear,
            Kernel::gaussian(0.3).unwrap(),
            Kernel::power_cosine(1).unwrap(),
            Kernel::power_cosine(3).unwrap(),
            Kernel::power_cosine(4).unwrap(),
            Kernel::homogeneous_polynomial(2).unwrap(),
            Kernel::homogeneous_polynomial(3).unwrap(),
        ]
    }

    fn random_vec(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
        (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Central finite difference of f(·, x) at w along coordinate a.
    fn fd_grad_first(k: &Kernel, w: &[f64], x: &[f64], a: usize, h: f64) -> f64 {
        let mut wp = w.to_vec();
        let mut wm = w.to_vec();
        wp[a] += h;
        wm[a] -= h;
        (k.eval(&wp, x).unwrap() - k.eval(&wm, x).unwrap()) / (2.0 * h)
    }

    /// Central finite difference of w ↦ f(w, w) along coordinate a.
    fn fd_grad_self(k: &Kernel, w: &[f64], a: usize, h: f64) -> f64 {
        let mut wp = w.to_vec();
        let mut wm = w.to_vec();
        wp[a] += h;
        wm[a] -= h;
        (k.eval(&wp, &wp).unwrap() - k.eval(&wm, &wm).unwrap()) / (2.0 * h)
    }

    #[test]
    fn eval_known_values() {
        let g = Kernel::gaussian(0.3).unwrap();
        // g(0) = 1 at coincident inputs.
        assert_eq!(g.eval(&[0.7, -0.2], &[0.7, -0.2]).unwrap(), 1.0);
        // distance 0.3 with sigma 0.3: exp(-1/2).
        let v = g.eval(&[0.0, 0.0], &[0.3, 0.0]).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15, "got {v}");

        assert_eq!(Kernel::Linear.eval(&[1.0, 2.0], &[3.0, -1.0]).unwrap(), 1.0);

        // Orthogonal directions: cosine term is 0.
        let pc = Kernel::power_cosine(3).unwrap();
        assert_eq!(pc.eval(&[2.0, 0.0], &[0.0, 5.0]).unwrap(), 0.0);

        let hp = Kernel::homogeneous_polynomial(2).unwrap();
        assert_eq!(hp.eval(&[1.0, 1.0], &[2.0, 1.0]).unwrap(), 9.0);
    }

    #[test]
    fn power_cosine_alpha1_equals_linear() {
        let pc = Kernel::power_cosine(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let u = random_vec(&mut rng, 3);
            let v = random_vec(&mut rng, 3);
            let a = pc.eval(&u, &v).unwrap();
            let b = Kernel::Linear.eval(&u, &v).unwrap();
            // ‖u‖‖v‖(û·v̂) = u·v up to rounding in the norm factors.
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn eval_symmetric_in_arguments_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in all_kernels() {
            for _ in 0..100 {
                let u = random_vec(&mut rng, 4);
                let v = random_vec(&mut rng, 4);
                let a = k.eval(&u, &v).unwrap();
                let b = k.eval(&v, &u).unwrap();
                assert_eq!(a.to_bits(), b.to_bits(), "{:?} not order-symmetric", k);
            }
        }
    }

    #[test]
    fn declared_homogeneity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in all_kernels() {
            let Some(d) = k.homogeneity() else { continue };
            for _ in 0..50 {
                let u = random_vec(&mut rng, 3);
                let v = random_vec(&mut rng, 3);
                for &a in &[0.5, 2.0, 7.0] {
                    for &b in &[0.5, 2.0, 7.0] {
                        let ua: Vec<f64> = u.iter().map(|&x| a * x).collect();
                        let vb: Vec<f64> = v.iter().map(|&x| b * x).collect();
                        let lhs = k.eval(&ua, &vb).unwrap();
                        let rhs = (a * b).powf(d) * k.eval(&u, &v).unwrap();
                        assert!(
                            (lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-12),
                            "{:?}: f(au,bv)={lhs} vs (ab)^d f={rhs}",
                            k
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn gaussian_diagonal_is_one() {
        let g = Kernel::gaussian(0.55).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let u = random_vec(&mut rng, 5);
            assert_eq!(g.eval(&u, &u).unwrap(), 1.0);
        }
    }

    #[test]
    fn eval_self_matches_eval_on_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in all_kernels() {
            for _ in 0..30 {
                let w = random_vec(&mut rng, 4);
                let direct = k.eval(&w, &w).unwrap();
                let shortcut = k.eval_self(&w);
                assert!(
                    (direct - shortcut).abs() <= 1e-12 * direct.abs().max(1e-12),
                    "{:?}: {direct} vs {shortcut}",
                    k
                );
            }
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        // 100 generic points per kernel; relative error 1e-4 at step 1e-5.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-5;
        for k in all_kernels() {
            for _ in 0..100 {
                let m = rng.random_range(1..=5);
                let w = random_vec(&mut rng, m);
                let x = random_vec(&mut rng, m);
                if norm_of(&w) < 0.3 || norm_of(&x) < 0.3 {
                    continue; // stay away from the power-cosine singular point
                }
                let ga = k.grad_first_arg(&w, &x).unwrap();
                let gs = k.grad_self(&w).unwrap();
                for a in 0..m {
                    let fd1 = fd_grad_first(&k, &w, &x, a, h);
                    let fd2 = fd_grad_self(&k, &w, a, h);
                    let scale1 = ga.iter().map(|g| g.abs()).fold(1e-6, f64::max);
                    let scale2 = gs.iter().map(|g| g.abs()).fold(1e-6, f64::max);
                    assert!(
                        (ga[a] - fd1).abs() <= 1e-4 * scale1,
                        "{:?} grad_first_arg[{a}]: {} vs fd {}",
                        k,
                        ga[a],
                        fd1
                    );
                    assert!(
                        (gs[a] - fd2).abs() <= 1e-4 * scale2,
                        "{:?} grad_self[{a}]: {} vs fd {}",
                        k,
                        gs[a],
                        fd2
                    );
                }
            }
        }
    }

    fn norm_of(u: &[f64]) -> f64 {
        u.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn known_gradients() {
        // Linear: ∂(w·x)/∂w = x, d(w·w)/dw = 2w.
        let g = Kernel::Linear.grad_first_arg(&[5.0, 5.0], &[3.0, -1.0]).unwrap();
        assert_eq!(g, vec![3.0, -1.0]);
        let g = Kernel::Linear.grad_self(&[1.0, 2.0]).unwrap();
        assert_eq!(g, vec![2.0, 4.0]);

        // Gaussian at w = x: gradient vanishes; self-gradient always zero.
        let k = Kernel::gaussian(0.3).unwrap();
        let g = k.grad_first_arg(&[0.4, 0.1], &[0.4, 0.1]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        let g = k.grad_self(&[0.9, -0.3]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn power_cosine_zero_vector_extension() {
        let k = Kernel::power_cosine(3).unwrap();
        let z = [0.0, 0.0];
        let v = [0.5, 0.5];
        assert_eq!(k.eval(&z, &v).unwrap(), 0.0);
        assert_eq!(k.eval(&v, &z).unwrap(), 0.0);
        assert_eq!(k.grad_first_arg(&z, &v).unwrap(), vec![0.0, 0.0]);
        assert_eq!(k.grad_self(&z).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let k = Kernel::Linear;
        assert!(k.eval(&[1.0], &[1.0, 2.0]).is_err());
        assert!(k.grad_first_arg(&[1.0, 2.0], &[1.0]).is_err());
        let long = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let short = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(k.cross_gram(&long, &short).is_err());
    }

    #[test]
    fn gram_is_symmetric_and_matches_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for k in all_kernels() {
            let t = 7;
            let m = 3;
            let x = DMatrix::from_fn(t, m, |_, _| rng.random_range(-1.0..1.0));
            let g = k.gram(&x);
            for s in 0..t {
                for u in 0..t {
                    let xs: Vec<f64> = x.row(s).iter().copied().collect();
                    let xu: Vec<f64> = x.row(u).iter().copied().collect();
                    let direct = k.eval(&xs, &xu).unwrap();
                    assert_eq!(g[(s, u)].to_bits(), g[(u, s)].to_bits());
                    assert_eq!(g[(s, u)].to_bits(), direct.to_bits());
                }
            }
        }
    }

    #[test]
    fn gram_matrices_are_numerically_psd() {
        // Smallest eigenvalue >= -1e-8 * largest over 50 random points.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for k in all_kernels() {
            let x = DMatrix::from_fn(50, 3, |_, _| rng.random_range(-1.0..1.0));
            let g = k.gram(&x);
            let eig = nalgebra::SymmetricEigen::new(g);
            let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
            let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
            assert!(
                min >= -1e-8 * max.abs(),
                "{:?}: min eigenvalue {min}, max {max}",
                k
            );
        }
    }

    #[test]
    fn gaussian_gram_has_unit_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let k = Kernel::gaussian(0.3).unwrap();
        let x = DMatrix::from_fn(10, 2, |_, _| rng.random_range(-1.0..1.0));
        let g = k.gram(&x);
        for i in 0..10 {
            assert_eq!(g[(i, i)], 1.0);
        }
    }

    #[test]
    fn linear_gram_of_identity_rows() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let g = Kernel::Linear.gram(&x);
        assert_eq!(g, DMatrix::identity(2, 2));
    }

    // -- serialized form ----------------------------------------------------

    #[test]
    fn kernel_spec_round_trip() {
        for k in all_kernels() {
            let json = serde_json::to_string(&k).unwrap();
            let back: Kernel = serde_json::from_str(&json).unwrap();
            assert_eq!(k, back, "round trip through {json}");
        }
        let json = serde_json::to_string(&Kernel::gaussian(0.3).unwrap()).unwrap();
        assert_eq!(json, r#"{"kind":"gaussian","sigma":0.3}"#);
    }

    #[test]
    fn kernel_spec_rejects_bad_input() {
        // unknown kind
        assert!(serde_json::from_str::<Kernel>(r#"{"kind":"cubic"}"#).is_err());
        // missing required field
        assert!(serde_json::from_str::<Kernel>(r#"{"kind":"gaussian"}"#).is_err());
        // field from the wrong kind
        assert!(serde_json::from_str::<Kernel>(r#"{"kind":"linear","sigma":1.0}"#).is_err());
        // unknown key
        assert!(serde_json::from_str::<Kernel>(r#"{"kind":"linear","width":1.0}"#).is_err());
        // invalid values
        assert!(serde_json::from_str::<Kernel>(r#"{"kind":"gaussian","sigma":0.0}"#).is_err());
        assert!(serde_json::from_str::<Kernel>(r#"{"kind":"power_cosine","alpha":0}"#).is_err());
    }
}
