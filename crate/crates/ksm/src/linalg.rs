//! Small dense-matrix helpers shared across modules.

use nalgebra::DMatrix;

use crate::error::{KsmError, Result};

/// Copies the rows of a (column-major) matrix into contiguous vectors, for the
/// scalar kernel loops.
pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order (eigenvector columns permuted to match).
pub(crate) fn symmetric_eigen_desc(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalues of a finite symmetric matrix are finite")
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// 0.5·(M + Mᵀ), used to scrub rounding asymmetry before eigensolves.
pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = m.transpose();
    s += m;
    s *= 0.5;
    s
}

/// Solves A·X = B for symmetric positive definite A via Cholesky. On failure
/// the error names the smallest eigenvalue of A.
pub(crate) fn solve_spd(
    context: &str,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    match nalgebra::Cholesky::new(a.clone()) {
        Some(chol) => Ok(chol.solve(b)),
        None => {
            let eig = nalgebra::SymmetricEigen::new(symmetrize(a));
            let smallest = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
            Err(KsmError::NotPositiveDefinite {
                context: context.to_string(),
                smallest_eigenvalue: smallest,
            })
        }
    }
}

/// Largest eigenvalue of a symmetric matrix.
pub(crate) fn largest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rows_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(rows_of(&m), vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
    }

    #[test]
    fn eigen_desc_reconstructs_and_sorts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let s = symmetrize(&(a.clone() * a.transpose()));
        let (vals, vecs) = symmetric_eigen_desc(s.clone());
        for w in vals.windows(2) {
            assert!(w[0] >= w[1], "eigenvalues not descending: {vals:?}");
        }
        let rebuilt = &vecs * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals)) * vecs.transpose();
        assert!((rebuilt - s).norm() < 1e-10);
    }

    #[test]
    fn spd_solve_matches_lu_and_reports_indefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let spd = symmetrize(&(a.clone() * a.transpose())) + DMatrix::identity(5, 5);
        let b = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        let x = solve_spd("test", &spd, &b).unwrap();
        assert!((&spd * &x - &b).norm() < 1e-10);

        let mut indefinite = DMatrix::identity(3, 3);
        indefinite[(2, 2)] = -2.0;
        let rhs = DMatrix::zeros(3, 1);
        match solve_spd("test", &indefinite, &rhs) {
            Err(KsmError::NotPositiveDefinite {
                smallest_eigenvalue,
                ..
            }) => assert!((smallest_eigenvalue + 2.0).abs() < 1e-12),
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }
}
