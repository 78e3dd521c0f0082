//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// `(A + Aᵀ) / 2`.
pub fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `max|A − Aᵀ| ≤ rel_tol · max|A|`.
pub fn is_symmetric(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = max_abs(a);
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

/// `Tr(A B)` without forming the product.
pub fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Lower Cholesky factor, or `None` when the matrix is not positive definite.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let l = nalgebra::Cholesky::new(a.clone())?.unpack();
    if l.diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
        Some(l)
    } else {
        None
    }
}

/// Inverse of an SPD matrix from its lower Cholesky factor, symmetrized.
pub fn spd_inverse_from_lower(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let linv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .expect("Cholesky factor has a positive diagonal");
    let inv = linv.transpose() * linv;
    sym(&inv)
}

pub fn log_det_from_lower(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Eigenvalues (ascending) and matching eigenvectors of a symmetric matrix.
pub fn sym_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(sym(a));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `log λ_j` of `Σ = L Lᵀ` from the singular values of `L`, which keeps small
/// eigenvalues accurate relative to `sqrt(λ_max)` rather than `λ_max`.
pub fn log_eigenvalues_from_lower(l: &DMatrix<f64>) -> DVector<f64> {
    l.clone().svd(false, false).singular_values.map(|s| 2.0 * s.ln())
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(sym(a))
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(*v))
}

/// `U f(Λ) Uᵀ` for a symmetric matrix.
pub fn sym_fn(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(a);
    let mapped = DVector::from_iterator(vals.len(), vals.iter().map(|v| f(*v)));
    let out = &vecs * DMatrix::from_diagonal(&mapped) * vecs.transpose();
    sym(&out)
}

/// Principal logarithm of an SPD matrix.
pub fn logm_spd(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_fn(a, f64::ln)
}

/// `A^{-1/2}` of an SPD matrix.
pub fn inv_sqrtm_spd(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_fn(a, |v| 1.0 / v.sqrt())
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logm_of_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![std::f64::consts::E, 1.0]));
        let l = logm_spd(&a);
        assert!((l[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(l[(1, 1)].abs() < 1e-14);
        assert!(l[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn eigen_is_sorted() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let (vals, vecs) = sym_eigen(&a);
        assert!(vals[0] < vals[1]);
        let recon = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!((recon - a).abs().max() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(cholesky_lower(&a).is_none());
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let l = cholesky_lower(&b).unwrap();
        let inv = spd_inverse_from_lower(&l);
        assert!((&inv * &b - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-14);
        assert!((log_det_from_lower(&l) - 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let s = neumaier_sum([1e16, 1.0, -1e16]);
        assert_eq!(s, 1.0);
    }
}
