//! Dense symmetric linear algebra used throughout the crate.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative threshold below which an eigenvalue counts as zero.
pub const EIGEN_TOL: f64 = 1e-10;

/// Largest absolute difference between `m` and its transpose.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Checks symmetry to a tolerance relative to the largest entry.
pub fn ensure_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Parameter(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asym = asymmetry(m);
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigendecomposition of a symmetric matrix with eigenvalues in descending order.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Number of eigenvalues above `EIGEN_TOL` times the largest one.
pub fn numerical_rank(values: &DVector<f64>) -> usize {
    let top = values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if top == 0.0 {
        return 0;
    }
    values.iter().filter(|&&v| v > EIGEN_TOL * top).count()
}

/// Rank of a symmetric matrix via its eigenvalues.
pub fn sym_rank(m: &DMatrix<f64>) -> usize {
    numerical_rank(&sym_eigen(m).0)
}

/// Moore–Penrose pseudoinverse of a symmetric matrix.
pub fn sym_pseudo_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_symmetric(m)?;
    let (values, vectors) = sym_eigen(m);
    let top = values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (k, &v) in values.iter().enumerate() {
        if v.abs() > EIGEN_TOL * top {
            let u = vectors.column(k);
            out += (u * u.transpose()) / v;
        }
    }
    Ok(symmetrize(&out))
}

/// Nearest positive semi-definite matrix in Frobenius norm (negative
/// eigenvalues clipped to zero). Returns the projection and whether
/// anything was clipped.
pub fn project_psd(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let (values, vectors) = sym_eigen(m);
    let clipped = values.iter().any(|&v| v < 0.0);
    let d = DMatrix::from_diagonal(&values.map(|v| v.max(0.0)));
    (symmetrize(&(&vectors * d * vectors.transpose())), clipped)
}

/// Factor `L` with `m = L Lᵀ`, from the eigendecomposition with negative
/// eigenvalues zeroed. Tolerates singular and slightly indefinite input.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, mut vectors) = sym_eigen(m);
    for (k, &v) in values.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        vectors.column_mut(k).scale_mut(s);
    }
    vectors
}

/// Cholesky factorization with a descriptive error on failure.
pub fn cholesky(m: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| Error::Singular {
        context: context.to_string(),
        condition: condition_estimate(m),
    })
}

/// Log-determinant from a Cholesky factor.
pub fn chol_logdet(chol: &Cholesky<f64, Dyn>) -> f64 {
    chol.l_dirty()
        .diagonal()
        .iter()
        .map(|d| 2.0 * d.ln())
        .sum()
}

/// Ratio of extreme absolute eigenvalues; infinite when singular.
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.nrows() != m.ncols() {
        return f64::NAN;
    }
    let (values, _) = sym_eigen(m);
    let hi = values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let lo = values.iter().fold(f64::INFINITY, |a, &v| a.min(v.abs()));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let chol = cholesky(m, context)?;
    Ok(symmetrize(&chol.inverse()))
}

/// `‖a − b‖_F / ‖b‖_F`.
pub fn frobenius_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Row-major nested vectors, the serialized matrix layout.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Data("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}
