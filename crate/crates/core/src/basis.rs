//! Cubic regression spline bases and their penalties.
//!
//! The basis is parameterized by the function values at the knots: for a
//! coefficient vector `β`, `s(x) = Σ β_j b_j(x)` is the natural cubic spline
//! interpolating `(knot_j, β_j)`. Its second derivatives at the knots are
//! `F β` with `F = [0; B⁻¹D; 0]`, and the wiggliness penalty
//! `∫ s''(x)² dx` over the knot range equals `βᵀ Dᵀ B⁻¹ D β`.
//!
//! The penalty's nullspace (constants and linear functions of the knots) is
//! what an improper flat prior sits on; [`nullspace_penalty`] and
//! [`shrinkage_penalty`] give two ways of making it proper.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, EIGEN_TOL};

/// Default relative eigenvalue floor for shrinkage penalties.
pub const DEFAULT_SHRINKAGE_EPS: f64 = 1e-3;

/// Strictly increasing, finite knot locations, at least three of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct KnotVector(Vec<f64>);

impl KnotVector {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 3 {
            return Err(Error::Parameter(format!(
                "need at least 3 knots, got {}",
                knots.len()
            )));
        }
        if knots.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("knots must be finite".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("knots must be strictly increasing".into()));
        }
        Ok(KnotVector(knots))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.0[0]
    }

    pub fn last(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    fn spacings(&self) -> Vec<f64> {
        self.0.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

impl TryFrom<Vec<f64>> for KnotVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        KnotVector::new(v)
    }
}

impl From<KnotVector> for Vec<f64> {
    fn from(k: KnotVector) -> Self {
        k.0
    }
}

/// Sorted distinct finite values of `x`.
pub(crate) fn distinct_sorted(x: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = x.iter().copied().filter(|v| v.is_finite()).collect();
    u.sort_by(f64::total_cmp);
    u.dedup();
    u
}

/// Knots at evenly spaced quantiles of the distinct values of `x`,
/// including its minimum and maximum.
pub fn place_knots(x: &[f64], k: usize) -> Result<KnotVector> {
    if k < 3 {
        return Err(Error::Parameter(format!("basis dimension k = {k} < 3")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("covariate contains non-finite values".into()));
    }
    let u = distinct_sorted(x);
    if u.len() < k {
        return Err(Error::DegenerateCovariate {
            name: String::new(),
            distinct: u.len(),
            needed: k,
        });
    }
    let m = u.len() - 1;
    let knots = (0..k)
        .map(|j| {
            if j == k - 1 {
                return u[m];
            }
            let pos = j as f64 * m as f64 / (k - 1) as f64;
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            if frac == 0.0 || lo == m {
                u[lo]
            } else {
                u[lo] + frac * (u[lo + 1] - u[lo])
            }
        })
        .collect();
    KnotVector::new(knots)
}

/// Cardinal natural cubic regression spline basis on a knot vector.
#[derive(Debug, Clone)]
pub struct CrBasis {
    knots: KnotVector,
    /// k×k map from knot values to knot second derivatives (first and last rows zero).
    f_plus: DMatrix<f64>,
    penalty: DMatrix<f64>,
}

/// Banded matrices `D` ((k-2)×k) and `B` ((k-2)×(k-2)) of the spline recurrence.
fn recurrence_matrices(knots: &KnotVector) -> (DMatrix<f64>, DMatrix<f64>) {
    let h = knots.spacings();
    let k = knots.len();
    let mut d = DMatrix::zeros(k - 2, k);
    let mut b = DMatrix::zeros(k - 2, k - 2);
    for i in 0..k - 2 {
        d[(i, i)] = 1.0 / h[i];
        d[(i, i + 1)] = -1.0 / h[i] - 1.0 / h[i + 1];
        d[(i, i + 2)] = 1.0 / h[i + 1];
        b[(i, i)] = (h[i] + h[i + 1]) / 3.0;
        if i + 1 < k - 2 {
            b[(i, i + 1)] = h[i + 1] / 6.0;
            b[(i + 1, i)] = h[i + 1] / 6.0;
        }
    }
    (d, b)
}

impl CrBasis {
    pub fn new(knots: KnotVector) -> Self {
        let k = knots.len();
        let (d, b) = recurrence_matrices(&knots);
        // B is symmetric, strictly diagonally dominant with positive diagonal.
        let f = b
            .cholesky()
            .expect("spline recurrence matrix is positive definite")
            .solve(&d);
        let mut f_plus = DMatrix::zeros(k, k);
        f_plus.rows_mut(1, k - 2).copy_from(&f);
        let penalty = linalg::symmetrize(&(d.transpose() * &f));
        CrBasis {
            knots,
            f_plus,
            penalty,
        }
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    /// Number of basis functions (equal to the number of knots).
    pub fn dim(&self) -> usize {
        self.knots.len()
    }

    /// Second derivatives at the knots implied by knot values `beta`.
    pub fn knot_second_derivatives(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.f_plus * beta
    }

    /// Basis values `b(x)`; linear extrapolation outside the knot range.
    pub fn evaluate(&self, x: f64) -> DVector<f64> {
        let mut row = DVector::zeros(self.dim());
        self.evaluate_into(x, row.as_mut_slice());
        row
    }

    fn evaluate_into(&self, x: f64, out: &mut [f64]) {
        let kn = self.knots.as_slice();
        let k = kn.len();
        out.iter_mut().for_each(|v| *v = 0.0);
        if x < kn[0] {
            let h = kn[1] - kn[0];
            let t = x - kn[0];
            out[0] += 1.0 - t / h;
            out[1] += t / h;
            for (c, o) in out.iter_mut().enumerate() {
                *o -= t * h / 6.0 * self.f_plus[(1, c)];
            }
            return;
        }
        if x > kn[k - 1] {
            let h = kn[k - 1] - kn[k - 2];
            let t = x - kn[k - 1];
            out[k - 1] += 1.0 + t / h;
            out[k - 2] -= t / h;
            for (c, o) in out.iter_mut().enumerate() {
                *o += t * h / 6.0 * self.f_plus[(k - 2, c)];
            }
            return;
        }
        // Interval j with kn[j] <= x <= kn[j+1].
        let j = match kn.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => i.min(k - 2),
            Err(i) => i - 1,
        };
        let h = kn[j + 1] - kn[j];
        let am = (kn[j + 1] - x) / h;
        let ap = (x - kn[j]) / h;
        let dm = kn[j + 1] - x;
        let dp = x - kn[j];
        let cm = (dm * dm * dm / h - h * dm) / 6.0;
        let cp = (dp * dp * dp / h - h * dp) / 6.0;
        out[j] += am;
        out[j + 1] += ap;
        for (c, o) in out.iter_mut().enumerate() {
            *o += cm * self.f_plus[(j, c)] + cp * self.f_plus[(j + 1, c)];
        }
    }

    /// n×k design block for covariate values `xs`.
    pub fn design(&self, xs: &[f64]) -> DMatrix<f64> {
        let k = self.dim();
        let mut m = DMatrix::zeros(xs.len(), k);
        let mut row = vec![0.0; k];
        for (i, &x) in xs.iter().enumerate() {
            self.evaluate_into(x, &mut row);
            for (c, &v) in row.iter().enumerate() {
                m[(i, c)] = v;
            }
        }
        m
    }

    pub fn penalty(&self) -> PenaltyBlock {
        let k = self.dim();
        PenaltyBlock {
            s: self.penalty.clone(),
            rank: k - 2,
            nullspace_dim: 2,
        }
    }
}

pub fn cr_basis(knots: KnotVector) -> CrBasis {
    CrBasis::new(knots)
}

/// Exact integrated squared second derivative Gram matrix of the basis.
pub fn cr_penalty(knots: &KnotVector) -> PenaltyBlock {
    let (d, b) = recurrence_matrices(knots);
    let f = b
        .cholesky()
        .expect("spline recurrence matrix is positive definite")
        .solve(&d);
    PenaltyBlock {
        s: linalg::symmetrize(&(d.transpose() * f)),
        rank: knots.len() - 2,
        nullspace_dim: 2,
    }
}

/// A symmetric PSD penalty matrix with its rank.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyBlock {
    pub s: DMatrix<f64>,
    pub rank: usize,
    pub nullspace_dim: usize,
}

impl PenaltyBlock {
    /// Wraps a matrix, determining the rank numerically.
    pub fn from_matrix(s: DMatrix<f64>) -> Result<Self> {
        linalg::ensure_symmetric(&s)?;
        let s = linalg::symmetrize(&s);
        let rank = linalg::sym_rank(&s);
        let nullspace_dim = s.nrows() - rank;
        Ok(PenaltyBlock {
            s,
            rank,
            nullspace_dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    /// Penalty in constrained coordinates, `Zᵀ S Z`.
    pub fn constrained(&self, z: &ConstraintTransform) -> Result<Self> {
        PenaltyBlock::from_matrix(z.z.transpose() * &self.s * &z.z)
    }
}

/// Orthonormal reparameterization onto the sum-to-zero subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintTransform {
    pub z: DMatrix<f64>,
    /// Set when the block was already centred and no dimension was removed.
    pub already_constrained: bool,
}

impl ConstraintTransform {
    pub fn width(&self) -> usize {
        self.z.ncols()
    }
}

/// Orthonormal basis `Z` for the nullspace of the column-sum vector of
/// `x_block`, built from a Householder reflection.
pub fn constraint(x_block: &DMatrix<f64>) -> ConstraintTransform {
    let k = x_block.ncols();
    let c = DVector::from_iterator(k, x_block.column_iter().map(|col| col.sum()));
    let norm = c.norm();
    let scale = x_block.amax().max(f64::MIN_POSITIVE) * (x_block.nrows() as f64).max(1.0);
    if norm <= 1e-13 * scale {
        return ConstraintTransform {
            z: DMatrix::identity(k, k),
            already_constrained: true,
        };
    }
    let mut v = c.clone();
    let sign = if c[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign * norm;
    let vv = v.dot(&v);
    let h = DMatrix::identity(k, k) - (&v * v.transpose()) * (2.0 / vv);
    ConstraintTransform {
        z: h.columns(1, k - 1).into_owned(),
        already_constrained: false,
    }
}

/// Moore–Penrose pseudoinverse; the prior covariance implied by a penalty.
pub fn pseudo_inverse(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::sym_pseudo_inverse(s)
}

/// Eigenvectors of `s` with (numerically) zero eigenvalues.
fn null_eigenvectors(s: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>, Vec<usize>) {
    let (values, vectors) = linalg::sym_eigen(s);
    let top = values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let null: Vec<usize> = (0..values.len())
        .filter(|&i| values[i] <= EIGEN_TOL * top)
        .collect();
    (values, vectors, null)
}

/// Double-penalty companion `S* = U* U*ᵀ` over the penalty's nullspace.
pub fn nullspace_penalty(s: &PenaltyBlock) -> DMatrix<f64> {
    let (_, vectors, null) = null_eigenvectors(&s.s);
    let n = s.dim();
    let mut out = DMatrix::zeros(n, n);
    for &i in &null {
        let u = vectors.column(i);
        out += &u * u.transpose();
    }
    linalg::symmetrize(&out)
}

/// Replaces zero eigenvalues of `s` by `eps` times the largest eigenvalue.
pub fn shrinkage_penalty(s: &PenaltyBlock, eps: f64) -> Result<PenaltyBlock> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Parameter(format!(
            "shrinkage eps must be positive, got {eps}"
        )));
    }
    let (mut values, vectors, null) = null_eigenvectors(&s.s);
    let top = values.iter().fold(0.0f64, |a, &v| a.max(v));
    for &i in &null {
        values[i] = values[i].max(eps * top);
    }
    let out = &vectors * DMatrix::from_diagonal(&values) * vectors.transpose();
    Ok(PenaltyBlock {
        s: linalg::symmetrize(&out),
        rank: s.dim(),
        nullspace_dim: 0,
    })
}
