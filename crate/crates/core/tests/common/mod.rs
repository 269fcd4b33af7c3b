//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use gamsmooth_core::assembly::DesignMatrices;
use gamsmooth_core::basis::CrBasis;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Random symmetric PSD matrix of the given rank.
pub fn random_psd(rng: &mut ChaCha8Rng, p: usize, rank: usize) -> DMatrix<f64> {
    let a = normal_matrix(rng, p, rank);
    &a * a.transpose()
}

/// Gauss–Legendre nodes and weights on [-1, 1], five points.
const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// `∫ b_i″ b_j″ dx` by Gauss–Legendre over each knot interval, with second
/// derivatives from central differences of the basis values.
pub fn quadrature_penalty(basis: &CrBasis) -> DMatrix<f64> {
    let knots = basis.knots().as_slice().to_vec();
    let k = knots.len();
    let mut s = DMatrix::zeros(k, k);
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let h = 1e-3 * (b - a);
        for &(t, wt) in &GL5 {
            let x = mid + half * t;
            let d2 = (basis.evaluate(x + h) - basis.evaluate(x) * 2.0 + basis.evaluate(x - h)) / (h * h);
            s += &d2 * d2.transpose() * (wt * half);
        }
    }
    s
}

/// Penalized least squares by QR of the augmented system `[X; R]`, `RᵀR = S`.
pub fn pls_qr(x: &DMatrix<f64>, y: &DVector<f64>, s: &DMatrix<f64>) -> DVector<f64> {
    let p = x.ncols();
    let eig = SymmetricEigen::new(s.clone());
    let root = DMatrix::from_fn(p, p, |i, j| eig.eigenvalues[i].max(0.0).sqrt() * eig.eigenvectors[(j, i)]);
    let n = x.nrows();
    let mut aug = DMatrix::zeros(n + p, p);
    aug.view_mut((0, 0), (n, p)).copy_from(x);
    aug.view_mut((n, 0), (p, p)).copy_from(&root);
    let mut rhs = DVector::zeros(n + p);
    rhs.rows_mut(0, n).copy_from(y);
    let qr = aug.qr();
    let qty = qr.q().transpose() * rhs;
    qr.r().solve_upper_triangular(&qty).expect("full column rank")
}

/// Maximizes the penalized Poisson log-likelihood by damped Newton steps.
pub fn poisson_newton(x: &DMatrix<f64>, y: &DVector<f64>, s: &DMatrix<f64>) -> DVector<f64> {
    let p = x.ncols();
    let objective = |b: &DVector<f64>| -> f64 {
        let eta = x * b;
        let ll: f64 = y.iter().zip(eta.iter()).map(|(yi, e)| yi * e - e.exp()).sum();
        ll - 0.5 * b.dot(&(s * b))
    };
    let mut beta = DVector::zeros(p);
    for _ in 0..200 {
        let eta = x * &beta;
        let mu = eta.map(f64::exp);
        let grad = x.transpose() * (y - &mu) - s * &beta;
        let mut xm = x.clone();
        for (i, m) in mu.iter().enumerate() {
            xm.row_mut(i).scale_mut(*m);
        }
        let hess = x.transpose() * xm + s;
        let step = hess.lu().solve(&grad).expect("negative definite Hessian");
        let f0 = objective(&beta);
        let mut t = 1.0;
        while objective(&(&beta + &step * t)) < f0 && t > 1e-12 {
            t *= 0.5;
        }
        beta += step * t;
        if grad.norm() < 1e-13 {
            break;
        }
    }
    beta
}

/// `−log ∫ N(y; Xβ, φI) · prior(β) dβ` by a tensor trapezoid grid in the
/// principal axes of the integrand. The prior is `N(0, φ Sλ⁻)` on the range of
/// `Sλ` and flat on its nullspace.
pub fn quadrature_neg_log_marginal(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    s_lambda: &DMatrix<f64>,
    phi: f64,
    points: usize,
) -> f64 {
    let n = x.nrows() as f64;
    let p = x.ncols();
    let eig = SymmetricEigen::new(s_lambda.clone());
    let tol = 1e-10 * eig.eigenvalues.amax();
    let positive: Vec<f64> = eig.eigenvalues.iter().copied().filter(|v| *v > tol).collect();
    let rank = positive.len() as f64;
    let log_pdet: f64 = positive.iter().map(|v| v.ln()).sum();

    let log_integrand = |b: &DVector<f64>| -> f64 {
        let r = y - x * b;
        -(r.norm_squared() + b.dot(&(s_lambda * b))) / (2.0 * phi)
    };
    // Centre and axes from the quadratic's own normal equations.
    let h = x.transpose() * x + s_lambda;
    let centre = h.clone().lu().solve(&(x.transpose() * y)).expect("proper integrand");
    let he = SymmetricEigen::new(h / phi);
    let sd: Vec<f64> = he.eigenvalues.iter().map(|v| 1.0 / v.sqrt()).collect();
    let span = 12.0;
    let step = 2.0 * span / (points - 1) as f64;
    let peak = log_integrand(&centre);

    let mut total = 0.0;
    let mut idx = vec![0usize; p];
    loop {
        let mut b = centre.clone();
        let mut w = 1.0;
        for d in 0..p {
            let t = -span + step * idx[d] as f64;
            b += he.eigenvectors.column(d) * (t * sd[d]);
            if idx[d] == 0 || idx[d] == points - 1 {
                w *= 0.5;
            }
        }
        total += w * (log_integrand(&b) - peak).exp();
        let mut d = 0;
        while d < p {
            idx[d] += 1;
            if idx[d] < points {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == p {
            break;
        }
    }
    let volume: f64 = sd.iter().map(|s| s * step).product();
    let log_int = peak + (total * volume).ln();
    let log_norm = -0.5 * n * (2.0 * std::f64::consts::PI * phi).ln()
        - 0.5 * rank * (2.0 * std::f64::consts::PI * phi).ln()
        + 0.5 * log_pdet;
    -(log_norm + log_int)
}

/// Small designs whose penalty has rank at most two, built from raw blocks.
pub fn toy_design(kind: usize, rng: &mut ChaCha8Rng, n: usize) -> DesignMatrices {
    let x = normal_matrix(rng, n, if kind == 0 { 2 } else { 3 });
    let mut x = x;
    x.column_mut(0).fill(1.0);
    match kind {
        // intercept + one penalized slope
        0 => DesignMatrices::from_blocks(x, vec![(1..2, vec![DMatrix::from_element(1, 1, 1.0)])]),
        // intercept + two columns under a rank-1 penalty
        1 => {
            let v = DVector::from_vec(vec![1.0, -0.5]);
            DesignMatrices::from_blocks(x, vec![(1..3, vec![&v * v.transpose()])])
        }
        // intercept + two columns under a rank-2 penalty
        _ => {
            let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
            DesignMatrices::from_blocks(x, vec![(1..3, vec![s])])
        }
    }
    .expect("valid toy design")
}

/// Autocorrelated AR(1) series with unit innovation variance.
pub fn ar1(rng: &mut ChaCha8Rng, n: usize, phi: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut v: f64 = rng.sample::<f64, _>(StandardNormal) / (1.0 - phi * phi).sqrt();
    for _ in 0..n {
        out.push(v);
        v = phi * v + rng.sample::<f64, _>(StandardNormal);
    }
    out
}
