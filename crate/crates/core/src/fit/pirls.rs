//! Penalized iteratively re-weighted least squares.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::Family;
use crate::error::{Error, Result};
use crate::linalg;

pub const MAX_ITERATIONS: usize = 100;
pub const MAX_HALVINGS: usize = 30;
pub const TOLERANCE: f64 = 1e-8;
const RIDGE_FRACTION: f64 = 1e-8;
/// |η| beyond which a logit fit is treated as separated (μ within ~1e-8 of 0 or 1).
const SEPARATION_ETA: f64 = 18.0;

#[derive(Debug, Clone)]
pub struct PirlsResult {
    pub beta_hat: DVector<f64>,
    /// Final IRLS weights, the diagonal of W.
    pub weights: DVector<f64>,
    pub deviance: f64,
    /// `l(β̂) − ½ β̂ᵀ Sλ β̂` at unit scale.
    pub penalized_ll: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the normal equations needed a ridge to factorize.
    pub ridge_applied: bool,
    /// Penalized deviance after each accepted iteration.
    pub trace: Vec<f64>,
}

/// Cholesky of `h`, falling back to `h + 1e-8·trace(h)·I`.
const PIVOT_FLOOR: f64 = 1e-14;

pub(crate) fn guarded_cholesky(h: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, bool)> {
    if let Some(c) = Cholesky::new(h.clone()) {
        // A pivot at rounding level relative to its own diagonal entry means the
        // factorization of a singular matrix "succeeded". The ratio ignores scaling.
        let d = c.l_dirty().diagonal();
        let worst = d
            .iter()
            .zip(h.diagonal().iter())
            .map(|(l, hii)| l * l / hii.abs().max(f64::MIN_POSITIVE))
            .fold(f64::INFINITY, f64::min);
        if worst > PIVOT_FLOOR {
            return Ok((c, false));
        }
    }
    let ridge = RIDGE_FRACTION * h.trace().abs().max(f64::MIN_POSITIVE);
    let mut hr = h.clone();
    for i in 0..hr.nrows() {
        hr[(i, i)] += ridge;
    }
    match Cholesky::new(hr) {
        Some(c) => Ok((c, true)),
        None => Err(Error::Singular {
            context: "penalized normal equations".into(),
            condition: linalg::condition_estimate(h),
        }),
    }
}

fn xt_w_x(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (i, &wi) in w.iter().enumerate() {
        xw.row_mut(i).scale_mut(wi);
    }
    x.transpose() * xw
}

fn deviance(family: Family, y: &DVector<f64>, eta: &DVector<f64>) -> f64 {
    y.iter()
        .zip(eta.iter())
        .map(|(&yi, &e)| family.unit_deviance(yi, family.clamp_mu(family.inverse_link(e))))
        .sum()
}

fn log_lik(family: Family, y: &DVector<f64>, eta: &DVector<f64>) -> f64 {
    y.iter()
        .zip(eta.iter())
        .map(|(&yi, &e)| family.log_likelihood(yi, family.inverse_link(e), 1.0))
        .sum()
}

/// Working weights and working response at linear predictor `eta`.
fn working(family: Family, y: &DVector<f64>, eta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = y.len();
    let mut w = DVector::zeros(n);
    let mut z = DVector::zeros(n);
    for i in 0..n {
        let mu = family.clamp_mu(family.inverse_link(eta[i]));
        let d = family.mu_eta(eta[i]).max(1e-300);
        w[i] = d * d / family.variance(mu);
        z[i] = eta[i] + (y[i] - mu) / d;
    }
    (w, z)
}

/// IRLS weights at coefficient vector `beta`.
pub fn irls_weights(family: Family, x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
    working(family, y, &(x * beta)).0
}

/// Maximizes `l(β) − ½ βᵀ Sλ β` for fixed smoothing parameters.
pub fn pirls(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    family: Family,
    s_lambda: &DMatrix<f64>,
    beta_init: Option<&DVector<f64>>,
) -> Result<PirlsResult> {
    let p = x.ncols();
    if x.nrows() != y.len() || s_lambda.shape() != (p, p) {
        return Err(Error::Parameter("pirls: inconsistent dimensions".into()));
    }
    if family == Family::Gaussian {
        return gaussian(x, y, s_lambda);
    }

    let pen = |b: &DVector<f64>| b.dot(&(s_lambda * b));
    let mut ridge_applied = false;
    let mut trace = Vec::new();

    let (mut beta, mut eta, mut pdev_old) = match beta_init {
        Some(b) => {
            let eta = x * b;
            let pd = deviance(family, y, &eta) + pen(b);
            (b.clone(), eta, pd)
        }
        None => {
            let eta = y.map(|v| family.link(family.initial_mu(v)));
            (DVector::zeros(p), eta, f64::INFINITY)
        }
    };
    let have_beta = beta_init.is_some();

    for iter in 1..=MAX_ITERATIONS {
        let (w, z) = working(family, y, &eta);
        let h = xt_w_x(x, &w) + s_lambda;
        let (chol, ridged) = guarded_cholesky(&h)?;
        ridge_applied |= ridged;
        let rhs = x.transpose() * w.component_mul(&z);
        let mut beta_new = chol.solve(&rhs);
        let mut eta_new = x * &beta_new;
        let mut pdev = deviance(family, y, &eta_new) + pen(&beta_new);

        if (iter > 1 || have_beta) && !(pdev <= pdev_old) {
            let mut halvings = 0;
            while !(pdev <= pdev_old) {
                halvings += 1;
                if halvings > MAX_HALVINGS {
                    trace.push(pdev);
                    return Err(Error::PirlsDivergence {
                        iterations: iter,
                        reason: "step halving failed to reduce the penalized deviance".into(),
                        trace,
                    });
                }
                beta_new = (&beta + &beta_new) * 0.5;
                eta_new = x * &beta_new;
                pdev = deviance(family, y, &eta_new) + pen(&beta_new);
            }
        }
        if !pdev.is_finite() || beta_new.iter().any(|v| !v.is_finite()) {
            trace.push(pdev);
            return Err(Error::PirlsDivergence {
                iterations: iter,
                reason: "non-finite iterate".into(),
                trace,
            });
        }
        trace.push(pdev);
        let change = (pdev_old - pdev).abs();
        beta = beta_new;
        eta = eta_new;
        let done = pdev_old.is_finite() && change < TOLERANCE * (pdev.abs() + 0.1);
        pdev_old = pdev;
        if done {
            if family == Family::Binomial && eta.iter().any(|e| e.abs() > SEPARATION_ETA) {
                return Err(Error::PirlsDivergence {
                    iterations: iter,
                    reason: "fitted probabilities numerically 0 or 1 (separation)".into(),
                    trace,
                });
            }
            let weights = working(family, y, &eta).0;
            let deviance = deviance(family, y, &eta);
            let penalized_ll = log_lik(family, y, &eta) - 0.5 * pen(&beta);
            return Ok(PirlsResult {
                beta_hat: beta,
                weights,
                deviance,
                penalized_ll,
                iterations: iter,
                converged: true,
                ridge_applied,
                trace,
            });
        }
    }
    Err(Error::PirlsDivergence {
        iterations: MAX_ITERATIONS,
        reason: "iteration limit reached (possible separation)".into(),
        trace,
    })
}

/// Closed-form penalized least squares.
fn gaussian(x: &DMatrix<f64>, y: &DVector<f64>, s_lambda: &DMatrix<f64>) -> Result<PirlsResult> {
    let h = x.transpose() * x + s_lambda;
    let (chol, ridge_applied) = guarded_cholesky(&h)?;
    let beta = chol.solve(&(x.transpose() * y));
    Ok(gaussian_result(x, y, s_lambda, beta, ridge_applied))
}

pub(crate) fn gaussian_result(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    s_lambda: &DMatrix<f64>,
    beta: DVector<f64>,
    ridge_applied: bool,
) -> PirlsResult {
    let resid = y - x * &beta;
    let rss = resid.norm_squared();
    let bsb = beta.dot(&(s_lambda * &beta));
    let n = y.len() as f64;
    PirlsResult {
        weights: DVector::from_element(y.len(), 1.0),
        deviance: rss,
        penalized_ll: -0.5 * rss - 0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * bsb,
        iterations: 1,
        converged: true,
        ridge_applied,
        trace: vec![rss + bsb],
        beta_hat: beta,
    }
}

pub(crate) fn weighted_cross_product(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    xt_w_x(x, w)
}
