//! Posterior covariance of the coefficients, posterior simulation and
//! pointwise credible bands.
//!
//! Conditional on λ the coefficients are `N(β̂, V)` with
//! `V = (XᵀWX + Sλ)⁻¹ φ`. The corrected covariance adds a first-order term
//! for smoothing parameter uncertainty, `J V_ρ Jᵀ`, where `J = ∂β̂/∂ρ` and
//! `V_ρ` is the inverse Hessian of the REML criterion.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::fit::{FittedModel, HESSIAN_STEP};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovKind {
    #[serde(rename = "eb")]
    Eb,
    #[serde(rename = "corrected")]
    EbCorrected,
    #[serde(rename = "fb")]
    FbEmpirical,
}

#[derive(Debug, Clone)]
pub struct PosteriorCov {
    pub v: DMatrix<f64>,
    pub kind: CovKind,
    /// Diagnostics raised during construction (e.g. a projected Hessian).
    pub flags: Vec<String>,
}

impl PosteriorCov {
    pub fn new(v: DMatrix<f64>, kind: CovKind) -> Self {
        PosteriorCov {
            v: linalg::symmetrize(&v),
            kind,
            flags: Vec::new(),
        }
    }

    /// Sub-matrix over a column range.
    pub fn block(&self, cols: std::ops::Range<usize>) -> DMatrix<f64> {
        self.v
            .view((cols.start, cols.start), (cols.len(), cols.len()))
            .into_owned()
    }
}

/// Empirical-Bayes covariance `(XᵀWX + Sλ)⁻¹ φ̂`.
pub fn posterior_cov(fit: &FittedModel) -> Result<PosteriorCov> {
    let h = fit.normal_matrix();
    let inv = linalg::spd_inverse(&h, "posterior precision XᵀWX + Sλ")?;
    Ok(PosteriorCov::new(inv * fit.phi_hat, CovKind::Eb))
}

/// Rise in the REML criterion that defines the edge of a plateau.
pub const EDGE_RISE: f64 = 0.5;
/// Distance from the upper bound at which ρ_m counts as infinite.
const EDGE_TOL: f64 = 1e-2;

/// `∂β̂/∂ρ` at ρ̂ by central differences, re-solving for β̂ at each perturbed ρ.
pub fn beta_jacobian(fit: &FittedModel, step: f64) -> Result<DMatrix<f64>> {
    beta_jacobian_at(fit, &fit.rho_hat, step)
}

pub fn beta_jacobian_at(fit: &FittedModel, rho: &[f64], step: f64) -> Result<DMatrix<f64>> {
    let obj = fit.objective();
    let m = rho.len();
    let p = fit.beta_hat.len();
    let mut j = DMatrix::zeros(p, m);
    for k in 0..m {
        let mut up = rho.to_vec();
        let mut down = rho.to_vec();
        up[k] += step;
        down[k] -= step;
        let bu = obj.fit_at(&up)?.beta_hat;
        let bd = obj.fit_at(&down)?.beta_hat;
        j.set_column(k, &((bu - bd) / (2.0 * step)));
    }
    Ok(j)
}

/// Covariance of ρ̂ from the REML Hessian. An indefinite Hessian is
/// projected to the nearest PSD matrix and pseudo-inverted; the returned
/// flag says so.
pub fn rho_covariance(hessian: &DMatrix<f64>) -> Result<(DMatrix<f64>, Option<String>)> {
    if hessian.nrows() == 0 {
        return Ok((DMatrix::zeros(0, 0), None));
    }
    let h = linalg::symmetrize(hessian);
    if let Some(chol) = h.clone().cholesky() {
        return Ok((linalg::symmetrize(&chol.inverse()), None));
    }
    let (proj, _) = linalg::project_psd(&h);
    let inv = linalg::sym_pseudo_inverse(&proj)?;
    Ok((
        inv,
        Some("REML Hessian not positive definite; projected to PSD and pseudo-inverted".into()),
    ))
}

/// `V + J V_ρ Jᵀ` for a supplied `V_ρ`.
pub fn corrected_cov_with(
    fit: &FittedModel,
    v_rho: &DMatrix<f64>,
    step: f64,
) -> Result<PosteriorCov> {
    let base = posterior_cov(fit)?;
    let m = fit.rho_hat.len();
    if v_rho.shape() != (m, m) {
        return Err(Error::Parameter(format!(
            "V_rho must be {m}x{m}, got {}x{}",
            v_rho.nrows(),
            v_rho.ncols()
        )));
    }
    if m == 0 {
        return Ok(PosteriorCov {
            kind: CovKind::EbCorrected,
            ..base
        });
    }
    let j = beta_jacobian(fit, step)?;
    let extra = &j * v_rho * j.transpose();
    Ok(PosteriorCov::new(&base.v + extra, CovKind::EbCorrected))
}

/// Moves each ρ_m sitting on the upper bound down to where the criterion
/// has risen by `rise`. Returns `None` when no coordinate is on the bound.
///
/// On the bound the criterion is flat, so both `∂β̂/∂ρ_m` and the curvature
/// vanish and the first-order correction says nothing. The plateau edge is
/// the nearest point where the criterion still carries information.
pub fn edge_point(fit: &FittedModel, rise: f64) -> Option<Vec<f64>> {
    let bound = fit.rho_bound;
    let obj = fit.objective();
    let mut rho = fit.rho_hat.clone();
    let mut moved = false;
    for k in 0..rho.len() {
        if rho[k] < bound - EDGE_TOL {
            continue;
        }
        let base = obj.value(&rho);
        let excess = |x: f64, rho: &[f64]| {
            let mut r = rho.to_vec();
            r[k] = x;
            obj.value(&r) - base
        };
        let (mut lo, mut hi) = (-bound, rho[k]);
        if excess(lo, &rho) <= rise {
            // Flat over the whole box; nothing to anchor on.
            continue;
        }
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if excess(mid, &rho) > rise {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        rho[k] = hi;
        moved = true;
    }
    moved.then_some(rho)
}

/// Covariance corrected for smoothing parameter uncertainty.
///
/// Coordinates of ρ̂ on the upper bound are first moved to the plateau edge
/// (see [`edge_point`]); `J` and `V_ρ` are then taken there, while `V`
/// stays at ρ̂.
pub fn corrected_cov(fit: &FittedModel) -> Result<PosteriorCov> {
    let base = posterior_cov(fit)?;
    let m = fit.rho_hat.len();
    if m == 0 {
        return Ok(PosteriorCov {
            kind: CovKind::EbCorrected,
            ..base
        });
    }
    let mut flags = Vec::new();
    let (rho, hessian) = match edge_point(fit, EDGE_RISE) {
        Some(rho) => {
            flags.push(format!("smoothing parameters on the bound evaluated at {rho:?}"));
            let obj = fit.objective();
            let h = crate::fit::fd_hessian(|r| obj.value(r), &rho, HESSIAN_STEP);
            (rho, h)
        }
        None => (fit.rho_hat.clone(), fit.rho_hessian.clone()),
    };
    let (v_rho, flag) = rho_covariance(&hessian)?;
    flags.extend(flag);
    let j = beta_jacobian_at(fit, &rho, HESSIAN_STEP)?;
    let mut out = PosteriorCov::new(&base.v + &j * v_rho * j.transpose(), CovKind::EbCorrected);
    out.flags = flags;
    Ok(out)
}

/// Rows mapping coefficients to the linear predictor at `at`.
#[derive(Debug, Clone)]
pub struct PredictionMap {
    pub lp: DMatrix<f64>,
    /// Covariate value labelling each row, when there is a single one.
    pub at: Vec<f64>,
}

impl PredictionMap {
    pub fn new(lp: DMatrix<f64>, at: Vec<f64>) -> Result<Self> {
        if !at.is_empty() && at.len() != lp.nrows() {
            return Err(Error::Parameter("prediction labels do not match rows".into()));
        }
        Ok(PredictionMap { lp, at })
    }

    /// Evenly spaced grid over a smooth term's knot range, term columns only.
    pub fn term_grid(fit: &FittedModel, term: usize, points: usize) -> Result<Self> {
        let t = &fit.design.terms[term];
        let s = t.smooth().ok_or_else(|| {
            Error::Parameter(format!("term `{}` is not a smooth", t.label))
        })?;
        let (a, b) = (s.basis.knots().first(), s.basis.knots().last());
        let at: Vec<f64> = (0..points)
            .map(|i| a + (b - a) * i as f64 / (points.max(2) - 1) as f64)
            .collect();
        let lp = fit.design.term_prediction_matrix(term, &at)?;
        PredictionMap::new(lp, at)
    }

    fn check(&self, p: usize) -> Result<()> {
        if self.lp.ncols() != p {
            return Err(Error::Parameter(format!(
                "prediction matrix has {} columns, model has {p}",
                self.lp.ncols()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DrawKind {
    Coefficients,
    LinearPredictor,
    ResponseScale,
    Summary,
}

/// Per-draw reduction applied to `y_b`.
#[derive(Clone, Default)]
pub enum Reducer {
    #[default]
    None,
    Sum,
    Mean,
    Custom(Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>),
}

impl Reducer {
    fn apply(&self, y: Vec<f64>) -> Vec<f64> {
        match self {
            Reducer::None => y,
            Reducer::Sum => vec![y.iter().sum()],
            Reducer::Mean => vec![y.iter().sum::<f64>() / y.len() as f64],
            Reducer::Custom(f) => f(&y),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    /// One row per draw.
    pub draws: DMatrix<f64>,
    pub seed: u64,
    pub kind: DrawKind,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.draws.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.nrows() == 0
    }

    pub fn mean(&self) -> DVector<f64> {
        self.draws.row_mean().transpose()
    }

    pub fn variance(&self) -> DVector<f64> {
        let b = self.draws.nrows() as f64;
        self.draws.row_variance().transpose() * (b / (b - 1.0).max(1.0))
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        sample_covariance(&self.draws)
    }

    /// Long format `draw_id,point_id,value`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["draw_id", "point_id", "value"])?;
        for (b, row) in self.draws.row_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                out.write_record(&[b.to_string(), j.to_string(), format!("{v:e}")])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Pointwise empirical quantiles, one row per probability.
    pub fn quantiles(&self, probs: &[f64]) -> DMatrix<f64> {
        let q = self.draws.ncols();
        let mut out = DMatrix::zeros(probs.len(), q);
        for c in 0..q {
            let mut col: Vec<f64> = self.draws.column(c).iter().copied().collect();
            col.sort_by(f64::total_cmp);
            for (r, &p) in probs.iter().enumerate() {
                out[(r, c)] = quantile_sorted(&col, p);
            }
        }
        out
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Unbiased sample covariance of the rows of `draws`, symmetrized.
pub fn sample_covariance(draws: &DMatrix<f64>) -> DMatrix<f64> {
    let b = draws.nrows();
    let mean = draws.row_mean();
    let mut centred = draws.clone();
    for mut row in centred.row_iter_mut() {
        row -= &mean;
    }
    let denom = (b.max(2) - 1) as f64;
    linalg::symmetrize(&(centred.transpose() * centred / denom))
}

/// Independent RNG stream for draw `b`.
pub fn draw_rng(seed: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b);
    rng
}

/// `β_b ~ N(β̂, V)` for b = 0..B, one row per draw.
pub fn simulate_coefficients(
    beta_hat: &DVector<f64>,
    cov: &PosteriorCov,
    b: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if b == 0 {
        return Err(Error::Parameter("number of draws must be at least 1".into()));
    }
    let p = beta_hat.len();
    if cov.v.shape() != (p, p) {
        return Err(Error::Parameter("covariance does not match coefficients".into()));
    }
    let factor = linalg::psd_factor(&cov.v);
    let rows: Vec<DVector<f64>> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = draw_rng(seed, i as u64);
            let z = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
            beta_hat + &factor * z
        })
        .collect();
    let mut out = DMatrix::zeros(b, p);
    for (i, r) in rows.iter().enumerate() {
        out.set_row(i, &r.transpose());
    }
    Ok(out)
}

/// Where the simulated quantity is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawScale {
    LinearPredictor,
    Response,
}

/// Simulates `β_b`, maps through `Lp` and (on the response scale) the
/// inverse link, then applies the reducer to each draw.
pub fn simulate_posterior(
    fit: &FittedModel,
    lp: &PredictionMap,
    b: usize,
    cov: &PosteriorCov,
    scale: DrawScale,
    reducer: &Reducer,
    seed: u64,
) -> Result<PosteriorDraws> {
    lp.check(fit.beta_hat.len())?;
    let betas = simulate_coefficients(&fit.beta_hat, cov, b, seed)?;
    let eta = betas * lp.lp.transpose();
    let family = fit.family;
    let rows: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .map(|i| {
            let y: Vec<f64> = eta
                .row(i)
                .iter()
                .map(|&e| match scale {
                    DrawScale::LinearPredictor => e,
                    DrawScale::Response => family.inverse_link(e),
                })
                .collect();
            reducer.apply(y)
        })
        .collect();
    let q = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != q) {
        return Err(Error::Parameter("reducer returned ragged output".into()));
    }
    let draws = DMatrix::from_fn(b, q, |i, j| rows[i][j]);
    let kind = match (reducer, scale) {
        (Reducer::None, DrawScale::LinearPredictor) => DrawKind::LinearPredictor,
        (Reducer::None, DrawScale::Response) => DrawKind::ResponseScale,
        _ => DrawKind::Summary,
    };
    Ok(PosteriorDraws { draws, seed, kind })
}

/// Pointwise band `ŝ ± z_{α/2} √v`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBand {
    pub at: Vec<f64>,
    pub fit: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub alpha: f64,
}

impl IntervalBand {
    pub fn len(&self) -> usize {
        self.fit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fit.is_empty()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    /// Band edges mapped through a monotone inverse link.
    pub fn to_response(&self, family: crate::fit::Family) -> IntervalBand {
        let g = |v: &Vec<f64>| v.iter().map(|&e| family.inverse_link(e)).collect();
        IntervalBand {
            at: self.at.clone(),
            fit: g(&self.fit),
            lo: g(&self.lo),
            hi: g(&self.hi),
            alpha: self.alpha,
        }
    }

    /// Columns `x,fit,lo,hi`; `x` is the row index when the band has no labels.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "fit", "lo", "hi"])?;
        for i in 0..self.len() {
            let x = self.at.get(i).copied().unwrap_or(i as f64);
            out.write_record(&[x, self.fit[i], self.lo[i], self.hi[i]].map(|v| format!("{v:e}")))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Fraction of points where `truth` lies inside the band.
    pub fn coverage(&self, truth: &[f64]) -> f64 {
        let inside = truth
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .filter(|(t, (l, h))| **l <= **t && **t <= **h)
            .count();
        inside as f64 / truth.len() as f64
    }
}

/// Two-sided standard normal critical value `z_{α/2}`.
pub fn normal_critical_value(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(1.0 - alpha / 2.0))
}

/// Pointwise `(1 − α)` credible band on the linear-predictor scale.
pub fn credible_band(
    fit: &FittedModel,
    lp: &PredictionMap,
    alpha: f64,
    cov: &PosteriorCov,
) -> Result<IntervalBand> {
    lp.check(fit.beta_hat.len())?;
    let z = normal_critical_value(alpha)?;
    let centre = &lp.lp * &fit.beta_hat;
    let lv = &lp.lp * &cov.v;
    let (mut lo, mut hi) = (Vec::new(), Vec::new());
    for i in 0..lp.lp.nrows() {
        let v = lv.row(i).dot(&lp.lp.row(i)).max(0.0);
        let half = z * v.sqrt();
        lo.push(centre[i] - half);
        hi.push(centre[i] + half);
    }
    Ok(IntervalBand {
        at: lp.at.clone(),
        fit: centre.iter().copied().collect(),
        lo,
        hi,
        alpha,
    })
}
