//! Laplace-approximate restricted (marginal) likelihood for smoothing parameters.
//!
//! With prior `β ~ N(0, φ Sλ⁻)` (improper flat on the penalty nullspace of
//! dimension M_p) the negative log marginal likelihood is, up to the Laplace
//! approximation,
//!
//! ```text
//! V(ρ) = −l(β̂) + β̂ᵀSλβ̂/(2φ) + ½ log|XᵀWX + Sλ| − ½ log|Sλ|₊ − (M_p/2) log(2πφ)
//! ```
//!
//! which is exact for the Gaussian identity model. There the scale is
//! profiled out, `φ̂ = (‖y − Xβ̂‖² + β̂ᵀSλβ̂) / (n − M_p)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::pirls::{self, guarded_cholesky, PirlsResult};
use super::Family;
use crate::assembly::DesignMatrices;
use crate::error::{Error, Result};
use crate::linalg;

/// How the scale parameter enters the criterion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scale {
    /// Gaussian scale maximized out analytically.
    Profiled,
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct RemlEvaluation {
    pub value: f64,
    pub phi: f64,
    pub lambdas: Vec<f64>,
    pub pirls: PirlsResult,
    /// `log|XᵀWX + Sλ|`.
    pub log_det_h: f64,
    /// `log|Sλ|₊`.
    pub log_pdet_s: f64,
}

/// Criterion bound to a design, response and family.
pub struct RemlObjective<'a> {
    design: &'a DesignMatrices,
    y: &'a DVector<f64>,
    family: Family,
    scale: Scale,
    xtx: Option<DMatrix<f64>>,
    xty: Option<DVector<f64>>,
}

impl<'a> RemlObjective<'a> {
    pub fn new(design: &'a DesignMatrices, y: &'a DVector<f64>, family: Family) -> Self {
        let (xtx, xty) = if family == Family::Gaussian {
            let xt = design.x.transpose();
            (Some(&xt * &design.x), Some(xt * y))
        } else {
            (None, None)
        };
        RemlObjective {
            design,
            y,
            family,
            scale: if family.scale_known() {
                Scale::Fixed(1.0)
            } else {
                Scale::Profiled
            },
            xtx,
            xty,
        }
    }

    /// Holds the scale fixed instead of profiling it.
    pub fn with_fixed_scale(mut self, phi: f64) -> Self {
        self.scale = Scale::Fixed(phi);
        self
    }

    pub fn design(&self) -> &DesignMatrices {
        self.design
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn lambdas(rho: &[f64]) -> Vec<f64> {
        rho.iter().map(|r| r.exp()).collect()
    }

    /// Solves for β̂ at log smoothing parameters `rho`.
    pub fn fit_at(&self, rho: &[f64]) -> Result<PirlsResult> {
        Ok(self.evaluate(rho)?.pirls)
    }

    pub fn evaluate(&self, rho: &[f64]) -> Result<RemlEvaluation> {
        if rho.len() != self.design.num_penalties() {
            return Err(Error::Parameter(format!(
                "expected {} log smoothing parameters, got {}",
                self.design.num_penalties(),
                rho.len()
            )));
        }
        if rho.iter().any(|r| !r.is_finite()) {
            return Err(Error::Parameter("log smoothing parameters must be finite".into()));
        }
        let lambdas = Self::lambdas(rho);
        let s = self.design.assemble_penalty(&lambdas)?;
        let log_pdet_s = self.design.log_pdet_penalty(&lambdas);
        let n = self.y.len() as f64;
        let m_p = self.design.nullspace_dim_total as f64;

        if let (Some(xtx), Some(xty)) = (&self.xtx, &self.xty) {
            let h = xtx + &s;
            let (chol, ridged) = guarded_cholesky(&h)?;
            let beta = chol.solve(xty);
            let log_det_h = linalg::chol_logdet(&chol);
            let fit = pirls::gaussian_result(&self.design.x, self.y, &s, beta, ridged);
            let bsb = fit.beta_hat.dot(&(&s * &fit.beta_hat));
            let dp = fit.deviance + bsb;
            let phi = match self.scale {
                Scale::Fixed(phi) => phi,
                Scale::Profiled => {
                    if n <= m_p {
                        return Err(Error::Data(format!(
                            "need more observations ({n}) than unpenalized dimensions ({m_p})"
                        )));
                    }
                    (dp / (n - m_p)).max(f64::MIN_POSITIVE)
                }
            };
            let value = dp / (2.0 * phi) + 0.5 * (n - m_p) * (2.0 * PI * phi).ln()
                + 0.5 * log_det_h
                - 0.5 * log_pdet_s;
            return Ok(RemlEvaluation {
                value,
                phi,
                lambdas,
                pirls: fit,
                log_det_h,
                log_pdet_s,
            });
        }

        let phi = match self.scale {
            Scale::Fixed(phi) => phi,
            Scale::Profiled => 1.0,
        };
        let fit = pirls::pirls(&self.design.x, self.y, self.family, &s, None)?;
        let h = pirls::weighted_cross_product(&self.design.x, &fit.weights) + &s;
        let (chol, _) = guarded_cholesky(&h)?;
        let log_det_h = linalg::chol_logdet(&chol);
        let eta = &self.design.x * &fit.beta_hat;
        let ll: f64 = self
            .y
            .iter()
            .zip(eta.iter())
            .map(|(&yi, &e)| self.family.log_likelihood(yi, self.family.inverse_link(e), phi))
            .sum();
        let bsb = fit.beta_hat.dot(&(&s * &fit.beta_hat));
        let value = -ll + bsb / (2.0 * phi) + 0.5 * log_det_h
            - 0.5 * log_pdet_s
            - 0.5 * m_p * (2.0 * PI * phi).ln();
        Ok(RemlEvaluation {
            value,
            phi,
            lambdas,
            pirls: fit,
            log_det_h,
            log_pdet_s,
        })
    }

    /// Criterion value, +∞ where evaluation fails.
    pub fn value(&self, rho: &[f64]) -> f64 {
        self.evaluate(rho).map_or(f64::INFINITY, |e| e.value)
    }
}

/// Negative log (Laplace-approximate) restricted likelihood at `rho`.
pub fn reml_criterion(
    rho: &[f64],
    design: &DesignMatrices,
    y: &DVector<f64>,
    family: Family,
) -> Result<f64> {
    Ok(RemlObjective::new(design, y, family).evaluate(rho)?.value)
}
