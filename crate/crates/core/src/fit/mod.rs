//! Penalized likelihood fitting with REML smoothing parameter selection.
//!
//! The inner loop ([`pirls`]) finds β̂ for fixed λ; the outer loop minimizes
//! the REML criterion over ρ = log λ with a multistart Nelder–Mead search on
//! the box [−12, 12]^M. The upper edge of the box stands in for an infinite
//! smoothing parameter.

mod family;
pub mod nelder_mead;
pub mod pirls;
pub mod reml;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use family::Family;
pub use pirls::{pirls, PirlsResult};
pub use reml::{reml_criterion, RemlEvaluation, RemlObjective, Scale};

use crate::assembly::{build_design, DesignMatrices, ModelSpec};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use nelder_mead::{minimize, NelderMeadOptions};

pub const RHO_BOUND: f64 = 12.0;
pub const HESSIAN_STEP: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct RemlOptions {
    pub seed: u64,
    /// Number of Nelder–Mead starts; the first is scale-informed, the rest uniform on the box.
    pub starts: usize,
    pub rho_bound: f64,
    pub size_tol: f64,
    pub hessian_step: f64,
    pub max_evals: usize,
}

impl Default for RemlOptions {
    fn default() -> Self {
        RemlOptions {
            seed: 0,
            starts: 5,
            rho_bound: RHO_BOUND,
            size_tol: 1e-6,
            hessian_step: HESSIAN_STEP,
            max_evals: 20_000,
        }
    }
}

impl RemlOptions {
    pub fn with_seed(seed: u64) -> Self {
        RemlOptions {
            seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Edf {
    pub per_term: Vec<f64>,
    pub total: f64,
}

/// A model fitted by REML.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub spec: Option<ModelSpec>,
    pub family: Family,
    pub design: DesignMatrices,
    pub y: DVector<f64>,
    pub beta_hat: DVector<f64>,
    pub rho_hat: Vec<f64>,
    pub lambda_hat: Vec<f64>,
    pub phi_hat: f64,
    pub reml_value: f64,
    pub rho_hessian: DMatrix<f64>,
    /// Half-width of the box ρ was optimized over.
    pub rho_bound: f64,
    pub weights: DVector<f64>,
    pub edf_per_term: Vec<f64>,
    pub edf_total: f64,
    pub pirls: PirlsResult,
    pub seed: u64,
    pub warnings: Vec<String>,
    /// Best criterion value reached from each start.
    pub start_values: Vec<f64>,
}

impl FittedModel {
    pub fn fitted_linear_predictor(&self) -> DVector<f64> {
        &self.design.x * &self.beta_hat
    }

    pub fn fitted_values(&self) -> DVector<f64> {
        self.fitted_linear_predictor()
            .map(|e| self.family.inverse_link(e))
    }

    pub fn s_lambda(&self) -> DMatrix<f64> {
        self.design
            .assemble_penalty(&self.lambda_hat)
            .expect("fitted smoothing parameters are valid")
    }

    /// `XᵀWX + Sλ` at the fitted values.
    pub fn normal_matrix(&self) -> DMatrix<f64> {
        pirls::weighted_cross_product(&self.design.x, &self.weights) + self.s_lambda()
    }

    pub fn objective(&self) -> RemlObjective<'_> {
        RemlObjective::new(&self.design, &self.y, self.family)
    }

    pub fn term_edf(&self, label: &str) -> Option<f64> {
        self.design.term_index(label).map(|t| self.edf_per_term[t])
    }
}

/// Effective degrees of freedom: trace of `(XᵀWX + Sλ)⁻¹XᵀWX`, in total
/// and summed over each term's columns.
pub fn edf(design: &DesignMatrices, weights: &DVector<f64>, lambdas: &[f64]) -> Result<Edf> {
    let xtwx = pirls::weighted_cross_product(&design.x, weights);
    let h = &xtwx + design.assemble_penalty(lambdas)?;
    let (chol, _) = pirls::guarded_cholesky(&h)?;
    let f = chol.solve(&xtwx);
    let per_term = design
        .terms
        .iter()
        .map(|t| t.cols.clone().map(|c| f[(c, c)]).sum())
        .collect();
    Ok(Edf {
        per_term,
        total: f.trace(),
    })
}

/// Scale-informed starting point: `log(tr(XᵀX_block) / tr(S_m))` per penalty.
fn initial_rho(design: &DesignMatrices, bound: f64) -> Vec<f64> {
    design
        .penalties
        .iter()
        .map(|pen| {
            let xb = design.x.columns(pen.cols.start, pen.cols.len());
            let data_scale: f64 = xb.iter().map(|v| v * v).sum();
            let pen_scale = pen.block.trace();
            if data_scale > 0.0 && pen_scale > 0.0 {
                (data_scale / pen_scale).ln().clamp(-bound, bound)
            } else {
                0.0
            }
        })
        .collect()
}

/// Central finite-difference Hessian of `f` at `x`.
pub fn fd_hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> DMatrix<f64> {
    let m = x.len();
    let f0 = f(x);
    let at = |shifts: &[(usize, f64)]| {
        let mut p = x.to_vec();
        for &(i, d) in shifts {
            p[i] += d;
        }
        f(&p)
    };
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        out[(i, i)] = (at(&[(i, h)]) - 2.0 * f0 + at(&[(i, -h)])) / (h * h);
        for j in 0..i {
            let v = (at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)])
                + at(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Minimizes the REML criterion over ρ ∈ [−bound, bound]^M and assembles
/// the fitted model at the optimum.
pub fn optimize_reml(
    design: DesignMatrices,
    y: DVector<f64>,
    family: Family,
    options: &RemlOptions,
) -> Result<FittedModel> {
    let m = design.num_penalties();
    let mut warnings = Vec::new();
    let (rho_hat, start_values) = {
        let obj = RemlObjective::new(&design, &y, family);
        if m == 0 {
            (Vec::new(), vec![obj.evaluate(&[])?.value])
        } else {
            let bound = options.rho_bound;
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            let mut starts = vec![initial_rho(&design, bound)];
            for _ in 1..options.starts.max(1) {
                starts.push((0..m).map(|_| rng.random_range(-bound..bound)).collect());
            }
            let nm = NelderMeadOptions {
                lower: -bound,
                upper: bound,
                initial_step: 2.0,
                size_tol: options.size_tol,
                max_evals: options.max_evals,
            };
            let runs: Vec<_> = starts
                .par_iter()
                .map(|s| minimize(|r| obj.value(r), s, &nm))
                .collect();
            let start_values: Vec<f64> = runs.iter().map(|r| r.value).collect();
            let best = runs
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
                .map(|(_, r)| r.clone())
                .expect("at least one start");
            if !best.value.is_finite() {
                return Err(Error::OptimizationFailed {
                    reason: "criterion could not be evaluated from any start".into(),
                    trace: start_values,
                });
            }
            // Restart once from the best point to guard against a collapsed simplex.
            let polished = minimize(
                |r| obj.value(r),
                &best.x,
                &NelderMeadOptions {
                    initial_step: 0.5,
                    ..nm
                },
            );
            let chosen = if polished.value <= best.value {
                polished
            } else {
                best
            };
            if !chosen.converged {
                warnings.push("Nelder-Mead stopped at the evaluation limit".into());
            }
            (chosen.x, start_values)
        }
    };

    assemble_fit(design, y, family, options, rho_hat, start_values, warnings)
}

/// Fitted model at given log smoothing parameters, without optimizing.
/// Refitting at a stored `rho_hat` reproduces the original fit exactly.
pub fn refit_at(
    design: DesignMatrices,
    y: DVector<f64>,
    family: Family,
    rho: &[f64],
    options: &RemlOptions,
) -> Result<FittedModel> {
    if rho.len() != design.num_penalties() {
        return Err(Error::Parameter(format!(
            "expected {} log smoothing parameters, got {}",
            design.num_penalties(),
            rho.len()
        )));
    }
    assemble_fit(design, y, family, options, rho.to_vec(), Vec::new(), Vec::new())
}

fn assemble_fit(
    design: DesignMatrices,
    y: DVector<f64>,
    family: Family,
    options: &RemlOptions,
    rho_hat: Vec<f64>,
    start_values: Vec<f64>,
    mut warnings: Vec<String>,
) -> Result<FittedModel> {
    let m = rho_hat.len();
    let obj = RemlObjective::new(&design, &y, family);
    let at_opt = obj.evaluate(&rho_hat)?;
    let rho_hessian = if m == 0 {
        DMatrix::zeros(0, 0)
    } else {
        fd_hessian(|r| obj.value(r), &rho_hat, options.hessian_step)
    };
    if at_opt.pirls.ridge_applied {
        warnings.push("ridge guard applied to the penalized normal equations".into());
    }
    let weights = at_opt.pirls.weights.clone();
    let e = edf(&design, &weights, &at_opt.lambdas)?;
    let reml_value = at_opt.value;
    let phi_hat = at_opt.phi;
    drop(obj);
    Ok(FittedModel {
        spec: None,
        family,
        beta_hat: at_opt.pirls.beta_hat.clone(),
        lambda_hat: at_opt.lambdas.clone(),
        rho_hat,
        phi_hat,
        reml_value,
        rho_hessian,
        rho_bound: options.rho_bound,
        weights,
        edf_per_term: e.per_term,
        edf_total: e.total,
        pirls: at_opt.pirls,
        seed: options.seed,
        warnings,
        start_values,
        design,
        y,
    })
}

/// Builds the design for `spec` on `data` and fits it by REML.
pub fn fit_gam(data: &Dataset, spec: &ModelSpec, options: &RemlOptions) -> Result<FittedModel> {
    let design = build_design(data, spec)?;
    let y = DVector::from_column_slice(data.column(&spec.response)?);
    let mut fit = optimize_reml(design, y, spec.family, options)?;
    fit.spec = Some(spec.clone());
    Ok(fit)
}
