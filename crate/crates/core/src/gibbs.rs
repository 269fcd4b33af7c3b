//! Fully Bayesian fitting of Gaussian additive models by Gibbs sampling.
//!
//! The hierarchy is
//!
//! ```text
//! y | β, τ   ~ N(Xβ, τ⁻¹ I)
//! β | λ      ∝ exp(−βᵀSλβ / 2)
//! λ_m        ~ Gamma(a_λ, b_λ)
//! τ          ~ Gamma(a_τ, b_τ)
//! ```
//!
//! so every full conditional is conjugate. Unpenalized columns (the
//! intercept) get a flat prior. For the β prior to be proper every smooth
//! must be fully penalized, i.e. built in shrinkage or double-penalty mode.
//!
//! Vague gamma priors on precisions are not innocuous: posterior summaries
//! for weakly identified terms can move noticeably with `a_λ` and `b_λ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::assembly::DesignMatrices;
use crate::error::{Error, Result};
use crate::fit::{Family, FittedModel};
use crate::linalg;
use crate::posterior::{draw_rng, quantile_sorted, sample_covariance, CovKind, PosteriorCov};

pub const MIN_COV_DRAWS: usize = 100;

/// Gamma prior by shape and rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        let p = GammaPrior { shape, rate };
        p.validate("prior")?;
        Ok(p)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.shape > 0.0 && self.rate > 0.0 && self.shape.is_finite() && self.rate.is_finite())
        {
            return Err(Error::Parameter(format!(
                "{what} shape and rate must be positive, got ({}, {})",
                self.shape, self.rate
            )));
        }
        Ok(())
    }

    fn ln_pdf(&self, x: f64) -> f64 {
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln()
            - self.rate * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateOrder {
    #[default]
    BetaLambdaTau,
    BetaTauLambda,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub lambda_prior: GammaPrior,
    pub tau_prior: GammaPrior,
    #[serde(default)]
    pub order: UpdateOrder,
    /// Point-mass smoothing parameters; the λ updates are skipped.
    #[serde(default)]
    pub fixed_lambdas: Option<Vec<f64>>,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            iterations: 10_000,
            burn_in: 2_000,
            thin: 1,
            seed: 0,
            lambda_prior: GammaPrior {
                shape: 0.05,
                rate: 0.005,
            },
            tau_prior: GammaPrior {
                shape: 0.001,
                rate: 0.001,
            },
            order: UpdateOrder::BetaLambdaTau,
            fixed_lambdas: None,
        }
    }
}

impl GibbsConfig {
    pub fn with_seed(seed: u64) -> Self {
        GibbsConfig {
            seed,
            ..Default::default()
        }
    }

    /// Point masses matching an empirical-Bayes fit. The sampler's prior
    /// precision is not scaled by the noise variance, so λ̂ is divided by φ̂.
    pub fn point_mass_at(mut self, fit: &FittedModel) -> Self {
        self.fixed_lambdas = Some(fit.lambda_hat.iter().map(|l| l / fit.phi_hat).collect());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::Parameter(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::Parameter("thin must be at least 1".into()));
        }
        self.lambda_prior.validate("lambda prior")?;
        self.tau_prior.validate("tau prior")?;
        if let Some(l) = &self.fixed_lambdas {
            if l.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::Parameter("fixed smoothing parameters must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
    pub ess: f64,
    /// Split-chain potential scale reduction; `None` for a constant chain.
    pub split_rhat: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GibbsChains {
    /// One row per retained draw.
    pub beta: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    pub sigma2: Vec<f64>,
    pub diagnostics: Vec<ParameterSummary>,
    pub seed: u64,
    /// Shape of each λ_m full conditional, `a_λ + rank(S_m)/2`.
    pub lambda_shapes: Vec<f64>,
}

impl GibbsChains {
    pub fn len(&self) -> usize {
        self.sigma2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma2.is_empty()
    }

    pub fn beta_mean(&self) -> DVector<f64> {
        self.beta.row_mean().transpose()
    }

    /// Named columns in the order `beta[j]`, `lambda[m]`, `sigma2`.
    pub fn parameters(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        for j in 0..self.beta.ncols() {
            out.push((format!("beta[{j}]"), self.beta.column(j).iter().copied().collect()));
        }
        for m in 0..self.lambda.ncols() {
            out.push((format!("lambda[{m}]"), self.lambda.column(m).iter().copied().collect()));
        }
        out.push(("sigma2".into(), self.sigma2.clone()));
        out
    }

    /// Long-format CSV `draw,parameter,value`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["draw", "parameter", "value"])?;
        let params = self.parameters();
        for d in 0..self.len() {
            for (name, vals) in &params {
                wtr.write_record([d.to_string(), name.clone(), vals[d].to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the long format written by [`GibbsChains::write_csv`]. The seed
    /// and conditional shapes are not stored there and come back as 0 and empty.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<GibbsChains> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut beta: Vec<Vec<f64>> = Vec::new();
        let mut lambda: Vec<Vec<f64>> = Vec::new();
        let mut sigma2: Vec<f64> = Vec::new();
        let index = |name: &str, prefix: &str| -> Option<usize> {
            name.strip_prefix(prefix)?.strip_suffix(']')?.parse().ok()
        };
        let put = |rows: &mut Vec<Vec<f64>>, d: usize, j: usize, v: f64| {
            if rows.len() <= d {
                rows.resize(d + 1, Vec::new());
            }
            if rows[d].len() <= j {
                rows[d].resize(j + 1, f64::NAN);
            }
            rows[d][j] = v;
        };
        for rec in rdr.records() {
            let rec = rec?;
            let bad = || Error::Data(format!("malformed chain row {:?}", rec.iter().collect::<Vec<_>>()));
            let d: usize = rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let name = rec.get(1).ok_or_else(bad)?;
            let v: f64 = rec.get(2).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            if let Some(j) = index(name, "beta[") {
                put(&mut beta, d, j, v);
            } else if let Some(m) = index(name, "lambda[") {
                put(&mut lambda, d, m, v);
            } else if name == "sigma2" {
                if sigma2.len() <= d {
                    sigma2.resize(d + 1, f64::NAN);
                }
                sigma2[d] = v;
            } else {
                return Err(bad());
            }
        }
        let n = sigma2.len();
        let to_matrix = |rows: &[Vec<f64>]| -> Result<DMatrix<f64>> {
            let c = rows.first().map_or(0, Vec::len);
            if rows.len() != n && !(rows.is_empty() && c == 0) || rows.iter().any(|r| r.len() != c) {
                return Err(Error::Data("chains file has ragged draws".into()));
            }
            Ok(DMatrix::from_fn(n, c, |i, j| rows[i][j]))
        };
        let beta = to_matrix(&beta)?;
        let lambda = if lambda.is_empty() { DMatrix::zeros(n, 0) } else { to_matrix(&lambda)? };
        if beta.iter().chain(lambda.iter()).chain(sigma2.iter()).any(|v| v.is_nan()) {
            return Err(Error::Data("chains file has missing entries".into()));
        }
        let mut chains = GibbsChains {
            beta,
            lambda,
            sigma2,
            diagnostics: Vec::new(),
            seed: 0,
            lambda_shapes: Vec::new(),
        };
        chains.diagnostics = chain_diagnostics(&chains);
        Ok(chains)
    }

    /// JSON summary: seed, retained draw count and per-parameter summaries.
    pub fn write_summary_json<W: std::io::Write>(&self, w: W) -> Result<()> {
        let summary = serde_json::json!({
            "seed": self.seed,
            "draws": self.len(),
            "lambda_shapes": self.lambda_shapes,
            "parameters": self.diagnostics,
        });
        serde_json::to_writer_pretty(w, &summary)?;
        Ok(())
    }

    /// Concatenates chains and recomputes diagnostics on the pooled draws.
    pub fn merge(chains: Vec<GibbsChains>) -> Result<GibbsChains> {
        let first = chains
            .first()
            .ok_or_else(|| Error::Parameter("no chains to merge".into()))?;
        let (p, m) = (first.beta.ncols(), first.lambda.ncols());
        let total: usize = chains.iter().map(GibbsChains::len).sum();
        let mut beta = DMatrix::zeros(total, p);
        let mut lambda = DMatrix::zeros(total, m);
        let mut sigma2 = Vec::with_capacity(total);
        let mut row = 0;
        for c in &chains {
            beta.view_mut((row, 0), (c.len(), p)).copy_from(&c.beta);
            lambda.view_mut((row, 0), (c.len(), m)).copy_from(&c.lambda);
            sigma2.extend_from_slice(&c.sigma2);
            row += c.len();
        }
        let mut merged = GibbsChains {
            beta,
            lambda,
            sigma2,
            diagnostics: Vec::new(),
            seed: first.seed,
            lambda_shapes: first.lambda_shapes.clone(),
        };
        merged.diagnostics = chain_diagnostics(&merged);
        Ok(merged)
    }
}

fn check_design(design: &DesignMatrices, family: Family) -> Result<()> {
    if family != Family::Gaussian {
        return Err(Error::UnsupportedFamily(format!(
            "Gibbs sampling needs a gaussian response, got {family}"
        )));
    }
    for t in &design.terms {
        if let Some(s) = t.smooth() {
            if !s.layout.mode.fully_penalized() {
                return Err(Error::Parameter(format!(
                    "term `{}` has an improper prior; use shrinkage or double-penalty mode",
                    t.label
                )));
            }
        }
    }
    Ok(())
}

struct Sampler<'a> {
    design: &'a DesignMatrices,
    y: &'a DVector<f64>,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    penalties: Vec<DMatrix<f64>>,
    config: &'a GibbsConfig,
}

impl Sampler<'_> {
    fn draw_beta(&self, lambdas: &[f64], tau: f64, rng: &mut ChaCha8Rng) -> Result<DVector<f64>> {
        let mut prec = &self.xtx * tau;
        for (l, s) in lambdas.iter().zip(&self.penalties) {
            prec += s * *l;
        }
        let chol = linalg::cholesky(&prec, "beta full-conditional precision")?;
        let mean = chol.solve(&(&self.xty * tau));
        let z = DVector::from_fn(self.xty.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        // β = mean + L⁻ᵀ z has covariance (LLᵀ)⁻¹.
        let lt = chol.l().transpose();
        let step = lt
            .solve_upper_triangular(&z)
            .expect("Cholesky factor has a positive diagonal");
        Ok(mean + step)
    }

    fn draw_lambdas(&self, beta: &DVector<f64>, shapes: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let prior = self.config.lambda_prior;
        self.penalties
            .iter()
            .zip(shapes)
            .map(|(s, &shape)| {
                let rate = prior.rate + 0.5 * beta.dot(&(s * beta));
                gamma_draw(shape, rate, rng)
            })
            .collect()
    }

    fn draw_tau(&self, beta: &DVector<f64>, rng: &mut ChaCha8Rng) -> f64 {
        let n = self.y.len() as f64;
        let rss = (self.y - &self.design.x * beta).norm_squared();
        let prior = self.config.tau_prior;
        gamma_draw(prior.shape + 0.5 * n, prior.rate + 0.5 * rss, rng)
    }
}

fn gamma_draw(shape: f64, rate: f64, rng: &mut ChaCha8Rng) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters");
    // Tiny shapes can underflow to zero; keep the state strictly positive.
    g.sample(rng).max(f64::MIN_POSITIVE)
}

/// Runs one chain from the configured seed.
pub fn gibbs_fit(
    design: &DesignMatrices,
    y: &DVector<f64>,
    family: Family,
    config: &GibbsConfig,
) -> Result<GibbsChains> {
    run_chain(design, y, family, config, 0)
}

/// Runs `chains` chains concurrently on streams `0..chains` of the seed and
/// pools the draws.
pub fn gibbs_fit_chains(
    design: &DesignMatrices,
    y: &DVector<f64>,
    family: Family,
    config: &GibbsConfig,
    chains: usize,
) -> Result<GibbsChains> {
    let runs: Result<Vec<_>> = (0..chains.max(1) as u64)
        .into_par_iter()
        .map(|c| run_chain(design, y, family, config, c))
        .collect();
    GibbsChains::merge(runs?)
}

fn run_chain(
    design: &DesignMatrices,
    y: &DVector<f64>,
    family: Family,
    config: &GibbsConfig,
    stream: u64,
) -> Result<GibbsChains> {
    config.validate()?;
    check_design(design, family)?;
    if y.len() != design.nrows() {
        return Err(Error::Data(format!(
            "response has {} rows, design has {}",
            y.len(),
            design.nrows()
        )));
    }
    let m = design.num_penalties();
    if let Some(fixed) = &config.fixed_lambdas {
        if fixed.len() != m {
            return Err(Error::Parameter(format!(
                "expected {m} fixed smoothing parameters, got {}",
                fixed.len()
            )));
        }
    }
    let xt = design.x.transpose();
    let sampler = Sampler {
        design,
        y,
        xtx: &xt * &design.x,
        xty: &xt * y,
        penalties: design.penalty_matrices(),
        config,
    };
    let shapes: Vec<f64> = design
        .penalties
        .iter()
        .map(|p| config.lambda_prior.shape + 0.5 * p.rank as f64)
        .collect();

    let mut rng = draw_rng(config.seed, stream);
    let mut lambdas = config.fixed_lambdas.clone().unwrap_or_else(|| vec![1.0; m]);
    let var_y = {
        let mean = y.mean();
        y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len().max(2) - 1) as f64
    };
    let mut tau = if var_y > 0.0 { 1.0 / var_y } else { 1.0 };
    let p = design.ncols();
    let keep = config.retained();
    let mut beta_out = DMatrix::zeros(keep, p);
    let mut lambda_out = DMatrix::zeros(keep, m);
    let mut sigma2 = Vec::with_capacity(keep);

    let mut row = 0;
    for it in 0..config.iterations {
        let beta = sampler.draw_beta(&lambdas, tau, &mut rng)?;
        let update_lambda = config.fixed_lambdas.is_none();
        match config.order {
            UpdateOrder::BetaLambdaTau => {
                if update_lambda {
                    lambdas = sampler.draw_lambdas(&beta, &shapes, &mut rng);
                }
                tau = sampler.draw_tau(&beta, &mut rng);
            }
            UpdateOrder::BetaTauLambda => {
                tau = sampler.draw_tau(&beta, &mut rng);
                if update_lambda {
                    lambdas = sampler.draw_lambdas(&beta, &shapes, &mut rng);
                }
            }
        }
        if it >= config.burn_in && (it - config.burn_in) % config.thin == 0 {
            beta_out.set_row(row, &beta.transpose());
            for (j, l) in lambdas.iter().enumerate() {
                lambda_out[(row, j)] = *l;
            }
            sigma2.push(1.0 / tau);
            row += 1;
        }
    }

    let mut chains = GibbsChains {
        beta: beta_out,
        lambda: lambda_out,
        sigma2,
        diagnostics: Vec::new(),
        seed: config.seed,
        lambda_shapes: shapes,
    };
    chains.diagnostics = chain_diagnostics(&chains);
    Ok(chains)
}

/// Sample covariance of the β draws.
pub fn empirical_cov(chains: &GibbsChains) -> Result<PosteriorCov> {
    if chains.len() < MIN_COV_DRAWS {
        return Err(Error::TooFewDraws {
            have: chains.len(),
            need: MIN_COV_DRAWS,
        });
    }
    Ok(PosteriorCov::new(
        sample_covariance(&chains.beta),
        CovKind::FbEmpirical,
    ))
}

/// Log joint density (up to a constant) of a state `(β, λ, τ)`.
pub fn log_joint_density(
    design: &DesignMatrices,
    y: &DVector<f64>,
    config: &GibbsConfig,
    beta: &DVector<f64>,
    lambdas: &[f64],
    tau: f64,
) -> f64 {
    let n = y.len() as f64;
    let rss = (y - &design.x * beta).norm_squared();
    let mut lp = 0.5 * n * tau.ln() - 0.5 * tau * rss;
    let s = match design.assemble_penalty(lambdas) {
        Ok(s) => s,
        Err(_) => return f64::NEG_INFINITY,
    };
    lp += 0.5 * design.log_pdet_penalty(lambdas) - 0.5 * beta.dot(&(&s * beta));
    if config.fixed_lambdas.is_none() {
        lp += lambdas
            .iter()
            .map(|&l| config.lambda_prior.ln_pdf(l))
            .sum::<f64>();
    }
    lp + config.tau_prior.ln_pdf(tau)
}

/// Effective sample size by Geyer's initial positive sequence.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let gamma0 = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if gamma0 <= 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| -> f64 {
        c[..n - lag]
            .iter()
            .zip(&c[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * gamma0)
    };
    let mut sum = 0.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        k += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    n as f64 / tau
}

/// Potential scale reduction from the two halves of one chain.
pub fn split_rhat(x: &[f64]) -> Option<f64> {
    let half = x.len() / 2;
    if half < 2 {
        return None;
    }
    let (a, b) = (&x[..half], &x[x.len() - half..]);
    let stats = |s: &[f64]| {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        let v = s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (s.len() - 1) as f64;
        (m, v)
    };
    let ((ma, va), (mb, vb)) = (stats(a), stats(b));
    let w = 0.5 * (va + vb);
    if w <= 0.0 {
        return None;
    }
    let nh = half as f64;
    let grand = 0.5 * (ma + mb);
    let b_over_n = (ma - grand).powi(2) + (mb - grand).powi(2);
    let var_plus = (nh - 1.0) / nh * w + b_over_n;
    Some((var_plus / w).sqrt())
}

pub fn summarize(name: &str, x: &[f64]) -> ParameterSummary {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = if x.len() > 1 {
        (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    ParameterSummary {
        name: name.to_string(),
        mean,
        sd,
        q025: quantile_sorted(&sorted, 0.025),
        q500: quantile_sorted(&sorted, 0.5),
        q975: quantile_sorted(&sorted, 0.975),
        ess: effective_sample_size(x),
        split_rhat: split_rhat(x),
    }
}

pub fn chain_diagnostics(chains: &GibbsChains) -> Vec<ParameterSummary> {
    if chains.is_empty() {
        return Vec::new();
    }
    chains
        .parameters()
        .par_iter()
        .map(|(name, vals)| summarize(name, vals))
        .collect()
}
