use std::path::{Path, PathBuf};

use gamsmooth_core::{build_design, Dataset, FittedModel, ModelSpec, RemlOptions};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::output::{matrix_from_rows, rows_of};

pub const FORMAT: &str = "gamsmooth-model";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
pub struct TermRecord {
    pub label: String,
    pub covariate: Option<String>,
    pub cols: [usize; 2],
    pub penalties: Vec<usize>,
    pub edf: f64,
}

#[derive(Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub spec: ModelSpec,
    pub data: PathBuf,
    pub n: usize,
    pub seed: u64,
    pub terms: Vec<TermRecord>,
    pub beta_hat: Vec<f64>,
    pub rho_hat: Vec<f64>,
    pub lambda_hat: Vec<f64>,
    pub phi_hat: f64,
    pub reml_value: f64,
    pub edf_total: f64,
    pub rho_hessian: Vec<Vec<f64>>,
    pub cov_eb: Vec<Vec<f64>>,
    pub cov_corrected: Option<Vec<Vec<f64>>>,
    pub warnings: Vec<String>,
}

impl ModelFile {
    pub fn from_fit(
        fit: &FittedModel,
        spec: &ModelSpec,
        data: &Path,
        cov_eb: &nalgebra::DMatrix<f64>,
        cov_corrected: Option<&nalgebra::DMatrix<f64>>,
    ) -> Self {
        let terms = fit
            .design
            .terms
            .iter()
            .enumerate()
            .map(|(t, term)| TermRecord {
                label: term.label.clone(),
                covariate: term.smooth().map(|s| s.layout.covariate.clone()),
                cols: [term.cols.start, term.cols.end],
                penalties: term.penalties.clone(),
                edf: fit.edf_per_term[t],
            })
            .collect();
        ModelFile {
            format: FORMAT.into(),
            version: VERSION,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            spec: spec.clone(),
            data: data.to_path_buf(),
            n: fit.y.len(),
            seed: fit.seed,
            terms,
            beta_hat: fit.beta_hat.iter().copied().collect(),
            rho_hat: fit.rho_hat.clone(),
            lambda_hat: fit.lambda_hat.clone(),
            phi_hat: fit.phi_hat,
            reml_value: fit.reml_value,
            edf_total: fit.edf_total,
            rho_hessian: rows_of(&fit.rho_hessian),
            cov_eb: rows_of(cov_eb),
            cov_corrected: cov_corrected.map(rows_of),
            warnings: fit.warnings.clone(),
        }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        let m: ModelFile = serde_json::from_str(&text)?;
        if m.format != FORMAT {
            return Err(CliError::Data(format!("{} is not a model file", path.display())));
        }
        if m.version != VERSION {
            return Err(CliError::Data(format!(
                "model file version {} is not supported (expected {VERSION})",
                m.version
            )));
        }
        matrix_from_rows(&m.cov_eb, "cov_eb")?;
        Ok(m)
    }

    /// Rebuilds the fit from the data at the stored smoothing parameters and
    /// checks that it reproduces the stored coefficients.
    pub fn refit(&self, data_override: Option<&Path>) -> Result<FittedModel, CliError> {
        let path = data_override.unwrap_or(&self.data);
        let data = Dataset::read_csv(path)?;
        if data.nrows() != self.n {
            return Err(CliError::Data(format!(
                "{} has {} rows, model was fitted to {}",
                path.display(),
                data.nrows(),
                self.n
            )));
        }
        let design = build_design(&data, &self.spec)?;
        let y = DVector::from_column_slice(data.column(&self.spec.response)?);
        let mut options = RemlOptions::with_seed(self.seed);
        options.rho_bound = options.rho_bound.max(self.rho_hat.iter().fold(0.0, |a, r| a.max(r.abs())));
        let mut fit = gamsmooth_core::fit::refit_at(design, y, self.spec.family, &self.rho_hat, &options)?;
        fit.spec = Some(self.spec.clone());
        if fit.beta_hat.len() != self.beta_hat.len() {
            return Err(CliError::Data("model file does not match the data layout".into()));
        }
        let stored = DVector::from_column_slice(&self.beta_hat);
        let gap = (&fit.design.x * (&fit.beta_hat - &stored)).amax();
        let scale = (&fit.design.x * &stored).amax().max(1.0);
        if gap > 1e-8 * scale {
            return Err(CliError::Data(format!(
                "refit on {} does not reproduce the stored fit (max gap {gap:.3e})",
                path.display()
            )));
        }
        Ok(fit)
    }
}
