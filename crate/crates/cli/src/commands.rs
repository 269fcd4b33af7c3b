use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gamsmooth_core::gibbs::{empirical_cov, gibbs_fit_chains, GammaPrior, GibbsChains, GibbsConfig, UpdateOrder};
use gamsmooth_core::posterior::{normal_critical_value, DrawScale, PredictionMap, Reducer};
use gamsmooth_core::simdata::gu_wahba_data;
use gamsmooth_core::{
    build_design, corrected_cov, credible_band, fit_gam, posterior_cov, simulate_posterior, Dataset,
    FittedModel, ModelSpec, PosteriorCov, RemlOptions, SmoothMode,
};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde_json::json;

use crate::error::CliError;
use crate::model::ModelFile;
use crate::output::{self, file_stem, ManifestBuilder, Outputs};
use crate::{
    BandArgs, CompareCovArgs, CovChoice, FitArgs, GibbsArgs, Order, SampleArgs, Scale, Select, SimulateArgs,
    Summary,
};

const QUANTILE_PROBS: [f64; 3] = [0.025, 0.5, 0.975];

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn replicate_indices(replicates: Option<usize>) -> Result<Vec<Option<usize>>, CliError> {
    match replicates {
        None => Ok(vec![None]),
        Some(0) => Err(CliError::Usage("--replicates must be at least 1".into())),
        Some(r) => Ok((0..r).map(Some).collect()),
    }
}

/// Runs `f` per replicate on the worker pool, returning the first error.
fn fan_out<F>(replicates: Option<usize>, f: F) -> Result<(), CliError>
where
    F: Fn(Option<usize>) -> Result<(), CliError> + Send + Sync,
{
    let reps = replicate_indices(replicates)?;
    let results: Vec<Result<(), CliError>> = reps.into_par_iter().map(&f).collect();
    results.into_iter().collect()
}

fn rep_path(template: &Path, r: Option<usize>) -> PathBuf {
    match r {
        Some(r) => output::expand(template, r),
        None => template.to_path_buf(),
    }
}

fn rep_seed(seed: u64, r: Option<usize>) -> u64 {
    seed.wrapping_add(r.unwrap_or(0) as u64)
}

pub fn simulate(a: &SimulateArgs, argv: &[String]) -> Result<(), CliError> {
    let started = Instant::now();
    if a.replicates.is_some() {
        output::replicate_template(&a.out, "--out")?;
    }
    fan_out(a.replicates, |r| {
        let path = rep_path(&a.out, r);
        let seed = rep_seed(a.seed, r);
        let mut outs = Outputs::new(a.common.force);
        let csv = outs.claim(&path)?;
        let manifest_path = outs.claim(sidecar(&path))?;
        let sim = gu_wahba_data(a.n, a.sigma, seed)?;
        let mut w = output::create(&csv)?;
        sim.to_dataset().write_csv(&mut w)?;
        w.flush()?;
        let mut m = ManifestBuilder::new("simulate", argv, started);
        m.seed = Some(seed);
        m.replicate = r;
        m.finish(&outs, &manifest_path)
    })
}

fn read_spec(path: &Path, select: Option<Select>) -> Result<ModelSpec, CliError> {
    let spec = ModelSpec::from_json(&std::fs::read_to_string(path)?)?;
    Ok(match select {
        None => spec,
        Some(Select::None) => spec.with_mode(SmoothMode::Plain),
        Some(Select::Shrinkage) => spec.with_mode(SmoothMode::Shrinkage),
        Some(Select::Double) => spec.with_mode(SmoothMode::DoublePenalty),
    })
}

fn smooth_terms(fit: &FittedModel) -> Vec<(usize, String)> {
    fit.design
        .terms
        .iter()
        .enumerate()
        .filter_map(|(t, term)| term.smooth().map(|s| (t, file_stem(&s.layout.covariate))))
        .collect()
}

fn check_band_args(alpha: f64, grid: usize) -> Result<(), CliError> {
    normal_critical_value(alpha)?;
    if grid < 2 {
        return Err(CliError::Usage("--grid must be at least 2".into()));
    }
    Ok(())
}

fn write_bands(
    fit: &FittedModel,
    cov: &PosteriorCov,
    alpha: f64,
    grid: usize,
    files: &[(usize, PathBuf)],
) -> Result<(), CliError> {
    for (t, path) in files {
        let lp = PredictionMap::term_grid(fit, *t, grid)?;
        let band = credible_band(fit, &lp, alpha, cov)?;
        let mut w = output::create(path)?;
        band.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn band_files(
    outs: &mut Outputs,
    dir: &Path,
    covariates: impl IntoIterator<Item = (usize, String)>,
) -> Result<Vec<(usize, PathBuf)>, CliError> {
    covariates
        .into_iter()
        .map(|(t, stem)| Ok((t, outs.claim(dir.join(format!("band_{stem}.csv")))?)))
        .collect()
}

pub fn fit(a: &FitArgs, argv: &[String]) -> Result<(), CliError> {
    if a.replicates.is_some() {
        output::replicate_template(&a.data, "--data")?;
        output::replicate_template(&a.out_dir, "--out-dir")?;
    }
    check_band_args(a.alpha, a.grid)?;
    let spec = read_spec(&a.spec, a.select)?;
    fan_out(a.replicates, |r| fit_one(a, &spec, r, argv))
}

fn fit_one(a: &FitArgs, spec: &ModelSpec, r: Option<usize>, argv: &[String]) -> Result<(), CliError> {
    let started = Instant::now();
    let data_path = rep_path(&a.data, r);
    let dir = rep_path(&a.out_dir, r);
    let seed = rep_seed(a.seed, r);
    let mut outs = Outputs::new(a.common.force);
    let model_path = outs.claim(dir.join("model.json"))?;
    let report_path = outs.claim(dir.join("report.json"))?;
    let eb_path = outs.claim(dir.join("cov_eb.csv"))?;
    let corr_path = if a.correct_cov {
        Some(outs.claim(dir.join("cov_corrected.csv"))?)
    } else {
        None
    };
    let smooth_stems = spec.smooths.iter().map(|s| file_stem(&s.covariate));
    let planned = band_files(&mut outs, &dir, smooth_stems.enumerate())?;
    let manifest_path = outs.claim(dir.join("manifest.json"))?;

    let data = Dataset::read_csv(&data_path)?;
    let fit = fit_gam(&data, spec, &RemlOptions::with_seed(seed))?;
    let eb = posterior_cov(&fit)?;
    let corrected = if a.correct_cov { Some(corrected_cov(&fit)?) } else { None };
    let band_cov = corrected.as_ref().unwrap_or(&eb);

    let terms = smooth_terms(&fit);
    let files: Vec<(usize, PathBuf)> = terms
        .iter()
        .zip(&planned)
        .map(|((t, _), (_, p))| (*t, p.clone()))
        .collect();
    write_bands(&fit, band_cov, a.alpha, a.grid, &files)?;

    output::write_matrix_csv(&eb_path, &eb.v)?;
    if let (Some(p), Some(c)) = (&corr_path, &corrected) {
        output::write_matrix_csv(p, &c.v)?;
    }
    let model = ModelFile::from_fit(&fit, spec, &data_path, &eb.v, corrected.as_ref().map(|c| &c.v));
    output::write_json(&model_path, &model)?;

    let edf: serde_json::Map<String, serde_json::Value> = fit
        .design
        .terms
        .iter()
        .zip(&fit.edf_per_term)
        .map(|(t, e)| (t.label.clone(), json!(e)))
        .collect();
    let report = json!({
        "n": fit.y.len(),
        "edf": edf,
        "edf_total": fit.edf_total,
        "rho_hat": fit.rho_hat,
        "lambda_hat": fit.lambda_hat,
        "phi_hat": fit.phi_hat,
        "reml_value": fit.reml_value,
        "band_cov": if a.correct_cov { "corrected" } else { "eb" },
        "alpha": a.alpha,
        "warnings": fit.warnings,
        "cov_flags": corrected.as_ref().map(|c| c.flags.clone()).unwrap_or_default(),
    });
    output::write_json(&report_path, &report)?;

    let mut m = ManifestBuilder::new("fit", argv, started);
    m.spec = Some(a.spec.clone());
    m.data = Some(data_path);
    m.seed = Some(seed);
    m.replicate = r;
    m.finish(&outs, &manifest_path)
}

fn choose_cov(fit: &FittedModel, c: CovChoice) -> Result<PosteriorCov, CliError> {
    Ok(match c {
        CovChoice::Eb => posterior_cov(fit)?,
        CovChoice::Corrected => corrected_cov(fit)?,
    })
}

pub fn band(a: &BandArgs, argv: &[String]) -> Result<(), CliError> {
    let started = Instant::now();
    check_band_args(a.alpha, a.grid)?;
    let model = ModelFile::read(&a.model)?;
    let mut outs = Outputs::new(a.common.force);
    let stems = model
        .terms
        .iter()
        .enumerate()
        .filter_map(|(t, rec)| rec.covariate.as_ref().map(|c| (t, file_stem(c))));
    let files = band_files(&mut outs, &a.out_dir, stems)?;
    let manifest_path = outs.claim(a.out_dir.join("manifest.json"))?;

    let fit = model.refit(a.data.as_deref())?;
    let cov = choose_cov(&fit, a.cov)?;
    write_bands(&fit, &cov, a.alpha, a.grid, &files)?;

    let mut m = ManifestBuilder::new("band", argv, started);
    m.model = Some(a.model.clone());
    m.data = Some(a.data.clone().unwrap_or(model.data));
    m.finish(&outs, &manifest_path)
}

pub fn sample(a: &SampleArgs, argv: &[String]) -> Result<(), CliError> {
    let started = Instant::now();
    if a.draws == 0 {
        return Err(CliError::Usage("--draws must be at least 1".into()));
    }
    let model = ModelFile::read(&a.model)?;
    let mut outs = Outputs::new(a.common.force);
    let out = outs.claim(&a.out)?;
    let manifest_path = outs.claim(sidecar(&a.out))?;

    let fit = model.refit(a.data.as_deref())?;
    let lp = match &a.term {
        Some(name) => {
            let t = fit
                .design
                .terms
                .iter()
                .position(|t| t.label == *name || t.smooth().is_some_and(|s| s.layout.covariate == *name))
                .ok_or_else(|| CliError::Usage(format!("no smooth term `{name}` in the model")))?;
            PredictionMap::term_grid(&fit, t, a.grid)?
        }
        None => PredictionMap::new(fit.design.x.clone(), Vec::new())?,
    };
    let cov = choose_cov(&fit, a.cov)?;
    let scale = match a.scale {
        Scale::Link => DrawScale::LinearPredictor,
        Scale::Response => DrawScale::Response,
    };
    let reducer = match a.summary {
        Summary::Sum => Reducer::Sum,
        _ => Reducer::None,
    };
    let draws = simulate_posterior(&fit, &lp, a.draws, &cov, scale, &reducer, a.seed)?;

    let mut w = output::create(&out)?;
    match a.summary {
        Summary::None | Summary::Sum => draws.write_csv(&mut w)?,
        Summary::Quantiles => {
            let q = draws.quantiles(&QUANTILE_PROBS);
            writeln!(w, "point_id,x,q0.025,q0.5,q0.975")?;
            for j in 0..q.ncols() {
                let x = lp.at.get(j).map_or(String::new(), |x| format!("{x:e}"));
                writeln!(w, "{j},{x},{:e},{:e},{:e}", q[(0, j)], q[(1, j)], q[(2, j)])?;
            }
        }
    }
    w.flush()?;

    let mut m = ManifestBuilder::new("sample", argv, started);
    m.model = Some(a.model.clone());
    m.data = Some(a.data.clone().unwrap_or(model.data));
    m.seed = Some(a.seed);
    m.finish(&outs, &manifest_path)
}

pub fn gibbs(a: &GibbsArgs, argv: &[String]) -> Result<(), CliError> {
    let started = Instant::now();
    let spec = read_spec(&a.spec, a.select)?;
    let mut outs = Outputs::new(a.common.force);
    let chains_path = outs.claim(a.out_dir.join("chains.csv"))?;
    let summary_path = outs.claim(a.out_dir.join("summary.json"))?;
    let manifest_path = outs.claim(a.out_dir.join("manifest.json"))?;
    if a.chains == 0 {
        return Err(CliError::Usage("--chains must be at least 1".into()));
    }

    let config = GibbsConfig {
        iterations: a.iters,
        burn_in: a.burn,
        thin: a.thin,
        seed: a.seed,
        lambda_prior: GammaPrior::new(a.lambda_shape, a.lambda_rate)?,
        tau_prior: GammaPrior::new(a.tau_shape, a.tau_rate)?,
        order: match a.order {
            Order::BetaLambdaTau => UpdateOrder::BetaLambdaTau,
            Order::BetaTauLambda => UpdateOrder::BetaTauLambda,
        },
        fixed_lambdas: None,
    };
    config.validate()?;
    let data = Dataset::read_csv(&a.data)?;
    let design = build_design(&data, &spec)?;
    let y = DVector::from_column_slice(data.column(&spec.response)?);
    let chains = gibbs_fit_chains(&design, &y, spec.family, &config, a.chains)?;

    let mut w = output::create(&chains_path)?;
    chains.write_csv(&mut w)?;
    w.flush()?;
    let mut w = output::create(&summary_path)?;
    chains.write_summary_json(&mut w)?;
    w.flush()?;

    let mut m = ManifestBuilder::new("gibbs", argv, started);
    m.spec = Some(a.spec.clone());
    m.data = Some(a.data.clone());
    m.seed = Some(a.seed);
    m.finish(&outs, &manifest_path)
}

fn panel_summary(v: &DMatrix<f64>) -> serde_json::Value {
    let p = v.nrows().max(1) as f64;
    let all = v.iter().map(|x| x.abs()).sum::<f64>() / (p * p);
    let diag = v.diagonal().iter().map(|x| x.abs()).sum::<f64>() / p;
    let off = if v.nrows() > 1 {
        (all * p * p - diag * p) / (p * p - p)
    } else {
        0.0
    };
    json!({ "mean_abs": all, "mean_abs_diagonal": diag, "mean_abs_off_diagonal": off })
}

pub fn compare_cov(a: &CompareCovArgs, argv: &[String]) -> Result<(), CliError> {
    let started = Instant::now();
    let model = ModelFile::read(&a.model)?;
    let mut outs = Outputs::new(a.common.force);
    let panels_path = outs.claim(a.out_dir.join("cov_panels.csv"))?;
    let summary_path = outs.claim(a.out_dir.join("cov_summary.json"))?;
    let manifest_path = outs.claim(a.out_dir.join("manifest.json"))?;

    let fit = model.refit(a.data.as_deref())?;
    let mut panels = vec![("eb", posterior_cov(&fit)?), ("corrected", corrected_cov(&fit)?)];
    if let Some(path) = &a.chains {
        let chains = GibbsChains::read_csv(std::fs::File::open(path)?)?;
        if chains.beta.ncols() != fit.beta_hat.len() {
            return Err(CliError::Data(format!(
                "chains have {} coefficients, model has {}",
                chains.beta.ncols(),
                fit.beta_hat.len()
            )));
        }
        panels.push(("fb", empirical_cov(&chains)?));
    }

    let mut w = output::create(&panels_path)?;
    writeln!(w, "panel,row,col,value")?;
    for (name, c) in &panels {
        for i in 0..c.v.nrows() {
            for j in 0..c.v.ncols() {
                writeln!(w, "{name},{i},{j},{:e}", c.v[(i, j)])?;
            }
        }
    }
    w.flush()?;

    let eb_diag = panels[0].1.v.diagonal();
    let corr_diag = panels[1].1.v.diagonal();
    let dominated = eb_diag
        .iter()
        .zip(corr_diag.iter())
        .all(|(e, c)| *e <= *c + 1e-12 * c.abs().max(e.abs()));
    let summary = json!({
        "p": fit.beta_hat.len(),
        "panels": panels.iter().map(|(n, c)| (n.to_string(), panel_summary(&c.v))).collect::<serde_json::Map<_, _>>(),
        "eb_diagonal_le_corrected": dominated,
        "corrected_flags": panels[1].1.flags,
    });
    output::write_json(&summary_path, &summary)?;

    let mut m = ManifestBuilder::new("compare-cov", argv, started);
    m.model = Some(a.model.clone());
    m.data = Some(a.data.clone().unwrap_or(model.data));
    m.finish(&outs, &manifest_path)
}
