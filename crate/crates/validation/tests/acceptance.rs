//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Replicate seeds are fixed in advance as `1000 * criterion + replicate`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::time::{Duration, Instant};

use gamsmooth_core::assembly::DesignMatrices;
use gamsmooth_core::basis::{cr_basis, cr_penalty, place_knots, pseudo_inverse, KnotVector};
use gamsmooth_core::fit::pirls::pirls;
use gamsmooth_core::fit::reml::RemlObjective;
use gamsmooth_core::gibbs::{effective_sample_size, empirical_cov, gibbs_fit, GammaPrior, GibbsConfig};
use gamsmooth_core::linalg;
use gamsmooth_core::posterior::{
    credible_band, posterior_cov, simulate_posterior, DrawScale, PredictionMap, Reducer,
};
use gamsmooth_core::simdata::{gu_wahba_data, two_smooth_subset};
use gamsmooth_core::{corrected_cov, fit_gam, Family, ModelSpec, RemlOptions, SmoothMode, SmoothSpec};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn seed(criterion: u64, r: u64) -> u64 {
    1000 * criterion + r
}

fn spec(covariates: &[&str], k: usize, mode: SmoothMode) -> ModelSpec {
    ModelSpec {
        response: "y".into(),
        family: Family::Gaussian,
        parametric_terms: vec![],
        smooths: covariates.iter().map(|c| SmoothSpec::new(*c, k, mode)).collect(),
    }
}

const ALL4: [&str; 4] = ["x0", "x1", "x2", "x3"];
const TWO: [&str; 2] = ["x2", "x3"];

fn c1_pirls_oracle() -> Outcome {
    let mut rng = common::rng(seed(1, 0));
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p = rng.random_range(1..=12);
        let n = rng.random_range(p + 1..=50);
        let x = common::normal_matrix(&mut rng, n, p);
        let y = common::normal_vector(&mut rng, n);
        let rank = rng.random_range(0..=p);
        let s = common::random_psd(&mut rng, p, rank) * rng.random_range(0.01..10.0);
        let got = pirls(&x, &y, Family::Gaussian, &s, None).expect("gaussian pirls");
        let want = common::pls_qr(&x, &y, &s);
        worst = worst.max((got.beta_hat - &want).amax() / want.amax().max(1.0));
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("max relative coefficient error {worst:.2e} over 100 instances (tol 1e-10)"),
    }
}

fn c2_reml_quadrature() -> Outcome {
    let mut rng = common::rng(seed(2, 0));
    let mut worst = 0.0f64;
    let mut profile_ok = true;
    for i in 0..20 {
        let n = rng.random_range(6..=15);
        let design = common::toy_design(i % 3, &mut rng, n);
        let y = common::normal_vector(&mut rng, n);
        let rho = [rng.random_range(-3.0..3.0)];
        let profiled = RemlObjective::new(&design, &y, Family::Gaussian).evaluate(&rho).expect("criterion");
        let s = design.assemble_penalty(&[rho[0].exp()]).expect("penalty");
        let quad = |phi: f64| common::quadrature_neg_log_marginal(&design.x, &y, &s, phi, 81);
        worst = worst.max((profiled.value - quad(profiled.phi)).abs());
        // The profiled scale minimizes the exact marginal over φ.
        profile_ok &= quad(profiled.phi * 1.05) > quad(profiled.phi) && quad(profiled.phi / 1.05) > quad(profiled.phi);
    }
    Outcome {
        pass: worst <= 1e-6 && profile_ok,
        detail: format!("max |criterion − quadrature| {worst:.2e} at 20 ρ (tol 1e-6); profiled scale is the minimizer: {profile_ok}"),
    }
}

fn c3_coverage() -> Outcome {
    let reps = 200;
    let covs: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let sim = gu_wahba_data(400, 1.0, seed(3, r)).expect("data");
            let fit = fit_gam(&sim.to_dataset(), &spec(&ALL4, 20, SmoothMode::Plain), &RemlOptions::with_seed(seed(3, r)))
                .expect("fit");
            let t = fit.design.term_index("s(x2)").expect("term");
            let lp = PredictionMap::new(fit.design.term_prediction_matrix(t, &sim.x[2]).expect("lp"), sim.x[2].clone())
                .expect("map");
            let band = credible_band(&fit, &lp, 0.05, &posterior_cov(&fit).expect("cov")).expect("band");
            // Smooths are centred over the sample, so the truth is too.
            let centre = sim.f[2].iter().sum::<f64>() / sim.n() as f64;
            let truth: Vec<f64> = sim.f[2].iter().map(|f| f - centre).collect();
            band.coverage(&truth)
        })
        .collect();
    let mean = covs.iter().sum::<f64>() / covs.len() as f64;
    Outcome {
        pass: (0.90..=0.98).contains(&mean),
        detail: format!("mean across-the-function coverage of f2 {mean:.4} over {reps} replicates (target [0.90, 0.98])"),
    }
}

fn c4_selection() -> Outcome {
    let rows: Vec<[f64; 3]> = (0..20u64)
        .into_par_iter()
        .map(|r| {
            let data = gu_wahba_data(400, 1.0, seed(4, r)).expect("data").to_dataset();
            [SmoothMode::Plain, SmoothMode::Shrinkage, SmoothMode::DoublePenalty].map(|mode| {
                let fit = fit_gam(&data, &spec(&ALL4, 10, mode), &RemlOptions::with_seed(seed(4, r))).expect("fit");
                fit.term_edf("s(x3)").expect("term")
            })
        })
        .collect();
    let count = |f: &dyn Fn(&[f64; 3]) -> bool| rows.iter().filter(|r| f(r)).count();
    let shrink = count(&|r| r[1] < 0.5);
    let double = count(&|r| r[2] < 0.5);
    let plain_over_shrink = count(&|r| r[0] > r[1]);
    let plain_over_double = count(&|r| r[0] > r[2]);
    let pass = (shrink >= 18 && plain_over_shrink >= 18) || (double >= 18 && plain_over_double >= 18);
    Outcome {
        pass,
        detail: format!(
            "x3 EDF < 0.5: shrinkage {shrink}/20, double {double}/20; plain larger: vs shrinkage {plain_over_shrink}/20, vs double {plain_over_double}/20 (need 18)"
        ),
    }
}

fn c5_inflation() -> Outcome {
    let rows: Vec<(bool, bool)> = (0..20u64)
        .into_par_iter()
        .map(|r| {
            let data = two_smooth_subset(&gu_wahba_data(400, 1.0, seed(5, r)).expect("data"));
            let fit = fit_gam(&data, &spec(&TWO, 10, SmoothMode::DoublePenalty), &RemlOptions::with_seed(seed(5, r)))
                .expect("fit");
            let v = posterior_cov(&fit).expect("cov");
            let vc = corrected_cov(&fit).expect("corrected");
            let dominates = (0..v.v.nrows()).all(|i| vc.v[(i, i)] >= v.v[(i, i)] - 1e-12);
            let inflation = |label: &str| {
                let cols = fit.design.terms[fit.design.term_index(label).expect("term")].cols.clone();
                (vc.block(cols.clone()) - v.block(cols)).trace()
            };
            (dominates, inflation("s(x3)") > inflation("s(x2)"))
        })
        .collect();
    let dominated = rows.iter().filter(|r| r.0).count();
    let larger = rows.iter().filter(|r| r.1).count();
    Outcome {
        pass: dominated == 20 && larger >= 16,
        detail: format!("diag(V′) ≥ diag(V) on {dominated}/20 fits; no-signal inflation larger in {larger}/20 (need 16)"),
    }
}

fn c6_eb_fb() -> Outcome {
    let reps = 5u64;
    let rows: Vec<(f64, f64, bool)> = (0..reps)
        .map(|r| {
            let data = two_smooth_subset(&gu_wahba_data(400, 1.0, seed(6, r)).expect("data"));
            let fit = fit_gam(&data, &spec(&TWO, 10, SmoothMode::DoublePenalty), &RemlOptions::with_seed(seed(6, r)))
                .expect("fit");
            let config = GibbsConfig {
                iterations: 22_000,
                burn_in: 2_000,
                ..GibbsConfig::with_seed(seed(6, r))
            };
            let chains = gibbs_fit(&fit.design, &fit.y, Family::Gaussian, &config).expect("gibbs");
            let eta = &chains.beta * fit.design.x.transpose();
            let eb = fit.fitted_linear_predictor();
            let n = eb.len() as f64;
            let (sq_diff, sq_mcse) = (0..eb.len())
                .into_par_iter()
                .map(|i| {
                    let col: Vec<f64> = eta.column(i).iter().copied().collect();
                    let m = col.iter().sum::<f64>() / col.len() as f64;
                    let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
                    ((m - eb[i]).powi(2), var / effective_sample_size(&col))
                })
                .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
            let fb = empirical_cov(&chains).expect("fb cov");
            let v = posterior_cov(&fit).expect("cov");
            let cols = fit.design.terms[fit.design.term_index("s(x3)").expect("term")].cols.clone();
            let dominates = cols.clone().all(|i| fb.v[(i, i)] >= v.v[(i, i)]);
            ((sq_diff / n).sqrt(), (sq_mcse / n).sqrt(), dominates)
        })
        .collect();
    let close = rows.iter().filter(|r| r.0 < 3.0 * r.1).count();
    let dominated = rows.iter().filter(|r| r.2).count();
    let ratios: Vec<String> = rows.iter().map(|r| format!("{:.1}", r.0 / r.1)).collect();
    Outcome {
        pass: close == rows.len() && dominated == rows.len(),
        detail: format!(
            "RMS(FB mean − EB fit)/MCSE per run [{}] (need < 3): {close}/{reps}; FB diag ≥ EB diag on x3 block: {dominated}/{reps}",
            ratios.join(", ")
        ),
    }
}

fn c7_simulation() -> Outcome {
    let data = two_smooth_subset(&gu_wahba_data(400, 1.0, seed(7, 0)).expect("data"));
    let fit = fit_gam(&data, &spec(&TWO, 10, SmoothMode::Plain), &RemlOptions::with_seed(seed(7, 0))).expect("fit");
    let t = fit.design.term_index("s(x2)").expect("term");
    let lp = PredictionMap::term_grid(&fit, t, 20).expect("grid");
    let cov = posterior_cov(&fit).expect("cov");
    let want = &lp.lp * &cov.v * lp.lp.transpose();
    let draw_err = |b: usize, s: u64| {
        let d = simulate_posterior(&fit, &lp, b, &cov, DrawScale::LinearPredictor, &Reducer::None, s).expect("draws");
        linalg::frobenius_rel_err(&d.covariance(), &want)
    };
    let main = draw_err(50_000, seed(7, 1));
    let mut pts = Vec::new();
    for (k, b) in [100usize, 1_000, 10_000, 100_000].into_iter().enumerate() {
        let errs: Vec<f64> = (0..8).map(|r| draw_err(b, seed(7, 10 * (k as u64 + 1) + r)).powi(2)).collect();
        pts.push(((b as f64).ln(), (errs.iter().sum::<f64>() / errs.len() as f64).sqrt().ln()));
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    Outcome {
        pass: main < 0.05 && (-0.65..=-0.35).contains(&slope),
        detail: format!("Frobenius relative error {main:.4} at B = 50000 (tol 0.05); log-log slope {slope:.3} (target [−0.65, −0.35])"),
    }
}

fn c8_pseudoinverse_penalty() -> Outcome {
    let mut rng = common::rng(seed(8, 0));
    let mut penrose = 0.0f64;
    let mut null = 0.0f64;
    let mut quad = 0.0f64;
    for _ in 0..10 {
        let k = rng.random_range(4..=12);
        let x: Vec<f64> = (0..200).map(|_| rng.random::<f64>() * 4.0 - 1.0).collect();
        let knots = place_knots(&x, k).expect("knots");
        let s = cr_penalty(&knots).s;
        let g = pseudo_inverse(&s).expect("pinv");
        let rel = |a: DMatrix<f64>, b: &DMatrix<f64>| (a - b).amax() / b.amax();
        let sg = &s * &g;
        let gs = &g * &s;
        penrose = penrose
            .max(rel(&s * &g * &s, &s))
            .max(rel(&g * &s * &g, &g))
            .max(rel(sg.transpose(), &sg))
            .max(rel(gs.transpose(), &gs));
        let kv = DVector::from_column_slice(knots.as_slice());
        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let affine = kv.map(|t| a + b * t);
        null = null.max((&s * &affine).amax() / (s.amax() * affine.amax()));
        let q = common::quadrature_penalty(&cr_basis(KnotVector::new(knots.as_slice().to_vec()).expect("knots")));
        quad = quad.max(linalg::frobenius_rel_err(&q, &s));
    }
    Outcome {
        pass: penrose <= 1e-10 && null <= 1e-10 && quad <= 1e-6,
        detail: format!("Penrose residual {penrose:.1e} (tol 1e-10); affine null residual {null:.1e}; penalty vs quadrature {quad:.1e} (tol 1e-6)"),
    }
}

fn c9_normal_gamma() -> Outcome {
    let mut rng = common::rng(seed(9, 0));
    let n = 30;
    let y = common::normal_vector(&mut rng, n).map(|v| 2.0 + 1.5 * v);
    let design = DesignMatrices::from_blocks(DMatrix::from_element(n, 1, 1.0), vec![]).expect("design");
    let config = GibbsConfig {
        iterations: 22_000,
        burn_in: 2_000,
        tau_prior: GammaPrior::new(2.0, 2.0).expect("prior"),
        ..GibbsConfig::with_seed(seed(9, 1))
    };
    let chains = gibbs_fit(&design, &y, Family::Gaussian, &config).expect("gibbs");
    let ybar = y.mean();
    let ss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let a = 2.0 + 0.5 * (n as f64 - 1.0);
    let b = 2.0 + 0.5 * ss;
    let beta: Vec<f64> = chains.beta.column(0).iter().copied().collect();
    let tau: Vec<f64> = chains.sigma2.iter().map(|s| 1.0 / s).collect();
    let z = |x: &[f64], want: f64| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let v = x.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
        ((m - want) / (v / effective_sample_size(x)).sqrt()).abs()
    };
    let sq = |x: &[f64], c: f64| x.iter().map(|v| (v - c).powi(2)).collect::<Vec<_>>();
    let zs = [
        z(&beta, ybar),
        z(&sq(&beta, ybar), b / (n as f64 * (a - 1.0))),
        z(&tau, a / b),
        z(&sq(&tau, a / b), a / (b * b)),
    ];
    let worst = zs.iter().copied().fold(0.0, f64::max);
    Outcome {
        pass: worst < 3.0,
        detail: format!(
            "|z| for β mean/var, τ mean/var = [{:.2}, {:.2}, {:.2}, {:.2}] over {} draws (need < 3)",
            zs[0],
            zs[1],
            zs[2],
            zs[3],
            chains.len()
        ),
    }
}

fn main() {
    let criteria: [(&str, u64, fn() -> Outcome); 9] = [
        ("1 PIRLS vs closed-form PLS", 5, c1_pirls_oracle),
        ("2 REML vs quadrature", 10, c2_reml_quadrature),
        ("3 EB band coverage", 300, c3_coverage),
        ("4 term selection", 180, c4_selection),
        ("5 smoothing-uncertainty inflation", 180, c5_inflation),
        ("6 EB-FB agreement", 300, c6_eb_fb),
        ("7 posterior simulation", 120, c7_simulation),
        ("8 pseudoinverse and penalty", 10, c8_pseudoinverse_penalty),
        ("9 Gibbs normal-gamma oracle", 60, c9_normal_gamma),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] criterion {name}: {} [{:.2}s, budget {budget}s]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {}/9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
