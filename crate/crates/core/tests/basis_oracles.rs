mod common;

use gamsmooth_core::basis::{
    constraint, cr_basis, cr_penalty, nullspace_penalty, place_knots, pseudo_inverse,
    shrinkage_penalty, CrBasis, KnotVector, PenaltyBlock,
};
use gamsmooth_core::linalg;
use gamsmooth_core::{fit_gam, Dataset, ModelSpec, RemlOptions, SmoothMode, SmoothSpec};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[test]
fn penalty_matches_quadrature_four_knots() {
    let knots = KnotVector::new(vec![0.0, 0.3, 0.45, 1.0]).unwrap();
    let exact = cr_penalty(&knots).s;
    let quad = common::quadrature_penalty(&cr_basis(knots));
    let scale = exact.amax();
    for i in 0..4 {
        for j in 0..4 {
            let rel = (exact[(i, j)] - quad[(i, j)]).abs() / scale;
            assert!(rel < 1e-6, "entry ({i},{j}): {} vs {}", exact[(i, j)], quad[(i, j)]);
        }
    }
}

#[test]
fn penalty_matches_quadrature_on_uniform_sample_knots() {
    let mut rng = common::rng(11);
    let x: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
    let basis = CrBasis::new(place_knots(&x, 10).unwrap());
    let exact = basis.penalty().s;
    let quad = common::quadrature_penalty(&basis);
    assert!(linalg::frobenius_rel_err(&quad, &exact) < 1e-6);
}

#[test]
fn knots_match_sorted_quantiles() {
    let mut rng = common::rng(5);
    let x: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
    let knots = place_knots(&x, 10).unwrap();
    let mut sorted = x.clone();
    sorted.sort_by(f64::total_cmp);
    assert_eq!(knots.first(), sorted[0]);
    assert_eq!(knots.last(), sorted[499]);
    for (j, &kv) in knots.as_slice().iter().enumerate() {
        let pos = j as f64 * 499.0 / 9.0;
        let lo = pos.floor() as usize;
        let expect = sorted[lo] + (pos - lo as f64) * (sorted[(lo + 1).min(499)] - sorted[lo]);
        assert!((kv - expect).abs() < 1e-14);
    }
    assert!(knots.as_slice().windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn penalty_null_space_is_exactly_affine() {
    let mut rng = common::rng(3);
    let x: Vec<f64> = (0..200).map(|_| rng.random::<f64>() * 5.0 - 1.0).collect();
    let knots = place_knots(&x, 8).unwrap();
    let s = cr_penalty(&knots).s;
    let kv = DVector::from_column_slice(knots.as_slice());
    for _ in 0..20 {
        let (a, b) = (rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0);
        let affine = kv.map(|k| a + b * k);
        assert!((&s * &affine).amax() < 1e-10 * s.amax() * affine.amax().max(1.0));
        let bent = kv.map(|k| a + b * k + (rng.random::<f64>() + 0.5) * k * k);
        assert!(bent.dot(&(&s * &bent)) > 1e-6);
    }
}

#[test]
fn penrose_identities_on_random_psd() {
    let mut rng = common::rng(17);
    for rank in [3, 6, 9] {
        let s = common::random_psd(&mut rng, 9, rank);
        let g = pseudo_inverse(&s).unwrap();
        let rel = |a: DMatrix<f64>, b: &DMatrix<f64>| (a - b).amax() / b.amax().max(1e-300);
        assert!(rel(&s * &g * &s, &s) < 1e-10);
        assert!(rel(&g * &s * &g, &g) < 1e-10);
        let sg = &s * &g;
        assert!(rel(sg.transpose(), &sg) < 1e-10);
        let gs = &g * &s;
        assert!(rel(gs.transpose(), &gs) < 1e-10);
    }
}

#[test]
fn pseudo_inverse_rejects_asymmetric() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
    assert!(pseudo_inverse(&m).is_err());
}

#[test]
fn penalty_peaks_on_diagonal_and_decays_away_from_it() {
    let knots = KnotVector::new((0..10).map(|i| i as f64 / 9.0).collect()).unwrap();
    let s = cr_penalty(&knots).s;
    for i in 0..10 {
        let row: Vec<f64> = (0..10).map(|j| s[(i, j)]).collect();
        let max = row.iter().copied().fold(f64::MIN, f64::max);
        let min = row.iter().copied().fold(f64::MAX, f64::min);
        // The end rows carry the boundary conditions and peak one step in.
        if (1..9).contains(&i) {
            assert_eq!(row[i], max, "row {i}");
        }
        let adjacent_min = [i.checked_sub(1), (i + 1 < 10).then_some(i + 1)]
            .into_iter()
            .flatten()
            .any(|j| row[j] == min);
        assert!(adjacent_min, "row {i}: smallest entry not next to the diagonal");
        for j in i + 1..9 {
            assert!(row[j + 1].abs() < row[j].abs());
        }
        for j in 1..i {
            assert!(row[j - 1].abs() < row[j].abs());
        }
    }
}

#[test]
fn prior_covariance_structure() {
    let knots = KnotVector::new((0..10).map(|i| i as f64 / 9.0).collect()).unwrap();
    let g = pseudo_inverse(&cr_penalty(&knots).s).unwrap();
    let (values, _) = linalg::sym_eigen(&g);
    assert!(values.iter().all(|v| *v > -1e-10 * values[0]));
    assert_eq!(linalg::numerical_rank(&values), 8);
    // Affine functions of the knots carry no prior information.
    let kv = DVector::from_column_slice(knots.as_slice());
    assert!((&g * kv).amax() < 1e-12);
    assert!((&g * DVector::from_element(10, 1.0)).amax() < 1e-12);
    // Evenly spaced knots make the matrix symmetric under reversal.
    for i in 0..10 {
        for j in 0..10 {
            assert!((g[(i, j)] - g[(9 - i, 9 - j)]).abs() < 1e-12 * g.amax());
        }
    }
}

#[test]
fn double_penalty_pieces() {
    let knots = KnotVector::new(vec![0.0, 0.2, 0.5, 0.6, 1.0]).unwrap();
    let s = cr_penalty(&knots);
    let star = nullspace_penalty(&s);
    assert_eq!(linalg::sym_rank(&star), s.nullspace_dim);
    assert_eq!(linalg::sym_rank(&(&s.s + &star)), 5);
    let (values, vectors) = linalg::sym_eigen(&s.s);
    for c in 0..s.rank {
        assert!(values[c] > 0.0);
        assert!((&star * vectors.column(c)).amax() < 1e-10);
    }
    for c in s.rank..5 {
        let v = vectors.column(c).into_owned();
        assert!((&star * &v - &v).amax() < 1e-10);
    }
}

#[test]
fn shrinkage_difference_is_psd_with_nullspace_rank() {
    let knots = KnotVector::new(vec![0.0, 0.2, 0.5, 0.6, 1.0]).unwrap();
    let s = cr_penalty(&knots);
    let shrunk = shrinkage_penalty(&s, 1e-3).unwrap();
    assert_eq!(shrunk.nullspace_dim, 0);
    let diff = &shrunk.s - &s.s;
    let (dv, _) = linalg::sym_eigen(&diff);
    assert!(dv.iter().all(|v| *v > -1e-12 * s.s.amax()));
    assert_eq!(linalg::numerical_rank(&dv), 2);
    let chol = linalg::cholesky(&shrunk.s, "shrunk").unwrap();
    assert!(linalg::chol_logdet(&chol).is_finite());
    assert!(shrinkage_penalty(&s, 0.0).is_err());
}

#[test]
fn constraint_columns_sum_to_zero() {
    let mut rng = common::rng(2);
    let x: Vec<f64> = (0..150).map(|_| rng.random::<f64>()).collect();
    let basis = CrBasis::new(place_knots(&x, 10).unwrap());
    let xb = basis.design(&x);
    let z = constraint(&xb);
    assert_eq!(z.width(), 9);
    let zt_z = z.z.transpose() * &z.z;
    assert!((zt_z - DMatrix::identity(9, 9)).amax() < 1e-12);
    let xz = &xb * &z.z;
    for c in 0..9 {
        assert!(xz.column(c).sum().abs() < 1e-10);
    }
    let block = PenaltyBlock::from_matrix(basis.penalty().s).unwrap();
    let constrained = block.constrained(&z).unwrap();
    assert_eq!(constrained.rank, 8);
    assert_eq!(constrained.nullspace_dim, 1);
}

#[test]
fn constrained_fit_equals_unconstrained_basis_without_intercept() {
    // Intercept + Z-constrained smooth spans the same space as the raw
    // k-column basis, so penalized fits at equal λ coincide.
    let mut rng = common::rng(8);
    let x: Vec<f64> = (0..80).map(|_| rng.random::<f64>()).collect();
    let y: Vec<f64> = x.iter().map(|v| (5.0 * v).sin() + 0.1 * rng.random::<f64>()).collect();
    let data = Dataset::from_columns([("x", x.clone()), ("y", y.clone())]).unwrap();
    let spec = ModelSpec {
        response: "y".into(),
        family: Default::default(),
        parametric_terms: vec![],
        smooths: vec![SmoothSpec::new("x", 8, SmoothMode::Plain)],
    };
    let design = gamsmooth_core::build_design(&data, &spec).unwrap();
    let yv = DVector::from_vec(y);
    let lambda = 0.01;
    let s = design.assemble_penalty(&[lambda]).unwrap();
    let fitted_c = &design.x * common::pls_qr(&design.x, &yv, &s);

    let basis = CrBasis::new(place_knots(&x, 8).unwrap());
    let xb = basis.design(&x);
    let sb = basis.penalty().s * lambda;
    let fitted_u = &xb * common::pls_qr(&xb, &yv, &sb);
    assert!((fitted_c - fitted_u).amax() < 1e-8);

    // The REML fit also runs end to end on this design.
    let fit = fit_gam(&data, &spec, &RemlOptions::with_seed(1)).unwrap();
    assert!(fit.edf_total > 1.0 && fit.edf_total <= 8.0);
}
