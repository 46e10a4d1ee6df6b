mod common;

use common::*;
use microgrid_koopman::ident::era::{
    b_candidate, era_output_matrix, gamma_objective, minimize_on_unit_interval, realize_raw,
};
use microgrid_koopman::ident::markov::hstack;
use microgrid_koopman::ident::{
    build_hankels, edmdc_fit, estimate_c, estimate_markov, input_toeplitz, truncated_svd,
    HankelLayout, MeasurementWindow, OkidConfig, OkidEngine,
};
use microgrid_koopman::MgError;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn lti_config(n: usize, rank: usize) -> OkidConfig {
    OkidConfig {
        n,
        eta: 1.0,
        t_opt_steps: 2,
        gamma0: 0.5,
        rank_r: Some(rank),
        ridge: 1e-12,
        layout: HankelLayout::Classical,
        v_nom: 1.0,
    }
}

fn model_markov(
    c: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    count: usize,
) -> Vec<DMatrix<f64>> {
    true_markov(a, b, c, count)
}

#[test]
fn markov_estimate_is_exact_for_lti_data() {
    let mut r = rng(11);
    let (a, b, c) = stable_system(&mut r, 4, 1, 2, 0.9);
    let n = 12;
    let u = gaussian_matrix(&mut r, 1, n);
    let (y, _) = simulate_lti(&a, &b, &c, &u);
    let h = estimate_markov(&y, &u, n, 1e-13).unwrap();
    let err = stacked_relative_error(&h, &true_markov(&a, &b, &c, n));
    assert!(err < 1e-9, "relative error {err}");
}

#[test]
fn markov_estimate_minimises_residual() {
    let mut r = rng(5);
    let u = gaussian_matrix(&mut r, 2, 15);
    let y = gaussian_matrix(&mut r, 3, 15);
    let blocks = 4;
    let h = estimate_markov(&y, &u, blocks, 1e-14).unwrap();
    let t = input_toeplitz(&u, blocks);
    let resid = &y - hstack(&h) * &t;
    let normal = &resid * t.transpose();
    assert!(
        normal.norm() < 1e-10 * y.norm() * t.norm(),
        "normal equations violated: {}",
        normal.norm()
    );
}

#[test]
fn zero_input_is_unexcited() {
    let y = DMatrix::from_element(2, 5, 1.0);
    let u = DMatrix::zeros(1, 5);
    assert!(matches!(
        estimate_markov(&y, &u, 5, 1e-8),
        Err(MgError::Unexcited)
    ));
}

#[test]
fn output_map_forward_synthesis() {
    let mut r = rng(3);
    let c = gaussian_matrix(&mut r, 3, 5);
    let z = gaussian_matrix(&mut r, 5, 12);
    let y = &c * &z;
    assert!((estimate_c(&y, &z, 1e-12) - c).norm() < 1e-10);
}

#[test]
fn era_reproduces_markov_of_low_order_system() {
    let mut r = rng(21);
    for _ in 0..10 {
        let nx = r.random_range(2..=6);
        let p = r.random_range(1..=3);
        let (a, b, c) = stable_system(&mut r, nx, 1, p, 0.95);
        let n = 20;
        let u = gaussian_matrix(&mut r, 1, n);
        let (y, xs) = simulate_lti(&a, &b, &c, &u);
        let mut eng = OkidEngine::enhanced(lti_config(n, nx)).unwrap();
        for step in 0..3 {
            let out = eng.identify_data(&y, &xs, &u).unwrap();
            let m = &out.model;
            let est = model_markov(&m.c_markov, &m.a, &m.b, n);
            let err = stacked_relative_error(&est, &true_markov(&a, &b, &c, n));
            assert!(err < 1e-6, "step {step}, nx {nx}: relative error {err}");
            assert!((0.0..=1.0).contains(&m.gamma_opt));
        }
    }
}

#[test]
fn toeplitz_layout_last_block_is_structurally_zero() {
    let mut r = rng(8);
    let (a, b, c) = stable_system(&mut r, 3, 1, 2, 0.9);
    let n = 8;
    let u = gaussian_matrix(&mut r, 1, n);
    let (y, _) = simulate_lti(&a, &b, &c, &u);
    let h = estimate_markov(&y, &u, HankelLayout::UpperToeplitz.markov_blocks(n), 1e-12).unwrap();
    assert_eq!(h.len(), n + 1);
    assert!(h[n].norm() == 0.0);
    let (hh, hp) = build_hankels(&h, HankelLayout::UpperToeplitz).unwrap();
    assert_eq!(hh.shape(), (2 * n, n));
    assert_eq!(hp.shape(), (2 * n, n));
}

#[test]
fn golden_section_matches_dense_grid() {
    for (k, centre) in [0.013, 0.27, 0.5, 0.731, 0.995].iter().enumerate() {
        let f = |g: f64| ((g - centre) * 3.0).powi(2) + 0.1 * (5.0 * g).sin() + k as f64;
        let found = minimize_on_unit_interval(f, 0.5);
        let dense = (0..=100_000)
            .map(|i| f(i as f64 / 100_000.0))
            .fold(f64::INFINITY, f64::min);
        assert!(
            found.objective <= dense + 1e-9,
            "centre {centre}: {} vs {dense}",
            found.objective
        );
        assert!((0.0..=1.0).contains(&found.gamma));
    }
}

#[test]
fn flat_objective_returns_half_and_nan_keeps_previous() {
    let flat = minimize_on_unit_interval(|_| 2.0, 0.9);
    assert!(flat.flat && flat.gamma == 0.5);
    let bad = minimize_on_unit_interval(|g| if g > 0.4 { f64::NAN } else { g }, 0.3);
    assert!(bad.non_finite && bad.gamma == 0.3);
}

#[test]
fn gamma_objective_minimum_matches_grid_on_real_hankel() {
    let mut r = rng(4);
    let (a, b, c) = stable_system(&mut r, 3, 1, 2, 0.8);
    let n = 10;
    let u = gaussian_matrix(&mut r, 1, n);
    let (y, xs) = simulate_lti(&a, &b, &c, &u);
    let h = estimate_markov(&y, &u, n, 1e-12).unwrap();
    let (hh, _) = build_hankels(&h, HankelLayout::Classical).unwrap();
    let svd = truncated_svd(&hh, 3);
    let cm = estimate_c(&y, &xs, 1e-12);
    let f = |g: f64| gamma_objective(&svd, &cm, 1, g, 1e-12).unwrap();
    let found = minimize_on_unit_interval(f, 0.5);
    let dense = (0..=2000)
        .map(|i| f(i as f64 / 2000.0))
        .fold(f64::INFINITY, f64::min);
    assert!(found.objective <= dense + 1e-9 * dense.max(1.0));
}

#[test]
fn enhanced_and_conventional_agree_at_step_zero() {
    let mut r = rng(9);
    let n_bus = 3;
    let len = 9;
    let theta = gaussian_matrix(&mut r, n_bus, len) * 0.05;
    let v = gaussian_matrix(&mut r, n_bus, len).map(|x| 1.0 + 0.01 * x);
    let om = gaussian_matrix(&mut r, n_bus, len) * 0.1;
    let u = gaussian_matrix(&mut r, 2 * n_bus, len) * 0.01;
    let w = MeasurementWindow::new(theta, v, om, u).unwrap();
    let cfg = OkidConfig::with_window(len);
    let e = OkidEngine::enhanced(cfg.clone())
        .unwrap()
        .identify(&w)
        .unwrap()
        .model;
    let c = OkidEngine::conventional(cfg)
        .unwrap()
        .identify(&w)
        .unwrap()
        .model;
    assert!((&e.a - &c.a).norm() <= 1e-12);
    assert!((&e.b - &c.b).norm() <= 1e-12);
    assert!((&e.c - &c.c).norm() <= 1e-12);
    assert_eq!(e.gamma_opt, 0.5);
}

#[test]
fn realization_at_half_is_balanced() {
    let mut r = rng(12);
    let (a, b, c) = stable_system(&mut r, 3, 1, 1, 0.8);
    let h = true_markov(&a, &b, &c, 10);
    let (hh, hp) = build_hankels(&h, HankelLayout::Classical).unwrap();
    let svd = truncated_svd(&hh, 3);
    let (ar, br) = realize_raw(&svd, &hp, 0.5, 3, 1).unwrap();
    let cr = era_output_matrix(&svd, 0.5, 1, 3);
    let est = true_markov(&ar, &br, &cr, 10);
    assert!(stacked_relative_error(&est, &h) < 1e-8);
    assert_eq!(b_candidate(&svd, 0.5, 3, 1).unwrap(), br);
}

#[test]
fn edmdc_recovers_exact_linear_dynamics() {
    let mut r = rng(2);
    let (a, b, _) = stable_system(&mut r, 3, 2, 1, 0.9);
    let len = 20;
    let u = gaussian_matrix(&mut r, 2, len);
    let mut z = DMatrix::zeros(3, len);
    z.set_column(0, &gaussian_matrix(&mut r, 3, 1).column(0));
    for j in 1..len {
        let next = &a * z.column(j - 1) + &b * u.column(j);
        z.set_column(j, &next);
    }
    let (ae, be, rank) = edmdc_fit(&z, &u, 1e-12).unwrap();
    assert_eq!(rank, 5);
    assert!((ae - a).norm() < 1e-8);
    assert!((be - b).norm() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eckart_young_truncation_error(seed in 0u64..10_000, rows in 2usize..9, cols in 2usize..9, rank in 1usize..8) {
        let mut r = rng(seed);
        let h = gaussian_matrix(&mut r, rows, cols);
        let svd = truncated_svd(&h, rank);
        let sv = {
            let mut s: Vec<f64> = h.clone().svd(false, false).singular_values.iter().copied().collect();
            s.sort_by(|a, b| b.total_cmp(a));
            s
        };
        let k = svd.rank();
        let tail: f64 = sv[k..].iter().map(|s| s * s).sum::<f64>().sqrt();
        let err = (&h - svd.reconstruct()).norm();
        prop_assert!((err - tail).abs() <= 1e-10 * h.norm().max(1.0));
        let spectral = sv.get(k).copied().unwrap_or(0.0);
        let err2 = (&h - svd.reconstruct()).svd(false, false).singular_values.max();
        prop_assert!((err2 - spectral).abs() <= 1e-10 * h.norm().max(1.0));
    }

    #[test]
    fn realized_models_have_consistent_shapes(seed in 0u64..10_000, n_bus in 1usize..4, len in 4usize..12) {
        let mut r = rng(seed);
        let theta = gaussian_matrix(&mut r, n_bus, len) * 0.05;
        let v = gaussian_matrix(&mut r, n_bus, len).map(|x| 1.0 + 0.01 * x);
        let om = gaussian_matrix(&mut r, n_bus, len) * 0.1;
        let u = gaussian_matrix(&mut r, 2 * n_bus, len) * 0.01;
        let w = MeasurementWindow::new(theta, v, om, u).unwrap();
        let mut eng = OkidEngine::enhanced(OkidConfig::with_window(len)).unwrap();
        let out = eng.identify(&w).unwrap();
        let m = out.model;
        prop_assert_eq!(m.a.shape(), (4 * n_bus, 4 * n_bus));
        prop_assert_eq!(m.b.shape(), (4 * n_bus, 2 * n_bus));
        prop_assert_eq!(m.c.shape(), (2 * n_bus, 4 * n_bus));
        prop_assert!(m.rank_r <= 4 * n_bus);
        prop_assert!(m.is_finite());
        prop_assert!((0.0..=1.0).contains(&m.gamma_opt));
    }

    #[test]
    fn identification_is_deterministic(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let (a, b, c) = stable_system(&mut r, 3, 1, 2, 0.9);
        let u = gaussian_matrix(&mut r, 1, 10);
        let (y, xs) = simulate_lti(&a, &b, &c, &u);
        let run = || {
            let mut e = OkidEngine::enhanced(lti_config(10, 3)).unwrap();
            (0..3).map(|_| e.identify_data(&y, &xs, &u).unwrap().model).last().unwrap()
        };
        prop_assert_eq!(run(), run());
    }
}
