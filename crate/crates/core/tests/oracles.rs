//! Kernels and densities checked against independently computed references.

mod common;

use num_complex::Complex64;

use nonneg_sdde::carma::{sdde_measure, CarmaModel};
use nonneg_sdde::kernel::{f_explicit, kernel_fft, kernel_statespace, lemma51_residual, min_scan, KernelGrid};
use nonneg_sdde::measure::{DelayMeasure, ExpPolyTerm};
use nonneg_sdde::polynomial::{sdde_reduction, Polynomial};

use common::*;

fn sup_diff(g: &KernelGrid, t_max: f64, reference: impl Fn(f64) -> f64) -> f64 {
    g.times()
        .into_iter()
        .zip(&g.values)
        .take_while(|(t, _)| *t <= t_max)
        .map(|(t, v)| (v - reference(t)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn discrete_delay_kernel_matches_step_method() {
    for xi in [0.2, -0.8, 0.5, -0.3] {
        let phi = DelayMeasure::discrete_delay(1.0, 1.0, xi).unwrap();
        let g = kernel_fft(&phi, 40.0, 1 << 16).unwrap();
        let err = sup_diff(&g, 20.0, |t| step_method_kernel(1.0, 1.0, xi, t));
        assert!(err <= 1e-3, "xi = {xi}: sup error {err:e}");
    }
}

#[test]
fn negative_feedback_dips_after_the_lag() {
    let phi = DelayMeasure::discrete_delay(1.0, 1.0, -0.8).unwrap();
    let g = kernel_fft(&phi, 40.0, 1 << 16).unwrap();
    let m = min_scan(&g);
    assert!(m.g_min < -0.01 && m.t_min > 1.0, "{m:?}");
    // the step series has its minimum in the same place
    let brute = (0..4000).map(|i| i as f64 * 0.005).map(|t| (t, step_method_kernel(1.0, 1.0, -0.8, t)));
    let (t_ref, g_ref) = brute.fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    assert!((m.g_min - g_ref).abs() < 1e-3 && (m.t_min - t_ref).abs() < 0.02);
}

#[test]
fn fft_and_state_space_kernels_agree_on_random_carma() {
    let mut r = rng(7);
    for p in 1..=3 {
        for _ in 0..8 {
            // the density class holds real exponential polynomials, so MA zeros are real
            let m = CarmaModel::from_zeros(&random_zeros(&mut r, p, true), &random_zeros(&mut r, p - 1, false)).unwrap();
            let horizon = m.default_horizon();
            let phi = sdde_measure(&m).unwrap();
            let g_fft = kernel_fft(&phi, horizon, 1 << 16).unwrap();
            let g_ss = m.kernel(Some(horizon)).unwrap();
            let err = sup_diff(&g_ss, horizon, |t| g_fft.at(t));
            assert!(err <= 2e-3, "p = {p}, alpha {:?}, beta {:?}: sup diff {err:e}", m.alpha(), m.beta());
        }
    }
}

#[test]
fn state_space_kernel_matches_partial_fractions() {
    let mut r = rng(8);
    for p in 2..=4 {
        let alpha = random_zeros(&mut r, p, true);
        let beta = random_zeros(&mut r, p - 1, false);
        let m = CarmaModel::from_zeros(&alpha, &beta).unwrap();
        let g = kernel_statespace(m.p(), m.q(), 20.0, 0.01).unwrap();
        let err = sup_diff(&g, 20.0, |t| partial_fraction_kernel(m.alpha(), m.q(), t));
        assert!(err <= 1e-9, "p = {p}: {err:e}");
    }
}

#[test]
fn kernels_start_at_one() {
    let mut r = rng(9);
    for p in 1..=3 {
        let m = CarmaModel::from_zeros(&random_zeros(&mut r, p, true), &random_zeros(&mut r, p - 1, false)).unwrap();
        assert!((m.kernel(None).unwrap().values[0] - 1.0).abs() <= 1e-12);
        let g = kernel_fft(&sdde_measure(&m).unwrap(), m.default_horizon(), 1 << 16).unwrap();
        assert!((g.values[0] - 1.0).abs() <= 1e-3, "p = {p}: g(0) = {}", g.values[0]);
    }
    for xi in [0.2, -0.8] {
        let g = kernel_fft(&DelayMeasure::discrete_delay(1.0, 1.0, xi).unwrap(), 40.0, 1 << 16).unwrap();
        assert!((g.values[0] - 1.0).abs() <= 1e-3);
    }
}

#[test]
fn explicit_density_has_the_right_laplace_transform() {
    let mut r = rng(10);
    for p in 2..=4 {
        for _ in 0..5 {
            let alpha = random_zeros(&mut r, p, true);
            let beta = random_zeros(&mut r, p - 1, false);
            let (pp, qq) = (Polynomial::from_roots(&alpha).unwrap(), Polynomial::from_roots(&beta).unwrap());
            let (_, rr) = sdde_reduction(&pp, &qq).unwrap();
            let f = f_explicit(&pp, &qq).unwrap();
            let eta = DelayMeasure::new(0.0, vec![], f).unwrap();
            for x in [0.0, 0.3, 1.0, 2.5, 7.0] {
                let want = rr.eval_real(x) / qq.eval_real(x);
                let got = eta.laplace_deriv(x, 0).unwrap();
                assert!((got - want).abs() <= 1e-9 * want.abs().max(1e-12), "x = {x}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn double_root_density_has_the_right_laplace_transform() {
    let pp = Polynomial::from_real_roots(&[-1.0, -4.0, -4.0]);
    let qq = Polynomial::from_real_roots(&[-2.25, -2.25]);
    let (_, rr) = sdde_reduction(&pp, &qq).unwrap();
    let f = f_explicit(&pp, &qq).unwrap();
    assert!(f.iter().any(|t| t.power == 1));
    for x in [0.0, 0.5, 1.5, 4.0, 9.0] {
        let z = Complex64::new(x, 0.0);
        let got: f64 = f.iter().map(|t| t.laplace(z).re).sum();
        let want = rr.eval_real(x) / qq.eval_real(x);
        assert!((got - want).abs() <= 1e-9 * want.abs());
    }
}

#[test]
fn splitting_identity_on_density_models() {
    let mut r = rng(11);
    let models = [
        DelayMeasure::with_density(1.0, vec![ExpPolyTerm::new(0.5, -2.0, 0).unwrap()]).unwrap(),
        DelayMeasure::with_density(2.0, vec![ExpPolyTerm::new(-0.7, -1.5, 1).unwrap()]).unwrap(),
        DelayMeasure::new(
            1.5,
            vec![nonneg_sdde::measure::Atom { tau: 0.5, weight: 0.3 }],
            vec![ExpPolyTerm::new(0.4, -3.0, 0).unwrap()],
        )
        .unwrap(),
    ];
    for phi in models {
        let g = kernel_fft(&phi, 40.0, 1 << 16).unwrap();
        for _ in 0..10 {
            let s = uniform(&mut r, 0.05, 8.0);
            let t = s + uniform(&mut r, 0.05, 8.0);
            let res = lemma51_residual(&phi, &g, s, t).unwrap();
            assert!(res <= 1e-3, "s = {s}, t = {t}: {res:e}");
        }
    }
}
