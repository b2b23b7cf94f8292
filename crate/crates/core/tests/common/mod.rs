//! Independent oracles and random model generators shared by the test targets.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nonneg_sdde::carma::CarmaModel;
use nonneg_sdde::polynomial::Polynomial;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Series solution of `g' = -lambda g + xi g(t - tau)`, `g(0) = 1`, `g = 0` on
/// `t < 0`, obtained by integrating interval by interval:
/// `g(t) = sum_{k <= t/tau} xi^k (t - k tau)^k / k! e^{-lambda (t - k tau)}`.
pub fn step_method_kernel(lambda: f64, tau: f64, xi: f64, t: f64) -> f64 {
    let mut sum = 0.0;
    let mut k = 0usize;
    let mut fact = 1.0;
    while k as f64 * tau <= t {
        let s = t - k as f64 * tau;
        sum += xi.powi(k as i32) * s.powi(k as i32) / fact * (-lambda * s).exp();
        k += 1;
        fact *= k as f64;
    }
    sum
}

/// `sum_j Q(a_j) / P'(a_j) e^{a_j t}` over simple zeros of `P`.
pub fn partial_fraction_kernel(alpha: &[Complex64], q: &Polynomial, t: f64) -> f64 {
    let p = Polynomial::from_roots(alpha).unwrap();
    let dp = p.derivative();
    alpha
        .iter()
        .map(|&a| q.eval(a) / dp.eval(a) * (a * t).exp())
        .sum::<Complex64>()
        .re
}

pub fn uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * r.random::<f64>()
}

/// `k` stable zeros closed under conjugation: real ones in `[-5, -0.2]`,
/// pairs with real part in `[-5, -0.2]` and imaginary part in `[0.1, 3]`.
pub fn random_zeros(r: &mut ChaCha8Rng, k: usize, allow_complex: bool) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        if allow_complex && k - out.len() >= 2 && r.random_bool(0.35) {
            let re = uniform(r, -5.0, -0.2);
            let im = uniform(r, 0.1, 3.0);
            out.push(Complex64::new(re, im));
            out.push(Complex64::new(re, -im));
        } else {
            out.push(Complex64::new(uniform(r, -5.0, -0.2), 0.0));
        }
    }
    out
}

/// Causal and invertible CARMA(p, p-1).
pub fn random_carma(r: &mut ChaCha8Rng, p: usize) -> CarmaModel {
    let alpha = random_zeros(r, p, true);
    let beta = random_zeros(r, p - 1, true);
    CarmaModel::from_zeros(&alpha, &beta).unwrap()
}

/// Residue form of the delay density for simple moving-average zeros,
/// complex ones included, multiplied by `e^{-shift t}`:
/// `-sum_j P(b_j)/Q'(b_j) e^{(b_j - shift) t}`.
pub fn residue_density_scaled(m: &CarmaModel, shift: f64, t: f64) -> f64 {
    let dq = m.q().derivative();
    m.beta()
        .iter()
        .map(|&b| -m.p().eval(b) / dq.eval(b) * ((b - shift) * t).exp())
        .sum::<Complex64>()
        .re
}

/// Dense sign scan of a density already divided by its slowest exponential,
/// on a window long enough for the faster modes to die out.
pub fn scaled_density_nonneg_by_scan(scaled: impl Fn(f64) -> f64, fastest_gap: f64, oscillation: f64) -> bool {
    let mut horizon = 40.0 / fastest_gap.max(1e-3);
    if oscillation > 0.0 {
        horizon = horizon.max(8.0 * std::f64::consts::PI / oscillation);
    }
    let n = 40_000;
    let vals: Vec<f64> = (0..=n).map(|i| scaled(horizon * i as f64 / n as f64)).collect();
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    vals.iter().all(|&v| v >= -1e-9 * scale)
}

pub fn random_nonneg_matrix(r: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |_, _| if r.random_bool(0.7) { uniform(r, 0.0, 2.0) } else { 0.0 })
}

pub fn spectral_radius(b: &DMatrix<f64>) -> f64 {
    b.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}
