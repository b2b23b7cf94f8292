//! Moving-average kernels `g` with `int_0^inf e^{-ity} g(t) dt = 1/h(iy)`.
//!
//! Three routes: Fourier inversion of `1/h(iy)` for any delay measure, the
//! companion-matrix closed form `b' e^{At} e_p` for CARMA pairs, and residue
//! formulas for the CARMA delay density `f` with transform `R/Q`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::characteristic::{h_unchecked, zero_free, ContourParams};
use crate::csv;
use crate::error::{Error, Result};
use crate::measure::{DelayMeasure, ExpPolyTerm};
use crate::polynomial::{cluster_roots, sdde_reduction, Polynomial, REALNESS_TOL, ROOT_CLUSTER_TOL};

pub const DEFAULT_FFT_POINTS: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMethod {
    Fft,
    StateSpace,
    Resampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelMeta {
    pub method: KernelMethod,
    /// Largest frequency sampled by the Fourier inversion.
    pub frequency_cutoff: Option<f64>,
    /// Rough size of the neglected high-frequency tail.
    pub error_estimate: Option<f64>,
}

/// Kernel samples at `t_k = k dt`, `k = 0..len`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelGrid {
    pub dt: f64,
    pub values: Vec<f64>,
    pub meta: KernelMeta,
}

impl KernelGrid {
    pub fn new(dt: f64, values: Vec<f64>, meta: KernelMeta) -> Result<Self> {
        if !(dt > 0.0) || values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("kernel grid needs dt > 0 and >= 2 finite values".into()));
        }
        Ok(Self { dt, values, meta })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.values.len() as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.values.len()).map(|k| k as f64 * self.dt).collect()
    }

    /// Linear interpolation; zero before 0 and past the last sample.
    pub fn at(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        let x = t / self.dt;
        let i = x.floor() as usize;
        if i + 1 >= self.values.len() {
            return if i + 1 == self.values.len() && x == i as f64 { self.values[i] } else { 0.0 };
        }
        let w = x - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// Re-samples onto step `dt` by linear interpolation over the same horizon.
    pub fn resample(&self, dt: f64) -> Result<KernelGrid> {
        let n = ((self.dt * (self.values.len() - 1) as f64) / dt).floor() as usize + 1;
        let values = (0..n).map(|k| self.at(k as f64 * dt)).collect();
        let meta = KernelMeta { method: KernelMethod::Resampled, ..self.meta };
        KernelGrid::new(dt, values, meta)
    }

    pub fn max_abs_tail(&self) -> f64 {
        let n = self.values.len();
        let start = n - (n / 100).max(1);
        self.values[start..].iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// CSV with header `t,g`.
    pub fn to_csv(&self) -> String {
        csv::render(&["t".into(), "g".into()], &[&self.times(), &self.values])
    }
}

/// `40 / lambda_eff` with `lambda_eff = min(lambda0, |slowest density rate|)`.
pub fn default_horizon(phi: &DelayMeasure) -> f64 {
    let mut lambda_eff = phi.lambda0();
    if let Some(r) = phi.slowest_rate() {
        lambda_eff = lambda_eff.min(-r);
    }
    if lambda_eff > 0.0 { 40.0 / lambda_eff } else { 40.0 }
}

/// Fourier inversion of `1/h(iy)` on `[0, horizon)` with `n_points` samples.
///
/// The part `1/(iy + c)` (kernel `e^{-ct}`, `c = lambda0` when positive) is
/// removed before the FFT so that the inverted residual decays like `y^{-2}`.
pub fn kernel_fft(phi: &DelayMeasure, horizon: f64, n_points: usize) -> Result<KernelGrid> {
    if !zero_free(phi, &ContourParams::default())?.verdict {
        return Err(Error::NonStationary);
    }
    kernel_fft_unchecked(phi, horizon, n_points)
}

pub(crate) fn kernel_fft_unchecked(phi: &DelayMeasure, horizon: f64, n_points: usize) -> Result<KernelGrid> {
    if !(horizon > 0.0) || n_points < 2 {
        return Err(Error::InvalidInput("kernel_fft needs horizon > 0 and n_points >= 2".into()));
    }
    let c = if phi.lambda0() > 0.0 { phi.lambda0() } else { 1.0 };
    let residual = |y: f64| {
        let z = Complex64::new(0.0, y);
        1.0 / h_unchecked(phi, z) - 1.0 / (z + c)
    };
    let (values, cutoff, err) = invert_spectrum(horizon, n_points, residual);
    let dt = horizon / n_points as f64;
    let values = values
        .into_iter()
        .enumerate()
        .map(|(k, r)| (-c * k as f64 * dt).exp() + r)
        .collect();
    KernelGrid::new(
        dt,
        values,
        KernelMeta { method: KernelMethod::Fft, frequency_cutoff: Some(cutoff), error_estimate: Some(err) },
    )
}

/// Inverts a spectrum that decays like `y^{-2}`: returns samples of
/// `(1/2 pi) int F(y) e^{iyt} dy` at `t_m = m horizon / n`, the cutoff
/// frequency and a tail estimate.
pub(crate) fn invert_spectrum<F>(horizon: f64, n: usize, spectrum: F) -> (Vec<f64>, f64, f64)
where
    F: Fn(f64) -> Complex64 + Sync,
{
    let freqs = frequencies(horizon, n);
    let buf: Vec<Complex64> = freqs.par_iter().map(|&y| spectrum(y)).collect();
    let cutoff = (n / 2) as f64 * 2.0 * std::f64::consts::PI / horizon;
    let err = spectrum(cutoff).norm() * cutoff / std::f64::consts::PI;
    (inverse_dft(buf, horizon), cutoff, err)
}

/// FFT-ordered frequencies `k 2 pi / horizon`, `k = 0..n/2-1, -n/2..-1`.
pub(crate) fn frequencies(horizon: f64, n: usize) -> Vec<f64> {
    let dy = 2.0 * std::f64::consts::PI / horizon;
    (0..n)
        .map(|k| if k < n / 2 { k as f64 } else { k as f64 - n as f64 } * dy)
        .collect()
}

/// `(1/horizon) sum_k F_k e^{2 pi i k m / n}`, real part.
pub(crate) fn inverse_dft(mut buf: Vec<Complex64>, horizon: f64) -> Vec<f64> {
    FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    buf.into_iter().map(|v| v.re / horizon).collect()
}

fn companion(p: &Polynomial) -> DMatrix<f64> {
    let n = p.degree();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = -p.coeff(j);
    }
    a
}

/// `g(t) = b' e^{At} e_p` with `A` the companion matrix of `p` and `b` the
/// coefficients of `q` padded with zeros; one matrix exponential at `dt`,
/// then repeated products along the grid.
pub fn kernel_statespace(p: &Polynomial, q: &Polynomial, horizon: f64, dt: f64) -> Result<KernelGrid> {
    if !p.is_monic() {
        return Err(Error::NotMonic);
    }
    if p.degree() == 0 || q.degree() >= p.degree() {
        return Err(Error::DegreeMismatch(format!(
            "need deg Q < deg P, got {} and {}",
            q.degree(),
            p.degree()
        )));
    }
    if let Some(&z) = p.roots()?.iter().find(|z| z.re >= 0.0) {
        return Err(Error::NonCausal(z));
    }
    if !(dt > 0.0) || !(horizon > dt) {
        return Err(Error::InvalidInput("kernel_statespace needs 0 < dt < horizon".into()));
    }
    let n = p.degree();
    let step = (companion(p) * dt).exp();
    let b = DVector::from_iterator(n, (0..n).map(|k| q.coeff(k)));
    let len = (horizon / dt).round() as usize;
    let mut v = DVector::<f64>::zeros(n);
    v[n - 1] = 1.0;
    let mut values = Vec::with_capacity(len);
    for _ in 0..len {
        values.push(b.dot(&v));
        v = &step * v;
    }
    KernelGrid::new(
        dt,
        values,
        KernelMeta { method: KernelMethod::StateSpace, frequency_cutoff: None, error_estimate: None },
    )
}

/// Delay density `f` of an invertible CARMA(p, p-1) pair, i.e. the function
/// with Laplace transform `R/Q` where `R = (z + lambda) Q - P`.
///
/// Distinct zeros `b` of `Q` contribute `-P(b)/Q'(b) e^{bt}`; a double zero
/// (only for `deg Q <= 2`) contributes `-(P(b) t + P'(b)) e^{bt}`.
pub fn f_explicit(p: &Polynomial, q: &Polynomial) -> Result<Vec<ExpPolyTerm>> {
    sdde_reduction(p, q)?;
    if q.degree() == 0 {
        return Ok(Vec::new());
    }
    f_explicit_with_zeros(p, q, &q.roots()?)
}

/// As [`f_explicit`], with the zeros of `q` supplied by the caller.
pub fn f_explicit_with_zeros(p: &Polynomial, q: &Polynomial, zeros: &[Complex64]) -> Result<Vec<ExpPolyTerm>> {
    for &z in zeros {
        if z.im.abs() > REALNESS_TOL {
            return Err(Error::NonRealZero(z));
        }
        if z.re >= 0.0 {
            return Err(Error::NonInvertible(z));
        }
    }
    let dq = q.derivative();
    let dp = p.derivative();
    let mut terms = Vec::new();
    for cluster in cluster_roots(zeros, ROOT_CLUSTER_TOL) {
        let b = cluster.center.re;
        match cluster.multiplicity {
            1 => terms.push(ExpPolyTerm::new(-p.eval_real(b) / dq.eval_real(b), b, 0)?),
            2 if q.degree() <= 2 => {
                terms.push(ExpPolyTerm::new(-p.eval_real(b), b, 1)?);
                terms.push(ExpPolyTerm::new(-dp.eval_real(b), b, 0)?);
            }
            m => {
                return Err(Error::ConfluentOutOfScope(format!(
                    "zero {b} of multiplicity {m} in a degree-{} moving-average polynomial",
                    q.degree()
                )))
            }
        }
    }
    Ok(terms)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MinScan {
    pub t_min: f64,
    pub g_min: f64,
}

/// Grid minimum with one parabolic refinement through the neighbours.
pub fn min_scan(g: &KernelGrid) -> MinScan {
    let v = &g.values;
    let (i, &m) = v
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("kernel grid is non-empty");
    if i == 0 || i + 1 == v.len() {
        return MinScan { t_min: i as f64 * g.dt, g_min: m };
    }
    let (a, b, c) = (v[i - 1], v[i], v[i + 1]);
    let curv = a - 2.0 * b + c;
    if curv <= 0.0 {
        return MinScan { t_min: i as f64 * g.dt, g_min: m };
    }
    let delta = 0.5 * (a - c) / curv;
    let g_min = (b - 0.25 * (a - c) * delta).min(m);
    MinScan { t_min: (i as f64 + delta) * g.dt, g_min }
}

/// `|g(t) - g(t-s) g(s) - int_s^t g(t-u) (phi * (g 1_[0,s]))(u) du|` with `s`, `t`
/// snapped to the grid and integrals done by the trapezoid rule.
pub fn lemma51_residual(phi: &DelayMeasure, g: &KernelGrid, s: f64, t: f64) -> Result<f64> {
    let dt = g.dt;
    let is = (s / dt).round().max(0.0) as usize;
    let it = (t / dt).round() as usize;
    if it >= g.len() || is >= it {
        return Err(Error::InvalidInput(format!(
            "need 0 <= s < t within the kernel horizon, got s = {s}, t = {t}"
        )));
    }
    let v = &g.values;
    let lhs = v[it];
    let mut rhs = v[it - is] * v[is];
    if is == 0 {
        return Ok((lhs - rhs).abs());
    }
    let (s, t) = (is as f64 * dt, it as f64 * dt);

    for a in phi.atoms() {
        let lo = s.max(a.tau);
        let hi = t.min(s + a.tau);
        if hi > lo {
            rhs += a.weight * trapezoid(lo, hi, dt, |u| g.at(t - u) * g.at(u - a.tau));
        }
    }

    if !phi.density().is_empty() {
        // D(u) = int_0^s g(w) f(u - w) dw. Each term c (u-w)^k e^{r(u-w)} splits
        // into powers of u times moments int_0^s g(w) w^i e^{-rw} dw.
        let moments: Vec<Vec<f64>> = phi
            .density()
            .iter()
            .map(|d| {
                (0..=d.power as usize)
                    .map(|i| {
                        let f = |k: usize| {
                            let w = k as f64 * dt;
                            v[k] * w.powi(i as i32) * (-d.rate * w).exp()
                        };
                        grid_trapezoid(0, is, dt, f)
                    })
                    .collect()
            })
            .collect();
        let dens_conv = |u: f64| -> f64 {
            phi.density()
                .iter()
                .zip(&moments)
                .map(|(d, m)| {
                    let k = d.power as usize;
                    let mut sum = 0.0;
                    let mut binom = 1.0;
                    for (i, mi) in m.iter().enumerate() {
                        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                        sum += binom * u.powi((k - i) as i32) * sign * mi;
                        binom = binom * (k - i) as f64 / (i + 1) as f64;
                    }
                    d.coeff * (d.rate * u).exp() * sum
                })
                .sum()
        };
        rhs += grid_trapezoid(is, it, dt, |k| v[it - k] * dens_conv(k as f64 * dt));
    }
    Ok((lhs - rhs).abs())
}

fn grid_trapezoid<F: Fn(usize) -> f64>(from: usize, to: usize, dt: f64, f: F) -> f64 {
    if to <= from {
        return 0.0;
    }
    let inner: f64 = (from + 1..to).map(&f).sum();
    dt * (inner + 0.5 * (f(from) + f(to)))
}

fn trapezoid<F: Fn(f64) -> f64>(a: f64, b: f64, dt: f64, f: F) -> f64 {
    let m = ((b - a) / dt).ceil().max(1.0) as usize;
    let h = (b - a) / m as f64;
    let inner: f64 = (1..m).map(|i| f(a + i as f64 * h)).sum();
    h * (inner + 0.5 * (f(a) + f(b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn statespace_first_order_is_exponential() {
        let g = kernel_statespace(&Polynomial::linear(-1.0), &Polynomial::one(), 10.0, 0.01).unwrap();
        for (k, v) in g.values.iter().enumerate() {
            assert_abs_diff_eq!(*v, (-(k as f64) * 0.01).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn statespace_matches_partial_fractions() {
        let p = Polynomial::new(vec![2.0, 3.0, 1.0]);
        let q = Polynomial::linear(-1.5);
        let g = kernel_statespace(&p, &q, 20.0, 0.01).unwrap();
        assert_abs_diff_eq!(g.values[0], 1.0, epsilon = 1e-12);
        for (k, v) in g.values.iter().enumerate() {
            let t = k as f64 * 0.01;
            assert_abs_diff_eq!(*v, 0.5 * (-t).exp() + 0.5 * (-2.0 * t).exp(), epsilon = 1e-8);
        }
    }

    #[test]
    fn statespace_rejects_non_causal() {
        let p = Polynomial::new(vec![-2.0, 1.0, 1.0]); // zeros 1, -2
        assert!(matches!(
            kernel_statespace(&p, &Polynomial::one(), 10.0, 0.1),
            Err(Error::NonCausal(_))
        ));
    }

    #[test]
    fn f_explicit_examples() {
        let p = Polynomial::new(vec![2.0, 3.0, 1.0]);
        let f = f_explicit(&p, &Polynomial::linear(-1.5)).unwrap();
        assert_eq!(f.len(), 1);
        assert_abs_diff_eq!(f[0].coeff, 0.25, epsilon = 1e-14);
        assert_eq!((f[0].rate, f[0].power), (-1.5, 0));

        let p = Polynomial::from_real_roots(&[-1.0, -4.0, -4.0]);
        let q = Polynomial::from_real_roots(&[-2.25, -2.25]);
        let f = f_explicit(&p, &q).unwrap();
        assert_eq!(f.len(), 2);
        assert_abs_diff_eq!(f[0].coeff, 3.828125, epsilon = 1e-9);
        assert_eq!(f[0].power, 1);
        assert_abs_diff_eq!(f[1].coeff, 1.3125, epsilon = 1e-9);
        assert_abs_diff_eq!(f[0].rate, -2.25, epsilon = 1e-12);

        let p = Polynomial::from_real_roots(&[-1.0, -2.0, -3.0]);
        let q = Polynomial::from_real_roots(&[-1.5, -2.5]);
        let f = f_explicit(&p, &q).unwrap();
        for term in &f {
            assert_abs_diff_eq!(term.coeff, 0.375, epsilon = 1e-12);
        }
    }

    #[test]
    fn f_explicit_errors() {
        let p = Polynomial::from_real_roots(&[-1.0, -2.0, -3.0]);
        let q = Polynomial::new(vec![5.0, 2.0, 1.0]); // -1 +- 2i
        assert!(matches!(f_explicit(&p, &q), Err(Error::NonRealZero(_))));
        let p4 = Polynomial::from_real_roots(&[-1.0, -2.0, -3.0, -4.0]);
        let q3 = Polynomial::from_real_roots(&[-2.0, -2.0, -2.0]);
        assert!(matches!(f_explicit(&p4, &q3), Err(Error::ConfluentOutOfScope(_))));
        let q_bad = Polynomial::from_real_roots(&[1.0, -2.0]);
        assert!(matches!(f_explicit(&p, &q_bad), Err(Error::NonInvertible(_))));
    }

    #[test]
    fn min_scan_examples() {
        let g = kernel_statespace(&Polynomial::linear(-1.0), &Polynomial::one(), 10.0, 0.01).unwrap();
        let m = min_scan(&g);
        assert!(m.g_min > 0.0);
        assert_abs_diff_eq!(m.g_min, (-9.99f64).exp(), epsilon = 1e-12);
        let zero = KernelGrid::new(0.1, vec![0.0; 10], g.meta).unwrap();
        assert_eq!(min_scan(&zero), MinScan { t_min: 0.0, g_min: 0.0 });
    }

    #[test]
    fn interpolation_and_resampling() {
        let g = KernelGrid::new(0.5, vec![1.0, 0.0, 2.0], KernelMeta {
            method: KernelMethod::Fft,
            frequency_cutoff: None,
            error_estimate: None,
        })
        .unwrap();
        assert_eq!(g.at(0.25), 0.5);
        assert_eq!(g.at(1.0), 2.0);
        assert_eq!(g.at(1.2), 0.0);
        assert_eq!(g.at(-0.1), 0.0);
        assert_eq!(g.resample(0.25).unwrap().values, vec![1.0, 0.5, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn ou_fft_is_exact_exponential() {
        let g = kernel_fft(&DelayMeasure::ou(1.0), 40.0, 1 << 12).unwrap();
        for (k, v) in g.values.iter().enumerate().take(1000) {
            assert_abs_diff_eq!(*v, (-(k as f64) * g.dt).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn non_stationary_is_rejected() {
        let phi = DelayMeasure::discrete_delay(1.0, 1.0, 1.5).unwrap();
        assert_eq!(kernel_fft(&phi, 40.0, 1024), Err(Error::NonStationary));
    }

    #[test]
    fn splitting_residual_on_exact_ou_kernel() {
        let g = kernel_statespace(&Polynomial::linear(-1.0), &Polynomial::one(), 20.0, 0.001).unwrap();
        let r = lemma51_residual(&DelayMeasure::ou(1.0), &g, 1.0, 2.0).unwrap();
        assert!(r <= 1e-6, "{r}");
        assert_eq!(lemma51_residual(&DelayMeasure::ou(1.0), &g, 0.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn csv_header() {
        let g = kernel_statespace(&Polynomial::linear(-1.0), &Polynomial::one(), 1.0, 0.5).unwrap();
        assert_eq!(g.to_csv().lines().next(), Some("t,g"));
        assert_eq!(g.to_csv().lines().count(), 3);
    }
}
