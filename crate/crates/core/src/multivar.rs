//! Matrix-valued delay measures, M-matrices and matrix kernels.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::characteristic::{half_disk_winding, ContourParams, ZeroFreeReport};
use crate::csv;
use crate::error::{Error, Result};
use crate::kernel::{frequencies, inverse_dft, KernelGrid, KernelMeta, KernelMethod};
use crate::measure::{DelayMeasure, GridParams};

pub const MAX_DIMENSION: usize = 16;
pub const OFFDIAG_TOL: f64 = 1e-12;
pub const SPECTRAL_TOL: f64 = 1e-10;
pub const MATEXP_TOL: f64 = -1e-10;
pub const MAX_CONDITION: f64 = 1e12;

/// `d x d` array of scalar delay measures, stored row-major. Entry `(j, k)`
/// carries `-lambda_jk delta_0 + eta_jk`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatrixDelayMeasure {
    d: usize,
    entries: Vec<DelayMeasure>,
}

impl MatrixDelayMeasure {
    pub fn new(rows: Vec<Vec<DelayMeasure>>) -> Result<Self> {
        let d = rows.len();
        if !(2..=MAX_DIMENSION).contains(&d) {
            return Err(Error::InvalidInput(format!("dimension must be in 2..={MAX_DIMENSION}, got {d}")));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::NotSquare { rows: d, cols: r.len() });
        }
        Ok(Self { d, entries: rows.into_iter().flatten().collect() })
    }

    /// `-lambda delta_0 + eta`, with `eta_jk = eta[j][k]` given as measures
    /// without a point mass at zero.
    pub fn from_parts(lambda: &DMatrix<f64>, eta: impl Fn(usize, usize) -> DelayMeasure) -> Result<Self> {
        if !lambda.is_square() {
            return Err(Error::NotSquare { rows: lambda.nrows(), cols: lambda.ncols() });
        }
        let d = lambda.nrows();
        let rows = (0..d)
            .map(|j| {
                (0..d)
                    .map(|k| {
                        let e = eta(j, k);
                        DelayMeasure::new(lambda[(j, k)], e.atoms().to_vec(), e.density().to_vec())
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    /// Block-diagonal measure with scalar measures on the diagonal.
    pub fn diagonal(blocks: &[DelayMeasure]) -> Result<Self> {
        let d = blocks.len();
        let rows = (0..d)
            .map(|j| (0..d).map(|k| if j == k { blocks[j].clone() } else { DelayMeasure::ou(0.0) }).collect())
            .collect();
        Self::new(rows)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn entry(&self, j: usize, k: usize) -> &DelayMeasure {
        &self.entries[j * self.d + k]
    }

    pub fn lambda(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.d, |j, k| self.entry(j, k).lambda0())
    }

    pub fn eta(&self, j: usize, k: usize) -> DelayMeasure {
        self.entry(j, k).eta()
    }

    pub fn max_lag(&self) -> f64 {
        self.entries.iter().map(|e| e.max_lag()).fold(0.0, f64::max)
    }

    pub fn max_total_variation(&self) -> f64 {
        self.entries.iter().map(|e| e.total_variation()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MMatrixReport {
    pub is_m: bool,
    pub alpha: f64,
    pub spectral_radius_b: f64,
    /// First positive off-diagonal entry in row-major order.
    pub witness: Option<(usize, usize)>,
}

pub fn spectral_radius(b: &DMatrix<f64>) -> f64 {
    b.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `A = alpha I - B` with `B >= 0` and `rho(B) <= alpha`, taking
/// `alpha = max(0, max_j A_jj)`.
pub fn is_m_matrix(a: &DMatrix<f64>) -> Result<MMatrixReport> {
    if !a.is_square() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    let d = a.nrows();
    let witness = (0..d)
        .flat_map(|j| (0..d).map(move |k| (j, k)))
        .find(|&(j, k)| j != k && a[(j, k)] > OFFDIAG_TOL);
    let alpha = a.diagonal().iter().copied().fold(0.0, f64::max);
    let b = DMatrix::<f64>::identity(d, d) * alpha - a;
    let rho = spectral_radius(&b);
    Ok(MMatrixReport { is_m: witness.is_none() && rho <= alpha + SPECTRAL_TOL, alpha, spectral_radius_b: rho, witness })
}

/// Entrywise minimum of `e^{-At}` over `t_grid` is at least `-1e-10`.
pub fn matexp_nonneg_check(a: &DMatrix<f64>, t_grid: &[f64]) -> bool {
    t_grid.iter().all(|&t| (-a * t).exp().min() >= MATEXP_TOL)
}

/// `0` and 81 geometric points from `1e-6` to `1e2`.
pub fn default_t_grid() -> Vec<f64> {
    std::iter::once(0.0).chain((0..=80).map(|i| 10f64.powf(-6.0 + i as f64 / 10.0))).collect()
}

/// `h(z) = z I + Lambda - L[eta](z)`.
pub fn matrix_h_eval(phi: &MatrixDelayMeasure, z: Complex64) -> Result<DMatrix<Complex64>> {
    if z.re < 0.0 {
        return Err(Error::OutsideHalfPlane(z));
    }
    Ok(h_matrix(phi, z))
}

fn h_matrix(phi: &MatrixDelayMeasure, z: Complex64) -> DMatrix<Complex64> {
    let d = phi.d;
    DMatrix::from_fn(d, d, |j, k| {
        let e = phi.entry(j, k);
        let diag = if j == k { z } else { Complex64::new(0.0, 0.0) };
        diag + e.lambda0() - e.laplace_eta(z)
    })
}

/// Winding number of `det h` along the half-disk of radius `2 (1 + d max TV)`.
pub fn det_zero_free(phi: &MatrixDelayMeasure, contour: &ContourParams) -> Result<ZeroFreeReport> {
    let radius = contour.radius.unwrap_or(2.0 * (1.0 + phi.d as f64 * phi.max_total_variation()));
    let oscillation = (radius * phi.max_lag() * 8.0 * phi.d as f64) as usize;
    let params = ContourParams { initial_points: contour.initial_points.max(oscillation), ..*contour };
    half_disk_winding(|z| h_matrix(phi, z).lu().determinant(), radius, &params)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Thm41Report {
    pub zero_free: ZeroFreeReport,
    pub eta_nonneg: bool,
    /// First entry `(j, k)` whose positive-lag part takes negative values.
    pub eta_witness: Option<(usize, usize)>,
    pub m_matrix: MMatrixReport,
    pub verdict: bool,
}

/// Non-negative solution certificate: stationarity, `eta_jk >= 0` and an
/// M-matrix `Lambda`.
pub fn thm41_check(phi: &MatrixDelayMeasure) -> Result<Thm41Report> {
    let zero_free = det_zero_free(phi, &ContourParams::default())?;
    let d = phi.d;
    let eta_witness = (0..d)
        .flat_map(|j| (0..d).map(move |k| (j, k)))
        .find(|&(j, k)| !phi.entry(j, k).is_nonneg_on_positive(&GridParams::default()).is_yes());
    let m_matrix = is_m_matrix(&phi.lambda())?;
    let verdict = zero_free.verdict && eta_witness.is_none() && m_matrix.is_m;
    Ok(Thm41Report { zero_free, eta_nonneg: eta_witness.is_none(), eta_witness, m_matrix, verdict })
}

/// Entry kernels `g_jk` on a common grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatrixKernel {
    pub d: usize,
    /// Row-major `d x d` grids.
    pub entries: Vec<KernelGrid>,
}

impl MatrixKernel {
    pub fn entry(&self, j: usize, k: usize) -> &KernelGrid {
        &self.entries[j * self.d + k]
    }

    pub fn dt(&self) -> f64 {
        self.entries[0].dt
    }

    pub fn len(&self) -> usize {
        self.entries[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries[0].is_empty()
    }

    pub fn entry_minima(&self) -> Vec<f64> {
        self.entries.iter().map(|g| g.values.iter().copied().fold(f64::INFINITY, f64::min)).collect()
    }

    pub fn resample(&self, dt: f64) -> Result<MatrixKernel> {
        let entries = self.entries.iter().map(|g| g.resample(dt)).collect::<Result<_>>()?;
        Ok(MatrixKernel { d: self.d, entries })
    }

    /// CSV with header `t,g11,g12,...,gdd`.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["t".to_string()];
        for j in 1..=self.d {
            for k in 1..=self.d {
                header.push(format!("g{j}{k}"));
            }
        }
        let t = self.entries[0].times();
        let mut cols: Vec<&[f64]> = vec![&t];
        cols.extend(self.entries.iter().map(|g| g.values.as_slice()));
        csv::render(&header, &cols)
    }
}

/// Fourier inversion of `h(iy)^{-1}` entrywise. The transform
/// `(iy I + Lambda)^{-1}` of `e^{-Lambda t}` is subtracted first when every
/// eigenvalue of `Lambda` has positive real part; otherwise `(iy + 1)^{-1} I`
/// is used.
pub fn matrix_kernel_fft(phi: &MatrixDelayMeasure, horizon: f64, n_points: usize) -> Result<MatrixKernel> {
    if !det_zero_free(phi, &ContourParams::default())?.verdict {
        return Err(Error::NonStationary);
    }
    if !(horizon > 0.0) || n_points < 2 {
        return Err(Error::InvalidInput("matrix_kernel_fft needs horizon > 0 and n_points >= 2".into()));
    }
    let d = phi.d;
    let lambda = phi.lambda();
    let stable = lambda.complex_eigenvalues().iter().all(|z| z.re > 0.0);
    let reference = if stable { lambda } else { DMatrix::identity(d, d) };
    let reference_c = reference.map(|v| Complex64::new(v, 0.0));
    let eye = DMatrix::<Complex64>::identity(d, d);

    let freqs = frequencies(horizon, n_points);
    let spectra: Vec<DMatrix<Complex64>> = freqs
        .par_iter()
        .map(|&y| {
            let iy = Complex64::new(0.0, y);
            let h = h_matrix(phi, iy);
            let sv = h.clone().singular_values();
            let condition = sv.max() / sv.min();
            if !(condition <= MAX_CONDITION) {
                return Err(Error::IllConditioned { y, condition });
            }
            let inv = h.try_inverse().ok_or(Error::IllConditioned { y, condition: f64::INFINITY })?;
            let r = (&eye * iy + &reference_c).try_inverse().ok_or(Error::IllConditioned { y, condition: f64::INFINITY })?;
            Ok(inv - r)
        })
        .collect::<Result<_>>()?;

    let dt = horizon / n_points as f64;
    let step = (-&reference * dt).exp();
    let mut ref_t = Vec::with_capacity(n_points);
    let mut e = DMatrix::<f64>::identity(d, d);
    for _ in 0..n_points {
        ref_t.push(e.clone());
        e = &step * e;
    }
    let cutoff = (n_points / 2) as f64 * 2.0 * std::f64::consts::PI / horizon;
    let tail = spectra[n_points / 2].iter().map(|v| v.norm()).fold(0.0, f64::max) * cutoff / std::f64::consts::PI;
    let entries = (0..d * d)
        .into_par_iter()
        .map(|idx| {
            let (j, k) = (idx / d, idx % d);
            let buf = spectra.iter().map(|m| m[(j, k)]).collect();
            let values = inverse_dft(buf, horizon)
                .into_iter()
                .zip(&ref_t)
                .map(|(r, e)| r + e[(j, k)])
                .collect();
            let meta = KernelMeta { method: KernelMethod::Fft, frequency_cutoff: Some(cutoff), error_estimate: Some(tail) };
            KernelGrid::new(dt, values, meta)
        })
        .collect::<Result<_>>()?;
    Ok(MatrixKernel { d, entries })
}

/// Default horizon `40 / min_j Re(eig Lambda)`, or 40 when `Lambda` is not stable.
pub fn default_matrix_horizon(phi: &MatrixDelayMeasure) -> f64 {
    let slowest = phi.lambda().complex_eigenvalues().iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let slowest = phi
        .entries
        .iter()
        .filter_map(|e| e.slowest_rate())
        .fold(slowest, |m, r| m.min(-r));
    if slowest > 0.0 { 40.0 / slowest } else { 40.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m2(v: [f64; 4]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &v)
    }

    fn coupled() -> MatrixDelayMeasure {
        MatrixDelayMeasure::from_parts(&(DMatrix::identity(2, 2) * 2.0), |_, _| {
            DelayMeasure::discrete_delay(0.0, 1.0, 0.1).unwrap()
        })
        .unwrap()
    }

    #[test]
    fn m_matrix_examples() {
        let r = is_m_matrix(&DMatrix::identity(3, 3)).unwrap();
        assert!(r.is_m);
        assert_eq!((r.alpha, r.spectral_radius_b), (1.0, 0.0));
        let r = is_m_matrix(&m2([2.0, -1.0, -1.0, 2.0])).unwrap();
        assert!(r.is_m);
        assert_eq!(r.alpha, 2.0);
        assert_abs_diff_eq!(r.spectral_radius_b, 1.0, epsilon = 1e-12);
        let r = is_m_matrix(&m2([1.0, 2.0, 0.0, 1.0])).unwrap();
        assert!(!r.is_m);
        assert_eq!(r.witness, Some((0, 1)));
        assert!(is_m_matrix(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn matexp_examples() {
        let g = default_t_grid();
        assert!(matexp_nonneg_check(&m2([2.0, -1.0, -1.0, 2.0]), &g));
        assert!(!matexp_nonneg_check(&m2([1.0, 2.0, 0.0, 1.0]), &g));
        assert!(matexp_nonneg_check(&DMatrix::zeros(2, 2), &g));
    }

    #[test]
    fn h_matrix_examples() {
        let h = matrix_h_eval(&coupled(), Complex64::new(0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(h[(0, 0)].re, 1.9, epsilon = 1e-15);
        assert_abs_diff_eq!(h[(0, 1)].re, -0.1, epsilon = 1e-15);
        let y = Complex64::new(0.0, 1.7);
        let (a, b) = (matrix_h_eval(&coupled(), y).unwrap(), matrix_h_eval(&coupled(), y.conj()).unwrap());
        for (p, q) in a.iter().zip(b.iter()) {
            assert_abs_diff_eq!((p - q.conj()).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_free_examples() {
        let c = ContourParams::default();
        let ou = MatrixDelayMeasure::from_parts(&(DMatrix::identity(3, 3) * 2.0), |_, _| DelayMeasure::ou(0.0)).unwrap();
        assert!(det_zero_free(&ou, &c).unwrap().verdict);
        assert!(det_zero_free(&coupled(), &c).unwrap().verdict);
        let unstable = MatrixDelayMeasure::from_parts(&(-DMatrix::identity(2, 2)), |_, _| DelayMeasure::ou(0.0)).unwrap();
        assert!(!det_zero_free(&unstable, &c).unwrap().verdict);
    }

    #[test]
    fn system_certificate_examples() {
        assert!(thm41_check(&coupled()).unwrap().verdict);
        let not_m = MatrixDelayMeasure::from_parts(&m2([1.0, 2.0, 0.0, 1.0]), |_, _| DelayMeasure::ou(0.0)).unwrap();
        assert!(!thm41_check(&not_m).unwrap().verdict);
        let neg = MatrixDelayMeasure::from_parts(&(DMatrix::identity(2, 2) * 2.0), |j, k| {
            let xi = if (j, k) == (0, 1) { -0.1 } else { 0.1 };
            DelayMeasure::discrete_delay(0.0, 1.0, xi).unwrap()
        })
        .unwrap();
        let r = thm41_check(&neg).unwrap();
        assert!(!r.verdict);
        assert_eq!(r.eta_witness, Some((0, 1)));
    }

    #[test]
    fn matrix_ou_kernel() {
        let phi = MatrixDelayMeasure::from_parts(&m2([2.0, -1.0, -1.0, 2.0]), |_, _| DelayMeasure::ou(0.0)).unwrap();
        let g = matrix_kernel_fft(&phi, 40.0, 1 << 14).unwrap();
        for m in (0..g.len()).step_by(97) {
            let t = m as f64 * g.dt();
            let (c, s) = ((-2.0 * t).exp() * t.cosh(), (-2.0 * t).exp() * t.sinh());
            assert_abs_diff_eq!(g.entry(0, 0).values[m], c, epsilon = 1e-3);
            assert_abs_diff_eq!(g.entry(0, 1).values[m], s, epsilon = 1e-3);
        }
        assert!(g.to_csv().starts_with("t,g11,g12,g21,g22\n"));
    }

    #[test]
    fn decoupled_blocks_have_zero_cross_kernels() {
        let phi = MatrixDelayMeasure::diagonal(&[DelayMeasure::ou(1.0), DelayMeasure::ou(3.0)]).unwrap();
        let g = matrix_kernel_fft(&phi, 40.0, 1 << 12).unwrap();
        assert!(g.entry(0, 1).values.iter().all(|v| v.abs() <= 1e-6));
        assert!(g.entry(1, 0).values.iter().all(|v| v.abs() <= 1e-6));
    }
}
