//! CARMA(p, q) models and their non-negativity classifiers.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csv;
use crate::error::{Error, Result};
use crate::kernel::{f_explicit_with_zeros, kernel_statespace, min_scan, KernelGrid};
use crate::measure::{DelayMeasure, ExpPolyTerm, GridParams};
use crate::polynomial::{is_real_within, sdde_reduction, sort_roots, Polynomial, REALNESS_TOL, ROOT_CLUSTER_TOL};

/// Tolerance on `min g` for the kernel-scan arm.
pub const KERNEL_SCAN_TOL: f64 = 1e-6;
/// Points per kernel scan.
pub const KERNEL_SCAN_POINTS: usize = 20_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CarmaModel {
    p_poly: Polynomial,
    q_poly: Polynomial,
    alpha: Vec<Complex64>,
    beta: Vec<Complex64>,
    /// Set by [`compose`] when the factors certify a non-negative kernel.
    composed_nonneg: bool,
}

impl CarmaModel {
    /// Validates monic `P`, `Q` with `deg Q < deg P` and a causal `P`.
    pub fn new(p: Polynomial, q: Polynomial) -> Result<Self> {
        let alpha = p.roots()?;
        let beta = if q.degree() == 0 { Vec::new() } else { q.roots()? };
        Self::assemble(p, q, alpha, beta)
    }

    /// Builds `P`, `Q` from their zeros; the given zeros are kept verbatim.
    pub fn from_zeros(alpha: &[Complex64], beta: &[Complex64]) -> Result<Self> {
        let p = Polynomial::from_roots(alpha)?;
        let q = Polynomial::from_roots(beta)?;
        let (mut alpha, mut beta) = (alpha.to_vec(), beta.to_vec());
        sort_roots(&mut alpha);
        sort_roots(&mut beta);
        Self::assemble(p, q, alpha, beta)
    }

    pub fn from_real_zeros(alpha: &[f64], beta: &[f64]) -> Result<Self> {
        let c = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
        Self::from_zeros(&c(alpha), &c(beta))
    }

    fn assemble(p: Polynomial, q: Polynomial, alpha: Vec<Complex64>, beta: Vec<Complex64>) -> Result<Self> {
        if !p.is_monic() || !q.is_monic() {
            return Err(Error::NotMonic);
        }
        if p.degree() == 0 || q.degree() >= p.degree() {
            return Err(Error::DegreeMismatch(format!(
                "CARMA needs 0 <= deg Q < deg P, got deg P = {}, deg Q = {}",
                p.degree(),
                q.degree()
            )));
        }
        if let Some(&z) = alpha.iter().find(|z| z.re >= 0.0) {
            return Err(Error::NonCausal(z));
        }
        Ok(Self { p_poly: p, q_poly: q, alpha, beta, composed_nonneg: false })
    }

    pub fn p(&self) -> &Polynomial {
        &self.p_poly
    }

    pub fn q(&self) -> &Polynomial {
        &self.q_poly
    }

    pub fn ar_order(&self) -> usize {
        self.p_poly.degree()
    }

    pub fn ma_order(&self) -> usize {
        self.q_poly.degree()
    }

    /// Zeros of `P`, sorted by descending real part.
    pub fn alpha(&self) -> &[Complex64] {
        &self.alpha
    }

    /// Zeros of `Q`, sorted by descending real part.
    pub fn beta(&self) -> &[Complex64] {
        &self.beta
    }

    pub fn is_invertible(&self) -> bool {
        self.beta.iter().all(|b| b.re < 0.0)
    }

    pub fn nonneg_by_composition(&self) -> bool {
        self.composed_nonneg
    }

    /// Horizon long enough for the slowest mode to decay by `e^{-40}`.
    pub fn default_horizon(&self) -> f64 {
        let slowest = self.alpha.iter().map(|a| -a.re).fold(f64::INFINITY, f64::min);
        40.0 / slowest
    }

    /// Kernel `b' e^{At} e_p` on `[0, horizon)` with [`KERNEL_SCAN_POINTS`] points.
    pub fn kernel(&self, horizon: Option<f64>) -> Result<KernelGrid> {
        let horizon = horizon.unwrap_or_else(|| self.default_horizon());
        kernel_statespace(&self.p_poly, &self.q_poly, horizon, horizon / KERNEL_SCAN_POINTS as f64)
    }

    fn check_invertible(&self) -> Result<()> {
        match self.beta.iter().find(|b| b.re >= 0.0) {
            Some(&b) => Err(Error::NonInvertible(b)),
            None => Ok(()),
        }
    }
}

fn all_real(zs: &[Complex64]) -> bool {
    zs.iter().all(|&z| is_real_within(z, REALNESS_TOL))
}

fn sorted_real_desc(zs: &[Complex64]) -> Vec<f64> {
    let mut v: Vec<f64> = zs.iter().map(|z| z.re).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Ordering condition: real negative zeros with `sum_{j<=k} alpha_j >= sum_{j<=k} beta_j`
/// for `k = 1..q`, both lists sorted in descending order.
pub fn ball_tsai_check(m: &CarmaModel) -> bool {
    if !all_real(&m.alpha) || !all_real(&m.beta) {
        return false;
    }
    let a = sorted_real_desc(&m.alpha);
    let b = sorted_real_desc(&m.beta);
    if a.iter().chain(&b).any(|&x| x >= 0.0) {
        return false;
    }
    let (mut sa, mut sb) = (0.0, 0.0);
    for k in 0..b.len() {
        sa += a[k];
        sb += b[k];
        if sa < sb - REALNESS_TOL * (1.0 + sb.abs()) {
            return false;
        }
    }
    true
}

/// `(lambda, f)` such that the SDDE with delay `-lambda delta_0 + f(t) dt`
/// has the CARMA process as its stationary solution.
pub fn sdde_form(m: &CarmaModel) -> Result<(f64, Vec<ExpPolyTerm>)> {
    if m.ar_order() != m.ma_order() + 1 {
        return Err(Error::DegreeMismatch(format!(
            "SDDE form needs p = q + 1, got p = {}, q = {}",
            m.ar_order(),
            m.ma_order()
        )));
    }
    m.check_invertible()?;
    let (lambda, _) = sdde_reduction(&m.p_poly, &m.q_poly)?;
    if m.ma_order() == 0 {
        return Ok((lambda, Vec::new()));
    }
    Ok((lambda, f_explicit_with_zeros(&m.p_poly, &m.q_poly, &m.beta)?))
}

/// The delay measure of [`sdde_form`].
pub fn sdde_measure(m: &CarmaModel) -> Result<DelayMeasure> {
    let (lambda, f) = sdde_form(m)?;
    DelayMeasure::with_density(lambda, f)
}

/// Sufficient condition `f >= 0`. Exact for `q <= 2`; a complex pair of
/// moving-average zeros with `q = 2` always yields a sign-changing `f`.
pub fn thm31_check(m: &CarmaModel) -> Result<bool> {
    if m.ar_order() == m.ma_order() + 1 && m.ma_order() == 2 {
        m.check_invertible()?;
        return Ok(corollary34(m)?.is_nonneg());
    }
    let phi = sdde_measure(m)?;
    Ok(phi.is_nonneg_on_positive(&GridParams::default()).is_yes())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "snake_case")]
pub enum Cor34Verdict {
    NonnegF,
    NegF(String),
}

impl Cor34Verdict {
    pub fn is_nonneg(&self) -> bool {
        matches!(self, Cor34Verdict::NonnegF)
    }
}

/// Exact sign classifier of `f` for CARMA(3, 2).
pub fn corollary34(m: &CarmaModel) -> Result<Cor34Verdict> {
    if m.ar_order() != 3 || m.ma_order() != 2 {
        return Err(Error::DegreeMismatch(format!(
            "classifier needs p = 3, q = 2, got p = {}, q = {}",
            m.ar_order(),
            m.ma_order()
        )));
    }
    m.check_invertible()?;
    if !all_real(&m.beta) {
        return Ok(Cor34Verdict::NegF("non-real moving-average zeros".into()));
    }
    let b = sorted_real_desc(&m.beta);
    let p = &m.p_poly;
    let dp = p.derivative();
    let tol = |x: f64| 1e-12 * p.coeffs().iter().enumerate().map(|(k, c)| c.abs() * x.abs().powi(k as i32)).sum::<f64>();
    if b[0] - b[1] <= ROOT_CLUSTER_TOL {
        let beta = 0.5 * (b[0] + b[1]);
        let (pv, dv) = (p.eval_real(beta), dp.eval_real(beta));
        return Ok(if pv.max(dv) <= tol(beta) {
            Cor34Verdict::NonnegF
        } else {
            Cor34Verdict::NegF(format!("double zero {beta}: max(P, P') = {} > 0", pv.max(dv)))
        });
    }
    let (p1, p2) = (p.eval_real(b[0]), p.eval_real(b[1]));
    Ok(if p1 <= p2.min(0.0) + tol(b[0]).max(tol(b[1])) {
        Cor34Verdict::NonnegF
    } else {
        Cor34Verdict::NegF(format!("P(beta1) = {p1} exceeds min(P(beta2), 0) = {}", p2.min(0.0)))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Carma21Verdict {
    /// Real autoregressive zeros and `gamma <= max(alpha)`.
    pub nec_suff: bool,
    /// Real autoregressive zeros and `min(alpha) <= gamma <= max(alpha)`.
    pub thm31: bool,
}

pub fn carma21_verdict(m: &CarmaModel) -> Result<Carma21Verdict> {
    if m.ar_order() != 2 || m.ma_order() != 1 {
        return Err(Error::DegreeMismatch(format!(
            "CARMA(2,1) verdict needs p = 2, q = 1, got p = {}, q = {}",
            m.ar_order(),
            m.ma_order()
        )));
    }
    if !all_real(&m.alpha) {
        return Ok(Carma21Verdict { nec_suff: false, thm31: false });
    }
    let a = sorted_real_desc(&m.alpha);
    let gamma = m.beta[0].re;
    let nec_suff = gamma <= a[0];
    Ok(Carma21Verdict { nec_suff, thm31: nec_suff && gamma >= a[1] })
}

/// The model `(P1 P2, Q)`. It is flagged non-negative when `m1` passes
/// [`thm31_check`] and the CAR kernel of `P2` scans non-negative, since the
/// composed kernel is the convolution of the two.
pub fn compose(m1: &CarmaModel, p2: &Polynomial) -> Result<CarmaModel> {
    if p2.degree() == 0 {
        return Ok(m1.clone());
    }
    let car = CarmaModel::new(p2.monic()?, Polynomial::one())?;
    let mut alpha = m1.alpha.clone();
    alpha.extend_from_slice(&car.alpha);
    sort_roots(&mut alpha);
    let mut out = CarmaModel::assemble(&m1.p_poly * p2, m1.q_poly.clone(), alpha, m1.beta.clone())?;
    let m1_ok = m1.ar_order() == m1.ma_order() + 1 && m1.is_invertible() && thm31_check(m1).unwrap_or(false);
    out.composed_nonneg = (m1_ok || m1.composed_nonneg) && min_scan(&car.kernel(None)?).g_min >= -KERNEL_SCAN_TOL;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NonNegVerdict {
    pub by_ordering: Option<bool>,
    pub by_thm31: Option<bool>,
    pub by_cor34: Option<bool>,
    pub by_composition: Option<bool>,
    pub by_kernel_scan: bool,
    pub kernel_min: f64,
    pub kernel_argmin: f64,
    pub notes: Vec<String>,
}

impl NonNegVerdict {
    pub fn any_sufficient(&self) -> bool {
        [self.by_ordering, self.by_thm31, self.by_cor34, self.by_composition].contains(&Some(true))
    }
}

/// Runs every applicable classifier plus a kernel scan.
pub fn nonneg_verdict(m: &CarmaModel) -> Result<NonNegVerdict> {
    let mut notes = Vec::new();
    let sdde_ok = m.ar_order() == m.ma_order() + 1 && m.is_invertible();
    let by_thm31 = if sdde_ok {
        match thm31_check(m) {
            Ok(v) => Some(v),
            Err(e) => {
                notes.push(format!("f-sign classifier not applicable: {e}"));
                None
            }
        }
    } else {
        None
    };
    let by_cor34 = if sdde_ok && m.ar_order() == 3 {
        let v = corollary34(m)?;
        if let Cor34Verdict::NegF(reason) = &v {
            notes.push(format!("f takes negative values: {reason}"));
        }
        Some(v.is_nonneg())
    } else {
        None
    };
    let by_composition = m.composed_nonneg.then_some(true);
    if m.composed_nonneg {
        notes.push("non-negative by composition".into());
    }
    let scan = min_scan(&m.kernel(None)?);
    Ok(NonNegVerdict {
        by_ordering: Some(ball_tsai_check(m)),
        by_thm31,
        by_cor34,
        by_composition,
        by_kernel_scan: scan.g_min >= -KERNEL_SCAN_TOL,
        kernel_min: scan.g_min,
        kernel_argmin: scan.t_min,
        notes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaPairing {
    /// `beta1 = beta2 = beta`.
    Double,
    /// `beta1 = beta`, `beta2` fixed.
    Paired { beta2: f64 },
}

/// Sweep of the moving-average zeros over `beta in [from, to]` for fixed
/// autoregressive zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub alpha: Vec<f64>,
    #[serde(default = "default_pairing")]
    pub pairing: BetaPairing,
    #[serde(default = "default_from")]
    pub from: f64,
    #[serde(default = "default_to")]
    pub to: f64,
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_pairing() -> BetaPairing {
    BetaPairing::Double
}
fn default_from() -> f64 {
    -4.0
}
fn default_to() -> f64 {
    -1.0
}
fn default_step() -> f64 {
    0.01
}

impl ScanSpec {
    pub fn double(alpha: Vec<f64>) -> Self {
        Self { alpha, pairing: BetaPairing::Double, from: default_from(), to: default_to(), step: default_step() }
    }

    /// Grid points `i * step`, both ends inclusive. When `1/step` is an
    /// integer `n` the points are computed as `i / n` so that decimal grid
    /// values such as `-2.5` are represented exactly.
    pub fn grid(&self) -> Vec<f64> {
        let inv = 1.0 / self.step;
        let exact = (inv - inv.round()).abs() < 1e-9;
        let lo = (self.from / self.step - 1e-9).ceil() as i64;
        let hi = (self.to / self.step + 1e-9).floor() as i64;
        (lo..=hi)
            .map(|i| if exact { i as f64 / inv.round() } else { i as f64 * self.step })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegionRow {
    pub beta: f64,
    pub ball_tsai: bool,
    pub cor34: bool,
    pub thm31: bool,
}

pub fn region_scan(spec: &ScanSpec) -> Result<Vec<RegionRow>> {
    if spec.alpha.len() != 3 {
        return Err(Error::DegreeMismatch(format!("region scan needs 3 autoregressive zeros, got {}", spec.alpha.len())));
    }
    if !(spec.step > 0.0) || spec.from > spec.to || spec.to >= 0.0 {
        return Err(Error::InvalidInput("region scan needs step > 0 and from <= to < 0".into()));
    }
    if let BetaPairing::Paired { beta2 } = spec.pairing {
        if beta2 >= 0.0 {
            return Err(Error::NonInvertible(Complex64::new(beta2, 0.0)));
        }
    }
    spec.grid()
        .into_par_iter()
        .map(|beta| {
            let betas = match spec.pairing {
                BetaPairing::Double => [beta, beta],
                BetaPairing::Paired { beta2 } => [beta, beta2],
            };
            let m = CarmaModel::from_real_zeros(&spec.alpha, &betas)?;
            let cor34 = corollary34(&m)?.is_nonneg();
            Ok(RegionRow { beta, ball_tsai: ball_tsai_check(&m), cor34, thm31: cor34 })
        })
        .collect()
}

/// `beta` values where the exact classifier accepts and the ordering test rejects.
pub fn disagreement(rows: &[RegionRow]) -> Vec<f64> {
    rows.iter().filter(|r| r.cor34 && !r.ball_tsai).map(|r| r.beta).collect()
}

pub fn region_csv(rows: &[RegionRow]) -> String {
    let mut out = String::from("beta,ball_tsai,cor34,thm31\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            csv::sci(r.beta),
            r.ball_tsai as u8,
            r.cor34 as u8,
            r.thm31 as u8
        ));
    }
    out
}
