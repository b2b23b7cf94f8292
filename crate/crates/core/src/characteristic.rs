//! The characteristic function `h(z) = z - int e^{-zt} phi(dt)`, its zero
//! count on the closed right half-plane, and bounded-order complete
//! monotonicity checks of `1/h` via the Faà di Bruno expansion.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{DelayMeasure, MAX_DERIVATIVE_ORDER};

pub const AXIS_TOLERANCE: f64 = 1e-9;
pub const CM_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_CM_ORDER: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContourParams {
    /// Half-disk radius; `None` picks `2 (1 + TV(phi))`.
    pub radius: Option<f64>,
    /// Starting samples on each of the two boundary pieces.
    pub initial_points: usize,
    pub max_points: usize,
    pub axis_tolerance: f64,
}

impl Default for ContourParams {
    fn default() -> Self {
        Self { radius: None, initial_points: 1024, max_points: 4_000_000, axis_tolerance: AXIS_TOLERANCE }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ZeroFreeReport {
    pub winding: i64,
    pub contour_radius: f64,
    pub min_modulus_on_axis: f64,
    pub points_used: usize,
    pub verdict: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CmFailure {
    pub n: usize,
    pub x: f64,
    /// `(-1)^n d^n/dx^n (1/h)(x)`.
    pub value: f64,
    /// `h(x)^{n+1}` times `value`; a polynomial in the Laplace derivatives.
    pub scaled: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CMReport {
    pub n_checked: usize,
    pub points_checked: usize,
    pub failure: Option<CmFailure>,
    pub verdict: bool,
}

/// `h(z) = z + lambda0 - L_eta(z)` on `Re z >= 0`.
pub fn h_eval(phi: &DelayMeasure, z: Complex64) -> Result<Complex64> {
    if z.re < 0.0 {
        return Err(Error::OutsideHalfPlane(z));
    }
    Ok(h_unchecked(phi, z))
}

pub(crate) fn h_unchecked(phi: &DelayMeasure, z: Complex64) -> Complex64 {
    z + phi.lambda0() - phi.laplace_eta(z)
}

/// Certifies `h != 0` on the closed right half-plane via the argument principle
/// on the half-disk of radius `R = 2 (1 + TV)`. Outside that radius
/// `|h(z)| >= |z| - TV > 0`, so no zero escapes the count.
pub fn zero_free(phi: &DelayMeasure, contour: &ContourParams) -> Result<ZeroFreeReport> {
    let radius = contour.radius.unwrap_or(2.0 * (1.0 + phi.total_variation()));
    // e^{-i y tau} turns once per 2 pi / tau along the axis.
    let oscillation = (radius * phi.max_lag() * 8.0) as usize;
    let params = ContourParams { initial_points: contour.initial_points.max(oscillation), ..*contour };
    half_disk_winding(|z| h_unchecked(phi, z), radius, &params)
}

/// Winding number of `f` along the positively oriented boundary of
/// `{Re z >= 0, |z| <= radius}`.
pub(crate) fn half_disk_winding<F>(f: F, radius: f64, params: &ContourParams) -> Result<ZeroFreeReport>
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    let arc = |s: f64| Complex64::from_polar(radius, -FRAC_PI_2 + PI * s);
    let axis = |s: f64| Complex64::new(0.0, radius * (1.0 - 2.0 * s));
    let mut budget = Budget { used: 0, max: params.max_points };
    let arc_phase = trace(&f, arc, params, &mut budget, None)?;
    let mut min_axis = f64::INFINITY;
    let axis_phase = trace(&f, axis, params, &mut budget, Some((&mut min_axis, params.axis_tolerance)))?;
    let winding = ((arc_phase + axis_phase) / (2.0 * PI)).round() as i64;
    Ok(ZeroFreeReport {
        winding,
        contour_radius: radius,
        min_modulus_on_axis: min_axis,
        points_used: budget.used,
        verdict: winding == 0 && min_axis > params.axis_tolerance,
    })
}

struct Budget {
    used: usize,
    max: usize,
}

/// Accumulated phase of `f(path(s))` for `s` in `[0, 1]`, bisecting any step
/// whose phase change exceeds pi/4. On the imaginary axis, the minimum
/// modulus is tracked and segments touching a value below `tol` are not refined
/// (the verdict is negative regardless of the winding there).
fn trace<F, P>(
    f: &F,
    path: P,
    params: &ContourParams,
    budget: &mut Budget,
    mut axis: Option<(&mut f64, f64)>,
) -> Result<f64>
where
    F: Fn(Complex64) -> Complex64 + Sync,
    P: Fn(f64) -> Complex64 + Sync,
{
    let n0 = params.initial_points.max(8);
    let nodes: Vec<(f64, Complex64)> = (0..=n0)
        .into_par_iter()
        .map(|i| {
            let s = i as f64 / n0 as f64;
            (s, f(path(s)))
        })
        .collect();
    budget.used += nodes.len();
    if budget.used > budget.max {
        return Err(Error::ContourResolutionExhausted(budget.used));
    }
    let mut total = 0.0;
    for w in nodes.windows(2) {
        let mut stack = vec![(w[0], w[1])];
        while let Some(((sa, fa), (sb, fb))) = stack.pop() {
            if let Some((min, _)) = axis.as_mut() {
                **min = min.min(fa.norm()).min(fb.norm());
            }
            let dphi = (fb / fa).arg();
            let degenerate = match &axis {
                Some((_, tol)) => fa.norm() <= *tol || fb.norm() <= *tol,
                None => false,
            };
            if dphi.abs() <= FRAC_PI_4 || degenerate {
                total += if dphi.is_finite() { dphi } else { 0.0 };
                continue;
            }
            budget.used += 1;
            if budget.used > budget.max {
                return Err(Error::ContourResolutionExhausted(budget.used));
            }
            let sm = 0.5 * (sa + sb);
            if sm <= sa || sm >= sb {
                return Err(Error::ContourResolutionExhausted(budget.used));
            }
            let fm = f(path(sm));
            // Right half first so that the left half is processed next (stack order
            // does not affect the sum).
            stack.push(((sm, fm), (sb, fb)));
            stack.push(((sa, fa), (sm, fm)));
        }
    }
    Ok(total)
}

/// Every `alpha` in `N_0^n` with `sum_j j alpha_j = n`, for `n <= 12`.
pub fn partitions(n: usize) -> &'static [Vec<u32>] {
    static CACHE: OnceLock<Vec<Vec<Vec<u32>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| (0..=MAX_DERIVATIVE_ORDER).map(enumerate_partitions).collect());
    &cache[n]
}

fn enumerate_partitions(n: usize) -> Vec<Vec<u32>> {
    fn rec(n: usize, part: usize, remaining: usize, alpha: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if part == 0 {
            if remaining == 0 {
                out.push(alpha.clone());
            }
            return;
        }
        for count in 0..=remaining / part {
            alpha[part - 1] = count as u32;
            rec(n, part - 1, remaining - count * part, alpha, out);
        }
        alpha[part - 1] = 0;
    }
    let mut out = Vec::new();
    let mut alpha = vec![0u32; n];
    rec(n, n, n, &mut alpha, &mut out);
    out
}

/// `(-1)^n d^n/dx^n (1/h)(x)` at real `x >= 0` together with the sum of the
/// absolute values of its Faà di Bruno terms.
///
/// Each term is `n! |a|! / prod(a_j! (j!)^{a_j}) (1 - L'(x))^{a_1} / h(x)^{|a|+1}
/// prod_{j>=2} ((-1)^j L^{(j)}(x))^{a_j}` where `L` is the Laplace transform of eta.
pub fn cm_value(phi: &DelayMeasure, x: f64, n: usize) -> Result<(f64, f64)> {
    if n > MAX_DERIVATIVE_ORDER {
        return Err(Error::OrderTooHigh { n, max: MAX_DERIVATIVE_ORDER });
    }
    let h = x + phi.lambda0() - phi.laplace_deriv(x, 0)?;
    if n == 0 {
        return Ok((1.0 / h, (1.0 / h).abs()));
    }
    // d_j = (-1)^{j+1} h^{(j)}(x): 1 - L'(x) for j = 1, (-1)^j L^{(j)}(x) beyond.
    let mut d = vec![0.0; n + 1];
    d[1] = 1.0 - phi.laplace_deriv(x, 1)?;
    for (j, dj) in d.iter_mut().enumerate().skip(2) {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        *dj = sign * phi.laplace_deriv(x, j)?;
    }
    let fact = |k: usize| (1..=k).fold(1.0, |a, i| a * i as f64);
    let mut sum = 0.0;
    let mut abs_sum = 0.0;
    for alpha in partitions(n) {
        let size: usize = alpha.iter().map(|&a| a as usize).sum();
        let mut denom = 1.0;
        let mut prod = 1.0;
        for (j, &a) in alpha.iter().enumerate() {
            let order = j + 1;
            denom *= fact(a as usize) * fact(order).powi(a as i32);
            prod *= d[order].powi(a as i32);
        }
        let term = fact(n) * fact(size) / denom * prod / h.powi(size as i32 + 1);
        sum += term;
        abs_sum += term.abs();
    }
    Ok((sum, abs_sum))
}

/// Default x-grid: `0` plus 64 geometric points from `1e-3` to `1e2`.
pub fn default_cm_grid() -> Vec<f64> {
    let mut xs = vec![0.0];
    let (lo, hi, m) = (1e-3f64.ln(), 1e2f64.ln(), 64);
    xs.extend((0..m).map(|i| (lo + (hi - lo) * i as f64 / (m - 1) as f64).exp()));
    xs
}

/// Checks `(-1)^n (1/h)^{(n)}(x) >= 0` for `n = 0..=n_max` on `xs`.
///
/// Orders are scanned outermost, so the reported failure has the smallest
/// failing `n` and, for that `n`, the smallest failing `x`.
pub fn complete_monotonicity_check(phi: &DelayMeasure, n_max: usize, xs: &[f64]) -> Result<CMReport> {
    if n_max > MAX_DERIVATIVE_ORDER {
        return Err(Error::OrderTooHigh { n: n_max, max: MAX_DERIVATIVE_ORDER });
    }
    if let Some(&x) = xs.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::InvalidInput(format!("grid point {x} must be finite and >= 0")));
    }
    let mut xs = xs.to_vec();
    xs.sort_by(f64::total_cmp);
    for n in 0..=n_max {
        let values: Vec<(f64, f64)> = xs
            .par_iter()
            .map(|&x| cm_value(phi, x, n))
            .collect::<Result<_>>()?;
        for (&x, &(value, abs_sum)) in xs.iter().zip(&values) {
            let h = x + phi.lambda0() - phi.laplace_deriv(x, 0)?;
            let scale = abs_sum.max((1.0 / h).abs());
            if !(value >= -CM_TOLERANCE * scale) {
                let scaled = h.powi(n as i32 + 1) * value;
                return Ok(CMReport {
                    n_checked: n,
                    points_checked: xs.len(),
                    failure: Some(CmFailure { n, x, value, scaled }),
                    verdict: false,
                });
            }
        }
    }
    Ok(CMReport { n_checked: n_max, points_checked: xs.len(), failure: None, verdict: true })
}

/// Closed-form zero-freeness for `-lambda delta_0 + xi delta_tau` when
/// `|xi| <= 1/tau`: `h` has no zero on the closed right half-plane iff `xi < lambda`.
pub fn discrete_delay_existence(lambda0: f64, xi: f64, tau: f64) -> Result<bool> {
    if !(tau > 0.0) || xi.abs() > 1.0 / tau {
        return Err(Error::OutsideDiscreteDelayRegime { xi, tau });
    }
    Ok(xi < lambda0)
}
