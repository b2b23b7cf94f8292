//! Stationary path simulation: moving-average convolution and explicit Euler.
//!
//! Both schemes read the same two-sided increment tape, so a moving-average
//! path and an Euler path with equal seed see identical noise. Increment `i`
//! covers `(i dt, (i+1) dt]`; indices `i >= 0` come from generator stream
//! `2c` and `i < 0` from stream `2c + 1` for component `c`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::characteristic::{zero_free, ContourParams};
use crate::csv;
use crate::error::{Error, Result};
use crate::kernel::KernelGrid;
use crate::levy::SubordinatorSpec;
use crate::measure::DelayMeasure;
use crate::multivar::{det_zero_free, MatrixDelayMeasure, MatrixKernel};

/// Kernel magnitude at the horizon above which a truncation warning is recorded.
pub const TAIL_WARNING: f64 = 1e-4;
pub const NEGATIVE_TOL: f64 = -1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    MovingAverage,
    Euler,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathMeta {
    pub scheme: Scheme,
    pub seed: u64,
    pub dt: f64,
    pub burn_in: f64,
    pub warnings: Vec<String>,
    /// Largest `|round(tau / dt) dt - tau|` over the atoms.
    pub lag_snap_error: f64,
}

/// Values at `t_m = m dt`, `m = 0..=N`; `x[c]` is component `c`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathSample {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub meta: PathMeta,
}

impl PathSample {
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// CSV with header `t,x` or `t,x1,...,xd`.
    pub fn to_csv(&self) -> String {
        let mut header = vec!["t".to_string()];
        if self.x.len() == 1 {
            header.push("x".into());
        } else {
            header.extend((1..=self.x.len()).map(|c| format!("x{c}")));
        }
        let mut cols: Vec<&[f64]> = vec![&self.t];
        cols.extend(self.x.iter().map(|c| c.as_slice()));
        csv::render(&header, &cols)
    }
}

struct Tape {
    forward: Vec<f64>,
    backward: Vec<f64>,
}

impl Tape {
    fn new(spec: &SubordinatorSpec, dt: f64, seed: u64, component: u64, n_fwd: usize, n_back: usize) -> Result<Self> {
        Ok(Self {
            forward: spec.sampler(dt, seed, 2 * component)?.take(n_fwd),
            backward: spec.sampler(dt, seed, 2 * component + 1)?.take(n_back),
        })
    }

    fn at(&self, i: isize) -> f64 {
        if i >= 0 {
            self.forward[i as usize]
        } else {
            self.backward[(-i - 1) as usize]
        }
    }
}

fn steps(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidInput(format!("need T > 0 and dt > 0, got T = {t_end}, dt = {dt}")));
    }
    Ok((t_end / dt).round() as usize)
}

fn times(n: usize, dt: f64) -> Vec<f64> {
    (0..=n).map(|m| m as f64 * dt).collect()
}

/// `X_m = sum_k g_k dL_{m-1-k}` with `g` sampled at the path step `g.dt`.
pub fn simulate_ma(g: &KernelGrid, s: &SubordinatorSpec, t_end: f64, seed: u64) -> Result<PathSample> {
    let mk = MatrixKernel { d: 1, entries: vec![g.clone()] };
    simulate_ma_multi(&mk, std::slice::from_ref(s), t_end, seed)
}

/// Componentwise `X^j_m = sum_l sum_k g_jl(k dt) dL^l_{m-1-k}` with
/// independent drivers per component.
pub fn simulate_ma_multi(g: &MatrixKernel, drivers: &[SubordinatorSpec], t_end: f64, seed: u64) -> Result<PathSample> {
    let d = g.d;
    if drivers.len() != d {
        return Err(Error::InvalidInput(format!("{} drivers for {d} components", drivers.len())));
    }
    let dt = g.dt();
    let n = steps(t_end, dt)?;
    let len = g.len();
    let tapes = drivers
        .iter()
        .enumerate()
        .map(|(c, s)| Tape::new(s, dt, seed, c as u64, n, len))
        .collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    for (idx, e) in g.entries.iter().enumerate() {
        let tail = e.max_abs_tail();
        if tail > TAIL_WARNING {
            warnings.push(format!(
                "kernel entry {} is {tail:.3e} near the horizon {}; the window truncates it",
                idx,
                e.horizon()
            ));
        }
    }
    let x = (0..d)
        .map(|j| {
            (0..=n)
                .into_par_iter()
                .map(|m| {
                    let mut acc = 0.0;
                    for (l, tape) in tapes.iter().enumerate() {
                        let gv = &g.entry(j, l).values;
                        for (k, gk) in gv.iter().enumerate() {
                            acc += gk * tape.at(m as isize - 1 - k as isize);
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect();
    Ok(PathSample {
        t: times(n, dt),
        x,
        meta: PathMeta { scheme: Scheme::MovingAverage, seed, dt, burn_in: 0.0, warnings, lag_snap_error: 0.0 },
    })
}

/// Discretized delay operator of a `d`-dimensional system.
struct System {
    d: usize,
    lambda: DMatrix<f64>,
    /// `(j, l, lag steps, weight)` for every atom.
    atoms: Vec<(usize, usize, usize, f64)>,
    /// `(j, l, trapezoid weights)`; weight `i` multiplies `X^l_{k-i}`.
    density: Vec<(usize, usize, Vec<f64>)>,
    snap_error: f64,
    lambda_eff: f64,
}

impl System {
    fn build(d: usize, entry: impl Fn(usize, usize) -> DelayMeasure, dt: f64) -> Result<Self> {
        let mut atoms = Vec::new();
        let mut density = Vec::new();
        let mut snap_error: f64 = 0.0;
        let mut slowest_rate = f64::NEG_INFINITY;
        for j in 0..d {
            for l in 0..d {
                let e = entry(j, l);
                if let Some(min_lag) = e.min_lag() {
                    if dt > min_lag {
                        return Err(Error::StepExceedsLag { dt, min_lag });
                    }
                }
                for a in e.atoms() {
                    let lag = (a.tau / dt).round() as usize;
                    snap_error = snap_error.max((lag as f64 * dt - a.tau).abs());
                    atoms.push((j, l, lag, a.weight));
                }
                if let Some(r) = e.slowest_rate() {
                    slowest_rate = slowest_rate.max(r);
                    let m = (40.0 / -r / dt).ceil() as usize;
                    let w = (0..=m)
                        .map(|i| {
                            let half = if i == 0 || i == m { 0.5 } else { 1.0 };
                            half * dt * e.density_at(i as f64 * dt)
                        })
                        .collect();
                    density.push((j, l, w));
                }
            }
        }
        let lambda = DMatrix::from_fn(d, d, |j, l| entry(j, l).lambda0());
        let mut lambda_eff = lambda.complex_eigenvalues().iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        if slowest_rate.is_finite() {
            lambda_eff = lambda_eff.min(-slowest_rate);
        }
        Ok(Self { d, lambda, atoms, density, snap_error, lambda_eff })
    }

    fn default_burn_in(&self) -> f64 {
        if self.lambda_eff > 0.0 { 20.0 / self.lambda_eff } else { 20.0 }
    }

    /// Euler recursion from zero history at step 0; `noise(c, k)` is the
    /// increment of component `c` over step `k`.
    fn run(&self, dt: f64, total: usize, noise: impl Fn(usize, usize) -> f64) -> Vec<Vec<f64>> {
        let d = self.d;
        let mut x = vec![vec![0.0; total + 1]; d];
        let past = |x: &Vec<Vec<f64>>, l: usize, k: usize, lag: usize| if lag <= k { x[l][k - lag] } else { 0.0 };
        let mut drift = vec![0.0; d];
        for k in 0..total {
            for (j, dj) in drift.iter_mut().enumerate() {
                *dj = -(0..d).map(|l| self.lambda[(j, l)] * x[l][k]).sum::<f64>();
            }
            for &(j, l, lag, w) in &self.atoms {
                drift[j] += w * past(&x, l, k, lag);
            }
            for (j, l, w) in &self.density {
                let upto = w.len().min(k + 1);
                drift[*j] += (0..upto).map(|i| w[i] * x[*l][k - i]).sum::<f64>();
            }
            for j in 0..d {
                x[j][k + 1] = x[j][k] + dt * drift[j] + noise(j, k);
            }
        }
        x
    }
}

/// Explicit Euler for `dX = (phi * X) dt + dL`, started from zero history
/// `burn_in` time units before 0 (default `20 / lambda_eff`).
pub fn simulate_euler(
    phi: &DelayMeasure,
    s: &SubordinatorSpec,
    t_end: f64,
    dt: f64,
    seed: u64,
    burn_in: Option<f64>,
) -> Result<PathSample> {
    if !zero_free(phi, &ContourParams::default())?.verdict {
        return Err(Error::NonStationary);
    }
    let sys = System::build(1, |_, _| phi.clone(), dt)?;
    euler(&sys, std::slice::from_ref(s), t_end, dt, seed, burn_in)
}

pub fn simulate_euler_multi(
    phi: &MatrixDelayMeasure,
    drivers: &[SubordinatorSpec],
    t_end: f64,
    dt: f64,
    seed: u64,
    burn_in: Option<f64>,
) -> Result<PathSample> {
    if drivers.len() != phi.dim() {
        return Err(Error::InvalidInput(format!("{} drivers for {} components", drivers.len(), phi.dim())));
    }
    if !det_zero_free(phi, &ContourParams::default())?.verdict {
        return Err(Error::NonStationary);
    }
    let sys = System::build(phi.dim(), |j, l| phi.entry(j, l).clone(), dt)?;
    euler(&sys, drivers, t_end, dt, seed, burn_in)
}

fn euler(sys: &System, drivers: &[SubordinatorSpec], t_end: f64, dt: f64, seed: u64, burn_in: Option<f64>) -> Result<PathSample> {
    let n = steps(t_end, dt)?;
    let burn_in = burn_in.unwrap_or_else(|| sys.default_burn_in());
    if !(burn_in >= 0.0) {
        return Err(Error::InvalidInput(format!("burn-in must be non-negative, got {burn_in}")));
    }
    let nb = (burn_in / dt).round() as usize;
    let tapes = drivers
        .iter()
        .enumerate()
        .map(|(c, s)| Tape::new(s, dt, seed, c as u64, n, nb))
        .collect::<Result<Vec<_>>>()?;
    let x = sys.run(dt, nb + n, |c, k| tapes[c].at(k as isize - nb as isize));
    let mut warnings = Vec::new();
    if sys.snap_error > 0.0 {
        warnings.push(format!("delay lags snapped to the grid (max error {:.3e})", sys.snap_error));
    }
    Ok(PathSample {
        t: times(n, dt),
        x: x.into_iter().map(|c| c[nb..].to_vec()).collect(),
        meta: PathMeta { scheme: Scheme::Euler, seed, dt, burn_in: nb as f64 * dt, warnings, lag_snap_error: sys.snap_error },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathStats {
    pub min: f64,
    /// Time of the minimum.
    pub argmin: f64,
    pub mean: f64,
    /// Share of entries below `-1e-12`.
    pub fraction_negative: f64,
}

/// Statistics pooled over all components.
pub fn path_stats(p: &PathSample) -> Result<PathStats> {
    let count: usize = p.x.iter().map(|c| c.len()).sum();
    if count == 0 {
        return Err(Error::EmptyPath);
    }
    let (mut min, mut argmin) = (f64::INFINITY, 0.0);
    let (mut sum, mut neg) = (0.0, 0usize);
    for c in &p.x {
        for (m, &v) in c.iter().enumerate() {
            if v < min {
                min = v;
                argmin = p.t[m];
            }
            sum += v;
            neg += (v < NEGATIVE_TOL) as usize;
        }
    }
    Ok(PathStats { min, argmin, mean: sum / count as f64, fraction_negative: neg as f64 / count as f64 })
}
