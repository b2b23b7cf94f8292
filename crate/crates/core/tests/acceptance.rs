//! Acceptance suite: one PASS/FAIL line per criterion, with its runtime budget.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use nonneg_sdde::carma::{
    carma21_verdict, corollary34, disagreement, nonneg_verdict, region_scan, thm31_check, CarmaModel,
    ScanSpec,
};
use nonneg_sdde::characteristic::{cm_value, complete_monotonicity_check, default_cm_grid, h_eval};
use nonneg_sdde::kernel::{f_explicit, kernel_fft, lemma51_residual, min_scan};
use nonneg_sdde::levy::{JumpLaw, SubordinatorSpec};
use nonneg_sdde::measure::DelayMeasure;
use nonneg_sdde::multivar::{default_t_grid, is_m_matrix, matexp_nonneg_check, matrix_kernel_fft, thm41_check, MatrixDelayMeasure};
use nonneg_sdde::simulate::{simulate_euler, simulate_ma};

use common::*;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn c1_faa_di_bruno() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in -9..=9 {
        let xi = i as f64 / 10.0;
        let phi = DelayMeasure::discrete_delay(1.0, 1.0, xi).map_err(|e| e.to_string())?;
        let h0 = h_eval(&phi, Complex64::new(0.0, 0.0)).unwrap().re;
        let (v, _) = cm_value(&phi, 0.0, 2).map_err(|e| e.to_string())?;
        let err = (h0.powi(3) * v - (xi * xi + 5.0 * xi + 2.0)).abs();
        worst = worst.max(err);
        ensure(err <= 1e-9, || format!("xi = {xi}: h^3 (1/h)'' off by {err:e}"))?;
    }
    let phi = DelayMeasure::discrete_delay(1.0, 1.0, -0.8).unwrap();
    let r = complete_monotonicity_check(&phi, 8, &default_cm_grid()).map_err(|e| e.to_string())?;
    let f = r.failure.ok_or("no failure reported for xi = -0.8")?;
    ensure(f.n == 2 && (f.scaled + 1.36).abs() <= 1e-9, || format!("failure at n = {}, value {}", f.n, f.scaled))?;
    Ok(format!("max identity error {worst:.1e}; xi = -0.8 fails at n = 2 with {:.12}", f.scaled))
}

fn c2_ou_kernel() -> Outcome {
    let g = kernel_fft(&DelayMeasure::ou(1.0), 40.0, 1 << 16).map_err(|e| e.to_string())?;
    let sup = g
        .values
        .iter()
        .enumerate()
        .take_while(|(k, _)| *k as f64 * g.dt <= 10.0)
        .map(|(k, v)| (v - (-(k as f64) * g.dt).exp()).abs())
        .fold(0.0, f64::max);
    ensure(sup <= 1e-3, || format!("sup error {sup:e}"))?;
    Ok(format!("sup error on [0, 10] = {sup:.1e}"))
}

fn c3_figure_one() -> Outcome {
    let pos = DelayMeasure::discrete_delay(1.0, 1.0, 0.2).unwrap();
    let g = kernel_fft(&pos, 40.0, 1 << 16).map_err(|e| e.to_string())?;
    let gmin_pos = min_scan(&g).g_min;
    ensure(gmin_pos >= -1e-3, || format!("xi = 0.2 kernel min {gmin_pos}"))?;
    let driver = SubordinatorSpec::gamma(3.0, 6.0).unwrap();
    let path = simulate_ma(&g.resample(0.01).unwrap(), &driver, 200.0, 1).map_err(|e| e.to_string())?;
    let pmin = path.x[0].iter().copied().fold(f64::INFINITY, f64::min);
    ensure(pmin >= 0.0, || format!("xi = 0.2 path min {pmin}"))?;

    let neg = DelayMeasure::discrete_delay(1.0, 1.0, -0.8).unwrap();
    let gn = kernel_fft(&neg, 40.0, 1 << 16).map_err(|e| e.to_string())?;
    let mn = min_scan(&gn);
    ensure(mn.g_min < -0.01, || format!("xi = -0.8 kernel min {}", mn.g_min))?;

    let cp = SubordinatorSpec::compound_poisson(1.0, JumpLaw::Exponential { mean: 1.0 }).unwrap();
    let mut negative = 0;
    for seed in 0..20 {
        let p = simulate_euler(&neg, &cp, 200.0, 0.01, seed, None).map_err(|e| e.to_string())?;
        negative += p.x[0].iter().any(|&v| v < 0.0) as usize;
    }
    ensure(negative >= 18, || format!("only {negative}/20 Euler paths went negative"))?;
    Ok(format!(
        "xi = 0.2: min g = {gmin_pos:.1e}, path min {pmin:.3}; xi = -0.8: min g = {:.4} at t = {:.2}; {negative}/20 Euler paths negative",
        mn.g_min, mn.t_min
    ))
}

fn c4_carma21() -> Outcome {
    let mut checked = 0;
    for i in -400..=-1 {
        let gamma = i as f64 / 100.0;
        let m = CarmaModel::from_real_zeros(&[-1.0, -2.0], &[gamma]).map_err(|e| e.to_string())?;
        let v = carma21_verdict(&m).map_err(|e| e.to_string())?;
        let want_thm31 = (-2.0..=-1.0).contains(&gamma);
        let want_nec = gamma <= -1.0;
        ensure(v.thm31 == want_thm31 && v.nec_suff == want_nec, || format!("gamma = {gamma}: {v:?}"))?;
        ensure(thm31_check(&m).unwrap() == v.thm31, || format!("gamma = {gamma}: f-sign test disagrees"))?;
        checked += 1;
    }
    Ok(format!("{checked} grid points, regions [-2, -1] and (-inf, -1] reproduced"))
}

fn c5_region() -> Outcome {
    let rows = region_scan(&ScanSpec::double(vec![-1.0, -4.0, -4.0])).map_err(|e| e.to_string())?;
    let got = disagreement(&rows);
    let want: Vec<f64> = rows.iter().map(|r| r.beta).filter(|&b| b > -2.5 && b <= -2.0).collect();
    ensure(got == want, || format!("disagreement set {got:?}"))?;
    Ok(format!("{} points, disagreement set [{}, {}]", got.len(), got[0], got[got.len() - 1]))
}

fn c6_soundness() -> Outcome {
    let mut r = rng(2024);
    let (mut certified, mut cor34_checked) = (0, 0);
    for i in 0..200 {
        let p = 1 + i % 3;
        let m = random_carma(&mut r, p);
        let v = nonneg_verdict(&m).map_err(|e| e.to_string())?;
        if v.any_sufficient() {
            certified += 1;
            ensure(v.kernel_min >= -1e-6, || format!("model {i} certified but min g = {}", v.kernel_min))?;
        }
        if p == 3 {
            cor34_checked += 1;
            let exact = corollary34(&m).map_err(|e| e.to_string())?.is_nonneg();
            let b = m.beta();
            let scan = if b.iter().all(|z| z.im == 0.0) {
                let f = f_explicit(m.p(), m.q()).map_err(|e| e.to_string())?;
                let shift = b[0].re;
                let scaled = |t: f64| -> f64 {
                    f.iter().map(|x| x.coeff * t.powi(x.power as i32) * ((x.rate - shift) * t).exp()).sum()
                };
                scaled_density_nonneg_by_scan(scaled, b[0].re - b[1].re, 0.0)
            } else {
                scaled_density_nonneg_by_scan(|t| residue_density_scaled(&m, b[0].re, t), 1.0, b[0].im.abs())
            };
            ensure(exact == scan, || format!("model {i}: exact {exact}, scan {scan}, beta {b:?}"))?;
        }
    }
    Ok(format!("{certified}/200 certified by some arm, all with min g >= -1e-6; {cor34_checked} CARMA(3,2) sign tests agree"))
}

fn c7_lemma51() -> Outcome {
    let mut r = rng(51);
    let mut worst: f64 = 0.0;
    for phi in [
        DelayMeasure::ou(1.0),
        DelayMeasure::discrete_delay(1.0, 1.0, 0.2).unwrap(),
        DelayMeasure::discrete_delay(1.0, 1.0, -0.8).unwrap(),
    ] {
        let g = kernel_fft(&phi, 40.0, 1 << 16).map_err(|e| e.to_string())?;
        for _ in 0..10 {
            let s = uniform(&mut r, 0.05, 10.0);
            let t = s + uniform(&mut r, 0.05, 10.0);
            let res = lemma51_residual(&phi, &g, s, t).map_err(|e| e.to_string())?;
            worst = worst.max(res);
            ensure(res <= 1e-3, || format!("residual {res:e} at s = {s}, t = {t}"))?;
        }
    }
    Ok(format!("30 splits, max residual {worst:.1e}"))
}

fn c8_multivariate() -> Outcome {
    let mut r = rng(52);
    let grid = default_t_grid();
    for i in 0..100 {
        let d = 2 + i % 4;
        let b = random_nonneg_matrix(&mut r, d);
        let alpha = spectral_radius(&b) + if i % 5 == 0 { 0.0 } else { uniform(&mut r, 0.0, 1.0) };
        let a = DMatrix::identity(d, d) * alpha - b;
        let rep = is_m_matrix(&a).map_err(|e| e.to_string())?;
        ensure(rep.is_m, || format!("constructed M-matrix {i} rejected: {rep:?}"))?;
        ensure(matexp_nonneg_check(&a, &grid), || format!("e^(-At) negative for M-matrix {i}"))?;
    }
    let (mut hyp, mut tried) = (0, 0);
    while hyp < 100 {
        tried += 1;
        ensure(tried < 10_000, || "too few draws satisfy the hypotheses".into())?;
        let d = 2 + tried % 4;
        let b = random_nonneg_matrix(&mut r, d);
        let mut a = DMatrix::identity(d, d) * (spectral_radius(&b) + uniform(&mut r, 0.01, 1.0)) - b;
        for j in 0..d {
            for k in 0..d {
                if j != k && r.random_bool(0.3) {
                    a[(j, k)] += uniform(&mut r, -0.5, 0.5);
                }
            }
        }
        let stable = a.complex_eigenvalues().iter().all(|z| z.re > 0.0);
        if stable && matexp_nonneg_check(&a, &grid) {
            hyp += 1;
            ensure(is_m_matrix(&a).unwrap().is_m, || format!("converse fails for {a}"))?;
        }
    }
    let lambda = DMatrix::identity(2, 2) * 2.0;
    let phi = MatrixDelayMeasure::from_parts(&lambda, |_, _| DelayMeasure::discrete_delay(0.0, 1.0, 0.1).unwrap())
        .map_err(|e| e.to_string())?;
    ensure(thm41_check(&phi).map_err(|e| e.to_string())?.verdict, || "positive example not certified".into())?;
    let g = matrix_kernel_fft(&phi, 40.0, 1 << 16).map_err(|e| e.to_string())?;
    let min = g.entry_minima().into_iter().fold(f64::INFINITY, f64::min);
    ensure(min >= -1e-3, || format!("kernel entry min {min}"))?;
    Ok(format!("100 forward and 100 converse cases ({tried} draws); certified example has kernel min {min:.1e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, u64, fn() -> Outcome); 8] = [
        ("Faa di Bruno closed form and CM failure value", 1, c1_faa_di_bruno),
        ("OU kernel by Fourier inversion", 2, c2_ou_kernel),
        ("discrete-delay kernels and paths, xi = 0.2 and -0.8", 30, c3_figure_one),
        ("CARMA(2,1) classifier regions", 1, c4_carma21),
        ("CARMA(3,2) disagreement interval", 2, c5_region),
        ("soundness over 200 random CARMA models", 60, c6_soundness),
        ("kernel splitting identity residuals", 10, c7_lemma51),
        ("M-matrix exponential property and multivariate certificate", 60, c8_multivariate),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_time = elapsed < Duration::from_secs(*budget);
        let (ok, detail) = match outcome {
            Ok(d) if in_time => (true, d),
            Ok(d) => (false, format!("{d}; over the {budget} s budget")),
            Err(e) => (false, e),
        };
        failed += !ok as usize;
        println!(
            "[{}] {}. {} ({:.2} s, budget {} s): {}",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            name,
            elapsed.as_secs_f64(),
            budget,
            detail
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
