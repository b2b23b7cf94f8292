//! Real polynomials with ascending coefficients.
//!
//! Roots come from the eigenvalues of the companion matrix of the monic
//! normalisation. Companion eigenvalues of a multiple root split by roughly
//! `sqrt(eps)`, so near-coincident eigenvalues are grouped, tested for being a
//! genuine multiple root and polished on the matching derivative.

use std::fmt;
use std::ops::Mul;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Roots closer than this (absolute) are treated as one multiple root.
pub const ROOT_CLUSTER_TOL: f64 = 1e-7;

/// Absolute tolerance on `|Im|` below which a zero counts as real.
pub const REALNESS_TOL: f64 = 1e-9;

/// Leading-coefficient cancellation tolerance in [`sdde_reduction`].
pub const TRUNCATION_TOL: f64 = 1e-10;

const CONJUGATE_PAIR_TOL: f64 = 1e-12;

// Radius (relative) inside which eigenvalues are candidates for one multiple root.
const CANDIDATE_RADIUS: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Builds a polynomial from coefficients `c0, c1, ..., cn` (ascending powers).
    /// Trailing exact zeros are dropped.
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![0.0] }
    }

    pub fn one() -> Self {
        Self { coeffs: vec![1.0] }
    }

    /// `z - a` for real `a`.
    pub fn linear(a: f64) -> Self {
        Self::new(vec![-a, 1.0])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == 0.0
    }

    pub fn leading(&self) -> f64 {
        self.coeffs[self.coeffs.len() - 1]
    }

    pub fn is_monic(&self) -> bool {
        self.leading() == 1.0
    }

    /// Coefficient of `z^k`, zero beyond the degree.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    /// Horner evaluation.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() == 1 {
            return Self::zero();
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn nth_derivative(&self, n: usize) -> Polynomial {
        (0..n).fold(self.clone(), |p, _| p.derivative())
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Self::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// Divides by the leading coefficient.
    pub fn monic(&self) -> Result<Polynomial> {
        if self.is_zero() {
            return Err(Error::InvalidInput("zero polynomial has no monic form".into()));
        }
        Ok(self.scale(1.0 / self.leading()))
    }

    /// All complex roots with multiplicity, sorted by descending real part and
    /// then descending imaginary part.
    pub fn roots(&self) -> Result<Vec<Complex64>> {
        if self.degree() == 0 {
            return Err(Error::ConstantPolynomial);
        }
        let monic = self.monic()?;
        let n = monic.degree();
        let c = monic.coeffs();
        let eig: Vec<Complex64> = if n == 1 {
            vec![Complex64::new(-c[0], 0.0)]
        } else {
            let mut a = DMatrix::<f64>::zeros(n, n);
            for i in 0..n - 1 {
                a[(i, i + 1)] = 1.0;
            }
            for j in 0..n {
                a[(n - 1, j)] = -c[j];
            }
            a.complex_eigenvalues().iter().copied().collect()
        };
        let mut roots = refine_roots(&monic, eig);
        symmetrize_conjugates(&mut roots);
        sort_roots(&mut roots);
        Ok(roots)
    }

    /// Monic polynomial with exactly the given roots. Non-real roots must come
    /// in conjugate pairs.
    pub fn from_roots(rs: &[Complex64]) -> Result<Polynomial> {
        let mut used = vec![false; rs.len()];
        for i in 0..rs.len() {
            if used[i] || is_real_within(rs[i], CONJUGATE_PAIR_TOL) {
                continue;
            }
            let target = rs[i].conj();
            let tol = CONJUGATE_PAIR_TOL * rs[i].norm().max(1.0);
            let partner = (0..rs.len())
                .find(|&j| j != i && !used[j] && (rs[j] - target).norm() <= tol)
                .ok_or(Error::UnpairedRoot(rs[i]))?;
            used[i] = true;
            used[partner] = true;
        }
        let mut acc = vec![Complex64::new(1.0, 0.0)];
        for &r in rs {
            let mut next = vec![Complex64::new(0.0, 0.0); acc.len() + 1];
            for (k, &a) in acc.iter().enumerate() {
                next[k + 1] += a;
                next[k] -= a * r;
            }
            acc = next;
        }
        Ok(Self::new(acc.into_iter().map(|c| c.re).collect()))
    }

    /// Real-rooted convenience wrapper around [`Polynomial::from_roots`].
    pub fn from_real_roots(rs: &[f64]) -> Polynomial {
        rs.iter().fold(Self::one(), |p, &r| &p * &Self::linear(r))
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;

    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, &c) in self.coeffs.iter().enumerate().rev() {
            if c == 0.0 && !(k == 0 && first) {
                continue;
            }
            if !first {
                write!(f, " {} ", if c < 0.0 { '-' } else { '+' })?;
            } else if c < 0.0 {
                write!(f, "-")?;
            }
            let a = c.abs();
            match k {
                0 => write!(f, "{a}")?,
                1 if a == 1.0 => write!(f, "z")?,
                1 => write!(f, "{a}z")?,
                _ if a == 1.0 => write!(f, "z^{k}")?,
                _ => write!(f, "{a}z^{k}")?,
            }
            first = false;
        }
        Ok(())
    }
}

/// A group of roots within [`ROOT_CLUSTER_TOL`] of each other.
#[derive(Clone, Debug, PartialEq)]
pub struct RootCluster {
    pub center: Complex64,
    pub multiplicity: usize,
}

/// Groups roots that lie within `tol` of each other (single linkage).
pub fn cluster_roots(roots: &[Complex64], tol: f64) -> Vec<RootCluster> {
    let groups = single_linkage(roots, |a, b| (a - b).norm() < tol);
    groups
        .into_iter()
        .map(|g| {
            let center = g.iter().map(|&i| roots[i]).sum::<Complex64>() / g.len() as f64;
            RootCluster { center, multiplicity: g.len() }
        })
        .collect()
}

pub fn is_real_within(z: Complex64, tol: f64) -> bool {
    z.im.abs() <= tol
}

/// Splits `p` as `p(z) = (z + lambda) q(z) - r(z)` with `deg r < deg q`.
///
/// Both inputs must be monic with `deg p = deg q + 1`. Returns `(lambda, r)`.
pub fn sdde_reduction(p: &Polynomial, q: &Polynomial) -> Result<(f64, Polynomial)> {
    if !p.is_monic() || !q.is_monic() {
        return Err(Error::NotMonic);
    }
    let deg_p = p.degree();
    let deg_q = q.degree();
    if deg_p != deg_q + 1 {
        return Err(Error::DegreeMismatch(format!(
            "need deg P = deg Q + 1, got {deg_p} and {deg_q}"
        )));
    }
    // lambda = a_1 - b_{q-1}, where a_1 multiplies z^{p-1} and b_{q-1} multiplies z^{q-1}.
    let a1 = p.coeff(deg_p - 1);
    let b_top = if deg_q == 0 { 0.0 } else { q.coeff(deg_q - 1) };
    let lambda = a1 - b_top;

    let zq = &Polynomial::new(vec![lambda, 1.0]) * q;
    let mut r: Vec<f64> = (0..=deg_p).map(|k| zq.coeff(k) - p.coeff(k)).collect();
    for k in deg_q..=deg_p {
        let scale = 1.0 + p.coeff(k).abs() + zq.coeff(k).abs();
        if r[k].abs() > TRUNCATION_TOL * scale {
            return Err(Error::DegreeMismatch(format!(
                "leading coefficient of z^{k} failed to cancel ({:e})",
                r[k]
            )));
        }
    }
    r.truncate(deg_q);
    let r = if r.is_empty() { Polynomial::zero() } else { Polynomial::new(r) };
    Ok((lambda, r))
}

fn single_linkage<F: Fn(Complex64, Complex64) -> bool>(roots: &[Complex64], close: F) -> Vec<Vec<usize>> {
    let n = roots.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = i;
        while parent[c] != r {
            let next = parent[c];
            parent[c] = r;
            c = next;
        }
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if close(roots[i], roots[j]) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut index_of_root = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if index_of_root[r] == usize::MAX {
            index_of_root[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[index_of_root[r]].push(i);
    }
    groups
}

/// Horner evaluation together with a running bound on the rounding error.
fn eval_with_bound(p: &Polynomial, z: Complex64) -> (Complex64, f64) {
    let az = z.norm();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut bound = 0.0;
    for &c in p.coeffs.iter().rev() {
        acc = acc * z + c;
        bound = bound * az + acc.norm();
    }
    (acc, bound * f64::EPSILON)
}

fn newton(p: &Polynomial, start: Complex64, max_iter: usize) -> Complex64 {
    let dp = p.derivative();
    let mut z = start;
    for _ in 0..max_iter {
        let (v, bound) = eval_with_bound(p, z);
        if v.norm() <= bound {
            break;
        }
        let d = dp.eval(z);
        if d.norm() == 0.0 {
            break;
        }
        let step = v / d;
        let next = z - step;
        if !next.re.is_finite() || !next.im.is_finite() {
            break;
        }
        // Reject steps that make things worse.
        if p.eval(next).norm() > v.norm() {
            break;
        }
        z = next;
        if step.norm() <= 4.0 * f64::EPSILON * z.norm().max(1.0) {
            break;
        }
    }
    z
}

fn refine_roots(monic: &Polynomial, eig: Vec<Complex64>) -> Vec<Complex64> {
    let groups = single_linkage(&eig, |a, b| {
        (a - b).norm() < CANDIDATE_RADIUS * a.norm().max(b.norm()).max(1.0)
    });
    let mut out = Vec::with_capacity(eig.len());
    for g in groups {
        let m = g.len();
        if m == 1 {
            out.push(newton(monic, eig[g[0]], 50));
            continue;
        }
        let mean = g.iter().map(|&i| eig[i]).sum::<Complex64>() / m as f64;
        let center = newton(&monic.nth_derivative(m - 1), mean, 50);
        // A genuine m-fold root annihilates P, P', ..., P^(m-2) to rounding level.
        let genuine = (0..m - 1).all(|j| {
            let (v, bound) = eval_with_bound(&monic.nth_derivative(j), center);
            v.norm() <= 16.0 * bound
        });
        if genuine {
            out.extend(std::iter::repeat_n(center, m));
        } else {
            out.extend(g.iter().map(|&i| newton(monic, eig[i], 50)));
        }
    }
    out
}

fn symmetrize_conjugates(roots: &mut [Complex64]) {
    let n = roots.len();
    let mut done = vec![false; n];
    for i in 0..n {
        if done[i] {
            continue;
        }
        if roots[i].im.abs() <= f64::EPSILON * roots[i].norm().max(1.0) {
            roots[i].im = 0.0;
            done[i] = true;
            continue;
        }
        let target = roots[i].conj();
        let partner = (0..n)
            .filter(|&j| j != i && !done[j] && roots[j].im * roots[i].im < 0.0)
            .min_by(|&a, &b| {
                (roots[a] - target)
                    .norm()
                    .total_cmp(&(roots[b] - target).norm())
            });
        if let Some(j) = partner {
            let re = 0.5 * (roots[i].re + roots[j].re);
            let im = 0.5 * (roots[i].im.abs() + roots[j].im.abs());
            roots[i] = Complex64::new(re, im.copysign(roots[i].im));
            roots[j] = Complex64::new(re, im.copysign(roots[j].im));
            done[j] = true;
        }
        done[i] = true;
    }
}

/// Descending real part, ties broken by descending imaginary part.
pub fn sort_roots(roots: &mut [Complex64]) {
    roots.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn eval_examples() {
        let sq = Polynomial::new(vec![0.0, 0.0, 1.0]);
        assert_eq!(sq.eval(c(0.0)), c(0.0));
        let p = Polynomial::new(vec![2.0, 3.0, 1.0]);
        assert_abs_diff_eq!(p.eval(c(-1.5)).re, -0.25, epsilon = 1e-15);
        let lin = Polynomial::linear(-1.5);
        assert_eq!(lin.eval(c(-1.5)), c(0.0));
    }

    #[test]
    fn derivative_examples() {
        let p = Polynomial::new(vec![2.0, 3.0, 1.0]);
        assert_eq!(p.derivative(), Polynomial::new(vec![3.0, 2.0]));
        assert!(Polynomial::new(vec![5.0]).derivative().is_zero());
        let q = Polynomial::from_real_roots(&[-4.0, -4.0, -1.0]);
        assert_abs_diff_eq!(q.derivative().eval_real(-2.25), -1.3125, epsilon = 1e-12);
    }

    #[test]
    fn roots_examples() {
        let r = Polynomial::new(vec![2.0, 3.0, 1.0]).roots().unwrap();
        assert_abs_diff_eq!(r[0].re, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1].re, -2.0, epsilon = 1e-12);

        let r = Polynomial::linear(-1.5).roots().unwrap();
        assert_eq!(r, vec![c(-1.5)]);

        let p = Polynomial::new(vec![16.0, 24.0, 9.0, 1.0]);
        let r = p.roots().unwrap();
        let expected = [-1.0, -4.0, -4.0];
        for (got, want) in r.iter().zip(expected) {
            assert!((got - c(want)).norm() < 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn constant_has_no_roots() {
        assert_eq!(Polynomial::new(vec![3.0]).roots(), Err(Error::ConstantPolynomial));
    }

    #[test]
    fn complex_roots_sorted_and_conjugate() {
        // (z^2 + 2z + 5)(z + 3): roots -1 +- 2i, -3
        let p = &Polynomial::new(vec![5.0, 2.0, 1.0]) * &Polynomial::linear(-3.0);
        let r = p.roots().unwrap();
        assert!((r[0] - Complex64::new(-1.0, 2.0)).norm() < 1e-12);
        assert!((r[1] - Complex64::new(-1.0, -2.0)).norm() < 1e-12);
        assert_eq!(r[0], r[1].conj());
        assert!((r[2] - c(-3.0)).norm() < 1e-12);
    }

    #[test]
    fn from_roots_examples() {
        assert_eq!(
            Polynomial::from_roots(&[c(-1.0), c(-2.0)]).unwrap(),
            Polynomial::new(vec![2.0, 3.0, 1.0])
        );
        assert_eq!(Polynomial::from_roots(&[]).unwrap(), Polynomial::one());
        let i = Complex64::new(0.0, 1.0);
        assert_eq!(
            Polynomial::from_roots(&[-i, i]).unwrap(),
            Polynomial::new(vec![1.0, 0.0, 1.0])
        );
        assert!(matches!(
            Polynomial::from_roots(&[Complex64::new(-1.0, 1.0)]),
            Err(Error::UnpairedRoot(_))
        ));
    }

    #[test]
    fn reduction_examples() {
        let p = Polynomial::new(vec![2.0, 3.0, 1.0]);
        let q = Polynomial::linear(-1.5);
        let (lambda, r) = sdde_reduction(&p, &q).unwrap();
        assert_abs_diff_eq!(lambda, 1.5, epsilon = 1e-15);
        assert_eq!(r.degree(), 0);
        assert_abs_diff_eq!(r.coeff(0), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(r.coeff(0), -p.eval_real(-1.5), epsilon = 1e-15);

        let (lambda, r) = sdde_reduction(&Polynomial::linear(-0.7), &Polynomial::one()).unwrap();
        assert_abs_diff_eq!(lambda, 0.7, epsilon = 1e-15);
        assert!(r.is_zero());

        // Double moving-average zero: R(z) = -P'(b) z + (P'(b) b - P(b)).
        let p = Polynomial::from_real_roots(&[-1.0, -4.0, -4.0]);
        let q = Polynomial::from_real_roots(&[-2.25, -2.25]);
        let (lambda, r) = sdde_reduction(&p, &q).unwrap();
        assert_abs_diff_eq!(lambda, 4.5, epsilon = 1e-12);
        let beta = -2.25;
        let (pb, dpb) = (p.eval_real(beta), p.derivative().eval_real(beta));
        assert_abs_diff_eq!(r.coeff(1), -dpb, epsilon = 1e-12);
        assert_abs_diff_eq!(r.coeff(1), 1.3125, epsilon = 1e-12);
        assert_abs_diff_eq!(r.coeff(0), dpb * beta - pb, epsilon = 1e-12);
        assert_abs_diff_eq!(r.coeff(0), 6.78125, epsilon = 1e-12);
    }

    #[test]
    fn reduction_rejects_bad_degrees() {
        let p = Polynomial::new(vec![2.0, 3.0, 1.0]);
        assert!(matches!(sdde_reduction(&p, &p), Err(Error::DegreeMismatch(_))));
        assert_eq!(
            sdde_reduction(&p.scale(2.0), &Polynomial::one()),
            Err(Error::NotMonic)
        );
    }

    #[test]
    fn clusters_merge_close_roots() {
        let rs = [c(-4.0), c(-4.0 + 5e-8), c(-1.0)];
        let cl = cluster_roots(&rs, ROOT_CLUSTER_TOL);
        assert_eq!(cl.len(), 2);
        assert_eq!(cl[0].multiplicity, 2);
    }

    #[test]
    fn display_reads_naturally() {
        assert_eq!(Polynomial::new(vec![2.0, 3.0, 1.0]).to_string(), "z^2 + 3z + 2");
        assert_eq!(Polynomial::linear(1.5).to_string(), "z - 1.5");
    }
}
