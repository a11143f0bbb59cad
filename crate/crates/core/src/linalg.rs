//! Small dense kernels shared by the physics modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Coefficients of det(zI - A), leading coefficient first.
///
/// Division-free Berkowitz recursion, so integer matrices give exact
/// coefficients.
pub fn charpoly(a: &CMat) -> Vec<Complex64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "charpoly needs a square matrix");
    if n == 0 {
        return vec![Complex64::new(1.0, 0.0)];
    }
    let one = Complex64::new(1.0, 0.0);
    let mut poly = vec![one, -a[(n - 1, n - 1)]];
    for r in (0..n - 1).rev() {
        let s = n - r - 1;
        let head = a[(r, r)];
        let row = a.view((r, r + 1), (1, s)).clone_owned();
        let sub = a.view((r + 1, r + 1), (s, s)).clone_owned();
        let mut col = a.view((r + 1, r), (s, 1)).clone_owned();

        let mut toeplitz = Vec::with_capacity(s + 2);
        toeplitz.push(one);
        toeplitz.push(-head);
        for _ in 0..s {
            toeplitz.push(-(&row * &col)[(0, 0)]);
            col = &sub * col;
        }

        let mut next = vec![Complex64::new(0.0, 0.0); s + 2];
        for (i, slot) in next.iter_mut().enumerate() {
            for (j, p) in poly.iter().enumerate().take(i.min(s) + 1) {
                *slot += toeplitz[i - j] * p;
            }
        }
        poly = next;
    }
    poly
}

/// Horner evaluation of p and p' at z.
pub fn poly_eval(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &a in coeffs {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

fn rounding_bound(coeffs: &[Complex64], z: Complex64) -> f64 {
    let az = z.norm();
    let mut acc = 0.0;
    for a in coeffs {
        acc = acc * az + a.norm();
    }
    4.0 * coeffs.len() as f64 * f64::EPSILON * acc
}

/// All roots of a polynomial (leading coefficient first) by Aberth–Ehrlich
/// simultaneous iteration.
///
/// A root is frozen once |p(z)| drops below the Horner rounding bound, so
/// clustered roots stop at the attainable accuracy instead of wandering.
pub fn aberth_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let lead = coeffs
        .first()
        .copied()
        .ok_or_else(|| Error::Numerical("empty polynomial".into()))?;
    if lead.norm() == 0.0 {
        return Err(Error::Numerical("leading coefficient is zero".into()));
    }
    let mut a: Vec<Complex64> = coeffs.iter().map(|x| x / lead).collect();

    let mut roots = Vec::new();
    while a.len() > 1 && a[a.len() - 1].norm() == 0.0 {
        roots.push(Complex64::new(0.0, 0.0));
        a.pop();
    }
    let n = a.len() - 1;
    if n == 0 {
        return Ok(roots);
    }
    if n == 1 {
        roots.push(-a[1]);
        return Ok(roots);
    }

    let center = -a[1] / n as f64;
    let radius = (1..=n)
        .map(|k| (a[k].norm()).powf(1.0 / k as f64))
        .fold(0.0_f64, f64::max)
        .max(1e-3);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4;
            center + Complex64::from_polar(radius, th)
        })
        .collect();
    let mut done = vec![false; n];

    const MAX_ITER: usize = 2000;
    let mut iter = 0;
    while done.iter().any(|d| !d) {
        iter += 1;
        if iter > MAX_ITER {
            let open = done.iter().filter(|d| !**d).count();
            return Err(Error::Numerical(format!(
                "Aberth iteration did not converge after {MAX_ITER} sweeps ({open} of {n} roots open)"
            )));
        }
        for k in 0..n {
            if done[k] {
                continue;
            }
            let (p, dp) = poly_eval(&a, z[k]);
            if p.norm() <= rounding_bound(&a, z[k]) {
                done[k] = true;
                continue;
            }
            let ratio = p / dp;
            let mut s = Complex64::new(0.0, 0.0);
            for j in 0..n {
                if j != k {
                    let d = z[k] - z[j];
                    if d.norm() > 0.0 {
                        s += 1.0 / d;
                    }
                }
            }
            let w = if ratio.is_finite() {
                ratio / (1.0 - ratio * s)
            } else {
                // p'(z) = 0 away from a root
                Complex64::new(1e-8 * (1.0 + z[k].norm()), 0.0)
            };
            if w.is_finite() {
                z[k] -= w;
            }
            if w.norm() <= f64::EPSILON * z[k].norm() {
                done[k] = true;
            }
        }
    }
    roots.extend(z);
    Ok(roots)
}

/// Matrix exponential by scaling and squaring with Pade approximation.
pub fn expm(a: &CMat) -> CMat {
    a.clone().exp()
}

/// Reference exponential by truncated Taylor series with scaling and
/// squaring; used as an independent check on [`expm`].
pub fn expm_taylor(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm = a.iter().map(|x| x.norm()).fold(0.0, f64::max) * n as f64;
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let b = a * Complex64::new(scale, 0.0);
    let mut term = CMat::identity(n, n);
    let mut sum = CMat::identity(n, n);
    for k in 1..40 {
        term = &term * &b / Complex64::new(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// 2-norm condition number.
pub fn cond(a: &CMat) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Left and right singular vectors of the smallest singular value.
pub fn smallest_singular_pair(a: &CMat) -> (f64, DVector<Complex64>, DVector<Complex64>) {
    let svd = a.clone().svd(true, true);
    let (idx, sigma) = svd
        .singular_values
        .iter()
        .cloned()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, s)| if s < acc.1 { (i, s) } else { acc });
    let u = svd.u.expect("u requested").column(idx).clone_owned();
    let v_t = svd.v_t.expect("v_t requested");
    let v = v_t.row(idx).transpose().map(|x| x.conj());
    (sigma, u, v)
}

/// Moore–Penrose pseudo-inverse of a real matrix. Singular values below
/// `rcond * s_max` are discarded; returns the number discarded.
pub fn pinv(a: &RMat, rcond: f64) -> (RMat, usize) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut dropped = 0;
    let mut sinv = RMat::zeros(v_t.nrows(), u.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > rcond * smax {
            sinv[(i, i)] = 1.0 / s;
        } else {
            dropped += 1;
        }
    }
    (v_t.transpose() * sinv * u.transpose(), dropped)
}

/// Symplectic form for `modes` modes in (x, p) ordering.
pub fn omega(modes: usize) -> RMat {
    let mut o = RMat::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        o[(2 * k, 2 * k + 1)] = 1.0;
        o[(2 * k + 1, 2 * k)] = -1.0;
    }
    o
}

/// Block-diagonal operator-to-quadrature map, (x, p) = T (c, c†) per mode.
pub fn quadrature_map(modes: usize) -> (CMat, CMat) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut t = CMat::zeros(2 * modes, 2 * modes);
    let mut t_inv = CMat::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        let (x, p) = (2 * k, 2 * k + 1);
        t[(x, x)] = c(s, 0.0);
        t[(x, p)] = c(s, 0.0);
        t[(p, x)] = c(0.0, -s);
        t[(p, p)] = c(0.0, s);
        t_inv[(x, x)] = c(s, 0.0);
        t_inv[(x, p)] = c(0.0, s);
        t_inv[(p, x)] = c(s, 0.0);
        t_inv[(p, p)] = c(0.0, -s);
    }
    (t, t_inv)
}

/// Real part of a matrix that should be real, with the largest imaginary
/// residue.
pub fn real_part(a: &CMat) -> (RMat, f64) {
    let im = a.iter().map(|x| x.im.abs()).fold(0.0, f64::max);
    (a.map(|x| x.re), im)
}

pub fn max_abs<T: nalgebra::ComplexField>(a: &DMatrix<T>) -> f64
where
    T::RealField: Into<f64>,
{
    a.iter().map(|x| x.clone().modulus().into()).fold(0.0, f64::max)
}

/// Least-squares line fit; returns (slope, intercept, r^2).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

/// `n` logarithmically spaced points from `a` to `b` inclusive.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1).max(1) as f64).exp())
        .collect()
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1).max(1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_rows(rows: &[&[f64]]) -> CMat {
        let n = rows.len();
        CMat::from_fn(n, n, |i, j| c(rows[i][j], 0.0))
    }

    #[test]
    fn charpoly_two_by_two() {
        let a = from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let p = charpoly(&a);
        assert_eq!(p, vec![c(1.0, 0.0), c(-5.0, 0.0), c(-2.0, 0.0)]);
    }

    #[test]
    fn charpoly_exact_for_nilpotent_generator() {
        let a = from_rows(&[&[0.0, 0.0, 1.0], &[0.0, 0.0, -1.0], &[-1.0, -1.0, 0.0]]);
        let p = charpoly(&a);
        assert!(p[1..].iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn aberth_recovers_known_roots() {
        // (z-1)(z+2)(z-3i)
        let roots = [c(1.0, 0.0), c(-2.0, 0.0), c(0.0, 3.0)];
        let mut coeffs = vec![c(1.0, 0.0)];
        for r in roots {
            let mut next = vec![c(0.0, 0.0); coeffs.len() + 1];
            for (i, a) in coeffs.iter().enumerate() {
                next[i] += a;
                next[i + 1] -= a * r;
            }
            coeffs = next;
        }
        let found = aberth_roots(&coeffs).unwrap();
        for r in roots {
            let best = found.iter().map(|z| (z - r).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-13, "root {r} missed by {best}");
        }
    }

    #[test]
    fn aberth_triple_root_at_origin_is_exact() {
        let roots = aberth_roots(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(roots.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn aberth_rejects_zero_leading_coefficient() {
        assert!(aberth_roots(&[c(0.0, 0.0), c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn expm_agrees_with_taylor_reference() {
        let a = CMat::from_fn(4, 4, |i, j| c((i as f64 - j as f64) * 0.3, 0.1 * (i * j) as f64));
        let diff = max_abs(&(expm(&a) - expm_taylor(&a)));
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn quadrature_map_is_inverse_pair() {
        let (t, ti) = quadrature_map(3);
        let id = &t * &ti;
        assert!(max_abs(&(id - CMat::identity(6, 6))) < 1e-15);
    }

    #[test]
    fn pinv_of_rank_deficient_matrix() {
        let a = RMat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (p, dropped) = pinv(&a, 1e-12);
        assert_eq!(dropped, 1);
        assert!((p[(0, 0)] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn fit_recovers_line() {
        let x = linspace(0.0, 1.0, 10);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let (s, i, r2) = linear_fit(&x, &y);
        assert!((s - 3.0).abs() < 1e-12 && (i + 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
