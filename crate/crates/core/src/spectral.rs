//! Eigen-analysis of the dynamical matrices: eigenvalues and biorthogonal
//! eigenvectors, phase classification, exceptional-point detection and
//! Puiseux exponent fits.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{aberth_roots, c, charpoly, linear_fit, poly_eval, smallest_singular_pair, CMat};
use crate::model::{build_system, DynamicalMatrix, ModeKind, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Stable,
    Unstable,
    Exceptional,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Phase::Stable => "stable",
            Phase::Unstable => "unstable",
            Phase::Exceptional => "exceptional",
        };
        f.write_str(s)
    }
}

/// Tolerances for eigen-analysis.
#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    /// Backward-error tolerance for coalescence. A set of k eigenvalues is
    /// treated as one k-fold root when the centred elementary symmetric
    /// functions satisfy |e_j| <= cluster_tol * s^j, s = max(1, ||H||_F).
    pub cluster_tol: f64,
    /// Growth tolerance relative to s; stable means every Im(lambda) < tol*s.
    pub stable_tol: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions { cluster_tol: 1e-6, stable_tol: 1e-9 }
    }
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    /// Right eigenvectors as columns, H r = lambda r.
    pub right: CMat,
    /// Left eigenvectors as columns, H^dagger l = conj(lambda) l.
    pub left: CMat,
    pub phase: Phase,
    pub ep_order: usize,
    /// Indices (into `eigenvalues`) of the largest coalescing cluster.
    pub cluster: Vec<usize>,
    /// Centre of that cluster, refined as the simple root of the
    /// (k-1)-th derivative of the characteristic polynomial.
    pub center: Complex64,
    /// Oscillation frequency of the three-mode system, when real.
    pub chi: Option<f64>,
    /// Max distance between the closed-form cubic roots and the general
    /// solver, for three-mode systems.
    pub crosscheck: Option<f64>,
    pub scale: f64,
}

impl Spectrum {
    /// Centre of the coalescing cluster. The individual eigenvalues of a
    /// k-fold cluster are only good to ~eps^(1/k); the centre is refined to
    /// full precision.
    pub fn cluster_center(&self) -> Complex64 {
        self.center
    }
}

/// Roots of z^3 + a2 z^2 + a1 z + a0 by Cardano's formula, ordered
/// (lambda_1, lambda_2, lambda_3) with lambda_2 = s/3 + Z+ + Z-.
pub fn cardano(a2: Complex64, a1: Complex64, a0: Complex64) -> [Complex64; 3] {
    let s = -a2;
    let x = (3.0 * a1 - s * s) / 9.0;
    let y = s * s * s / 27.0 - s * a1 / 6.0 - a0 / 2.0;
    let sq = (x * x * x + y * y).sqrt();
    // larger of y +- sqrt(D) avoids cancellation
    let w = if (y + sq).norm() >= (y - sq).norm() { y + sq } else { y - sq };
    let zp = if w.norm() == 0.0 { c(0.0, 0.0) } else { w.powf(1.0 / 3.0) };
    let zm = if zp.norm() == 0.0 { c(0.0, 0.0) } else { -x / zp };
    let e = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_3);
    let third = s / 3.0;
    [
        third - e * zp - e.conj() * zm,
        third + zp + zm,
        third - e.conj() * zp - e * zm,
    ]
}

/// Discriminant data of the three-mode characteristic cubic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CubicDiscriminant {
    pub x: f64,
    pub y: f64,
    /// x^3 + y^2; positive means a complex pair (unstable).
    pub d: f64,
}

pub fn cubic_discriminant(cfg: &SystemConfig) -> Result<CubicDiscriminant> {
    cfg.validate()?;
    if cfg.n != 3 || cfg.m != 1 {
        return Err(Error::Config(format!(
            "discriminant needs n = 3, m = 1 (got n = {}, m = {})",
            cfg.n, cfg.m
        )));
    }
    let d = cfg.shifted_detunings();
    let (d1, d2) = (d[0], d[1]);
    let (g, k) = (cfg.g[0], cfg.kappa[0]);
    let s = d1 - d2;
    let p = g * g - d1 * d2 - k * k;
    let q = g * g * d2 + k * k * d1;
    let x = (3.0 * g * g - 3.0 * k * k - d1 * d1 - d2 * d2 - d1 * d2) / 9.0;
    let y = s * s * s / 27.0 - s * p / 6.0 - q / 2.0;
    Ok(CubicDiscriminant { x, y, d: x * x * x + y * y })
}

/// Elementary symmetric functions e_0..e_k of the values.
fn elementary(z: &[Complex64]) -> Vec<Complex64> {
    let mut e = vec![c(0.0, 0.0); z.len() + 1];
    e[0] = c(1.0, 0.0);
    for (i, zi) in z.iter().enumerate() {
        for j in (1..=i + 1).rev() {
            let prev = e[j - 1];
            e[j] += prev * zi;
        }
    }
    e
}

/// Worst normalised coefficient of the cluster polynomial about its mean,
/// max_j |e_j| / s^j. Zero for an exact multiple root.
pub fn coalescence_defect(values: &[Complex64], scale: f64) -> f64 {
    let mean: Complex64 = values.iter().sum::<Complex64>() / values.len() as f64;
    let centred: Vec<Complex64> = values.iter().map(|z| z - mean).collect();
    let e = elementary(&centred);
    (2..=values.len())
        .map(|j| e[j].norm() / scale.powi(j as i32))
        .fold(0.0, f64::max)
}

/// Largest coalescing eigenvalue cluster: (order, member indices).
/// Order 1 means no coalescence.
pub fn find_cluster(eigs: &[Complex64], scale: f64, tol: f64) -> (usize, Vec<usize>) {
    let n = eigs.len();
    if n > 16 {
        // subset search is exponential; only reduced generators reach here
        return (1, vec![0]);
    }
    for k in (2..=n).rev() {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for mask in 0u32..(1u32 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let vals: Vec<Complex64> = idx.iter().map(|&i| eigs[i]).collect();
            let defect = coalescence_defect(&vals, scale);
            if defect <= tol && best.as_ref().is_none_or(|b| defect < b.0) {
                best = Some((defect, idx));
            }
        }
        if let Some((_, idx)) = best {
            return (k, idx);
        }
    }
    (1, if n > 0 { vec![0] } else { vec![] })
}

/// Exceptional if any cluster of size >= 2, else stable when no eigenvalue
/// grows, else unstable.
pub fn classify_phase(spec: &Spectrum, tol: f64) -> Phase {
    if spec.ep_order >= 2 {
        Phase::Exceptional
    } else if spec.eigenvalues.iter().all(|l| l.im < tol) {
        Phase::Stable
    } else {
        Phase::Unstable
    }
}

/// Sort by real part (ties within `tol`) then imaginary part.
pub fn sort_eigenvalues(v: &mut [Complex64], tol: f64) {
    v.sort_by(|a, b| a.im.total_cmp(&b.im));
    // insertion sort keeps the tolerance comparison well-defined on small n
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j].re < v[j - 1].re - tol {
            v.swap(j, j - 1);
            j -= 1;
        }
    }
}

/// Reorders `next` so that entry i continues branch `prev[i]`, greedily
/// pairing the closest remaining eigenvalues.
pub fn match_branches(prev: &[Complex64], next: &[Complex64]) -> Vec<Complex64> {
    let n = prev.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, p) in prev.iter().enumerate() {
        for (j, q) in next.iter().enumerate() {
            pairs.push(((p - q).norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = vec![c(f64::NAN, f64::NAN); n];
    let mut used_i = vec![false; n];
    let mut used_j = vec![false; n];
    for (_, i, j) in pairs {
        if !used_i[i] && !used_j[j] {
            out[i] = next[j];
            used_i[i] = true;
            used_j[j] = true;
        }
    }
    out
}

/// Eigenvalues of an arbitrary square matrix via its characteristic
/// polynomial.
pub fn eigenvalues_general(h: &CMat) -> Result<Vec<Complex64>> {
    aberth_roots(&charpoly(h))
}

fn newton_polish(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    let mut z = z;
    for _ in 0..3 {
        let (p, dp) = poly_eval(coeffs, z);
        if dp.norm() == 0.0 || p.norm() == 0.0 {
            break;
        }
        let cand = z - p / dp;
        if poly_eval(coeffs, cand).0.norm() < p.norm() {
            z = cand;
        } else {
            break;
        }
    }
    z
}

/// Newton on the (k-1)-th derivative of p, where a k-fold root is simple.
/// Falls back to `start` if the iteration leaves the cluster.
fn refine_center(coeffs: &[Complex64], start: Complex64, k: usize, radius: f64) -> Complex64 {
    let mut d = coeffs.to_vec();
    for _ in 0..k - 1 {
        let deg = d.len() - 1;
        d = d[..deg].iter().enumerate().map(|(i, a)| a * (deg - i) as f64).collect();
    }
    let mut z = start;
    for _ in 0..30 {
        let (p, dp) = poly_eval(&d, z);
        if p.norm() == 0.0 || dp.norm() == 0.0 {
            break;
        }
        let step = p / dp;
        z -= step;
        if step.norm() <= 1e-16 * z.norm().max(1.0) {
            break;
        }
    }
    if z.is_finite() && (z - start).norm() <= radius {
        z
    } else {
        start
    }
}

fn max_matched_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    let matched = match_branches(a, b);
    a.iter().zip(&matched).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Three-mode oscillation frequency sqrt(kappa^2 - g^2 - gamma_-^2/4).
pub fn three_mode_chi(dm: &DynamicalMatrix) -> Option<f64> {
    if dm.modes() != 3
        || dm.kinds != [ModeKind::Annihilation, ModeKind::Creation, ModeKind::Creation]
    {
        return None;
    }
    let h = &dm.reduced;
    let g = h[(0, 2)].re;
    let k = -h[(1, 2)].re;
    let gm = h[(2, 2)].im - h[(0, 0)].im;
    let r = k * k - g * g - gm * gm / 4.0;
    (r >= 0.0).then(|| r.sqrt())
}

pub fn eigensolve(dm: &DynamicalMatrix) -> Result<Spectrum> {
    eigensolve_with(dm, &SpectralOptions::default())
}

pub fn eigensolve_with(dm: &DynamicalMatrix, opts: &SpectralOptions) -> Result<Spectrum> {
    let h = &dm.reduced;
    let n = h.nrows();
    let scale = dm.scale();
    let coeffs = charpoly(h);
    let general = aberth_roots(&coeffs)?;

    let (mut eigs, crosscheck) = if n == 3 {
        let roots = cardano(coeffs[1], coeffs[2], coeffs[3]);
        let polished: Vec<Complex64> = roots.iter().map(|z| newton_polish(&coeffs, *z)).collect();
        let dist = max_matched_distance(&polished, &general);
        (polished, Some(dist))
    } else {
        (general, None)
    };
    if eigs.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvalue".into()));
    }
    sort_eigenvalues(&mut eigs, 1e-9 * scale);

    let mut right = CMat::zeros(n, n);
    let mut left = CMat::zeros(n, n);
    for (k, lam) in eigs.iter().enumerate() {
        let shifted = h - CMat::identity(n, n) * *lam;
        let (_, u, v) = smallest_singular_pair(&shifted);
        right.set_column(k, &fix_phase(v));
        left.set_column(k, &fix_phase(u));
    }

    let (ep_order, cluster) = find_cluster(&eigs, scale, opts.cluster_tol);
    let mean = cluster.iter().map(|&i| eigs[i]).sum::<Complex64>() / cluster.len().max(1) as f64;
    let radius = cluster.iter().map(|&i| (eigs[i] - mean).norm()).fold(0.0, f64::max);
    let center = if ep_order >= 2 { refine_center(&coeffs, mean, ep_order, radius + 1e-12 * scale) } else { mean };
    let mut spec = Spectrum {
        eigenvalues: eigs,
        right,
        left,
        phase: Phase::Stable,
        ep_order,
        cluster,
        center,
        chi: three_mode_chi(dm),
        crosscheck,
        scale,
    };
    spec.phase = classify_phase(&spec, opts.stable_tol * scale);
    Ok(spec)
}

fn fix_phase(v: DVector<Complex64>) -> DVector<Complex64> {
    let pivot = v.iter().cloned().fold(c(0.0, 0.0), |acc, x| if x.norm() > acc.norm() + 1e-12 { x } else { acc });
    if pivot.norm() == 0.0 {
        return v;
    }
    let ph = pivot.conj() / pivot.norm();
    v.map(|x| x * ph)
}

/// Which perturbation pattern the closed-form Puiseux branches describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PerturbationCase {
    /// Both ensembles shifted by the same amount.
    Same,
    /// Only the first ensemble shifted.
    Different,
}

/// Leading Puiseux branches at the three-mode exceptional point:
/// r * (e^{-2 pi i/3}, 1, e^{2 pi i/3}) with r = (2 eps)^{1/3} or eps^{1/3}.
pub fn perturbed_eigenvalues_analytic(eps: f64, case: PerturbationCase) -> [Complex64; 3] {
    let r = match case {
        PerturbationCase::Same => (2.0 * eps).cbrt(),
        PerturbationCase::Different => eps.cbrt(),
    };
    let w = Complex64::from_polar(1.0, 2.0 * std::f64::consts::FRAC_PI_3);
    [w.conj() * r, c(r, 0.0), w * r]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchSelector {
    /// Displacement with the smallest |arg|.
    SmallestArg,
    LargestModulus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PuiseuxFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub eps_range: (f64, f64),
    /// Median of |delta lambda| / eps^(1/k) for the k-fold point.
    pub branch_prefactor: f64,
    /// Multiplicity of the unperturbed coalescence.
    pub order: usize,
    /// Unperturbed coalescence value.
    pub center: Complex64,
    pub displacements: Vec<f64>,
}

/// Fits log|delta lambda| against log eps for a one-parameter family whose
/// member at eps = 0 sits on an exceptional point.
pub fn puiseux_fit<F>(family: F, eps_grid: &[f64], selector: BranchSelector) -> Result<PuiseuxFit>
where
    F: Fn(f64) -> Result<DynamicalMatrix>,
{
    puiseux_fit_with(family, eps_grid, selector, &SpectralOptions::default())
}

pub fn puiseux_fit_with<F>(
    family: F,
    eps_grid: &[f64],
    selector: BranchSelector,
    opts: &SpectralOptions,
) -> Result<PuiseuxFit>
where
    F: Fn(f64) -> Result<DynamicalMatrix>,
{
    if eps_grid.len() < 8 {
        return Err(Error::Config(format!("Puiseux fit needs at least 8 points, got {}", eps_grid.len())));
    }
    if eps_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Config("perturbation grid must be positive".into()));
    }
    let lo = eps_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eps_grid.iter().cloned().fold(0.0, f64::max);
    if hi / lo < 1e3 {
        return Err(Error::Config("perturbation grid must span at least three decades".into()));
    }

    let base = eigensolve_with(&family(0.0)?, opts)?;
    if base.ep_order < 2 {
        return Err(Error::Config("unperturbed system is not at an exceptional point".into()));
    }
    let k = base.ep_order;
    let center = base.cluster_center();

    let mut xs = Vec::with_capacity(eps_grid.len());
    let mut ys = Vec::with_capacity(eps_grid.len());
    let mut disp = Vec::with_capacity(eps_grid.len());
    let mut ratios = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let eigs = eigenvalues_general(&family(eps)?.reduced)?;
        let mut near: Vec<Complex64> = eigs.iter().map(|z| z - center).collect();
        near.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        near.truncate(k);
        let pick = match selector {
            BranchSelector::SmallestArg => near
                .iter()
                .cloned()
                .min_by(|a, b| a.arg().abs().total_cmp(&b.arg().abs())),
            BranchSelector::LargestModulus => near.iter().cloned().max_by(|a, b| a.norm().total_cmp(&b.norm())),
        }
        .expect("cluster is non-empty");
        let d = pick.norm();
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Numerical(format!("eigenvalue displacement vanished at eps = {eps:e}")));
        }
        xs.push(eps.ln());
        ys.push(d.ln());
        disp.push(d);
        ratios.push(d / eps.powf(1.0 / k as f64));
    }
    let (slope, intercept, r_squared) = linear_fit(&xs, &ys);
    ratios.sort_by(f64::total_cmp);
    let branch_prefactor = ratios[ratios.len() / 2];
    Ok(PuiseuxFit {
        slope,
        intercept,
        r_squared,
        eps_range: (lo, hi),
        branch_prefactor,
        order: k,
        center,
        displacements: disp,
    })
}

/// Puiseux fit for a configuration perturbed along `weights`.
pub fn puiseux_fit_config(
    cfg: &SystemConfig,
    weights: &[f64],
    eps_grid: &[f64],
    selector: BranchSelector,
) -> Result<PuiseuxFit> {
    puiseux_fit(|e| build_system(&cfg.with_perturbation(e, weights)), eps_grid, selector)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(cfg: &SystemConfig) -> DynamicalMatrix {
        build_system(cfg).unwrap()
    }

    #[test]
    fn ep4_center_is_refined() {
        let s = eigensolve(&dm(&SystemConfig::ep4(0.2).unwrap())).unwrap();
        assert_eq!(s.ep_order, 4);
        let z = s.cluster_center();
        assert!((z.re - 0.4422689813358517).abs() < 1e-12 && z.im.abs() < 1e-12, "{z}");
    }

    #[test]
    fn ep3_triple_zero() {
        let s = eigensolve(&dm(&SystemConfig::ep3_sensor(1.0, 2.0))).unwrap();
        assert!(s.eigenvalues.iter().all(|z| z.norm() < 1e-14));
        assert_eq!(s.ep_order, 3);
        assert_eq!(s.phase, Phase::Exceptional);
    }

    #[test]
    fn stable_sensor_spectrum() {
        let s = eigensolve(&dm(&SystemConfig::ep3_sensor(0.95, 2.0))).unwrap();
        let chi = 0.0975_f64.sqrt();
        assert!((s.eigenvalues[0] - c(-chi, 0.0)).norm() < 1e-12);
        assert!(s.eigenvalues[1].norm() < 1e-12);
        assert!((s.eigenvalues[2] - c(chi, 0.0)).norm() < 1e-12);
        assert!((s.chi.unwrap() - 0.312249899919919).abs() < 1e-12);
        assert_eq!(s.phase, Phase::Stable);
        assert_eq!(s.ep_order, 1);
    }

    #[test]
    fn reducible_counterexample_spectrum() {
        let mut cfg = SystemConfig::ep3_sensor(1.2, 2.0);
        cfg.epsilon = vec![0.01, -0.01];
        let s = eigensolve(&dm(&cfg)).unwrap();
        // lambda_0 = eps, lambda_pm = (eps +- sqrt(4 + eps^2 - 4 g^2)) / 2
        let root = (4.0 + 1e-4 - 4.0 * 1.44_f64).abs().sqrt() / 2.0;
        let want = [c(0.005, -root), c(0.005, root), c(0.01, 0.0)];
        for (z, w) in s.eigenvalues.iter().zip(want) {
            assert!((z - w).norm() < 1e-12, "{z} vs {w}");
        }
        assert!((root - 0.66330611).abs() < 1e-8);
        assert_eq!(s.ep_order, 1);
        assert_eq!(s.phase, Phase::Unstable);
    }

    #[test]
    fn eigenvector_residuals() {
        let mut cfg = SystemConfig::ep3_sensor(0.8, 1.0);
        cfg.epsilon = vec![0.03, -0.07];
        cfg.gamma = 0.05;
        let d = dm(&cfg);
        let s = eigensolve(&d).unwrap();
        for (k, lam) in s.eigenvalues.iter().enumerate() {
            let r = s.right.column(k);
            let l = s.left.column(k);
            let rr = (&d.reduced * r - r * *lam).norm();
            let ll = (d.reduced.adjoint() * l - l * lam.conj()).norm();
            assert!(rr < 1e-10 && ll < 1e-10, "{rr} {ll}");
        }
    }

    #[test]
    fn discriminant_examples() {
        let d = cubic_discriminant(&SystemConfig::ep3_sensor(1.0, 1.0)).unwrap();
        assert!(d.x.abs() < 1e-15 && d.y.abs() < 1e-15 && d.d.abs() < 1e-15);

        let d = cubic_discriminant(&SystemConfig::ep3_sensor(0.95, 1.0)).unwrap();
        assert!((d.x + 0.0325).abs() < 1e-15 && d.y.abs() < 1e-15);
        assert!((d.d + 3.4328125e-5).abs() < 1e-15);

        let cfg = SystemConfig::ep3_sensor(1.05, 1.0);
        let d = cubic_discriminant(&cfg).unwrap();
        assert!((d.x - 0.034166666666666665).abs() < 1e-15 && d.d > 0.0);
        let s = eigensolve(&dm(&cfg)).unwrap();
        assert_eq!(s.phase, Phase::Unstable);
        let pair: Vec<_> = s.eigenvalues.iter().filter(|z| z.im.abs() > 1e-6).collect();
        assert_eq!(pair.len(), 2);
        assert!((pair[0] - pair[1].conj()).norm() < 1e-12);

        assert!(matches!(cubic_discriminant(&SystemConfig::ep4(0.2).unwrap()), Err(Error::Config(_))));
    }

    #[test]
    fn phase_examples() {
        let mk = |v: Vec<Complex64>, ep: usize| Spectrum {
            eigenvalues: v,
            right: CMat::zeros(1, 1),
            left: CMat::zeros(1, 1),
            phase: Phase::Stable,
            ep_order: ep,
            cluster: vec![0],
            center: c(0.0, 0.0),
            chi: None,
            crosscheck: None,
            scale: 1.0,
        };
        let chi = 0.31225;
        assert_eq!(classify_phase(&mk(vec![c(0.0, 0.0), c(chi, 0.0), c(-chi, 0.0)], 1), 1e-9), Phase::Stable);
        assert_eq!(
            classify_phase(&mk(vec![c(0.005, 0.66332), c(0.005, -0.66332), c(0.01, 0.0)], 1), 1e-9),
            Phase::Unstable
        );
        assert_eq!(classify_phase(&mk(vec![c(0.0, 0.0); 3], 3), 1e-9), Phase::Exceptional);
    }

    fn real_root(eps: f64) -> f64 {
        // lambda^3 - eps^2 lambda - 2 eps = 0 by bisection
        let f = |l: f64| l * l * l - eps * eps * l - 2.0 * eps;
        let (mut a, mut b) = (0.0, 1.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m) > 0.0 {
                b = m
            } else {
                a = m
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn analytic_branches() {
        let same = perturbed_eigenvalues_analytic(1e-6, PerturbationCase::Same);
        // leading order: the exact root differs by eps^2 / (3 (2 eps)^{1/3})
        assert!((same[1].re - real_root(1e-6)).abs() < 1e-10);
        assert!((same[1].re - 1.2599210498948732e-2).abs() < 1e-15);
        let diff = perturbed_eigenvalues_analytic(1e-6, PerturbationCase::Different);
        assert!((diff[1].re - 1e-2).abs() < 1e-15);
        assert!(perturbed_eigenvalues_analytic(0.0, PerturbationCase::Same).iter().all(|z| z.norm() == 0.0));
        for z in &same {
            assert!((z.norm() - same[1].re).abs() < 1e-15);
        }
    }

    #[test]
    fn cardano_matches_generic_roots() {
        let r = cardano(c(-1.0, 0.0), c(-4.0, 0.0), c(4.0, 0.0)); // (z-1)(z-2)(z+2)
        let mut v = r.to_vec();
        sort_eigenvalues(&mut v, 1e-12);
        for (z, w) in v.iter().zip([-2.0, 1.0, 2.0]) {
            assert!((z - c(w, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn branch_matching_follows_nearest() {
        let prev = [c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)];
        let next = [c(2.1, 0.0), c(0.1, 0.0), c(0.9, 0.0)];
        let m = match_branches(&prev, &next);
        assert_eq!(m, vec![c(0.1, 0.0), c(0.9, 0.0), c(2.1, 0.0)]);
    }

    #[test]
    fn puiseux_rejects_bad_grids() {
        let cfg = SystemConfig::ep3_sensor(1.0, 1.0);
        let short = crate::linalg::logspace(1e-9, 1e-5, 5);
        assert!(puiseux_fit_config(&cfg, &[1.0, 1.0], &short, BranchSelector::SmallestArg).is_err());
        let narrow = crate::linalg::logspace(1e-6, 1e-5, 10);
        assert!(puiseux_fit_config(&cfg, &[1.0, 1.0], &narrow, BranchSelector::SmallestArg).is_err());
        let off = SystemConfig::ep3_sensor(0.9, 1.0);
        let grid = crate::linalg::logspace(1e-9, 1e-5, 10);
        assert!(puiseux_fit_config(&off, &[1.0, 1.0], &grid, BranchSelector::SmallestArg).is_err());
    }
}
