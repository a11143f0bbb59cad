//! Gaussian states in quadrature form and the maps acting on them.
//!
//! Quadratures are X = (c + c†)/√2 and P = (c - c†)/(i√2), so the vacuum has
//! covariance I/2 and var(X1 - X2) = 1 on any coherent state.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, cond, expm, omega, quadrature_map, real_part, smallest_singular_pair, CMat, RMat, RVec, I};
use crate::model::{DynamicalMatrix, ModeKind, SystemConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    /// (X1, P1, ..., Xa, Pa)
    pub mu: RVec,
    pub lambda: RMat,
    pub labels: Vec<String>,
    pub t: f64,
}

/// JSON form of a state: covariance stored row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub labels: Vec<String>,
    pub t: f64,
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl GaussianState {
    pub fn vacuum(labels: Vec<String>) -> Self {
        let n = labels.len();
        GaussianState { mu: RVec::zeros(2 * n), lambda: RMat::identity(2 * n, 2 * n) * 0.5, labels, t: 0.0 }
    }

    /// Product of coherent states; `alpha[k]` is the amplitude of mode k.
    pub fn coherent(alpha: &[Complex64], labels: Vec<String>) -> Result<Self> {
        if alpha.len() != labels.len() {
            return Err(Error::Config(format!("{} amplitudes for {} modes", alpha.len(), labels.len())));
        }
        let mut s = Self::vacuum(labels);
        let r2 = std::f64::consts::SQRT_2;
        for (k, a) in alpha.iter().enumerate() {
            s.mu[2 * k] = r2 * a.re;
            s.mu[2 * k + 1] = r2 * a.im;
        }
        Ok(s)
    }

    pub fn modes(&self) -> usize {
        self.labels.len()
    }

    /// det(2 Lambda); equals 1 for pure states.
    pub fn purity_determinant(&self) -> f64 {
        (&self.lambda * 2.0).determinant()
    }

    /// Smallest eigenvalue of Lambda + i Omega / 2; negative values signal an
    /// unphysical state.
    pub fn uncertainty_margin(&self) -> f64 {
        let n = self.modes();
        let om = omega(n);
        let m = CMat::from_fn(2 * n, 2 * n, |i, j| c(self.lambda[(i, j)], 0.5 * om[(i, j)]));
        m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Reduced state of the listed modes, in the given order.
    pub fn marginal(&self, modes: &[usize]) -> GaussianState {
        let idx: Vec<usize> = modes.iter().flat_map(|&k| [2 * k, 2 * k + 1]).collect();
        let mu = RVec::from_iterator(idx.len(), idx.iter().map(|&i| self.mu[i]));
        let lambda = RMat::from_fn(idx.len(), idx.len(), |i, j| self.lambda[(idx[i], idx[j])]);
        GaussianState { mu, lambda, labels: modes.iter().map(|&k| self.labels[k].clone()).collect(), t: self.t }
    }

    pub fn snapshot(&self) -> StateSnapshot {
        let n = self.lambda.nrows();
        StateSnapshot {
            labels: self.labels.clone(),
            t: self.t,
            mu: self.mu.iter().cloned().collect(),
            lambda: (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| self.lambda[(i, j)]).collect(),
        }
    }

    pub fn from_snapshot(s: &StateSnapshot) -> Result<Self> {
        let n = 2 * s.labels.len();
        if s.mu.len() != n || s.lambda.len() != n * n {
            return Err(Error::Config("snapshot dimensions do not match its labels".into()));
        }
        Ok(GaussianState {
            mu: RVec::from_vec(s.mu.clone()),
            lambda: RMat::from_row_slice(n, n, &s.lambda),
            labels: s.labels.clone(),
            t: s.t,
        })
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if self.mu.len() != dim || self.lambda.nrows() != dim || self.lambda.ncols() != dim {
            return Err(Error::Contract(format!(
                "state of dimension {} used with a {dim}-dimensional map",
                self.mu.len()
            )));
        }
        Ok(())
    }
}

/// Coherent magnons with the cavity in vacuum.
pub fn coherent_init(cfg: &SystemConfig) -> Result<GaussianState> {
    let mut alpha = cfg.alpha.clone();
    if alpha.len() != cfg.n - 1 {
        return Err(Error::Config(format!("alpha has {} entries, expected {}", alpha.len(), cfg.n - 1)));
    }
    alpha.push(c(0.0, 0.0));
    let mut labels: Vec<String> = (1..cfg.n).map(|i| format!("b{i}")).collect();
    labels.push("a".into());
    GaussianState::coherent(&alpha, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PropagatorMethod {
    Eigen,
    Expm,
}

/// Eigenvector condition number above which the exponential is used.
pub const EIGEN_COND_LIMIT: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct Propagator {
    /// exp(-i h t) on the reduced operator basis.
    pub k: CMat,
    /// Same map on (c1, c1†, ..., cn, cn†).
    pub full: CMat,
    pub s_quad: RMat,
    pub t: f64,
    pub method: PropagatorMethod,
    /// Eigenvector condition number (infinite when not computed).
    pub eigen_cond: f64,
}

impl Propagator {
    pub fn symplectic_defect(&self) -> f64 {
        let om = omega(self.s_quad.nrows() / 2);
        crate::linalg::max_abs(&(&self.s_quad * &om * self.s_quad.transpose() - om))
    }
}

fn eigen_exponential(h: &CMat, t: f64) -> Option<(CMat, f64)> {
    let n = h.nrows();
    let vals = crate::spectral::eigenvalues_general(h).ok()?;
    let mut v = CMat::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        let (_, _, r) = smallest_singular_pair(&(h - CMat::identity(n, n) * lam));
        v.set_column(k, &r);
    }
    let kappa = cond(&v);
    if !(kappa < EIGEN_COND_LIMIT) {
        return Some((CMat::zeros(0, 0), kappa));
    }
    let v_inv = v.clone().try_inverse()?;
    let d = CMat::from_diagonal(&DVector::from_iterator(n, vals.iter().map(|&l| (-I * l * t).exp())));
    Some((v * d * v_inv, kappa))
}

/// Lifts a reduced propagator to the full operator basis.
pub fn lift(k: &CMat, kinds: &[ModeKind]) -> CMat {
    let n = kinds.len();
    let pos = |j: usize| 2 * j + usize::from(kinds[j] == ModeKind::Creation);
    let cpos = |j: usize| 2 * j + usize::from(kinds[j] == ModeKind::Annihilation);
    let mut u = CMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            u[(pos(i), pos(j))] = k[(i, j)];
            u[(cpos(i), cpos(j))] = k[(i, j)].conj();
        }
    }
    u
}

/// Real quadrature matrix of a map given on (c, c†) pairs.
pub fn to_quadrature(full: &CMat) -> Result<RMat> {
    let (t, t_inv) = quadrature_map(full.nrows() / 2);
    let (re, im) = real_part(&(t * full * t_inv));
    let scale = crate::linalg::max_abs(&re).max(1.0);
    if im > 1e-9 * scale {
        return Err(Error::Numerical(format!("quadrature map has imaginary residue {im:e}")));
    }
    Ok(re)
}

pub fn propagator(dm: &DynamicalMatrix, t: f64) -> Result<Propagator> {
    let h = &dm.reduced;
    let n = h.nrows();
    let (k, method, eigen_cond) = if t == 0.0 {
        (CMat::identity(n, n), PropagatorMethod::Eigen, 1.0)
    } else {
        match eigen_exponential(h, t) {
            Some((k, kappa)) if k.nrows() > 0 => (k, PropagatorMethod::Eigen, kappa),
            Some((_, kappa)) => (expm(&(h * (-I * t))), PropagatorMethod::Expm, kappa),
            None => (expm(&(h * (-I * t))), PropagatorMethod::Expm, f64::INFINITY),
        }
    };
    let full = lift(&k, &dm.kinds);
    let s_quad = to_quadrature(&full)?;
    Ok(Propagator { k, full, s_quad, t, method, eigen_cond })
}

pub fn evolve(state: &GaussianState, prop: &Propagator) -> Result<GaussianState> {
    state.check_dim(prop.s_quad.nrows())?;
    let s = &prop.s_quad;
    Ok(GaussianState {
        mu: s * &state.mu,
        lambda: s * &state.lambda * s.transpose(),
        labels: state.labels.clone(),
        t: state.t + prop.t,
    })
}

/// Quadrature drift A and vacuum-input diffusion D of the open system.
///
/// D is chosen so that a decoupled lossy mode in vacuum is stationary:
/// A_k = -r_k I gives D_k = r_k I.
pub fn drift_diffusion(dm: &DynamicalMatrix) -> Result<(RMat, RMat)> {
    let a = to_quadrature(&(&dm.full * (-I)))?;
    let n = dm.modes();
    let mut d = RMat::zeros(2 * n, 2 * n);
    for (k, r) in dm.decay_rates().into_iter().enumerate() {
        if r < 0.0 {
            return Err(Error::Domain(format!("negative decay rate {r} on mode {k}")));
        }
        d[(2 * k, 2 * k)] = r;
        d[(2 * k + 1, 2 * k + 1)] = r;
    }
    Ok((a, d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossyDiagnostics {
    pub steps: usize,
    /// Max-norm change between the last two step counts, relative to the
    /// covariance scale.
    pub refinement_change: f64,
}

/// Default number of RK4 steps: h = min(2pi/omega, 1/max(rates, 1))/200
/// where omega is the spectral radius of the generator.
pub fn default_steps(dm: &DynamicalMatrix, t: f64) -> usize {
    let rho = crate::spectral::eigenvalues_general(&dm.reduced)
        .map(|v| v.iter().map(|l| l.norm()).fold(0.0, f64::max))
        .unwrap_or(0.0);
    let rmax = dm.decay_rates().into_iter().fold(1.0, f64::max);
    let mut h = 1.0 / rmax;
    if rho > 0.0 {
        h = h.min(2.0 * std::f64::consts::PI / rho);
    }
    h /= 200.0;
    ((t.abs() / h).ceil() as usize).max(1)
}

/// Fixed-step RK4 of dmu/dt = A mu, dLambda/dt = A Lambda + Lambda A^T + D.
pub fn rk4(state: &GaussianState, a: &RMat, d: &RMat, t: f64, steps: usize) -> Result<GaussianState> {
    state.check_dim(a.nrows())?;
    let h = t / steps as f64;
    let fl = |l: &RMat| a * l + l * a.transpose() + d;
    let mut mu = state.mu.clone();
    let mut lam = state.lambda.clone();
    for _ in 0..steps {
        let k1 = a * &mu;
        let k2 = a * (&mu + &k1 * (h / 2.0));
        let k3 = a * (&mu + &k2 * (h / 2.0));
        let k4 = a * (&mu + &k3 * h);
        mu += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);

        let l1 = fl(&lam);
        let l2 = fl(&(&lam + &l1 * (h / 2.0)));
        let l3 = fl(&(&lam + &l2 * (h / 2.0)));
        let l4 = fl(&(&lam + &l3 * h));
        lam += (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (h / 6.0);
    }
    if mu.iter().chain(lam.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!("lossy integration diverged with {steps} steps")));
    }
    // keep symmetric against roundoff
    let lam = (&lam + lam.transpose()) * 0.5;
    Ok(GaussianState { mu, lambda: lam, labels: state.labels.clone(), t: state.t + t })
}

/// Relative tolerance of the step-halving check.
pub const LOSSY_TOL: f64 = 1e-9;

/// Open-system evolution with the step-halving convergence check.
pub fn evolve_lossy(state: &GaussianState, dm: &DynamicalMatrix, t: f64) -> Result<(GaussianState, LossyDiagnostics)> {
    let (a, d) = drift_diffusion(dm)?;
    let mut steps = default_steps(dm, t);
    let mut coarse = rk4(state, &a, &d, t, steps)?;
    for _ in 0..4 {
        let fine = rk4(state, &a, &d, t, 2 * steps)?;
        let scale = crate::linalg::max_abs(&fine.lambda).max(fine.mu.amax()).max(1.0);
        let change = crate::linalg::max_abs(&(&fine.lambda - &coarse.lambda)).max((&fine.mu - &coarse.mu).amax()) / scale;
        steps *= 2;
        if change < LOSSY_TOL {
            return Ok((fine, LossyDiagnostics { steps, refinement_change: change }));
        }
        coarse = fine;
    }
    Err(Error::Numerical(format!("lossy integration not converged after refining to {steps} steps")))
}

/// Lossy evolution with a caller-fixed step count, used where several runs
/// must share one discretisation (finite differences in a parameter).
pub fn evolve_lossy_steps(state: &GaussianState, dm: &DynamicalMatrix, t: f64, steps: usize) -> Result<GaussianState> {
    let (a, d) = drift_diffusion(dm)?;
    rk4(state, &a, &d, t, steps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Excitations {
    pub per_mode: Vec<f64>,
    pub total: f64,
}

pub fn excitation_numbers(state: &GaussianState) -> Excitations {
    let per_mode: Vec<f64> = (0..state.modes())
        .map(|k| {
            let (x, p) = (2 * k, 2 * k + 1);
            (state.mu[x].powi(2) + state.mu[p].powi(2)) / 2.0 + (state.lambda[(x, x)] + state.lambda[(p, p)] - 1.0) / 2.0
        })
        .collect();
    let total = per_mode.iter().sum();
    Excitations { per_mode, total }
}

fn apply_symplectic(state: &GaussianState, s: &RMat) -> GaussianState {
    GaussianState {
        mu: s * &state.mu,
        lambda: s * &state.lambda * s.transpose(),
        labels: state.labels.clone(),
        t: state.t,
    }
}

/// Appends one vacuum read-out mode per listed magnon and applies
/// b' = cos b - sin d, d' = sin b + cos d with angle `theta_t`.
pub fn readout_swap(state: &GaussianState, magnons: &[usize], theta_t: f64) -> Result<GaussianState> {
    let n = state.modes();
    if let Some(&bad) = magnons.iter().find(|&&k| k >= n) {
        return Err(Error::Config(format!("mode {bad} out of range for {n} modes")));
    }
    let total = n + magnons.len();
    let mut labels = state.labels.clone();
    labels.extend((1..=magnons.len()).map(|i| format!("d{i}")));
    let mut ext = GaussianState::vacuum(labels);
    ext.t = state.t;
    ext.mu.rows_mut(0, 2 * n).copy_from(&state.mu);
    ext.lambda.view_mut((0, 0), (2 * n, 2 * n)).copy_from(&state.lambda);

    let (co, si) = (theta_t.cos(), theta_t.sin());
    let mut s = RMat::identity(2 * total, 2 * total);
    for (j, &b) in magnons.iter().enumerate() {
        let d = n + j;
        for q in 0..2 {
            let (ib, id) = (2 * b + q, 2 * d + q);
            s[(ib, ib)] = co;
            s[(ib, id)] = -si;
            s[(id, ib)] = si;
            s[(id, id)] = co;
        }
    }
    Ok(apply_symplectic(&ext, &s))
}

/// Pure-loss channel with transmissivity `eta[k]` on mode k.
pub fn apply_external_loss(state: &GaussianState, eta: &[f64]) -> Result<GaussianState> {
    if eta.len() != state.modes() {
        return Err(Error::Config(format!("{} transmissivities for {} modes", eta.len(), state.modes())));
    }
    if let Some(e) = eta.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(Error::Domain(format!("transmissivity {e} outside [0, 1]")));
    }
    let dim = 2 * state.modes();
    let scale = RVec::from_iterator(dim, (0..dim).map(|i| eta[i / 2].sqrt()));
    let mut out = state.clone();
    out.mu.component_mul_assign(&scale);
    for i in 0..dim {
        for j in 0..dim {
            out.lambda[(i, j)] *= scale[i] * scale[j];
        }
        out.lambda[(i, i)] += (1.0 - eta[i / 2]) / 2.0;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct BlochMessiah {
    pub phi: f64,
    pub r: f64,
    #[serde(skip)]
    pub k_passive: RMat,
    #[serde(skip)]
    pub l_passive: RMat,
    pub xbar: Vec<f64>,
    #[serde(skip)]
    pub sigma: RMat,
}

fn rot(p: f64) -> RMat {
    RMat::from_row_slice(2, 2, &[p.cos(), p.sin(), -p.sin(), p.cos()])
}

fn squeeze(r: f64) -> RMat {
    RMat::from_diagonal(&RVec::from_vec(vec![(-r).exp(), r.exp()]))
}

fn blocks(a: &RMat, b: &RMat, c_: &RMat, d: &RMat) -> RMat {
    let mut m = RMat::zeros(4, 4);
    m.view_mut((0, 0), (2, 2)).copy_from(a);
    m.view_mut((0, 2), (2, 2)).copy_from(b);
    m.view_mut((2, 0), (2, 2)).copy_from(c_);
    m.view_mut((2, 2), (2, 2)).copy_from(d);
    m
}

impl BlochMessiah {
    /// K diag(S(-r), S(r)) L
    pub fn reconstruct(&self) -> RMat {
        let z = RMat::zeros(2, 2);
        &self.k_passive * blocks(&squeeze(-self.r), &z, &z, &squeeze(self.r)) * &self.l_passive
    }

    pub fn reconstruction_error(&self) -> f64 {
        let scale = crate::linalg::max_abs(&self.sigma).max(1.0);
        crate::linalg::max_abs(&(self.reconstruct() - &self.sigma)) / scale
    }
}

/// Passive-squeeze-passive factorisation of the two-mode SU(1,1) map with
/// coefficients A (same-mode) and B (cross-mode, real), quadratures ordered
/// (a, b). `alpha` is the initial magnon amplitude entering the displacement.
pub fn bloch_messiah_2mode(a: Complex64, b: Complex64, alpha: f64) -> Result<BlochMessiah> {
    let det = a.norm_sqr() - b.norm_sqr();
    if (det - 1.0).abs() > 1e-8 * a.norm_sqr().max(1.0) {
        return Err(Error::Contract(format!("|A|^2 - |B|^2 = {det} is not 1")));
    }
    if b.im.abs() > 1e-12 * b.norm().max(1.0) {
        return Err(Error::Contract(format!("cross coefficient {b} is not real")));
    }
    let ra = RMat::from_row_slice(2, 2, &[a.re, -a.im, a.im, a.re]);
    let mb = RMat::from_row_slice(2, 2, &[b.re, b.im, b.im, -b.re]);
    let sigma = blocks(&ra, &mb, &mb, &ra);

    let phi = -a.im.atan2(a.re);
    let r = (a.norm() + b.re).ln();
    let id = RMat::identity(2, 2);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let k_passive = blocks(&id, &(-&id), &rot(phi), &rot(phi)) * s;
    let l_passive = blocks(&rot(phi), &id, &(-rot(phi)), &id) * s;
    let x = std::f64::consts::SQRT_2 * alpha;
    Ok(BlochMessiah {
        phi,
        r,
        k_passive,
        l_passive,
        xbar: vec![x * b.re, x * b.im, x * a.re, x * a.im],
        sigma,
    })
}

/// (A, B) of the two-mode reference model at time t.
pub fn ep2_coefficients(delta: f64, g: f64, eps: f64, t: f64) -> Result<(Complex64, Complex64)> {
    let dm = crate::model::ep2_reference(delta, g, eps)?;
    let k = expm(&(&dm.reduced * (-I * t)));
    Ok((k[(0, 0)], k[(0, 1)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::expm_taylor;
    use crate::model::build_system;
    use std::f64::consts::PI;

    fn sensor(g: f64) -> (SystemConfig, DynamicalMatrix, f64) {
        let cfg = SystemConfig::ep3_sensor(g, 2.0);
        let dm = build_system(&cfg).unwrap();
        (cfg, dm, (1.0 - g * g).sqrt())
    }

    fn diff_var(s: &GaussianState) -> f64 {
        // c = (1, 0, -1, 0, 0, 0); coherent value 2 * 1/2 = 1
        s.lambda[(0, 0)] + s.lambda[(2, 2)] - 2.0 * s.lambda[(0, 2)]
    }

    #[test]
    fn coherent_examples() {
        let s = coherent_init(&SystemConfig::ep3_sensor(0.95, 2.0)).unwrap();
        let r = 2.0 * 2f64.sqrt();
        let want = [0.0, r, 0.0, -r, 0.0, 0.0];
        assert!(s.mu.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
        assert_eq!(s.lambda, RMat::identity(6, 6) * 0.5);
        let s = GaussianState::coherent(&[c(1.0, 0.0)], vec!["b1".into()]).unwrap();
        assert!((s.mu[0] - 2f64.sqrt()).abs() < 1e-15 && s.mu[1] == 0.0);
        let v = coherent_init(&SystemConfig::ep3_sensor(0.95, 0.0)).unwrap();
        assert!(v.mu.iter().all(|x| *x == 0.0));
        assert!(excitation_numbers(&v).total.abs() < 1e-15);
    }

    #[test]
    fn working_point_identity() {
        let (_, dm, chi) = sensor(0.95);
        let p = propagator(&dm, 2.0 * PI / chi).unwrap();
        assert_eq!(p.method, PropagatorMethod::Eigen);
        assert!(crate::linalg::max_abs(&(&p.k - CMat::identity(3, 3))) < 1e-10);
        let p0 = propagator(&dm, 0.0).unwrap();
        assert!(crate::linalg::max_abs(&(&p0.s_quad - RMat::identity(6, 6))) < 1e-12);
    }

    #[test]
    fn exceptional_point_uses_exponential() {
        let (_, dm, _) = sensor(1.0);
        let p = propagator(&dm, 1.0).unwrap();
        assert_eq!(p.method, PropagatorMethod::Expm);
        let oracle = expm_taylor(&(&dm.reduced * (-I)));
        assert!(crate::linalg::max_abs(&(&p.k - oracle)) < 1e-13);
        // nilpotent generator: K = I - i h t - h^2 t^2 / 2
        let h = &dm.reduced;
        let poly = CMat::identity(3, 3) - h * I - h * h * c(0.5, 0.0);
        assert!(crate::linalg::max_abs(&(&p.k - poly)) < 1e-13);
    }

    #[test]
    fn eigen_and_exponential_routes_agree() {
        let (_, dm, _) = sensor(0.8);
        for &t in &[0.3, 5.0, 40.0] {
            let p = propagator(&dm, t).unwrap();
            let e = expm(&(&dm.reduced * (-I * t)));
            assert!(crate::linalg::max_abs(&(&p.k - e)) < 1e-10);
            let f = expm(&(&dm.full * (-I * t)));
            assert!(crate::linalg::max_abs(&(&p.full - f)) < 1e-10);
        }
    }

    #[test]
    fn noise_examples() {
        let (cfg, dm, chi) = sensor(0.95);
        let s0 = coherent_init(&cfg).unwrap();
        let s = evolve(&s0, &propagator(&dm, PI / chi).unwrap()).unwrap();
        assert!((diff_var(&s) - 1521.0).abs() < 1e-8 * 1521.0);
        let s = evolve(&s0, &propagator(&dm, 2.0 * PI / chi).unwrap()).unwrap();
        assert!((diff_var(&s) - 1.0).abs() < 1e-8);
        assert!((s.t - 2.0 * PI / chi).abs() < 1e-15);
    }

    #[test]
    fn cavity_population_example() {
        let (cfg, dm, chi) = sensor(0.95);
        let s = evolve(&coherent_init(&cfg).unwrap(), &propagator(&dm, PI / (2.0 * chi)).unwrap()).unwrap();
        let n = excitation_numbers(&s);
        let want = (4.0 * 1.95f64.powi(2) + 0.9025) / 0.0975;
        assert!((n.per_mode[2] - want).abs() < 1e-9 * want);
        assert!((want - 165.26).abs() < 0.01);
    }

    #[test]
    fn magnon_number_bound() {
        let (cfg, dm, chi) = sensor(0.95);
        let s0 = coherent_init(&cfg).unwrap();
        let g: f64 = 0.95;
        let big_n = (4.0 * (1.0 + g).powi(4) + 4.0 * g * g) / chi.powi(4);
        for k in 0..=40 {
            let t = 2.0 * PI / chi * k as f64 / 40.0;
            let n = excitation_numbers(&evolve(&s0, &propagator(&dm, t).unwrap()).unwrap());
            assert!(n.per_mode[0] + n.per_mode[1] <= 2.0 * big_n * (1.0 + 1e-12));
        }
    }

    #[test]
    fn lossy_fixed_point_of_a_decoupled_mode() {
        let h = CMat::from_row_slice(2, 2, &[c(0.3, -0.2), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -0.05)]);
        let dm = DynamicalMatrix::from_reduced(h, vec![ModeKind::Annihilation, ModeKind::Creation], vec!["b".into(), "a".into()]).unwrap();
        let s = GaussianState::vacuum(vec!["b".into(), "a".into()]);
        let (out, _) = evolve_lossy(&s, &dm, 13.0).unwrap();
        assert!(crate::linalg::max_abs(&(&out.lambda - RMat::identity(4, 4) * 0.5)) < 1e-14);
    }

    #[test]
    fn lossy_matches_lossless_without_loss() {
        let (cfg, dm, chi) = sensor(0.9);
        let s0 = coherent_init(&cfg).unwrap();
        let t = 10.0 * 2.0 * PI / chi;
        let exact = evolve(&s0, &propagator(&dm, t).unwrap()).unwrap();
        let (lossy, _) = evolve_lossy(&s0, &dm, t).unwrap();
        let scale = crate::linalg::max_abs(&exact.lambda).max(1.0);
        assert!(crate::linalg::max_abs(&(&lossy.lambda - &exact.lambda)) / scale < 1e-8);
        assert!((&lossy.mu - &exact.mu).amax() < 1e-8 * exact.mu.amax().max(1.0));
    }

    /// Van Loan: the covariance integral from one block exponential.
    #[test]
    fn lossy_matches_van_loan() {
        let mut cfg = SystemConfig::ep3_sensor(0.95, 2.0);
        cfg.gamma = 0.1;
        cfg.gamma_m = 0.01;
        let dm = build_system(&cfg).unwrap();
        let (a, d) = drift_diffusion(&dm).unwrap();
        let chi = (0.0975f64 - 0.09f64.powi(2) / 4.0).sqrt();
        let t = 2.0 * PI / chi;
        let s0 = coherent_init(&cfg).unwrap();
        let (lossy, diag) = evolve_lossy(&s0, &dm, t).unwrap();
        assert!(diag.refinement_change < LOSSY_TOL);

        let n = a.nrows();
        let mut big = RMat::zeros(2 * n, 2 * n);
        big.view_mut((0, 0), (n, n)).copy_from(&(-&a));
        big.view_mut((0, n), (n, n)).copy_from(&d);
        big.view_mut((n, n), (n, n)).copy_from(&a.transpose());
        let e = (big * t).exp();
        let phi22 = e.view((n, n), (n, n)).clone_owned();
        let phi12 = e.view((0, n), (n, n)).clone_owned();
        let q = phi22.transpose() * phi12;
        let lam = &phi22.transpose() * &s0.lambda * &phi22 + q;
        let scale = crate::linalg::max_abs(&lam);
        assert!(crate::linalg::max_abs(&(&lossy.lambda - &lam)) / scale < 1e-9);
        assert!(lossy.uncertainty_margin() > -1e-10);
        assert!(diff_var(&lossy) > 1.0);
    }

    #[test]
    fn invariants_over_five_periods() {
        let (cfg, dm, chi) = sensor(0.95);
        let s0 = coherent_init(&cfg).unwrap();
        let cons = |s: &GaussianState| {
            let n = excitation_numbers(s);
            n.per_mode[0] - n.per_mode[1] - n.per_mode[2]
        };
        let c0 = cons(&s0);
        for k in 0..=100 {
            let t = 5.0 * 2.0 * PI / chi * k as f64 / 100.0;
            let p = propagator(&dm, t).unwrap();
            assert!(p.symplectic_defect() < 1e-10);
            let s = evolve(&s0, &p).unwrap();
            assert!((cons(&s) - c0).abs() < 1e-8);
            assert!((s.purity_determinant() - 1.0).abs() < 1e-8);
            assert!(s.uncertainty_margin() > -1e-10);
        }
    }

    #[test]
    fn readout_swap_examples() {
        let (cfg, dm, chi) = sensor(0.95);
        let s = evolve(&coherent_init(&cfg).unwrap(), &propagator(&dm, 0.7 / chi).unwrap()).unwrap();
        let same = readout_swap(&s, &[0, 1], 0.0).unwrap();
        assert_eq!(same.marginal(&[0, 1, 2]).lambda, s.lambda);

        let out = readout_swap(&s, &[0, 1], PI / 2.0).unwrap();
        let magnons = out.marginal(&[0, 1]);
        assert!(magnons.mu.amax() < 1e-10);
        assert!(crate::linalg::max_abs(&(&magnons.lambda - RMat::identity(4, 4) * 0.5)) < 1e-10);
        let read = out.marginal(&[3, 4]);
        let before = s.marginal(&[0, 1]);
        assert!((&read.mu - &before.mu).amax() < 1e-10);
        assert!(crate::linalg::max_abs(&(&read.lambda - &before.lambda)) < 1e-10);

        let half = readout_swap(&s, &[0, 1], PI / 4.0).unwrap();
        let t0 = excitation_numbers(&s).total;
        assert!((excitation_numbers(&half).total - t0).abs() < 1e-10 * t0);
    }

    #[test]
    fn external_loss_examples() {
        let r = -0.1f64.ln() / 2.0;
        let mut s = GaussianState::vacuum(vec!["b".into()]);
        s.lambda[(0, 0)] = (-2.0 * r).exp() / 2.0;
        s.lambda[(1, 1)] = (2.0 * r).exp() / 2.0;
        let out = apply_external_loss(&s, &[0.5]).unwrap();
        assert!((2.0 * out.lambda[(0, 0)] - 0.55).abs() < 1e-15);
        assert_eq!(apply_external_loss(&s, &[1.0]).unwrap(), s);
        let gone = apply_external_loss(&s, &[0.0]).unwrap();
        assert_eq!(gone.lambda, RMat::identity(2, 2) * 0.5);
        assert!(matches!(apply_external_loss(&s, &[1.5]), Err(Error::Domain(_))));
    }

    #[test]
    fn snapshot_round_trip() {
        let (cfg, dm, _) = sensor(0.9);
        let s = evolve(&coherent_init(&cfg).unwrap(), &propagator(&dm, 1.7).unwrap()).unwrap();
        let json = serde_json::to_string(&s.snapshot()).unwrap();
        let back: StateSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(GaussianState::from_snapshot(&back).unwrap(), s);
    }

    #[test]
    fn bloch_messiah_examples() {
        let bm = bloch_messiah_2mode(c(1.0, 0.0), c(0.0, 0.0), 1.0).unwrap();
        assert_eq!((bm.r, bm.phi), (0.0, 0.0));
        assert!(crate::linalg::max_abs(&(bm.reconstruct() - RMat::identity(4, 4))) < 1e-15);

        let (delta, g): (f64, f64) = (1.0, 0.9);
        let chi = (delta * delta - g * g).sqrt();
        for k in 0..=200 {
            let t = 4.0 * PI / chi * k as f64 / 200.0;
            let (a, b) = ep2_coefficients(delta, g, 0.0, t).unwrap();
            let bm = bloch_messiah_2mode(a, b, 1.0).unwrap();
            assert!(bm.reconstruction_error() < 1e-10, "t = {t}");
        }
        let (a, b) = ep2_coefficients(delta, g, 0.0, 2.0 * PI / chi).unwrap();
        assert!(bloch_messiah_2mode(a, b, 1.0).unwrap().r.abs() < 1e-10);
        assert!(matches!(bloch_messiah_2mode(c(2.0, 0.0), c(0.0, 0.0), 1.0), Err(Error::Contract(_))));
    }

    /// |d xbar / d eps| at the working point grows like chi^-3.
    #[test]
    fn displacement_response_scaling() {
        let mut lx = Vec::new();
        let mut ly = Vec::new();
        for &r in &[1.0005, 1.002, 1.008, 1.03] {
            let g: f64 = 1.0;
            let delta = g * r;
            let chi = (delta * delta - g * g).sqrt();
            let t = 2.0 * PI / chi;
            let h = 1e-7 * chi.powi(3);
            let xp = bloch_messiah_2mode_at(delta, g, h, t);
            let xm = bloch_messiah_2mode_at(delta, g, -h, t);
            let d: f64 = xp.iter().zip(&xm).map(|(p, m)| ((p - m) / (2.0 * h)).powi(2)).sum::<f64>().sqrt();
            lx.push(chi.ln());
            ly.push(d.ln());
        }
        let (slope, _, _) = crate::linalg::linear_fit(&lx, &ly);
        assert!((slope + 3.0).abs() < 0.05, "{slope}");
    }

    fn bloch_messiah_2mode_at(delta: f64, g: f64, eps: f64, t: f64) -> Vec<f64> {
        let (a, b) = ep2_coefficients(delta, g, eps, t).unwrap();
        let x = std::f64::consts::SQRT_2;
        vec![x * b.re, x * b.im, x * a.re, x * a.im]
    }
}
