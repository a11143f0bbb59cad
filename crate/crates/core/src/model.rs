//! System configuration and the dynamical matrices it generates.
//!
//! All quantities are dimensionless, measured in units of the first SU(2)
//! coupling. Multiply frequencies by [`SystemConfig::rate_scale`] to get rad/s.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, max_abs, CMat};

/// Physical parameters of an n-mode system: n-1 magnon modes and one cavity
/// mode. The first `m` magnons couple to the cavity through two-mode
/// squeezing, the rest through beam-splitter exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n: usize,
    pub m: usize,
    /// Squeezing-type couplings, length m.
    pub g: Vec<f64>,
    /// Exchange-type couplings, length n-m-1.
    pub kappa: Vec<f64>,
    /// Two-photon detunings, length n-1.
    pub delta: Vec<f64>,
    /// Perturbations added to the detunings, length n-1.
    pub epsilon: Vec<f64>,
    /// Cavity decay rate.
    pub gamma: f64,
    /// Magnon decay rate.
    #[serde(rename = "Gamma")]
    pub gamma_m: f64,
    /// Initial coherent amplitudes of the magnon modes, length n-1.
    pub alpha: Vec<Complex64>,
    /// rad/s per dimensionless frequency unit.
    #[serde(default = "unit_scale")]
    pub rate_scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl SystemConfig {
    /// Three-mode sensor with one squeezing and one exchange coupling,
    /// zero detuning, lossless, amplitudes (i*alpha, -i*alpha).
    pub fn ep3_sensor(g: f64, alpha: f64) -> Self {
        SystemConfig {
            n: 3,
            m: 1,
            g: vec![g],
            kappa: vec![1.0],
            delta: vec![0.0, 0.0],
            epsilon: vec![0.0, 0.0],
            gamma: 0.0,
            gamma_m: 0.0,
            alpha: vec![c(0.0, alpha), c(0.0, -alpha)],
            rate_scale: 1.0,
        }
    }

    /// Four-mode system with two squeezing couplings (g1, f) and one exchange
    /// coupling, parked on the fourth-order exceptional locus for ratio `f`.
    pub fn ep4(f: f64) -> Result<Self> {
        let p = ep4_locus(f)?;
        Ok(SystemConfig {
            n: 4,
            m: 2,
            g: vec![p.g, f],
            kappa: vec![1.0],
            delta: vec![p.delta[0], p.delta[1], p.delta[2]],
            epsilon: vec![0.0; 3],
            gamma: 0.0,
            gamma_m: 0.0,
            alpha: vec![c(0.0, 1.0), c(0.0, -1.0), c(0.0, 1.0)],
            rate_scale: 1.0,
        })
    }

    pub fn magnons(&self) -> usize {
        self.n - 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n < 2 {
            return bad(format!("n = {} but at least 2 modes are required", self.n));
        }
        if self.m < 1 || self.m > self.n - 1 {
            return bad(format!("m = {} must lie in 1..={}", self.m, self.n - 1));
        }
        let checks = [
            ("g", self.g.len(), self.m),
            ("kappa", self.kappa.len(), self.n - self.m - 1),
            ("delta", self.delta.len(), self.n - 1),
            ("epsilon", self.epsilon.len(), self.n - 1),
            ("alpha", self.alpha.len(), self.n - 1),
        ];
        for (name, got, want) in checks {
            if got != want {
                return bad(format!("{name} has {got} entries, expected {want}"));
            }
        }
        if self.g.iter().chain(&self.kappa).any(|x| !(*x >= 0.0)) {
            return bad("coupling strengths must be non-negative".into());
        }
        if !(self.gamma >= 0.0) || !(self.gamma_m >= 0.0) {
            return bad("decay rates must be non-negative".into());
        }
        let finite = self
            .delta
            .iter()
            .chain(&self.epsilon)
            .chain(&self.g)
            .chain(&self.kappa)
            .all(|x| x.is_finite())
            && self.alpha.iter().all(|a| a.is_finite());
        if !finite {
            return bad("non-finite parameter".into());
        }
        if !(self.rate_scale > 0.0) {
            return bad("rate_scale must be positive".into());
        }
        Ok(())
    }

    /// Effective detunings delta + epsilon.
    pub fn shifted_detunings(&self) -> Vec<f64> {
        self.delta.iter().zip(&self.epsilon).map(|(d, e)| d + e).collect()
    }

    pub fn is_lossless(&self) -> bool {
        self.gamma == 0.0 && self.gamma_m == 0.0
    }

    /// Copy with every perturbation replaced by `eps * weights[i]`.
    pub fn with_perturbation(&self, eps: f64, weights: &[f64]) -> Self {
        let mut out = self.clone();
        for (e, w) in out.epsilon.iter_mut().zip(weights) {
            *e = eps * w;
        }
        out
    }
}

/// Whether a reduced-basis entry is an annihilation or creation operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeKind {
    Annihilation,
    Creation,
}

/// Reduced n x n generator on (b_1..b_m, b†_{m+1}..b†_{n-1}, a†) together with
/// the full 2n x 2n generator on (b_1, b_1†, ..., a, a†).
///
/// Heisenberg equations read d/dt v = -i H v in either basis.
#[derive(Debug, Clone)]
pub struct DynamicalMatrix {
    pub reduced: CMat,
    pub full: CMat,
    pub kinds: Vec<ModeKind>,
    pub labels: Vec<String>,
}

impl DynamicalMatrix {
    /// Builds the full generator from a reduced one. Entry (i, j) of the
    /// reduced matrix couples operator i to operator j; the conjugate
    /// operators receive -conj(h_ij).
    pub fn from_reduced(reduced: CMat, kinds: Vec<ModeKind>, labels: Vec<String>) -> Result<Self> {
        let n = reduced.nrows();
        if reduced.ncols() != n || kinds.len() != n || labels.len() != n {
            return Err(Error::Config(format!(
                "reduced matrix {}x{} with {} kinds and {} labels",
                n,
                reduced.ncols(),
                kinds.len(),
                labels.len()
            )));
        }
        let pos = |k: usize| 2 * k + usize::from(kinds[k] == ModeKind::Creation);
        let cpos = |k: usize| 2 * k + usize::from(kinds[k] == ModeKind::Annihilation);
        let mut full = CMat::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let h = reduced[(i, j)];
                full[(pos(i), pos(j))] = h;
                full[(cpos(i), cpos(j))] = -h.conj();
            }
        }
        Ok(DynamicalMatrix { reduced, full, kinds, labels })
    }

    pub fn modes(&self) -> usize {
        self.reduced.nrows()
    }

    /// Per-mode amplitude decay rates, read from the reduced diagonal.
    pub fn decay_rates(&self) -> Vec<f64> {
        (0..self.modes()).map(|k| -self.reduced[(k, k)].im).collect()
    }

    pub fn is_lossless(&self) -> bool {
        self.decay_rates().iter().all(|r| *r == 0.0)
    }

    /// Scale used by tolerances: max(1, Frobenius norm).
    pub fn scale(&self) -> f64 {
        self.reduced.norm().max(1.0)
    }
}

/// Builds both generators from a configuration.
pub fn build_system(cfg: &SystemConfig) -> Result<DynamicalMatrix> {
    cfg.validate()?;
    let n = cfg.n;
    let last = n - 1;
    let shifted = cfg.shifted_detunings();
    let mut h = CMat::zeros(n, n);
    let mut kinds = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..last {
        if i < cfg.m {
            h[(i, i)] = c(shifted[i], -cfg.gamma_m);
            h[(i, last)] = c(cfg.g[i], 0.0);
            h[(last, i)] = c(-cfg.g[i], 0.0);
            kinds.push(ModeKind::Annihilation);
        } else {
            let k = cfg.kappa[i - cfg.m];
            h[(i, i)] = c(-shifted[i], -cfg.gamma_m);
            h[(i, last)] = c(-k, 0.0);
            h[(last, i)] = c(-k, 0.0);
            kinds.push(ModeKind::Creation);
        }
        labels.push(format!("b{}", i + 1));
    }
    h[(last, last)] = c(0.0, -cfg.gamma);
    kinds.push(ModeKind::Creation);
    labels.push("a".to_string());
    DynamicalMatrix::from_reduced(h, kinds, labels)
}

/// Max-norm residuals of the particle-hole and pseudo-Hermiticity relations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetryReport {
    /// ||C H C^-1 + H||_max with C = I (x) sigma_x.
    pub particle_hole: f64,
    /// ||eta H eta^-1 - H^dagger||_max with eta = I (x) sigma_z.
    pub pseudo_hermitian: f64,
}

pub fn check_symmetries(dm: &DynamicalMatrix) -> SymmetryReport {
    let n2 = dm.full.nrows();
    let mut cm = CMat::zeros(n2, n2);
    let mut eta = CMat::zeros(n2, n2);
    for k in 0..n2 / 2 {
        cm[(2 * k, 2 * k + 1)] = c(1.0, 0.0);
        cm[(2 * k + 1, 2 * k)] = c(1.0, 0.0);
        eta[(2 * k, 2 * k)] = c(1.0, 0.0);
        eta[(2 * k + 1, 2 * k + 1)] = c(-1.0, 0.0);
    }
    // both involutions are their own inverse
    let ph = &cm * &dm.full * &cm + &dm.full;
    let ps = &eta * &dm.full * &eta - dm.full.adjoint();
    SymmetryReport { particle_hole: max_abs(&ph), pseudo_hermitian: max_abs(&ps) }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IrreducibilityReport {
    pub irreducible: bool,
    /// 1-based magnon index pairs whose signed effective detunings coincide.
    pub violations: Vec<(usize, usize)>,
}

/// Detuning test for decoupled subspaces: same-type magnons must not share
/// an effective detuning and mixed-type magnons must not have opposite ones.
pub fn check_irreducibility(cfg: &SystemConfig) -> IrreducibilityReport {
    let shifted = cfg.shifted_detunings();
    let signed: Vec<f64> = shifted
        .iter()
        .enumerate()
        .map(|(i, d)| if i < cfg.m { *d } else { -*d })
        .collect();
    let scale = signed.iter().fold(1.0_f64, |a, b| a.max(b.abs()));
    let tol = 1e-12 * scale;
    let mut violations = Vec::new();
    for i in 0..signed.len() {
        for j in i + 1..signed.len() {
            if (signed[i] - signed[j]).abs() <= tol {
                violations.push((i + 1, j + 1));
            }
        }
    }
    IrreducibilityReport { irreducible: violations.is_empty(), violations }
}

/// Detunings and coupling that place the four-mode system on its
/// fourth-order exceptional point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ep4Point {
    pub f: f64,
    pub delta: [f64; 3],
    pub g: f64,
    /// The four-fold eigenvalue.
    pub eigenvalue: f64,
}

pub fn ep4_locus(f: f64) -> Result<Ep4Point> {
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::Domain(format!("coupling ratio f = {f} must lie in (0, 1)")));
    }
    let f2 = f * f;
    let den = (1.0 - f2).powf(1.5);
    Ok(Ep4Point {
        f,
        delta: [4.0 * f * (1.0 + f2) / den, 4.0 * f * f2 / den, -4.0 * f / den],
        g: (1.0 + f2).powi(2) / den,
        eigenvalue: 2.0 * f * (1.0 + f2) / den,
    })
}

/// Two-mode squeezing reference with a single magnon and the cavity,
/// h = [[delta+eps, ig], [ig, -(delta+eps)]] on (b, a†). Lossless; its
/// exceptional point sits at delta = g.
pub fn ep2_reference(delta: f64, g: f64, eps: f64) -> Result<DynamicalMatrix> {
    if !(delta.is_finite() && g.is_finite() && eps.is_finite()) {
        return Err(Error::Config("non-finite two-mode parameters".into()));
    }
    let d = delta + eps;
    let h = CMat::from_row_slice(2, 2, &[c(d, 0.0), c(0.0, g), c(0.0, g), c(-d, 0.0)]);
    DynamicalMatrix::from_reduced(h, vec![ModeKind::Annihilation, ModeKind::Creation], vec!["b".into(), "a".into()])
}

/// Convenience for tests and examples: a real matrix as complex.
pub fn complexify(m: &DMatrix<f64>) -> CMat {
    m.map(|x| c(x, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_mode_reduced_matrix() {
        let mut cfg = SystemConfig::ep3_sensor(0.7, 2.0);
        cfg.epsilon = vec![0.01, 0.02];
        let dm = build_system(&cfg).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[0.01, 0.0, 0.7, 0.0, -0.02, -1.0, -0.7, -1.0, 0.0]);
        assert!(max_abs(&(&dm.reduced - complexify(&expect))) == 0.0);
        assert_eq!(dm.labels, vec!["b1", "b2", "a"]);
    }

    #[test]
    fn two_mode_reduced_matrix() {
        let cfg = SystemConfig {
            n: 2,
            m: 1,
            g: vec![0.4],
            kappa: vec![],
            delta: vec![0.0],
            epsilon: vec![0.0],
            gamma: 0.0,
            gamma_m: 0.0,
            alpha: vec![c(1.0, 0.0)],
            rate_scale: 1.0,
        };
        let dm = build_system(&cfg).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, 0.4, -0.4, 0.0]);
        assert!(max_abs(&(&dm.reduced - complexify(&expect))) == 0.0);
    }

    #[test]
    fn loss_enters_the_diagonal_only() {
        let mut cfg = SystemConfig::ep3_sensor(0.95, 2.0);
        cfg.gamma = 0.1;
        cfg.gamma_m = 0.01;
        let dm = build_system(&cfg).unwrap();
        assert_eq!(dm.reduced[(0, 0)], c(0.0, -0.01));
        assert_eq!(dm.reduced[(1, 1)], c(0.0, -0.01));
        assert_eq!(dm.reduced[(2, 2)], c(0.0, -0.1));
        assert_eq!(dm.reduced[(0, 2)], c(0.95, 0.0));
        assert_eq!(dm.reduced[(2, 1)], c(-1.0, 0.0));
        assert_eq!(dm.decay_rates(), vec![0.01, 0.01, 0.1]);
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let mut cfg = SystemConfig::ep3_sensor(0.9, 1.0);
        cfg.kappa = vec![1.0, 2.0];
        assert!(matches!(build_system(&cfg), Err(Error::Config(_))));
        cfg = SystemConfig::ep3_sensor(0.9, 1.0);
        cfg.m = 3;
        assert!(matches!(build_system(&cfg), Err(Error::Config(_))));
        cfg = SystemConfig::ep3_sensor(-0.1, 1.0);
        assert!(matches!(build_system(&cfg), Err(Error::Config(_))));
        cfg = SystemConfig::ep3_sensor(0.9, 1.0);
        cfg.gamma = -1.0;
        assert!(matches!(build_system(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn symmetry_residuals() {
        let dm = build_system(&SystemConfig::ep3_sensor(1.0, 2.0)).unwrap();
        let r = check_symmetries(&dm);
        assert!(r.particle_hole < 1e-14 && r.pseudo_hermitian < 1e-14);

        let mut cfg = SystemConfig::ep3_sensor(0.95, 2.0);
        cfg.gamma = 0.1;
        let r = check_symmetries(&build_system(&cfg).unwrap());
        assert!((r.pseudo_hermitian - 0.2).abs() < 1e-15);

        let r = check_symmetries(&build_system(&SystemConfig::ep4(0.2).unwrap()).unwrap());
        assert!(r.particle_hole < 1e-14 && r.pseudo_hermitian < 1e-14);
    }

    #[test]
    fn irreducibility_examples() {
        let mut cfg = SystemConfig::ep3_sensor(1.0, 2.0);
        cfg.epsilon = vec![1e-3, 1.5e-3];
        assert!(check_irreducibility(&cfg).irreducible);

        cfg.epsilon = vec![0.01, -0.01];
        let r = check_irreducibility(&cfg);
        assert!(!r.irreducible);
        assert_eq!(r.violations, vec![(1, 2)]);

        let two = SystemConfig {
            n: 2,
            m: 1,
            g: vec![1.0],
            kappa: vec![],
            delta: vec![0.3],
            epsilon: vec![0.0],
            gamma: 0.0,
            gamma_m: 0.0,
            alpha: vec![c(0.0, 0.0)],
            rate_scale: 1.0,
        };
        assert!(check_irreducibility(&two).irreducible);
    }

    #[test]
    fn ep4_locus_values() {
        let p = ep4_locus(0.2).unwrap();
        assert!((p.delta[0] - 0.8845379626717034).abs() < 1e-13);
        assert!((p.delta[1] - 0.0340206908719886).abs() < 1e-13);
        assert!((p.delta[2] + 0.8505172717997147).abs() < 1e-13);
        assert!((p.g - 1.1498993514732143).abs() < 1e-13);
        assert!((p.eigenvalue - 0.4422689813358517).abs() < 1e-15);
        assert!((p.eigenvalue - 0.442272).abs() < 1e-5);

        let p = ep4_locus(0.5).unwrap();
        assert!((p.delta[0] - 3.849001794597505).abs() < 1e-12);
        assert!((p.delta[1] - 0.769800358919501).abs() < 1e-12);
        assert!((p.delta[2] + 3.079201435678004).abs() < 1e-12);
        assert!((p.g - 2.4056261216234405).abs() < 1e-12);

        let p = ep4_locus(1e-9).unwrap();
        assert!(p.delta.iter().all(|d| d.abs() < 1e-8) && (p.g - 1.0).abs() < 1e-12);

        assert!(matches!(ep4_locus(0.0), Err(Error::Domain(_))));
        assert!(matches!(ep4_locus(1.0), Err(Error::Domain(_))));
    }
}
