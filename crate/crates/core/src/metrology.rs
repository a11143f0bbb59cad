//! Sensing figures of merit: susceptibility, noise, sensitivity, quantum
//! Fisher information and scaling exponents.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{self, apply_external_loss, coherent_init, evolve, propagator, GaussianState};
use crate::linalg::{c, linear_fit, omega, pinv, RMat, RVec};
use crate::model::{build_system, ep2_reference, DynamicalMatrix, SystemConfig};

/// Finite-difference step for susceptibilities.
pub const SUSCEPTIBILITY_STEP: f64 = 1e-9;

/// QFI derivative step in units of chi^3.
pub const QFI_STEP: f64 = 1e-7;

/// Relative singular-value cutoff for the covariance part of the QFI.
pub const QFI_RCOND: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    X1MinusX2,
    X1PlusX2,
    /// Linear combination of quadratures with the largest signal-to-noise.
    Optimal,
}

impl fmt::Display for ObservableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObservableKind::X1MinusX2 => "x1_minus_x2",
            ObservableKind::X1PlusX2 => "x1_plus_x2",
            ObservableKind::Optimal => "optimal",
        })
    }
}

impl std::str::FromStr for ObservableKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x1_minus_x2" => Ok(ObservableKind::X1MinusX2),
            "x1_plus_x2" => Ok(ObservableKind::X1PlusX2),
            "optimal" => Ok(ObservableKind::Optimal),
            _ => Err(Error::Config(format!("unknown observable '{s}'"))),
        }
    }
}

/// O = c . mu
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub name: String,
    pub coefficients: RVec,
}

impl Observable {
    pub fn new(name: &str, coefficients: RVec) -> Result<Self> {
        if coefficients.iter().all(|x| *x == 0.0) {
            return Err(Error::Config("observable has all-zero coefficients".into()));
        }
        Ok(Observable { name: name.into(), coefficients })
    }

    fn pair(modes: usize, sign: f64, name: &str) -> Result<Self> {
        if modes < 2 {
            return Err(Error::Config(format!("{name} needs two magnon modes")));
        }
        let mut v = RVec::zeros(2 * modes);
        v[0] = 1.0;
        v[2] = sign;
        Self::new(name, v)
    }

    pub fn x1_minus_x2(modes: usize) -> Result<Self> {
        Self::pair(modes, -1.0, "x1_minus_x2")
    }

    pub fn x1_plus_x2(modes: usize) -> Result<Self> {
        Self::pair(modes, 1.0, "x1_plus_x2")
    }

    pub fn mean(&self, s: &GaussianState) -> f64 {
        self.coefficients.dot(&s.mu)
    }

    /// c^T Lambda c; equals 1 on coherent states for X1 -+ X2.
    pub fn variance(&self, s: &GaussianState) -> f64 {
        (self.coefficients.transpose() * &s.lambda * &self.coefficients)[(0, 0)]
    }
}

/// Scalar parameters echoed into reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeMeta {
    pub g: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub gamma: f64,
    #[serde(rename = "Gamma")]
    pub gamma_m: f64,
    pub eta: f64,
    /// Oscillation frequency at eps = 0, if the system oscillates.
    pub chi: Option<f64>,
}

type Family = Arc<dyn Fn(f64) -> Result<DynamicalMatrix> + Send + Sync>;

/// A one-parameter family of generators, the initial state it acts on and
/// the read-out transmissivities.
#[derive(Clone)]
pub struct Probe {
    family: Family,
    pub initial: GaussianState,
    /// Per-mode transmissivity applied before measurement.
    pub eta: Option<Vec<f64>>,
    pub meta: ProbeMeta,
    /// Eligible for the closed-form three-mode susceptibility.
    pub ep3_analytic: bool,
}

impl fmt::Debug for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Probe").field("meta", &self.meta).field("eta", &self.eta).finish()
    }
}

impl Probe {
    /// Perturbation eps * weights[i] on the detunings of `cfg`.
    pub fn from_config(cfg: &SystemConfig, weights: &[f64]) -> Result<Self> {
        cfg.validate()?;
        if weights.len() != cfg.n - 1 {
            return Err(Error::Config(format!("{} weights for {} magnons", weights.len(), cfg.n - 1)));
        }
        let base = cfg.clone();
        let w = weights.to_vec();
        let family: Family = Arc::new(move |eps| build_system(&base.with_perturbation(eps, &w)));
        let dm0 = family(0.0)?;
        let alpha = cfg.alpha.first().map(|a| a.norm()).unwrap_or(0.0);
        let ep3_analytic = cfg.n == 3
            && cfg.m == 1
            && cfg.is_lossless()
            && cfg.delta.iter().chain(&cfg.epsilon).all(|x| *x == 0.0)
            && weights == [1.0, 1.0]
            && (cfg.alpha[0] - c(0.0, alpha)).norm() == 0.0
            && (cfg.alpha[1] + cfg.alpha[0]).norm() == 0.0;
        Ok(Probe {
            family,
            initial: coherent_init(cfg)?,
            eta: None,
            meta: ProbeMeta {
                g: cfg.g.first().copied().unwrap_or(0.0),
                kappa: cfg.kappa.first().copied().unwrap_or(0.0),
                alpha,
                gamma: cfg.gamma,
                gamma_m: cfg.gamma_m,
                eta: 1.0,
                chi: crate::spectral::three_mode_chi(&dm0),
            },
            ep3_analytic,
        })
    }

    /// Three-mode sensor with both ensembles perturbed equally.
    pub fn ep3_sensor(g: f64, alpha: f64) -> Result<Self> {
        Self::from_config(&SystemConfig::ep3_sensor(g, alpha), &[1.0, 1.0])
    }

    /// Two-mode reference model with the magnon in a real coherent state.
    pub fn ep2(delta: f64, g: f64, alpha: f64) -> Result<Self> {
        let family: Family = Arc::new(move |eps| ep2_reference(delta, g, eps));
        family(0.0)?;
        let chi2 = delta * delta - g * g;
        Ok(Probe {
            family,
            initial: GaussianState::coherent(&[c(alpha, 0.0), c(0.0, 0.0)], vec!["b".into(), "a".into()])?,
            eta: None,
            meta: ProbeMeta {
                g,
                kappa: delta,
                alpha,
                gamma: 0.0,
                gamma_m: 0.0,
                eta: 1.0,
                chi: (chi2 > 0.0).then(|| chi2.sqrt()),
            },
            ep3_analytic: false,
        })
    }

    /// Arbitrary family.
    pub fn custom<F>(family: F, initial: GaussianState, meta: ProbeMeta) -> Result<Self>
    where
        F: Fn(f64) -> Result<DynamicalMatrix> + Send + Sync + 'static,
    {
        let family: Family = Arc::new(family);
        let dm0 = family(0.0)?;
        if dm0.modes() != initial.modes() {
            return Err(Error::Config("initial state and generator disagree on the mode count".into()));
        }
        Ok(Probe { family, initial, eta: None, meta, ep3_analytic: false })
    }

    /// Uniform read-out transmissivity on every magnon mode.
    pub fn with_readout_efficiency(mut self, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Domain(format!("transmissivity {eta} outside [0, 1]")));
        }
        let n = self.initial.modes();
        let mut v = vec![eta; n];
        v[n - 1] = 1.0;
        self.eta = Some(v);
        self.meta.eta = eta;
        self.ep3_analytic = self.ep3_analytic && eta == 1.0;
        Ok(self)
    }

    pub fn generator(&self, eps: f64) -> Result<DynamicalMatrix> {
        (self.family)(eps)
    }

    pub fn working_time(&self, q: f64) -> Result<f64> {
        match self.meta.chi {
            Some(chi) if chi > 0.0 => Ok(2.0 * std::f64::consts::PI * q / chi),
            _ => Err(Error::Regime("no oscillation frequency: working point undefined".into())),
        }
    }

    fn lossless(&self) -> Result<bool> {
        Ok(self.generator(0.0)?.is_lossless())
    }

    /// Measured state at perturbation `eps` after time `t`. Lossy runs use
    /// `steps` RK4 steps so that neighbouring eps share a discretisation.
    fn state_with(&self, eps: f64, t: f64, steps: Option<usize>) -> Result<GaussianState> {
        let dm = self.generator(eps)?;
        let s = match steps {
            None => evolve(&self.initial, &propagator(&dm, t)?)?,
            Some(n) => gaussian::evolve_lossy_steps(&self.initial, &dm, t, n)?,
        };
        match &self.eta {
            Some(eta) => apply_external_loss(&s, eta),
            None => Ok(s),
        }
    }

    fn steps(&self, t: f64) -> Result<Option<usize>> {
        if self.lossless()? {
            return Ok(None);
        }
        // twice the default step count: the halving check then passes at 1e-9
        Ok(Some(2 * gaussian::default_steps(&self.generator(0.0)?, t)))
    }

    pub fn state(&self, eps: f64, t: f64) -> Result<GaussianState> {
        let steps = self.steps(t)?;
        self.state_with(eps, t, steps)
    }

    /// (state at eps0, dmu/deps, dLambda/deps) by central differences.
    pub fn derivatives(&self, t: f64, eps0: f64, h: f64) -> Result<(GaussianState, RVec, RMat)> {
        let steps = self.steps(t)?;
        let s0 = self.state_with(eps0, t, steps)?;
        let p = self.state_with(eps0 + h, t, steps)?;
        let m = self.state_with(eps0 - h, t, steps)?;
        let dmu = (&p.mu - &m.mu) / (2.0 * h);
        let dlam = (&p.lambda - &m.lambda) / (2.0 * h);
        Ok((s0, dmu, dlam))
    }

    fn observable(&self, kind: ObservableKind, s: &GaussianState, dmu: &RVec) -> Result<Observable> {
        match kind {
            ObservableKind::X1MinusX2 => Observable::x1_minus_x2(self.initial.modes()),
            ObservableKind::X1PlusX2 => Observable::x1_plus_x2(self.initial.modes()),
            ObservableKind::Optimal => {
                let inv = s
                    .lambda
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| Error::Numerical("singular covariance".into()))?;
                let v = inv * dmu;
                if v.iter().all(|x| *x == 0.0) {
                    // no signal: any direction is optimal
                    let mut e = RVec::zeros(dmu.len());
                    e[0] = 1.0;
                    return Observable::new("optimal", e);
                }
                Observable::new("optimal", v)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SusceptibilityMethod {
    FiniteDifference,
    AnalyticEp3,
}

/// |d<O>/deps| at eps = 0.
pub fn susceptibility(probe: &Probe, obs: &Observable, t: f64, method: SusceptibilityMethod) -> Result<f64> {
    match method {
        SusceptibilityMethod::FiniteDifference => {
            let (_, dmu, _) = probe.derivatives(t, 0.0, SUSCEPTIBILITY_STEP)?;
            Ok(obs.coefficients.dot(&dmu).abs())
        }
        SusceptibilityMethod::AnalyticEp3 => {
            let want = Observable::x1_minus_x2(probe.initial.modes())?;
            if !probe.ep3_analytic || obs.coefficients != want.coefficients {
                return Err(Error::Unsupported(
                    "closed-form susceptibility covers only the lossless three-mode sensor with X1 - X2".into(),
                ));
            }
            susceptibility_ep3(probe.meta.g, probe.meta.kappa, probe.meta.alpha, t)
        }
    }
}

/// Closed-form X1 - X2 susceptibility of the three-mode sensor.
pub fn susceptibility_ep3(g: f64, kappa: f64, alpha: f64, t: f64) -> Result<f64> {
    let chi2 = kappa * kappa - g * g;
    if !(chi2 > 0.0) {
        return Err(Error::Regime(format!("kappa^2 - g^2 = {chi2:e} <= 0")));
    }
    let chi = chi2.sqrt();
    let ct = chi * t;
    let xi = (kappa * kappa + g * g) * ct * (2.0 + ct.cos()) + (g * g - 8.0 * g * kappa + kappa * kappa) * ct.sin();
    Ok((2f64.sqrt() * alpha * (kappa + g).powi(2) * xi / (2.0 * chi.powi(5))).abs())
}

/// 3 sqrt2 alpha (kappa^2+g^2)(kappa+g)^2 q pi / chi^5
pub fn susceptibility_max(g: f64, kappa: f64, alpha: f64, q: f64) -> f64 {
    let chi = (kappa * kappa - g * g).sqrt();
    3.0 * 2f64.sqrt() * alpha * (kappa * kappa + g * g) * (kappa + g).powi(2) * q * std::f64::consts::PI / chi.powi(5)
}

pub fn noise_variance(probe: &Probe, obs: &Observable, t: f64) -> Result<f64> {
    Ok(obs.variance(&probe.state(0.0, t)?))
}

/// Lossless closed forms of the X1 -+ X2 noise of the three-mode sensor.
pub fn noise_closed_form(kind: ObservableKind, g: f64, kappa: f64, chi_t: f64) -> Result<f64> {
    match kind {
        ObservableKind::X1MinusX2 => Ok((kappa - g * chi_t.cos()).powi(2) / (kappa - g).powi(2)),
        ObservableKind::X1PlusX2 => Ok((kappa + g * chi_t.cos()).powi(2) / (kappa + g).powi(2)),
        ObservableKind::Optimal => Err(Error::Unsupported("no closed form for the optimal observable".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QfiParts {
    pub i_mu: f64,
    pub i_lambda: f64,
    pub total: f64,
    /// Singular values discarded by the pseudo-inverse.
    pub dropped: usize,
    /// The covariance part was unusable and set to zero (lower bound).
    pub fallback: bool,
    pub step: f64,
}

fn qfi_step(probe: &Probe) -> f64 {
    QFI_STEP * probe.meta.chi.map(|c| c.powi(3)).unwrap_or(1.0)
}

/// Gaussian quantum Fisher information I_mu + I_Lambda at eps0.
///
/// I_Lambda = 1/2 vec(dL)^T (L (x) L - 1/4 W (x) W)^+ vec(dL), W the
/// symplectic form.
pub fn qfi_parts(probe: &Probe, t: f64, eps0: f64) -> Result<QfiParts> {
    qfi_parts_with_step(probe, t, eps0, qfi_step(probe))
}

pub fn qfi_parts_with_step(probe: &Probe, t: f64, eps0: f64, h: f64) -> Result<QfiParts> {
    let (s, dmu, dlam) = probe.derivatives(t, eps0, h)?;
    qfi_from_moments(&s.lambda, &dmu, &dlam, h)
}

pub fn qfi_from_moments(lambda: &RMat, dmu: &RVec, dlam: &RMat, step: f64) -> Result<QfiParts> {
    let lu = lambda.clone().lu();
    let x = lu.solve(dmu).ok_or_else(|| Error::Numerical("singular covariance".into()))?;
    let i_mu = dmu.dot(&x);

    let n = lambda.nrows();
    let om = omega(n / 2);
    let m = lambda.kronecker(lambda) - om.kronecker(&om) * 0.25;
    // column-major vec
    let v = RVec::from_iterator(n * n, dlam.iter().cloned());
    let (mp, dropped) = pinv(&m, QFI_RCOND);
    let phi = &mp * &v;
    let resid = (&m * &phi - &v).amax();
    let fallback = resid > 1e-6 * v.amax().max(f64::MIN_POSITIVE);
    let i_lambda = if fallback { 0.0 } else { 0.5 * phi.dot(&v) };
    Ok(QfiParts { i_mu, i_lambda, total: i_mu + i_lambda, dropped, fallback, step })
}

pub fn qfi(probe: &Probe, t: f64, eps0: f64) -> Result<f64> {
    Ok(qfi_parts(probe, t, eps0)?.total)
}

/// Fidelity of two Gaussian states when at least one is pure.
pub fn pure_state_fidelity(a: &GaussianState, b: &GaussianState) -> Result<f64> {
    let s = &a.lambda + &b.lambda;
    let d = &a.mu - &b.mu;
    let x = s.clone().lu().solve(&d).ok_or_else(|| Error::Numerical("singular covariance sum".into()))?;
    Ok(s.determinant().powf(-0.5) * (-0.5 * d.dot(&x)).exp())
}

/// Standard quantum limit 1/sqrt(N t); infinite when N t is not positive.
pub fn sql(n_total: f64, t: f64) -> f64 {
    if n_total > 0.0 && t > 0.0 {
        1.0 / (n_total * t).sqrt()
    } else {
        f64::INFINITY
    }
}

/// Largest total excitation number on a uniform grid of `samples` + 1
/// times over [0, t].
pub fn peak_excitation(probe: &Probe, t: f64, samples: usize) -> Result<f64> {
    let samples = samples.max(1);
    let lossless = probe.lossless()?;
    let dm = probe.generator(0.0)?;
    let mut state = probe.initial.clone();
    let mut peak = gaussian::excitation_numbers(&state).total;
    let dt = t / samples as f64;
    let step = if lossless { Some(propagator(&dm, dt)?) } else { None };
    let inner = if lossless { 0 } else { (gaussian::default_steps(&dm, t) * 2).div_ceil(samples).max(1) };
    for _ in 0..samples {
        state = match &step {
            Some(p) => evolve(&state, p)?,
            None => gaussian::evolve_lossy_steps(&state, &dm, dt, inner)?,
        };
        peak = peak.max(gaussian::excitation_numbers(&state).total);
    }
    Ok(peak)
}

/// Samples used for the SQL's peak excitation number.
pub const SQL_SAMPLES: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub g: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub gamma: f64,
    #[serde(rename = "Gamma")]
    pub gamma_m: f64,
    pub eta: f64,
    pub t: f64,
    pub chi: f64,
    pub observable: String,
    pub susceptibility: f64,
    pub noise_var: f64,
    pub delta_eps: f64,
    pub qfi: f64,
    pub qcrb: f64,
    pub sql: f64,
    /// The unperturbed system oscillates (chi real and positive) and the
    /// covariance part of the QFI was usable.
    pub valid_regime: bool,
}

impl SensitivityReport {
    pub const COLUMNS: [&'static str; 16] = [
        "g",
        "kappa",
        "alpha",
        "gamma",
        "Gamma",
        "eta",
        "t",
        "chi",
        "observable",
        "susceptibility",
        "noise_var",
        "delta_eps",
        "qfi",
        "qcrb",
        "sql",
        "valid_regime",
    ];

    /// 20 log10(SQL / delta_eps)
    pub fn sql_margin_db(&self) -> f64 {
        20.0 * (self.sql / self.delta_eps).log10()
    }
}

pub fn sensitivity(probe: &Probe, kind: ObservableKind, t: f64) -> Result<SensitivityReport> {
    let (s, dmu, _) = probe.derivatives(t, 0.0, SUSCEPTIBILITY_STEP)?;
    let obs = probe.observable(kind, &s, &dmu)?;
    let sus = obs.coefficients.dot(&dmu).abs();
    let noise = obs.variance(&s);
    let delta_eps = if sus > 0.0 { noise.sqrt() / sus } else { f64::INFINITY };
    let q = qfi_parts(probe, t, 0.0)?;
    let n_peak = peak_excitation(probe, t, SQL_SAMPLES)?;
    let chi = probe.meta.chi.unwrap_or(0.0);
    Ok(SensitivityReport {
        g: probe.meta.g,
        kappa: probe.meta.kappa,
        alpha: probe.meta.alpha,
        gamma: probe.meta.gamma,
        gamma_m: probe.meta.gamma_m,
        eta: probe.meta.eta,
        t,
        chi,
        observable: kind.to_string(),
        susceptibility: sus,
        noise_var: noise,
        delta_eps,
        qfi: q.total,
        qcrb: if q.total > 0.0 { 1.0 / q.total.sqrt() } else { f64::INFINITY },
        sql: sql(n_peak, t),
        valid_regime: chi > 0.0 && !q.fallback,
    })
}

/// sqrt(noise) / susceptibility without the QFI and SQL extras of
/// [`sensitivity`].
pub fn delta_eps(probe: &Probe, kind: ObservableKind, t: f64) -> Result<f64> {
    let (s, dmu, _) = probe.derivatives(t, 0.0, SUSCEPTIBILITY_STEP)?;
    let obs = probe.observable(kind, &s, &dmu)?;
    let sus = obs.coefficients.dot(&dmu).abs();
    Ok(if sus > 0.0 { obs.variance(&s).sqrt() / sus } else { f64::INFINITY })
}

/// Shared-convention conversion of a dimensionless sensitivity to
/// Hz/sqrt(Hz): frequencies are divided by 2pi, times are in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Feasibility {
    /// Dimensionless delta_eps in units of kappa.
    pub delta_eps: f64,
    /// Dimensionless time in units of 1/kappa.
    pub t: f64,
    /// kappa in rad/s.
    pub kappa_rad_s: f64,
    /// delta_eps kappa / 2pi * sqrt(t / kappa)
    pub hz_per_root_hz: f64,
    /// Alternative reading with kappa taken as kappa/2pi in both factors.
    pub hz_per_root_hz_alt: f64,
}

pub fn feasibility(delta_eps: f64, t: f64, kappa_rad_s: f64) -> Feasibility {
    let two_pi = 2.0 * std::f64::consts::PI;
    let k_hz = kappa_rad_s / two_pi;
    Feasibility {
        delta_eps,
        t,
        kappa_rad_s,
        hz_per_root_hz: delta_eps * k_hz * (t / kappa_rad_s).sqrt(),
        hz_per_root_hz_alt: delta_eps * k_hz * (t / k_hz).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EpFamily {
    Ep2,
    Ep3,
    Ep4,
}

impl std::str::FromStr for EpFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ep2" => Ok(EpFamily::Ep2),
            "ep3" => Ok(EpFamily::Ep3),
            "ep4" => Ok(EpFamily::Ep4),
            _ => Err(Error::Config(format!("unknown family '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub chi: f64,
    pub t: f64,
    pub delta_eps: f64,
    pub qfi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    pub family: EpFamily,
    pub observable: String,
    pub points: Vec<ScalingPoint>,
    /// d log(delta_eps) / d log(chi)
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub qfi_slope: f64,
    /// Grid values dropped because the family was unstable there.
    pub excluded: Vec<f64>,
}

/// Smallest accepted grid span in decades. The three-mode range
/// g in [0.9, 0.999] covers log10(0.436 / 0.0447) = 0.989 decades.
pub const MIN_SCALING_DECADES: f64 = 0.95;

/// Sensor of the given order with oscillation frequency chi at eps = 0.
pub fn family_probe(family: EpFamily, chi: f64, alpha: f64) -> Result<Probe> {
    if !(chi > 0.0 && chi < 1.0) {
        return Err(Error::Domain(format!("chi = {chi} outside (0, 1)")));
    }
    let g = (1.0 - chi * chi).sqrt();
    match family {
        EpFamily::Ep2 => Probe::ep2(1.0, g, alpha),
        EpFamily::Ep3 => Probe::ep3_sensor(g, alpha),
        EpFamily::Ep4 => ep4_probe(chi, alpha),
    }
}

pub fn scaling_fit(family: EpFamily, chi_grid: &[f64], kind: ObservableKind, alpha: f64) -> Result<ScalingFit> {
    if chi_grid.len() < 3 {
        return Err(Error::Config("scaling grid needs at least three points".into()));
    }
    let lo = chi_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = chi_grid.iter().cloned().fold(0.0, f64::max);
    if !(lo > 0.0) || (hi / lo).log10() < MIN_SCALING_DECADES {
        return Err(Error::Config(format!("chi grid [{lo}, {hi}] spans under {MIN_SCALING_DECADES} decades")));
    }
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for &chi in chi_grid {
        let probe = match family_probe(family, chi, alpha) {
            Ok(p) => p,
            Err(Error::Regime(_)) => {
                excluded.push(chi);
                continue;
            }
            Err(e) => return Err(e),
        };
        let dm = probe.generator(0.0)?;
        let spec = crate::spectral::eigensolve(&dm)?;
        if spec.phase == crate::spectral::Phase::Unstable {
            excluded.push(chi);
            continue;
        }
        let t = 2.0 * std::f64::consts::PI / chi;
        let (s, dmu, _) = probe.derivatives(t, 0.0, SUSCEPTIBILITY_STEP)?;
        let obs = probe.observable(kind, &s, &dmu)?;
        let sus = obs.coefficients.dot(&dmu).abs();
        let delta_eps = obs.variance(&s).sqrt() / sus;
        let q = qfi_parts(&probe, t, 0.0)?;
        points.push(ScalingPoint { chi, t, delta_eps, qfi: q.total });
    }
    if points.len() < 3 {
        return Err(Error::Numerical(format!("only {} usable scaling points", points.len())));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.chi.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.delta_eps.ln()).collect();
    let lq: Vec<f64> = points.iter().map(|p| p.qfi.ln()).collect();
    let (slope, intercept, r_squared) = linear_fit(&lx, &ly);
    let (qfi_slope, _, _) = linear_fit(&lx, &lq);
    Ok(ScalingFit { family, observable: kind.to_string(), points, slope, intercept, r_squared, qfi_slope, excluded })
}

/// Reference coupling ratio of the four-mode family.
pub const EP4_F: f64 = 0.2;

/// Four-mode parameters (delta1, delta2, delta3, g1) at coupling ratio 0.2
/// whose spectrum is c0 + chi (-3/2, -1/2, 1/2, 3/2), c0 the four-fold
/// eigenvalue of the locus. chi -> 0 recovers the locus.
pub fn ep4_family(chi: f64) -> Result<[f64; 4]> {
    let p = crate::model::ep4_locus(EP4_F)?;
    let c0 = p.eigenvalue;
    // unknowns (d1, d2, -delta3, g1); offsets grow like chi^2
    let mut x = [p.delta[0], p.delta[1], -p.delta[2], p.g];
    let target: Vec<Complex64> = {
        let roots: Vec<f64> = [-1.5, -0.5, 0.5, 1.5].iter().map(|k| c0 + chi * k).collect();
        let mut poly = vec![1.0];
        for r in roots {
            let mut next = vec![0.0; poly.len() + 1];
            for (i, a) in poly.iter().enumerate() {
                next[i] += a;
                next[i + 1] -= a * r;
            }
            poly = next;
        }
        poly.into_iter().map(|a| c(a, 0.0)).collect()
    };
    let resid = |x: &[f64; 4]| -> RVec {
        let cp = crate::linalg::charpoly(&ep4_reduced(x));
        RVec::from_iterator(4, (1..5).map(|k| (cp[k] - target[k]).re))
    };
    // march chi up from the locus
    let stages = 8;
    for s in 1..=stages {
        let frac = s as f64 / stages as f64;
        let stage_target: Vec<Complex64> = {
            let roots: Vec<f64> = [-1.5, -0.5, 0.5, 1.5].iter().map(|k| c0 + chi * frac * k).collect();
            let mut poly = vec![1.0];
            for r in roots {
                let mut next = vec![0.0; poly.len() + 1];
                for (i, a) in poly.iter().enumerate() {
                    next[i] += a;
                    next[i + 1] -= a * r;
                }
                poly = next;
            }
            poly.into_iter().map(|a| c(a, 0.0)).collect()
        };
        let f = |x: &[f64; 4]| -> RVec {
            let cp = crate::linalg::charpoly(&ep4_reduced(x));
            RVec::from_iterator(4, (1..5).map(|k| (cp[k] - stage_target[k]).re))
        };
        for _ in 0..50 {
            let r = f(&x);
            if r.amax() < 1e-14 {
                break;
            }
            let mut jac = RMat::zeros(4, 4);
            for j in 0..4 {
                let h = 1e-7 * x[j].abs().max(1.0);
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                jac.set_column(j, &((f(&xp) - f(&xm)) / (2.0 * h)));
            }
            let dx = jac.lu().solve(&(-r)).ok_or_else(|| Error::Numerical("singular Jacobian in the four-mode solve".into()))?;
            for j in 0..4 {
                x[j] += dx[j];
            }
        }
    }
    let r = resid(&x);
    if !(r.amax() < 1e-10) {
        return Err(Error::Numerical(format!("four-mode family did not converge at chi = {chi}: residual {:e}", r.amax())));
    }
    Ok([x[0], x[1], -x[2], x[3]])
}

fn ep4_reduced(x: &[f64; 4]) -> crate::linalg::CMat {
    let f = EP4_F;
    let m = RMat::from_row_slice(
        4,
        4,
        &[x[0], 0.0, 0.0, x[3], 0.0, x[1], 0.0, f, 0.0, 0.0, x[2], -1.0, -x[3], -f, -1.0, 0.0],
    );
    crate::model::complexify(&m)
}

/// Four-mode system on the equal-spacing family, every ensemble perturbed.
pub fn ep4_probe(chi: f64, alpha: f64) -> Result<Probe> {
    let p = ep4_family(chi)?;
    let mut cfg = SystemConfig::ep4(EP4_F)?;
    cfg.delta = vec![p[0], p[1], p[2]];
    cfg.g = vec![p[3], EP4_F];
    cfg.alpha = vec![c(0.0, alpha), c(0.0, -alpha), c(0.0, alpha)];
    let mut probe = Probe::from_config(&cfg, &[1.0, 1.0, 1.0])?;
    probe.meta.chi = Some(chi);
    probe.meta.g = p[3];
    Ok(probe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn observable_basics() {
        let o = Observable::x1_minus_x2(3).unwrap();
        assert_eq!(o.coefficients.as_slice(), &[1.0, 0.0, -1.0, 0.0, 0.0, 0.0]);
        assert!(Observable::new("zero", RVec::zeros(4)).is_err());
        let s = coherent_init(&SystemConfig::ep3_sensor(0.9, 2.0)).unwrap();
        assert_eq!(o.variance(&s), 1.0);
        assert_eq!(Observable::x1_plus_x2(3).unwrap().variance(&s), 1.0);
    }

    #[test]
    fn working_point_values() {
        let g: f64 = 0.95;
        let probe = Probe::ep3_sensor(g, 2.0).unwrap();
        let chi = (1.0 - g * g).sqrt();
        let t = 2.0 * PI / chi;
        let o = Observable::x1_minus_x2(3).unwrap();
        let smax = susceptibility_max(g, 1.0, 2.0, 1.0);
        assert!((smax - 64967.8462693942).abs() < 1e-6);
        let a = susceptibility(&probe, &o, t, SusceptibilityMethod::AnalyticEp3).unwrap();
        assert!((a - smax).abs() < 1e-9 * smax);
        let f = susceptibility(&probe, &o, t, SusceptibilityMethod::FiniteDifference).unwrap();
        assert!((f - smax).abs() < 1e-4 * smax, "{f} {smax}");
        assert!(susceptibility(&probe, &o, 0.0, SusceptibilityMethod::FiniteDifference).unwrap() == 0.0);
        let r = sensitivity(&probe, ObservableKind::X1MinusX2, t).unwrap();
        assert!((r.noise_var - 1.0).abs() < 1e-8);
        assert!((r.delta_eps - 1.539e-5).abs() < 1e-8);
    }

    #[test]
    fn analytic_refused_elsewhere() {
        let probe = Probe::ep2(1.0, 0.9, 1.0).unwrap();
        let o = Observable::new("x", RVec::from_vec(vec![1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(matches!(susceptibility(&probe, &o, 1.0, SusceptibilityMethod::AnalyticEp3), Err(Error::Unsupported(_))));
    }

    #[test]
    fn noise_examples() {
        let g: f64 = 0.95;
        let probe = Probe::ep3_sensor(g, 2.0).unwrap();
        let chi = (1.0 - g * g).sqrt();
        let om = Observable::x1_minus_x2(3).unwrap();
        let op = Observable::x1_plus_x2(3).unwrap();
        let n = noise_variance(&probe, &om, PI / chi).unwrap();
        assert!((n - 1521.0).abs() < 1e-8 * 1521.0);
        let n = noise_variance(&probe, &op, PI / chi).unwrap();
        let want = (1.0 - g).powi(2) / (1.0 + g).powi(2);
        assert!((want - 6.575e-4).abs() < 1e-7);
        assert!((n - want).abs() < 1e-10);
        assert!((noise_closed_form(ObservableKind::X1PlusX2, g, 1.0, PI).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn qfi_matches_fidelity() {
        let g: f64 = 0.9;
        let probe = Probe::ep3_sensor(g, 2.0).unwrap();
        let chi = (1.0 - g * g).sqrt();
        let t = 2.0 * PI / chi;
        let q = qfi_parts(&probe, t, 0.0).unwrap();
        let h = 1e-6 * chi.powi(3);
        let f = pure_state_fidelity(&probe.state(0.0, t).unwrap(), &probe.state(h, t).unwrap()).unwrap();
        let fid = 4.0 * (1.0 - f) / (h * h);
        assert!((q.total - fid).abs() < 1e-3 * fid, "{} {}", q.total, fid);
        let half = qfi_parts_with_step(&probe, t, 0.0, q.step / 2.0).unwrap();
        assert!((half.total - q.total).abs() < 1e-5 * q.total);
        assert_eq!(qfi(&probe, 0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn sql_formula() {
        assert!((sql(100.0, 1.0) - 0.1).abs() < 1e-16);
        assert!(sql(0.0, 1.0).is_infinite());
    }

    #[test]
    fn feasibility_conventions() {
        let f = feasibility(9.413514659669124e-10, 62.91054045776017, 2.0 * PI * 5e5);
        assert!((f.hz_per_root_hz - 2.1062e-6).abs() < 1e-9);
        assert!((f.hz_per_root_hz_alt - 5.2796e-6).abs() < 1e-9);
    }

    #[test]
    fn ep4_family_spectrum() {
        let p = ep4_family(0.05).unwrap();
        let m = ep4_reduced(&[p[0], p[1], -p[2], p[3]]);
        let mut e = crate::spectral::eigenvalues_general(&m).unwrap();
        e.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        let c0 = 0.4422689813358517;
        for (k, z) in e.iter().enumerate() {
            assert!((z - c(c0 + 0.05 * (k as f64 - 1.5), 0.0)).norm() < 1e-8, "{z}");
        }
        let l = crate::model::ep4_locus(EP4_F).unwrap();
        let tiny = ep4_family(1e-3).unwrap();
        assert!((tiny[3] - l.g).abs() < 1e-4);
    }
}
