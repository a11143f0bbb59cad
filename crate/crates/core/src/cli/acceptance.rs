//! Acceptance checks. Each criterion runs independently and reports every
//! measured value next to the tolerance it was held to.

use std::f64::consts::PI;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::gaussian::{
    apply_external_loss, coherent_init, evolve, evolve_lossy, excitation_numbers, propagator, readout_swap, GaussianState,
};
use crate::linalg::{linspace, logspace, RMat};
use crate::metrology::{
    delta_eps, feasibility, noise_closed_form, qfi_parts, scaling_fit, sensitivity, susceptibility,
    susceptibility_max, EpFamily, Observable, ObservableKind, Probe, SusceptibilityMethod,
};
use crate::model::{build_system, SystemConfig};
use crate::perturb::{
    exponential_coefficients, first_order_propagator, finite_difference_derivatives, susceptibility_derivatives,
};
use crate::spectral::{eigensolve, puiseux_fit_config, BranchSelector, PerturbationCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// |measured - expected| <= tol
    Absolute,
    /// |measured - expected| <= tol |expected|
    Relative,
    /// measured <= tol
    AtMost,
    /// measured >= tol
    AtLeast,
    /// max(m/e, e/m) <= tol
    Factor,
    /// Reported only.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, measured: f64, expected: f64, tolerance: f64, bound: Bound) -> Self {
        let passed = match bound {
            Bound::Absolute => (measured - expected).abs() <= tolerance,
            Bound::Relative => (measured - expected).abs() <= tolerance * expected.abs(),
            Bound::AtMost => measured <= tolerance,
            Bound::AtLeast => measured >= tolerance,
            Bound::Factor => measured > 0.0 && (measured / expected).max(expected / measured) <= tolerance,
            Bound::Info => true,
        };
        Check { name: name.into(), measured, expected, tolerance, bound, passed }
    }

    pub fn absolute(name: &str, measured: f64, expected: f64, tol: f64) -> Self {
        Self::new(name, measured, expected, tol, Bound::Absolute)
    }

    pub fn relative(name: &str, measured: f64, expected: f64, tol: f64) -> Self {
        Self::new(name, measured, expected, tol, Bound::Relative)
    }

    pub fn at_most(name: &str, measured: f64, bound: f64) -> Self {
        Self::new(name, measured, bound, bound, Bound::AtMost)
    }

    pub fn at_least(name: &str, measured: f64, bound: f64) -> Self {
        Self::new(name, measured, bound, bound, Bound::AtLeast)
    }

    pub fn factor(name: &str, measured: f64, expected: f64, factor: f64) -> Self {
        Self::new(name, measured, expected, factor, Bound::Factor)
    }

    pub fn info(name: &str, measured: f64) -> Self {
        Self::new(name, measured, f64::NAN, f64::NAN, Bound::Info)
    }

    fn describe(&self) -> String {
        let m = fmt_num(self.measured);
        let target = match self.bound {
            Bound::Absolute => format!("{} ± {}", fmt_num(self.expected), fmt_num(self.tolerance)),
            Bound::Relative => format!("{} ± {}%", fmt_num(self.expected), fmt_num(self.tolerance * 100.0)),
            Bound::AtMost => format!("<= {}", fmt_num(self.tolerance)),
            Bound::AtLeast => format!(">= {}", fmt_num(self.tolerance)),
            Bound::Factor => format!("{} within x{}", fmt_num(self.expected), fmt_num(self.tolerance)),
            Bound::Info => return format!("{}={m}", self.name),
        };
        let mark = if self.passed { "ok" } else { "MISS" };
        format!("{}={m} [{target}] {mark}", self.name)
    }
}

fn fmt_num(x: f64) -> String {
    if x == 0.0 || (1e-3..1e5).contains(&x.abs()) {
        format!("{}", (x * 1e9).round() / 1e9)
    } else {
        format!("{x:.6e}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl CriterionResult {
    fn new(id: u8, title: &str, checks: Vec<Check>, notes: Vec<String>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        CriterionResult { id, title: title.into(), passed, checks, notes }
    }

    fn errored(id: u8, title: &str, err: crate::error::Error) -> Self {
        CriterionResult {
            id,
            title: title.into(),
            passed: false,
            checks: Vec::new(),
            notes: vec![format!("error: {err}")],
        }
    }
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let body: Vec<String> = self.checks.iter().map(Check::describe).chain(self.notes.iter().cloned()).collect();
        write!(f, "criterion {:>2} {status} {}: {}", self.id, self.title, body.join("; "))
    }
}

/// Every tolerance used by the suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tolerances {
    pub puiseux_slope: f64,
    pub prefactor_ratio_rel: f64,
    pub ep4_center: f64,
    pub reducible_max_order: f64,
    pub susceptibility_rel: f64,
    pub working_noise: f64,
    pub working_susceptibility_rel: f64,
    pub qcrb_rel: f64,
    pub scaling_slope: f64,
    pub qfi_slope: f64,
    pub ep4_slope: f64,
    pub squeezed_noise: f64,
    pub conservation: f64,
    pub symplectic: f64,
    pub purity: f64,
    pub uncertainty: f64,
    pub readout: f64,
    pub sql_margin_db: f64,
    pub loss_law: f64,
    pub first_order_rel: f64,
    pub first_order_regime: f64,
    pub derivative_rel: f64,
    pub feasibility_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            puiseux_slope: 0.02,
            prefactor_ratio_rel: 0.01,
            ep4_center: 1e-5,
            reducible_max_order: 2.0,
            susceptibility_rel: 1e-4,
            working_noise: 1e-8,
            working_susceptibility_rel: 1e-4,
            qcrb_rel: 0.01,
            scaling_slope: 0.1,
            qfi_slope: 0.2,
            ep4_slope: 0.3,
            squeezed_noise: 1e-8,
            conservation: 1e-8,
            symplectic: 1e-10,
            purity: 1e-8,
            uncertainty: 1e-10,
            readout: 1e-10,
            sql_margin_db: 10.0,
            loss_law: 1e-10,
            first_order_rel: 0.05,
            first_order_regime: 0.1,
            derivative_rel: 1e-4,
            feasibility_factor: 3.0,
        }
    }
}

pub const TITLES: [&str; 12] = [
    "three-fold Puiseux exponent",
    "four-fold Puiseux exponent",
    "reducible counterexample",
    "closed-form susceptibility",
    "working-point identities",
    "scaling laws",
    "squeezing strategy",
    "conservation and symplectic suite",
    "readout swap",
    "loss behaviour",
    "first-order perturbation fidelity",
    "feasibility spot check",
];

type Body = fn(&Tolerances) -> Result<(Vec<Check>, Vec<String>)>;

const BODIES: [Body; 12] = [c1, c2, c3, c4, c5, c6, c7, c8, c9, c10, c11, c12];

pub fn run_criterion(id: u8, tol: &Tolerances) -> CriterionResult {
    let idx = usize::from(id) - 1;
    let title = TITLES[idx];
    match BODIES[idx](tol) {
        Ok((checks, notes)) => CriterionResult::new(id, title, checks, notes),
        Err(e) => CriterionResult::errored(id, title, e),
    }
}

pub fn run_acceptance() -> Vec<CriterionResult> {
    run_acceptance_with(&Tolerances::default())
}

pub fn run_acceptance_with(tol: &Tolerances) -> Vec<CriterionResult> {
    (1..=12u8).into_par_iter().map(|id| run_criterion(id, tol)).collect()
}

fn ep3_at(g: f64) -> SystemConfig {
    SystemConfig::ep3_sensor(g, 2.0)
}

fn chi_of(g: f64) -> f64 {
    (1.0 - g * g).sqrt()
}

fn c1(tol: &Tolerances) -> Result<(Vec<Check>, Vec<String>)> {
    let cfg = ep3_at(1.0);
    let grid = logspace(1e-9, 1e-5, 25);
    let same = puiseux_fit_config(&cfg, &[1.0, 1.0], &grid, BranchSelector::SmallestArg)?;
    let diff = puiseux_fit_config(&cfg, &[1.0, 0.0], &grid, BranchSelector::SmallestArg)?;
    Ok((
        vec![
            Check::absolute("slope_same", same.slope, 1.0 / 3.0, tol.puiseux_slope),
            Check::absolute("slope_single", diff.slope, 1.0 / 3.0, tol.puiseux_slope),
            Check::relative(
                "prefactor_ratio",
                same.branch_prefactor / diff.branch_prefactor,
                2f64.cbrt(),
                tol.prefactor_ratio_rel,
            ),
            Check::info("r2_same", same.r_squared),
        ],
        vec![],
    ))
}

fn c2(tol: &Tolerances) -> Result<(Vec<Check>, Vec<String>)> {
    let cfg = SystemConfig::ep4(0.2)?;
    let spec = eigensolve(&build_system(&cfg)?)?;
    let grid = logspace(1e-9, 1e-5, 25);
    let fit = puiseux_fit_config(&cfg, &[1.0, 1.0, 1.0], &grid, BranchSelector::SmallestArg)?;
    Ok((
        vec![
            Check::absolute("ep_order", spec.ep_order as f64, 4.0, 0.0),
            Check::absolute("slope", fit.slope, 0.25, tol.puiseux_slope),
            Check::absolute("coalescence", spec.cluster_center().re, 0.442272, tol.ep4_center),
            Check::info("r2", fit.r_squared),
        ],
        vec![],
    ))
}

fn c3(tol: &Tolerances) -> Result<(Vec<Check>, Vec<String>)> {
    let eps: f64 = 0.01;
    let mut grid = linspace(0.9, 1.1, 401);
    grid.push(1.0);
    grid.push((1.0 + eps * eps / 4.0).sqrt());
    let orders: Vec<usize> = grid
        .par_iter()
        .map(|&g| {
            let mut cfg = ep3_at(g);
            cfg.epsilon = vec![eps, -eps];
            build_system(&cfg).and_then(|dm| eigensolve(&dm)).map(|s| s.ep_order)
        })
        .collect::<Result<_>>()?;
    let max = orders.iter().copied().max().unwrap_or(0);
    let twos = orders.iter().filter(|&&o| o == 2).count();
    Ok((
        vec![
            Check::at_most("max_ep_order", max as f64, tol.reducible_max_order),
            Check::info("points_with_order_2", twos as f64),
            Check::info("points", grid.len() as f64),
        ],
        vec![],
    ))
}

fn c4(tol: &Tolerances) -> Result<(Vec<Check>, Vec<String>)> {
    let mut checks = Vec::new();
    for &g in &[0.8, 0.9, 0.95] {
        let probe = Probe::ep3_sensor(g, 2.0)?;
        let o = Observable::x1_minus_x2(3)?;
        let chi = chi_of(g);
        let errs: Vec<f64> = (1..=40)
            .into_par_iter()
            .map(|k| {
                let t = 2.0 * PI * k as f64 / (20.0 * chi);
                let a = susceptibility(&probe, &o, t, SusceptibilityMethod::AnalyticEp3)?;
                let f = susceptibility(&probe, &o, t, SusceptibilityMethod::FiniteDifference)?;
                Ok((a - f).abs() / a)
            })
            .collect::<Result<_>>()?;
        let worst = errs.iter().cloned().fold(0.0, f64::max);
        checks.push(Check::at_most(&format!("max_rel_err_g{g}"), worst, tol.susceptibility_rel));
    }
    Ok((checks, vec!["40 times over two periods per g".into()]))
}

fn c5(tol: &Tolerances) -> Result<(Vec<Check>, Vec<String>)> {
    let g = 0.95;
    let probe = Probe::ep3_sensor(g, 2.0)?;
    let t = probe.working_time(1.0)?;
    let r = sensitivity(&probe, ObservableKind::X1MinusX2, t)?;
    let smax = susceptibility_max(g, 1.0, 2.0, 1.0);
    let q = qfi_parts(&probe, t, 0.0)?;
    Ok((
        vec![
            Check::absolute("noise", r.noise_var, 1.0, tol.working_noise),
            Check::relative("susceptibility", r.susceptibility, smax, tol.working_susceptibility_rel),
            Check::absolute("delta_eps_sqrt_qfi", r.delta_eps * r.qfi.sqrt(), 1.0, tol.qcrb_rel),
            Check::info("closed_form_susceptibility", smax),
            Check::info("covariance_share_of_qfi", q.i_lambda / q.total),
        ],
        vec![],
    ))
}

fn c6(tol: &Tolerances) -> Result<(Vec<Check>, Vec<String>)> {
    let grid = logspace(chi_of(0.999), chi_of(0.9), 12);
    let ep3 = scaling_fit(EpFamily::Ep3, &grid, ObservableKind::X1MinusX2, 2.0)?;
    let ep2 = scaling_fit(EpFamily::Ep2, &grid, ObservableKind::Optimal, 1.0)?;
    let mut notes = Vec::new();
    let mut checks = vec![
        Check::absolute("ep3_slope", ep3.slope, 5.0, tol.scaling_slope),
        Check::absolute("ep2_slope", ep2.slope, 3.0, tol.scaling_slope),
        Check::absolute("ep3_qfi_slope", ep3.qfi_slope, -10.0, tol.qfi_slope),
    ];
    // exploratory: reported, not gating
    match scaling_fit(EpFamily::Ep4, &logspace(0.02, 0.2, 10), ObservableKind::Optimal, 1.0) {
        Ok(ep4) => {
            let within = (ep4.slope - 7.0).abs() <= tol.ep4_slope;
            checks.push(Check::info("ep4_slope_exploratory", ep4.slope));
            notes.push(format!(
                "four-mode slope {} 7 ± {} (exploratory, not gating)",
                if within { "within" } else { "outside" },
                tol.ep4_slope
            ));
            if !ep4.excluded.is_empty() {
                notes.push(format!("four-mode points excluded as unstable: {}", ep4.excluded.len()));
            }
        }
        Err(e) => notes.push(format!("four-mode exploratory fit unavailable: {e}")),
    }
    Ok((checks, notes))
}

fn c7(tol: &Tolerances) -> Result<(Vec<Check>, Vec<String>)> {
    let g = 0.95;
    let probe = Probe::ep3_sensor(g, 2.0)?;
    let chi = chi_of(g);
    let want = noise_closed_form(ObservableKind::X1PlusX2, g, 1.0, PI)?;
    let mut checks = Vec::new();
    for q in [0.0, 1.0] {
        let t = (2.0 * q + 1.0) * PI / chi;
        let r = sensitivity(&probe, ObservableKind::X1PlusX2, t)?;
        let tag = format!("{}pi", 2 * q as u32 + 1);
        checks.push(Check::absolute(&format!("noise_{tag}"), r.noise_var, want, tol.squeezed_noise));
        checks.push(Check::absolute(&format!("delta_eps_sqrt_qfi_{tag}"), r.delta_eps * r.qfi.sqrt(), 1.0, tol.qcrb_rel));
    }
    Ok((checks, vec![]))
}

fn c8(tol: &Tolerances) -> Result<(Vec<Check>, Vec<String>)> {
    let g = 0.95;
    let cfg = ep3_at(g);
    let dm = build_system(&cfg)?;
    let s0 = coherent_init(&cfg)?;
    let chi = chi_of(g);
    let cons = |s: &GaussianState| {
        let n = excitation_numbers(s);
        n.per_mode[0] - n.per_mode[1] - n.per_mode[2]
    };
    let c0 = cons(&s0);
    let (mut dcons, mut sympl, mut purity, mut margin) = (0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
    let mut states = Vec::new();
    for k in 0..=200 {
        let t = 5.0 * 2.0 * PI / chi * k as f64 / 200.0;
        let p = propagator(&dm, t)?;
        let s = evolve(&s0, &p)?;
        dcons = dcons.max((cons(&s) - c0).abs());
        sympl = sympl.max(p.symplectic_defect());
        purity = purity.max((s.purity_determinant() - 1.0).abs());
        margin = margin.min(s.uncertainty_margin());
        if k % 40 == 7 {
            states.push(s);
        }
    }
    // other channels
    let mut lossy_cfg = cfg.clone();
    lossy_cfg.gamma = 0.1;
    lossy_cfg.gamma_m = 0.01;
    let lossy_dm = build_system(&lossy_cfg)?;
    for &t in &[1.0, 2.0 * PI / chi, 4.0 * PI / chi] {
        margin = margin.min(evolve_lossy(&s0, &lossy_dm, t)?.0.uncertainty_margin());
    }
    for s in &states {
        margin = margin.min(readout_swap(s, &[0, 1], PI / 4.0)?.uncertainty_margin());
        margin = margin.min(apply_external_loss(s, &[0.5, 0.8, 1.0])?.uncertainty_margin());
    }
    Ok((
        vec![
            Check::at_most("conservation_drift", dcons, tol.conservation),
            Check::at_most("symplectic_defect", sympl, tol.symplectic),
            Check::at_most("purity_defect", purity, tol.purity),
            Check::at_least("min_eig_lambda_plus_i_omega_half", margin, -tol.uncertainty),
        ],
        vec![],
    ))
}

fn c9(tol: &Tolerances) -> Result<(Vec<Check>, Vec<String>)> {
    let g = 0.95;
    let cfg = ep3_at(g);
    let s = evolve(&coherent_init(&cfg)?, &propagator(&build_system(&cfg)?, PI / (2.0 * chi_of(g)))?)?;
    let out = readout_swap(&s, &[0, 1], PI / 2.0)?;
    let magnons = out.marginal(&[0, 1]);
    let vac_dev = magnons.mu.amax().max(crate::linalg::max_abs(&(&magnons.lambda - RMat::identity(4, 4) * 0.5)));
    let read = out.marginal(&[3, 4]);
    let before = s.marginal(&[0, 1]);
    let copy_dev = (&read.mu - &before.mu).amax().max(crate::linalg::max_abs(&(&read.lambda - &before.lambda)));
    Ok((
        vec![
            Check::at_most("magnon_vacuum_deviation", vac_dev, tol.readout),
            Check::at_most("readout_copy_deviation", copy_dev, tol.readout),
        ],
        vec![],
    ))
}

fn lossy_probe(gamma: f64, gamma_m: f64, eta: f64) -> Result<Probe> {
    let mut cfg = ep3_at(0.95);
    cfg.gamma = gamma;
    cfg.gamma_m = gamma_m;
    Probe::from_config(&cfg, &[1.0, 1.0])?.with_readout_efficiency(eta)
}

fn first_working_delta_eps(gamma: f64, gamma_m: f64, eta: f64) -> Result<f64> {
    let p = lossy_probe(gamma, gamma_m, eta)?;
    delta_eps(&p, ObservableKind::X1MinusX2, p.working_time(1.0)?)
}

fn non_decreasing(v: &[f64]) -> f64 {
    // largest relative drop between neighbours; <= 0 means monotone
    v.windows(2).map(|w| (w[0] - w[1]) / w[0]).fold(f64::NEG_INFINITY, f64::max)
}

fn c10(tol: &Tolerances) -> Result<(Vec<Check>, Vec<String>)> {
    let probe = lossy_probe(0.1, 0.01, 1.0)?;
    let t = probe.working_time(1.0)?;
    let r = sensitivity(&probe, ObservableKind::X1MinusX2, t)?;

    let gammas = [0.0, 0.02, 0.05, 0.1, 0.2];
    let by_gamma: Vec<f64> = gammas.par_iter().map(|&x| first_working_delta_eps(x, 0.01, 1.0)).collect::<Result<_>>()?;
    let gms = [0.0, 0.005, 0.01, 0.02, 0.05];
    let by_gm: Vec<f64> = gms.par_iter().map(|&x| first_working_delta_eps(0.1, x, 1.0)).collect::<Result<_>>()?;
    let etas = [1.0, 0.95, 0.9, 0.7, 0.5];
    let by_eta: Vec<f64> = etas.par_iter().map(|&x| first_working_delta_eps(0.1, 0.01, x)).collect::<Result<_>>()?;

    let mut law: f64 = 0.0;
    for &e2r in &[0.1, 0.5, 0.01] {
        for &eta in &[0.0, 0.25, 0.5, 0.9, 1.0] {
            let mut s = GaussianState::vacuum(vec!["b".into()]);
            s.lambda[(0, 0)] = e2r / 2.0;
            s.lambda[(1, 1)] = 0.5 / e2r;
            let out = apply_external_loss(&s, &[eta])?;
            law = law.max((2.0 * out.lambda[(0, 0)] - (eta * e2r + 1.0 - eta)).abs());
        }
    }
    Ok((
        vec![
            Check::at_least("sql_margin_db", r.sql_margin_db(), tol.sql_margin_db),
            Check::at_most("max_rel_drop_vs_gamma", non_decreasing(&by_gamma), 0.0),
            Check::at_most("max_rel_drop_vs_Gamma", non_decreasing(&by_gm), 0.0),
            Check::at_most("max_rel_drop_vs_1_minus_eta", non_decreasing(&by_eta), 0.0),
            Check::at_most("external_loss_law", law, tol.loss_law),
            Check::info("delta_eps", r.delta_eps),
            Check::info("sql", r.sql),
        ],
        vec!["SQL = 1/sqrt(N t), N the peak total excitation over [0, t]; margin 20 log10(SQL/delta_eps)".into()],
    ))
}

fn c11(tol: &Tolerances) -> Result<(Vec<Check>, Vec<String>)> {
    // g sweep at t = 20 pi with eps = (1e-3, 1.5e-3), restricted to the
    // first-order regime
    let (e1, e2, t) = (1e-3, 1.5e-3, 20.0 * PI);
    let mut worst: f64 = 0.0;
    let mut worst_at = (0.0, 0.0);
    let mut used = 0;
    for g in linspace(0.5, 0.999, 500) {
        let fo = first_order_propagator(g, e1, e2, t)?;
        if fo.regime.ratio >= tol.first_order_regime {
            continue;
        }
        used += 1;
        let e = fo.coefficients.relative_error(&exponential_coefficients(g, e1, e2, 0.0, 0.0, t));
        if e > worst {
            worst = e;
            worst_at = (g, fo.regime.ratio);
        }
    }
    // same comparison deep inside the regime, over several times
    let mut deep: f64 = 0.0;
    for &g in &[0.9, 0.95] {
        let chi: f64 = chi_of(g);
        let eps = 0.01 * chi.powi(3);
        for (w1, w2) in [(1.0, 1.0), (1.0, 0.0)] {
            for &tt in &[PI / chi, 2.0 * PI / chi, 20.0 * PI] {
                let fo = first_order_propagator(g, w1 * eps, w2 * eps, tt)?;
                let ex = exponential_coefficients(g, w1 * eps, w2 * eps, 0.0, 0.0, tt);
                deep = deep.max(fo.coefficients.relative_error(&ex));
            }
        }
    }
    let mut dworst: f64 = 0.0;
    for &g in &[0.8, 0.9, 0.95] {
        let chi = chi_of(g);
        for k in 1..=10 {
            let tt = 4.0 * PI / chi * k as f64 / 10.0;
            for case in [PerturbationCase::Same, PerturbationCase::Different] {
                let a = susceptibility_derivatives(g, tt, case)?;
                let f = finite_difference_derivatives(g, tt, case, 1e-7 * chi.powi(3));
                let scale = a.a1.norm().max(a.a2.norm()).max(a.c.norm());
                for (x, y) in [(a.a1, f.a1), (a.a2, f.a2), (a.c, f.c)] {
                    dworst = dworst.max((x - y).norm() / scale);
                }
            }
        }
    }
    Ok((
        vec![
            Check::at_most("coefficient_rel_err", worst, tol.first_order_rel),
            Check::info("worst_g", worst_at.0),
            Check::info("worst_eps_over_chi3", worst_at.1),
            Check::info("regime_points", used as f64),
            Check::info("coefficient_rel_err_at_0.01_chi3", deep),
            Check::at_most("derivative_rel_err", dworst, tol.derivative_rel),
        ],
        vec![format!("g sweep at t=20pi, eps=(1e-3, 1.5e-3), points with eps/chi^3 < {}", tol.first_order_regime)],
    ))
}

fn c12(tol: &Tolerances) -> Result<(Vec<Check>, Vec<String>)> {
    let probe = Probe::ep3_sensor(0.995, 100.0)?;
    let t = probe.working_time(1.0)?;
    let de = delta_eps(&probe, ObservableKind::X1MinusX2, t)?;
    let f = feasibility(de, t, 2.0 * PI * 5e5);
    Ok((
        vec![
            Check::factor("hz_per_root_hz", f.hz_per_root_hz, 5.27e-6, tol.feasibility_factor),
            Check::info("deviation_factor", 5.27e-6 / f.hz_per_root_hz),
            Check::info("alt_convention_hz_per_root_hz", f.hz_per_root_hz_alt),
            Check::info("delta_eps_dimensionless", de),
        ],
        vec![
            "convention: delta_eps[Hz] = delta_eps * kappa/2pi, t[s] = t / kappa with kappa = 2pi*500e3 rad/s".into(),
            "alt convention: kappa read as 500e3 in both factors".into(),
        ],
    ))
}
