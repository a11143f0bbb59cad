//! The eight experiment types a scenario can run. Each returns a table plus
//! a few summary numbers that `expect.*` lines are checked against.

use crate::error::{Error, Result};
use crate::gaussian::{coherent_init, evolve, evolve_lossy, excitation_numbers, propagator, GaussianState};
use crate::linalg::c;
use crate::metrology::{
    delta_eps, qfi_parts, scaling_fit, sensitivity, Probe, ProbeMeta, SensitivityReport,
};
use crate::model::{build_system, ep2_reference, DynamicalMatrix, ModeKind, SystemConfig};
use crate::spectral::{cubic_discriminant, eigensolve, match_branches, puiseux_fit, three_mode_chi, Phase};

use super::scenario::{resolve_time, Experiment, Param, Preset, Scenario, TimeSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub table: Table,
    /// In the order of [`Experiment::summary_keys`].
    pub summary: Vec<(String, f64)>,
}

impl RunOutput {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

fn finish(exp: Experiment, table: Table, values: &[f64]) -> RunOutput {
    let keys = exp.summary_keys();
    debug_assert_eq!(keys.len(), values.len());
    RunOutput { table, summary: keys.iter().map(|k| k.to_string()).zip(values.iter().cloned()).collect() }
}

pub fn run(sc: &Scenario) -> Result<RunOutput> {
    match sc.experiment {
        Experiment::SpectrumSweep => spectrum_sweep(sc),
        Experiment::DiscriminantMap => discriminant_map(sc),
        Experiment::Puiseux => puiseux(sc),
        Experiment::EvolveTrace => evolve_trace(sc),
        Experiment::SensitivitySweep => sensitivity_sweep(sc),
        Experiment::QfiTrace => qfi_trace(sc),
        Experiment::Scaling => scaling(sc),
        Experiment::LossSweep => loss_sweep(sc),
    }
}

/// Generator of `cfg` with an extra perturbation eps * weights.
fn generator(sc: &Scenario, cfg: &SystemConfig, weights: &[f64], eps: f64) -> Result<DynamicalMatrix> {
    let mut cfg = cfg.clone();
    for (e, w) in cfg.epsilon.iter_mut().zip(weights) {
        *e += eps * w;
    }
    match sc.preset {
        Preset::Ep2 => ep2_reference(cfg.delta[0], cfg.g[0], cfg.epsilon[0]),
        _ => build_system(&cfg),
    }
}

fn probe(sc: &Scenario, cfg: &SystemConfig, eta: f64) -> Result<Probe> {
    let w = sc.weights_for(cfg)?;
    let p = match sc.preset {
        Preset::Ep2 => {
            let (delta, g, e0) = (cfg.delta[0], cfg.g[0], cfg.epsilon[0]);
            let chi2 = delta * delta - g * g;
            let initial = GaussianState::coherent(&[cfg.alpha[0], c(0.0, 0.0)], vec!["b".into(), "a".into()])?;
            let meta = ProbeMeta {
                g,
                kappa: delta,
                alpha: cfg.alpha[0].norm(),
                gamma: 0.0,
                gamma_m: 0.0,
                eta: 1.0,
                chi: (chi2 > 0.0).then(|| chi2.sqrt()),
            };
            Probe::custom(move |eps| ep2_reference(delta, g, e0 + eps * w[0]), initial, meta)?
        }
        _ => {
            let mut p = Probe::from_config(cfg, &w)?;
            // a non-zero offset moves the chi of the working point
            if cfg.epsilon.iter().any(|e| *e != 0.0) {
                p.meta.chi = three_mode_chi(&build_system(cfg)?);
            }
            p
        }
    };
    if eta < 1.0 {
        p.with_readout_efficiency(eta)
    } else {
        Ok(p)
    }
}

fn eigen_columns(n: usize) -> Vec<String> {
    (1..=n).flat_map(|k| [format!("re_{k}"), format!("im_{k}")]).collect()
}

fn spectrum_sweep(sc: &Scenario) -> Result<RunOutput> {
    let p = &sc.sweep.param;
    let mut table = Table::default();
    let mut prev: Option<Vec<num_complex::Complex64>> = None;
    let (mut stable, mut unstable, mut exceptional, mut max_order) = (0usize, 0usize, 0usize, 0usize);
    let (mut max_im_stable, mut min_im_unstable) = (0.0_f64, f64::INFINITY);
    for &x in &sc.sweep.grid {
        let cfg = sc.system_at(&[(p, x)])?;
        let dm = generator(sc, &cfg, &[], 0.0)?;
        let spec = eigensolve(&dm)?;
        let eigs = match &prev {
            Some(pv) if pv.len() == spec.eigenvalues.len() => match_branches(pv, &spec.eigenvalues),
            _ => spec.eigenvalues.clone(),
        };
        if table.columns.is_empty() {
            table.columns = std::iter::once(p.key().to_string())
                .chain(eigen_columns(eigs.len()))
                .chain(["ep_order".to_string(), "phase".to_string()])
                .collect();
        }
        let spread = eigs.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        match spec.phase {
            Phase::Stable => {
                stable += 1;
                max_im_stable = max_im_stable.max(spread);
            }
            Phase::Unstable => {
                unstable += 1;
                min_im_unstable = min_im_unstable.min(spread);
            }
            Phase::Exceptional => exceptional += 1,
        }
        max_order = max_order.max(spec.ep_order);
        let mut row: Vec<Cell> = vec![x.into()];
        row.extend(eigs.iter().flat_map(|z| [Cell::Num(z.re), Cell::Num(z.im)]));
        row.push(spec.ep_order.into());
        row.push(spec.phase.to_string().into());
        table.rows.push(row);
        prev = Some(eigs);
    }
    if unstable == 0 {
        min_im_unstable = f64::NAN;
    }
    let n = sc.sweep.grid.len();
    Ok(finish(
        sc.experiment,
        table,
        &[
            n as f64,
            max_order as f64,
            stable as f64,
            unstable as f64,
            exceptional as f64,
            max_im_stable,
            min_im_unstable,
        ],
    ))
}

fn discriminant_map(sc: &Scenario) -> Result<RunOutput> {
    let s2 = sc.sweep2.as_ref().ok_or_else(|| Error::Config("sweep2.param: missing".into()))?;
    let (p1, p2) = (&sc.sweep.param, &s2.param);
    let mut table = Table {
        columns: [p1.key(), p2.key(), "x", "y", "discriminant", "ep_order", "phase"].map(String::from).to_vec(),
        rows: Vec::new(),
    };
    let mut counts = [0usize; 5];
    for &a in &sc.sweep.grid {
        for &b in &s2.grid {
            let cfg = sc.system_at(&[(p1, a), (p2, b)])?;
            if sc.preset == Preset::Ep2 {
                return Err(Error::Config("system: discriminant_map needs a three-mode system".into()));
            }
            let d = cubic_discriminant(&cfg)?;
            let spec = eigensolve(&build_system(&cfg)?)?;
            if d.d > 0.0 {
                counts[0] += 1;
            } else if d.d < 0.0 {
                counts[1] += 1;
            }
            counts[match spec.phase {
                Phase::Stable => 2,
                Phase::Unstable => 3,
                Phase::Exceptional => 4,
            }] += 1;
            table.rows.push(vec![
                a.into(),
                b.into(),
                d.x.into(),
                d.y.into(),
                d.d.into(),
                spec.ep_order.into(),
                spec.phase.to_string().into(),
            ]);
        }
    }
    let n = table.rows.len() as f64;
    let v: Vec<f64> = std::iter::once(n).chain(counts.iter().map(|x| *x as f64)).collect();
    Ok(finish(sc.experiment, table, &v))
}

fn puiseux(sc: &Scenario) -> Result<RunOutput> {
    let cfg = sc.system_at(&[])?;
    let w = sc.weights_for(&cfg)?;
    let fit = puiseux_fit(|e| generator(sc, &cfg, &w, e), &sc.sweep.grid, sc.selector)?;
    let k = fit.order as f64;
    let mut table = Table {
        columns: ["eps", "displacement", "prefactor"].map(String::from).to_vec(),
        rows: Vec::new(),
    };
    for (&e, &d) in sc.sweep.grid.iter().zip(&fit.displacements) {
        table.rows.push(vec![e.into(), d.into(), (d / e.powf(1.0 / k)).into()]);
    }
    Ok(finish(
        sc.experiment,
        table,
        &[fit.slope, fit.intercept, fit.r_squared, k, fit.branch_prefactor, fit.center.re, fit.center.im],
    ))
}

/// chi of the unperturbed generator: three-mode formula, else the EP2 model.
fn chi_of(sc: &Scenario, cfg: &SystemConfig) -> Result<Option<f64>> {
    if sc.preset == Preset::Ep2 {
        let r = cfg.delta[0] * cfg.delta[0] - cfg.g[0] * cfg.g[0];
        return Ok((r > 0.0).then(|| r.sqrt()));
    }
    Ok(three_mode_chi(&build_system(cfg)?))
}

/// Times of a t or chi_t sweep.
fn times(sc: &Scenario, chi: Option<f64>) -> Result<Vec<f64>> {
    match sc.sweep.param {
        Param::T => Ok(sc.sweep.grid.clone()),
        _ => sc.sweep.grid.iter().map(|&x| resolve_time(TimeSpec::ChiT(x), chi)).collect(),
    }
}

fn evolve_trace(sc: &Scenario) -> Result<RunOutput> {
    let cfg = sc.system_at(&[])?;
    let dm = generator(sc, &cfg, &[], 0.0)?;
    let initial = match sc.preset {
        Preset::Ep2 => GaussianState::coherent(&[cfg.alpha[0], c(0.0, 0.0)], vec!["b".into(), "a".into()])?,
        _ => coherent_init(&cfg)?,
    };
    let chi = chi_of(sc, &cfg)?;
    let ts = times(sc, chi)?;
    let sign: Vec<f64> = dm.kinds.iter().map(|k| if *k == ModeKind::Annihilation { 1.0 } else { -1.0 }).collect();
    let charge = |s: &GaussianState| -> f64 {
        excitation_numbers(s).per_mode.iter().zip(&sign).map(|(n, s)| n * s).sum()
    };
    let q0 = charge(&initial);

    let labels = initial.labels.clone();
    let mut columns = vec!["t".to_string(), "chi_t".to_string()];
    columns.extend(labels.iter().flat_map(|l| [format!("x_{l}"), format!("p_{l}")]));
    columns.extend(labels.iter().map(|l| format!("n_{l}")));
    columns.extend(["n_total", "charge", "purity_det", "uncertainty_margin"].map(String::from));
    let mut table = Table { columns, rows: Vec::new() };

    let lossless = dm.is_lossless();
    let (mut state, mut t_prev) = (initial.clone(), 0.0);
    let (mut drift, mut purity, mut margin, mut last_total) = (0.0_f64, 0.0_f64, f64::INFINITY, 0.0);
    for &t in &ts {
        state = if lossless {
            evolve(&initial, &propagator(&dm, t)?)?
        } else if t > t_prev {
            evolve_lossy(&state, &dm, t - t_prev)?.0
        } else {
            state
        };
        t_prev = t;
        let ex = excitation_numbers(&state);
        let q = charge(&state);
        let det = state.purity_determinant();
        let um = state.uncertainty_margin();
        drift = drift.max((q - q0).abs());
        purity = purity.max((det - 1.0).abs());
        margin = margin.min(um);
        last_total = ex.total;
        let mut row: Vec<Cell> = vec![t.into(), chi.map_or(f64::NAN, |c| c * t).into()];
        row.extend(state.mu.iter().map(|x| Cell::Num(*x)));
        row.extend(ex.per_mode.iter().map(|x| Cell::Num(*x)));
        row.extend([ex.total, q, det, um].map(Cell::Num));
        table.rows.push(row);
    }
    Ok(finish(sc.experiment, table, &[ts.len() as f64, drift, purity, margin, last_total]))
}

fn report_columns(param: &str) -> Vec<String> {
    std::iter::once(param)
        .chain(SensitivityReport::COLUMNS)
        .chain(["sql_margin_db", "saturation"])
        .map(String::from)
        .collect()
}

fn report_row(x: f64, r: &SensitivityReport) -> Vec<Cell> {
    vec![
        x.into(),
        r.g.into(),
        r.kappa.into(),
        r.alpha.into(),
        r.gamma.into(),
        r.gamma_m.into(),
        r.eta.into(),
        r.t.into(),
        r.chi.into(),
        r.observable.clone().into(),
        r.susceptibility.into(),
        r.noise_var.into(),
        r.delta_eps.into(),
        r.qfi.into(),
        r.qcrb.into(),
        r.sql.into(),
        Cell::Int(r.valid_regime as i64),
        r.sql_margin_db().into(),
        (r.delta_eps * r.qfi.sqrt()).into(),
    ]
}

/// Sensitivity report at one sweep value.
fn report_at(sc: &Scenario, x: f64) -> Result<SensitivityReport> {
    let p = &sc.sweep.param;
    let point: Vec<(&Param, f64)> = match p {
        Param::System(_) => vec![(p, x)],
        _ => vec![],
    };
    let cfg = sc.system_at(&point)?;
    let eta = if *p == Param::Eta { x } else { sc.eta };
    let probe = probe(sc, &cfg, eta)?;
    let spec = match p {
        Param::T => TimeSpec::T(x),
        Param::ChiT => TimeSpec::ChiT(x),
        Param::Q => TimeSpec::Q(x),
        _ => sc.time,
    };
    let t = resolve_time(spec, probe.meta.chi)?;
    sensitivity(&probe, sc.observable, t)
}

fn sensitivity_sweep(sc: &Scenario) -> Result<RunOutput> {
    let mut table = Table { columns: report_columns(sc.sweep.param.key()), rows: Vec::new() };
    let mut v = [f64::INFINITY, f64::INFINITY, 0.0_f64, f64::INFINITY, f64::NEG_INFINITY];
    for &x in &sc.sweep.grid {
        let r = report_at(sc, x)?;
        let sat = r.delta_eps * r.qfi.sqrt();
        let db = r.sql_margin_db();
        v = [v[0].min(r.delta_eps), v[1].min(sat), v[2].max(sat), v[3].min(db), v[4].max(db)];
        table.rows.push(report_row(x, &r));
    }
    let n = sc.sweep.grid.len() as f64;
    Ok(finish(sc.experiment, table, &[n, v[0], v[1], v[2], v[3], v[4]]))
}

fn qfi_trace(sc: &Scenario) -> Result<RunOutput> {
    let cfg = sc.system_at(&[])?;
    let probe = probe(sc, &cfg, sc.eta)?;
    let chi = probe.meta.chi;
    let ts = times(sc, chi)?;
    let mut table = Table {
        columns: ["t", "chi_t", "i_mu", "i_lambda", "qfi", "qcrb", "delta_eps", "inv_delta_eps", "saturation"]
            .map(String::from)
            .to_vec(),
        rows: Vec::new(),
    };
    let mut min_sat = f64::INFINITY;
    for &t in &ts {
        let q = qfi_parts(&probe, t, 0.0)?;
        let de = delta_eps(&probe, sc.observable, t)?;
        let qcrb = if q.total > 0.0 { 1.0 / q.total.sqrt() } else { f64::INFINITY };
        let sat = de * q.total.sqrt();
        if sat.is_finite() {
            min_sat = min_sat.min(sat);
        }
        table.rows.push(
            [t, chi.map_or(f64::NAN, |c| c * t), q.i_mu, q.i_lambda, q.total, qcrb, de, 1.0 / de, sat]
                .map(Cell::Num)
                .to_vec(),
        );
    }
    // first working point chi t = 2 pi
    let tw = resolve_time(TimeSpec::Q(1.0), chi)?;
    let qw = qfi_parts(&probe, tw, 0.0)?.total;
    let sw = delta_eps(&probe, sc.observable, tw)? * qw.sqrt();
    Ok(finish(sc.experiment, table, &[ts.len() as f64, min_sat, sw, qw]))
}

fn scaling(sc: &Scenario) -> Result<RunOutput> {
    let fit = scaling_fit(sc.family, &sc.sweep.grid, sc.observable, sc.scaling_alpha()?)?;
    let mut table = Table {
        columns: ["chi", "g", "t", "delta_eps", "qfi"].map(String::from).to_vec(),
        rows: Vec::new(),
    };
    for p in &fit.points {
        let g = (1.0 - p.chi * p.chi).sqrt();
        table.rows.push([p.chi, g, p.t, p.delta_eps, p.qfi].map(Cell::Num).to_vec());
    }
    Ok(finish(
        sc.experiment,
        table,
        &[fit.points.len() as f64, fit.excluded.len() as f64, fit.slope, fit.qfi_slope, fit.r_squared],
    ))
}

fn loss_sweep(sc: &Scenario) -> Result<RunOutput> {
    let mut table = Table { columns: report_columns(sc.sweep.param.key()), rows: Vec::new() };
    let mut pairs = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in &sc.sweep.grid {
        let r = report_at(sc, x)?;
        let db = r.sql_margin_db();
        lo = lo.min(db);
        hi = hi.max(db);
        // loss grows with gamma and Gamma, and with 1 - eta
        let loss = if sc.sweep.param == Param::Eta { 1.0 - x } else { x };
        pairs.push((loss, r.delta_eps));
        table.rows.push(report_row(x, &r));
    }
    let first = pairs[0].1;
    let last = pairs[pairs.len() - 1].1;
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = pairs.windows(2).all(|w| w[1].1 >= w[0].1);
    Ok(finish(sc.experiment, table, &[sc.sweep.grid.len() as f64, monotone as u8 as f64, first, last, lo, hi]))
}
