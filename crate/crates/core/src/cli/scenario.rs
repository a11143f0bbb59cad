//! Scenario files. Flat `key = value` lines, `#` starts a comment, arrays
//! are comma separated. The schema is documented in scenarios/README.md.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c, linspace, logspace};
use crate::metrology::{EpFamily, ObservableKind};
use crate::model::SystemConfig;
use crate::spectral::BranchSelector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    SpectrumSweep,
    DiscriminantMap,
    Puiseux,
    EvolveTrace,
    SensitivitySweep,
    QfiTrace,
    Scaling,
    LossSweep,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::SpectrumSweep,
        Experiment::DiscriminantMap,
        Experiment::Puiseux,
        Experiment::EvolveTrace,
        Experiment::SensitivitySweep,
        Experiment::QfiTrace,
        Experiment::Scaling,
        Experiment::LossSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SpectrumSweep => "spectrum_sweep",
            Experiment::DiscriminantMap => "discriminant_map",
            Experiment::Puiseux => "puiseux",
            Experiment::EvolveTrace => "evolve_trace",
            Experiment::SensitivitySweep => "sensitivity_sweep",
            Experiment::QfiTrace => "qfi_trace",
            Experiment::Scaling => "scaling",
            Experiment::LossSweep => "loss_sweep",
        }
    }

    /// Values reported in the summary; `expect.*` keys must name one of these.
    pub fn summary_keys(self) -> &'static [&'static str] {
        match self {
            Experiment::SpectrumSweep => &[
                "points",
                "max_ep_order",
                "stable_points",
                "unstable_points",
                "exceptional_points",
                "max_imag_stable",
                "min_imag_unstable",
            ],
            Experiment::DiscriminantMap => {
                &["points", "positive_points", "negative_points", "stable_points", "unstable_points", "exceptional_points"]
            }
            Experiment::Puiseux => &["slope", "intercept", "r_squared", "order", "prefactor", "center_re", "center_im"],
            Experiment::EvolveTrace => {
                &["points", "max_charge_drift", "max_purity_defect", "min_uncertainty_margin", "final_total"]
            }
            Experiment::SensitivitySweep => &[
                "points",
                "min_delta_eps",
                "min_saturation",
                "max_saturation",
                "min_sql_margin_db",
                "max_sql_margin_db",
            ],
            Experiment::QfiTrace => &["points", "min_saturation", "working_point_saturation", "working_point_qfi"],
            Experiment::Scaling => &["points", "excluded", "slope", "qfi_slope", "r_squared"],
            Experiment::LossSweep => {
                &["points", "monotone", "first_delta_eps", "last_delta_eps", "min_sql_margin_db", "max_sql_margin_db"]
            }
        }
    }

    fn allows_sweep(self, p: &Param) -> bool {
        use Param::*;
        match self {
            Experiment::SpectrumSweep | Experiment::DiscriminantMap => matches!(p, System(_)),
            Experiment::Puiseux => matches!(p, Eps),
            Experiment::EvolveTrace | Experiment::QfiTrace => matches!(p, T | ChiT),
            Experiment::SensitivitySweep => matches!(p, System(_) | Eta | T | ChiT | Q),
            Experiment::Scaling => matches!(p, Chi),
            Experiment::LossSweep => match p {
                System(k) => k == "gamma" || k == "Gamma",
                Eta => true,
                _ => false,
            },
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Three-mode sensor: g = kappa = 1, zero detuning, alpha = 2.
    Ep3,
    /// Four-mode system on the fourth-order locus for ratio `f`.
    Ep4,
    /// Two-mode reference model [[delta + eps, i g], [i g, -delta - eps]].
    Ep2,
    /// Everything from the file; needs `n` and `m`.
    Custom,
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ep3" => Ok(Preset::Ep3),
            "ep4" => Ok(Preset::Ep4),
            "ep2" => Ok(Preset::Ep2),
            "custom" => Ok(Preset::Custom),
            _ => Err(format!("unknown system '{s}' (ep3, ep4, ep2, custom)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Ep3 => "ep3",
            Preset::Ep4 => "ep4",
            Preset::Ep2 => "ep2",
            Preset::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Something a sweep can vary.
#[derive(Debug, Clone, PartialEq)]
pub enum Param {
    /// A system field: g, kappa, gamma, Gamma, f, alpha, rate_scale or an
    /// indexed entry such as `delta.2`.
    System(String),
    Eps,
    Eta,
    T,
    ChiT,
    Q,
    Chi,
}

impl Param {
    pub fn key(&self) -> &str {
        match self {
            Param::System(k) => k,
            Param::Eps => "eps",
            Param::Eta => "eta",
            Param::T => "t",
            Param::ChiT => "chi_t",
            Param::Q => "q",
            Param::Chi => "chi",
        }
    }

    fn parse(s: &str) -> std::result::Result<Param, String> {
        Ok(match s {
            "eps" => Param::Eps,
            "eta" => Param::Eta,
            "t" => Param::T,
            "chi_t" => Param::ChiT,
            "q" => Param::Q,
            "chi" => Param::Chi,
            "g" | "kappa" | "gamma" | "Gamma" | "f" | "alpha" | "rate_scale" => Param::System(s.into()),
            _ => match split_index(s) {
                Some((field, _)) if ["g", "kappa", "delta", "epsilon"].contains(&field) => Param::System(s.into()),
                _ => return Err(format!("'{s}' cannot be swept")),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: Param,
    /// Grid expression as written, echoed in output headers.
    pub spec: String,
    pub grid: Vec<f64>,
}

/// How the evaluation time is chosen when it is not swept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeSpec {
    T(f64),
    ChiT(f64),
    /// Working point chi t = 2 pi q.
    Q(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Expectation {
    Near { value: f64, tol: f64 },
    AtLeast(f64),
    AtMost(f64),
}

impl Expectation {
    pub fn holds(&self, x: f64) -> bool {
        match *self {
            Expectation::Near { value, tol } => (x - value).abs() <= tol,
            Expectation::AtLeast(b) => x >= b,
            Expectation::AtMost(b) => x <= b,
        }
    }
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expectation::Near { value, tol } => write!(f, "{}, {}", short(*value), short(*tol)),
            Expectation::AtLeast(b) => write!(f, ">= {}", short(*b)),
            Expectation::AtMost(b) => write!(f, "<= {}", short(*b)),
        }
    }
}

/// Shortest round-trip form, switching to exponent notation for very small
/// or large magnitudes.
pub fn short(x: f64) -> String {
    if x != 0.0 && x.is_finite() && !(1e-4..1e6).contains(&x.abs()) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub path: Option<String>,
    pub format: Format,
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

const SYSTEM_FIELDS: [&str; 12] =
    ["n", "m", "f", "g", "kappa", "delta", "epsilon", "gamma", "Gamma", "alpha", "rate_scale", "system"];

const TOP_KEYS: [&str; 19] = [
    "name",
    "experiment",
    "weights",
    "observable",
    "t",
    "chi_t",
    "q",
    "eta",
    "selector",
    "family",
    "sweep.param",
    "sweep.grid",
    "sweep2.param",
    "sweep2.grid",
    "output.path",
    "output.format",
    "sweep.label",
    "sweep2.label",
    "note",
];

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub experiment: Experiment,
    pub preset: Preset,
    /// System keys in file order, applied on top of the preset.
    system_keys: Vec<(String, String, usize)>,
    pub weights: Option<Vec<f64>>,
    pub observable: ObservableKind,
    pub time: TimeSpec,
    pub eta: f64,
    pub selector: BranchSelector,
    pub family: EpFamily,
    pub sweep: Sweep,
    pub sweep2: Option<Sweep>,
    pub output: Output,
    pub expect: Vec<(String, Expectation)>,
    pub note: Option<String>,
}

/// Error tied to a line and key of the scenario file.
fn field_err(line: usize, key: &str, msg: impl fmt::Display) -> Error {
    if line == 0 {
        Error::Config(format!("{key}: {msg}"))
    } else {
        Error::Config(format!("line {line}: {key}: {msg}"))
    }
}

fn split_index(key: &str) -> Option<(&str, usize)> {
    let (field, idx) = key.rsplit_once('.')?;
    let idx: usize = idx.parse().ok()?;
    Some((field, idx))
}

/// A real number; `pi`, `2pi`, `2*pi` and `pi/2` are accepted.
pub fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let bad = || format!("'{s}' is not a number");
    if let Ok(x) = s.parse::<f64>() {
        return Ok(x);
    }
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a.trim(), Some(b.trim().parse::<f64>().map_err(|_| bad())?)),
        None => (s, None),
    };
    let coef = match num.strip_suffix("pi") {
        Some("") => 1.0,
        Some("-") => -1.0,
        Some(p) => p.trim_end_matches('*').trim().parse::<f64>().map_err(|_| bad())?,
        None => num.parse::<f64>().map_err(|_| bad())?,
    };
    let x = if num.ends_with("pi") { coef * PI } else { coef };
    Ok(match den {
        Some(d) => x / d,
        None => x,
    })
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(parse_number).collect()
}

fn parse_complex(s: &str) -> std::result::Result<Complex64, String> {
    let t: String = s.chars().filter(|ch| !ch.is_whitespace()).collect();
    if let Ok(x) = parse_number(&t) {
        return Ok(c(x, 0.0));
    }
    Complex64::from_str(&t).map_err(|_| format!("'{s}' is not a complex number (a+bi)"))
}

fn parse_grid(s: &str) -> std::result::Result<Vec<f64>, String> {
    let s = s.trim();
    let call = |name: &str| -> Option<std::result::Result<(f64, f64, usize), String>> {
        let inner = s.strip_prefix(name)?.trim().strip_prefix('(')?.strip_suffix(')')?;
        let parts: Vec<&str> = inner.split(',').collect();
        if parts.len() != 3 {
            return Some(Err(format!("{name} takes (start, stop, count)")));
        }
        let run = || -> std::result::Result<(f64, f64, usize), String> {
            let n = parts[2].trim().parse::<usize>().map_err(|_| format!("'{}' is not a count", parts[2].trim()))?;
            Ok((parse_number(parts[0])?, parse_number(parts[1])?, n))
        };
        Some(run())
    };
    let grid = if let Some(r) = call("linspace") {
        let (a, b, n) = r?;
        linspace(a, b, n)
    } else if let Some(r) = call("logspace") {
        let (a, b, n) = r?;
        if !(a > 0.0 && b > 0.0) {
            return Err("logspace endpoints must be positive".into());
        }
        logspace(a, b, n)
    } else {
        parse_list(s)?
    };
    if grid.is_empty() {
        return Err("grid is empty".into());
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err("grid has non-finite entries".into());
    }
    let up = grid.windows(2).all(|w| w[1] > w[0]);
    let down = grid.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err("grid must be strictly monotone".into());
    }
    Ok(grid)
}

fn parse_expectation(s: &str) -> std::result::Result<Expectation, String> {
    let s = s.trim();
    if let Some(r) = s.strip_prefix(">=") {
        return Ok(Expectation::AtLeast(parse_number(r)?));
    }
    if let Some(r) = s.strip_prefix("<=") {
        return Ok(Expectation::AtMost(parse_number(r)?));
    }
    match parse_list(s)?.as_slice() {
        [value, tol] if *tol >= 0.0 => Ok(Expectation::Near { value: *value, tol: *tol }),
        _ => Err("expected 'value, tolerance', '>= bound' or '<= bound'".into()),
    }
}

impl Scenario {
    pub fn from_file(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
        Scenario::parse(&text, stem)
    }

    /// Parses scenario text. `default_name` is used when `name` is absent.
    pub fn parse(text: &str, default_name: &str) -> Result<Scenario> {
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        let mut order: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected 'key = value', got '{body}'")))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if k.is_empty() {
                return Err(Error::Config(format!("line {line}: empty key")));
            }
            if let Some(prev) = entries.get(&k) {
                return Err(field_err(line, &k, format!("duplicate key (first set on line {})", prev.line)));
            }
            let known = TOP_KEYS.contains(&k.as_str())
                || SYSTEM_FIELDS.contains(&k.as_str())
                || k.starts_with("expect.")
                || matches!(split_index(&k), Some((f, _)) if ["g", "kappa", "delta", "epsilon", "alpha"].contains(&f));
            if !known {
                return Err(field_err(line, &k, "unknown key"));
            }
            order.push(k.clone());
            entries.insert(k, Entry { value: v, line });
        }

        let get = |k: &str| entries.get(k);
        let num = |k: &str| -> Result<Option<f64>> {
            match get(k) {
                None => Ok(None),
                Some(e) => parse_number(&e.value).map(Some).map_err(|m| field_err(e.line, k, m)),
            }
        };

        let experiment = match get("experiment") {
            None => return Err(field_err(0, "experiment", "missing")),
            Some(e) => e.value.parse::<Experiment>().map_err(|m| field_err(e.line, "experiment", m))?,
        };
        let preset = match get("system") {
            None => Preset::Ep3,
            Some(e) => e.value.parse::<Preset>().map_err(|m| field_err(e.line, "system", m))?,
        };
        let name = get("name").map(|e| e.value.clone()).unwrap_or_else(|| default_name.to_string());
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(field_err(get("name").map_or(0, |e| e.line), "name", "must be a plain non-empty word"));
        }

        let weights = match get("weights") {
            None => None,
            Some(e) => Some(parse_list(&e.value).map_err(|m| field_err(e.line, "weights", m))?),
        };
        let observable = match get("observable") {
            None => ObservableKind::X1MinusX2,
            Some(e) => e.value.parse::<ObservableKind>().map_err(|m| field_err(e.line, "observable", m))?,
        };
        let times: Vec<(&str, f64)> = [("t", num("t")?), ("chi_t", num("chi_t")?), ("q", num("q")?)]
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k, v)))
            .collect();
        let time = match times.as_slice() {
            [] => TimeSpec::Q(1.0),
            [("t", v)] => TimeSpec::T(*v),
            [("chi_t", v)] => TimeSpec::ChiT(*v),
            [(_, v)] => TimeSpec::Q(*v),
            _ => return Err(field_err(get("t").or(get("chi_t")).map_or(0, |e| e.line), "t", "set only one of t, chi_t, q")),
        };
        let eta = num("eta")?.unwrap_or(1.0);
        if !(0.0..=1.0).contains(&eta) {
            return Err(field_err(get("eta").unwrap().line, "eta", "must lie in [0, 1]"));
        }
        let selector = match get("selector").map(|e| (e.value.as_str(), e.line)) {
            None | Some(("smallest_arg", _)) => BranchSelector::SmallestArg,
            Some(("largest_modulus", _)) => BranchSelector::LargestModulus,
            Some((v, line)) => return Err(field_err(line, "selector", format!("unknown selector '{v}'"))),
        };
        let family = match get("family") {
            None => EpFamily::Ep3,
            Some(e) => e.value.parse::<EpFamily>().map_err(|m| field_err(e.line, "family", m))?,
        };

        let sweep_of = |prefix: &str| -> Result<Option<Sweep>> {
            let pk = format!("{prefix}.param");
            let gk = format!("{prefix}.grid");
            match (get(&pk), get(&gk)) {
                (None, None) => Ok(None),
                (Some(p), Some(g)) => {
                    let param = Param::parse(&p.value).map_err(|m| field_err(p.line, &pk, m))?;
                    if !experiment.allows_sweep(&param) {
                        return Err(field_err(p.line, &pk, format!("'{}' cannot be swept by {experiment}", p.value)));
                    }
                    let grid = parse_grid(&g.value).map_err(|m| field_err(g.line, &gk, m))?;
                    Ok(Some(Sweep { param, spec: g.value.clone(), grid }))
                }
                (Some(p), None) => Err(field_err(p.line, &gk, "missing")),
                (None, Some(g)) => Err(field_err(g.line, &pk, "missing")),
            }
        };
        let sweep = sweep_of("sweep")?.ok_or_else(|| field_err(0, "sweep.param", "missing"))?;
        let sweep2 = sweep_of("sweep2")?;
        match (experiment, &sweep2) {
            (Experiment::DiscriminantMap, None) => return Err(field_err(0, "sweep2.param", "missing")),
            (Experiment::DiscriminantMap, Some(s2)) if s2.param == sweep.param => {
                return Err(field_err(get("sweep2.param").unwrap().line, "sweep2.param", "must differ from sweep.param"))
            }
            (Experiment::DiscriminantMap, _) | (_, None) => {}
            (_, Some(_)) => {
                return Err(field_err(get("sweep2.param").unwrap().line, "sweep2.param", format!("{experiment} takes one sweep")))
            }
        }
        match sweep.param {
            Param::T | Param::ChiT | Param::Eps if sweep.grid.iter().any(|x| *x < 0.0) => {
                return Err(field_err(get("sweep.grid").unwrap().line, "sweep.grid", "must be non-negative"))
            }
            _ => {}
        }
        if experiment == Experiment::EvolveTrace && sweep.grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(field_err(get("sweep.grid").unwrap().line, "sweep.grid", "times must increase"));
        }

        let format = match get("output.format") {
            None => Format::Csv,
            Some(e) => match e.value.as_str() {
                "csv" => Format::Csv,
                "json" => Format::Json,
                v => return Err(field_err(e.line, "output.format", format!("unknown format '{v}'"))),
            },
        };
        let output = Output { path: get("output.path").map(|e| e.value.clone()), format };

        let mut expect = Vec::new();
        for k in order.iter().filter(|k| k.starts_with("expect.")) {
            let e = &entries[k];
            let key = &k["expect.".len()..];
            if !experiment.summary_keys().contains(&key) {
                return Err(field_err(
                    e.line,
                    k,
                    format!("{experiment} reports {}", experiment.summary_keys().join(", ")),
                ));
            }
            expect.push((key.to_string(), parse_expectation(&e.value).map_err(|m| field_err(e.line, k, m))?));
        }

        let system_keys: Vec<(String, String, usize)> = order
            .iter()
            .filter(|k| {
                k.as_str() != "system"
                    && (SYSTEM_FIELDS.contains(&k.as_str())
                        || matches!(split_index(k), Some((f, _)) if ["g", "kappa", "delta", "epsilon", "alpha"].contains(&f)))
            })
            .map(|k| (k.clone(), entries[k].value.clone(), entries[k].line))
            .collect();

        if experiment == Experiment::Scaling {
            if let Some((k, _, line)) = system_keys.iter().find(|(k, _, _)| k != "alpha") {
                return Err(field_err(*line, k, "scaling builds its systems from `family`; only alpha may be set"));
            }
            if let Some(e) = get("system") {
                return Err(field_err(e.line, "system", "scaling builds its systems from `family`"));
            }
        }
        if preset != Preset::Ep4 {
            if let Some(e) = get("f") {
                return Err(field_err(e.line, "f", "only used with system = ep4"));
            }
            let swept_f = std::iter::once(&sweep).chain(&sweep2).any(|s| s.param == Param::System("f".into()));
            if swept_f {
                return Err(field_err(0, "sweep.param", "f is only swept with system = ep4"));
            }
        }

        let sc = Scenario {
            name,
            experiment,
            preset,
            system_keys,
            weights,
            observable,
            time,
            eta,
            selector,
            family,
            sweep,
            sweep2,
            output,
            expect,
            note: get("note").map(|e| e.value.clone()),
        };
        // resolve once so that field errors surface before any computation
        if experiment != Experiment::Scaling {
            let cfg = sc.system_at(&[])?;
            sc.weights_for(&cfg)?;
            for s in std::iter::once(&sc.sweep).chain(&sc.sweep2) {
                if let Param::System(_) = s.param {
                    for &x in &s.grid {
                        sc.system_at(&[(&s.param, x)])?;
                    }
                }
            }
        }
        Ok(sc)
    }

    fn preset_value(&self, key: &str, point: &[(&Param, f64)]) -> Result<Option<f64>> {
        if let Some((_, x)) = point.iter().find(|(p, _)| p.key() == key) {
            return Ok(Some(*x));
        }
        match self.system_keys.iter().find(|(k, _, _)| k == key) {
            None => Ok(None),
            Some((k, v, line)) => parse_number(v).map(Some).map_err(|m| field_err(*line, k, m)),
        }
    }

    /// System configuration with the swept values of `point` applied.
    pub fn system_at(&self, point: &[(&Param, f64)]) -> Result<SystemConfig> {
        let count = |key: &str| -> Result<Option<usize>> {
            match self.preset_value(key, point)? {
                None => Ok(None),
                Some(x) if x >= 0.0 && x.fract() == 0.0 => Ok(Some(x as usize)),
                Some(_) => Err(field_err(self.line_of(key), key, "must be a non-negative integer")),
            }
        };
        let mut cfg = match self.preset {
            Preset::Ep3 => SystemConfig::ep3_sensor(1.0, 2.0),
            Preset::Ep4 => {
                let f = self.preset_value("f", point)?.unwrap_or(0.2);
                let mut cfg = SystemConfig::ep4(f).map_err(|e| field_err(self.line_of("f"), "f", e))?;
                cfg.alpha = alternating(3, 2.0);
                cfg
            }
            Preset::Ep2 => SystemConfig {
                n: 2,
                m: 1,
                g: vec![1.0],
                kappa: vec![],
                delta: vec![1.0],
                epsilon: vec![0.0],
                gamma: 0.0,
                gamma_m: 0.0,
                alpha: vec![c(2.0, 0.0)],
                rate_scale: 1.0,
            },
            Preset::Custom => {
                let n = count("n")?.ok_or_else(|| field_err(0, "n", "required for system = custom"))?;
                let m = count("m")?.ok_or_else(|| field_err(0, "m", "required for system = custom"))?;
                let k = n.saturating_sub(1);
                SystemConfig {
                    n,
                    m,
                    g: vec![1.0; m],
                    kappa: vec![1.0; k.saturating_sub(m)],
                    delta: vec![0.0; k],
                    epsilon: vec![0.0; k],
                    gamma: 0.0,
                    gamma_m: 0.0,
                    alpha: vec![c(0.0, 0.0); k],
                    rate_scale: 1.0,
                }
            }
        };
        if self.preset != Preset::Custom {
            for key in ["n", "m"] {
                if self.system_keys.iter().any(|(k, _, _)| k == key) {
                    return Err(field_err(self.line_of(key), key, "only set with system = custom"));
                }
            }
        }

        let mut assign: Vec<(String, String, usize)> = self
            .system_keys
            .iter()
            .filter(|(k, _, _)| !["n", "m", "f"].contains(&k.as_str()) && !point.iter().any(|(p, _)| p.key() == k))
            .cloned()
            .collect();
        // whole fields first, then indexed entries, then swept values
        assign.sort_by_key(|(k, _, _)| split_index(k).is_some());
        for (k, v, line) in &assign {
            apply(&mut cfg, k, v, self.preset).map_err(|m| field_err(*line, k, m))?;
        }
        for (p, x) in point {
            if let Param::System(k) = p {
                if k != "f" {
                    apply(&mut cfg, k, &format!("{x:e}"), self.preset).map_err(|m| field_err(0, k, m))?;
                }
            }
        }
        cfg.validate().map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("system: {m}")),
            other => other,
        })?;
        if self.preset == Preset::Ep2 && cfg.n != 2 {
            return Err(field_err(0, "system", "ep2 is a two-mode model"));
        }
        Ok(cfg)
    }

    fn line_of(&self, key: &str) -> usize {
        self.system_keys.iter().find(|(k, _, _)| k == key).map_or(0, |(_, _, l)| *l)
    }

    /// Perturbation direction; defaults to equal weights on every magnon.
    pub fn weights_for(&self, cfg: &SystemConfig) -> Result<Vec<f64>> {
        match &self.weights {
            None => Ok(vec![1.0; cfg.n - 1]),
            Some(w) if w.len() == cfg.n - 1 => Ok(w.clone()),
            Some(w) => Err(field_err(0, "weights", format!("{} entries for {} magnons", w.len(), cfg.n - 1))),
        }
    }

    /// Every resolved parameter, in a fixed order, for output headers.
    pub fn resolved(&self) -> Result<Vec<(String, String)>> {
        let mut out: Vec<(String, String)> = vec![
            ("name".into(), self.name.clone()),
            ("experiment".into(), self.experiment.to_string()),
        ];
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ");
        if self.experiment == Experiment::Scaling {
            out.push(("family".into(), format!("{:?}", self.family).to_lowercase()));
            out.push(("alpha".into(), format!("{}", self.scaling_alpha()?)));
        } else {
            let cfg = self.system_at(&[])?;
            out.push(("system".into(), self.preset.to_string()));
            if self.preset == Preset::Ep4 {
                out.push(("f".into(), format!("{}", self.preset_value("f", &[])?.unwrap_or(0.2))));
            }
            out.push(("n".into(), cfg.n.to_string()));
            out.push(("m".into(), cfg.m.to_string()));
            out.push(("g".into(), join(&cfg.g)));
            out.push(("kappa".into(), join(&cfg.kappa)));
            out.push(("delta".into(), join(&cfg.delta)));
            out.push(("epsilon".into(), join(&cfg.epsilon)));
            out.push(("gamma".into(), format!("{}", cfg.gamma)));
            out.push(("Gamma".into(), format!("{}", cfg.gamma_m)));
            let alpha: Vec<String> = cfg.alpha.iter().map(|a| format!("{}{:+}i", a.re, a.im)).collect();
            out.push(("alpha".into(), alpha.join(", ")));
            out.push(("rate_scale".into(), format!("{}", cfg.rate_scale)));
            out.push(("weights".into(), join(&self.weights_for(&cfg)?)));
            out.push(("eta".into(), format!("{}", self.eta)));
            let time = match self.time {
                TimeSpec::T(t) => ("t", t),
                TimeSpec::ChiT(x) => ("chi_t", x),
                TimeSpec::Q(q) => ("q", q),
            };
            out.push((time.0.into(), format!("{}", time.1)));
            let sel = match self.selector {
                BranchSelector::SmallestArg => "smallest_arg",
                BranchSelector::LargestModulus => "largest_modulus",
            };
            out.push(("selector".into(), sel.into()));
        }
        out.push(("observable".into(), self.observable.to_string()));
        for (prefix, s) in [("sweep", Some(&self.sweep)), ("sweep2", self.sweep2.as_ref())] {
            if let Some(s) = s {
                out.push((format!("{prefix}.param"), s.param.key().to_string()));
                out.push((format!("{prefix}.grid"), s.spec.clone()));
                out.push((format!("{prefix}.points"), s.grid.len().to_string()));
            }
        }
        for (k, e) in &self.expect {
            out.push((format!("expect.{k}"), e.to_string()));
        }
        Ok(out)
    }

    /// Coherent amplitude used by the scaling families.
    pub fn scaling_alpha(&self) -> Result<f64> {
        match self.system_keys.iter().find(|(k, _, _)| k == "alpha") {
            None => Ok(2.0),
            Some((k, v, line)) => parse_number(v).map_err(|m| field_err(*line, k, m)),
        }
    }
}

/// (i a, -i a, i a, ...) for `count` magnons.
fn alternating(count: usize, a: f64) -> Vec<Complex64> {
    (0..count).map(|i| if i % 2 == 0 { c(0.0, a) } else { c(0.0, -a) }).collect()
}

fn apply(cfg: &mut SystemConfig, key: &str, value: &str, preset: Preset) -> std::result::Result<(), String> {
    if let Some((field, idx)) = split_index(key) {
        let len = match field {
            "g" => cfg.g.len(),
            "kappa" => cfg.kappa.len(),
            "delta" => cfg.delta.len(),
            "epsilon" => cfg.epsilon.len(),
            "alpha" => cfg.alpha.len(),
            _ => return Err("unknown field".into()),
        };
        if idx < 1 || idx > len {
            return Err(format!("index {idx} outside 1..={len}"));
        }
        let i = idx - 1;
        match field {
            "g" => cfg.g[i] = parse_number(value)?,
            "kappa" => cfg.kappa[i] = parse_number(value)?,
            "delta" => cfg.delta[i] = parse_number(value)?,
            "epsilon" => cfg.epsilon[i] = parse_number(value)?,
            _ => cfg.alpha[i] = parse_complex(value)?,
        }
        return Ok(());
    }
    match key {
        "gamma" => cfg.gamma = parse_number(value)?,
        "Gamma" => cfg.gamma_m = parse_number(value)?,
        "rate_scale" => cfg.rate_scale = parse_number(value)?,
        "delta" => cfg.delta = parse_list(value)?,
        "epsilon" => cfg.epsilon = parse_list(value)?,
        // a single value sets the first coupling, a list replaces them all
        "g" | "kappa" => {
            let v = parse_list(value)?;
            let target = if key == "g" { &mut cfg.g } else { &mut cfg.kappa };
            if v.len() == 1 && !target.is_empty() {
                target[0] = v[0];
            } else {
                *target = v;
            }
        }
        "alpha" => {
            let parts: Vec<&str> = value.split(',').collect();
            if parts.len() == 1 && parse_number(parts[0]).is_ok() {
                let a = parse_number(parts[0])?;
                cfg.alpha = if preset == Preset::Ep2 { vec![c(a, 0.0)] } else { alternating(cfg.n - 1, a) };
            } else {
                cfg.alpha = parts.iter().map(|p| parse_complex(p)).collect::<std::result::Result<_, _>>()?;
            }
        }
        _ => return Err("unknown field".into()),
    }
    Ok(())
}

/// Time at which a probe is evaluated, given its oscillation frequency.
pub fn resolve_time(spec: TimeSpec, chi: Option<f64>) -> Result<f64> {
    let need = |what: &str| Error::Config(format!("{what} needs an oscillating system (real chi > 0)"));
    match spec {
        TimeSpec::T(t) => Ok(t),
        TimeSpec::ChiT(x) => chi.filter(|c| *c > 0.0).map(|c| x / c).ok_or_else(|| need("chi_t")),
        TimeSpec::Q(q) => chi.filter(|c| *c > 0.0).map(|c| 2.0 * PI * q / c).ok_or_else(|| need("q")),
    }
}
