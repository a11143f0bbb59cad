//! Command-line front end: `run` scenario files, `accept` the acceptance
//! suite.
//!
//! Exit codes: 0 success, 1 a run finished but missed a declared
//! expectation or acceptance criterion (or could not write its output),
//! 2 invalid scenario, 3 numerical failure. With several scenarios the
//! largest code wins.

pub mod acceptance;
pub mod experiments;
pub mod output;
pub mod scenario;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::error::{Error, Result};

use self::scenario::{Format, Scenario};

#[derive(Debug, Parser)]
#[command(name = "epsense", version, about = "Exceptional-point sensor simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the scenario's output.format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for running several scenarios or criteria.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Reserved; every computation is currently deterministic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one or more scenario files.
    Run {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Run the acceptance suite.
    Accept,
}

/// Outcome of one scenario.
#[derive(Debug)]
pub struct ScenarioReport {
    pub name: String,
    pub path: PathBuf,
    pub lines: Vec<String>,
    pub exit_code: i32,
}

/// Parses, runs and writes one scenario; never panics on bad input.
pub fn run_file(file: &Path, out_dir: &Path, format: Option<Format>) -> ScenarioReport {
    match run_file_inner(file, out_dir, format) {
        Ok(r) => r,
        Err(e) => ScenarioReport {
            name: file.display().to_string(),
            path: PathBuf::new(),
            lines: vec![format!("{}: {}", file.display(), describe(&e))],
            exit_code: e.exit_code(),
        },
    }
}

fn describe(e: &Error) -> String {
    match e {
        Error::Numerical(_) | Error::Regime(_) => format!("numerical failure: {e}"),
        _ => e.to_string(),
    }
}

fn run_file_inner(file: &Path, out_dir: &Path, format: Option<Format>) -> Result<ScenarioReport> {
    let sc = Scenario::from_file(file)?;
    let params = sc.resolved()?;
    let out = experiments::run(&sc)?;
    let format = format.unwrap_or(sc.output.format);
    let rel = match &sc.output.path {
        Some(p) => PathBuf::from(p).with_extension(format.extension()),
        None => PathBuf::from(format!("{}.{}", sc.name, format.extension())),
    };
    let path = out_dir.join(rel);
    output::write_atomic(&path, &output::render(format, &params, &out))?;

    let mut missed = Vec::new();
    for (k, e) in &sc.expect {
        let v = out.get(k).unwrap_or(f64::NAN);
        if !e.holds(v) {
            missed.push(format!("  expect.{k} = {e} MISS (got {})", scenario::short(v)));
        }
    }
    let summary: Vec<String> = out.summary.iter().map(|(k, v)| format!("{k}={}", scenario::short(*v))).collect();
    let status = if missed.is_empty() { "PASS" } else { "FAIL" };
    let mut lines = vec![format!(
        "{}: {} {} rows -> {}; expectations {}/{} {status}; {}",
        sc.name,
        sc.experiment,
        out.table.rows.len(),
        path.display(),
        sc.expect.len() - missed.len(),
        sc.expect.len(),
        summary.join(" ")
    )];
    lines.extend(missed.iter().cloned());
    Ok(ScenarioReport { name: sc.name, path, lines, exit_code: if missed.is_empty() { 0 } else { 1 } })
}

/// Runs the acceptance suite, prints one line per criterion and writes
/// acceptance.json (or .csv) into `out_dir`.
pub fn accept(out_dir: &Path, format: Format) -> Result<i32> {
    let results = acceptance::run_acceptance();
    for r in &results {
        println!("{r}");
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    let text = match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&results).expect("report is serialisable");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = String::from("criterion,passed,check,measured,expected,tolerance,bound,check_passed\n");
            for r in &results {
                for ch in &r.checks {
                    let bound = serde_json::to_value(ch.bound).expect("bound is serialisable");
                    s.push_str(&format!(
                        "{},{},{},{},{},{},{},{}\n",
                        r.id,
                        r.passed as u8,
                        ch.name,
                        output::fmt_f64(ch.measured),
                        output::fmt_f64(ch.expected),
                        output::fmt_f64(ch.tolerance),
                        bound.as_str().unwrap_or(""),
                        ch.passed as u8
                    ));
                }
            }
            s
        }
    };
    output::write_atomic(&out_dir.join(format!("acceptance.{}", format.extension())), &text)?;
    Ok(if passed == results.len() { 0 } else { 1 })
}

pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(k) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("--jobs: {e}");
            return 2;
        }
    }
    match cli.command {
        Command::Run { files } => {
            let reports: Vec<ScenarioReport> =
                files.par_iter().map(|f| run_file(f, &cli.out, cli.format)).collect();
            for r in &reports {
                for l in &r.lines {
                    if r.exit_code >= 2 {
                        eprintln!("{l}");
                    } else {
                        println!("{l}");
                    }
                }
            }
            reports.iter().map(|r| r.exit_code).max().unwrap_or(0)
        }
        Command::Accept => match accept(&cli.out, cli.format.unwrap_or(Format::Json)) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("{e}");
                e.exit_code()
            }
        },
    }
}
