use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_epsense"))
}

fn scenarios() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "scn"))
        .collect();
    v.sort();
    v
}

fn run(files: &[PathBuf], out: &Path, extra: &[&str]) -> Output {
    bin().arg("run").args(files).arg("--out").arg(out).args(extra).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn example_scenarios_pass_and_rerun_byte_identical() {
    let files = scenarios();
    assert!(files.len() >= 8);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run(&files, a.path(), &["--jobs", "2"]);
    println!("{}", String::from_utf8_lossy(&first.stdout));
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(run(&files, b.path(), &[]).status.success());
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), files.len());
    for n in names {
        let x = std::fs::read(a.path().join(&n)).unwrap();
        let y = std::fs::read(b.path().join(&n)).unwrap();
        assert!(x == y, "{n:?} differs between runs");
    }
}

#[test]
fn csv_header_echoes_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let f = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/fig2b.scn");
    assert!(run(&[f], dir.path(), &[]).status.success());
    let text = std::fs::read_to_string(dir.path().join("fig2b.csv")).unwrap();
    for key in ["# name=fig2b", "# g=1", "# kappa=1", "# delta=0, 0", "# weights=1, 1", "# sweep.param=eps", "# summary.slope="] {
        assert!(text.contains(key), "missing {key}");
    }
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "eps,displacement,prefactor");
    assert_eq!(data.len(), 26);
    // 17 significant digits
    assert!(data[1].split(',').all(|c| c.split('e').next().unwrap().trim_start_matches('-').len() == 18));
}

#[test]
fn json_format_override() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "s.scn",
        "experiment = spectrum_sweep\nsweep.param = g\nsweep.grid = 0.9, 1.1\noutput.path = sub/spec\n",
    );
    assert!(run(&[f], dir.path(), &["--format", "json"]).status.success());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sub/spec.json")).unwrap()).unwrap();
    assert_eq!(v["summary"]["stable_points"], 1.0);
    assert_eq!(v["summary"]["unstable_points"], 1.0);
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn invalid_scenarios_exit_2_with_field_message() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("experiment = puiseux\nbogus = 1\n", "line 2: bogus: unknown key"),
        ("experiment = nope\n", "unknown experiment"),
        ("experiment = spectrum_sweep\ng = 1\ng = 2\n", "duplicate"),
        ("experiment = spectrum_sweep\nsweep.param = g\nsweep.grid = 1, 1\n", "sweep.grid"),
        ("experiment = spectrum_sweep\nsweep.param = g\nsweep.grid = 1, 2\ndelta = 0\n", "delta has 1 entries"),
        ("experiment = qfi_trace\nsweep.param = g\nsweep.grid = 1, 2\n", "cannot be swept"),
        ("experiment = puiseux\nsweep.param = eps\nsweep.grid = 1e-9, 1e-8\n", "at least 8 points"),
    ];
    for (i, (text, msg)) in cases.iter().enumerate() {
        let f = write(dir.path(), &format!("bad{i}.scn"), text);
        let out = run(&[f], dir.path(), &[]);
        let err = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(2), "case {i}: {err}");
        assert!(err.contains(msg), "case {i}: {err}");
    }
}

#[test]
fn missed_expectation_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "e.scn",
        "experiment = spectrum_sweep\nsweep.param = g\nsweep.grid = 0.9, 1.1\nexpect.stable_points = 2, 0\n",
    );
    let out = run(&[f], dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("expect.stable_points = 2, 0 MISS (got 1)"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(bin().output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["run", "/nonexistent.scn"]).output().unwrap().status.code(), Some(2));
}
