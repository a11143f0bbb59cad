//! CSV and JSON writers. Floats are printed with 17 significant digits so
//! identical inputs give byte-identical files.

use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

use super::experiments::{Cell, RunOutput};
use super::scenario::Format;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn cell_text(c: &Cell) -> String {
    match c {
        Cell::Num(x) => fmt_f64(*x),
        Cell::Int(i) => i.to_string(),
        Cell::Text(s) => s.clone(),
    }
}

fn cell_json(c: &Cell) -> Value {
    match c {
        Cell::Num(x) => json!(x),
        Cell::Int(i) => json!(i),
        Cell::Text(s) => json!(s),
    }
}

pub fn render_csv(params: &[(String, String)], out: &RunOutput) -> String {
    let mut s = format!("# epsense {}\n", env!("CARGO_PKG_VERSION"));
    for (k, v) in params {
        s.push_str(&format!("# {k}={v}\n"));
    }
    for (k, v) in &out.summary {
        s.push_str(&format!("# summary.{k}={}\n", fmt_f64(*v)));
    }
    s.push_str(&out.table.columns.join(","));
    s.push('\n');
    for row in &out.table.rows {
        let cells: Vec<String> = row.iter().map(cell_text).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn render_json(params: &[(String, String)], out: &RunOutput) -> String {
    let mut p = Map::new();
    for (k, v) in params {
        p.insert(k.clone(), json!(v));
    }
    let mut summary = Map::new();
    for (k, v) in &out.summary {
        summary.insert(k.clone(), json!(v));
    }
    let rows: Vec<Value> = out.table.rows.iter().map(|r| Value::Array(r.iter().map(cell_json).collect())).collect();
    let doc = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "parameters": p,
        "columns": out.table.columns,
        "rows": rows,
        "summary": summary,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("json values are serialisable");
    s.push('\n');
    s
}

pub fn render(format: Format, params: &[(String, String)], out: &RunOutput) -> String {
    match format {
        Format::Csv => render_csv(params, out),
        Format::Json => render_json(params, out),
    }
}

/// Writes via a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
