//! CSV tables, key=value summaries and run manifests.
//!
//! Floats are written with Rust's shortest round-trip formatting, so parsing a cell gives back
//! the exact value that was written. Files use LF line endings and `.` as decimal separator.

use std::fmt::Write as _;
use std::fs;
use std::path::Path as FsPath;

use crate::error::{Error, Result};
use crate::fokker_planck::FpDefectReport;
use crate::measures::{EmpiricalPathMeasure, FixedPointTrace};
use crate::path::Path;
use crate::rough_path::RoughPath;
use crate::stochastic::AccumulationStats;

/// A single table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_f64(*v),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Header plus rows; every row must have one cell per header column.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }
}

/// Shortest decimal string that parses back to `v` exactly.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

fn io_err(path: &FsPath, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn ensure_parent(path: &FsPath) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
        }
        _ => Ok(()),
    }
}

/// Renders `table` as CSV text.
pub fn table_to_string(table: &Table) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(&table.header)?;
    for (n, row) in table.rows.iter().enumerate() {
        if row.len() != table.header.len() {
            return Err(Error::Parse(format!(
                "row {n} has {} cells for {} columns",
                row.len(),
                table.header.len()
            )));
        }
        w.write_record(row.iter().map(Cell::render))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Parse(format!("csv flush failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// Writes `table` to `path`, creating parent directories.
pub fn emit_table(path: impl AsRef<FsPath>, table: &Table) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    fs::write(path, table_to_string(table)?).map_err(|e| io_err(path, e))
}

/// Reads a CSV written by [`emit_table`] as a header and string rows.
pub fn read_table(path: impl AsRef<FsPath>) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}

/// Writes `key=value` lines.
pub fn write_summary(path: impl AsRef<FsPath>, entries: &[(String, String)]) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    let mut s = String::new();
    for (k, v) in entries {
        let _ = writeln!(s, "{k}={v}");
    }
    fs::write(path, s).map_err(|e| io_err(path, e))
}

/// One output file and the library operations that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub file: String,
    pub module: String,
    pub ops: Vec<String>,
}

/// Record of a run: its parameters and the provenance of every artifact.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub params: Vec<(String, String)>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.params.push((key.to_string(), value.to_string()));
    }

    pub fn record(&mut self, file: &str, module: &str, ops: &[&str]) {
        self.entries.push(ManifestEntry {
            file: file.to_string(),
            module: module.to_string(),
            ops: ops.iter().map(|s| s.to_string()).collect(),
        });
    }

    pub fn render(&self) -> String {
        let mut s = String::from("[params]\n");
        for (k, v) in &self.params {
            let _ = writeln!(s, "{k}={v}");
        }
        s.push_str("[artifacts]\n");
        for e in &self.entries {
            let _ = writeln!(s, "{} module={} ops={}", e.file, e.module, e.ops.join(","));
        }
        s
    }

    pub fn write(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let path = path.as_ref();
        ensure_parent(path)?;
        fs::write(path, self.render()).map_err(|e| io_err(path, e))
    }
}

/// `t, x_0, ..., x_{d-1}` per grid point.
pub fn path_table(p: &Path) -> Table {
    let mut header = vec!["t".to_string()];
    header.extend((0..p.dim()).map(|c| format!("x_{c}")));
    let mut t = Table::new(&header);
    for i in 0..p.len() {
        let mut row = vec![Cell::from(p.grid().t(i))];
        row.extend(p.value(i).iter().map(|v| Cell::from(*v)));
        t.push(row);
    }
    t
}

/// Per-step rows `s, t, dz_a, zz_ab`; the full second level follows from these by Chen's relation.
pub fn rough_path_table(rp: &RoughPath) -> Table {
    let m = rp.dim();
    let mut header = vec!["s".to_string(), "t".to_string()];
    header.extend((0..m).map(|a| format!("dz_{a}")));
    for a in 0..m {
        header.extend((0..m).map(|b| format!("zz_{a}{b}")));
    }
    let mut t = Table::new(&header);
    let g = rp.grid();
    for i in 0..g.steps() {
        let mut row = vec![Cell::from(g.t(i)), Cell::from(g.t(i + 1))];
        row.extend(rp.z().increment(i, i + 1).into_iter().map(Cell::from));
        row.extend(rp.zz(i, i + 1).into_iter().map(Cell::from));
        t.push(row);
    }
    t
}

/// `iter, particle, t, x_c` for every particle and grid point.
pub fn ensemble_table(iter: usize, measure: &EmpiricalPathMeasure) -> Table {
    let d = measure.dim();
    let mut header = vec!["iter".to_string(), "particle".into(), "t".into()];
    if d == 1 {
        header.push("x".into());
    } else {
        header.extend((0..d).map(|c| format!("x_{c}")));
    }
    let mut t = Table::new(&header);
    for (n, p) in measure.paths().iter().enumerate() {
        for i in 0..p.len() {
            let mut row = vec![Cell::from(iter), Cell::from(n), Cell::from(p.grid().t(i))];
            row.extend(p.value(i).iter().map(|v| Cell::from(*v)));
            t.push(row);
        }
    }
    t
}

/// One row per fixed-point iteration.
pub fn trace_table(trace: &FixedPointTrace) -> Table {
    let mut t = Table::new(&[
        "window",
        "iter",
        "wasserstein_gap",
        "gubinelli_gap",
        "controlled_gap",
        "moment_flag",
    ]);
    for r in &trace.records {
        t.push(vec![
            r.window.into(),
            r.iter.into(),
            r.wasserstein_gap.into(),
            r.gubinelli_gap.into(),
            r.controlled_gap.into(),
            usize::from(r.moment_flag).into(),
        ]);
    }
    t
}

/// `phi_id, s, t, defect, ci_low, ci_high`.
pub fn defect_table(report: &FpDefectReport) -> Table {
    let mut t = Table::new(&["phi_id", "s", "t", "defect", "ci_low", "ci_high"]);
    for v in &report.values {
        t.push(vec![
            v.probe.into(),
            v.s.into(),
            v.t.into(),
            v.defect.into(),
            v.ci_low.into(),
            v.ci_high.into(),
        ]);
    }
    t
}

/// `sample_id, F_alpha, FF_2alpha, N` per sampled driver.
pub fn accumulation_table(stats: &AccumulationStats) -> Table {
    let mut t = Table::new(&["sample_id", "F_alpha", "FF_2alpha", "N"]);
    for (n, (f, ff, acc)) in stats.summary.iter().enumerate() {
        t.push(vec![n.into(), (*f).into(), (*ff).into(), (*acc).into()]);
    }
    t
}
