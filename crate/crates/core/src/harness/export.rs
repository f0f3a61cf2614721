//! Tabular output shared by every subcommand.
//!
//! Numbers are written with 17 significant digits so each CSV value parses
//! back to the same bits. JSON carries the same cells as
//! `{"columns": [...], "rows": [[...], ...]}` with empty cells as `null`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{json, Value};
use thiserror::Error;

use crate::harness::convergence::ConvergenceTable;
use crate::harness::reference::SampledTrajectory;
use crate::model::FhnParams;
use crate::stability::{bifurcation_scan, find_equilibria, nullclines, BranchPoint, SimSettings};

pub const NULLCLINE_SAMPLES: usize = 1000;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bifurcation scan needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid range [{0}, {1}]")]
    InvalidRange(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
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

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    pub fn opt(x: Option<f64>) -> Cell {
        x.map_or(Cell::Empty, Cell::Num)
    }

    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => format_number(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => json!(x),
            Cell::Num(_) | Cell::Empty => Value::Null,
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
        }
    }
}

pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Array(r.iter().map(Cell::json).collect()))
            .collect();
        let mut s = serde_json::to_string_pretty(&json!({ "columns": self.columns, "rows": rows }))
            .expect("table serialises");
        s.push('\n');
        s
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }

    pub fn write(&self, path: &Path, format: Format) -> Result<(), ExportError> {
        fs::write(path, self.render(format)).map_err(|source| ExportError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Header and raw string cells of a CSV produced by [`Table::to_csv`].
pub fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines
        .next()
        .map(|h| h.split(',').map(str::to_string).collect())
        .unwrap_or_default();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (header, rows)
}

pub fn phase_portrait_table(
    p: &FhnParams,
    trajectories: &[SampledTrajectory],
    v_range: (f64, f64),
) -> Result<Table, ExportError> {
    let (lo, hi) = v_range;
    if !(lo < hi) {
        return Err(ExportError::InvalidRange(lo, hi));
    }
    let mut table = Table::new(["kind", "t", "v", "w"]);
    let text = |s: &str| Cell::Text(s.to_string());

    for traj in trajectories {
        if let Some(s0) = traj.states.first() {
            table.push(vec![text("ic"), Cell::Num(traj.times[0]), Cell::Num(s0.v), Cell::Num(s0.w)]);
        }
        for (&t, s) in traj.times.iter().zip(&traj.states) {
            table.push(vec![text("trajectory"), Cell::Num(t), Cell::Num(s.v), Cell::Num(s.w)]);
        }
    }

    let grid: Vec<f64> = (0..NULLCLINE_SAMPLES)
        .map(|k| {
            if k + 1 == NULLCLINE_SAMPLES {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (NULLCLINE_SAMPLES - 1) as f64
            }
        })
        .collect();
    let curves = nullclines(p, &grid);
    for s in &curves.v_nullcline {
        table.push(vec![text("v-nullcline"), Cell::Empty, Cell::Num(s.v), Cell::Num(s.w)]);
    }
    for s in &curves.w_nullcline {
        table.push(vec![text("w-nullcline"), Cell::Empty, Cell::Num(s.v), Cell::Num(s.w)]);
    }
    for eq in find_equilibria(p) {
        table.push(vec![text("equilibrium"), Cell::Empty, Cell::Num(eq.v_star), Cell::Num(eq.w_star)]);
    }
    Ok(table)
}

pub fn export_phase_portrait(
    p: &FhnParams,
    trajectories: &[SampledTrajectory],
    v_range: (f64, f64),
    path: &Path,
    format: Format,
) -> Result<(), ExportError> {
    phase_portrait_table(p, trajectories, v_range)?.write(path, format)
}

pub const BIFURCATION_COLUMNS: [&str; 8] = ["I", "v_star", "stable", "re_l1", "re_l2", "im_l1", "lc_min", "lc_max"];

pub fn bifurcation_rows(branch: &[BranchPoint]) -> Table {
    let mut table = Table::new(BIFURCATION_COLUMNS);
    for b in branch {
        table.push(vec![
            Cell::Num(b.current),
            Cell::Num(b.v_star),
            Cell::Int(b.stable as i64),
            Cell::Num(b.eigen.lambda1.re),
            Cell::Num(b.eigen.lambda2.re),
            Cell::Num(b.eigen.lambda1.im),
            Cell::opt(b.lc_min),
            Cell::opt(b.lc_max),
        ]);
    }
    table
}

pub fn bifurcation_table(
    p_base: &FhnParams,
    i_lo: f64,
    i_hi: f64,
    n_points: usize,
    sim: &SimSettings,
) -> Result<Table, ExportError> {
    if n_points < 2 {
        return Err(ExportError::TooFewPoints(n_points));
    }
    if !(i_lo < i_hi) {
        return Err(ExportError::InvalidRange(i_lo, i_hi));
    }
    let grid = crate::harness::reference::uniform_times(i_lo, i_hi, n_points - 1);
    Ok(bifurcation_rows(&bifurcation_scan(p_base, &grid, sim)))
}

pub fn export_bifurcation(
    p_base: &FhnParams,
    i_lo: f64,
    i_hi: f64,
    n_points: usize,
    sim: &SimSettings,
    path: &Path,
    format: Format,
) -> Result<(), ExportError> {
    bifurcation_table(p_base, i_lo, i_hi, n_points, sim)?.write(path, format)
}

/// The per-variable error tables and the timing sidecar.
pub fn convergence_tables(table: &ConvergenceTable) -> (Table, Table, Table) {
    let columns: Vec<String> = std::iter::once("t".to_string())
        .chain(table.rows.iter().map(|r| format!("err_N{}", r.degree)))
        .collect();
    let mut v = Table::new(columns.clone());
    let mut w = Table::new(columns);
    for (k, &t) in table.sample_times.iter().enumerate() {
        let pick = |errs: &Option<Vec<f64>>| Cell::opt(errs.as_ref().map(|e| e[k]));
        v.push(std::iter::once(Cell::Num(t)).chain(table.rows.iter().map(|r| pick(&r.v_err))).collect());
        w.push(std::iter::once(Cell::Num(t)).chain(table.rows.iter().map(|r| pick(&r.w_err))).collect());
    }
    let mut cpu = Table::new(["N", "seconds"]);
    for r in &table.rows {
        cpu.push(vec![Cell::Int(r.degree as i64), Cell::Text(format!("{:.3}", r.cpu_seconds))]);
    }
    (v, w, cpu)
}

/// Writes `convergence_v`, `convergence_w` and `cpu` into `dir`; returns the paths.
pub fn write_convergence(table: &ConvergenceTable, dir: &Path, format: Format) -> Result<Vec<PathBuf>, ExportError> {
    fs::create_dir_all(dir).map_err(|source| ExportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let (v, w, cpu) = convergence_tables(table);
    let ext = format.extension();
    let mut paths = Vec::new();
    for (name, t) in [("convergence_v", v), ("convergence_w", w), ("cpu", cpu)] {
        let path = dir.join(format!("{name}.{ext}"));
        t.write(&path, format)?;
        paths.push(path);
    }
    Ok(paths)
}
