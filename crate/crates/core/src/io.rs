//! CSV exports with JSON metadata sidecars, and the matching readers.
//!
//! Floats are written with 17 significant digits so that reading a file back
//! reproduces every value bit for bit. Data files carry no timestamps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::continuation::{Branch, BranchEvent, BranchKind, Stability};
use crate::diagnostics::AttractorSample;
use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::model::FieldPair;
use crate::spectral::SpectralGrid;

/// Environment variable overriding the default output directory.
pub const OUT_DIR_ENV: &str = "BVAM_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "bvam_out";

/// Leading eigenvalues or multipliers written per branch row.
pub const BRANCH_LEADS: usize = 4;

/// Explicit directory, else `$BVAM_OUT_DIR`, else `./bvam_out`.
pub fn output_dir(explicit: Option<&Path>) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
    }
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Format(format!("bad number '{s}' in column {what}")))
}

fn parse_opt(s: &str, what: &str) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(s, what).map(Some)
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

fn reader(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_owned).collect();
    let rows = r.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((header, rows))
}

fn column(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Format(format!("missing column '{name}'")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub n: usize,
    pub lx: f64,
    pub dx: f64,
    pub dealiased: bool,
}

impl From<&SpectralGrid> for GridInfo {
    fn from(g: &SpectralGrid) -> Self {
        Self { n: g.n(), lx: g.lx(), dx: g.dx(), dealiased: g.dealiased() }
    }
}

/// Sidecar contents. `data` holds file-specific extras such as a period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub config: serde_json::Value,
    pub grid: GridInfo,
    pub versions: BTreeMap<String, String>,
    pub command_line: Vec<String>,
    #[serde(default)]
    pub data: serde_json::Value,
}

impl Metadata {
    pub fn new<C: Serialize>(config: &C, grid: &SpectralGrid, command_line: Vec<String>) -> Result<Self> {
        let mut versions = BTreeMap::new();
        versions.insert(env!("CARGO_PKG_NAME").to_owned(), env!("CARGO_PKG_VERSION").to_owned());
        Ok(Self {
            config: serde_json::to_value(config)?,
            grid: grid.into(),
            versions,
            command_line,
            data: serde_json::Value::Null,
        })
    }

    pub fn with_data(mut self, data: serde_json::Value) -> Self {
        self.data = data;
        self
    }
}

/// `foo.csv` -> `foo.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_metadata(path: &Path, meta: &Metadata) -> Result<PathBuf> {
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_string_pretty(meta)?)?;
    Ok(side)
}

pub fn read_metadata(path: &Path) -> Result<Metadata> {
    let text = std::fs::read_to_string(sidecar_path(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// One row of a branch table.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchRow {
    pub index: usize,
    pub c: f64,
    pub energy: f64,
    pub period: Option<f64>,
    pub stable: bool,
    pub event: Option<BranchEvent>,
    pub iterations: usize,
    /// Equilibrium rows only.
    pub max_real_part: Option<f64>,
    /// Orbit rows only: largest nontrivial multiplier modulus.
    pub max_multiplier_modulus: Option<f64>,
    /// Leading eigenvalues (by real part) or nontrivial multipliers (by
    /// modulus).
    pub leads: Vec<Complex64>,
}

fn branch_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "index", "C", "E", "T", "stable", "event", "iterations", "max_real_part",
        "max_multiplier_modulus",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for i in 1..=BRANCH_LEADS {
        h.push(format!("lead{i}_re"));
        h.push(format!("lead{i}_im"));
    }
    h
}

pub fn branch_rows(branch: &Branch) -> Vec<BranchRow> {
    branch
        .points
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let (max_real_part, max_multiplier_modulus, leads) = match &p.stability {
                Stability::Equilibrium(r) => {
                    (Some(r.max_real_part), None, r.eigenvalues.iter().take(BRANCH_LEADS).copied().collect())
                }
                Stability::Orbit { monodromy, .. } => {
                    let leads: Vec<Complex64> = monodromy.nontrivial().take(BRANCH_LEADS).collect();
                    (None, leads.first().map(|m| m.norm()), leads)
                }
            };
            BranchRow {
                index,
                c: p.c,
                energy: p.energy,
                period: p.solution.period(),
                stable: p.stability.is_stable(),
                event: p.event,
                iterations: p.iterations,
                max_real_part,
                max_multiplier_modulus,
                leads,
            }
        })
        .collect()
}

/// One row per continuation point.
pub fn export_branch(branch: &Branch, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(branch_header())?;
    for row in branch_rows(branch) {
        let mut rec = vec![
            row.index.to_string(),
            fmt_f64(row.c),
            fmt_f64(row.energy),
            fmt_opt(row.period),
            row.stable.to_string(),
            row.event.map(|e| e.as_str().to_owned()).unwrap_or_default(),
            row.iterations.to_string(),
            fmt_opt(row.max_real_part),
            fmt_opt(row.max_multiplier_modulus),
        ];
        for i in 0..BRANCH_LEADS {
            let z = row.leads.get(i);
            rec.push(fmt_opt(z.map(|z| z.re)));
            rec.push(fmt_opt(z.map(|z| z.im)));
        }
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_branch(path: &Path) -> Result<Vec<BranchRow>> {
    let (header, rows) = reader(path)?;
    if header != branch_header() {
        return Err(Error::Format(format!("{} is not a branch table", path.display())));
    }
    rows.iter()
        .map(|r| {
            let mut leads = Vec::new();
            for i in 0..BRANCH_LEADS {
                let re = parse_opt(&r[9 + 2 * i], "lead_re")?;
                let im = parse_opt(&r[10 + 2 * i], "lead_im")?;
                if let (Some(re), Some(im)) = (re, im) {
                    leads.push(Complex64::new(re, im));
                }
            }
            Ok(BranchRow {
                index: r[0].parse().map_err(|_| Error::Format("bad index".into()))?,
                c: parse_f64(&r[1], "C")?,
                energy: parse_f64(&r[2], "E")?,
                period: parse_opt(&r[3], "T")?,
                stable: r[4].parse().map_err(|_| Error::Format("bad stable flag".into()))?,
                event: if r[5].is_empty() { None } else { Some(r[5].parse()?) },
                iterations: r[6].parse().map_err(|_| Error::Format("bad iteration count".into()))?,
                max_real_part: parse_opt(&r[7], "max_real_part")?,
                max_multiplier_modulus: parse_opt(&r[8], "max_multiplier_modulus")?,
                leads,
            })
        })
        .collect()
}

/// The whole branch, states included, as JSON.
pub fn export_branch_json(branch: &Branch, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string(branch)?)?;
    Ok(())
}

pub fn read_branch_json(path: &Path) -> Result<Branch> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Wide layout: `t, E, u1_0 .. u1_{N-1}, u2_0 .. u2_{N-1}`.
pub fn export_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let n = traj.states.first().map_or(0, FieldPair::len);
    let mut w = writer(path)?;
    let mut header = vec!["t".to_owned(), "E".to_owned()];
    header.extend((0..n).map(|j| format!("u1_{j}")));
    header.extend((0..n).map(|j| format!("u2_{j}")));
    w.write_record(&header)?;
    for ((t, s), e) in traj.times.iter().zip(&traj.states).zip(&traj.energies) {
        if s.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: s.len() });
        }
        let mut rec = Vec::with_capacity(2 + 2 * n);
        rec.push(fmt_f64(*t));
        rec.push(fmt_f64(*e));
        rec.extend(s.u1.iter().chain(&s.u2).map(|v| fmt_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let (header, rows) = reader(path)?;
    if header.len() < 4 || header[0] != "t" || header[1] != "E" || (header.len() - 2) % 2 != 0 {
        return Err(Error::Format(format!("{} is not a trajectory table", path.display())));
    }
    let n = (header.len() - 2) / 2;
    let mut traj = Trajectory::default();
    for r in &rows {
        let vals = r.iter().map(|v| parse_f64(v, "trajectory")).collect::<Result<Vec<f64>>>()?;
        traj.times.push(vals[0]);
        traj.energies.push(vals[1]);
        traj.states.push(FieldPair::new(vals[2..2 + n].to_vec(), vals[2 + n..].to_vec())?);
    }
    Ok(traj)
}

const ATTRACTOR_HEADER: [&str; 6] = ["t", "t_norm", "u1_center", "u2_center", "E", "dEdt"];

pub fn export_attractor(samples: &[AttractorSample], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(ATTRACTOR_HEADER)?;
    for s in samples {
        w.write_record([s.t, s.t_norm, s.u1_center, s.u2_center, s.energy, s.dedt].map(fmt_f64))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_attractor(path: &Path) -> Result<Vec<AttractorSample>> {
    let (header, rows) = reader(path)?;
    if header != ATTRACTOR_HEADER {
        return Err(Error::Format(format!("{} is not an attractor table", path.display())));
    }
    rows.iter()
        .map(|r| {
            let v = r.iter().map(|x| parse_f64(x, "attractor")).collect::<Result<Vec<f64>>>()?;
            Ok(AttractorSample { t: v[0], t_norm: v[1], u1_center: v[2], u2_center: v[3], energy: v[4], dedt: v[5] })
        })
        .collect()
}

/// `x, u1, u2` on the collocation points.
pub fn export_state(grid: &SpectralGrid, state: &FieldPair, path: &Path) -> Result<()> {
    if state.len() != grid.n() {
        return Err(Error::LengthMismatch { expected: grid.n(), found: state.len() });
    }
    let mut w = writer(path)?;
    w.write_record(["x", "u1", "u2"])?;
    for ((x, a), b) in grid.points().iter().zip(&state.u1).zip(&state.u2) {
        w.write_record([*x, *a, *b].map(fmt_f64))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_state(path: &Path) -> Result<FieldPair> {
    let (header, rows) = reader(path)?;
    let (i1, i2) = (column(&header, "u1")?, column(&header, "u2")?);
    let mut u1 = Vec::with_capacity(rows.len());
    let mut u2 = Vec::with_capacity(rows.len());
    for r in &rows {
        u1.push(parse_f64(&r[i1], "u1")?);
        u2.push(parse_f64(&r[i2], "u2")?);
    }
    FieldPair::new(u1, u2)
}

/// Two named columns, e.g. a spectrum.
pub fn export_columns(names: [&str; 2], a: &[f64], b: &[f64], path: &Path) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), found: b.len() });
    }
    let mut w = writer(path)?;
    w.write_record(names)?;
    for (x, y) in a.iter().zip(b) {
        w.write_record([fmt_f64(*x), fmt_f64(*y)])?;
    }
    w.flush()?;
    Ok(())
}

/// `index, re, im, modulus`.
pub fn export_complex(values: &[Complex64], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["index", "re", "im", "modulus"])?;
    for (i, z) in values.iter().enumerate() {
        w.write_record([i.to_string(), fmt_f64(z.re), fmt_f64(z.im), fmt_f64(z.norm())])?;
    }
    w.flush()?;
    Ok(())
}

/// `t, x_0 .. x_{N-1}` rows of one species, for space-time plots.
pub fn export_space_time(times: &[f64], rows: &[Vec<f64>], path: &Path) -> Result<()> {
    let n = rows.first().map_or(0, Vec::len);
    let mut w = writer(path)?;
    let mut header = vec!["t".to_owned()];
    header.extend((0..n).map(|j| format!("x_{j}")));
    w.write_record(&header)?;
    for (t, row) in times.iter().zip(rows) {
        if row.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: row.len() });
        }
        let mut rec = vec![fmt_f64(*t)];
        rec.extend(row.iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn branch_kind_name(kind: BranchKind) -> &'static str {
    match kind {
        BranchKind::Equilibrium => "equilibrium",
        BranchKind::Orbit => "orbit",
    }
}
