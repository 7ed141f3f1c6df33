//! Location-dependent passive beamforming codebooks.
//!
//! For a target `P` every cell's path phasor is
//! `b_m = exp(-j2π(d_in + d_out)/λ)`. Setting the cell phase to
//! `wrap(ψ + arg b_m)` cancels the propagation phase of that cell's term in
//! the scattered-field sum, so all terms reach `P` with common phase `ψ`.
//! Phases are turned into voltages one cell at a time, ignoring amplitude.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cell_model::CellResponseModel;
use crate::geometry::{GeometryError, ScenarioGeometry, Vec3, MIN_DISTANCE_M};
use crate::propagation::RisConfiguration;
use crate::wrap_deg;

#[derive(Debug, Error)]
pub enum CodebookError {
    #[error("cell index {cell} out of range for {cells} cells")]
    CellIndex { cell: usize, cells: usize },
    #[error("target {index_p}: {source}")]
    Target {
        index_p: u32,
        #[source]
        source: GeometryError,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("target {index_p} is not in front of the array plane")]
    TargetBehindArray { index_p: u32 },
    #[error("duplicate codebook key (index_p = {index_p}, psi = {psi_deg}°)")]
    DuplicateKey { index_p: u32, psi_deg: f64 },
    #[error("codebook needs at least one target and one psi value")]
    EmptyRequest,
    #[error("malformed codebook file, line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How the uniform phase `ψ` enters the per-cell phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiConvention {
    /// `φ_m = wrap(ψ + arg b_m)`: every contribution arrives at the target
    /// with phase `ψ`.
    #[default]
    Align,
    /// `φ_m = wrap(arg b_m - ψ)`, the opposite sign on `ψ`.
    Subtract,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamTarget {
    pub index_p: u32,
    pub position: Vec3,
}

impl BeamTarget {
    pub fn new(index_p: u32, position: Vec3) -> Self {
        Self { index_p, position }
    }
}

/// `count` targets on a circular arc of `radius` around the array center,
/// in the plane spanned by the array normal and its row axis. Angles are
/// deflections from the normal towards `+row_axis`. Indices start at 1.
pub fn arc_targets(
    scenario: &ScenarioGeometry,
    count: usize,
    radius: f64,
    start_deg: f64,
    end_deg: f64,
) -> Vec<BeamTarget> {
    let ris = scenario.ris();
    (0..count)
        .map(|k| {
            let t = if count > 1 {
                k as f64 / (count - 1) as f64
            } else {
                0.5
            };
            let a = (start_deg + t * (end_deg - start_deg)).to_radians();
            let pos = ris.center() + (ris.normal() * a.cos() + ris.row_axis() * a.sin()) * radius;
            BeamTarget::new(k as u32 + 1, pos)
        })
        .collect()
}

/// `count` targets evenly spaced on the segment `start → end`. Indices start at 1.
pub fn line_targets(start: Vec3, end: Vec3, count: usize) -> Vec<BeamTarget> {
    (0..count)
        .map(|k| {
            let t = if count > 1 {
                k as f64 / (count - 1) as f64
            } else {
                0.0
            };
            BeamTarget::new(k as u32 + 1, start + (end - start) * t)
        })
        .collect()
}

/// `n` values `0, 360/n, …` covering one turn.
pub fn uniform_psi_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| 360.0 * k as f64 / n as f64).collect()
}

/// Path phasor `exp(-j2π(d_in + d_out)/λ)` of cell `m` for target `p`.
pub fn path_phase(
    scenario: &ScenarioGeometry,
    m: usize,
    p: Vec3,
) -> Result<Complex64, CodebookError> {
    let ris = scenario.ris();
    if m >= ris.len() {
        return Err(CodebookError::CellIndex {
            cell: m,
            cells: ris.len(),
        });
    }
    let c = ris.cell_center(m);
    let (d_in, d_out) = (scenario.source().distance(c), c.distance(p));
    if d_in < MIN_DISTANCE_M || d_out < MIN_DISTANCE_M {
        return Err(GeometryError::CoincidentWithCell { cell: m }.into());
    }
    Ok(path_phasor(d_in + d_out, scenario.wavelength()))
}

fn path_phasor(path: f64, wavelength: f64) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI * (path / wavelength).fract())
}

/// Cell phase (degrees, wrapped) that compensates `b_m` and applies `psi_deg`.
pub fn desired_cell_phase(b_m: Complex64, psi_deg: f64, convention: PsiConvention) -> f64 {
    let psi = psi_deg.rem_euclid(360.0);
    let arg = b_m.arg().to_degrees();
    match convention {
        PsiConvention::Align => wrap_deg(psi + arg),
        PsiConvention::Subtract => wrap_deg(arg - psi),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookEntry {
    pub target: BeamTarget,
    pub psi_deg: f64,
    pub voltages: Vec<f64>,
    pub desired_phases_deg: Vec<f64>,
    pub achieved_phases_deg: Vec<f64>,
    /// Signed circular error `wrap(achieved - desired)` per cell.
    pub phase_errors_deg: Vec<f64>,
}

impl CodebookEntry {
    pub fn configuration(&self) -> RisConfiguration {
        RisConfiguration::new(self.voltages.clone())
    }

    pub fn max_abs_phase_error_deg(&self) -> f64 {
        self.phase_errors_deg.iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    pub fn record(&self) -> CodebookRecord {
        CodebookRecord {
            index_p: self.target.index_p,
            psi_deg: self.psi_deg,
            voltages: self.voltages.clone(),
        }
    }
}

pub fn synthesize_entry(
    scenario: &ScenarioGeometry,
    model: &CellResponseModel,
    target: BeamTarget,
    psi_deg: f64,
) -> Result<CodebookEntry, CodebookError> {
    synthesize_entry_with(scenario, model, target, psi_deg, PsiConvention::Align)
}

pub fn synthesize_entry_with(
    scenario: &ScenarioGeometry,
    model: &CellResponseModel,
    target: BeamTarget,
    psi_deg: f64,
    convention: PsiConvention,
) -> Result<CodebookEntry, CodebookError> {
    let ris = scenario.ris();
    if !ris.is_in_front(target.position) {
        return Err(CodebookError::TargetBehindArray {
            index_p: target.index_p,
        });
    }
    let paths = ris
        .path_lengths(scenario.source(), target.position)
        .map_err(|source| CodebookError::Target {
            index_p: target.index_p,
            source,
        })?;

    let m = paths.len();
    let mut entry = CodebookEntry {
        target,
        psi_deg,
        voltages: Vec::with_capacity(m),
        desired_phases_deg: Vec::with_capacity(m),
        achieved_phases_deg: Vec::with_capacity(m),
        phase_errors_deg: Vec::with_capacity(m),
    };
    for (d_in, d_out) in paths {
        let b = path_phasor(d_in + d_out, scenario.wavelength());
        let desired = desired_cell_phase(b, psi_deg, convention);
        let inv = model.voltage_for_phase(desired);
        entry.voltages.push(inv.voltage);
        entry.desired_phases_deg.push(desired);
        entry.achieved_phases_deg.push(inv.achieved_phase_deg);
        entry.phase_errors_deg.push(inv.error_deg);
    }
    Ok(entry)
}

/// Entries for every `(target, ψ)` pair, targets outer and `ψ` inner.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Codebook {
    pub entries: Vec<CodebookEntry>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index_p: u32, psi_deg: f64) -> Option<&CodebookEntry> {
        self.entries
            .iter()
            .find(|e| e.target.index_p == index_p && e.psi_deg == psi_deg)
    }

    pub fn records(&self) -> Vec<CodebookRecord> {
        self.entries.iter().map(CodebookEntry::record).collect()
    }
}

pub fn build_codebook(
    scenario: &ScenarioGeometry,
    model: &CellResponseModel,
    targets: &[BeamTarget],
    psi_grid: &[f64],
) -> Result<Codebook, CodebookError> {
    build_codebook_with(scenario, model, targets, psi_grid, PsiConvention::Align)
}

pub fn build_codebook_with(
    scenario: &ScenarioGeometry,
    model: &CellResponseModel,
    targets: &[BeamTarget],
    psi_grid: &[f64],
    convention: PsiConvention,
) -> Result<Codebook, CodebookError> {
    if targets.is_empty() || psi_grid.is_empty() {
        return Err(CodebookError::EmptyRequest);
    }
    let mut seen = HashSet::new();
    for t in targets {
        for &psi in psi_grid {
            if !seen.insert((t.index_p, psi.to_bits())) {
                return Err(CodebookError::DuplicateKey {
                    index_p: t.index_p,
                    psi_deg: psi,
                });
            }
        }
    }
    let entries = targets
        .par_iter()
        .flat_map_iter(|&t| psi_grid.iter().map(move |&psi| (t, psi)))
        .map(|(t, psi)| synthesize_entry_with(scenario, model, t, psi, convention))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Codebook { entries })
}

/// Persisted form of one entry: its key and control voltages.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookRecord {
    pub index_p: u32,
    pub psi_deg: f64,
    pub voltages: Vec<f64>,
}

impl CodebookRecord {
    pub fn configuration(&self) -> RisConfiguration {
        RisConfiguration::new(self.voltages.clone())
    }
}

/// Header of a persisted codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookHeader {
    pub scenario_hash: String,
    pub wavelength: f64,
    pub rows: usize,
    pub cols: usize,
    pub entries: usize,
}

const FORMAT_TAG: &str = "# ris-ambc codebook v1";

/// Short SHA-256 fingerprint of every scenario number, in fixed order.
pub fn scenario_hash(scenario: &ScenarioGeometry) -> String {
    let ris = scenario.ris();
    let mut canon = String::new();
    let _ = write!(canon, "{}x{};{:?};", ris.rows(), ris.cols(), ris.pitch());
    for v in [
        ris.center(),
        ris.normal(),
        ris.row_axis(),
        scenario.source(),
        scenario.tag(),
        scenario.reader(),
    ] {
        let _ = write!(canon, "{:?},{:?},{:?};", v.x, v.y, v.z);
    }
    let _ = write!(canon, "{:?}", scenario.wavelength());
    hex::encode(&Sha256::digest(canon.as_bytes())[..8])
}

/// Writes the codebook text format:
///
/// ```text
/// # ris-ambc codebook v1
/// scenario_hash=<16 hex digits>
/// wavelength_m=<λ>
/// rows=<rows>
/// cols=<cols>
/// entries=<count>
/// index_p,psi_deg,v1,…,vM
/// <index_p>,<psi>,<v1 to 3 decimals>,…
/// ```
pub fn write_codebook<W: Write>(
    mut w: W,
    scenario: &ScenarioGeometry,
    records: &[CodebookRecord],
) -> Result<(), CodebookError> {
    let ris = scenario.ris();
    writeln!(w, "{FORMAT_TAG}")?;
    writeln!(w, "scenario_hash={}", scenario_hash(scenario))?;
    writeln!(w, "wavelength_m={}", scenario.wavelength())?;
    writeln!(w, "rows={}", ris.rows())?;
    writeln!(w, "cols={}", ris.cols())?;
    writeln!(w, "entries={}", records.len())?;
    let mut header = String::from("index_p,psi_deg");
    for m in 1..=ris.len() {
        let _ = write!(header, ",v{m}");
    }
    writeln!(w, "{header}")?;
    let mut line = String::new();
    for r in records {
        line.clear();
        let _ = write!(line, "{},{}", r.index_p, r.psi_deg);
        for v in &r.voltages {
            let _ = write!(line, ",{v:.3}");
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_codebook<R: BufRead>(
    r: R,
) -> Result<(CodebookHeader, Vec<CodebookRecord>), CodebookError> {
    let mut lines = r.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String), CodebookError> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((_, Err(e))) => Err(e.into()),
            None => Err(CodebookError::Parse {
                line: 0,
                reason: format!("missing {what}"),
            }),
        }
    };
    let perr = |line: usize, reason: String| CodebookError::Parse { line, reason };

    let (n, tag) = next("format tag")?;
    if tag.trim() != FORMAT_TAG {
        return Err(perr(n, format!("expected `{FORMAT_TAG}`")));
    }
    let mut field = |key: &str| -> Result<(usize, String), CodebookError> {
        let (n, l) = next(key)?;
        match l.split_once('=') {
            Some((k, v)) if k.trim() == key => Ok((n, v.trim().to_string())),
            _ => Err(perr(n, format!("expected `{key}=`"))),
        }
    };
    let (_, scenario_hash) = field("scenario_hash")?;
    let (n_wl, wl) = field("wavelength_m")?;
    let (n_rows, rows) = field("rows")?;
    let (n_cols, cols) = field("cols")?;
    let (n_entries, entries) = field("entries")?;
    let header = CodebookHeader {
        scenario_hash,
        wavelength: wl.parse().map_err(|_| perr(n_wl, "bad wavelength".into()))?,
        rows: rows.parse().map_err(|_| perr(n_rows, "bad rows".into()))?,
        cols: cols.parse().map_err(|_| perr(n_cols, "bad cols".into()))?,
        entries: entries
            .parse()
            .map_err(|_| perr(n_entries, "bad entry count".into()))?,
    };
    let cells = header.rows * header.cols;
    let (n, _columns) = next("column header")?;
    let _ = n;

    let mut records = Vec::with_capacity(header.entries);
    for (i, l) in lines {
        let n = i + 1;
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        let mut parts = l.split(',');
        let index_p = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| perr(n, "bad index_p".into()))?;
        let psi_deg = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| perr(n, "bad psi_deg".into()))?;
        let voltages = parts
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| perr(n, format!("bad voltage: {e}")))?;
        if voltages.len() != cells {
            return Err(perr(
                n,
                format!("expected {cells} voltages, found {}", voltages.len()),
            ));
        }
        records.push(CodebookRecord {
            index_p,
            psi_deg,
            voltages,
        });
    }
    if records.len() != header.entries {
        return Err(perr(
            0,
            format!("header says {} entries, found {}", header.entries, records.len()),
        ));
    }
    Ok((header, records))
}
