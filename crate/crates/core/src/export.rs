//! CSV and 8-bit PGM writers for field maps, BER sweeps and cell curves.

use std::io::{self, Write};

use crate::ambc_link::BerSweepResult;
use crate::cell_model::{CellModelError, CellResponseModel};
use crate::propagation::FieldMapGrid;

/// Magnitude in dB; exact zeros map to `-inf`.
pub fn magnitude_db(z: num_complex::Complex64) -> f64 {
    20.0 * z.norm().log10()
}

/// `u_index,v_index,re,im,mag_db`, rows ordered by `v` then `u`.
pub fn write_field_map_csv<W: Write>(mut w: W, map: &FieldMapGrid) -> io::Result<()> {
    writeln!(w, "u_index,v_index,re,im,mag_db")?;
    for v in 0..map.spec.nv {
        for u in 0..map.spec.nu {
            let z = map.get(u, v);
            writeln!(w, "{u},{v},{:e},{:e},{:.6}", z.re, z.im, magnitude_db(z))?;
        }
    }
    Ok(())
}

/// Binary PGM (P5) of `values` (row-major, `width × height`), min–max
/// normalized to 0–255. Non-finite values are drawn black and excluded from
/// the range; a constant image is all black.
pub fn write_pgm<W: Write>(mut w: W, width: usize, height: usize, values: &[f64]) -> io::Result<()> {
    assert_eq!(values.len(), width * height, "pgm size mismatch");
    let (lo, hi) = values
        .iter()
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let span = hi - lo;
    write!(w, "P5\n{width} {height}\n255\n")?;
    let pixels: Vec<u8> = values
        .iter()
        .map(|&x| {
            if !x.is_finite() || !(span > 0.0) {
                0
            } else {
                (((x - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8
            }
        })
        .collect();
    w.write_all(&pixels)
}

pub fn write_field_map_pgm<W: Write>(w: W, map: &FieldMapGrid) -> io::Result<()> {
    let db: Vec<f64> = map.values.iter().map(|&z| magnitude_db(z)).collect();
    write_pgm(w, map.spec.nu, map.spec.nv, &db)
}

/// `index_p,psi_deg,ber`; failed entries are skipped.
pub fn write_ber_csv<W: Write>(mut w: W, sweep: &BerSweepResult) -> io::Result<()> {
    writeln!(w, "index_p,psi_deg,ber")?;
    for (r, p) in sweep.index_p.iter().enumerate() {
        for (c, psi) in sweep.psi_deg.iter().enumerate() {
            if let Some(b) = sweep.ber[r][c] {
                writeln!(w, "{p},{psi},{b:e}")?;
            }
        }
    }
    Ok(())
}

/// Heatmap with one row per target and one column per `ψ`.
pub fn write_ber_pgm<W: Write>(w: W, sweep: &BerSweepResult) -> io::Result<()> {
    let values: Vec<f64> = sweep
        .ber
        .iter()
        .flat_map(|row| row.iter().map(|b| b.unwrap_or(f64::NAN)))
        .collect();
    write_pgm(w, sweep.psi_deg.len(), sweep.index_p.len(), &values)
}

/// Voltages `min, min + step, …` plus `max` when the last step falls short.
pub fn voltage_grid(min: f64, max: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0, "grid step must be positive");
    let n = ((max - min) / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|k| (min + k as f64 * step).min(max)).collect();
    if max - grid[grid.len() - 1] > 1e-9 * step.max(1.0) {
        grid.push(max);
    }
    grid
}

/// `voltage,amplitude_db,phase_deg` sampled over `voltage_grid`. Grid points
/// within 1e-9 V of a table node are snapped onto it.
pub fn write_cell_curve_csv<W: Write>(
    mut w: W,
    model: &CellResponseModel,
    step: f64,
) -> Result<usize, CurveError> {
    let grid = voltage_grid(model.min_voltage(), model.max_voltage(), step);
    writeln!(w, "voltage,amplitude_db,phase_deg")?;
    for &v in &grid {
        let v = model
            .samples()
            .iter()
            .map(|s| s.voltage)
            .find(|n| (n - v).abs() < 1e-9)
            .unwrap_or(v);
        writeln!(
            w,
            "{v:.6},{:.6},{:.6}",
            model.amplitude_db(v)?,
            model.phase_deg(v)?
        )?;
    }
    Ok(grid.len())
}

#[derive(Debug, thiserror::Error)]
pub enum CurveError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Model(#[from] CellModelError),
}
