//! Measured unit-cell reflection response.
//!
//! The cell is characterized by a table of `(voltage, amplitude_db, phase_deg)`
//! samples. Between samples the amplitude (in dB) and the *unwrapped* phase are
//! interpolated linearly in voltage, so the wrapped phase is only produced at
//! the output boundary. The model is single-frequency and angle-independent
//! inside the angular validity cone described by [`AngularDomain`].

use std::io::Read;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wrap_deg;

/// Measured reflection of the prototype cell over its 0–5 V control range.
///
/// Rows are `(voltage [V], amplitude [dB], phase [deg])`.
pub const PROTOTYPE_TABLE: [(f64, f64, f64); 14] = [
    (0.0, -1.517, 32.798),
    (0.25, -1.807, 40.854),
    (0.5, -3.156, 46.807),
    (0.75, -5.59, 53.543),
    (1.0, -9.576, 70.32),
    (1.25, -20.563, -167.158),
    (1.5, -6.615, -73.171),
    (1.75, -3.029, -49.627),
    (2.0, -1.959, -35.908),
    (2.5, -0.874, -23.263),
    (3.0, -0.749, -16.087),
    (3.5, -0.469, -12.663),
    (4.0, -0.528, -9.925),
    (5.0, -0.439, -6.906),
];

#[derive(Debug, Error, PartialEq)]
pub enum CellModelError {
    #[error("cell table is empty")]
    Empty,
    #[error("cell table needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("voltage at row {index} is not strictly greater than the previous row")]
    NonIncreasingVoltage { index: usize },
    #[error("non-finite value at row {index}")]
    NonFinite { index: usize },
    #[error("phase {phase_deg} at row {index} is outside (-180, 180]")]
    PhaseOutOfRange { index: usize, phase_deg: f64 },
    #[error("voltage {voltage} V is outside the table range [{min}, {max}] V")]
    VoltageOutOfRange { voltage: f64, min: f64, max: f64 },
    #[error("unit-cell gain must be finite and non-negative, got {0}")]
    InvalidGain(f64),
    #[error("failed to read cell table: {0}")]
    Csv(String),
}

/// One measured point of the cell response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSample {
    pub voltage: f64,
    pub amplitude_db: f64,
    pub phase_deg: f64,
}

impl CellSample {
    pub fn new(voltage: f64, amplitude_db: f64, phase_deg: f64) -> Self {
        Self {
            voltage,
            amplitude_db,
            phase_deg,
        }
    }
}

/// Angular cone inside which the cell response is treated as angle-independent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularDomain {
    max_deflection_deg: f64,
}

impl AngularDomain {
    pub const DEFAULT_MAX_DEFLECTION_DEG: f64 = 40.0;

    pub fn new(max_deflection_deg: f64) -> Option<Self> {
        (max_deflection_deg > 0.0 && max_deflection_deg <= 90.0)
            .then_some(Self { max_deflection_deg })
    }

    pub fn max_deflection_deg(&self) -> f64 {
        self.max_deflection_deg
    }

    /// Strict: an angle equal to the bound is outside the domain.
    pub fn contains(&self, angle_deg: f64) -> bool {
        angle_deg < self.max_deflection_deg
    }
}

impl Default for AngularDomain {
    fn default() -> Self {
        Self {
            max_deflection_deg: Self::DEFAULT_MAX_DEFLECTION_DEG,
        }
    }
}

/// Result of inverting the phase response for one target phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseInversion {
    pub voltage: f64,
    /// Wrapped to (-180, 180].
    pub achieved_phase_deg: f64,
    pub achieved_amplitude_db: f64,
    /// Signed circular error `wrap(achieved - target)`.
    pub error_deg: f64,
}

/// Arc of wrapped phases that no control voltage reaches.
///
/// The arc runs counter-clockwise from `lo_deg` to `hi_deg`. With full
/// coverage `width_deg` is 0 and both ends coincide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseGap {
    pub lo_deg: f64,
    pub hi_deg: f64,
    pub width_deg: f64,
}

impl PhaseGap {
    /// Largest circular error a phase-only inversion can incur.
    pub fn worst_case_error_deg(&self) -> f64 {
        self.width_deg / 2.0
    }

    pub fn midpoint_deg(&self) -> f64 {
        wrap_deg(self.lo_deg + self.width_deg / 2.0)
    }
}

/// Interpolated voltage → complex reflection map with inverse lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResponseModel {
    samples: Vec<CellSample>,
    unwrapped_phase_deg: Vec<f64>,
    g0: f64,
}

impl CellResponseModel {
    /// Builds a model from samples sorted by strictly increasing voltage.
    pub fn from_samples(samples: Vec<CellSample>) -> Result<Self, CellModelError> {
        match samples.len() {
            0 => return Err(CellModelError::Empty),
            1 => return Err(CellModelError::TooFewSamples(1)),
            _ => {}
        }
        for (index, s) in samples.iter().enumerate() {
            if !(s.voltage.is_finite() && s.amplitude_db.is_finite() && s.phase_deg.is_finite()) {
                return Err(CellModelError::NonFinite { index });
            }
            if !(s.phase_deg > -180.0 && s.phase_deg <= 180.0) {
                return Err(CellModelError::PhaseOutOfRange {
                    index,
                    phase_deg: s.phase_deg,
                });
            }
            if index > 0 && s.voltage <= samples[index - 1].voltage {
                return Err(CellModelError::NonIncreasingVoltage { index });
            }
        }

        // Minimal-jump unwrapping: each sample is shifted by a whole number of
        // turns so that the step from its predecessor lies in (-180, 180].
        let mut unwrapped: Vec<f64> = Vec::with_capacity(samples.len());
        unwrapped.push(samples[0].phase_deg);
        for pair in samples.windows(2) {
            let prev = *unwrapped.last().unwrap();
            let shifted = prev + wrap_deg(pair[1].phase_deg - pair[0].phase_deg);
            let turns = ((shifted - pair[1].phase_deg) / 360.0).round();
            unwrapped.push(pair[1].phase_deg + 360.0 * turns);
        }

        Ok(Self {
            samples,
            unwrapped_phase_deg: unwrapped,
            g0: 1.0,
        })
    }

    /// The 14-row prototype characterization, verbatim.
    pub fn prototype() -> Self {
        let samples = PROTOTYPE_TABLE
            .iter()
            .map(|&(v, a, p)| CellSample::new(v, a, p))
            .collect();
        Self::from_samples(samples).expect("prototype table is valid")
    }

    /// Reads a CSV table with header `voltage,amplitude_db,phase_deg`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, CellModelError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| CellModelError::Csv(e.to_string()))?
            .clone();
        let expected = ["voltage", "amplitude_db", "phase_deg"];
        if headers.iter().ne(expected.iter().copied()) {
            return Err(CellModelError::Csv(format!(
                "expected header `voltage,amplitude_db,phase_deg`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let samples = rdr
            .deserialize::<CellSample>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CellModelError::Csv(e.to_string()))?;
        Self::from_samples(samples)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self, CellModelError> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| {
            CellModelError::Csv(format!("{}: {e}", path.as_ref().display()))
        })?;
        Self::from_csv_reader(file)
    }

    pub fn with_gain(mut self, g0: f64) -> Result<Self, CellModelError> {
        if !(g0.is_finite() && g0 >= 0.0) {
            return Err(CellModelError::InvalidGain(g0));
        }
        self.g0 = g0;
        Ok(self)
    }

    pub fn samples(&self) -> &[CellSample] {
        &self.samples
    }

    pub fn unwrapped_phase_deg(&self) -> &[f64] {
        &self.unwrapped_phase_deg
    }

    pub fn gain(&self) -> f64 {
        self.g0
    }

    pub fn min_voltage(&self) -> f64 {
        self.samples[0].voltage
    }

    pub fn max_voltage(&self) -> f64 {
        self.samples[self.samples.len() - 1].voltage
    }

    /// Locates `v` as `(segment, t)` with `t` in [0, 1]. Nodes map to `t == 0`
    /// (or the last segment with `t == 1` for the final node).
    fn locate(&self, v: f64) -> Result<(usize, f64), CellModelError> {
        let (min, max) = (self.min_voltage(), self.max_voltage());
        if !(v >= min && v <= max) {
            return Err(CellModelError::VoltageOutOfRange {
                voltage: v,
                min,
                max,
            });
        }
        let n = self.samples.len();
        // First node strictly above v, so an exact node hit gives t == 0.
        let upper = self.samples.partition_point(|s| s.voltage <= v);
        if upper >= n {
            return Ok((n - 2, 1.0));
        }
        let seg = upper - 1;
        let (v0, v1) = (self.samples[seg].voltage, self.samples[seg + 1].voltage);
        Ok((seg, (v - v0) / (v1 - v0)))
    }

    fn lerp(a: f64, b: f64, t: f64) -> f64 {
        if t == 0.0 {
            a
        } else if t == 1.0 {
            b
        } else {
            a + t * (b - a)
        }
    }

    pub fn amplitude_db(&self, v: f64) -> Result<f64, CellModelError> {
        let (seg, t) = self.locate(v)?;
        Ok(Self::lerp(
            self.samples[seg].amplitude_db,
            self.samples[seg + 1].amplitude_db,
            t,
        ))
    }

    pub fn unwrapped_phase_at(&self, v: f64) -> Result<f64, CellModelError> {
        let (seg, t) = self.locate(v)?;
        Ok(Self::lerp(
            self.unwrapped_phase_deg[seg],
            self.unwrapped_phase_deg[seg + 1],
            t,
        ))
    }

    /// Wrapped phase in (-180, 180]. Returns the tabulated value at nodes.
    pub fn phase_deg(&self, v: f64) -> Result<f64, CellModelError> {
        let (seg, t) = self.locate(v)?;
        if t == 0.0 {
            return Ok(self.samples[seg].phase_deg);
        }
        if t == 1.0 {
            return Ok(self.samples[seg + 1].phase_deg);
        }
        Ok(wrap_deg(Self::lerp(
            self.unwrapped_phase_deg[seg],
            self.unwrapped_phase_deg[seg + 1],
            t,
        )))
    }

    /// `g0 · 10^(A(v)/20) · exp(j Φ(v))`, no extrapolation outside the table.
    pub fn reflection_coefficient(&self, v: f64) -> Result<Complex64, CellModelError> {
        let amp = self.g0 * 10f64.powf(self.amplitude_db(v)? / 20.0);
        let phase = self.phase_deg(v)?.to_radians();
        Ok(Complex64::from_polar(amp, phase))
    }

    /// Picks the voltage whose phase is circularly closest to `target_phase_deg`.
    ///
    /// Amplitude is ignored when choosing; the amplitude at the chosen voltage
    /// is reported. When several voltages hit the target exactly, the lowest
    /// one wins.
    pub fn voltage_for_phase(&self, target_phase_deg: f64) -> PhaseInversion {
        let target = wrap_deg(target_phase_deg);
        let u = &self.unwrapped_phase_deg;

        for seg in 0..self.samples.len() - 1 {
            let (u0, u1) = (u[seg], u[seg + 1]);
            let (lo, hi) = if u0 <= u1 { (u0, u1) } else { (u1, u0) };
            // Smallest representative of the target inside [lo, hi], if any.
            let k = ((lo - target) / 360.0).ceil();
            let candidate = target + 360.0 * k;
            if candidate > hi {
                continue;
            }
            let voltage = if candidate == u0 {
                self.samples[seg].voltage
            } else if candidate == u1 {
                self.samples[seg + 1].voltage
            } else {
                let t = (candidate - u0) / (u1 - u0);
                let (v0, v1) = (self.samples[seg].voltage, self.samples[seg + 1].voltage);
                v0 + t * (v1 - v0)
            };
            return self.inversion_at(voltage, target);
        }

        // Unreachable target: the closest achievable phase sits on a node.
        let best = self
            .samples
            .iter()
            .min_by(|a, b| {
                let da = wrap_deg(a.phase_deg - target).abs();
                let db = wrap_deg(b.phase_deg - target).abs();
                da.total_cmp(&db)
            })
            .expect("at least two samples");
        self.inversion_at(best.voltage, target)
    }

    fn inversion_at(&self, voltage: f64, target: f64) -> PhaseInversion {
        let achieved = self.phase_deg(voltage).expect("voltage inside table");
        PhaseInversion {
            voltage,
            achieved_phase_deg: achieved,
            achieved_amplitude_db: self.amplitude_db(voltage).expect("voltage inside table"),
            error_deg: wrap_deg(achieved - target),
        }
    }

    /// The arc of wrapped phases not reached by any voltage in the table range.
    pub fn achievable_phase_gap(&self) -> PhaseGap {
        let (min, max) = self
            .unwrapped_phase_deg
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(p), hi.max(p))
            });
        let span = max - min;
        if span >= 360.0 {
            let at = wrap_deg(min);
            return PhaseGap {
                lo_deg: at,
                hi_deg: at,
                width_deg: 0.0,
            };
        }
        PhaseGap {
            lo_deg: wrap_deg(max),
            hi_deg: wrap_deg(min),
            width_deg: 360.0 - span,
        }
    }
}

impl Default for CellResponseModel {
    fn default() -> Self {
        Self::prototype()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_sample() -> CellResponseModel {
        CellResponseModel::from_samples(vec![
            CellSample::new(0.0, 0.0, 0.0),
            CellSample::new(1.0, 0.0, 10.0),
        ])
        .unwrap()
    }

    #[test]
    fn prototype_node_values() {
        let m = CellResponseModel::prototype();
        assert_eq!(m.samples().len(), 14);
        assert_eq!(m.amplitude_db(1.25).unwrap(), -20.563);
        assert!((m.unwrapped_phase_at(1.25).unwrap() - 192.842).abs() < 1e-12);
    }

    #[test]
    fn unwrap_matches_hand_oracle() {
        // Samples from 1.25 V onward gain one full turn; earlier ones none.
        let m = CellResponseModel::prototype();
        for (i, (s, u)) in m.samples().iter().zip(m.unwrapped_phase_deg()).enumerate() {
            let expected = if s.voltage >= 1.25 {
                s.phase_deg + 360.0
            } else {
                s.phase_deg
            };
            assert_eq!(*u, expected, "row {i}");
        }
        assert_eq!(m.unwrapped_phase_deg()[0], 32.798);
        assert!((m.unwrapped_phase_deg()[13] - 353.094).abs() < 1e-12);
        assert!(m.unwrapped_phase_deg().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn two_sample_model_without_wrap() {
        let m = two_sample();
        assert_eq!(m.unwrapped_phase_deg(), &[0.0, 10.0]);
    }

    #[test]
    fn load_rejects_bad_tables() {
        assert_eq!(
            CellResponseModel::from_samples(vec![]),
            Err(CellModelError::Empty)
        );
        assert_eq!(
            CellResponseModel::from_samples(vec![CellSample::new(0.0, 0.0, 0.0)]),
            Err(CellModelError::TooFewSamples(1))
        );
        let dup = vec![
            CellSample::new(0.0, 0.0, 0.0),
            CellSample::new(1.0, 0.0, 0.0),
            CellSample::new(1.0, 0.0, 0.0),
        ];
        assert_eq!(
            CellResponseModel::from_samples(dup),
            Err(CellModelError::NonIncreasingVoltage { index: 2 })
        );
        let unsorted = vec![CellSample::new(1.0, 0.0, 0.0), CellSample::new(0.5, 0.0, 0.0)];
        assert_eq!(
            CellResponseModel::from_samples(unsorted),
            Err(CellModelError::NonIncreasingVoltage { index: 1 })
        );
        let bad_phase = vec![CellSample::new(0.0, 0.0, -180.0), CellSample::new(1.0, 0.0, 0.0)];
        assert!(matches!(
            CellResponseModel::from_samples(bad_phase),
            Err(CellModelError::PhaseOutOfRange { index: 0, .. })
        ));
    }

    #[test]
    fn endpoint_reflections() {
        let m = CellResponseModel::prototype();
        let r0 = m.reflection_coefficient(0.0).unwrap();
        assert!((r0.norm() - 10f64.powf(-1.517 / 20.0)).abs() < 1e-15);
        assert!((r0.arg().to_degrees() - 32.798).abs() < 1e-12);
        let r5 = m.reflection_coefficient(5.0).unwrap();
        assert!((r5.norm() - 0.950_7).abs() < 1e-4);
        assert!((r5.arg().to_degrees() + 6.906).abs() < 1e-12);
    }

    #[test]
    fn midpoint_of_first_segment() {
        let m = CellResponseModel::prototype();
        // (-1.517 + -1.807) / 2 and (32.798 + 40.854) / 2
        assert!((m.amplitude_db(0.125).unwrap() + 1.662).abs() < 1e-12);
        assert!((m.phase_deg(0.125).unwrap() - 36.826).abs() < 1e-12);
    }

    #[test]
    fn no_extrapolation() {
        let m = CellResponseModel::prototype();
        assert!(matches!(
            m.reflection_coefficient(-0.01),
            Err(CellModelError::VoltageOutOfRange { .. })
        ));
        assert!(m.reflection_coefficient(5.0001).is_err());
        assert!(m.reflection_coefficient(f64::NAN).is_err());
    }

    #[test]
    fn inversion_examples() {
        let m = CellResponseModel::prototype();
        let a = m.voltage_for_phase(32.798);
        assert_eq!(a.voltage, 0.0);
        assert_eq!(a.error_deg, 0.0);

        let b = m.voltage_for_phase(-35.908);
        assert_eq!(b.voltage, 2.0);
        assert!(b.error_deg.abs() < 1e-12);

        let c = m.voltage_for_phase(0.0);
        assert_eq!(c.voltage, 5.0);
        assert_eq!(c.achieved_phase_deg, -6.906);
        assert!((c.error_deg + 6.906).abs() < 1e-12);
        assert!((c.achieved_amplitude_db + 0.439).abs() < 1e-12);
    }

    #[test]
    fn inversion_matches_dense_scan() {
        // Exhaustive scan oracle: circular distance over a 1e-4 V grid.
        let m = CellResponseModel::prototype();
        let grid: Vec<f64> = (0..=50_000).map(|k| k as f64 * 1e-4).collect();
        for target in [0.0, 5.0, 12.0, 20.0, 30.0, -100.0, 150.0] {
            let best = grid
                .iter()
                .map(|&v| wrap_deg(m.phase_deg(v).unwrap() - target).abs())
                .fold(f64::INFINITY, f64::min);
            let inv = m.voltage_for_phase(target);
            // The scan can only miss the optimum, never beat it.
            assert!(
                inv.error_deg.abs() <= best + 1e-9 && best - inv.error_deg.abs() < 0.05,
                "target {target}: {} vs scan {best}",
                inv.error_deg
            );
        }
    }

    #[test]
    fn gap_examples() {
        let gap = CellResponseModel::prototype().achievable_phase_gap();
        assert!((gap.width_deg - 39.704).abs() < 1e-9);
        assert!((gap.lo_deg + 6.906).abs() < 1e-12);
        assert_eq!(gap.hi_deg, 32.798);
        assert!((gap.worst_case_error_deg() - 19.852).abs() < 1e-9);

        let gap = two_sample().achievable_phase_gap();
        assert!((gap.width_deg - 350.0).abs() < 1e-12);

        let full = CellResponseModel::from_samples(vec![
            CellSample::new(0.0, 0.0, 0.0),
            CellSample::new(1.0, 0.0, 120.0),
            CellSample::new(2.0, 0.0, -120.0),
            CellSample::new(3.0, 0.0, 0.0),
        ])
        .unwrap();
        assert_eq!(full.achievable_phase_gap().width_deg, 0.0);
    }

    #[test]
    fn csv_roundtrip_and_header_check() {
        let text = "voltage,amplitude_db,phase_deg\n0,0,0\n1,0,10\n";
        let m = CellResponseModel::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(m, two_sample());

        let bad = "v,a,p\n0,0,0\n1,0,10\n";
        assert!(matches!(
            CellResponseModel::from_csv_reader(bad.as_bytes()),
            Err(CellModelError::Csv(_))
        ));
        let garbage = "voltage,amplitude_db,phase_deg\n0,x,0\n";
        assert!(CellResponseModel::from_csv_reader(garbage.as_bytes()).is_err());
    }

    #[test]
    fn angular_domain_is_strict() {
        let d = AngularDomain::default();
        assert!(d.contains(39.999));
        assert!(!d.contains(40.0));
        assert!(AngularDomain::new(0.0).is_none());
        assert!(AngularDomain::new(91.0).is_none());
        assert!(AngularDomain::new(90.0).is_some());
    }
}
