//! Placement of the source, tag, reader and the reflecting array.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell_model::AngularDomain;

/// Distances shorter than this are treated as coincident points.
pub const MIN_DISTANCE_M: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("array must have at least one row and one column")]
    EmptyArray,
    #[error("pitch must be positive, got {0}")]
    InvalidPitch(f64),
    #[error("{0} must be a unit vector")]
    NotUnit(&'static str),
    #[error("row axis must be orthogonal to the array normal")]
    NotOrthogonal,
    #[error("wavelength must be positive, got {0}")]
    InvalidWavelength(f64),
    #[error("{0} is not in front of the array plane")]
    BehindArray(&'static str),
    #[error("point coincides with cell {cell}")]
    CoincidentWithCell { cell: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Self = Self::new(0.0, 0.0, 0.0);
    pub const X: Self = Self::new(1.0, 0.0, 0.0);
    pub const Y: Self = Self::new(0.0, 1.0, 0.0);
    pub const Z: Self = Self::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Self) -> f64 {
        (self - o).norm()
    }

    pub fn normalized(self) -> Self {
        self * (1.0 / self.norm())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Angle to `o` in degrees, computed with `atan2` for accuracy near 0 and 90.
    pub fn angle_deg(self, o: Self) -> f64 {
        self.cross(o).norm().atan2(self.dot(o)).to_degrees()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Neg for Vec3 {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

const UNIT_TOL: f64 = 1e-9;

/// Planar grid of identical cells.
///
/// Row index `i` advances along `row_axis`, column index `j` along
/// `normal × row_axis`. Cells are numbered row-major, `m = i * cols + j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisArray {
    rows: usize,
    cols: usize,
    pitch: f64,
    center: Vec3,
    normal: Vec3,
    row_axis: Vec3,
}

impl RisArray {
    pub const DEFAULT_ROWS: usize = 14;
    pub const DEFAULT_COLS: usize = 14;
    pub const DEFAULT_PITCH_M: f64 = 0.014;

    pub fn new(
        rows: usize,
        cols: usize,
        pitch: f64,
        center: Vec3,
        normal: Vec3,
        row_axis: Vec3,
    ) -> Result<Self, GeometryError> {
        if rows == 0 || cols == 0 {
            return Err(GeometryError::EmptyArray);
        }
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(GeometryError::InvalidPitch(pitch));
        }
        for (v, name) in [(center, "center"), (normal, "normal"), (row_axis, "row_axis")] {
            if !v.is_finite() {
                return Err(GeometryError::NonFinite(name));
            }
        }
        if (normal.norm() - 1.0).abs() > UNIT_TOL {
            return Err(GeometryError::NotUnit("normal"));
        }
        if (row_axis.norm() - 1.0).abs() > UNIT_TOL {
            return Err(GeometryError::NotUnit("row_axis"));
        }
        if normal.dot(row_axis).abs() > UNIT_TOL {
            return Err(GeometryError::NotOrthogonal);
        }
        Ok(Self {
            rows,
            cols,
            pitch,
            center,
            normal,
            row_axis,
        })
    }

    /// Array in the z = 0 plane facing +z, rows along +x.
    pub fn square(n: usize, pitch: f64) -> Result<Self, GeometryError> {
        Self::new(n, n, pitch, Vec3::ZERO, Vec3::Z, Vec3::X)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    pub fn row_axis(&self) -> Vec3 {
        self.row_axis
    }

    pub fn col_axis(&self) -> Vec3 {
        self.normal.cross(self.row_axis)
    }

    /// Signed distance of `p` from the array plane, positive in front.
    pub fn height_of(&self, p: Vec3) -> f64 {
        (p - self.center).dot(self.normal)
    }

    pub fn is_in_front(&self, p: Vec3) -> bool {
        self.height_of(p) > 0.0
    }

    pub fn cell_center(&self, m: usize) -> Vec3 {
        let (i, j) = (m / self.cols, m % self.cols);
        let du = (i as f64 - (self.rows as f64 - 1.0) / 2.0) * self.pitch;
        let dv = (j as f64 - (self.cols as f64 - 1.0) / 2.0) * self.pitch;
        self.center + self.row_axis * du + self.col_axis() * dv
    }

    pub fn cell_centers(&self) -> Vec<Vec3> {
        (0..self.len()).map(|m| self.cell_center(m)).collect()
    }

    /// `(|a - c_m|, |c_m - b|)` for every cell `m`.
    pub fn path_lengths(&self, a: Vec3, b: Vec3) -> Result<Vec<(f64, f64)>, GeometryError> {
        self.cell_centers()
            .into_iter()
            .enumerate()
            .map(|(cell, c)| {
                let (da, db) = (a.distance(c), c.distance(b));
                if da < MIN_DISTANCE_M || db < MIN_DISTANCE_M {
                    Err(GeometryError::CoincidentWithCell { cell })
                } else {
                    Ok((da, db))
                }
            })
            .collect()
    }
}

impl Default for RisArray {
    fn default() -> Self {
        Self::square(Self::DEFAULT_ROWS, Self::DEFAULT_PITCH_M).expect("default array is valid")
    }
}

/// Source, tag and reader positions around one array, plus the carrier wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGeometry {
    ris: RisArray,
    source: Vec3,
    tag: Vec3,
    reader: Vec3,
    wavelength: f64,
}

impl ScenarioGeometry {
    /// About 5.45 GHz, mid-band of the 5.15–5.75 GHz prototype.
    pub const DEFAULT_WAVELENGTH_M: f64 = 0.055;

    pub fn new(
        ris: RisArray,
        source: Vec3,
        tag: Vec3,
        reader: Vec3,
        wavelength: f64,
    ) -> Result<Self, GeometryError> {
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(GeometryError::InvalidWavelength(wavelength));
        }
        for (p, name) in [(source, "source"), (tag, "tag"), (reader, "reader")] {
            if !p.is_finite() {
                return Err(GeometryError::NonFinite(name));
            }
            if !ris.is_in_front(p) {
                return Err(GeometryError::BehindArray(name));
            }
        }
        Ok(Self {
            ris,
            source,
            tag,
            reader,
            wavelength,
        })
    }

    /// Reference testbed: 14×14 array at the origin facing +z, source 2 m
    /// on boresight, tag 1.5 m away at 20° deflection in the x–z plane,
    /// reader 1.5 m away at 25° on the opposite side, out of the x–z plane.
    pub fn testbed() -> Self {
        let tag_angle = 20f64.to_radians();
        let tag = Vec3::new(1.5 * tag_angle.sin(), 0.0, 1.5 * tag_angle.cos());
        let reader_dir = Vec3::new(-0.8, 0.6, 0.0) * 25f64.to_radians().sin()
            + Vec3::Z * 25f64.to_radians().cos();
        Self::new(
            RisArray::default(),
            Vec3::new(0.0, 0.0, 2.0),
            tag,
            reader_dir * 1.5,
            Self::DEFAULT_WAVELENGTH_M,
        )
        .expect("testbed geometry is valid")
    }

    pub fn ris(&self) -> &RisArray {
        &self.ris
    }

    pub fn source(&self) -> Vec3 {
        self.source
    }

    pub fn tag(&self) -> Vec3 {
        self.tag
    }

    pub fn reader(&self) -> Vec3 {
        self.reader
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn with_wavelength(mut self, wavelength: f64) -> Result<Self, GeometryError> {
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(GeometryError::InvalidWavelength(wavelength));
        }
        self.wavelength = wavelength;
        Ok(self)
    }

    /// Per-cell incidence (from `src`) and departure (towards `dst`) angles.
    pub fn deflection_report(
        &self,
        src: Vec3,
        dst: Vec3,
        domain: AngularDomain,
    ) -> Vec<CellDeflection> {
        deflection_report(&self.ris, src, dst, domain)
    }
}

impl Default for ScenarioGeometry {
    fn default() -> Self {
        Self::testbed()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellDeflection {
    pub incidence_deg: f64,
    pub departure_deg: f64,
    pub in_domain: bool,
}

pub fn deflection_report(
    ris: &RisArray,
    src: Vec3,
    dst: Vec3,
    domain: AngularDomain,
) -> Vec<CellDeflection> {
    let n = ris.normal();
    ris.cell_centers()
        .into_iter()
        .map(|c| {
            let incidence_deg = (src - c).angle_deg(n);
            let departure_deg = (dst - c).angle_deg(n);
            CellDeflection {
                incidence_deg,
                departure_deg,
                in_domain: domain.contains(incidence_deg) && domain.contains(departure_deg),
            }
        })
        .collect()
}
