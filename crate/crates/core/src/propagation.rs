//! Free-space cascaded scattering through the array.
//!
//! Each cell contributes `G(d_in) · r_m · G(d_out)` with
//! `G(d) = λ e^{+j2πd/λ} / (4πd)`. The positive exponent is kept as is;
//! only phase differences matter downstream.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::cell_model::{CellModelError, CellResponseModel};
use crate::geometry::{GeometryError, RisArray, ScenarioGeometry, Vec3, MIN_DISTANCE_M};

/// Complex field ratio of one propagation hop.
pub type ComplexGain = Complex64;

#[derive(Debug, Error, PartialEq)]
pub enum PropagationError {
    #[error("propagation distance must be positive, got {0} m")]
    Singularity(f64),
    #[error("wavelength must be positive, got {0}")]
    InvalidWavelength(f64),
    #[error("configuration has {got} voltages, array has {expected} cells")]
    ConfigLength { expected: usize, got: usize },
    #[error("cell {cell}: {source}")]
    Cell {
        cell: usize,
        #[source]
        source: CellModelError,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("grid axes must be orthogonal unit vectors")]
    GridAxes,
    #[error("grid needs at least one node along each axis")]
    EmptyGrid,
    #[error("grid node ({u}, {v}) is not in front of the array plane")]
    GridBehindArray { u: usize, v: usize },
    #[error("grid node ({u}, {v}): {source}")]
    Node {
        u: usize,
        v: usize,
        #[source]
        source: Box<PropagationError>,
    },
}

/// `λ e^{j2πd/λ} / (4πd)`.
///
/// The phase is reduced to the fractional number of wavelengths first, so
/// long paths keep full phase precision.
pub fn free_space_gain(d: f64, wavelength: f64) -> Result<ComplexGain, PropagationError> {
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return Err(PropagationError::InvalidWavelength(wavelength));
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(PropagationError::Singularity(d));
    }
    let cycles = (d / wavelength).fract();
    Ok(Complex64::from_polar(
        wavelength / (4.0 * PI * d),
        2.0 * PI * cycles,
    ))
}

/// Control voltage of every cell, row-major like [`RisArray::cell_centers`].
#[derive(Debug, Clone, PartialEq)]
pub struct RisConfiguration {
    pub voltages: Vec<f64>,
}

impl RisConfiguration {
    pub fn new(voltages: Vec<f64>) -> Self {
        Self { voltages }
    }

    pub fn uniform(cells: usize, voltage: f64) -> Self {
        Self {
            voltages: vec![voltage; cells],
        }
    }

    pub fn len(&self) -> usize {
        self.voltages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voltages.is_empty()
    }

    /// Per-cell reflection coefficients under `model`.
    pub fn reflections(
        &self,
        model: &CellResponseModel,
        cells: usize,
    ) -> Result<SurfaceResponse, PropagationError> {
        if self.voltages.len() != cells {
            return Err(PropagationError::ConfigLength {
                expected: cells,
                got: self.voltages.len(),
            });
        }
        self.voltages
            .iter()
            .enumerate()
            .map(|(cell, &v)| {
                model
                    .reflection_coefficient(v)
                    .map_err(|source| PropagationError::Cell { cell, source })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(SurfaceResponse)
    }
}

/// Reflection coefficient of each cell, resolved from a configuration or set
/// directly (e.g. an absorbing surface).
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceResponse(pub Vec<Complex64>);

impl SurfaceResponse {
    pub fn absorbing(cells: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); cells])
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.0
    }
}

/// Evaluates fields for a fixed array, surface state and wavelength.
///
/// Cell centers are computed once, which makes repeated evaluation (maps,
/// sweeps) cheap.
#[derive(Debug, Clone)]
pub struct FieldEvaluator {
    centers: Vec<Vec3>,
    reflections: Vec<Complex64>,
    wavelength: f64,
}

impl FieldEvaluator {
    pub fn new(
        ris: &RisArray,
        surface: SurfaceResponse,
        wavelength: f64,
    ) -> Result<Self, PropagationError> {
        if surface.0.len() != ris.len() {
            return Err(PropagationError::ConfigLength {
                expected: ris.len(),
                got: surface.0.len(),
            });
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(PropagationError::InvalidWavelength(wavelength));
        }
        Ok(Self {
            centers: ris.cell_centers(),
            reflections: surface.0,
            wavelength,
        })
    }

    pub fn from_config(
        scenario: &ScenarioGeometry,
        model: &CellResponseModel,
        config: &RisConfiguration,
    ) -> Result<Self, PropagationError> {
        let surface = config.reflections(model, scenario.ris().len())?;
        Self::new(scenario.ris(), surface, scenario.wavelength())
    }

    pub fn absorbing(scenario: &ScenarioGeometry) -> Self {
        let ris = scenario.ris();
        Self::new(ris, SurfaceResponse::absorbing(ris.len()), scenario.wavelength())
            .expect("validated scenario")
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn reflections(&self) -> &[Complex64] {
        &self.reflections
    }

    /// Per-cell terms `G(d_in) r_m G(d_out)` (without the source amplitude).
    pub fn contributions(
        &self,
        source: Vec3,
        observation: Vec3,
    ) -> Result<Vec<Complex64>, PropagationError> {
        self.centers
            .iter()
            .zip(&self.reflections)
            .enumerate()
            .map(|(cell, (&c, &r))| {
                let (d_in, d_out) = (source.distance(c), c.distance(observation));
                if d_in < MIN_DISTANCE_M || d_out < MIN_DISTANCE_M {
                    return Err(GeometryError::CoincidentWithCell { cell }.into());
                }
                Ok(free_space_gain(d_in, self.wavelength)?
                    * r
                    * free_space_gain(d_out, self.wavelength)?)
            })
            .collect()
    }

    /// Field scattered by the array at `observation`, summed in cell order.
    pub fn scattered(
        &self,
        e_source: Complex64,
        source: Vec3,
        observation: Vec3,
    ) -> Result<Complex64, PropagationError> {
        let sum: Complex64 = self.contributions(source, observation)?.into_iter().sum();
        Ok(e_source * sum)
    }

    pub fn direct(
        &self,
        e_source: Complex64,
        source: Vec3,
        observation: Vec3,
    ) -> Result<Complex64, PropagationError> {
        Ok(e_source * free_space_gain(source.distance(observation), self.wavelength)?)
    }

    pub fn total(
        &self,
        e_source: Complex64,
        source: Vec3,
        observation: Vec3,
        include_direct: bool,
    ) -> Result<Complex64, PropagationError> {
        let scattered = self.scattered(e_source, source, observation)?;
        if include_direct {
            Ok(scattered + self.direct(e_source, source, observation)?)
        } else {
            Ok(scattered)
        }
    }
}

/// Field at `observation` scattered by the array when lit from the scenario source.
pub fn scattered_field(
    e_source: Complex64,
    scenario: &ScenarioGeometry,
    model: &CellResponseModel,
    config: &RisConfiguration,
    observation: Vec3,
) -> Result<Complex64, PropagationError> {
    FieldEvaluator::from_config(scenario, model, config)?.scattered(
        e_source,
        scenario.source(),
        observation,
    )
}

/// Scattered field plus, optionally, the direct source → observation path.
pub fn total_field(
    e_source: Complex64,
    scenario: &ScenarioGeometry,
    model: &CellResponseModel,
    config: &RisConfiguration,
    observation: Vec3,
    include_direct: bool,
) -> Result<Complex64, PropagationError> {
    FieldEvaluator::from_config(scenario, model, config)?.total(
        e_source,
        scenario.source(),
        observation,
        include_direct,
    )
}

/// Rectangular raster `origin + iu·du·axis_u + iv·dv·axis_v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: Vec3,
    pub axis_u: Vec3,
    pub axis_v: Vec3,
    pub nu: usize,
    pub nv: usize,
    pub du: f64,
    pub dv: f64,
}

impl GridSpec {
    /// Square `width × width` raster of `n × n` nodes centered on `center`.
    pub fn centered(center: Vec3, axis_u: Vec3, axis_v: Vec3, width: f64, n: usize) -> Self {
        let step = if n > 1 { width / (n - 1) as f64 } else { 0.0 };
        let half = width / 2.0;
        let origin = if n > 1 {
            center - axis_u * half - axis_v * half
        } else {
            center
        };
        Self {
            origin,
            axis_u,
            axis_v,
            nu: n,
            nv: n,
            du: step,
            dv: step,
        }
    }

    /// Grid whose plane is perpendicular to the line from the array center to
    /// `center`, with `axis_u` kept horizontal with respect to the array rows.
    pub fn transverse(ris: &RisArray, center: Vec3, width: f64, n: usize) -> Self {
        let beam = (center - ris.center()).normalized();
        let mut axis_u = ris.col_axis().cross(beam);
        if axis_u.norm() < 1e-9 {
            axis_u = ris.row_axis().cross(beam);
        }
        let axis_u = axis_u.normalized();
        let axis_v = beam.cross(axis_u).normalized();
        Self::centered(center, axis_u, axis_v, width, n)
    }

    pub fn node(&self, u: usize, v: usize) -> Vec3 {
        self.origin + self.axis_u * (u as f64 * self.du) + self.axis_v * (v as f64 * self.dv)
    }

    fn validate(&self) -> Result<(), PropagationError> {
        if self.nu == 0 || self.nv == 0 {
            return Err(PropagationError::EmptyGrid);
        }
        let unit = |a: Vec3| (a.norm() - 1.0).abs() < 1e-9;
        if !unit(self.axis_u) || !unit(self.axis_v) || self.axis_u.dot(self.axis_v).abs() > 1e-9 {
            return Err(PropagationError::GridAxes);
        }
        Ok(())
    }

    /// Fails if any node lies on or behind the array plane. The nodes span a
    /// parallelogram, so checking the four corners is enough.
    pub fn check_in_front(&self, ris: &RisArray) -> Result<(), PropagationError> {
        self.validate()?;
        for (u, v) in [(0, 0), (self.nu - 1, 0), (0, self.nv - 1), (self.nu - 1, self.nv - 1)] {
            if !ris.is_in_front(self.node(u, v)) {
                return Err(PropagationError::GridBehindArray { u, v });
            }
        }
        Ok(())
    }
}

/// Complex field samples over a planar raster, stored row-major with `v` as
/// the row index: `values[v * nu + u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMapGrid {
    pub spec: GridSpec,
    pub values: Vec<Complex64>,
}

impl FieldMapGrid {
    pub fn get(&self, u: usize, v: usize) -> Complex64 {
        self.values[v * self.spec.nu + u]
    }

    /// Node with the largest magnitude; the first one wins ties.
    pub fn argmax(&self) -> (usize, usize, Vec3) {
        let (idx, _) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bm), (i, z)| {
                let m = z.norm();
                if m > bm {
                    (i, m)
                } else {
                    (bi, bm)
                }
            });
        let (u, v) = (idx % self.spec.nu, idx / self.spec.nu);
        (u, v, self.spec.node(u, v))
    }
}

/// Evaluates the field at every grid node (in parallel, same result as a
/// sequential scan).
pub fn field_map(
    e_source: Complex64,
    evaluator: &FieldEvaluator,
    source: Vec3,
    grid: GridSpec,
    include_direct: bool,
) -> Result<FieldMapGrid, PropagationError> {
    grid.validate()?;
    let values = (0..grid.nu * grid.nv)
        .into_par_iter()
        .map(|idx| {
            let (u, v) = (idx % grid.nu, idx / grid.nu);
            evaluator
                .total(e_source, source, grid.node(u, v), include_direct)
                .map_err(|e| PropagationError::Node {
                    u,
                    v,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FieldMapGrid { spec: grid, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell_model::CellSample;

    fn flat_model() -> CellResponseModel {
        CellResponseModel::from_samples(vec![
            CellSample::new(0.0, 0.0, 0.0),
            CellSample::new(1.0, 0.0, 0.0),
        ])
        .unwrap()
    }

    #[test]
    fn gain_at_one_wavelength() {
        let g = free_space_gain(0.055, 0.055).unwrap();
        assert!((g.norm() - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!(g.im.abs() < 1e-15);
        assert!(g.re > 0.0);
    }

    #[test]
    fn gain_at_half_wavelength() {
        let g = free_space_gain(0.5, 1.0).unwrap();
        assert!((g.re + 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!(g.im.abs() < 1e-15);
    }

    #[test]
    fn gain_long_path_high_precision_oracle() {
        // mpmath, 50 digits: 2π·2/0.055 mod 2π = 2.28479465715621...
        // (fraction of a turn 0.363636..., i.e. 4/11).
        let g = free_space_gain(2.0, 0.055).unwrap();
        assert!((g.norm() - 0.055 / (8.0 * PI)).abs() < 1e-17);
        assert!((g.norm() - 2.188_380_467_513_561e-3).abs() < 1e-17);
        let expected_phase = 2.284_794_657_156_213;
        assert!((g.arg() - expected_phase).abs() < 1e-12);
    }

    #[test]
    fn gain_rejects_nonpositive_distance() {
        assert_eq!(
            free_space_gain(0.0, 0.05),
            Err(PropagationError::Singularity(0.0))
        );
        assert!(free_space_gain(-1.0, 0.05).is_err());
        assert!(free_space_gain(1.0, 0.0).is_err());
    }

    #[test]
    fn single_cell_one_wavelength_each_way() {
        let lambda = 0.055;
        let ris = RisArray::square(1, 0.014).unwrap();
        let p = Vec3::new(0.0, 0.0, lambda);
        let scenario = ScenarioGeometry::new(ris, p, p, p, lambda).unwrap();
        let e = scattered_field(
            Complex64::new(1.0, 0.0),
            &scenario,
            &flat_model(),
            &RisConfiguration::uniform(1, 0.5),
            p,
        )
        .unwrap();
        let expected = 1.0 / (16.0 * PI * PI);
        assert!((e.norm() - expected).abs() < 1e-15);
        assert!((expected - 6.3326e-3).abs() < 1e-7);
        assert!(e.arg().abs() < 1e-12);
    }

    #[test]
    fn config_length_and_range_are_checked() {
        let scenario = ScenarioGeometry::testbed();
        let model = CellResponseModel::prototype();
        let short = RisConfiguration::uniform(3, 1.0);
        assert!(matches!(
            scattered_field(Complex64::new(1.0, 0.0), &scenario, &model, &short, scenario.tag()),
            Err(PropagationError::ConfigLength { expected: 196, got: 3 })
        ));
        let mut bad = RisConfiguration::uniform(196, 1.0);
        bad.voltages[7] = 6.0;
        assert!(matches!(
            scattered_field(Complex64::new(1.0, 0.0), &scenario, &model, &bad, scenario.tag()),
            Err(PropagationError::Cell { cell: 7, .. })
        ));
    }

    #[test]
    fn observation_on_a_cell_is_rejected() {
        let scenario = ScenarioGeometry::testbed();
        let eval = FieldEvaluator::absorbing(&scenario);
        let c = scenario.ris().cell_center(5);
        assert!(matches!(
            eval.scattered(Complex64::new(1.0, 0.0), scenario.source(), c),
            Err(PropagationError::Geometry(GeometryError::CoincidentWithCell { cell: 5 }))
        ));
    }

    #[test]
    fn total_without_direct_is_scattered() {
        let scenario = ScenarioGeometry::testbed();
        let model = CellResponseModel::prototype();
        let config = RisConfiguration::uniform(196, 2.2);
        let e = Complex64::new(0.7, -0.2);
        let obs = scenario.reader();
        assert_eq!(
            total_field(e, &scenario, &model, &config, obs, false).unwrap(),
            scattered_field(e, &scenario, &model, &config, obs).unwrap()
        );
    }

    #[test]
    fn absorbing_surface_leaves_direct_path() {
        let scenario = ScenarioGeometry::testbed();
        let eval = FieldEvaluator::absorbing(&scenario);
        let e = Complex64::new(1.0, 0.0);
        let got = eval.total(e, scenario.source(), scenario.tag(), true).unwrap();
        let direct = free_space_gain(scenario.source().distance(scenario.tag()), 0.055).unwrap();
        assert_eq!(got, direct);
    }

    #[test]
    fn destructive_direct_and_scattered() {
        // Single flat cell at the origin; tune the observation range so the
        // scattered term arrives in antiphase with the direct path.
        let lambda = 0.055;
        let ris = RisArray::square(1, 0.014).unwrap();
        let source = Vec3::new(0.0, 0.0, 1.0);
        let phase_gap = |z: f64| {
            let d_direct = 1.0 - z;
            let d_ris = 1.0 + z;
            ((d_ris - d_direct) / lambda).fract()
        };
        // d_ris - d_direct = 2z, so antiphase needs 2z/λ ≡ 1/2 mod 1.
        let z = 0.5 * (10.5 * lambda);
        assert!((phase_gap(z) - 0.5).abs() < 1e-9);
        let obs = Vec3::new(0.0, 0.0, z);
        let scenario = ScenarioGeometry::new(ris, source, obs, obs, lambda).unwrap();
        let eval = FieldEvaluator::from_config(
            &scenario,
            &flat_model(),
            &RisConfiguration::uniform(1, 0.0),
        )
        .unwrap();
        let e = Complex64::new(1.0, 0.0);
        let a = eval.direct(e, source, obs).unwrap();
        let b = eval.scattered(e, source, obs).unwrap();
        let total = eval.total(e, source, obs, true).unwrap();
        assert!((total.norm() - (a.norm() - b.norm()).abs()).abs() < 1e-12);
    }

    #[test]
    fn map_ordering_and_linearity() {
        let scenario = ScenarioGeometry::testbed();
        let model = CellResponseModel::prototype();
        let eval =
            FieldEvaluator::from_config(&scenario, &model, &RisConfiguration::uniform(196, 3.0))
                .unwrap();
        let grid = GridSpec::transverse(scenario.ris(), scenario.tag(), 0.2, 5);
        let one = field_map(Complex64::new(1.0, 0.0), &eval, scenario.source(), grid, true).unwrap();
        let two = field_map(Complex64::new(2.0, 0.0), &eval, scenario.source(), grid, true).unwrap();
        for (a, b) in one.values.iter().zip(&two.values) {
            assert!((b.norm() - 2.0 * a.norm()).abs() <= 1e-15 * b.norm());
        }
        let direct = eval.total(Complex64::new(1.0, 0.0), scenario.source(), grid.node(3, 1), true);
        assert_eq!(one.get(3, 1), direct.unwrap());

        let single = GridSpec::centered(scenario.tag(), Vec3::X, Vec3::Y, 0.5, 1);
        let map = field_map(Complex64::new(1.0, 0.0), &eval, scenario.source(), single, true).unwrap();
        assert_eq!(map.values.len(), 1);
        assert_eq!(single.node(0, 0), scenario.tag());
    }

    #[test]
    fn grid_front_side_check() {
        let ris = RisArray::default();
        let ok = GridSpec::centered(Vec3::new(0.0, 0.0, 1.0), Vec3::X, Vec3::Y, 1.0, 11);
        assert!(ok.check_in_front(&ris).is_ok());
        let crossing = GridSpec::centered(Vec3::new(0.0, 0.0, 0.2), Vec3::X, Vec3::Z, 1.0, 11);
        assert!(matches!(
            crossing.check_in_front(&ris),
            Err(PropagationError::GridBehindArray { u: 0, v: 0 })
        ));
        let skew = GridSpec::centered(Vec3::new(0.0, 0.0, 1.0), Vec3::X, Vec3::X, 1.0, 3);
        assert_eq!(skew.check_in_front(&ris), Err(PropagationError::GridAxes));
    }

    #[test]
    fn transverse_grid_is_perpendicular_to_the_beam() {
        let s = ScenarioGeometry::testbed();
        let g = GridSpec::transverse(s.ris(), s.tag(), 1.0, 101);
        let beam = s.tag().normalized();
        assert!(g.axis_u.dot(beam).abs() < 1e-12);
        assert!(g.axis_v.dot(beam).abs() < 1e-12);
        assert!((g.node(50, 50) - s.tag()).norm() < 1e-12);
    }
}
