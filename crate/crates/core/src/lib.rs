//! Simulation library for a varactor-tuned reconfigurable intelligent surface
//! used to assist an ambient backscatter link.
//!
//! * [`cell_model`]: measured voltage → reflection response and its inverse.
//! * [`geometry`]: array layout and scenario placement.
//! * [`propagation`]: free-space cascaded scattering and field maps.
//! * [`codebook`]: per-target beamforming configurations.
//! * [`ambc_link`]: two-state tag hypotheses and bit error rates.
//! * [`export`]: CSV/PGM writers.

pub mod ambc_link;
pub mod cell_model;
pub mod codebook;
pub mod export;
pub mod geometry;
pub mod propagation;

pub use ambc_link::{
    ber_closed_form, ber_monte_carlo, ber_sweep, hypothesis_fields, Baseline, BerMethod,
    BerResult, BerSweepResult, LinkError, LinkHypotheses, LinkOptions, SweepSettings, TagModel,
};
pub use cell_model::{AngularDomain, CellModelError, CellResponseModel, CellSample, PhaseGap};
pub use codebook::{
    build_codebook, synthesize_entry, BeamTarget, Codebook, CodebookEntry, CodebookError,
    CodebookRecord, PsiConvention,
};
pub use geometry::{GeometryError, RisArray, ScenarioGeometry, Vec3};
pub use num_complex::Complex64;
pub use propagation::{
    field_map, free_space_gain, scattered_field, total_field, FieldEvaluator, FieldMapGrid,
    GridSpec, PropagationError, RisConfiguration,
};

/// Wraps an angle in degrees to (-180, 180].
pub fn wrap_deg(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}
