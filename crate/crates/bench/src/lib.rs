//! Shared fixtures for the criterion benches.

use ris_ambc::codebook::{arc_targets, uniform_psi_grid};
use ris_ambc::{BeamTarget, CellResponseModel, ScenarioGeometry};

pub struct Fixture {
    pub scenario: ScenarioGeometry,
    pub model: CellResponseModel,
    pub targets: Vec<BeamTarget>,
    pub psi_grid: Vec<f64>,
}

pub fn testbed(targets: usize, psi_steps: usize) -> Fixture {
    let scenario = ScenarioGeometry::testbed();
    let targets = arc_targets(&scenario, targets, 1.5, -25.0, 25.0);
    Fixture {
        scenario,
        model: CellResponseModel::prototype(),
        targets,
        psi_grid: uniform_psi_grid(psi_steps),
    }
}
