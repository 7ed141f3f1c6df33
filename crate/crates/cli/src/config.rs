//! Run configuration file (TOML).
//!
//! Every section and key is optional; omitted values fall back to the
//! reference testbed. Lengths are meters, angles degrees, powers dB.
//!
//! ```toml
//! schema_version = 1
//!
//! [scenario]
//! wavelength_m = 0.055
//! source = [0.0, 0.0, 2.0]
//! tag = [0.513, 0.0, 1.4095]
//! reader = [-0.507, 0.380, 1.359]
//!
//! [ris]
//! rows = 14
//! cols = 14
//! pitch_m = 0.014
//! center = [0.0, 0.0, 0.0]
//! normal = [0.0, 0.0, 1.0]
//! row_axis = [1.0, 0.0, 0.0]
//!
//! [cell]
//! g0 = 1.0
//! max_deflection_deg = 40.0
//! table = "table.csv"          # optional, `voltage,amplitude_db,phase_deg`
//!
//! [cell_model]
//! grid_step_v = 0.1
//!
//! [codebook]
//! psi_step_deg = 10.0          # or: psi_deg = [0.0, 90.0, ...]
//! convention = "align"         # or "subtract"
//! [codebook.targets]
//! kind = "arc"                 # arc: count, radius_m, start_deg, end_deg
//! count = 151                  # line: count, start, end
//! radius_m = 1.5
//! start_deg = -37.5
//! end_deg = 37.5
//!
//! [fieldmap]
//! beam = "tag"                 # tag | target | absorbing | uniform
//! index_p = 1                  # beam = "target"
//! psi_deg = 0.0
//! voltage = 5.0                # beam = "uniform"
//! plane = "transverse"         # transverse | parallel
//! center = [x, y, z]           # default: beam target (tag otherwise)
//! width_m = 1.0
//! nodes = 101
//! include_direct = false
//!
//! [link]
//! es_over_n0_db = 100.0
//! method = "closed_form"       # or "monte_carlo"
//! trials = 100000
//! seed = 0
//! gamma_backscatter = [-1.0, 0.0]
//! gamma_transparent = [0.0, 0.0]
//! baseline = "max_voltage"     # max_voltage | absorbing | uniform
//! baseline_voltage = 5.0
//! ris_to_reader = true
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use ris_ambc::codebook::{arc_targets, line_targets, uniform_psi_grid};
use ris_ambc::{
    AngularDomain, BeamTarget, CellResponseModel, Complex64, PsiConvention, RisArray,
    ScenarioGeometry, Vec3,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub ris: RisSection,
    #[serde(default)]
    pub cell: CellSection,
    #[serde(default)]
    pub cell_model: CellModelSection,
    #[serde(default)]
    pub codebook: CodebookSection,
    #[serde(default)]
    pub fieldmap: FieldMapSection,
    #[serde(default)]
    pub link: LinkSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: Default::default(),
            ris: Default::default(),
            cell: Default::default(),
            cell_model: Default::default(),
            codebook: Default::default(),
            fieldmap: Default::default(),
            link: Default::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub wavelength_m: f64,
    pub source: [f64; 3],
    pub tag: [f64; 3],
    pub reader: [f64; 3],
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let t = ScenarioGeometry::testbed();
        Self {
            wavelength_m: t.wavelength(),
            source: t.source().to_array(),
            tag: t.tag().to_array(),
            reader: t.reader().to_array(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RisSection {
    pub rows: usize,
    pub cols: usize,
    pub pitch_m: f64,
    pub center: [f64; 3],
    pub normal: [f64; 3],
    pub row_axis: [f64; 3],
}

impl Default for RisSection {
    fn default() -> Self {
        Self {
            rows: RisArray::DEFAULT_ROWS,
            cols: RisArray::DEFAULT_COLS,
            pitch_m: RisArray::DEFAULT_PITCH_M,
            center: [0.0; 3],
            normal: [0.0, 0.0, 1.0],
            row_axis: [1.0, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellSection {
    pub g0: f64,
    pub max_deflection_deg: f64,
    pub table: Option<PathBuf>,
}

impl Default for CellSection {
    fn default() -> Self {
        Self {
            g0: 1.0,
            max_deflection_deg: AngularDomain::DEFAULT_MAX_DEFLECTION_DEG,
            table: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellModelSection {
    pub grid_step_v: f64,
}

impl Default for CellModelSection {
    fn default() -> Self {
        Self { grid_step_v: 0.1 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum TargetsSection {
    Arc {
        count: usize,
        radius_m: f64,
        start_deg: f64,
        end_deg: f64,
    },
    Line {
        count: usize,
        start: [f64; 3],
        end: [f64; 3],
    },
}

impl Default for TargetsSection {
    fn default() -> Self {
        TargetsSection::Arc {
            count: 151,
            radius_m: 1.5,
            start_deg: -37.5,
            end_deg: 37.5,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodebookSection {
    pub psi_step_deg: f64,
    pub psi_deg: Option<Vec<f64>>,
    pub convention: PsiConvention,
    pub targets: TargetsSection,
}

impl Default for CodebookSection {
    fn default() -> Self {
        Self {
            psi_step_deg: 10.0,
            psi_deg: None,
            convention: PsiConvention::Align,
            targets: TargetsSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamChoice {
    Tag,
    Target,
    Absorbing,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneChoice {
    Transverse,
    Parallel,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldMapSection {
    pub beam: BeamChoice,
    pub index_p: u32,
    pub psi_deg: f64,
    pub voltage: f64,
    pub plane: PlaneChoice,
    pub center: Option<[f64; 3]>,
    pub width_m: f64,
    pub nodes: usize,
    pub include_direct: bool,
}

impl Default for FieldMapSection {
    fn default() -> Self {
        Self {
            beam: BeamChoice::Tag,
            index_p: 1,
            psi_deg: 0.0,
            voltage: 5.0,
            plane: PlaneChoice::Transverse,
            center: None,
            width_m: 1.0,
            nodes: 101,
            include_direct: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineChoice {
    MaxVoltage,
    Absorbing,
    Uniform,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    pub es_over_n0_db: f64,
    pub method: MethodChoice,
    pub trials: u64,
    pub seed: u64,
    pub gamma_backscatter: [f64; 2],
    pub gamma_transparent: [f64; 2],
    pub baseline: BaselineChoice,
    pub baseline_voltage: f64,
    pub ris_to_reader: bool,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            es_over_n0_db: 100.0,
            method: MethodChoice::ClosedForm,
            trials: 100_000,
            seed: 0,
            gamma_backscatter: [-1.0, 0.0],
            gamma_transparent: [0.0, 0.0],
            baseline: BaselineChoice::MaxVoltage,
            baseline_voltage: 5.0,
            ris_to_reader: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            bail!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            );
        }
        // Relative table paths are resolved against the config file.
        if let (Some(table), Some(dir)) = (cfg.cell.table.as_mut(), path.parent()) {
            if table.is_relative() {
                *table = dir.join(&*table);
            }
        }
        cfg.check_ranges()?;
        Ok(cfg)
    }

    pub fn check_ranges(&self) -> Result<()> {
        if !(self.cell_model.grid_step_v > 0.0) {
            bail!("cell_model.grid_step_v must be positive");
        }
        if self.codebook.psi_deg.is_none() && !(self.codebook.psi_step_deg > 0.0) {
            bail!("codebook.psi_step_deg must be positive");
        }
        if self.fieldmap.nodes == 0 || !(self.fieldmap.width_m >= 0.0) {
            bail!("fieldmap.nodes must be >= 1 and fieldmap.width_m >= 0");
        }
        if self.link.method == MethodChoice::MonteCarlo && self.link.trials == 0 {
            bail!("link.trials must be >= 1 for monte_carlo");
        }
        Ok(())
    }

    pub fn scenario(&self) -> Result<ScenarioGeometry> {
        let r = &self.ris;
        let ris = RisArray::new(
            r.rows,
            r.cols,
            r.pitch_m,
            r.center.into(),
            r.normal.into(),
            r.row_axis.into(),
        )
        .context("invalid [ris] section")?;
        let s = &self.scenario;
        ScenarioGeometry::new(
            ris,
            s.source.into(),
            s.tag.into(),
            s.reader.into(),
            s.wavelength_m,
        )
        .context("invalid [scenario] section")
    }

    /// Cell model from `table_override`, else `[cell].table`, else the
    /// embedded prototype table.
    pub fn model(&self, table_override: Option<&Path>) -> Result<CellResponseModel> {
        let model = match table_override.or(self.cell.table.as_deref()) {
            Some(p) => CellResponseModel::from_csv_path(p)
                .with_context(|| format!("loading cell table {}", p.display()))?,
            None => CellResponseModel::prototype(),
        };
        model.with_gain(self.cell.g0).context("invalid [cell].g0")
    }

    pub fn domain(&self) -> Result<AngularDomain> {
        AngularDomain::new(self.cell.max_deflection_deg)
            .context("cell.max_deflection_deg must be in (0, 90]")
    }

    pub fn psi_grid(&self) -> Vec<f64> {
        match &self.codebook.psi_deg {
            Some(list) => list.clone(),
            None => {
                let n = (360.0 / self.codebook.psi_step_deg).round().max(1.0) as usize;
                uniform_psi_grid(n)
            }
        }
    }

    pub fn targets(&self, scenario: &ScenarioGeometry) -> Vec<BeamTarget> {
        match self.codebook.targets {
            TargetsSection::Arc {
                count,
                radius_m,
                start_deg,
                end_deg,
            } => arc_targets(scenario, count, radius_m, start_deg, end_deg),
            TargetsSection::Line { count, start, end } => {
                line_targets(Vec3::from(start), Vec3::from(end), count)
            }
        }
    }

    pub fn tag_model(&self) -> Result<ris_ambc::TagModel> {
        let [br, bi] = self.link.gamma_backscatter;
        let [tr, ti] = self.link.gamma_transparent;
        ris_ambc::TagModel::new(Complex64::new(br, bi), Complex64::new(tr, ti))
            .context("invalid tag reflection in [link]")
    }
}
