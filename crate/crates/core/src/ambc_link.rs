//! Ambient backscatter link through the array.
//!
//! The tag toggles between a backscattering and a transparent load. For each
//! state the reader sees
//!
//! ```text
//! h = E_fwd + Γ · E_tag · G_tag→reader
//! ```
//!
//! where `E_fwd` is the source field at the reader (direct plus via the
//! array), `E_tag` the source field at the tag, and `G_tag→reader` the gain
//! of the tag re-radiating as an isotropic point source (direct plus via the
//! array). Each hop interacts with the array once. The source amplitude is
//! 1; the symbol energy `Es` carries the transmit power.
//!
//! Detection is coherent minimum-distance between `h0·√Es` and `h1·√Es` in
//! circularly-symmetric complex AWGN of variance `N0`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use libm::erfc;
use thiserror::Error;

use crate::cell_model::CellResponseModel;
use crate::codebook::CodebookRecord;
use crate::geometry::ScenarioGeometry;
use crate::propagation::{FieldEvaluator, PropagationError, RisConfiguration};

#[derive(Debug, Error, PartialEq)]
pub enum LinkError {
    #[error("source, tag and reader must be distinct points")]
    CoincidentEndpoints,
    #[error("tag reflection magnitude must not exceed 1, got {0}")]
    InvalidGamma(f64),
    #[error("Monte Carlo needs at least one trial")]
    NoTrials,
    #[error("sweep needs at least one codebook entry")]
    EmptyCodebook,
    #[error(transparent)]
    Propagation(#[from] PropagationError),
}

/// Load reflection of the tag antenna in its two states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagModel {
    /// Short-circuited antenna; transmitted as bit 1.
    pub gamma_backscatter: Complex64,
    /// Open-circuited antenna; transmitted as bit 0.
    pub gamma_transparent: Complex64,
}

impl TagModel {
    pub fn new(gamma_backscatter: Complex64, gamma_transparent: Complex64) -> Result<Self, LinkError> {
        for g in [gamma_backscatter, gamma_transparent] {
            if !(g.norm() <= 1.0 + 1e-12) {
                return Err(LinkError::InvalidGamma(g.norm()));
            }
        }
        Ok(Self {
            gamma_backscatter,
            gamma_transparent,
        })
    }

    pub fn swapped(self) -> Self {
        Self {
            gamma_backscatter: self.gamma_transparent,
            gamma_transparent: self.gamma_backscatter,
        }
    }
}

impl Default for TagModel {
    fn default() -> Self {
        Self {
            gamma_backscatter: Complex64::new(-1.0, 0.0),
            gamma_transparent: Complex64::new(0.0, 0.0),
        }
    }
}

/// Noise-free received amplitudes for bit 0 (`h0`, transparent) and bit 1
/// (`h1`, backscattering).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkHypotheses {
    pub h0: Complex64,
    pub h1: Complex64,
}

impl LinkHypotheses {
    pub fn separation(&self) -> f64 {
        (self.h1 - self.h0).norm()
    }
}

/// Which paths through the array reach the reader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkOptions {
    /// Include array → reader paths (source → array → reader and
    /// tag → array → reader). The source → array → tag hop is always kept.
    pub ris_to_reader: bool,
}

impl Default for LinkOptions {
    fn default() -> Self {
        Self {
            ris_to_reader: true,
        }
    }
}

/// Field components behind [`LinkHypotheses`], kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkFields {
    pub at_tag: Complex64,
    pub forward: Complex64,
    pub tag_to_reader: Complex64,
}

impl LinkFields {
    pub fn hypotheses(&self, tag: &TagModel) -> LinkHypotheses {
        let backscatter = self.at_tag * self.tag_to_reader;
        LinkHypotheses {
            h0: self.forward + tag.gamma_transparent * backscatter,
            h1: self.forward + tag.gamma_backscatter * backscatter,
        }
    }
}

pub fn link_fields(
    scenario: &ScenarioGeometry,
    evaluator: &FieldEvaluator,
    options: LinkOptions,
) -> Result<LinkFields, LinkError> {
    let (s, t, r) = (scenario.source(), scenario.tag(), scenario.reader());
    if s == t || s == r || t == r {
        return Err(LinkError::CoincidentEndpoints);
    }
    let unit = Complex64::new(1.0, 0.0);
    let at_tag = evaluator.total(unit, s, t, true)?;
    let (forward, tag_to_reader) = if options.ris_to_reader {
        (
            evaluator.total(unit, s, r, true)?,
            evaluator.total(unit, t, r, true)?,
        )
    } else {
        (evaluator.direct(unit, s, r)?, evaluator.direct(unit, t, r)?)
    };
    Ok(LinkFields {
        at_tag,
        forward,
        tag_to_reader,
    })
}

pub fn hypothesis_fields(
    scenario: &ScenarioGeometry,
    model: &CellResponseModel,
    config: &RisConfiguration,
    tag: &TagModel,
) -> Result<LinkHypotheses, LinkError> {
    let evaluator = FieldEvaluator::from_config(scenario, model, config)?;
    Ok(link_fields(scenario, &evaluator, LinkOptions::default())?.hypotheses(tag))
}

/// Standard normal upper tail.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BerMethodKind {
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerResult {
    pub ber: f64,
    pub method: BerMethodKind,
    /// 0 for the closed form.
    pub trials: u64,
    pub seed: u64,
}

/// `Q(|h1 - h0| · sqrt(Es / (2 N0)))`.
pub fn ber_closed_form(h: &LinkHypotheses, es_over_n0_db: f64) -> BerResult {
    let snr = 10f64.powf(es_over_n0_db / 10.0);
    BerResult {
        ber: q_function(h.separation() * (snr / 2.0).sqrt()),
        method: BerMethodKind::ClosedForm,
        trials: 0,
        seed: 0,
    }
}

/// Simulates `trials` equiprobable bits with `Es = 1` and `N0 = 10^(-snr/10)`.
pub fn ber_monte_carlo(
    h: &LinkHypotheses,
    es_over_n0_db: f64,
    trials: u64,
    seed: u64,
) -> Result<BerResult, LinkError> {
    if trials == 0 {
        return Err(LinkError::NoTrials);
    }
    let n0 = 10f64.powf(-es_over_n0_db / 10.0);
    let sigma = (n0 / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = 0u64;
    for _ in 0..trials {
        let bit: bool = rng.random();
        let tx = if bit { h.h1 } else { h.h0 };
        let nre: f64 = rng.sample(StandardNormal);
        let nim: f64 = rng.sample(StandardNormal);
        let y = tx + Complex64::new(nre * sigma, nim * sigma);
        let decided = (y - h.h1).norm_sqr() < (y - h.h0).norm_sqr();
        if decided != bit {
            errors += 1;
        }
    }
    Ok(BerResult {
        ber: errors as f64 / trials as f64,
        method: BerMethodKind::MonteCarlo,
        trials,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BerMethod {
    ClosedForm,
    MonteCarlo { trials: u64, seed: u64 },
}

impl BerMethod {
    fn evaluate(&self, h: &LinkHypotheses, es_over_n0_db: f64, stream: u64) -> Result<BerResult, LinkError> {
        match *self {
            BerMethod::ClosedForm => Ok(ber_closed_form(h, es_over_n0_db)),
            BerMethod::MonteCarlo { trials, .. } => ber_monte_carlo(h, es_over_n0_db, trials, stream),
        }
    }

    fn seed(&self) -> u64 {
        match *self {
            BerMethod::ClosedForm => 0,
            BerMethod::MonteCarlo { seed, .. } => seed,
        }
    }
}

/// Reference state of the array for the baseline BER.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Baseline {
    /// All cells at the table's highest voltage.
    #[default]
    MaxVoltage,
    Uniform(f64),
    Absorbing,
}

/// Per-entry stream seed; `ψ` is reduced modulo 360° so periodic keys share
/// a stream.
pub fn entry_seed(seed: u64, index_p: u32, psi_deg: f64) -> u64 {
    let psi = psi_deg.rem_euclid(360.0);
    let mut x = seed ^ 0x9E37_79B9_7F4A_7C15;
    for word in [u64::from(index_p), psi.to_bits()] {
        x = splitmix64(x ^ word);
    }
    x
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepFailure {
    pub index_p: u32,
    pub psi_deg: f64,
    pub error: String,
}

/// BER per `(index_p, ψ)`. `ber[row][col]` pairs `index_p[row]` with
/// `psi_deg[col]`; `None` marks a missing or failed entry.
#[derive(Debug, Clone, PartialEq)]
pub struct BerSweepResult {
    pub index_p: Vec<u32>,
    pub psi_deg: Vec<f64>,
    pub ber: Vec<Vec<Option<f64>>>,
    pub baseline_ber: f64,
    pub failures: Vec<SweepFailure>,
}

impl BerSweepResult {
    pub fn get(&self, index_p: u32, psi_deg: f64) -> Option<f64> {
        let r = self.index_p.iter().position(|&p| p == index_p)?;
        let c = self.psi_deg.iter().position(|&x| x == psi_deg)?;
        self.ber[r][c]
    }

    /// Lowest-BER entry; the first in row-major order wins ties.
    pub fn best(&self) -> Option<(u32, f64, f64)> {
        let mut best: Option<(u32, f64, f64)> = None;
        for (r, row) in self.ber.iter().enumerate() {
            for (c, b) in row.iter().enumerate() {
                if let Some(b) = *b {
                    if best.is_none_or(|(_, _, bb)| b < bb) {
                        best = Some((self.index_p[r], self.psi_deg[c], b));
                    }
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub es_over_n0_db: f64,
    pub method: BerMethod,
    pub baseline: Baseline,
    pub options: LinkOptions,
}

fn sorted_unique<T: Copy + PartialEq>(items: impl Iterator<Item = T>, cmp: impl Fn(&T, &T) -> std::cmp::Ordering) -> Vec<T> {
    let mut v: Vec<T> = items.collect();
    v.sort_by(&cmp);
    v.dedup();
    v
}

pub fn ber_sweep(
    scenario: &ScenarioGeometry,
    model: &CellResponseModel,
    records: &[CodebookRecord],
    tag: &TagModel,
    settings: SweepSettings,
) -> Result<BerSweepResult, LinkError> {
    if records.is_empty() {
        return Err(LinkError::EmptyCodebook);
    }
    let cells = scenario.ris().len();
    let baseline_eval = match settings.baseline {
        Baseline::MaxVoltage => FieldEvaluator::from_config(
            scenario,
            model,
            &RisConfiguration::uniform(cells, model.max_voltage()),
        )?,
        Baseline::Uniform(v) => {
            FieldEvaluator::from_config(scenario, model, &RisConfiguration::uniform(cells, v))?
        }
        Baseline::Absorbing => FieldEvaluator::absorbing(scenario),
    };
    let baseline_h = link_fields(scenario, &baseline_eval, settings.options)?.hypotheses(tag);
    let baseline_ber = settings
        .method
        .evaluate(&baseline_h, settings.es_over_n0_db, entry_seed(settings.method.seed(), 0, -1.0))?
        .ber;

    let outcomes: Vec<Result<f64, LinkError>> = records
        .par_iter()
        .map(|rec| {
            let eval = FieldEvaluator::from_config(scenario, model, &rec.configuration())?;
            let h = link_fields(scenario, &eval, settings.options)?.hypotheses(tag);
            let stream = entry_seed(settings.method.seed(), rec.index_p, rec.psi_deg);
            Ok(settings.method.evaluate(&h, settings.es_over_n0_db, stream)?.ber)
        })
        .collect();

    let index_p = sorted_unique(records.iter().map(|r| r.index_p), |a, b| a.cmp(b));
    let psi_deg = sorted_unique(records.iter().map(|r| r.psi_deg), |a, b| a.total_cmp(b));
    let mut ber = vec![vec![None; psi_deg.len()]; index_p.len()];
    let mut failures = Vec::new();
    for (rec, outcome) in records.iter().zip(outcomes) {
        match outcome {
            Ok(b) => {
                let r = index_p.binary_search(&rec.index_p).expect("collected above");
                let c = psi_deg
                    .binary_search_by(|x| x.total_cmp(&rec.psi_deg))
                    .expect("collected above");
                ber[r][c] = Some(b);
            }
            Err(e) => failures.push(SweepFailure {
                index_p: rec.index_p,
                psi_deg: rec.psi_deg,
                error: e.to_string(),
            }),
        }
    }
    Ok(BerSweepResult {
        index_p,
        psi_deg,
        ber,
        baseline_ber,
        failures,
    })
}
