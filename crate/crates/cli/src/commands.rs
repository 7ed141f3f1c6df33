use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

use ris_ambc::ambc_link::{ber_sweep, Baseline, BerMethod, LinkOptions, SweepSettings};
use ris_ambc::codebook::{
    build_codebook_with, read_codebook, scenario_hash, synthesize_entry_with, write_codebook,
    CodebookError,
};
use ris_ambc::export;
use ris_ambc::geometry::deflection_report;
use ris_ambc::propagation::{field_map, FieldEvaluator, GridSpec};
use ris_ambc::{
    AngularDomain, BeamTarget, Complex64, RisConfiguration, ScenarioGeometry, Vec3,
};

use crate::config::{BaselineChoice, BeamChoice, MethodChoice, PlaneChoice, RunConfig};
use crate::{Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.link.seed = seed;
    }
    fs::create_dir_all(&cli.out)
        .with_context(|| format!("creating output directory {}", cli.out.display()))?;
    let ctx = Ctx {
        cfg,
        out: &cli.out,
        table: cli.table.as_deref(),
    };
    match &cli.command {
        Command::CellModel => ctx.cell_model(),
        Command::Codebook => ctx.codebook(),
        Command::Fieldmap => ctx.fieldmap(),
        Command::BerSweep { codebook } => ctx.ber_sweep(codebook.as_deref()),
        Command::Validate => ctx.validate(),
    }
}

struct Ctx<'a> {
    cfg: RunConfig,
    out: &'a Path,
    table: Option<&'a Path>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn warn_out_of_domain(scenario: &ScenarioGeometry, domain: AngularDomain, from: Vec3, to: Vec3, hop: &str) {
    let outside = deflection_report(scenario.ris(), from, to, domain)
        .iter()
        .filter(|c| !c.in_domain)
        .count();
    if outside > 0 {
        eprintln!(
            "warning: {hop}: {outside} of {} cells deflect beyond {}°; cell model not validated there",
            scenario.ris().len(),
            domain.max_deflection_deg()
        );
    }
}

impl Ctx<'_> {
    fn cell_model(&self) -> Result<()> {
        let model = self.cfg.model(self.table)?;
        let csv_path = self.out.join("cell_model.csv");
        let mut w = create(&csv_path)?;
        let rows = export::write_cell_curve_csv(&mut w, &model, self.cfg.cell_model.grid_step_v)?;
        w.flush()?;

        let gap = model.achievable_phase_gap();
        let report = format!(
            "gap_lo_deg={:.6}\ngap_hi_deg={:.6}\ngap_width_deg={:.6}\nworst_case_error_deg={:.6}\n",
            gap.lo_deg,
            gap.hi_deg,
            gap.width_deg,
            gap.worst_case_error_deg()
        );
        fs::write(self.out.join("phase_gap.txt"), &report)?;
        println!(
            "wrote {} ({rows} rows); unreachable phase arc ({:.3}°, {:.3}°), width {:.3}°",
            csv_path.display(),
            gap.lo_deg,
            gap.hi_deg,
            gap.width_deg
        );
        Ok(())
    }

    fn codebook(&self) -> Result<()> {
        let scenario = self.cfg.scenario()?;
        let model = self.cfg.model(self.table)?;
        let targets = self.cfg.targets(&scenario);
        for t in &targets {
            if !scenario.ris().is_in_front(t.position) {
                bail!("target {} is not in front of the array plane", t.index_p);
            }
        }
        let codebook = build_codebook_with(
            &scenario,
            &model,
            &targets,
            &self.cfg.psi_grid(),
            self.cfg.codebook.convention,
        )?;

        let path = self.out.join("codebook.txt");
        let mut w = create(&path)?;
        write_codebook(&mut w, &scenario, &codebook.records())?;
        w.flush()?;

        let mut errs = create(&self.out.join("codebook_errors.csv"))?;
        writeln!(errs, "index_p,psi_deg,max_abs_phase_error_deg")?;
        let mut worst = 0f64;
        let mut sum = 0f64;
        for e in &codebook.entries {
            let m = e.max_abs_phase_error_deg();
            worst = worst.max(m);
            sum += m;
            writeln!(errs, "{},{},{m:.6}", e.target.index_p, e.psi_deg)?;
        }
        errs.flush()?;
        println!(
            "wrote {} ({} entries, scenario {}); per-entry max phase error: mean {:.3}°, worst {:.3}°",
            path.display(),
            codebook.len(),
            scenario_hash(&scenario),
            sum / codebook.len() as f64,
            worst
        );
        Ok(())
    }

    fn fieldmap(&self) -> Result<()> {
        let scenario = self.cfg.scenario()?;
        let model = self.cfg.model(self.table)?;
        let domain = self.cfg.domain()?;
        let fm = &self.cfg.fieldmap;
        let cells = scenario.ris().len();

        let (evaluator, target) = match fm.beam {
            BeamChoice::Tag | BeamChoice::Target => {
                let target = if fm.beam == BeamChoice::Tag {
                    BeamTarget::new(0, scenario.tag())
                } else {
                    *self
                        .cfg
                        .targets(&scenario)
                        .iter()
                        .find(|t| t.index_p == fm.index_p)
                        .with_context(|| format!("no codebook target with index_p {}", fm.index_p))?
                };
                let entry = synthesize_entry_with(
                    &scenario,
                    &model,
                    target,
                    fm.psi_deg,
                    self.cfg.codebook.convention,
                )?;
                let eval = FieldEvaluator::from_config(&scenario, &model, &entry.configuration())?;
                (eval, Some(target.position))
            }
            BeamChoice::Absorbing => (FieldEvaluator::absorbing(&scenario), None),
            BeamChoice::Uniform => (
                FieldEvaluator::from_config(
                    &scenario,
                    &model,
                    &RisConfiguration::uniform(cells, fm.voltage),
                )?,
                None,
            ),
        };
        let center = fm
            .center
            .map(Vec3::from)
            .or(target)
            .unwrap_or(scenario.tag());
        let grid = match fm.plane {
            PlaneChoice::Transverse => GridSpec::transverse(scenario.ris(), center, fm.width_m, fm.nodes),
            PlaneChoice::Parallel => GridSpec::centered(
                center,
                scenario.ris().row_axis(),
                scenario.ris().col_axis(),
                fm.width_m,
                fm.nodes,
            ),
        };
        grid.check_in_front(scenario.ris())
            .context("field-map grid intersects the array plane")?;
        warn_out_of_domain(&scenario, domain, scenario.source(), center, "source -> map center");

        let map = field_map(
            Complex64::new(1.0, 0.0),
            &evaluator,
            scenario.source(),
            grid,
            fm.include_direct,
        )?;
        let mut w = create(&self.out.join("fieldmap.csv"))?;
        export::write_field_map_csv(&mut w, &map)?;
        w.flush()?;
        let mut w = create(&self.out.join("fieldmap.pgm"))?;
        export::write_field_map_pgm(&mut w, &map)?;
        w.flush()?;

        let (u, v, at) = map.argmax();
        let reference = target.unwrap_or(center);
        let dist = at.distance(reference);
        println!(
            "argmax node ({u}, {v}) at [{:.4}, {:.4}, {:.4}] m, |E| = {:.3} dB; distance to target {:.4} m ({:.2} wavelengths)",
            at.x,
            at.y,
            at.z,
            export::magnitude_db(map.get(u, v)),
            dist,
            dist / scenario.wavelength()
        );
        Ok(())
    }

    fn ber_sweep(&self, codebook_path: Option<&Path>) -> Result<()> {
        let scenario = self.cfg.scenario()?;
        let model = self.cfg.model(self.table)?;
        let domain = self.cfg.domain()?;
        let link = &self.cfg.link;

        let records = match codebook_path {
            Some(p) => {
                let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
                let (header, records) = read_codebook(BufReader::new(f))?;
                if header.scenario_hash != scenario_hash(&scenario) {
                    eprintln!(
                        "warning: codebook was built for scenario {}, running scenario {}",
                        header.scenario_hash,
                        scenario_hash(&scenario)
                    );
                }
                records
            }
            None => build_codebook_with(
                &scenario,
                &model,
                &self.cfg.targets(&scenario),
                &self.cfg.psi_grid(),
                self.cfg.codebook.convention,
            )
            .map_err(|e: CodebookError| anyhow::anyhow!(e))?
            .records(),
        };
        if records.is_empty() {
            bail!("codebook is empty");
        }
        warn_out_of_domain(&scenario, domain, scenario.source(), scenario.tag(), "source -> tag");
        if link.ris_to_reader {
            warn_out_of_domain(&scenario, domain, scenario.tag(), scenario.reader(), "tag -> reader");
        }

        let settings = SweepSettings {
            es_over_n0_db: link.es_over_n0_db,
            method: match link.method {
                MethodChoice::ClosedForm => BerMethod::ClosedForm,
                MethodChoice::MonteCarlo => BerMethod::MonteCarlo {
                    trials: link.trials,
                    seed: link.seed,
                },
            },
            baseline: match link.baseline {
                BaselineChoice::MaxVoltage => Baseline::MaxVoltage,
                BaselineChoice::Absorbing => Baseline::Absorbing,
                BaselineChoice::Uniform => Baseline::Uniform(link.baseline_voltage),
            },
            options: LinkOptions {
                ris_to_reader: link.ris_to_reader,
            },
        };
        let sweep = ber_sweep(&scenario, &model, &records, &self.cfg.tag_model()?, settings)?;
        for f in &sweep.failures {
            eprintln!("warning: entry ({}, {}°) failed: {}", f.index_p, f.psi_deg, f.error);
        }

        let mut w = create(&self.out.join("ber_sweep.csv"))?;
        export::write_ber_csv(&mut w, &sweep)?;
        w.flush()?;
        let mut w = create(&self.out.join("ber_sweep.pgm"))?;
        export::write_ber_pgm(&mut w, &sweep)?;
        w.flush()?;

        match sweep.best() {
            Some((p, psi, ber)) => println!(
                "best entry index_p={p} psi_deg={psi}: BER {ber:.6e}; baseline BER {:.6e}",
                sweep.baseline_ber
            ),
            None => bail!("every codebook entry failed"),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let scenario = self.cfg.scenario()?;
        let domain = self.cfg.domain()?;
        let hops = [
            ("source->tag", scenario.source(), scenario.tag()),
            ("source->reader", scenario.source(), scenario.reader()),
            ("tag->reader", scenario.tag(), scenario.reader()),
        ];
        let mut w = create(&self.out.join("deflection.csv"))?;
        writeln!(w, "hop,cell,incidence_deg,departure_deg,in_domain")?;
        for (name, from, to) in hops {
            let report = deflection_report(scenario.ris(), from, to, domain);
            let mut worst = 0f64;
            let mut outside = 0;
            for (m, c) in report.iter().enumerate() {
                writeln!(
                    w,
                    "{name},{},{:.6},{:.6},{}",
                    m + 1,
                    c.incidence_deg,
                    c.departure_deg,
                    c.in_domain
                )?;
                worst = worst.max(c.incidence_deg).max(c.departure_deg);
                outside += usize::from(!c.in_domain);
            }
            println!(
                "{name}: {outside}/{} cells outside the {}° cone (max angle {worst:.2}°)",
                report.len(),
                domain.max_deflection_deg()
            );
        }
        w.flush()?;
        Ok(())
    }
}
