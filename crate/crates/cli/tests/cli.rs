use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ris_ambc::{free_space_gain, ScenarioGeometry};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ris-ambc"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, format!("schema_version = 1\n{body}")).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn cell_model_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), &["cell-model"]));
    let csv = fs::read_to_string(dir.path().join("cell_model.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "voltage,amplitude_db,phase_deg");
    assert_eq!(lines.len(), 52);
    for node in [
        "0.000000,-1.517000,32.798000",
        "0.500000,-3.156000,46.807000",
        "1.000000,-9.576000,70.320000",
        "1.500000,-6.615000,-73.171000",
        "2.000000,-1.959000,-35.908000",
        "3.000000,-0.749000,-16.087000",
        "4.000000,-0.528000,-9.925000",
        "5.000000,-0.439000,-6.906000",
    ] {
        assert!(lines.contains(&node), "missing {node}");
    }
    let gap = fs::read_to_string(dir.path().join("phase_gap.txt")).unwrap();
    assert!(gap.contains("gap_width_deg=39.704000"));
}

#[test]
fn cell_model_coarse_grid_and_custom_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("two.csv");
    fs::write(&table, "voltage,amplitude_db,phase_deg\n0,0,0\n1,0,10\n").unwrap();
    let cfg = write_config(dir.path(), "[cell_model]\ngrid_step_v = 7.0\n");
    let out = ok(&run(
        dir.path(),
        &["--config", &cfg, "--table", table.to_str().unwrap(), "cell-model"],
    ));
    assert!(out.contains("width 350.000°"), "{out}");
    let csv = fs::read_to_string(dir.path().join("cell_model.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn malformed_table_is_a_one_line_error() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("bad.csv");
    fs::write(&table, "voltage,amplitude_db,phase_deg\n1,0,0\n0,0,0\n").unwrap();
    let out = run(dir.path(), &["--table", table.to_str().unwrap(), "cell-model"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("row 1"));
}

#[test]
fn default_codebook_has_5436_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&run(dir.path(), &["codebook"]));
    assert!(out.contains("5436 entries"));
    let text = fs::read_to_string(dir.path().join("codebook.txt")).unwrap();
    assert!(text.contains("\nentries=5436\n"));
    assert_eq!(text.lines().count(), 7 + 5436);
}

#[test]
fn single_codebook_entry_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[codebook]\npsi_deg = [30.0]\n[codebook.targets]\nkind = \"arc\"\ncount = 1\nradius_m = 1.2\nstart_deg = 10.0\nend_deg = 10.0\n",
    );
    ok(&run(dir.path(), &["--config", &cfg, "codebook"]));
    let first = fs::read(dir.path().join("codebook.txt")).unwrap();
    ok(&run(dir.path(), &["--config", &cfg, "codebook"]));
    let second = fs::read(dir.path().join("codebook.txt")).unwrap();
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().count(), 8);
    let record = text.lines().last().unwrap();
    assert!(record.starts_with("1,30,"));
    assert_eq!(record.split(',').count(), 2 + 196);
}

#[test]
fn target_behind_the_array_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[codebook.targets]\nkind = \"line\"\ncount = 3\nstart = [0.0, 0.0, 1.0]\nend = [0.0, 0.0, -1.0]\n",
    );
    let out = run(dir.path(), &["--config", &cfg, "codebook"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("target 2"), "{err}");
}

#[test]
fn absorbing_fieldmap_is_a_spherical_wave() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[fieldmap]\nbeam = \"absorbing\"\ninclude_direct = true\nnodes = 5\nwidth_m = 0.4\nplane = \"parallel\"\ncenter = [0.0, 0.3, 1.0]\n",
    );
    ok(&run(dir.path(), &["--config", &cfg, "fieldmap"]));
    let csv = fs::read_to_string(dir.path().join("fieldmap.csv")).unwrap();
    let s = ScenarioGeometry::testbed();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let (u, v) = (f[0], f[1]);
        let node = ris_ambc::Vec3::new(-0.2 + 0.1 * u, 0.3 - 0.2 + 0.1 * v, 1.0);
        let g = free_space_gain(s.source().distance(node), s.wavelength()).unwrap();
        assert!((f[2] - g.re).abs() < 1e-12 && (f[3] - g.im).abs() < 1e-12);
        rows += 1;
    }
    assert_eq!(rows, 25);
    let pgm = fs::read(dir.path().join("fieldmap.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n5 5\n255\n"));
    assert_eq!(pgm.len(), 11 + 25);
}

#[test]
fn single_node_fieldmap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[fieldmap]\nnodes = 1\n");
    ok(&run(dir.path(), &["--config", &cfg, "fieldmap"]));
    let csv = fs::read_to_string(dir.path().join("fieldmap.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn tag_fieldmap_peaks_at_the_tag() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&run(dir.path(), &["fieldmap"]));
    let wl: f64 = out
        .split("m (")
        .nth(1)
        .and_then(|s| s.split(' ').next())
        .and_then(|s| s.parse().ok())
        .expect("summary reports distance in wavelengths");
    assert!(wl <= 2.0, "{out}");
}

#[test]
fn fieldmap_grid_crossing_the_array_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[fieldmap]\nplane = \"transverse\"\ncenter = [0.3, 0.0, 0.2]\nwidth_m = 1.0\n",
    );
    let out = run(dir.path(), &["--config", &cfg, "fieldmap"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("intersects the array plane"));
}

#[test]
fn ber_sweep_beats_baseline_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[codebook]\npsi_step_deg = 30.0\n[codebook.targets]\nkind = \"arc\"\ncount = 11\nradius_m = 1.5\nstart_deg = 15.0\nend_deg = 25.0\n[link]\nmethod = \"monte_carlo\"\ntrials = 4000\n",
    );
    let out = ok(&run(dir.path(), &["--config", &cfg, "--seed", "11", "ber-sweep"]));
    let first = fs::read(dir.path().join("ber_sweep.csv")).unwrap();
    ok(&run(dir.path(), &["--config", &cfg, "--seed", "11", "ber-sweep"]));
    assert_eq!(first, fs::read(dir.path().join("ber_sweep.csv")).unwrap());
    assert!(out.contains("best entry index_p="));

    let nums: Vec<f64> = out
        .split("BER ")
        .skip(1)
        .map(|s| s.split(|c: char| c == ';' || c.is_whitespace()).next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(nums.len(), 2);
    assert!(nums[0] < nums[1], "{out}");
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().count(), 1 + 11 * 12);
    let pgm = fs::read(dir.path().join("ber_sweep.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n12 11\n255\n"));
}

#[test]
fn ber_sweep_from_codebook_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[codebook]\npsi_deg = [0.0]\n[codebook.targets]\nkind = \"arc\"\ncount = 1\nradius_m = 1.5\nstart_deg = 20.0\nend_deg = 20.0\n",
    );
    ok(&run(dir.path(), &["--config", &cfg, "codebook"]));
    let cb = dir.path().join("codebook.txt");
    ok(&run(
        dir.path(),
        &["--config", &cfg, "ber-sweep", "--codebook", cb.to_str().unwrap()],
    ));
    let csv = fs::read_to_string(dir.path().join("ber_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);

    let text = fs::read_to_string(&cb).unwrap();
    let header_only: String = text
        .lines()
        .take(7)
        .map(|l| if l.starts_with("entries=") { "entries=0" } else { l })
        .collect::<Vec<_>>()
        .join("\n");
    let empty = dir.path().join("empty.txt");
    fs::write(&empty, header_only).unwrap();
    let out = run(
        dir.path(),
        &["--config", &cfg, "ber-sweep", "--codebook", empty.to_str().unwrap()],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
}

#[test]
fn validate_reports_each_hop() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\ntag = [1.5, 0.0, 1.0]\n");
    let out = ok(&run(dir.path(), &["--config", &cfg, "validate"]));
    assert!(out.contains("source->tag: 196/196 cells outside"), "{out}");
    assert!(out.contains("source->reader: 0/196"));
    let csv = fs::read_to_string(dir.path().join("deflection.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 196);
}

#[test]
fn bad_schema_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("v2.toml");
    fs::write(&p, "schema_version = 2\n").unwrap();
    let out = run(dir.path(), &["--config", p.to_str().unwrap(), "validate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema_version"));
}
