use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use pyragas_mps::sweep::*;
use pyragas_mps::Error;

const QUICK: &str = "\
# small driven run with feedback
gamma = 1
tau = 0.02
phi = pi/3
pulse_area = pi
t_end = 0.3
";

fn parse(text: &str) -> pyragas_mps::Result<ConfigFile> {
    parse_config(text, &Overrides::default())
}

fn config_line(text: &str) -> usize {
    match parse(text) {
        Err(Error::Config { line, .. }) => line,
        other => panic!("expected a config error, got {other:?}"),
    }
}

fn csv_bytes(records: &[OutputRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    write_records(records, Format::Csv, &mut out, Path::new("mem")).unwrap();
    out
}

#[test]
fn config_errors_name_the_line() {
    assert_eq!(config_line("gamma = 1\nbogus = 2\n"), 2);
    assert_eq!(config_line("tau = 0.1\n\ntau = 0.2\n"), 3);
    assert_eq!(config_line("# comment\ntau = -0.1\n"), 2);
    assert_eq!(config_line("tau = 0.1\noutput_normalized = true\nbaseline = none\n"), 2);
    assert_eq!(config_line("pulse_area = 2*pi +\n"), 1);
    assert_eq!(config_line("just words\n"), 1);
    assert_eq!(config_line("tau = 0.1\ndt = 0.5\n"), 2);
    assert_eq!(config_line("sweep_axis1 = tau\nsweep_axis1_min = 0.01\nsweep_axis1_max = 0.3\nsweep_axis1_spacing = linear\n"), 1);
    assert!(parse("feedback = maybe\n").unwrap_err().to_string().contains("feedback"));
}

#[test]
fn minimal_config_is_valid() {
    let cfg = parse("gamma = 1\ntau = 0.06\nphi = 0\npulse_area = 2*pi # A = 2π\n").unwrap();
    let p = cfg.run.physical;
    assert!(p.feedback_enabled && (p.pulse_area - 2.0 * std::f64::consts::PI).abs() < 1e-15);
    assert!((p.pulse_width - pyragas_mps::model::reference_pulse_width(1.0)).abs() < 1e-15);
    assert!(cfg.sweep.is_none());
    let overridden = parse_config(QUICK, &Overrides { dt: Some(1e-3), bond_max: Some(16), svd_threshold: None }).unwrap();
    let num = overridden.run.numerical.resolve(&overridden.run.physical);
    assert_eq!((num.dt, num.truncation.max_bond, num.truncation.svd_threshold), (1e-3, 16, 1e-7));
}

#[test]
fn default_tau_sweep_is_geometric() {
    let cfg = parse("pulse_area = 2*pi\nsweep_axis1 = tau\nsweep_axis1_min = 0.01\nsweep_axis1_max = 0.1\n").unwrap();
    let spec = cfg.sweep.unwrap();
    assert_eq!(spec.len(), 25);
    let v = &spec.axes[0].values;
    assert!((v[24] - 0.1).abs() < 1e-15 && (v[1] / v[0] - v[24] / v[23]).abs() < 1e-12);
    assert!(spec.fixed.physical.feedback_enabled);
}

#[test]
fn golden_header() {
    let header = String::from_utf8(csv_bytes(&[])).unwrap();
    assert_eq!(
        header,
        "index,status,gamma,tau,tau_effective,phi,pulse_area,pulse_width,feedback,dt,q,bin_photon_cutoff,\
         expansion_order,svd_threshold,bond_max,t_start,t_end,c1,c2,c3,p0,p1,p2,p3,r,p4_bound,closure_error,\
         base_p0,base_p1,base_p2,base_p3,base_r,pbar0,pbar1,pbar2,pbar3,r_ratio,discarded_weight,max_bond_dim,\
         final_population,wall_time\n"
    );
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    emit(&[], Format::Csv, &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);
    let jsonl = dir.path().join("empty.jsonl");
    emit(&[], Format::JsonLines, &jsonl).unwrap();
    assert!(std::fs::read_to_string(&jsonl).unwrap().is_empty());
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

#[test]
fn records_round_trip() {
    let cfg = parse(&format!("{QUICK}sweep_axis1 = phi\nsweep_axis1_values = 0, pi\ntiming = true\n")).unwrap();
    let mut records = run_sweep(&cfg.sweep.unwrap(), 1).unwrap();
    records[1].p3 = Some(1.0 / 3.0 * 1e-7);
    records[1].status = "error: with, comma".into();
    let dir = tempfile::tempdir().unwrap();
    for format in [Format::Csv, Format::JsonLines] {
        let path = dir.path().join("out");
        emit(&records, format, &path).unwrap();
        let back = read_records(std::fs::File::open(&path).unwrap(), format, &path).unwrap();
        assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            assert_eq!((a.index, &a.status, a.q, a.feedback, a.max_bond_dim), (b.index, &b.status, b.q, b.feedback, b.max_bond_dim));
            let pairs = [
                (Some(a.tau), Some(b.tau)),
                (Some(a.phi), Some(b.phi)),
                (a.c2, b.c2),
                (a.p1, b.p1),
                (a.p3, b.p3),
                (a.pbar2, b.pbar2),
                (a.r_ratio, b.r_ratio),
                (a.discarded_weight, b.discarded_weight),
                (a.wall_time, b.wall_time),
            ];
            for (x, y) in pairs {
                assert_eq!(x.is_some(), y.is_some());
                if let (Some(x), Some(y)) = (x, y) {
                    assert!(close(x, y), "{x} vs {y}");
                }
            }
        }
    }
    assert!(read_records(&b"index,status\n"[..], Format::Csv, Path::new("bad")).is_err());
}

#[test]
fn worker_count_does_not_change_output() {
    let cfg = parse(&format!("{QUICK}sweep_axis1 = phi\nsweep_axis1_values = 0, pi/2, pi\n")).unwrap();
    let spec = cfg.sweep.unwrap();
    let one = run_sweep(&spec, 1).unwrap();
    let three = run_sweep(&spec, 3).unwrap();
    assert_eq!(csv_bytes(&one), csv_bytes(&three));
    assert_eq!(one.iter().map(|r| r.index).collect::<Vec<_>>(), vec![0, 1, 2]);
    // one shared baseline
    assert!(one.iter().all(|r| r.base_p1 == one[0].base_p1 && r.pbar1.is_some()));
}

fn pyragas(args: &[&str], config: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_pyragas"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(config.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

#[test]
fn single_point_sweep_equals_run() {
    let run = pyragas(&["run"], QUICK);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let sweep = pyragas(&["sweep", "--workers", "2"], &format!("{QUICK}sweep_axis1 = pulse_area\nsweep_axis1_values = pi\n"));
    assert_eq!(sweep.status.code(), Some(0), "{}", String::from_utf8_lossy(&sweep.stderr));
    assert_eq!(run.stdout, sweep.stdout);
    let text = String::from_utf8(run.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0,ok,"));
}

#[test]
fn exit_codes() {
    assert_eq!(pyragas(&["run"], "bogus = 1\n").status.code(), Some(2));
    assert_eq!(pyragas(&["run", "--dt", "1"], QUICK).status.code(), Some(2));
    assert_eq!(pyragas(&["run", "--workers", "0"], QUICK).status.code(), Some(2));
    assert_eq!(pyragas(&["run"], "tau = 0.05\nsweep_axis1 = phi\nsweep_axis1_values = 0\n").status.code(), Some(2));
    assert_eq!(pyragas(&["run", "--config", "/nonexistent/cfg"], "").status.code(), Some(2));
    let guard = "pulse_area = 2*pi\nbin_photon_cutoff = 1\nexpansion_order = 1\nt_end = 0.5\n";
    let out = pyragas(&["run"], guard);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let out = pyragas(&["sweep"], &format!("{guard}sweep_axis1 = phi\nsweep_axis1_values = 0, 1\n"));
    assert_eq!(out.status.code(), Some(3));
    // failed points are still reported
    assert_eq!(String::from_utf8(out.stdout).unwrap().matches("error: ").count(), 2);
}

#[test]
fn run_writes_files_and_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("point.jsonl");
    let cfg = dir.path().join("point.cfg");
    std::fs::write(&cfg, format!("{QUICK}output_population = true\n")).unwrap();
    let res = pyragas(
        &["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--format", "jsonl"],
        "",
    );
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let records = read_records(std::fs::File::open(&out).unwrap(), Format::JsonLines, &out).unwrap();
    assert_eq!(records.len(), 1);
    assert!(records[0].closure_error.unwrap() < 5e-3);
    let series = std::fs::read_to_string(dir.path().join("point_population.csv")).unwrap();
    assert!(series.starts_with("time,population,norm,discarded_weight\n"));
    let r = &records[0];
    let steps = ((r.t_end - r.t_start) / r.dt - 1e-9).ceil() as usize;
    assert_eq!(series.lines().count(), steps + 2);
}

#[test]
fn baseline_and_oracles() {
    let base = pyragas(&["baseline"], QUICK);
    assert_eq!(base.status.code(), Some(0));
    let text = String::from_utf8(base.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().contains(",false,"));

    let rabi = pyragas(&["oracle", "rabi"], "pulse_area = pi/2\n");
    let row: Vec<f64> =
        String::from_utf8(rabi.stdout).unwrap().lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((row[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-12 && (row[1] - 0.5).abs() < 1e-12);
    let dl = pyragas(&["oracle", "robustness", "--format", "jsonl"], "omega0 = 1/6.582119569e-16\n");
    let v: serde_json::Value = serde_json::from_slice(&dl.stdout).unwrap();
    assert!((v["delta_l"].as_f64().unwrap() - 3.1e-7).abs() < 1e-8);
    let dde = pyragas(&["oracle", "dde"], "tau = 0.5\nphi = pi\n");
    assert_eq!(dde.status.code(), Some(0));
    let table = String::from_utf8(dde.stdout).unwrap();
    assert!(table.starts_with("time,population,markov,closed_form,piecewise\n"));
    assert_eq!(table.lines().count(), 802);
    assert_eq!(pyragas(&["oracle", "dde"], "phi = pi\n").status.code(), Some(2));
    let counting = pyragas(&["oracle", "counting"], "pulse_area = 2*pi\n");
    assert_eq!(String::from_utf8(counting.stdout).unwrap().lines().count(), 6);
}
