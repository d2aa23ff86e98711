//! One self-describing output row per parameter point, written as CSV or
//! JSON lines.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub index: usize,
    /// `ok`, or the error that stopped this point.
    pub status: String,
    pub gamma: f64,
    pub tau: f64,
    /// `q Δt`, the delay actually simulated.
    pub tau_effective: f64,
    pub phi: f64,
    pub pulse_area: f64,
    pub pulse_width: f64,
    pub feedback: bool,
    pub dt: f64,
    pub q: usize,
    pub bin_photon_cutoff: usize,
    pub expansion_order: u8,
    pub svd_threshold: f64,
    pub bond_max: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub p0: Option<f64>,
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    pub p3: Option<f64>,
    pub r: Option<f64>,
    pub p4_bound: Option<f64>,
    pub closure_error: Option<f64>,
    pub base_p0: Option<f64>,
    pub base_p1: Option<f64>,
    pub base_p2: Option<f64>,
    pub base_p3: Option<f64>,
    pub base_r: Option<f64>,
    pub pbar0: Option<f64>,
    pub pbar1: Option<f64>,
    pub pbar2: Option<f64>,
    pub pbar3: Option<f64>,
    pub r_ratio: Option<f64>,
    pub discarded_weight: Option<f64>,
    pub max_bond_dim: Option<usize>,
    pub final_population: Option<f64>,
    pub wall_time: Option<f64>,
}

/// CSV header, in column order.
pub const CSV_COLUMNS: &[&str] = &[
    "index",
    "status",
    "gamma",
    "tau",
    "tau_effective",
    "phi",
    "pulse_area",
    "pulse_width",
    "feedback",
    "dt",
    "q",
    "bin_photon_cutoff",
    "expansion_order",
    "svd_threshold",
    "bond_max",
    "t_start",
    "t_end",
    "c1",
    "c2",
    "c3",
    "p0",
    "p1",
    "p2",
    "p3",
    "r",
    "p4_bound",
    "closure_error",
    "base_p0",
    "base_p1",
    "base_p2",
    "base_p3",
    "base_r",
    "pbar0",
    "pbar1",
    "pbar2",
    "pbar3",
    "r_ratio",
    "discarded_weight",
    "max_bond_dim",
    "final_population",
    "wall_time",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    JsonLines,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" | "json-lines" => Ok(Format::JsonLines),
            other => Err(format!("unknown format `{other}` (expected csv or jsonl)")),
        }
    }
}

/// 13 significant digits, enough for a 1e-12 relative round trip.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.12e}")
    } else {
        x.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

impl OutputRecord {
    fn csv_fields(&self) -> Vec<String> {
        let mut f = vec![
            self.index.to_string(),
            self.status.clone(),
            fmt_float(self.gamma),
            fmt_float(self.tau),
            fmt_float(self.tau_effective),
            fmt_float(self.phi),
            fmt_float(self.pulse_area),
            fmt_float(self.pulse_width),
            self.feedback.to_string(),
            fmt_float(self.dt),
            self.q.to_string(),
            self.bin_photon_cutoff.to_string(),
            self.expansion_order.to_string(),
            fmt_float(self.svd_threshold),
            self.bond_max.to_string(),
            fmt_float(self.t_start),
            fmt_float(self.t_end),
        ];
        for v in [
            self.c1,
            self.c2,
            self.c3,
            self.p0,
            self.p1,
            self.p2,
            self.p3,
            self.r,
            self.p4_bound,
            self.closure_error,
            self.base_p0,
            self.base_p1,
            self.base_p2,
            self.base_p3,
            self.base_r,
            self.pbar0,
            self.pbar1,
            self.pbar2,
            self.pbar3,
            self.r_ratio,
            self.discarded_weight,
        ] {
            f.push(opt(v));
        }
        f.push(self.max_bond_dim.map(|b| b.to_string()).unwrap_or_default());
        f.push(opt(self.final_population));
        f.push(opt(self.wall_time));
        f
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    io_err(path, std::io::Error::other(e))
}

/// Write records to `out`; `label` names the destination in errors.
pub fn write_records<W: Write>(records: &[OutputRecord], format: Format, out: W, label: &Path) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(CSV_COLUMNS).map_err(|e| csv_err(label, e))?;
            for r in records {
                w.write_record(r.csv_fields()).map_err(|e| csv_err(label, e))?;
            }
            w.flush().map_err(|e| io_err(label, e))
        }
        Format::JsonLines => {
            let mut out = std::io::BufWriter::new(out);
            for r in records {
                serde_json::to_writer(&mut out, r).map_err(|e| io_err(label, e.into()))?;
                out.write_all(b"\n").map_err(|e| io_err(label, e))?;
            }
            out.flush().map_err(|e| io_err(label, e))
        }
    }
}

pub fn emit(records: &[OutputRecord], format: Format, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    write_records(records, format, file, path)
}

/// Read records back from either format.
pub fn read_records<R: Read>(input: R, format: Format, label: &Path) -> Result<Vec<OutputRecord>> {
    match format {
        Format::Csv => {
            let mut r = csv::Reader::from_reader(input);
            let header = r.headers().map_err(|e| csv_err(label, e))?.clone();
            if header.iter().ne(CSV_COLUMNS.iter().copied()) {
                return Err(Error::invalid(format!("{}: unexpected CSV header", label.display())));
            }
            r.deserialize().map(|row| row.map_err(|e| csv_err(label, e))).collect()
        }
        Format::JsonLines => {
            let mut text = String::new();
            let mut input = input;
            input.read_to_string(&mut text).map_err(|e| io_err(label, e))?;
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| serde_json::from_str(l).map_err(|e| io_err(label, e.into())))
                .collect()
        }
    }
}

/// One `time,population,norm,discarded_weight` row per step.
pub fn write_series<W: Write>(traj: &crate::evolve::Trajectory, out: W, label: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "population", "norm", "discarded_weight"]).map_err(|e| csv_err(label, e))?;
    for i in 0..traj.times.len() {
        w.write_record([
            fmt_float(traj.times[i]),
            fmt_float(traj.population[i]),
            fmt_float(traj.norm[i]),
            fmt_float(traj.discarded_weight[i]),
        ])
        .map_err(|e| csv_err(label, e))?;
    }
    w.flush().map_err(|e| io_err(label, e))
}
