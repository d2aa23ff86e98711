use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pyragas_mps::oracles::{
    analytic_feedback_population, dde_integrate, markov_counting_pn, phase_robustness, piecewise_feedback_population,
    rabi_final_population, SPEED_OF_LIGHT,
};
use pyragas_mps::sweep::{
    fmt_float, make_record, parse_config, run_baseline, run_sweep_detailed, write_records, write_series, ConfigFile,
    Format, Overrides,
};
use pyragas_mps::Error;

#[derive(Parser)]
#[command(name = "pyragas", version, about = "Photon statistics of a pulsed emitter with mirror feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the fixed parameter point of the config.
    Run(Common),
    /// Simulate every point of the configured sweep.
    Sweep(Common),
    /// Simulate the no-feedback reference of the config's pulse.
    Baseline(Common),
    /// Evaluate one of the non-MPS references.
    Oracle {
        #[arg(value_enum)]
        kind: OracleKind,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    /// Delay-equation population, with the closed forms on [τ, 2τ].
    Dde,
    /// Photon-number distribution of the Markovian counting hierarchy.
    Counting,
    /// Excited population after an isolated pulse.
    Rabi,
    /// Mirror displacement tolerance ΔL.
    Robustness,
}

#[derive(Args)]
struct Common {
    /// Config file (`key = value` lines); stdin when omitted or `-`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Parallel workers for sweeps.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    bond_max: Option<usize>,
    #[arg(long)]
    svd_threshold: Option<f64>,
}

enum Failure {
    Config(String),
    Numerical(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::InvalidArgument(_) => Failure::Config(e.to_string()),
            e if e.is_numerical_guard() => Failure::Numerical(e.to_string()),
            e => Failure::Other(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical guard: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}

fn load(common: &Common) -> Result<ConfigFile, Failure> {
    let mut text = String::new();
    match common.config.as_deref() {
        None => std::io::stdin().read_to_string(&mut text).map(|_| ()),
        Some(p) if p == Path::new("-") => std::io::stdin().read_to_string(&mut text).map(|_| ()),
        Some(p) => std::fs::read_to_string(p).map(|t| text = t),
    }
    .map_err(|e| Failure::Config(format!("cannot read config: {e}")))?;
    let overrides = Overrides { dt: common.dt, bond_max: common.bond_max, svd_threshold: common.svd_threshold };
    if common.workers == 0 {
        return Err(Failure::Config("--workers must be at least 1".into()));
    }
    Ok(parse_config(&text, &overrides)?)
}

fn output(common: &Common) -> Result<(Box<dyn Write>, PathBuf), Failure> {
    match &common.out {
        Some(p) => {
            let f = std::fs::File::create(p).map_err(|e| Failure::Other(format!("{}: {e}", p.display())))?;
            Ok((Box::new(f), p.clone()))
        }
        None => Ok((Box::new(std::io::stdout().lock()), PathBuf::from("<stdout>"))),
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(common) => run(&common),
        Command::Sweep(common) => sweep(&common),
        Command::Baseline(common) => baseline(&common),
        Command::Oracle { kind, common } => oracle(kind, &common),
    }
}

fn run(common: &Common) -> Result<(), Failure> {
    let cfg = load(common)?;
    if cfg.sweep.is_some() {
        return Err(Failure::Config("config defines sweep axes; use the `sweep` subcommand".into()));
    }
    if cfg.run.outputs.population_series && common.out.is_none() {
        return Err(Failure::Config("output_population needs --out".into()));
    }
    let (records, results) = run_sweep_detailed(&cfg.sweep_or_single(), 1)?;
    let (out, label) = output(common)?;
    write_records(&records, common.format, out, &label)?;
    match &results[0] {
        Ok(res) if cfg.run.outputs.population_series => {
            let path = series_path(&label);
            let f = std::fs::File::create(&path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
            write_series(&res.trajectory, f, &path)?;
            Ok(())
        }
        Ok(_) => Ok(()),
        Err(e) => Err(clone_failure(e)),
    }
}

fn series_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}_population.csv"))
}

fn clone_failure(e: &Error) -> Failure {
    if e.is_numerical_guard() {
        Failure::Numerical(e.to_string())
    } else {
        Failure::Other(e.to_string())
    }
}

fn sweep(common: &Common) -> Result<(), Failure> {
    let cfg = load(common)?;
    let spec = cfg.sweep_or_single();
    let (records, results) = run_sweep_detailed(&spec, common.workers)?;
    let (out, label) = output(common)?;
    write_records(&records, common.format, out, &label)?;
    let failures: Vec<&Error> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    if let Some(e) = failures.iter().find(|e| e.is_numerical_guard()) {
        return Err(Failure::Numerical(format!("{} of {} points failed; first: {e}", failures.len(), records.len())));
    }
    if let Some(e) = failures.first() {
        return Err(Failure::Other(format!("{} of {} points failed; first: {e}", failures.len(), records.len())));
    }
    Ok(())
}

fn baseline(common: &Common) -> Result<(), Failure> {
    let cfg = load(common)?;
    let res = run_baseline(&cfg.run.physical, &cfg.run)?;
    let rec = make_record(0, &res.params, &res.numerical, &Ok(res.clone()), None, None);
    let (out, label) = output(common)?;
    write_records(&[rec], common.format, out, &label)?;
    Ok(())
}

fn write_table(common: &Common, columns: &[&str], rows: &[Vec<f64>]) -> Result<(), Failure> {
    let (mut out, label) = output(common)?;
    let io = |e: std::io::Error| Failure::Other(format!("{}: {e}", label.display()));
    match common.format {
        Format::Csv => {
            writeln!(out, "{}", columns.join(",")).map_err(io)?;
            for row in rows {
                let cells: Vec<String> =
                    row.iter().map(|v| if v.is_nan() { String::new() } else { fmt_float(*v) }).collect();
                writeln!(out, "{}", cells.join(",")).map_err(io)?;
            }
        }
        Format::JsonLines => {
            for row in rows {
                let obj: serde_json::Map<String, serde_json::Value> = columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| (c.to_string(), if v.is_nan() { serde_json::Value::Null } else { (*v).into() }))
                    .collect();
                writeln!(out, "{}", serde_json::Value::Object(obj)).map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)
}

fn oracle(kind: OracleKind, common: &Common) -> Result<(), Failure> {
    let cfg = load(common)?;
    let p = cfg.run.physical;
    match kind {
        OracleKind::Dde => {
            if p.tau <= 0.0 {
                return Err(Failure::Config("the dde oracle needs tau > 0".into()));
            }
            let t_max = cfg.run.numerical.t_end.unwrap_or(4.0 * p.tau);
            let dt = common.dt.unwrap_or(p.tau / 200.0);
            let sol = dde_integrate(p.gamma, p.tau, p.phi, t_max, dt)?;
            let rows: Vec<Vec<f64>> = sol
                .times
                .iter()
                .zip(&sol.population)
                .map(|(&t, &pop)| {
                    let a = analytic_feedback_population(t, p.gamma, p.tau, p.phi).unwrap_or(f64::NAN);
                    let b = piecewise_feedback_population(t, p.gamma, p.tau, p.phi).unwrap_or(f64::NAN);
                    vec![t, pop, (-2.0 * p.gamma * t).exp(), a, b]
                })
                .collect();
            write_table(common, &["time", "population", "markov", "closed_form", "piecewise"], &rows)
        }
        OracleKind::Counting => {
            let num = cfg.run.numerical.resolve(&p.without_feedback());
            let dt = common.dt.unwrap_or(p.pulse_width / 50.0).min(p.pulse_width / 50.0);
            let dist = markov_counting_pn(p.pulse_area, p.pulse_width, p.gamma, 4, (num.t_start, num.t_end), dt)?;
            let rows: Vec<Vec<f64>> = dist.p.iter().enumerate().map(|(n, &pn)| vec![n as f64, pn]).collect();
            write_table(common, &["n", "p"], &rows)
        }
        OracleKind::Rabi => write_table(
            common,
            &["pulse_area", "population"],
            &[vec![p.pulse_area, rabi_final_population(p.pulse_area)]],
        ),
        OracleKind::Robustness => {
            let omega0 = cfg.omega0.ok_or_else(|| Failure::Config("robustness oracle needs omega0".into()))?;
            let c0 = cfg.c0.unwrap_or(SPEED_OF_LIGHT);
            write_table(common, &["omega0", "c0", "delta_l"], &[vec![omega0, c0, phase_robustness(omega0, c0)?]])
        }
    }
}
