//! Configuration, single runs, parameter sweeps and record output for the
//! `pyragas` command line tool.

mod config;
mod record;
mod run;

pub use config::{
    eval_expr, grid, parse_config, Axis, AxisParam, BaselineMode, ConfigFile, NumericalSettings, Outputs, Overrides,
    RunConfig, SweepSpec, KNOWN_KEYS, POINTS_PER_DECADE,
};
pub use record::{emit, fmt_float, read_records, write_records, write_series, Format, OutputRecord, CSV_COLUMNS};
pub use run::{make_record, run_baseline, run_sweep, run_sweep_detailed, simulate_point, PointResult};
