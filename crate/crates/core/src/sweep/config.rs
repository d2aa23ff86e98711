//! Flat `key = value` configuration files.
//!
//! Values are numbers, booleans, words, or arithmetic expressions in `pi`
//! (`2*pi`, `-pi/4`, `0.5pi`). Lists are comma separated. `#` starts a comment.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{reference_pulse_width, ExpansionOrder, NumericalParams, PhysicalParams};
use crate::mps::TruncationPolicy;
use crate::observables::PhotonStats;

/// Every key the parser accepts.
pub const KNOWN_KEYS: &[&str] = &[
    "gamma",
    "tau",
    "phi",
    "pulse_area",
    "pulse_width",
    "feedback",
    "dt",
    "bin_photon_cutoff",
    "t_start",
    "t_end",
    "expansion_order",
    "svd_threshold",
    "bond_max",
    "initially_excited",
    "baseline",
    "baseline_p0",
    "baseline_p1",
    "baseline_p2",
    "baseline_p3",
    "output_population",
    "output_normalized",
    "timing",
    "sweep_axis1",
    "sweep_axis1_min",
    "sweep_axis1_max",
    "sweep_axis1_count",
    "sweep_axis1_spacing",
    "sweep_axis1_values",
    "sweep_axis2",
    "sweep_axis2_min",
    "sweep_axis2_max",
    "sweep_axis2_count",
    "sweep_axis2_spacing",
    "sweep_axis2_values",
    "omega0",
    "c0",
];

/// Points per decade of a geometric axis without an explicit count.
pub const POINTS_PER_DECADE: f64 = 24.0;

#[derive(Clone, Debug, PartialEq)]
pub enum BaselineMode {
    /// Simulate the no-feedback run (once per distinct pulse and decay rate).
    Auto,
    Provided(PhotonStats),
    None,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Outputs {
    pub population_series: bool,
    pub normalized: bool,
}

/// Numerical controls before they are resolved against a parameter point;
/// unset entries fall back to [`NumericalParams::for_physics`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NumericalSettings {
    pub dt: Option<f64>,
    pub bin_photon_cutoff: usize,
    pub t_start: Option<f64>,
    pub t_end: Option<f64>,
    pub expansion_order: ExpansionOrder,
    pub truncation: TruncationPolicy,
    pub initially_excited: bool,
}

impl Default for NumericalSettings {
    fn default() -> Self {
        Self {
            dt: None,
            bin_photon_cutoff: 2,
            t_start: None,
            t_end: None,
            expansion_order: ExpansionOrder::Second,
            truncation: TruncationPolicy::default(),
            initially_excited: false,
        }
    }
}

impl NumericalSettings {
    pub fn resolve(&self, params: &PhysicalParams) -> NumericalParams {
        let dt = self.dt.unwrap_or_else(|| NumericalParams::max_dt(params));
        let base = NumericalParams::for_physics(params, dt);
        NumericalParams {
            bin_photon_cutoff: self.bin_photon_cutoff,
            t_start: self.t_start.unwrap_or(base.t_start),
            t_end: self.t_end.unwrap_or(base.t_end),
            expansion_order: self.expansion_order,
            truncation: self.truncation,
            initially_excited: self.initially_excited,
            ..base
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub physical: PhysicalParams,
    pub numerical: NumericalSettings,
    pub outputs: Outputs,
    pub baseline: BaselineMode,
    /// Record wall times (makes output non-reproducible).
    pub timing: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AxisParam {
    Tau,
    Phi,
    PulseArea,
}

impl AxisParam {
    pub fn name(self) -> &'static str {
        match self {
            AxisParam::Tau => "tau",
            AxisParam::Phi => "phi",
            AxisParam::PulseArea => "pulse_area",
        }
    }

    pub fn apply(self, params: &PhysicalParams, value: f64) -> Result<PhysicalParams> {
        let mut p = *params;
        match self {
            AxisParam::Tau => p.tau = value,
            AxisParam::Phi => p.phi = crate::model::wrap_phase(value),
            AxisParam::PulseArea => p.pulse_area = value,
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub param: AxisParam,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    /// One or two axes; the last varies fastest.
    pub axes: Vec<Axis>,
    pub fixed: RunConfig,
}

impl SweepSpec {
    pub fn single(fixed: RunConfig) -> Self {
        Self { axes: Vec::new(), fixed }
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical parameters of grid point `index` (row-major over the axes).
    pub fn point(&self, index: usize) -> Result<PhysicalParams> {
        let mut p = self.fixed.physical;
        let mut rem = index;
        for axis in self.axes.iter().rev() {
            let n = axis.values.len();
            p = axis.param.apply(&p, axis.values[rem % n])?;
            rem /= n;
        }
        Ok(p)
    }
}

/// Command-line numeric overrides, applied on top of the file.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub bond_max: Option<usize>,
    pub svd_threshold: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigFile {
    pub run: RunConfig,
    pub sweep: Option<SweepSpec>,
    pub omega0: Option<f64>,
    pub c0: Option<f64>,
}

impl ConfigFile {
    /// The sweep, or a one-point sweep over the fixed parameters.
    pub fn sweep_or_single(&self) -> SweepSpec {
        self.sweep.clone().unwrap_or_else(|| SweepSpec::single(self.run.clone()))
    }
}

struct Entry {
    line: usize,
    value: String,
}

/// Parse configuration text; `overrides` take precedence over file values.
pub fn parse_config(text: &str, overrides: &Overrides) -> Result<ConfigFile> {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::config(line, content, "expected `key = value`"));
        };
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::config(line, key, "unknown key"));
        }
        let value = value.trim().to_string();
        if value.is_empty() {
            return Err(Error::config(line, key, "missing value"));
        }
        if let Some(prev) = entries.get(&key) {
            return Err(Error::config(line, key, format!("duplicate key (first set on line {})", prev.line)));
        }
        entries.insert(key, Entry { line, value });
    }
    Reader { entries }.build(overrides)
}

struct Reader {
    entries: BTreeMap<String, Entry>,
}

impl Reader {
    fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }

    fn err(&self, key: &str, message: impl Into<String>) -> Error {
        Error::config(self.line(key), key, message)
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        self.entries
            .get(key)
            .map(|e| eval_expr(&e.value).map_err(|m| Error::config(e.line, key, m)))
            .transpose()
    }

    fn integer(&self, key: &str) -> Result<Option<usize>> {
        match self.number(key)? {
            None => Ok(None),
            Some(v) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => Ok(Some(v as usize)),
            Some(v) => Err(self.err(key, format!("expected a non-negative integer, got {v}"))),
        }
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>> {
        let Some(e) = self.entries.get(key) else { return Ok(None) };
        match e.value.to_ascii_lowercase().as_str() {
            "true" | "yes" | "on" | "1" => Ok(Some(true)),
            "false" | "no" | "off" | "0" => Ok(Some(false)),
            other => Err(Error::config(e.line, key, format!("expected true/false, got `{other}`"))),
        }
    }

    fn word(&self, key: &str) -> Option<String> {
        self.entries.get(key).map(|e| e.value.to_ascii_lowercase())
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(e) = self.entries.get(key) else { return Ok(None) };
        e.value
            .split(',')
            .map(|item| eval_expr(item.trim()).map_err(|m| Error::config(e.line, key, m)))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn build(&self, overrides: &Overrides) -> Result<ConfigFile> {
        let gamma = self.number("gamma")?.unwrap_or(1.0);
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(self.err("gamma", "must be positive"));
        }
        let tau = self.number("tau")?.unwrap_or(0.0);
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(self.err("tau", "must be non-negative"));
        }
        let pulse_width = self.number("pulse_width")?.unwrap_or_else(|| reference_pulse_width(gamma));
        if !(pulse_width > 0.0 && pulse_width.is_finite()) {
            return Err(self.err("pulse_width", "must be positive"));
        }
        let sweeps_tau = ["sweep_axis1", "sweep_axis2"].iter().any(|k| self.word(k).as_deref() == Some("tau"));
        let feedback = self.boolean("feedback")?.unwrap_or(tau > 0.0 || sweeps_tau);
        let physical = PhysicalParams::new(
            gamma,
            tau,
            self.number("phi")?.unwrap_or(0.0),
            self.number("pulse_area")?.unwrap_or(0.0),
            pulse_width,
            feedback,
        )
        .map_err(|e| self.err("tau", e.to_string()))?;

        let mut numerical = NumericalSettings {
            dt: overrides.dt.or(self.number("dt")?),
            t_start: self.number("t_start")?,
            t_end: self.number("t_end")?,
            initially_excited: self.boolean("initially_excited")?.unwrap_or(false),
            ..NumericalSettings::default()
        };
        if let Some(n) = self.integer("bin_photon_cutoff")? {
            numerical.bin_photon_cutoff = n;
        }
        if let Some(order) = self.integer("expansion_order")? {
            numerical.expansion_order =
                ExpansionOrder::from_u8(order.min(255) as u8).map_err(|e| self.err("expansion_order", e.to_string()))?;
        }
        let threshold = overrides.svd_threshold.or(self.number("svd_threshold")?);
        let bond = overrides.bond_max.or(self.integer("bond_max")?);
        let mut truncation = TruncationPolicy::default();
        if let Some(t) = threshold {
            truncation.svd_threshold = t;
        }
        if let Some(b) = bond {
            truncation.max_bond = b;
        }
        truncation.validate().map_err(|e| self.err("svd_threshold", e.to_string()))?;
        numerical.truncation = truncation;

        let outputs = Outputs {
            population_series: self.boolean("output_population")?.unwrap_or(false),
            normalized: self.boolean("output_normalized")?.unwrap_or(false),
        };
        let baseline = match self.word("baseline").as_deref() {
            None | Some("auto") => BaselineMode::Auto,
            Some("none") => BaselineMode::None,
            Some("provided") => {
                let mut p = [0.0; 4];
                for (n, slot) in p.iter_mut().enumerate() {
                    let key = format!("baseline_p{n}");
                    *slot = self
                        .number(&key)?
                        .ok_or_else(|| self.err("baseline", format!("provided baseline needs {key}")))?;
                }
                BaselineMode::Provided(PhotonStats::from_distribution(&p))
            }
            Some(other) => return Err(self.err("baseline", format!("expected auto|provided|none, got `{other}`"))),
        };
        if outputs.normalized && baseline == BaselineMode::None {
            return Err(self.err("output_normalized", "normalized output needs a baseline (baseline = none)"));
        }
        let run = RunConfig { physical, numerical, outputs, baseline, timing: self.boolean("timing")?.unwrap_or(false) };

        let mut axes = Vec::new();
        for slot in ["sweep_axis1", "sweep_axis2"] {
            if let Some(axis) = self.axis(slot)? {
                if axes.iter().any(|a: &Axis| a.param == axis.param) {
                    return Err(self.err(slot, "sweep axes must be distinct"));
                }
                axes.push(axis);
            }
        }
        if axes.is_empty() && self.entries.contains_key("sweep_axis2") {
            return Err(self.err("sweep_axis2", "sweep_axis2 needs sweep_axis1"));
        }
        let sweep = (!axes.is_empty()).then(|| SweepSpec { axes, fixed: run.clone() });

        let config = ConfigFile { run, sweep, omega0: self.number("omega0")?, c0: self.number("c0")? };
        self.check_points(&config)?;
        Ok(config)
    }

    fn axis(&self, slot: &str) -> Result<Option<Axis>> {
        let Some(name) = self.word(slot) else {
            for suffix in ["min", "max", "count", "spacing", "values"] {
                let key = format!("{slot}_{suffix}");
                if self.entries.contains_key(&key) {
                    return Err(self.err(&key, format!("set without {slot}")));
                }
            }
            return Ok(None);
        };
        let param = match name.as_str() {
            "tau" => AxisParam::Tau,
            "phi" => AxisParam::Phi,
            "pulse_area" => AxisParam::PulseArea,
            other => return Err(self.err(slot, format!("expected tau|phi|pulse_area, got `{other}`"))),
        };
        let key = |s: &str| format!("{slot}_{s}");
        if let Some(values) = self.list(&key("values"))? {
            for k in ["min", "max", "count", "spacing"] {
                if self.entries.contains_key(&key(k)) {
                    return Err(self.err(&key(k), "cannot be combined with an explicit value list"));
                }
            }
            return Ok(Some(Axis { param, values }));
        }
        let min = self.number(&key("min"))?.ok_or_else(|| self.err(slot, format!("needs {} or {}", key("min"), key("values"))))?;
        let max = self.number(&key("max"))?.ok_or_else(|| self.err(slot, format!("needs {}", key("max"))))?;
        if max < min {
            return Err(self.err(&key("max"), "must not be below the minimum"));
        }
        let geometric = match self.word(&key("spacing")).as_deref() {
            None => param == AxisParam::Tau,
            Some("geometric") => true,
            Some("linear") => false,
            Some(other) => return Err(self.err(&key("spacing"), format!("expected linear|geometric, got `{other}`"))),
        };
        if geometric && min <= 0.0 {
            return Err(self.err(&key("min"), "geometric spacing needs a positive minimum"));
        }
        let count = match self.integer(&key("count"))? {
            Some(0) => return Err(self.err(&key("count"), "must be at least 1")),
            Some(c) => c,
            None if geometric => ((max / min).log10() * POINTS_PER_DECADE).round() as usize + 1,
            None => return Err(self.err(slot, format!("linear spacing needs {}", key("count")))),
        };
        Ok(Some(Axis { param, values: grid(min, max, count, geometric) }))
    }

    /// Resolve and validate every grid point so invalid sweeps fail at parse time.
    fn check_points(&self, config: &ConfigFile) -> Result<()> {
        let spec = config.sweep_or_single();
        for i in 0..spec.len() {
            let p = spec.point(i).map_err(|e| self.err("sweep_axis1", e.to_string()))?;
            let num = spec.fixed.numerical.resolve(&p);
            num.validate(&p).map_err(|e| {
                let key = if config.run.numerical.dt.is_some() { "dt" } else { "tau" };
                self.err(key, format!("grid point {i}: {e}"))
            })?;
        }
        Ok(())
    }
}

pub fn grid(min: f64, max: f64, count: usize, geometric: bool) -> Vec<f64> {
    if count == 1 {
        return vec![min];
    }
    (0..count)
        .map(|i| {
            let s = i as f64 / (count - 1) as f64;
            if i == count - 1 {
                max
            } else if geometric {
                min * (max / min).powf(s)
            } else {
                min + (max - min) * s
            }
        })
        .collect()
}

/// Evaluate `+ - * /`, parentheses, numbers and `pi`; a number directly
/// followed by `pi` multiplies it.
pub fn eval_expr(text: &str) -> Result<f64, String> {
    let tokens = tokenize(text)?;
    let mut pos = 0;
    let v = parse_sum(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(format!("unexpected `{}` in `{text}`", tokens[pos]));
    }
    if !v.is_finite() {
        return Err(format!("`{text}` is not finite"));
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Op(char),
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "{v}"),
            Tok::Op(c) => write!(f, "{c}"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if "+-*/()".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            out.push(Tok::Num(s.parse().map_err(|_| format!("bad number `{s}`"))?));
            if text[..].chars().skip(i).take(2).collect::<String>().eq_ignore_ascii_case("pi") {
                out.push(Tok::Op('*'));
            }
        } else if chars[i..].iter().take(2).collect::<String>().eq_ignore_ascii_case("pi") {
            out.push(Tok::Num(PI));
            i += 2;
        } else {
            return Err(format!("unexpected character `{c}` in `{text}`"));
        }
    }
    if out.is_empty() {
        return Err("empty value".into());
    }
    Ok(out)
}

fn parse_sum(t: &[Tok], pos: &mut usize) -> Result<f64, String> {
    let mut v = parse_product(t, pos)?;
    while let Some(Tok::Op(op @ ('+' | '-'))) = t.get(*pos) {
        *pos += 1;
        let rhs = parse_product(t, pos)?;
        v = if *op == '+' { v + rhs } else { v - rhs };
    }
    Ok(v)
}

fn parse_product(t: &[Tok], pos: &mut usize) -> Result<f64, String> {
    let mut v = parse_unary(t, pos)?;
    while let Some(Tok::Op(op @ ('*' | '/'))) = t.get(*pos) {
        *pos += 1;
        let rhs = parse_unary(t, pos)?;
        v = if *op == '*' { v * rhs } else { v / rhs };
    }
    Ok(v)
}

fn parse_unary(t: &[Tok], pos: &mut usize) -> Result<f64, String> {
    match t.get(*pos) {
        Some(Tok::Op('-')) => {
            *pos += 1;
            Ok(-parse_unary(t, pos)?)
        }
        Some(Tok::Op('+')) => {
            *pos += 1;
            parse_unary(t, pos)
        }
        Some(Tok::Num(v)) => {
            *pos += 1;
            Ok(*v)
        }
        Some(Tok::Op('(')) => {
            *pos += 1;
            let v = parse_sum(t, pos)?;
            if t.get(*pos) != Some(&Tok::Op(')')) {
                return Err("missing `)`".into());
            }
            *pos += 1;
            Ok(v)
        }
        Some(tok) => Err(format!("unexpected `{tok}`")),
        None => Err("unexpected end of expression".into()),
    }
}
