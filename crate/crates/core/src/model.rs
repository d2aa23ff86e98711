//! Physical parameters and the per-step propagator pieces `U0`, `U1`, `U2`.
//!
//! Every operator here lives on the three-body basis `|i_S, i_n, i_τ⟩`
//! (emitter level, current bin, delayed bin) with flat index
//! `i_S * d² + i_n * d + i_τ`, `d = n_max + 1`: the emitter index is slowest and
//! the delayed-bin index fastest.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::mps::TruncationPolicy;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalParams {
    /// Radiative decay constant Γ; an isolated emitter decays as `exp(-2Γt)`.
    pub gamma: f64,
    /// Mirror round-trip delay τ.
    pub tau: f64,
    /// Feedback phase, kept in `[0, 2π)`.
    pub phi: f64,
    /// Pulse area A; an isolated pulse leaves `sin²(A/2)` in the excited level.
    pub pulse_area: f64,
    /// Gaussian width ν of the drive envelope `exp(-t²/ν²)`.
    pub pulse_width: f64,
    pub feedback_enabled: bool,
}

impl PhysicalParams {
    pub fn new(gamma: f64, tau: f64, phi: f64, pulse_area: f64, pulse_width: f64, feedback_enabled: bool) -> Result<Self> {
        let params = Self { gamma, tau, phi: wrap_phase(phi), pulse_area, pulse_width, feedback_enabled };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be non-negative, got {}", self.tau)));
        }
        if !(self.pulse_width > 0.0 && self.pulse_width.is_finite()) {
            return Err(Error::invalid(format!("pulse width must be positive, got {}", self.pulse_width)));
        }
        if !(0.0..TAU).contains(&self.phi) {
            return Err(Error::invalid(format!("phi must lie in [0, 2π), got {}", self.phi)));
        }
        if !self.pulse_area.is_finite() {
            return Err(Error::invalid("pulse area must be finite"));
        }
        Ok(())
    }

    /// The same emitter and pulse without the mirror.
    pub fn without_feedback(&self) -> Self {
        Self { feedback_enabled: false, ..*self }
    }
}

/// Pulse width used for the two-photon studies: `ν = 1 / (10 Γ sqrt(2 ln 2))`.
pub fn reference_pulse_width(gamma: f64) -> f64 {
    1.0 / (10.0 * gamma * (2.0 * std::f64::consts::LN_2).sqrt())
}

pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpansionOrder {
    First,
    Second,
}

impl ExpansionOrder {
    pub fn as_u8(self) -> u8 {
        match self {
            ExpansionOrder::First => 1,
            ExpansionOrder::Second => 2,
        }
    }

    pub fn from_u8(order: u8) -> Result<Self> {
        match order {
            1 => Ok(ExpansionOrder::First),
            2 => Ok(ExpansionOrder::Second),
            other => Err(Error::invalid(format!("expansion order must be 1 or 2, got {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NumericalParams {
    pub dt: f64,
    /// Highest photon number kept per time bin.
    pub bin_photon_cutoff: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub expansion_order: ExpansionOrder,
    pub truncation: TruncationPolicy,
    /// Start with the emitter excited instead of in the ground level.
    pub initially_excited: bool,
}

impl NumericalParams {
    /// Defaults for `params`: cutoff 2, second order, the default truncation
    /// policy, and the window `[-max(τ, 5ν), 10/Γ]` snapped outward to the grid.
    pub fn for_physics(params: &PhysicalParams, dt: f64) -> Self {
        let lead = if params.feedback_enabled { params.tau.max(5.0 * params.pulse_width) } else { 5.0 * params.pulse_width };
        let t_start = -(lead / dt - 1e-9).ceil() * dt;
        Self {
            dt,
            bin_photon_cutoff: 2,
            t_start,
            t_end: 10.0 / params.gamma,
            expansion_order: ExpansionOrder::Second,
            truncation: TruncationPolicy::default(),
            initially_excited: false,
        }
    }

    /// Largest admissible step: `min(ν/20, 0.01/Γ)`.
    pub fn max_dt(params: &PhysicalParams) -> f64 {
        (params.pulse_width / 20.0).min(0.01 / params.gamma)
    }

    pub fn validate(&self, params: &PhysicalParams) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        let max_dt = Self::max_dt(params);
        if self.dt > max_dt * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "dt = {} exceeds min(ν/20, 0.01/Γ) = {max_dt}",
                self.dt
            )));
        }
        if self.bin_photon_cutoff < 1 {
            return Err(Error::invalid("bin photon cutoff must be at least 1"));
        }
        if self.expansion_order == ExpansionOrder::Second && self.bin_photon_cutoff < 2 {
            return Err(Error::invalid("second-order stepping needs bin_photon_cutoff >= 2"));
        }
        if !(self.t_end > self.t_start) {
            return Err(Error::invalid(format!("empty window [{}, {}]", self.t_start, self.t_end)));
        }
        self.truncation.validate()?;
        self.delay_steps(params).map(|_| ())
    }

    /// Delay in steps, `q = round(τ/dt)`; zero without feedback.
    pub fn delay_steps(&self, params: &PhysicalParams) -> Result<usize> {
        if !params.feedback_enabled {
            return Ok(0);
        }
        let q = (params.tau / self.dt).round();
        if q < 1.0 {
            return Err(Error::invalid(format!(
                "feedback needs tau >= dt/2 (tau = {}, dt = {})",
                params.tau, self.dt
            )));
        }
        Ok(q as usize)
    }
}

/// Drive envelope `Ω(t) = (A/2) exp(-t²/ν²) / (ν sqrt(π))`, so `∫ 2Ω dt = A`.
pub fn pulse_envelope(t: f64, params: &PhysicalParams) -> f64 {
    let nu = params.pulse_width;
    0.5 * params.pulse_area * (-(t * t) / (nu * nu)).exp() / (nu * PI.sqrt())
}

fn basis_index(s: usize, n: usize, tau: usize, d: usize) -> usize {
    (s * d + n) * d + tau
}

fn operator_dim(n_max: usize) -> usize {
    2 * (n_max + 1) * (n_max + 1)
}

fn to_csr(m: &DMatrix<C64>) -> CsrMatrix<C64> {
    let mut coo = CooMatrix::new(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if v != C64::new(0.0, 0.0) {
                coo.push(i, j, v);
            }
        }
    }
    CsrMatrix::from(&coo)
}

pub fn to_dense(m: &CsrMatrix<C64>) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, j, v) in m.triplet_iter() {
        out[(i, j)] += *v;
    }
    out
}

/// Emitter flip `(|1⟩⟨0| + |0⟩⟨1|) ⊗ 1_n ⊗ 1_τ`, the drive Hamiltonian per
/// unit `Ω Δt`.
pub fn build_m_tls(n_max: usize) -> Result<CsrMatrix<C64>> {
    if n_max < 1 {
        return Err(Error::invalid("n_max must be at least 1"));
    }
    let d = n_max + 1;
    let dim = operator_dim(n_max);
    let mut coo = CooMatrix::new(dim, dim);
    for n in 0..d {
        for t in 0..d {
            coo.push(basis_index(1, n, t, d), basis_index(0, n, t, d), C64::new(1.0, 0.0));
            coo.push(basis_index(0, n, t, d), basis_index(1, n, t, d), C64::new(1.0, 0.0));
        }
    }
    Ok(CsrMatrix::from(&coo))
}

/// Anti-Hermitian emitter–waveguide generator for one step.
///
/// With feedback both channels carry amplitude `sqrt(ΓΔt)`; absorption from the
/// delayed bin picks up `e^{iφ}`. Without feedback only the current bin couples,
/// with amplitude `sqrt(2ΓΔt)`. Either way the bare decay is `exp(-2Γt)`.
pub fn build_m_fb(params: &PhysicalParams, dt: f64, n_max: usize) -> Result<CsrMatrix<C64>> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if n_max < 1 {
        return Err(Error::invalid("n_max must be at least 1"));
    }
    let d = n_max + 1;
    let dim = operator_dim(n_max);
    let (g_now, g_delay) = if params.feedback_enabled {
        ((params.gamma * dt).sqrt(), (params.gamma * dt).sqrt())
    } else {
        ((2.0 * params.gamma * dt).sqrt(), 0.0)
    };
    let phase = C64::from_polar(1.0, params.phi);
    let mut coo = CooMatrix::new(dim, dim);
    for n in 0..d {
        for t in 0..d {
            // σ₊ b_n: |0, n, t⟩ → |1, n-1, t⟩, and the conjugate emission with a minus sign
            if n > 0 {
                let amp = C64::new(g_now * (n as f64).sqrt(), 0.0);
                coo.push(basis_index(1, n - 1, t, d), basis_index(0, n, t, d), amp);
                coo.push(basis_index(0, n, t, d), basis_index(1, n - 1, t, d), -amp.conj());
            }
            if t > 0 && g_delay > 0.0 {
                let amp = phase * (g_delay * (t as f64).sqrt());
                coo.push(basis_index(1, n, t - 1, d), basis_index(0, n, t, d), amp);
                coo.push(basis_index(0, n, t, d), basis_index(1, n, t - 1, d), -amp.conj());
            }
        }
    }
    Ok(CsrMatrix::from(&coo))
}

/// Sparse pieces of the step propagator `U = U0 + Ω U1 + Ω² U2`.
#[derive(Clone, Debug)]
pub struct StepOperators {
    pub u0: CsrMatrix<C64>,
    pub u1: CsrMatrix<C64>,
    pub u2: CsrMatrix<C64>,
    pub n_max: usize,
    pub order: ExpansionOrder,
}

/// Taylor pieces of `exp(Ω D + F)` with `D = -iΔt M_TLS` and `F = M_fb`, kept to
/// second order in Δt (`F ~ sqrt(Δt)`), or to first order for `ExpansionOrder::First`.
pub fn build_step_operators(params: &PhysicalParams, num: &NumericalParams) -> Result<StepOperators> {
    let n_max = num.bin_photon_cutoff;
    let f = to_dense(&build_m_fb(params, num.dt, n_max)?);
    let drive = to_dense(&build_m_tls(n_max)?) * C64::new(0.0, -num.dt);
    let dim = f.nrows();
    let id = DMatrix::<C64>::identity(dim, dim);

    let f2 = &f * &f;
    let (u0, u1, u2) = match num.expansion_order {
        ExpansionOrder::Second => {
            let f3 = &f2 * &f;
            let f4 = &f3 * &f;
            let u0 = &id + &f + &f2 * C64::from(0.5) + &f3 / C64::from(6.0) + &f4 / C64::from(24.0);
            let u1 = &drive
                + (&drive * &f + &f * &drive) * C64::from(0.5)
                + (&drive * &f2 + &f * &drive * &f + &f2 * &drive) / C64::from(6.0);
            let u2 = &drive * &drive * C64::from(0.5);
            (u0, u1, u2)
        }
        ExpansionOrder::First => {
            let u0 = &id + &f + &f2 * C64::from(0.5);
            let u1 = &drive + (&drive * &f + &f * &drive) * C64::from(0.5);
            let u2 = &drive * &drive * C64::from(0.5);
            (u0, u1, u2)
        }
    };
    Ok(StepOperators { u0: to_csr(&u0), u1: to_csr(&u1), u2: to_csr(&u2), n_max, order: num.expansion_order })
}

/// Dense propagator `U0 + Ω(t) U1 + Ω(t)² U2` for the step whose envelope is
/// sampled at `t`.
pub fn assemble_u(ops: &StepOperators, t: f64, params: &PhysicalParams) -> DMatrix<C64> {
    assemble_with_rabi(ops, pulse_envelope(t, params))
}

pub fn assemble_with_rabi(ops: &StepOperators, omega: f64) -> DMatrix<C64> {
    let mut u = to_dense(&ops.u0);
    if omega != 0.0 {
        for (i, j, v) in ops.u1.triplet_iter() {
            u[(i, j)] += *v * omega;
        }
        for (i, j, v) in ops.u2.triplet_iter() {
            u[(i, j)] += *v * (omega * omega);
        }
    }
    u
}

impl StepOperators {
    pub fn dim(&self) -> usize {
        operator_dim(self.n_max)
    }

    /// Coordinate-list dump, one `row col re im` line per stored entry, each
    /// matrix introduced by a `# u0` / `# u1` / `# u2` header.
    pub fn write_coo<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (name, m) in [("u0", &self.u0), ("u1", &self.u1), ("u2", &self.u2)] {
            writeln!(out, "# {name} {}x{} nnz={}", m.nrows(), m.ncols(), m.nnz())?;
            for (i, j, v) in m.triplet_iter() {
                writeln!(out, "{i} {j} {:.17e} {:.17e}", v.re, v.im)?;
            }
        }
        Ok(())
    }
}
