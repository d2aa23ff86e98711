//! Time stepping of the emitter plus waveguide bins.
//!
//! Storage keeps every bin in chronological order with the emitter site sitting
//! between the last used bin and the current one. Step `k` interacts the
//! emitter with the current bin `k` and the delayed bin `k - q`:
//!
//! 1. move the orthogonality center onto the delayed bin and swap it rightward
//!    until it neighbours the emitter (`q - 1` swaps);
//! 2. apply the three-site gate on (delayed, emitter, current) and split it
//!    back as (delayed, current, emitter), which advances the emitter by one
//!    slot as part of the same two SVDs;
//! 3. swap the delayed bin back to its chronological slot (`q - 1` swaps) and
//!    return the center to the emitter.
//!
//! Without feedback the gate only touches (emitter, current) and no swaps occur.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::model::{build_step_operators, pulse_envelope, NumericalParams, PhysicalParams, StepOperators};
use crate::mps::{SiteLabel, SiteTensor, TimeBinState, TruncationPolicy};

/// Discrete time axis of one run. Bin `k` spans `[t_start + kΔt, t_start + (k+1)Δt)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulationGrid {
    pub dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Delay in steps (0 without feedback).
    pub q: usize,
    pub n_steps: usize,
}

impl SimulationGrid {
    pub fn new(params: &PhysicalParams, num: &NumericalParams) -> Result<Self> {
        num.validate(params)?;
        let q = num.delay_steps(params)?;
        let n_steps = ((num.t_end - num.t_start) / num.dt - 1e-9).ceil().max(1.0) as usize;
        Ok(Self { dt: num.dt, t_start: num.t_start, t_end: num.t_start + n_steps as f64 * num.dt, q, n_steps })
    }

    pub fn bin_time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    /// Delay actually simulated, `q Δt`.
    pub fn effective_tau(&self) -> f64 {
        self.q as f64 * self.dt
    }
}

/// Observables recorded along a run; entry `i` refers to time `times[i]`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub grid: SimulationGrid,
    pub times: Vec<f64>,
    pub population: Vec<f64>,
    pub norm: Vec<f64>,
    pub discarded_weight: Vec<f64>,
    /// Largest probability seen on the highest Fock level of a freshly gated bin.
    pub max_cutoff_weight: f64,
    pub max_bond_dim: usize,
    pub final_state: TimeBinState,
    pub wall_time: f64,
}

/// Per-step diagnostics.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepReport {
    pub swaps: usize,
    pub discarded: f64,
    pub cutoff_weight: f64,
}

/// The propagator for a step, in chain order of the gated sites.
struct StepGates {
    ops: StepOperators,
    /// `(τ, S, n)` ordering of the basis for the feedback gate.
    chain_perm: Vec<usize>,
    d: usize,
}

impl StepGates {
    fn new(ops: StepOperators) -> Self {
        let d = ops.n_max + 1;
        // chain index (τ, S, n) -> model index (S, n, τ)
        let dim = 2 * d * d;
        let mut chain_perm = vec![0; dim];
        for t in 0..d {
            for s in 0..2 {
                for n in 0..d {
                    chain_perm[(t * 2 + s) * d + n] = (s * d + n) * d + t;
                }
            }
        }
        Self { ops, chain_perm, d }
    }

    fn feedback_gate(&self, omega: f64) -> DMatrix<C64> {
        let u = crate::model::assemble_with_rabi(&self.ops, omega);
        let dim = u.nrows();
        DMatrix::from_fn(dim, dim, |r, c| u[(self.chain_perm[r], self.chain_perm[c])])
    }

    /// `(S, n)` block at empty delayed bin; exact when the generator ignores `i_τ`.
    fn local_gate(&self, omega: f64) -> DMatrix<C64> {
        let u = crate::model::assemble_with_rabi(&self.ops, omega);
        let d = self.d;
        let dim = 2 * d;
        DMatrix::from_fn(dim, dim, |r, c| u[(r * d, c * d)])
    }
}

fn number_projector(d: usize, level: usize) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(d, d);
    m[(level, level)] = C64::new(1.0, 0.0);
    m
}

/// Probability of the excited level, read at the orthogonality center.
fn center_excitation(state: &TimeBinState) -> f64 {
    let c = state.orthogonality_center();
    let site = state.site(c);
    debug_assert_eq!(state.label(c), SiteLabel::System);
    let mut excited = 0.0;
    for l in 0..site.left_dim() {
        for r in 0..site.right_dim() {
            excited += site.get(l, 1, r).norm_sqr();
        }
    }
    excited / state.norm_squared()
}

/// Advance `state` by step `k` with the propagator sampled at the bin midpoint.
pub fn step(
    state: &mut TimeBinState,
    k: usize,
    ops: &StepOperators,
    params: &PhysicalParams,
    grid: &SimulationGrid,
    policy: &TruncationPolicy,
) -> Result<StepReport> {
    let gates = StepGates::new(ops.clone());
    step_with(state, k, &gates, params, grid, policy)
}

fn step_with(
    state: &mut TimeBinState,
    k: usize,
    gates: &StepGates,
    params: &PhysicalParams,
    grid: &SimulationGrid,
    policy: &TruncationPolicy,
) -> Result<StepReport> {
    let q = grid.q;
    let sys = state.system_position();
    if sys != q + k || sys + 1 >= state.len() || state.label(sys + 1) != SiteLabel::Bin(k as i64) {
        return Err(Error::Precondition(format!(
            "step {k} expects the emitter at {} followed by bin {k}, found it at {sys}",
            q + k
        )));
    }
    let omega = pulse_envelope(grid.bin_time(k) + 0.5 * grid.dt, params);
    let n_max = gates.d - 1;
    let mut report = StepReport::default();

    if q == 0 {
        state.move_center(sys)?;
        report.discarded += state.apply_gate_permuted(&gates.local_gate(omega), sys, &[1, 0], 1, policy)?;
        report.cutoff_weight = state.expectation_local(&number_projector(gates.d, n_max), sys)?.re;
        return Ok(report);
    }

    let delayed = k;
    if state.label(delayed) != SiteLabel::Bin(k as i64 - q as i64) {
        return Err(Error::Precondition(format!("bin {} is not stored at position {delayed}", k as i64 - q as i64)));
    }
    if q > 1 {
        state.move_center(delayed)?;
        for j in delayed..sys - 1 {
            report.discarded += state.swap_adjacent(j, policy)?;
            report.swaps += 1;
        }
    }
    // block (τ, S, n) at sys-1..=sys+1 becomes (τ, n, S)
    let center_offset = if q == 1 { 2 } else { 0 };
    report.discarded +=
        state.apply_gate_permuted(&gates.feedback_gate(omega), sys - 1, &[0, 2, 1], center_offset, policy)?;
    let top = number_projector(gates.d, n_max);
    let w_delay = state.expectation_local(&top, sys - 1)?.re;
    let w_now = state.expectation_local(&top, sys)?.re;
    report.cutoff_weight = w_delay.max(w_now);
    if q > 1 {
        for j in (delayed..sys - 1).rev() {
            report.discarded += state.swap_adjacent(j, policy)?;
            report.swaps += 1;
        }
    }
    state.move_center(sys + 1)?;
    Ok(report)
}

/// Cutoff-weight ceiling for [`Error::CutoffOverflow`].
pub const CUTOFF_WEIGHT_LIMIT: f64 = 1e-4;

/// Run the full protocol: vacuum reservoir, emitter in the ground level (or
/// excited with [`NumericalParams::initially_excited`]), one gate per bin.
pub fn run_simulation(params: &PhysicalParams, num: &NumericalParams) -> Result<Trajectory> {
    let started = Instant::now();
    params.validate()?;
    let grid = SimulationGrid::new(params, num)?;
    let ops = build_step_operators(params, num)?;
    let gates = StepGates::new(ops);
    let d = num.bin_photon_cutoff + 1;

    let mut state = TimeBinState::vacuum(grid.q, grid.n_steps, d)?;
    if num.initially_excited {
        let sys = state.system_position();
        let mut sites = state.sites().to_vec();
        sites[sys] = SiteTensor::basis(2, 1)?;
        state = TimeBinState::from_sites(sites, state.labels().to_vec(), sys)?;
    }

    let policy = num.truncation;
    let capacity = grid.n_steps + 1;
    let mut times = Vec::with_capacity(capacity);
    let mut population = Vec::with_capacity(capacity);
    let mut norm = Vec::with_capacity(capacity);
    let mut discarded = Vec::with_capacity(capacity);
    times.push(grid.t_start);
    population.push(center_excitation(&state));
    norm.push(state.global_norm());
    discarded.push(0.0);

    let mut max_cutoff_weight: f64 = 0.0;
    let mut max_bond = 1;
    for k in 0..grid.n_steps {
        let report = step_with(&mut state, k, &gates, params, &grid, &policy)?;
        max_cutoff_weight = max_cutoff_weight.max(report.cutoff_weight);
        if max_cutoff_weight > CUTOFF_WEIGHT_LIMIT {
            return Err(Error::CutoffOverflow { weight: max_cutoff_weight, n_max: num.bin_photon_cutoff, step: k });
        }
        let sys = state.system_position();
        max_bond = max_bond.max(state.site(sys).left_dim()).max(state.site(sys).right_dim());
        times.push(grid.bin_time(k + 1));
        population.push(center_excitation(&state));
        norm.push(state.global_norm());
        discarded.push(state.discarded_weight());
    }
    max_bond = max_bond.max(state.max_bond_dim());

    Ok(Trajectory {
        grid,
        times,
        population,
        norm,
        discarded_weight: discarded,
        max_cutoff_weight,
        max_bond_dim: max_bond,
        final_state: state,
        wall_time: started.elapsed().as_secs_f64(),
    })
}
