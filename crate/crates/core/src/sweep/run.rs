use std::collections::HashMap;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::evolve::{run_simulation, Trajectory};
use crate::model::{NumericalParams, PhysicalParams};
use crate::observables::{factorial_moments, normalize_against_baseline, photon_probabilities, CorrelationSet, PhotonStats};

use super::config::{BaselineMode, RunConfig, SweepSpec};
use super::record::OutputRecord;

/// Simulation plus statistics for one parameter point.
#[derive(Clone, Debug)]
pub struct PointResult {
    pub params: PhysicalParams,
    pub numerical: NumericalParams,
    pub trajectory: Trajectory,
    pub correlations: CorrelationSet,
    pub stats: PhotonStats,
}

pub fn simulate_point(params: &PhysicalParams, numerical: &NumericalParams) -> Result<PointResult> {
    let trajectory = run_simulation(params, numerical)?;
    let correlations = factorial_moments(&trajectory.final_state, None)?;
    let stats = photon_probabilities(&correlations);
    Ok(PointResult { params: *params, numerical: *numerical, trajectory, correlations, stats })
}

fn base_record(index: usize, params: &PhysicalParams, num: &NumericalParams) -> OutputRecord {
    let q = num.delay_steps(params).unwrap_or(0);
    OutputRecord {
        index,
        status: "ok".into(),
        gamma: params.gamma,
        tau: params.tau,
        tau_effective: q as f64 * num.dt,
        phi: params.phi,
        pulse_area: params.pulse_area,
        pulse_width: params.pulse_width,
        feedback: params.feedback_enabled,
        dt: num.dt,
        q,
        bin_photon_cutoff: num.bin_photon_cutoff,
        expansion_order: num.expansion_order.as_u8(),
        svd_threshold: num.truncation.svd_threshold,
        bond_max: num.truncation.max_bond,
        t_start: num.t_start,
        t_end: num.t_end,
        c1: None,
        c2: None,
        c3: None,
        p0: None,
        p1: None,
        p2: None,
        p3: None,
        r: None,
        p4_bound: None,
        closure_error: None,
        base_p0: None,
        base_p1: None,
        base_p2: None,
        base_p3: None,
        base_r: None,
        pbar0: None,
        pbar1: None,
        pbar2: None,
        pbar3: None,
        r_ratio: None,
        discarded_weight: None,
        max_bond_dim: None,
        final_population: None,
        wall_time: None,
    }
}

/// Output row for a finished (or failed) point.
pub fn make_record(
    index: usize,
    params: &PhysicalParams,
    num: &NumericalParams,
    outcome: &Result<PointResult>,
    baseline: Option<&PhotonStats>,
    wall_time: Option<f64>,
) -> OutputRecord {
    let mut rec = base_record(index, params, num);
    rec.wall_time = wall_time;
    if let Some(b) = baseline {
        rec.base_p0 = Some(b.p0);
        rec.base_p1 = Some(b.p1);
        rec.base_p2 = Some(b.p2);
        rec.base_p3 = Some(b.p3);
        rec.base_r = b.ratio_r;
    }
    let res = match outcome {
        Ok(res) => res,
        Err(e) => {
            rec.status = format!("error: {e}");
            return rec;
        }
    };
    let s = &res.stats;
    rec.c1 = Some(res.correlations.c1);
    rec.c2 = Some(res.correlations.c2);
    rec.c3 = Some(res.correlations.c3);
    rec.p0 = Some(s.p0);
    rec.p1 = Some(s.p1);
    rec.p2 = Some(s.p2);
    rec.p3 = Some(s.p3);
    rec.r = s.ratio_r;
    rec.p4_bound = s.p4_bound;
    rec.closure_error = Some(s.closure_error);
    if let Some(b) = baseline {
        let n = normalize_against_baseline(s, b);
        [rec.pbar0, rec.pbar1, rec.pbar2, rec.pbar3] = n.pbar;
        rec.r_ratio = n.r_ratio;
    }
    let traj = &res.trajectory;
    rec.discarded_weight = Some(traj.final_state.discarded_weight());
    rec.max_bond_dim = Some(traj.max_bond_dim);
    rec.final_population = traj.population.last().copied();
    rec
}

/// Identifies runs that can share one no-feedback baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct BaselineKey([u64; 9]);

fn baseline_point(params: &PhysicalParams, cfg: &RunConfig) -> (PhysicalParams, NumericalParams) {
    let mut p = params.without_feedback();
    // phase and delay do not enter the baseline
    p.tau = 0.0;
    p.phi = 0.0;
    let num = cfg.numerical.resolve(&p);
    (p, num)
}

fn baseline_key(p: &PhysicalParams, n: &NumericalParams) -> BaselineKey {
    BaselineKey([
        p.pulse_area.to_bits(),
        p.pulse_width.to_bits(),
        p.gamma.to_bits(),
        n.dt.to_bits(),
        n.t_start.to_bits(),
        n.t_end.to_bits(),
        n.bin_photon_cutoff as u64,
        n.truncation.svd_threshold.to_bits() ^ (n.truncation.max_bond as u64).rotate_left(32),
        n.expansion_order.as_u8() as u64 | (n.initially_excited as u64) << 8,
    ])
}

/// Run the no-feedback reference for `params`.
pub fn run_baseline(params: &PhysicalParams, cfg: &RunConfig) -> Result<PointResult> {
    let (p, num) = baseline_point(params, cfg);
    simulate_point(&p, &num)
}

/// Evaluate every grid point on up to `workers` threads. Records come back in
/// grid order and do not depend on the worker count.
pub fn run_sweep(spec: &SweepSpec, workers: usize) -> Result<Vec<OutputRecord>> {
    run_sweep_detailed(spec, workers).map(|(records, _)| records)
}

/// Like [`run_sweep`], also returning the per-point results.
pub fn run_sweep_detailed(spec: &SweepSpec, workers: usize) -> Result<(Vec<OutputRecord>, Vec<Result<PointResult>>)> {
    let cfg = &spec.fixed;
    let points: Vec<PhysicalParams> = (0..spec.len()).map(|i| spec.point(i)).collect::<Result<_>>()?;

    let mut keys: Vec<BaselineKey> = Vec::new();
    let mut key_of_point = Vec::with_capacity(points.len());
    let mut baseline_inputs = Vec::new();
    if cfg.baseline == BaselineMode::Auto {
        for p in &points {
            let (bp, bn) = baseline_point(p, cfg);
            let key = baseline_key(&bp, &bn);
            let slot = keys.iter().position(|k| *k == key).unwrap_or_else(|| {
                keys.push(key);
                baseline_inputs.push((bp, bn));
                keys.len() - 1
            });
            key_of_point.push(slot);
        }
    }
    let baselines: Vec<Result<PhotonStats>> = crate::par::map_with_workers(baseline_inputs.len(), workers, |i| {
        let (bp, bn) = &baseline_inputs[i];
        simulate_point(bp, bn).map(|r| r.stats)
    });

    let lookup: HashMap<usize, &Result<PhotonStats>> = baselines.iter().enumerate().collect();
    let outcomes: Vec<(Result<PointResult>, Option<f64>)> = crate::par::map_with_workers(points.len(), workers, |i| {
        let p = &points[i];
        let num = cfg.numerical.resolve(p);
        let started = Instant::now();
        let res = simulate_point(p, &num);
        (res, cfg.timing.then(|| started.elapsed().as_secs_f64()))
    });

    let mut records = Vec::with_capacity(points.len());
    let mut results = Vec::with_capacity(points.len());
    for (i, (outcome, wall)) in outcomes.into_iter().enumerate() {
        let p = &points[i];
        let num = cfg.numerical.resolve(p);
        let (baseline, outcome) = match &cfg.baseline {
            BaselineMode::Provided(b) => (Some(*b), outcome),
            BaselineMode::None => (None, outcome),
            BaselineMode::Auto => match lookup[&key_of_point[i]] {
                Ok(b) => (Some(*b), outcome),
                Err(e) if cfg.outputs.normalized => {
                    (None, outcome.and(Err(Error::Precondition(format!("baseline failed: {e}")))))
                }
                Err(_) => (None, outcome),
            },
        };
        records.push(make_record(i, p, &num, &outcome, baseline.as_ref(), wall));
        results.push(outcome);
    }
    Ok((records, results))
}
