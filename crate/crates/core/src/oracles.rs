//! References that do not go through the MPS: the single-excitation delay
//! equation, its closed form on `[τ, 2τ]`, a Markovian photon-counting
//! hierarchy, the Rabi calibration and the mirror-placement tolerance.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::model::{pulse_envelope, PhysicalParams};
use crate::observables::PhotonStats;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// `ħ` in eV·s.
pub const HBAR_EV_S: f64 = 6.582_119_569e-16;

fn check_interval(t: f64, tau: f64) -> Result<()> {
    if !(tau >= 0.0 && t >= tau && t <= 2.0 * tau) {
        return Err(Error::invalid(format!("t = {t} outside [τ, 2τ] = [{tau}, {}]", 2.0 * tau)));
    }
    Ok(())
}

/// Excited population on `[τ, 2τ]` in the printed closed form
/// `e^{-2Γt} + e^{-Γ(2t-τ)} Γ(t-τ) [2cos φ + Γ(t-τ) e^{Γτ}]`.
pub fn analytic_feedback_population(t: f64, gamma: f64, tau: f64, phi: f64) -> Result<f64> {
    check_interval(t, tau)?;
    let x = gamma * (t - tau);
    Ok((-2.0 * gamma * t).exp() + (-gamma * (2.0 * t - tau)).exp() * x * (2.0 * phi.cos() + x * (gamma * tau).exp()))
}

/// Excited population on `[τ, 2τ]` from integrating the delay equation once:
/// `|e^{-Γt} (1 - Γ(t-τ) e^{iφ} e^{Γτ})|²`. Differs from
/// [`analytic_feedback_population`] by the sign of the `cos φ` term.
pub fn piecewise_feedback_population(t: f64, gamma: f64, tau: f64, phi: f64) -> Result<f64> {
    check_interval(t, tau)?;
    let x = gamma * (t - tau);
    let c = (-gamma * t).exp() * (C64::new(1.0, 0.0) - x * C64::from_polar((gamma * tau).exp(), phi));
    Ok(c.norm_sqr())
}

/// Solution of `ċ = -Γc - Γ e^{iφ} c(t-τ) θ(t-τ)`, `c(0) = 1`.
#[derive(Clone, Debug)]
pub struct DdeSolution {
    pub times: Vec<f64>,
    pub amplitude: Vec<C64>,
    pub population: Vec<f64>,
}

impl DdeSolution {
    /// Population at `t` by cubic Hermite interpolation of the amplitude.
    pub fn population_at(&self, t: f64) -> f64 {
        let h = self.times[1] - self.times[0];
        let last = self.times.len() - 1;
        let s = ((t - self.times[0]) / h).clamp(0.0, last as f64);
        let i = (s.floor() as usize).min(last - 1);
        let u = s - i as f64;
        let (a, b) = (self.amplitude[i], self.amplitude[i + 1]);
        let da = if i > 0 { (b - self.amplitude[i - 1]) * 0.5 } else { b - a };
        let db = if i + 1 < last { (self.amplitude[i + 2] - a) * 0.5 } else { b - a };
        hermite(a, da, b, db, u).norm_sqr()
    }
}

fn hermite(a: C64, da: C64, b: C64, db: C64, u: f64) -> C64 {
    let u2 = u * u;
    let u3 = u2 * u;
    a * (2.0 * u3 - 3.0 * u2 + 1.0) + da * (u3 - 2.0 * u2 + u) + b * (-2.0 * u3 + 3.0 * u2) + db * (u3 - u2)
}

/// Fourth-order Runge-Kutta on a grid where `τ` is an integer number `m` of
/// steps (the requested `dt` is shrunk to fit). The delayed amplitude between
/// grid points comes from cubic Hermite interpolation with the one-sided
/// derivatives of the stored history, and the delayed term is switched on for
/// step `i` exactly when `i >= m`.
pub fn dde_integrate(gamma: f64, tau: f64, phi: f64, t_max: f64, dt: f64) -> Result<DdeSolution> {
    if !(gamma > 0.0 && tau > 0.0 && t_max > 0.0 && dt > 0.0) {
        return Err(Error::invalid("dde_integrate needs positive gamma, tau, t_max and dt"));
    }
    if dt > tau / 50.0 * (1.0 + 1e-12) {
        return Err(Error::invalid(format!("dt = {dt} exceeds τ/50 = {}", tau / 50.0)));
    }
    let m = (tau / dt - 1e-9).ceil() as usize;
    let h = tau / m as f64;
    let steps = (t_max / h - 1e-9).ceil() as usize;
    let feedback = C64::from_polar(gamma, phi);

    let mut c = Vec::with_capacity(steps + 1);
    // derivative just right of each grid point, and just left of it
    let mut d_right: Vec<C64> = Vec::with_capacity(steps + 1);
    let mut d_left: Vec<C64> = Vec::with_capacity(steps + 1);
    c.push(C64::new(1.0, 0.0));
    d_left.push(C64::new(-gamma, 0.0));

    let delayed = |c: &[C64], dr: &[C64], dl: &[C64], j: usize, u: f64| -> C64 {
        if u == 0.0 {
            return c[j];
        }
        hermite(c[j], dr[j] * h, c[j + 1], dl[j + 1] * h, u)
    };

    for i in 0..steps {
        let active = i >= m;
        d_right.push(-gamma * c[i] - if active { feedback * c[i - m] } else { C64::new(0.0, 0.0) });
        let (z0, zh, z1) = if active {
            let j = i - m;
            (c[j], delayed(&c, &d_right, &d_left, j, 0.5), c[j + 1])
        } else {
            Default::default()
        };
        let f = |y: C64, z: C64| -gamma * y - feedback * z;
        let k1 = f(c[i], z0);
        let k2 = f(c[i] + 0.5 * h * k1, zh);
        let k3 = f(c[i] + 0.5 * h * k2, zh);
        let k4 = f(c[i] + h * k3, z1);
        let next = c[i] + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        c.push(next);
        d_left.push(f(next, z1));
    }
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * h).collect();
    let population = c.iter().map(|a| a.norm_sqr()).collect();
    Ok(DdeSolution { times, amplitude: c, population })
}

/// Exact photon-number distribution of a driven, Markovian emitter.
#[derive(Clone, Debug)]
pub struct CountingDistribution {
    /// `p[n]` for `n < n_cut`; `p[n_cut]` collects `n >= n_cut`.
    pub p: Vec<f64>,
    /// Excited population left at the end of the window.
    pub residual_excitation: f64,
}

impl CountingDistribution {
    pub fn stats(&self) -> PhotonStats {
        PhotonStats::from_distribution(&self.p)
    }
}

/// Photon counting hierarchy for the emitter without feedback: conditional
/// states `ρ^(n)` evolve under the no-jump generator and are fed by the jump
/// term `2Γ σ₋ ρ^(n-1) σ₊`; level `n_cut` is absorbing. Integrated with RK4
/// on `[t_start, t_end]` with step at most `dt`. Total rate `2Γ` and drive
/// `Ω(t) σx` follow the same conventions as the MPS stepper.
pub fn markov_counting_pn(
    pulse_area: f64,
    pulse_width: f64,
    gamma: f64,
    n_cut: usize,
    window: (f64, f64),
    dt: f64,
) -> Result<CountingDistribution> {
    if n_cut < 3 {
        return Err(Error::invalid("counting hierarchy needs n_cut >= 3"));
    }
    if dt > pulse_width / 50.0 * (1.0 + 1e-12) {
        return Err(Error::invalid(format!("dt = {dt} exceeds ν/50 = {}", pulse_width / 50.0)));
    }
    let params = PhysicalParams::new(gamma, 0.0, 0.0, pulse_area, pulse_width, false)?;
    let (t0, t1) = window;
    if t1 <= t0 {
        return Err(Error::invalid("empty counting window"));
    }
    let steps = ((t1 - t0) / dt - 1e-9).ceil() as usize;
    let h = (t1 - t0) / steps as f64;

    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    // basis (g, e)
    let sx = Matrix2::new(z, o, o, z);
    let lower = Matrix2::new(z, o, z, z);
    let raise = lower.adjoint();
    let ee = Matrix2::new(z, z, z, o);
    let rate = 2.0 * gamma;

    let deriv = |t: f64, rho: &[Matrix2<C64>]| -> Vec<Matrix2<C64>> {
        let h_eff = sx * C64::from(pulse_envelope(t, &params)) - ee * C64::new(0.0, 0.5 * rate);
        let h_dag = h_eff.adjoint();
        (0..rho.len())
            .map(|n| {
                let mut d = -(h_eff * rho[n] * i) + rho[n] * h_dag * i;
                if n > 0 {
                    d += lower * rho[n - 1] * raise * C64::from(rate);
                }
                if n == rho.len() - 1 {
                    d += lower * rho[n] * raise * C64::from(rate);
                }
                d
            })
            .collect()
    };
    let axpy = |a: &[Matrix2<C64>], s: f64, b: &[Matrix2<C64>]| -> Vec<Matrix2<C64>> {
        a.iter().zip(b).map(|(x, y)| x + y * C64::from(s)).collect()
    };

    let mut rho = vec![Matrix2::zeros(); n_cut + 1];
    rho[0] = Matrix2::new(o, z, z, z);
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let k1 = deriv(t, &rho);
        let k2 = deriv(t + 0.5 * h, &axpy(&rho, 0.5 * h, &k1));
        let k3 = deriv(t + 0.5 * h, &axpy(&rho, 0.5 * h, &k2));
        let k4 = deriv(t + h, &axpy(&rho, h, &k3));
        for n in 0..rho.len() {
            rho[n] += (k1[n] + k2[n] * C64::from(2.0) + k3[n] * C64::from(2.0) + k4[n]) * C64::from(h / 6.0);
        }
    }
    let p = rho.iter().map(|r| r.trace().re).collect();
    let residual_excitation = rho.iter().map(|r| r[(1, 1)].re).sum();
    Ok(CountingDistribution { p, residual_excitation })
}

/// Excited population after an isolated pulse of area `A` with no decay.
pub fn rabi_final_population(pulse_area: f64) -> f64 {
    (0.5 * pulse_area).sin().powi(2)
}

/// Mirror displacement `ΔL = π c₀ / (2 ω₀)` that sweeps the feedback phase
/// across the destructive window of width `π`.
pub fn phase_robustness(omega0: f64, c0: f64) -> Result<f64> {
    if !(omega0 > 0.0 && c0 > 0.0) {
        return Err(Error::invalid("omega0 and c0 must be positive"));
    }
    Ok(PI * c0 / (2.0 * omega0))
}
