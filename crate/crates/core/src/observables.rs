//! Photon counting statistics of the emitted field.
//!
//! With `Î = Σ_k n_k` over the counted bins, the factorial moments
//! `C_m = <Î(Î-1)...(Î-m+1)>` are evaluated with binomial MPOs. The vacuum
//! probability is read off independently so that the truncated inversion to
//! `p(0..3)` can be checked for closure.

use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::mps::{transfer, transfer_op, transfer_right, transfer_right_op, Mpo, MpoSite, SiteLabel, TimeBinState};

/// Most counted bins the nested-sum evaluation accepts.
pub const NESTED_SUM_MAX_BINS: usize = 400;

/// Reported probabilities below this are treated as zero in ratios.
pub const RATIO_FLOOR: f64 = 1e-9;

/// Factorial moments of the emitted photon number, normalized by `norm_sq`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationSet {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Fourth moment, when evaluated; bounds the neglected `p(4)`.
    pub c4: Option<f64>,
    /// Probability that no counted bin holds a photon, when evaluated.
    pub vacuum: Option<f64>,
    pub norm_sq: f64,
}

impl CorrelationSet {
    pub fn new(c1: f64, c2: f64, c3: f64) -> Self {
        Self { c1, c2, c3, c4: None, vacuum: None, norm_sq: 1.0 }
    }
}

/// `p(0)..p(3)` from the closed moment system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhotonStats {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    /// `p2 / p1`; `None` when `p1 <= RATIO_FLOOR`.
    pub ratio_r: Option<f64>,
    /// `C4 / 24`, the leading estimate of `p(4)`.
    pub p4_bound: Option<f64>,
    /// `|Σ_{n≤3} p(n) - 1|` using the directly measured vacuum probability when
    /// available, otherwise the amount by which `p(0)` is negative.
    pub closure_error: f64,
}

/// Tolerance on [`PhotonStats::closure_error`].
pub const CLOSURE_TOLERANCE: f64 = 5e-3;

impl PhotonStats {
    pub fn probabilities(&self) -> [f64; 4] {
        [self.p0, self.p1, self.p2, self.p3]
    }

    pub fn closure_ok(&self) -> bool {
        self.closure_error <= CLOSURE_TOLERANCE
    }

    /// Build from explicit probabilities (e.g. an exact counting distribution).
    pub fn from_distribution(p: &[f64]) -> Self {
        let get = |n: usize| p.get(n).copied().unwrap_or(0.0);
        let (p0, p1, p2, p3) = (get(0), get(1), get(2), get(3));
        Self {
            p0,
            p1,
            p2,
            p3,
            ratio_r: ratio(p2, p1),
            p4_bound: Some(p.iter().skip(4).sum()),
            closure_error: (p0 + p1 + p2 + p3 - 1.0).abs(),
        }
    }
}

/// Feedback statistics divided by the no-feedback baseline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedStats {
    /// `p̄(n)`; `None` where the baseline entry vanishes.
    pub pbar: [Option<f64>; 4],
    /// `r / r_nofeedback`.
    pub r_ratio: Option<f64>,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > RATIO_FLOOR).then(|| num / den)
}

fn counted_mask(state: &TimeBinState, bins: Option<&Range<i64>>) -> Vec<bool> {
    state
        .labels()
        .iter()
        .map(|l| match (l, bins) {
            (SiteLabel::System, _) => false,
            (SiteLabel::Bin(b), Some(r)) => r.contains(b),
            (SiteLabel::Bin(_), None) => true,
        })
        .collect()
}

fn falling_factorial_op(d: usize, order: usize) -> DMatrix<C64> {
    DMatrix::from_fn(d, d, |i, j| {
        if i != j {
            return C64::new(0.0, 0.0);
        }
        let v: f64 = (0..order).map(|k| i as f64 - k as f64).product();
        C64::new(v.max(0.0), 0.0)
    })
}

/// `C1..C3` (and `C4`, vacuum probability) over the bins whose label lies in
/// `bins` (all bins when `None`). Each moment is one MPO sweep.
pub fn factorial_moments(state: &TimeBinState, bins: Option<Range<i64>>) -> Result<CorrelationSet> {
    let dims = state.phys_dims();
    let counted = counted_mask(state, bins.as_ref());
    let norm_sq = state.norm_squared();
    if norm_sq <= 0.0 {
        return Err(Error::Precondition("state has zero norm".into()));
    }
    let mut c = [0.0; 5];
    let mut factorial = 1.0;
    for (m, slot) in c.iter_mut().enumerate().skip(1) {
        factorial *= m as f64;
        let mpo = Mpo::binomial_moment(&dims, &counted, m)?;
        *slot = factorial * state.expectation_mpo(&mpo)?.re / norm_sq;
    }
    let vacuum_sites = dims
        .iter()
        .zip(&counted)
        .map(|(&d, &count)| {
            if count {
                let mut p = DMatrix::zeros(d, d);
                p[(0, 0)] = C64::new(1.0, 0.0);
                MpoSite::local(p)
            } else {
                MpoSite::identity(d)
            }
        })
        .collect();
    let vacuum = state.expectation_mpo(&Mpo::new(vacuum_sites)?)?.re / norm_sq;
    Ok(CorrelationSet { c1: c[1], c2: c[2], c3: c[3], c4: Some(c[4]), vacuum: Some(vacuum), norm_sq })
}

/// `C1..C3` from explicit ordered sums over bin tuples `k < l (< m)` with the
/// multiplicities of the symmetric sum. Refuses more than
/// [`NESTED_SUM_MAX_BINS`] counted bins.
pub fn nested_sum_correlations(state: &TimeBinState, bins: Option<Range<i64>>) -> Result<CorrelationSet> {
    let n = state.len();
    let counted = counted_mask(state, bins.as_ref());
    let n_counted = counted.iter().filter(|&&c| c).count();
    if n_counted > NESTED_SUM_MAX_BINS {
        return Err(Error::GuardExceeded(format!(
            "nested sums over {n_counted} bins exceed the limit of {NESTED_SUM_MAX_BINS}; use factorial_moments"
        )));
    }
    let last = counted.iter().rposition(|&c| c).map_or(0, |j| j + 1);
    let sites = state.sites();
    let ops: Vec<[DMatrix<C64>; 3]> = sites
        .iter()
        .map(|s| {
            let d = s.phys_dim();
            [falling_factorial_op(d, 1), falling_factorial_op(d, 2), falling_factorial_op(d, 3)]
        })
        .collect();

    let one = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
    let mut left = Vec::with_capacity(n + 1);
    left.push(one.clone());
    for s in sites {
        let next = transfer(left.last().unwrap(), s);
        left.push(next);
    }
    // right[j]: sites j.. with identity; right1[j]: same with one number operator
    let mut right = vec![one.clone(); n + 1];
    let mut right1 = vec![DMatrix::zeros(1, 1); n + 1];
    for j in (0..n).rev() {
        right[j] = transfer_right(&right[j + 1], &sites[j]);
        right1[j] = transfer_right(&right1[j + 1], &sites[j]);
        if counted[j] {
            right1[j] += transfer_right_op(&right[j + 1], &sites[j], &ops[j][0]);
        }
    }
    let close = |e: &DMatrix<C64>, r: &DMatrix<C64>| (e * r).trace().re;
    let norm_sq = left[n].trace().re;

    // per first index k: [single, diagonal pair, diagonal triple, ordered pairs, ordered triples, mixed]
    let per_k = crate::par::map_indices(n, |k| {
        let mut acc = [0.0; 6];
        if !counted[k] {
            return acc;
        }
        let s = &sites[k];
        let e1 = transfer_op(&left[k], s, &ops[k][0]);
        let e2 = transfer_op(&left[k], s, &ops[k][1]);
        acc[0] = close(&e1, &right[k + 1]);
        acc[1] = close(&e2, &right[k + 1]);
        acc[2] = close(&transfer_op(&left[k], s, &ops[k][2]), &right[k + 1]);
        let (mut e1, mut e2) = (e1, e2);
        for l in k + 1..last {
            let t = &sites[l];
            if counted[l] {
                let e1n = transfer_op(&e1, t, &ops[l][0]);
                acc[3] += close(&e1n, &right[l + 1]);
                acc[4] += close(&e1n, &right1[l + 1]);
                acc[5] += close(&transfer_op(&e2, t, &ops[l][0]), &right[l + 1]);
                acc[5] += close(&transfer_op(&e1, t, &ops[l][1]), &right[l + 1]);
            }
            e1 = transfer(&e1, t);
            e2 = transfer(&e2, t);
        }
        acc
    });
    let mut tot = [0.0; 6];
    for acc in per_k {
        for (t, a) in tot.iter_mut().zip(acc) {
            *t += a;
        }
    }
    let c1 = tot[0];
    let c2 = 2.0 * tot[3] + tot[1];
    let c3 = 6.0 * tot[4] + 3.0 * tot[5] + tot[2];
    Ok(CorrelationSet { c1: c1 / norm_sq, c2: c2 / norm_sq, c3: c3 / norm_sq, c4: None, vacuum: None, norm_sq })
}

/// Invert the moment system assuming `p(n ≥ 4) = 0`:
/// `p1 = C1 - C2 + C3/2`, `p2 = (C2 - C3)/2`, `p3 = C3/6`.
pub fn photon_probabilities(corr: &CorrelationSet) -> PhotonStats {
    let p1 = corr.c1 - corr.c2 + 0.5 * corr.c3;
    let p2 = 0.5 * (corr.c2 - corr.c3);
    let p3 = corr.c3 / 6.0;
    let p0 = 1.0 - p1 - p2 - p3;
    let closure_error = match corr.vacuum {
        Some(v) => (v + p1 + p2 + p3 - 1.0).abs(),
        None => (-p0).max(0.0),
    };
    PhotonStats { p0, p1, p2, p3, ratio_r: ratio(p2, p1), p4_bound: corr.c4.map(|c| c / 24.0), closure_error }
}

pub fn normalize_against_baseline(fb: &PhotonStats, base: &PhotonStats) -> NormalizedStats {
    let f = fb.probabilities();
    let b = base.probabilities();
    let pbar = std::array::from_fn(|n| ratio(f[n], b[n]));
    let r_ratio = match (fb.ratio_r, base.ratio_r) {
        (Some(a), Some(b)) => ratio(a, b),
        _ => None,
    };
    NormalizedStats { pbar, r_ratio }
}
