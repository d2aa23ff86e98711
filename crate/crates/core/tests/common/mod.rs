//! Full state-vector reference for small chains, independent of the MPS code.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use pyragas_mps::mps::{Mpo, SiteLabel, SiteTensor, TimeBinState};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn random_c(rng: &mut StdRng) -> C64 {
    c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
}

/// Random chain with `phys` dimensions (exactly one of them 2 is taken as
/// the system site at `system`), bonds drawn up to `max_bond`.
pub fn random_state(rng: &mut StdRng, phys: &[usize], system: usize, max_bond: usize, center: usize) -> TimeBinState {
    let n = phys.len();
    let mut bonds = vec![1usize; n + 1];
    for b in bonds.iter_mut().take(n).skip(1) {
        *b = rng.random_range(1..=max_bond);
    }
    let sites: Vec<SiteTensor> = (0..n)
        .map(|j| {
            let len = bonds[j] * phys[j] * bonds[j + 1];
            let data = (0..len).map(|_| random_c(rng)).collect();
            SiteTensor::new(bonds[j], phys[j], bonds[j + 1], data).unwrap()
        })
        .collect();
    let labels = (0..n)
        .map(|j| if j == system { SiteLabel::System } else { SiteLabel::Bin(j as i64) })
        .collect();
    TimeBinState::from_sites(sites, labels, center).unwrap()
}

/// Contract the chain into a vector; the first site is the slowest index.
pub fn dense(state: &TimeBinState) -> DVector<C64> {
    let mut acc: Vec<DMatrix<C64>> = vec![DMatrix::from_element(1, 1, c(1.0, 0.0))];
    for site in state.sites() {
        let mut next = Vec::with_capacity(acc.len() * site.phys_dim());
        for a in &acc {
            for p in 0..site.phys_dim() {
                let slice = DMatrix::from_fn(site.left_dim(), site.right_dim(), |l, r| site.get(l, p, r));
                next.push(a * slice);
            }
        }
        acc = next;
    }
    DVector::from_iterator(acc.len(), acc.iter().map(|m| m[(0, 0)]))
}

pub fn max_diff(a: &DVector<C64>, b: &DVector<C64>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn strides(phys: &[usize]) -> Vec<usize> {
    let mut s = vec![1; phys.len()];
    for j in (0..phys.len().saturating_sub(1)).rev() {
        s[j] = s[j + 1] * phys[j + 1];
    }
    s
}

fn digits(mut idx: usize, phys: &[usize]) -> Vec<usize> {
    let mut d = vec![0; phys.len()];
    for j in (0..phys.len()).rev() {
        d[j] = idx % phys[j];
        idx /= phys[j];
    }
    d
}

/// Exchange the tensor factors `j` and `j + 1`.
pub fn swap_factors(v: &DVector<C64>, phys: &[usize], j: usize) -> DVector<C64> {
    let mut new_phys = phys.to_vec();
    new_phys.swap(j, j + 1);
    let ns = strides(&new_phys);
    let mut out = DVector::zeros(v.len());
    for (idx, val) in v.iter().enumerate() {
        let mut d = digits(idx, phys);
        d.swap(j, j + 1);
        let k: usize = d.iter().zip(&ns).map(|(a, b)| a * b).sum();
        out[k] = *val;
    }
    out
}

/// Apply `gate` to the adjacent factors starting at `first`.
pub fn apply_on(v: &DVector<C64>, phys: &[usize], first: usize, gate: &DMatrix<C64>) -> DVector<C64> {
    let mut width = 0;
    let mut prod = 1;
    while prod < gate.nrows() {
        prod *= phys[first + width];
        width += 1;
    }
    assert_eq!(prod, gate.nrows());
    let s = strides(phys);
    let mut out = DVector::zeros(v.len());
    for (idx, val) in v.iter().enumerate() {
        let d = digits(idx, phys);
        let local: usize = (0..width).fold(0, |acc, k| acc * phys[first + k] + d[first + k]);
        let base = idx - (0..width).map(|k| d[first + k] * s[first + k]).sum::<usize>();
        for o in 0..gate.nrows() {
            let g = gate[(o, local)];
            if g == c(0.0, 0.0) {
                continue;
            }
            let od = digits(o, &phys[first..first + width]);
            let k = base + od.iter().enumerate().map(|(q, x)| x * s[first + q]).sum::<usize>();
            out[k] += g * val;
        }
    }
    out
}

pub fn local_expectation(v: &DVector<C64>, phys: &[usize], site: usize, op: &DMatrix<C64>) -> C64 {
    let w = apply_on(v, phys, site, op);
    v.dotc(&w) / v.norm_squared()
}

/// Dense operator of an MPO (unnormalized expectation helper).
pub fn mpo_expectation(v: &DVector<C64>, mpo: &Mpo) -> C64 {
    let phys: Vec<usize> = mpo.sites().iter().map(|w| w.phys_dim()).collect();
    let dim: usize = phys.iter().product();
    // rows of partial operators indexed by right bond
    let mut acc: Vec<DMatrix<C64>> = vec![DMatrix::from_element(1, 1, c(1.0, 0.0))];
    for w in mpo.sites() {
        let mut next = vec![DMatrix::zeros(acc[0].nrows() * w.phys_dim(), acc[0].ncols() * w.phys_dim()); w.right_dim()];
        for a in 0..w.left_dim() {
            for b in 0..w.right_dim() {
                if let Some(op) = w.op(a, b) {
                    next[b] += acc[a].kronecker(op);
                }
            }
        }
        acc = next;
    }
    assert_eq!(acc[0].nrows(), dim);
    v.dotc(&(&acc[0] * v))
}

/// Random unitary from the QR factor of a complex Gaussian-ish matrix.
pub fn random_unitary(rng: &mut StdRng, dim: usize) -> DMatrix<C64> {
    let m = DMatrix::from_fn(dim, dim, |_, _| random_c(rng));
    m.qr().q()
}

/// Random Hermitian operator.
pub fn random_hermitian(rng: &mut StdRng, dim: usize) -> DMatrix<C64> {
    let m = DMatrix::from_fn(dim, dim, |_, _| random_c(rng));
    (&m + m.adjoint()) * c(0.5, 0.0)
}

/// `exp(m)` by scaling and squaring of a Taylor series.
pub fn expm(m: &DMatrix<C64>) -> DMatrix<C64> {
    let norm = m.iter().map(|z| z.norm()).sum::<f64>();
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.05 {
        s += 1;
    }
    let a = m * c(1.0 / 2f64.powi(s), 0.0);
    let n = m.nrows();
    let mut term = DMatrix::<C64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..20 {
        term = &term * &a * c(1.0 / k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

pub fn op_norm_bound(m: &DMatrix<C64>) -> f64 {
    // Frobenius norm, an upper bound on the spectral norm
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
