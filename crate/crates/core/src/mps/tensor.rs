use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Controls how singular values are dropped after every SVD.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationPolicy {
    /// Singular values below `svd_threshold * s_max` are dropped.
    pub svd_threshold: f64,
    pub max_bond: usize,
    /// When false, discarded weight is not added to the state's running total.
    pub accumulate_discarded_weight: bool,
}

impl TruncationPolicy {
    pub fn new(svd_threshold: f64, max_bond: usize) -> Result<Self> {
        let policy = Self { svd_threshold, max_bond, accumulate_discarded_weight: true };
        policy.validate()?;
        Ok(policy)
    }

    /// No truncation beyond exact zeros; bond dimensions are effectively unbounded.
    pub fn exact() -> Self {
        Self { svd_threshold: 0.0, max_bond: usize::MAX, accumulate_discarded_weight: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.svd_threshold) {
            return Err(Error::invalid(format!(
                "svd threshold must lie in [0, 1), got {}",
                self.svd_threshold
            )));
        }
        if self.max_bond == 0 {
            return Err(Error::invalid("max bond dimension must be at least 1"));
        }
        Ok(())
    }
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self { svd_threshold: 1e-7, max_bond: 64, accumulate_discarded_weight: true }
    }
}

/// One rank-3 tensor of the chain, indexed `[left, physical, right]` and
/// stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteTensor {
    left: usize,
    phys: usize,
    right: usize,
    data: Vec<C64>,
}

impl SiteTensor {
    pub fn new(left: usize, phys: usize, right: usize, data: Vec<C64>) -> Result<Self> {
        if left == 0 || phys == 0 || right == 0 {
            return Err(Error::invalid("site tensor dimensions must be positive"));
        }
        if data.len() != left * phys * right {
            return Err(Error::invalid(format!(
                "site tensor data has {} entries, expected {}",
                data.len(),
                left * phys * right
            )));
        }
        Ok(Self { left, phys, right, data })
    }

    /// Bond-dimension-1 tensor holding a single-site state vector.
    pub fn product(amplitudes: &[C64]) -> Result<Self> {
        Self::new(1, amplitudes.len(), 1, amplitudes.to_vec())
    }

    /// Bond-dimension-1 tensor in the basis state `level`.
    pub fn basis(phys: usize, level: usize) -> Result<Self> {
        if level >= phys {
            return Err(Error::invalid(format!("level {level} outside dimension {phys}")));
        }
        let mut amps = vec![C64::new(0.0, 0.0); phys];
        amps[level] = C64::new(1.0, 0.0);
        Self::product(&amps)
    }

    pub fn left_dim(&self) -> usize {
        self.left
    }

    pub fn phys_dim(&self) -> usize {
        self.phys
    }

    pub fn right_dim(&self) -> usize {
        self.right
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, l: usize, p: usize, r: usize) -> C64 {
        self.data[(l * self.phys + p) * self.right + r]
    }

    /// The `left x right` matrix at fixed physical index.
    pub fn slice(&self, p: usize) -> DMatrix<C64> {
        DMatrix::from_fn(self.left, self.right, |l, r| self.get(l, p, r))
    }

    /// Reshape to `(left * phys) x right`.
    pub fn left_matrix(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.left * self.phys, self.right, &self.data)
    }

    /// Reshape to `left x (phys * right)`.
    pub fn right_matrix(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.left, self.phys * self.right, &self.data)
    }

    pub(crate) fn from_left_matrix(m: &DMatrix<C64>, left: usize, phys: usize) -> Self {
        debug_assert_eq!(m.nrows(), left * phys);
        Self { left, phys, right: m.ncols(), data: row_major(m) }
    }

    pub(crate) fn from_right_matrix(m: &DMatrix<C64>, phys: usize, right: usize) -> Self {
        debug_assert_eq!(m.ncols(), phys * right);
        Self { left: m.nrows(), phys, right, data: row_major(m) }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Distance of `Σ_p A_p† A_p` from the identity.
    pub fn left_orthogonality_error(&self) -> f64 {
        let m = self.left_matrix();
        (m.adjoint() * &m - DMatrix::identity(self.right, self.right)).norm()
    }

    /// Distance of `Σ_p A_p A_p†` from the identity.
    pub fn right_orthogonality_error(&self) -> f64 {
        let m = self.right_matrix();
        (&m * m.adjoint() - DMatrix::identity(self.left, self.left)).norm()
    }
}

pub(crate) fn row_major(m: &DMatrix<C64>) -> Vec<C64> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Several adjacent sites contracted into one tensor
/// `[left, p_0, ..., p_{n-1}, right]`, row-major.
#[derive(Clone, Debug)]
pub(crate) struct Block {
    pub left: usize,
    pub phys: Vec<usize>,
    pub right: usize,
    pub data: Vec<C64>,
}

impl Block {
    pub fn contract(sites: &[SiteTensor]) -> Self {
        let first = &sites[0];
        let mut acc = first.left_matrix();
        let mut phys = vec![first.phys];
        for site in &sites[1..] {
            let prod = &acc * site.right_matrix();
            let rows = acc.nrows() * site.phys;
            acc = DMatrix::from_row_slice(rows, site.right, &row_major(&prod));
            phys.push(site.phys);
        }
        Block { left: first.left, phys, right: sites[sites.len() - 1].right, data: row_major(&acc) }
    }

    fn phys_total(&self) -> usize {
        self.phys.iter().product()
    }

    /// Multiply the composite physical index by `gate` (rows: output, cols: input).
    pub fn apply(&mut self, gate: &DMatrix<C64>) {
        let dim = self.phys_total();
        let right = self.right;
        let nonzero: Vec<(usize, usize, C64)> = (0..dim)
            .flat_map(|o| (0..dim).map(move |i| (o, i)))
            .filter_map(|(o, i)| {
                let g = gate[(o, i)];
                (g != C64::new(0.0, 0.0)).then_some((o, i, g))
            })
            .collect();
        let mut out = vec![C64::new(0.0, 0.0); self.data.len()];
        for l in 0..self.left {
            let base = l * dim * right;
            for &(o, i, g) in &nonzero {
                let src = &self.data[base + i * right..base + (i + 1) * right];
                let dst = &mut out[base + o * right..base + (o + 1) * right];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += g * s;
                }
            }
        }
        self.data = out;
    }

    /// Reorder physical legs: new leg `j` is old leg `order[j]`.
    pub fn permute(&mut self, order: &[usize]) {
        let n = self.phys.len();
        debug_assert_eq!(order.len(), n);
        if order.iter().enumerate().all(|(j, &o)| j == o) {
            return;
        }
        let new_phys: Vec<usize> = order.iter().map(|&o| self.phys[o]).collect();
        let dim = self.phys_total();
        // strides of the old composite index
        let mut old_stride = vec![1usize; n];
        for j in (0..n.saturating_sub(1)).rev() {
            old_stride[j] = old_stride[j + 1] * self.phys[j + 1];
        }
        let mut map = vec![0usize; dim];
        let mut idx = vec![0usize; n];
        for (new_flat, slot) in map.iter_mut().enumerate() {
            let mut rem = new_flat;
            for j in (0..n).rev() {
                idx[j] = rem % new_phys[j];
                rem /= new_phys[j];
            }
            *slot = (0..n).map(|j| idx[j] * old_stride[order[j]]).sum();
        }
        let right = self.right;
        let mut out = vec![C64::new(0.0, 0.0); self.data.len()];
        for l in 0..self.left {
            let base = l * dim * right;
            for (new_flat, &old_flat) in map.iter().enumerate() {
                out[base + new_flat * right..base + (new_flat + 1) * right]
                    .copy_from_slice(&self.data[base + old_flat * right..base + (old_flat + 1) * right]);
            }
        }
        self.data = out;
        self.phys = new_phys;
    }

    /// Split back into sites. Sites before `center` come out left-orthogonal,
    /// sites after it right-orthogonal. Returns the sites and the discarded weight.
    pub fn split(self, center: usize, policy: &TruncationPolicy) -> (Vec<SiteTensor>, f64) {
        let n = self.phys.len();
        debug_assert!(center < n);
        let mut discarded = 0.0;
        let mut left_sites = Vec::with_capacity(n);
        let mut right_sites = Vec::new();

        let mut left = self.left;
        let mut right = self.right;
        let mut phys = self.phys.clone();
        let mut data = self.data;

        for _ in 0..center {
            let p = phys.remove(0);
            let rest = phys.iter().product::<usize>() * right;
            let m = DMatrix::from_row_slice(left * p, rest, &data);
            let t = svd_truncate(m, policy);
            discarded += t.discarded;
            left_sites.push(SiteTensor::from_left_matrix(&t.u, left, p));
            let sv = scale_rows(&t.vt, &t.s);
            left = sv.nrows();
            data = row_major(&sv);
        }
        while phys.len() > 1 {
            let p = phys.pop().unwrap();
            let rows = left * phys.iter().product::<usize>();
            let m = DMatrix::from_row_slice(rows, p * right, &data);
            let t = svd_truncate(m, policy);
            discarded += t.discarded;
            right_sites.push(SiteTensor::from_right_matrix(&t.vt, p, right));
            let us = scale_cols(&t.u, &t.s);
            right = us.ncols();
            data = row_major(&us);
        }
        left_sites.push(SiteTensor { left, phys: phys[0], right, data });
        left_sites.extend(right_sites.into_iter().rev());
        (left_sites, discarded)
    }
}

pub(crate) struct Truncated {
    pub u: DMatrix<C64>,
    pub s: Vec<f64>,
    pub vt: DMatrix<C64>,
    pub discarded: f64,
}

/// SVD with singular values sorted descending and truncated under `policy`.
pub(crate) fn svd_truncate(m: DMatrix<C64>, policy: &TruncationPolicy) -> Truncated {
    let (rows, cols) = m.shape();
    let a = faer::Mat::<C64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let svd = a.thin_svd().expect("svd did not converge");
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let k = rows.min(cols);

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| s[y].re.total_cmp(&s[x].re));
    let s_max = s[order[0]].re;
    let cutoff = policy.svd_threshold * s_max;
    let mut keep = order.iter().take_while(|&&i| s[i].re > cutoff && s[i].re > 0.0).count();
    keep = keep.clamp(1, policy.max_bond.max(1));

    let discarded: f64 = order[keep..].iter().map(|&i| s[i].re * s[i].re).sum();
    let u_out = DMatrix::from_fn(rows, keep, |r, j| u[(r, order[j])]);
    let vt_out = DMatrix::from_fn(keep, cols, |j, c| v[(c, order[j])].conj());
    let s_out = order[..keep].iter().map(|&i| s[i].re).collect();
    Truncated { u: u_out, s: s_out, vt: vt_out, discarded }
}

fn scale_rows(m: &DMatrix<C64>, s: &[f64]) -> DMatrix<C64> {
    let mut out = m.clone();
    for (i, &si) in s.iter().enumerate() {
        out.row_mut(i).scale_mut(si);
    }
    out
}

fn scale_cols(m: &DMatrix<C64>, s: &[f64]) -> DMatrix<C64> {
    let mut out = m.clone();
    for (j, &sj) in s.iter().enumerate() {
        out.column_mut(j).scale_mut(sj);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn policy_bounds() {
        assert!(TruncationPolicy::new(1.0, 4).is_err());
        assert!(TruncationPolicy::new(-0.1, 4).is_err());
        assert!(TruncationPolicy::new(0.0, 0).is_err());
        assert!(TruncationPolicy::new(1e-7, 64).is_ok());
    }

    #[test]
    fn svd_truncation_drops_small_values() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), c(1e-9), c(0.5)]));
        let t = svd_truncate(m, &TruncationPolicy::new(1e-7, 64).unwrap());
        assert_eq!(t.s.len(), 2);
        assert!((t.s[0] - 1.0).abs() < 1e-14 && (t.s[1] - 0.5).abs() < 1e-14);
        assert!((t.discarded - 1e-18).abs() < 1e-24);

        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0), c(0.9), c(0.5)]));
        let t = svd_truncate(m, &TruncationPolicy::new(0.0, 1).unwrap());
        assert_eq!(t.s.len(), 1);
        assert!((t.discarded - 1.06).abs() < 1e-12);
    }

    #[test]
    fn permute_swaps_legs() {
        // two legs of dims 2 and 3, bond dims 1
        let data: Vec<C64> = (0..6).map(|i| c(i as f64)).collect();
        let mut b = Block { left: 1, phys: vec![2, 3], right: 1, data };
        b.permute(&[1, 0]);
        assert_eq!(b.phys, vec![3, 2]);
        // new[j, i] = old[i, j] = 3 i + j
        for j in 0..3 {
            for i in 0..2 {
                assert_eq!(b.data[j * 2 + i], c((3 * i + j) as f64));
            }
        }
    }
}
