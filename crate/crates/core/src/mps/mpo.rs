use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// One MPO tensor: a `left x right` grid of physical operators (absent = zero).
#[derive(Clone, Debug)]
pub struct MpoSite {
    left: usize,
    right: usize,
    phys: usize,
    ops: Vec<Option<DMatrix<C64>>>,
}

impl MpoSite {
    pub fn new(left: usize, right: usize, phys: usize) -> Self {
        Self { left, right, phys, ops: vec![None; left * right] }
    }

    pub fn identity(phys: usize) -> Self {
        Self::local(DMatrix::identity(phys, phys))
    }

    /// Bond-dimension-1 site carrying `op`.
    pub fn local(op: DMatrix<C64>) -> Self {
        let phys = op.nrows();
        Self { left: 1, right: 1, phys, ops: vec![Some(op)] }
    }

    pub fn set(&mut self, a: usize, b: usize, op: DMatrix<C64>) -> Result<()> {
        if a >= self.left || b >= self.right {
            return Err(Error::invalid(format!("mpo entry ({a}, {b}) outside {}x{}", self.left, self.right)));
        }
        if op.shape() != (self.phys, self.phys) {
            return Err(Error::invalid("mpo operator does not match physical dimension"));
        }
        self.ops[a * self.right + b] = Some(op);
        Ok(())
    }

    pub fn op(&self, a: usize, b: usize) -> Option<&DMatrix<C64>> {
        self.ops[a * self.right + b].as_ref()
    }

    pub fn left_dim(&self) -> usize {
        self.left
    }

    pub fn right_dim(&self) -> usize {
        self.right
    }

    pub fn phys_dim(&self) -> usize {
        self.phys
    }
}

/// Matrix product operator aligned site-by-site with a [`TimeBinState`](super::TimeBinState).
#[derive(Clone, Debug)]
pub struct Mpo {
    sites: Vec<MpoSite>,
}

impl Mpo {
    pub fn new(sites: Vec<MpoSite>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::invalid("empty mpo"));
        }
        if sites[0].left != 1 || sites[sites.len() - 1].right != 1 {
            return Err(Error::invalid("mpo boundary bonds must have dimension 1"));
        }
        for (j, w) in sites.windows(2).enumerate() {
            if w[0].right != w[1].left {
                return Err(Error::invalid(format!("mpo bond mismatch after site {j}")));
            }
        }
        Ok(Self { sites })
    }

    pub fn identity(phys_dims: &[usize]) -> Self {
        Self { sites: phys_dims.iter().map(|&d| MpoSite::identity(d)).collect() }
    }

    /// `Σ_k n_k` over the sites flagged in `counted`, as a bond-dimension-2 MPO.
    pub fn total_number(phys_dims: &[usize], counted: &[bool]) -> Result<Self> {
        Self::binomial_moment(phys_dims, counted, 1)
    }

    /// MPO for the coefficient of `x^order` in `Π_k (1 + x)^{n_k}` over the
    /// counted sites, i.e. `<Î(Î-1)...(Î-order+1)> / order!` with `Î = Σ_k n_k`.
    /// Bond dimension `order + 1`; the bond index carries the degree reached so far.
    pub fn binomial_moment(phys_dims: &[usize], counted: &[bool], order: usize) -> Result<Self> {
        if phys_dims.len() != counted.len() || phys_dims.is_empty() {
            return Err(Error::invalid("counted mask must match the chain"));
        }
        let bond = order + 1;
        let n = phys_dims.len();
        let mut sites = Vec::with_capacity(n);
        for (j, (&d, &count)) in phys_dims.iter().zip(counted).enumerate() {
            let left = if j == 0 { 1 } else { bond };
            let right = if j == n - 1 { 1 } else { bond };
            let mut w = MpoSite::new(left, right, d);
            for a in 0..left {
                for b in 0..right {
                    let to = if j == n - 1 { order } else { b };
                    if to < a {
                        continue;
                    }
                    if let Some(op) = binomial_number_op(d, to - a, count) {
                        w.set(a, b, op)?;
                    }
                }
            }
            sites.push(w);
        }
        Self::new(sites)
    }

    pub fn sites(&self) -> &[MpoSite] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub(crate) fn check_alignment(&self, phys_dims: &[usize]) -> Result<()> {
        if self.sites.len() != phys_dims.len() {
            return Err(Error::invalid(format!(
                "mpo has {} sites, chain has {}",
                self.sites.len(),
                phys_dims.len()
            )));
        }
        for (j, (w, &d)) in self.sites.iter().zip(phys_dims).enumerate() {
            if w.phys != d {
                return Err(Error::invalid(format!("mpo site {j} has dimension {}, chain has {d}", w.phys)));
            }
        }
        Ok(())
    }
}

/// Diagonal operator `C(n, step)` on a site of dimension `d` (identity when
/// `step == 0`); `None` if it vanishes. Uncounted sites only get the identity.
fn binomial_number_op(d: usize, step: usize, counted: bool) -> Option<DMatrix<C64>> {
    if step == 0 {
        return Some(DMatrix::identity(d, d));
    }
    if !counted || step >= d {
        return None;
    }
    let mut op = DMatrix::zeros(d, d);
    for n in step..d {
        op[(n, n)] = C64::new(binomial(n, step), 0.0);
    }
    Some(op)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
