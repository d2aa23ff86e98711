use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::mpo::Mpo;
use super::tensor::{Block, SiteTensor, TruncationPolicy};
use crate::error::{Error, Result};

/// What a chain site represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SiteLabel {
    System,
    /// Time bin by chronological index; history bins are negative.
    Bin(i64),
}

/// Matrix product state over time bins plus one two-level system site, kept in
/// mixed canonical form around a single orthogonality center.
///
/// The state is never renormalized: weight removed by truncation is added to
/// [`discarded_weight`](Self::discarded_weight) and shows up as a norm below one.
#[derive(Clone, Debug)]
pub struct TimeBinState {
    sites: Vec<SiteTensor>,
    labels: Vec<SiteLabel>,
    system_position: usize,
    center: usize,
    discarded_weight: f64,
}

impl TimeBinState {
    /// Vacuum product state `[history bins, system, future bins]`, system in the
    /// ground level, center on the system site.
    pub fn init_vacuum(num_history_bins: usize, num_future_bins: usize, bin_dim: usize) -> Result<Self> {
        if num_history_bins == 0 || num_future_bins == 0 || bin_dim == 0 {
            return Err(Error::invalid(format!(
                "vacuum chain needs positive sizes, got history={num_history_bins}, \
                 future={num_future_bins}, bin_dim={bin_dim}"
            )));
        }
        Self::vacuum(num_history_bins, num_future_bins, bin_dim)
    }

    pub(crate) fn vacuum(history: usize, future: usize, bin_dim: usize) -> Result<Self> {
        if future == 0 || bin_dim == 0 {
            return Err(Error::invalid("vacuum chain needs future bins and a positive bin dimension"));
        }
        let len = history + 1 + future;
        let mut sites = Vec::with_capacity(len);
        let mut labels = Vec::with_capacity(len);
        let vac = SiteTensor::basis(bin_dim, 0)?;
        for b in -(history as i64)..0 {
            sites.push(vac.clone());
            labels.push(SiteLabel::Bin(b));
        }
        sites.push(SiteTensor::basis(2, 0)?);
        labels.push(SiteLabel::System);
        for b in 0..future as i64 {
            sites.push(vac.clone());
            labels.push(SiteLabel::Bin(b));
        }
        Ok(Self { sites, labels, system_position: history, center: history, discarded_weight: 0.0 })
    }

    /// Builds a state from arbitrary tensors and brings it into mixed canonical
    /// form with the center at `center`. Exactly one label must be
    /// [`SiteLabel::System`], on a site of physical dimension 2.
    pub fn from_sites(sites: Vec<SiteTensor>, labels: Vec<SiteLabel>, center: usize) -> Result<Self> {
        if sites.is_empty() || sites.len() != labels.len() {
            return Err(Error::invalid("sites and labels must be non-empty and of equal length"));
        }
        if sites[0].left_dim() != 1 || sites[sites.len() - 1].right_dim() != 1 {
            return Err(Error::invalid("boundary bonds must have dimension 1"));
        }
        for (j, pair) in sites.windows(2).enumerate() {
            if pair[0].right_dim() != pair[1].left_dim() {
                return Err(Error::invalid(format!("bond mismatch between sites {j} and {}", j + 1)));
            }
        }
        let systems: Vec<usize> =
            labels.iter().enumerate().filter(|(_, l)| **l == SiteLabel::System).map(|(j, _)| j).collect();
        if systems.len() != 1 {
            return Err(Error::invalid(format!("expected one system site, found {}", systems.len())));
        }
        if sites[systems[0]].phys_dim() != 2 {
            return Err(Error::invalid("system site must have physical dimension 2"));
        }
        if center >= sites.len() {
            return Err(Error::invalid(format!("center {center} outside chain of {}", sites.len())));
        }
        let n = sites.len();
        let mut state =
            Self { sites, labels, system_position: systems[0], center: 0, discarded_weight: 0.0 };
        // left-orthogonalize everything, then sweep back to the requested center
        state.move_center(n - 1)?;
        state.move_center(center)?;
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[SiteTensor] {
        &self.sites
    }

    pub fn site(&self, j: usize) -> &SiteTensor {
        &self.sites[j]
    }

    pub fn labels(&self) -> &[SiteLabel] {
        &self.labels
    }

    pub fn label(&self, j: usize) -> SiteLabel {
        self.labels[j]
    }

    pub fn system_position(&self) -> usize {
        self.system_position
    }

    pub fn orthogonality_center(&self) -> usize {
        self.center
    }

    pub fn discarded_weight(&self) -> f64 {
        self.discarded_weight
    }

    /// `sqrt(<Ψ|Ψ>)`, read off the center tensor.
    pub fn global_norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn norm_squared(&self) -> f64 {
        self.sites[self.center].norm_sqr()
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.sites.len() - 1].iter().map(SiteTensor::right_dim).collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn position_of(&self, label: SiteLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// Physical dimensions in chain order.
    pub fn phys_dims(&self) -> Vec<usize> {
        self.sites.iter().map(SiteTensor::phys_dim).collect()
    }

    fn check_site(&self, j: usize) -> Result<()> {
        if j >= self.sites.len() {
            return Err(Error::invalid(format!("site {j} outside chain of {}", self.sites.len())));
        }
        Ok(())
    }

    /// Shift the orthogonality center with QR steps; no truncation.
    pub fn move_center(&mut self, target: usize) -> Result<()> {
        self.check_site(target)?;
        while self.center < target {
            let j = self.center;
            let site = &self.sites[j];
            let (left, phys) = (site.left_dim(), site.phys_dim());
            let qr = site.left_matrix().qr();
            let (q, r) = (qr.q(), qr.r());
            let next = &self.sites[j + 1];
            let merged = r * next.right_matrix();
            let next = SiteTensor::from_right_matrix(&merged, next.phys_dim(), next.right_dim());
            self.sites[j] = SiteTensor::from_left_matrix(&q, left, phys);
            self.sites[j + 1] = next;
            self.center += 1;
        }
        while self.center > target {
            let j = self.center;
            let site = &self.sites[j];
            let (phys, right) = (site.phys_dim(), site.right_dim());
            let qr = site.right_matrix().adjoint().qr();
            let (q, r) = (qr.q(), qr.r());
            let prev = &self.sites[j - 1];
            let merged = prev.left_matrix() * r.adjoint();
            let prev = SiteTensor::from_left_matrix(&merged, prev.left_dim(), prev.phys_dim());
            self.sites[j] = SiteTensor::from_right_matrix(&q.adjoint(), phys, right);
            self.sites[j - 1] = prev;
            self.center -= 1;
        }
        Ok(())
    }

    /// Exchange the physical content of sites `left_site` and `left_site + 1`
    /// with one truncated SVD. The orthogonality center must sit on one of the
    /// two sites and travels with the tensor that carried it. Returns the
    /// weight discarded by this call.
    pub fn swap_adjacent(&mut self, left_site: usize, policy: &TruncationPolicy) -> Result<f64> {
        if left_site + 1 >= self.sites.len() {
            return Err(Error::invalid(format!(
                "swap at {left_site} needs a right neighbour in a chain of {}",
                self.sites.len()
            )));
        }
        let new_center = if self.center == left_site {
            1
        } else if self.center == left_site + 1 {
            0
        } else {
            return Err(Error::Precondition(format!(
                "swap at ({left_site}, {}) with orthogonality center at {}",
                left_site + 1,
                self.center
            )));
        };
        self.transform_block(left_site, 2, None, &[1, 0], new_center, policy)
    }

    /// Apply a dense gate to the adjacent sites starting at `first_site`. The
    /// gate acts on the composite physical index in chain order (first site
    /// slowest). The center must lie inside the block and stays at the same
    /// chain position.
    pub fn apply_gate(&mut self, gate: &DMatrix<C64>, first_site: usize, policy: &TruncationPolicy) -> Result<f64> {
        let n = self.gate_width(gate, first_site)?;
        let center = self.center_in_block(first_site, n)?;
        let identity: Vec<usize> = (0..n).collect();
        self.transform_block(first_site, n, Some(gate), &identity, center, policy)
    }

    /// Like [`apply_gate`](Self::apply_gate), then reorder the block's sites so
    /// that new position `j` holds old site `first_site + order[j]` (tensor and
    /// label). The center ends at block offset `center_offset`.
    pub fn apply_gate_permuted(
        &mut self,
        gate: &DMatrix<C64>,
        first_site: usize,
        order: &[usize],
        center_offset: usize,
        policy: &TruncationPolicy,
    ) -> Result<f64> {
        let n = self.gate_width(gate, first_site)?;
        self.center_in_block(first_site, n)?;
        let mut sorted = order.to_vec();
        sorted.sort_unstable();
        if sorted != (0..n).collect::<Vec<_>>() {
            return Err(Error::invalid(format!("{order:?} is not a permutation of {n} sites")));
        }
        if center_offset >= n {
            return Err(Error::invalid("center offset outside the block"));
        }
        self.transform_block(first_site, n, Some(gate), order, center_offset, policy)
    }

    fn gate_width(&self, gate: &DMatrix<C64>, first_site: usize) -> Result<usize> {
        let dim = gate.nrows();
        if gate.ncols() != dim {
            return Err(Error::invalid("gate must be square"));
        }
        let mut prod = 1;
        for j in first_site..self.sites.len() {
            prod *= self.sites[j].phys_dim();
            if prod == dim {
                return Ok(j - first_site + 1);
            }
            if prod > dim {
                break;
            }
        }
        Err(Error::invalid(format!(
            "gate dimension {dim} does not match a product of physical dimensions from site {first_site}"
        )))
    }

    fn center_in_block(&self, first: usize, n: usize) -> Result<usize> {
        if self.center < first || self.center >= first + n {
            return Err(Error::Precondition(format!(
                "orthogonality center {} outside gate block [{first}, {})",
                self.center,
                first + n
            )));
        }
        Ok(self.center - first)
    }

    fn transform_block(
        &mut self,
        first: usize,
        n: usize,
        gate: Option<&DMatrix<C64>>,
        order: &[usize],
        center_offset: usize,
        policy: &TruncationPolicy,
    ) -> Result<f64> {
        let mut block = Block::contract(&self.sites[first..first + n]);
        if let Some(g) = gate {
            block.apply(g);
        }
        block.permute(order);
        let (new_sites, discarded) = block.split(center_offset, policy);
        let old_labels: Vec<SiteLabel> = self.labels[first..first + n].to_vec();
        for (j, site) in new_sites.into_iter().enumerate() {
            self.sites[first + j] = site;
            self.labels[first + j] = old_labels[order[j]];
            if self.labels[first + j] == SiteLabel::System {
                self.system_position = first + j;
            }
        }
        self.center = first + center_offset;
        if policy.accumulate_discarded_weight {
            self.discarded_weight += discarded;
        }
        Ok(discarded)
    }

    /// `<Ψ|op|Ψ> / <Ψ|Ψ>` for an operator on a single site.
    pub fn expectation_local(&self, op: &DMatrix<C64>, site: usize) -> Result<C64> {
        self.check_site(site)?;
        let d = self.sites[site].phys_dim();
        if op.shape() != (d, d) {
            return Err(Error::invalid(format!(
                "operator of shape {:?} on site with physical dimension {d}",
                op.shape()
            )));
        }
        let lo = site.min(self.center);
        let hi = site.max(self.center);
        let mut env = DMatrix::<C64>::identity(self.sites[lo].left_dim(), self.sites[lo].left_dim());
        for j in lo..=hi {
            env = if j == site {
                transfer_op(&env, &self.sites[j], op)
            } else {
                transfer(&env, &self.sites[j])
            };
        }
        Ok(env.trace() / self.norm_squared())
    }

    /// `<Ψ|W|Ψ>` for an MPO aligned with the chain (not normalized).
    pub fn expectation_mpo(&self, mpo: &Mpo) -> Result<C64> {
        mpo.check_alignment(&self.phys_dims())?;
        let mut env: Vec<DMatrix<C64>> = vec![DMatrix::from_element(1, 1, C64::new(1.0, 0.0))];
        for (site, w) in self.sites.iter().zip(mpo.sites()) {
            let slices: Vec<DMatrix<C64>> = (0..site.phys_dim()).map(|p| site.slice(p)).collect();
            let mut next = vec![DMatrix::<C64>::zeros(site.right_dim(), site.right_dim()); w.right_dim()];
            for a in 0..w.left_dim() {
                for b in 0..w.right_dim() {
                    let Some(op) = w.op(a, b) else { continue };
                    for (po, pi, val) in nonzeros(op) {
                        next[b] += (slices[po].adjoint() * &env[a] * &slices[pi]) * val;
                    }
                }
            }
            env = next;
        }
        Ok(env[0][(0, 0)])
    }
}

pub(crate) fn nonzeros(op: &DMatrix<C64>) -> Vec<(usize, usize, C64)> {
    let mut out = Vec::new();
    for i in 0..op.nrows() {
        for j in 0..op.ncols() {
            let v = op[(i, j)];
            if v != C64::new(0.0, 0.0) {
                out.push((i, j, v));
            }
        }
    }
    out
}

/// Left environment through one site: `Σ_p A_p† E A_p`.
pub fn transfer(env: &DMatrix<C64>, site: &SiteTensor) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(site.right_dim(), site.right_dim());
    for p in 0..site.phys_dim() {
        let a = site.slice(p);
        out += a.adjoint() * env * &a;
    }
    out
}

/// Left environment through one site with an operator: `Σ O[p', p] A_p'† E A_p`.
pub fn transfer_op(env: &DMatrix<C64>, site: &SiteTensor, op: &DMatrix<C64>) -> DMatrix<C64> {
    let slices: Vec<DMatrix<C64>> = (0..site.phys_dim()).map(|p| site.slice(p)).collect();
    let mut out = DMatrix::zeros(site.right_dim(), site.right_dim());
    for (po, pi, val) in nonzeros(op) {
        out += (slices[po].adjoint() * env * &slices[pi]) * val;
    }
    out
}

/// Right environment through one site: `Σ_p A_p E A_p†`.
pub fn transfer_right(env: &DMatrix<C64>, site: &SiteTensor) -> DMatrix<C64> {
    let mut out = DMatrix::zeros(site.left_dim(), site.left_dim());
    for p in 0..site.phys_dim() {
        let a = site.slice(p);
        out += &a * env * a.adjoint();
    }
    out
}

/// Right environment through one site with an operator: `Σ O[p', p] A_p E A_p'†`.
pub fn transfer_right_op(env: &DMatrix<C64>, site: &SiteTensor, op: &DMatrix<C64>) -> DMatrix<C64> {
    let slices: Vec<DMatrix<C64>> = (0..site.phys_dim()).map(|p| site.slice(p)).collect();
    let mut out = DMatrix::zeros(site.left_dim(), site.left_dim());
    for (po, pi, val) in nonzeros(op) {
        out += (&slices[pi] * env * slices[po].adjoint()) * val;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigma_ee() -> DMatrix<C64> {
        let mut m = DMatrix::zeros(2, 2);
        m[(1, 1)] = C64::new(1.0, 0.0);
        m
    }

    #[test]
    fn vacuum_layout() {
        let s = TimeBinState::init_vacuum(3, 5, 3).unwrap();
        assert_eq!(s.len(), 9);
        assert_eq!(s.system_position(), 3);
        assert_eq!(s.orthogonality_center(), 3);
        assert!(s.bond_dims().iter().all(|&b| b == 1));
        assert_eq!(s.label(0), SiteLabel::Bin(-3));
        assert_eq!(s.label(4), SiteLabel::Bin(0));
        assert!((s.global_norm() - 1.0).abs() < 1e-15);
        assert_eq!(s.discarded_weight(), 0.0);
        assert_eq!(s.expectation_local(&sigma_ee(), 3).unwrap().re, 0.0);

        let small = TimeBinState::init_vacuum(1, 1, 2).unwrap();
        assert_eq!(small.phys_dims().iter().product::<usize>(), 8);
    }

    #[test]
    fn vacuum_rejects_zero_sizes() {
        assert!(TimeBinState::init_vacuum(0, 5, 3).is_err());
        assert!(TimeBinState::init_vacuum(2, 0, 3).is_err());
        assert!(TimeBinState::init_vacuum(2, 5, 0).is_err());
    }

    #[test]
    fn move_center_out_of_range() {
        let mut s = TimeBinState::init_vacuum(2, 2, 2).unwrap();
        assert!(matches!(s.move_center(5), Err(Error::InvalidArgument(_))));
        s.move_center(4).unwrap();
        s.move_center(0).unwrap();
        assert!(s.bond_dims().iter().all(|&b| b == 1));
    }

    #[test]
    fn swap_requires_center() {
        let mut s = TimeBinState::init_vacuum(3, 3, 2).unwrap();
        let err = s.swap_adjacent(0, &TruncationPolicy::default()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn swap_moves_labels_and_system() {
        let mut s = TimeBinState::init_vacuum(1, 2, 2).unwrap();
        let w = s.swap_adjacent(1, &TruncationPolicy::default()).unwrap();
        assert_eq!(w, 0.0);
        assert_eq!(s.system_position(), 2);
        assert_eq!(s.orthogonality_center(), 2);
        assert_eq!(s.label(1), SiteLabel::Bin(0));
        assert!(s.bond_dims().iter().all(|&b| b == 1));
    }

    #[test]
    fn gate_dimension_mismatch() {
        let mut s = TimeBinState::init_vacuum(1, 2, 3).unwrap();
        let gate = DMatrix::<C64>::identity(5, 5);
        assert!(matches!(
            s.apply_gate(&gate, 1, &TruncationPolicy::default()),
            Err(Error::InvalidArgument(_))
        ));
        let op = DMatrix::<C64>::identity(3, 3);
        assert!(s.expectation_local(&op, 1).is_err());
    }

    #[test]
    fn excited_product_population() {
        let sites = vec![
            SiteTensor::basis(3, 0).unwrap(),
            SiteTensor::basis(2, 1).unwrap(),
            SiteTensor::basis(3, 0).unwrap(),
        ];
        let labels = vec![SiteLabel::Bin(0), SiteLabel::System, SiteLabel::Bin(1)];
        let s = TimeBinState::from_sites(sites, labels, 0).unwrap();
        let p = s.expectation_local(&sigma_ee(), 1).unwrap();
        assert!((p.re - 1.0).abs() < 1e-14);
    }
}
