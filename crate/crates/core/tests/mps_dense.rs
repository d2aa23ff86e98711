mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use pyragas_mps::mps::{Mpo, SiteLabel, TimeBinState, TruncationPolicy};
use rand::rngs::StdRng;
use rand::Rng;

const TOL: f64 = 1e-10;

struct Case {
    state: TimeBinState,
    phys: Vec<usize>,
}

fn case(seed: u64, n: usize, center_hint: usize) -> (Case, StdRng) {
    let mut r = rng(seed);
    let system = r.random_range(0..n);
    let d = r.random_range(2..=3);
    let phys: Vec<usize> = (0..n).map(|j| if j == system { 2 } else { d }).collect();
    let center = center_hint % n;
    let state = random_state(&mut r, &phys, system, 4, center);
    (Case { state, phys }, r)
}

fn rel(a: f64, scale: f64) -> f64 {
    a / scale.max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn move_center_preserves_the_vector(seed in any::<u64>(), n in 2usize..=6, c0 in 0usize..6, target in 0usize..6) {
        let (Case { mut state, .. }, _) = case(seed, n, c0);
        let before = dense(&state);
        state.move_center(target % n).unwrap();
        prop_assert_eq!(state.orthogonality_center(), target % n);
        let after = dense(&state);
        prop_assert!(rel(max_diff(&before, &after), before.norm()) < 1e-12);
        for j in 0..state.orthogonality_center() {
            prop_assert!(state.site(j).left_orthogonality_error() < TOL);
        }
        for j in state.orthogonality_center() + 1..n {
            prop_assert!(state.site(j).right_orthogonality_error() < TOL);
        }
    }

    #[test]
    fn swap_matches_permuted_vector(seed in any::<u64>(), n in 2usize..=6, j0 in 0usize..5, on_right in any::<bool>()) {
        let j = j0 % (n - 1);
        let (Case { mut state, phys }, _) = case(seed, n, j + on_right as usize);
        let labels = state.labels().to_vec();
        let before = dense(&state);
        let discarded = state.swap_adjacent(j, &TruncationPolicy::exact()).unwrap();
        let expected = swap_factors(&before, &phys, j);
        prop_assert!(rel(max_diff(&expected, &dense(&state)), before.norm()) < TOL);
        prop_assert!(discarded.abs() < 1e-20);
        prop_assert_eq!(state.label(j), labels[j + 1]);
        prop_assert_eq!(state.label(j + 1), labels[j]);
        let sys = labels.iter().position(|l| *l == SiteLabel::System).unwrap();
        let moved = if sys == j { j + 1 } else if sys == j + 1 { j } else { sys };
        prop_assert_eq!(state.system_position(), moved);
    }

    #[test]
    fn swap_is_an_involution(seed in any::<u64>(), n in 2usize..=6, j0 in 0usize..5) {
        let j = j0 % (n - 1);
        let (Case { mut state, .. }, _) = case(seed, n, j);
        let before = dense(&state);
        state.swap_adjacent(j, &TruncationPolicy::exact()).unwrap();
        state.swap_adjacent(j, &TruncationPolicy::exact()).unwrap();
        prop_assert!(rel(max_diff(&before, &dense(&state)), before.norm()) < 1e-12);
    }

    #[test]
    fn gate_matches_matrix_vector_product(seed in any::<u64>(), n in 2usize..=6, first0 in 0usize..5, width in 2usize..=3, unitary in any::<bool>()) {
        let width = width.min(n);
        let first = first0 % (n - width + 1);
        let (Case { mut state, phys }, mut r) = case(seed, n, first + (seed as usize % width));
        let dim: usize = phys[first..first + width].iter().product();
        let gate = if unitary {
            random_unitary(&mut r, dim)
        } else {
            DMatrix::from_fn(dim, dim, |_, _| random_c(&mut r))
        };
        let before = dense(&state);
        let center = state.orthogonality_center();
        state.apply_gate(&gate, first, &TruncationPolicy::exact()).unwrap();
        prop_assert_eq!(state.orthogonality_center(), center);
        let expected = apply_on(&before, &phys, first, &gate);
        prop_assert!(rel(max_diff(&expected, &dense(&state)), expected.norm()) < TOL);
        if unitary {
            prop_assert!((state.norm_squared() / before.norm_squared() - 1.0).abs() < TOL);
        }
    }

    #[test]
    fn local_expectation_matches(seed in any::<u64>(), n in 2usize..=6, c0 in 0usize..6, site0 in 0usize..6) {
        let (Case { state, phys }, mut r) = case(seed, n, c0);
        let site = site0 % n;
        let op = random_hermitian(&mut r, phys[site]);
        let got = state.expectation_local(&op, site).unwrap();
        let want = local_expectation(&dense(&state), &phys, site, &op);
        prop_assert!((got - want).norm() < TOL * (1.0 + want.norm()));
    }

    #[test]
    fn binomial_mpo_matches(seed in any::<u64>(), n in 2usize..=6, order in 1usize..=4, mask in any::<u8>()) {
        let (Case { state, phys }, _) = case(seed, n, 0);
        let counted: Vec<bool> = (0..n).map(|j| phys[j] != 2 && mask >> j & 1 == 1).collect();
        let mpo = Mpo::binomial_moment(&phys, &counted, order).unwrap();
        let got = state.expectation_mpo(&mpo).unwrap();
        let v = dense(&state);
        let want = mpo_expectation(&v, &mpo);
        prop_assert!((got - want).norm() < TOL * (1.0 + want.norm()));
        // diagonal check against explicit photon counting
        let mut direct = 0.0;
        for (idx, amp) in v.iter().enumerate() {
            let mut rem = idx;
            let mut total = 0usize;
            for j in (0..n).rev() {
                let level = rem % phys[j];
                rem /= phys[j];
                if counted[j] {
                    total += level;
                }
            }
            let binom: f64 = (0..order).fold(1.0, |acc, i| acc * (total as f64 - i as f64) / (i + 1) as f64);
            direct += amp.norm_sqr() * binom.max(0.0);
        }
        prop_assert!((got.re - direct).abs() < TOL * (1.0 + direct));
    }

    #[test]
    fn truncation_loss_is_accounted(seed in any::<u64>(), n in 3usize..=6, j0 in 0usize..5, bond in 1usize..=2) {
        let j = j0 % (n - 1);
        let (Case { mut state, .. }, _) = case(seed, n, j);
        let before = state.norm_squared();
        let policy = TruncationPolicy::new(1e-7, bond).unwrap();
        let discarded = state.swap_adjacent(j, &policy).unwrap();
        let after = state.norm_squared();
        prop_assert!(after <= before * (1.0 + 1e-12));
        prop_assert!(before - after <= discarded + 1e-9 * before);
        prop_assert!((state.discarded_weight() - discarded).abs() < 1e-15 * (1.0 + discarded));
    }
}

#[test]
fn gauge_sequence_changes_no_expectation() {
    let (Case { mut state, phys }, mut r) = case(7, 6, 0);
    let ops: Vec<DMatrix<_>> = phys.iter().map(|&d| random_hermitian(&mut r, d)).collect();
    let reference: Vec<_> = (0..6).map(|j| state.expectation_local(&ops[j], j).unwrap()).collect();
    for target in [5, 0, 3, 1, 4, 2] {
        state.move_center(target).unwrap();
        for j in 0..6 {
            assert!((state.expectation_local(&ops[j], j).unwrap() - reference[j]).norm() < 1e-10);
        }
    }
}

#[test]
fn identity_gate_is_exact() {
    let (Case { mut state, phys }, _) = case(11, 4, 1);
    let before = dense(&state);
    let dim = phys[1] * phys[2];
    let discarded = state.apply_gate(&DMatrix::identity(dim, dim), 1, &TruncationPolicy::exact()).unwrap();
    assert_eq!(discarded, 0.0);
    assert!(max_diff(&before, &dense(&state)) < 1e-12 * before.norm());
}

#[test]
fn vacuum_examples() {
    let st = TimeBinState::init_vacuum(3, 5, 3).unwrap();
    assert_eq!(st.len(), 9);
    assert!(st.bond_dims().iter().all(|&b| b == 1));
    assert_eq!(st.global_norm(), 1.0);
    assert_eq!(st.discarded_weight(), 0.0);
    let small = TimeBinState::init_vacuum(1, 1, 2).unwrap();
    assert_eq!(small.phys_dims().iter().product::<usize>(), 8);
    assert_eq!(dense(&small).len(), 8);
    assert!(TimeBinState::init_vacuum(0, 1, 2).is_err());
}

#[test]
fn identity_mpo_gives_squared_norm() {
    let (Case { state, phys }, _) = case(5, 5, 2);
    let got = state.expectation_mpo(&Mpo::identity(&phys)).unwrap();
    assert!((got.re - dense(&state).norm_squared()).abs() < 1e-10 * got.re);
    assert!(state.expectation_mpo(&Mpo::identity(&phys[..4])).is_err());
}
