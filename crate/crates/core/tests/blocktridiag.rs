mod common;

use common::{random_matrix, random_system};
use gks_core::blocktridiag::{
    assemble_normal_equations, factor, power_iteration, solve_factored, solve_mf, solve_mf_parallel, solve_rts,
    BlockTridiag,
};
use gks_core::statespace::{rng_for, stack, standard_normal, LtvModel};
use gks_core::{DMatrix, DVector};
use proptest::prelude::*;

fn random_vector(seed: u64, dim: usize) -> DVector<f64> {
    let mut rng = rng_for(seed, 77);
    DVector::from_fn(dim, |_, _| standard_normal(&mut rng))
}

/// An SPD block-tridiagonal operator with arbitrary (non-symmetric) coupling.
fn random_spd_btd(seed: u64, n: usize, horizon: usize) -> BlockTridiag {
    let mut rng = rng_for(seed, 13);
    let sub: Vec<DMatrix<f64>> = (0..horizon).map(|_| random_matrix(&mut rng, n, n, 1.0)).collect();
    // Diagonal dominance by the neighbours' coupling norms keeps it SPD.
    let diag = (0..=horizon)
        .map(|t| {
            let g = random_matrix(&mut rng, n, n, 1.0);
            let mut d = &g * g.transpose();
            let mut coupling = 0.1;
            if t > 0 {
                coupling += sub[t - 1].norm();
            }
            if t < horizon {
                coupling += sub[t].norm();
            }
            for i in 0..n {
                d[(i, i)] += coupling;
            }
            d
        })
        .collect();
    BlockTridiag::new(diag, sub)
}

#[test]
fn scalar_model_assembles_to_the_hand_computed_system() {
    let model = LtvModel::time_invariant(
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::zeros(1, 1),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DVector::zeros(1),
        DMatrix::from_element(1, 1, 1.0),
        vec![DVector::zeros(1)],
        vec![DVector::from_element(1, 2.5)],
    );
    let (op, r) = assemble_normal_equations(&stack(&model).unwrap()).unwrap();
    assert_eq!(op.to_dense(), DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]));
    assert_eq!(r, DVector::from_vec(vec![0.0, 2.5]));
}

#[test]
fn assembly_matches_dense_normal_equations() {
    let sys = random_system(21, 3, 2, 6);
    let (op, r) = assemble_normal_equations(&sys).unwrap();
    let (a, c) = (sys.dense_a(), sys.dense_c());
    let qi = sys.dense_q().try_inverse().unwrap();
    let ri = sys.dense_r().try_inverse().unwrap();
    let dense = c.transpose() * &ri * &c + a.transpose() * &qi * &a;
    let rhs = c.transpose() * &ri * &sys.y + a.transpose() * &qi * &sys.z;
    let scale = dense.amax();
    assert!((op.to_dense() - &dense).amax() <= 1e-12 * scale);
    assert!((r - rhs).amax() <= 1e-12 * scale * sys.y.amax().max(1.0));
    // Bandwidth is exactly one block.
    let d = op.to_dense();
    assert!(d.view((0, 6), (3, 15)).iter().all(|v| *v == 0.0));
}

#[test]
fn identity_system_returns_the_right_hand_side() {
    let op = BlockTridiag::identity(3, 4);
    let r = random_vector(1, 15);
    assert_eq!(solve_rts(&op, &r).unwrap(), r);
    assert_eq!(solve_mf(&op, &r).unwrap(), r);
    assert_eq!(factor(&op).unwrap().solve(&r), r);
    assert_eq!(op.matvec(&r).unwrap(), r);
}

#[test]
fn small_random_system_matches_dense_solve() {
    let op = random_spd_btd(4, 2, 10);
    let r = random_vector(4, op.dim());
    let dense = op.to_dense().cholesky().unwrap().solve(&r);
    for x in [solve_rts(&op, &r).unwrap(), solve_mf(&op, &r).unwrap(), solve_mf_parallel(&op, &r).unwrap()] {
        assert!((&x - &dense).norm() <= 1e-10 * dense.norm());
    }
}

#[test]
fn one_factorization_serves_many_right_hand_sides() {
    let op = random_spd_btd(9, 3, 12);
    let f = factor(&op).unwrap();
    for k in 0..100 {
        let r = random_vector(100 + k, op.dim());
        let a = solve_factored(&f, &r).unwrap();
        let b = solve_rts(&op, &r).unwrap();
        assert!((&a - &b).norm() <= 1e-12 * b.norm());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn rts_and_mf_solve_random_spd_systems(seed in 0u64..1_000_000, n in 1usize..5, horizon in 1usize..51) {
        let op = random_spd_btd(seed, n, horizon);
        let r = random_vector(seed, op.dim());
        let x_rts = solve_rts(&op, &r).unwrap();
        let x_mf = solve_mf(&op, &r).unwrap();
        prop_assert!((op.apply(&x_rts) - &r).norm() <= 1e-10 * r.norm());
        prop_assert!((op.apply(&x_mf) - &r).norm() <= 1e-10 * r.norm());
        prop_assert!((&x_rts - &x_mf).norm() <= 1e-8 * x_rts.norm());
    }

    #[test]
    fn matvec_matches_the_dense_product(seed in 0u64..1_000_000, n in 1usize..5, horizon in 1usize..20) {
        let op = random_spd_btd(seed, n, horizon);
        let x = random_vector(seed + 1, op.dim());
        let dense = op.to_dense() * &x;
        let err = (op.matvec(&x).unwrap() - &dense).amax();
        prop_assert!(err <= 1e-13 * dense.amax().max(1.0) * (n as f64));
    }

    #[test]
    fn normal_equations_from_models_are_solved(seed in 0u64..1_000_000, n in 1usize..4, horizon in 1usize..30) {
        let sys = random_system(seed, n, 1, horizon);
        let (op, r) = assemble_normal_equations(&sys).unwrap();
        let x = solve_rts(&op, &r).unwrap();
        prop_assert!((op.apply(&x) - &r).norm() <= 1e-10 * r.norm().max(1e-300));
    }
}

#[test]
fn power_iteration_bounds_the_spectrum_from_below() {
    for seed in 0..10 {
        let op = random_spd_btd(seed, 3, 8);
        let lmax = op.to_dense().symmetric_eigen().eigenvalues.max();
        let est = power_iteration(|v| op.apply(v), op.dim(), 5000, 1e-14);
        assert!(est.value <= lmax * (1.0 + 1e-12));
        assert!(est.inflated() >= lmax * (1.0 - 1e-4), "{} vs {lmax}", est.value);
    }
}
