mod common;

use common::{random_model, random_system, rel_err};
use gks_core::firstorder::{
    fista_momentum, solve_admm_general, solve_admm_l1, solve_cp, solve_fista, solve_prox_grad, solve_subgradient,
    AdmmOptions, AdmmSplitting, CpOptions, CpVariant, FistaOptions, ProxGradOptions, StepRule, SubgradientOptions,
};
use gks_core::interior::{smoother_to_plq, solve_ip, IpOptions};
use gks_core::statespace::stack;
use gks_core::{ConstraintSet, DMatrix, DVector, ScalarLoss, SmootherProblem, SolverError};

fn problem(seed: u64, v: ScalarLoss, j: ScalarLoss, set: ConstraintSet) -> SmootherProblem {
    SmootherProblem::new(random_system(seed, 2, 1, 30), v, j, 0.9, set).unwrap()
}

fn ip(p: &SmootherProblem) -> DVector<f64> {
    let opts = IpOptions { eps: 1e-12, ..IpOptions::default() };
    solve_ip(&smoother_to_plq(p).unwrap(), &opts).unwrap().report.x
}

fn dense_quadratic(p: &SmootherProblem) -> DVector<f64> {
    let sys = p.sys();
    let (a, c) = (sys.dense_a(), sys.dense_c());
    let qi = sys.dense_q().try_inverse().unwrap();
    let ri = sys.dense_r().try_inverse().unwrap();
    let h = c.transpose() * &ri * &c + a.transpose() * &qi * &a * p.gamma();
    let g = c.transpose() * &ri * &sys.y + a.transpose() * &qi * &sys.z * p.gamma();
    h.lu().solve(&g).unwrap()
}

#[test]
fn smooth_gradient_matches_finite_differences() {
    let p = problem(1, ScalarLoss::Huber { kappa: 0.5 }, ScalarLoss::Huber { kappa: 0.8 }, ConstraintSet::Unconstrained);
    let x = DVector::from_fn(p.dim(), |i, _| (i as f64 * 0.37).sin());
    let g = p.grad_smooth(&x).unwrap();
    let h = 1e-6;
    for i in 0..p.dim() {
        let mut e = DVector::zeros(p.dim());
        e[i] = h;
        let fd = (p.objective(&(&x + &e)) - p.objective(&(&x - &e))) / (2.0 * h);
        assert!((fd - g[i]).abs() <= 1e-6 * g.amax().max(1.0), "coordinate {i}: {fd} vs {}", g[i]);
    }
}

#[test]
fn gradient_methods_refuse_nonsmooth_losses() {
    let p = problem(2, ScalarLoss::L1, ScalarLoss::Quadratic, ConstraintSet::Unconstrained);
    assert!(matches!(p.grad_smooth(&DVector::zeros(p.dim())), Err(SolverError::NonSmoothLoss(ScalarLoss::L1))));
    assert!(matches!(solve_fista(&p, &FistaOptions::default()), Err(SolverError::NonSmoothLoss(_))));
}

#[test]
fn proximal_gradient_descends_to_the_kalman_smoother() {
    let p = problem(3, ScalarLoss::Quadratic, ScalarLoss::Quadratic, ConstraintSet::Unconstrained);
    let oracle = dense_quadratic(&p);
    let rep = solve_prox_grad(&p, &ProxGradOptions { eps: 1e-12, max_iters: 200_000, beta: None }).unwrap();
    for w in rep.records.windows(2) {
        assert!(w[1].objective <= w[0].objective * (1.0 + 1e-14) + 1e-14);
    }
    assert!(rel_err(&rep.x, &oracle) <= 1e-6, "{}", rel_err(&rep.x, &oracle));
    let fista = solve_fista(&p, &FistaOptions { eps: 1e-12, max_iters: 200_000, ..FistaOptions::default() }).unwrap();
    assert!(rel_err(&fista.x, &oracle) <= 1e-6);
    assert!(fista.iterations < rep.iterations);
}

#[test]
fn fista_momentum_sequence() {
    assert!((fista_momentum(1.0) - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
    let mut s = 1.0;
    for k in 1..100 {
        s = fista_momentum(s);
        // s_k >= (k + 2) / 2
        assert!(s >= (k as f64 + 2.0) / 2.0 - 1e-12);
    }
}

#[test]
fn subgradient_reaches_a_strongly_convex_minimum() {
    let p = problem(4, ScalarLoss::Quadratic, ScalarLoss::Quadratic, ConstraintSet::Unconstrained);
    let oracle = dense_quadratic(&p);
    let fstar = p.objective(&oracle);
    let scale = 1.0 / p.lipschitz_bound();
    let opts = SubgradientOptions { max_iters: 10_000, step: StepRule::Constant(scale) };
    let rep = solve_subgradient(&p, &opts).unwrap();
    let best = rep.best_objectives();
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
    assert!((p.objective(&rep.x) - fstar) <= 1e-2 * fstar.abs().max(1.0));
    assert_eq!(StepRule::Harmonic { scale: 2.0 }.step(4), 0.5);
}

/// `min 1/2 ||x - a||^2 + 1/2 ||w - b||^2` subject to `x - w = 0`.
struct Averaging {
    a: DVector<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
}

impl AdmmSplitting for Averaging {
    fn x_dim(&self) -> usize {
        self.a.len()
    }
    fn omega_dim(&self) -> usize {
        self.b.len()
    }
    fn c(&self) -> &DVector<f64> {
        &self.c
    }
    fn k1(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
    fn k2(&self, w: &DVector<f64>) -> DVector<f64> {
        -w
    }
    fn k1_t(&self, r: &DVector<f64>) -> DVector<f64> {
        r.clone()
    }
    fn x_update(&self, w: &DVector<f64>, u: &DVector<f64>, tau: f64) -> DVector<f64> {
        (&self.a - u + w * tau) / (1.0 + tau)
    }
    fn omega_update(&self, x: &DVector<f64>, u: &DVector<f64>, tau: f64) -> DVector<f64> {
        (&self.b + u + x * tau) / (1.0 + tau)
    }
}

#[test]
fn general_admm_solves_a_consensus_split() {
    let a = DVector::from_vec(vec![1.0, -2.0, 3.0]);
    let b = DVector::from_vec(vec![5.0, 0.0, -1.0]);
    let split = Averaging { a: a.clone(), b: b.clone(), c: DVector::zeros(3) };
    let out = solve_admm_general(&split, &AdmmOptions { tau: 1.0, eps: 1e-12, max_iters: 1000 });
    let mid = (&a + &b) / 2.0;
    assert!((&out.report.x - &mid).amax() < 1e-10);
    assert!((&out.omega - &mid).amax() < 1e-10);
    // The multiplier is the gradient imbalance (a - b) / 2.
    assert!((&out.u - (&a - &b) / 2.0).amax() < 1e-10);
}

#[test]
fn l1_admm_and_chambolle_pock_agree_with_the_interior_point() {
    let p = problem(9, ScalarLoss::L1, ScalarLoss::Quadratic, ConstraintSet::Unconstrained);
    let oracle = ip(&p);
    let fstar = p.objective(&oracle);
    let admm = solve_admm_l1(&p, &AdmmOptions { tau: 1.0, eps: 1e-10, max_iters: 100_000 }).unwrap();
    assert!((p.objective(&admm.x) - fstar).abs() <= 1e-6 * fstar);
    for variant in [CpVariant::V1, CpVariant::V2] {
        let rep = solve_cp(&p, &CpOptions { eps: 1e-12, max_iters: 100_000, ..CpOptions::new(variant) }).unwrap();
        assert!((p.objective(&rep.x) - fstar).abs() <= 1e-6 * fstar, "{variant:?}");
    }
}

#[test]
fn all_solvers_agree_on_a_smooth_instance() {
    let p = problem(6, ScalarLoss::Huber { kappa: 1.0 }, ScalarLoss::Quadratic, ConstraintSet::Unconstrained);
    let oracle = ip(&p);
    let fstar = p.objective(&oracle);
    let tight = 1e-12;
    let xs = [
        ("proxgrad", solve_prox_grad(&p, &ProxGradOptions { eps: tight, max_iters: 200_000, beta: None }).unwrap().x),
        ("fista", solve_fista(&p, &FistaOptions { eps: tight, max_iters: 200_000, ..FistaOptions::default() }).unwrap().x),
        ("cp-v1", solve_cp(&p, &CpOptions { eps: tight, max_iters: 200_000, ..CpOptions::new(CpVariant::V1) }).unwrap().x),
        ("cp-v2", solve_cp(&p, &CpOptions { eps: tight, max_iters: 200_000, ..CpOptions::new(CpVariant::V2) }).unwrap().x),
    ];
    for (name, x) in xs {
        assert!(rel_err(&x, &oracle) <= 1e-5, "{name}: {}", rel_err(&x, &oracle));
        assert!((p.objective(&x) - fstar).abs() <= 1e-8 * fstar, "{name}");
    }
}

#[test]
fn box_constrained_solvers_stay_feasible_and_agree() {
    let dim = 62;
    let set = ConstraintSet::Box { lo: DVector::from_element(dim, -0.5), hi: DVector::from_element(dim, 0.5) };
    let p = problem(2, ScalarLoss::Huber { kappa: 1.0 }, ScalarLoss::Quadratic, set.clone());
    assert!(ip(&p.clone().with_constraints(ConstraintSet::Unconstrained)).amax() > 0.6, "box must bind");
    let oracle = ip(&p);
    let fstar = p.objective(&oracle);
    let fista = solve_fista(&p, &FistaOptions { eps: 1e-12, max_iters: 200_000, ..FistaOptions::default() }).unwrap();
    let cp = solve_cp(&p, &CpOptions { eps: 1e-12, max_iters: 200_000, ..CpOptions::new(CpVariant::V2) }).unwrap();
    for x in [&fista.x, &cp.x] {
        assert!(set.contains(x, 1e-12));
        assert!((p.objective(x) - fstar).abs() <= 1e-8 * fstar, "{} vs {fstar}", p.objective(x));
    }
}

#[test]
fn chambolle_pock_rejects_steps_beyond_the_bound() {
    let p = problem(7, ScalarLoss::L1, ScalarLoss::Quadratic, ConstraintSet::Unconstrained);
    let opts = CpOptions { sigma: Some(10.0), tau: Some(10.0), ..CpOptions::new(CpVariant::V1) };
    assert!(matches!(solve_cp(&p, &opts), Err(SolverError::StepSizeViolation { product }) if product >= 1.0));
    let v2 = problem(7, ScalarLoss::L1, ScalarLoss::L1, ConstraintSet::Unconstrained);
    assert!(matches!(solve_cp(&v2, &CpOptions::new(CpVariant::V2)), Err(SolverError::Unsupported(_))));
}

#[test]
fn first_order_solvers_reject_singular_covariances() {
    let mut model = random_model(8, 2, 1, 5);
    model.q[2] = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let p = SmootherProblem::new(stack(&model).unwrap(), ScalarLoss::L1, ScalarLoss::Quadratic, 1.0, ConstraintSet::Unconstrained)
        .unwrap();
    assert!(matches!(solve_cp(&p, &CpOptions::new(CpVariant::V1)), Err(SolverError::SingularCovariance)));
    assert!(matches!(solve_admm_l1(&p, &AdmmOptions::default()), Err(SolverError::SingularCovariance)));
}

#[test]
fn lipschitz_bound_brackets_the_largest_curvature() {
    for seed in 0..5 {
        let p = problem(seed, ScalarLoss::Huber { kappa: 0.5 }, ScalarLoss::Quadratic, ConstraintSet::Unconstrained);
        let lmax = p.hessian_bound_operator().to_dense().symmetric_eigen().eigenvalues.max();
        let l = p.lipschitz_bound();
        assert!(l >= lmax * (1.0 - 1e-9) && l <= lmax * 1.06, "{l} vs {lmax}");
    }
}
