use gks_core::plq::{ConstraintSet, ScalarLoss};
use gks_core::statespace::{rng_for, standard_normal};
use gks_core::DVector;
use proptest::prelude::*;
use rand::Rng;

fn losses() -> Vec<ScalarLoss> {
    vec![
        ScalarLoss::Quadratic,
        ScalarLoss::L1,
        ScalarLoss::Huber { kappa: 1.0 },
        ScalarLoss::Huber { kappa: 0.3 },
        ScalarLoss::Vapnik { eps: 0.5 },
        ScalarLoss::Vapnik { eps: 0.0 },
        ScalarLoss::HuberInsensitive { kappa: 2.0, eps: 0.1 },
        ScalarLoss::ElasticNet { alpha: 0.5 },
        ScalarLoss::ElasticNet { alpha: 0.2 },
    ]
}

fn loss_strategy() -> impl Strategy<Value = ScalarLoss> {
    proptest::sample::select(losses())
}

/// Minimizer of a convex function on `[lo, hi]` by golden-section search.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    (lo + hi) / 2.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn moreau_identity(loss in loss_strategy(), y in -20.0f64..20.0) {
        let y = DVector::from_element(1, y);
        let sum = loss.prox(1.0, &y) + loss.prox_conjugate(1.0, &y);
        prop_assert!((sum - &y).amax() <= 1e-12 * y.amax().max(1.0));
    }

    #[test]
    fn moreau_identity_for_group_norm(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
        let y = DVector::from_vec(vec![a, b, c]);
        let loss = ScalarLoss::GroupL2;
        let sum = loss.prox(1.0, &y) + loss.prox_conjugate(1.0, &y);
        prop_assert!((sum - &y).amax() <= 1e-12 * y.amax().max(1.0));
    }

    #[test]
    fn prox_satisfies_the_optimality_condition(loss in loss_strategy(), eta in 0.05f64..10.0, y in -20.0f64..20.0) {
        let u = loss.prox_scalar(eta, y);
        let (lo, hi) = loss.subdifferential(u);
        let g = (y - u) / eta;
        prop_assert!(g >= lo - 1e-8 && g <= hi + 1e-8, "{loss:?} eta {eta} y {y}: u {u}, g {g} not in [{lo}, {hi}]");
    }

    #[test]
    fn prox_matches_golden_section(loss in loss_strategy(), eta in 0.05f64..10.0, y in -20.0f64..20.0) {
        let u = loss.prox_scalar(eta, y);
        let oracle = golden_min(|v| eta * loss.eval(v) + 0.5 * (v - y).powi(2), -25.0, 25.0);
        prop_assert!((u - oracle).abs() <= 1e-6, "{u} vs {oracle}");
    }

    #[test]
    fn subgradients_support_the_loss(loss in loss_strategy(), x in -10.0f64..10.0, seed in 0u64..1000) {
        let g = loss.subgradient(x);
        let mut rng = rng_for(seed, 0);
        for _ in 0..100 {
            let y = 10.0 * standard_normal(&mut rng);
            prop_assert!(loss.eval(y) >= loss.eval(x) + g * (y - x) - 1e-12);
        }
    }
}

#[test]
fn loss_values_equal_the_sup_of_their_encoding() {
    for loss in losses() {
        let enc = loss.plq_encoding().unwrap();
        for i in 0..=100 {
            let x = -5.0 + 0.1 * i as f64;
            let direct = loss.eval(x);
            let sup = enc.eval(&DVector::from_element(1, x));
            assert!((direct - sup).abs() <= 1e-8, "{loss:?} at {x}: {direct} vs {sup}");
        }
    }
}

#[test]
fn one_dimensional_encodings_agree_with_a_dual_grid() {
    // For k = 1 the sup runs over an interval; scan it directly.
    for loss in [ScalarLoss::L1, ScalarLoss::Huber { kappa: 1.5 }] {
        let enc = loss.plq_encoding().unwrap();
        let (lo, hi) = (-enc.h[1], enc.h[0]);
        for x in [-3.0, -0.4, 0.0, 0.7, 2.2] {
            let q = enc.b[0] + enc.bmat[(0, 0)] * x;
            let best = (0..=200_000)
                .map(|i| lo + (hi - lo) * i as f64 / 200_000.0)
                .map(|v| v * q - 0.5 * enc.m[(0, 0)] * v * v)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((best - loss.eval(x)).abs() < 1e-8, "{loss:?} at {x}");
        }
    }
}

#[test]
fn conjugates_match_a_sup_oracle() {
    for loss in losses() {
        // Offset grid so no point sits on a domain boundary.
        for i in 0..=40 {
            let w = -2.05 + 0.1 * i as f64;
            let value = loss.conjugate_eval(w);
            // w y - f(y) is concave in y.
            let y = golden_min(|y| loss.eval(y) - w * y, -10.0, 10.0);
            let sup = w * y - loss.eval(y);
            let on_edge = (y.abs() - 10.0).abs() < 1e-3;
            if on_edge {
                // The sup is not attained inside the window: outside the domain.
                assert!(value.is_infinite() || value >= sup - 1e-6, "{loss:?} at {w}");
            } else {
                assert!((value - sup).abs() <= 1e-6, "{loss:?} at {w}: {value} vs {sup}");
            }
        }
    }
}

#[test]
fn l1_prox_zeroes_the_dead_zone_whatever_the_sign_convention() {
    let loss = ScalarLoss::L1;
    for y in [-1.0, -0.5, 0.0, 0.3, 1.0] {
        assert_eq!(loss.prox_scalar(1.0, y), 0.0);
        // The prox objective at 0 beats every nearby point.
        let obj = |u: f64| u.abs() + 0.5 * (u - y).powi(2);
        for k in 1..100 {
            let d = k as f64 * 1e-3;
            assert!(obj(0.0) <= obj(d) && obj(0.0) <= obj(-d));
        }
    }
}

fn sets(dim: usize) -> Vec<ConstraintSet> {
    vec![
        ConstraintSet::Box { lo: DVector::from_element(dim, -1.0), hi: DVector::from_fn(dim, |i, _| 0.5 + i as f64) },
        ConstraintSet::Ball2 { tau: 1.5 },
        ConstraintSet::Ball1 { tau: 1.0 },
        ConstraintSet::BallInf { tau: 0.7 },
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projections_are_idempotent_nonexpansive_and_obtuse(seed in 0u64..1_000_000, dim in 1usize..6) {
        let mut rng = rng_for(seed, 2);
        let mut draw = || DVector::from_fn(dim, |_, _| 3.0 * standard_normal(&mut rng));
        for set in sets(dim) {
            let (a, b) = (draw(), draw());
            let pa = set.project(&a).unwrap();
            let pb = set.project(&b).unwrap();
            prop_assert!(set.contains(&pa, 1e-12));
            prop_assert!((set.project(&pa).unwrap() - &pa).amax() <= 1e-14 * pa.amax().max(1.0));
            prop_assert!((&pa - &pb).norm() <= (&a - &b).norm() + 1e-12);
            for _ in 0..20 {
                let z = set.project(&draw()).unwrap();
                prop_assert!((&a - &pa).dot(&(&z - &pa)) <= 1e-10);
            }
        }
    }
}

#[test]
fn l1_ball_projection_matches_a_grid_search() {
    let set = ConstraintSet::Ball1 { tau: 1.0 };
    let p = set.project(&DVector::from_vec(vec![0.8, 0.8])).unwrap();
    assert!((p - DVector::from_vec(vec![0.5, 0.5])).amax() < 1e-15);
    let mut rng = rng_for(3, 3);
    for _ in 0..20 {
        let y = DVector::from_vec(vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]);
        let p = set.project(&y).unwrap();
        // Closest point on a fine grid of the ball.
        let mut best = f64::INFINITY;
        let steps = 400;
        for i in 0..=steps {
            for j in 0..=steps {
                let z = DVector::from_vec(vec![
                    -1.0 + 2.0 * i as f64 / steps as f64,
                    -1.0 + 2.0 * j as f64 / steps as f64,
                ]);
                if z.lp_norm(1) <= 1.0 + 1e-12 {
                    best = best.min((&z - &y).norm());
                }
            }
        }
        let got = (&p - &y).norm();
        assert!(got <= best + 1e-12 && got >= best - 2.0 / steps as f64, "{got} vs {best}");
    }
}
