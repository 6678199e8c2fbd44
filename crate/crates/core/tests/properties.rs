use std::sync::Arc;

use dcstat::certify::{critical_residual, dstat_residual, directional_derivative_probe, hull_distance};
use dcstat::drivers::alg1_run;
use dcstat::hfunc::FiniteMaxH;
use dcstat::oracle::{grad_check, ConvexG, Quadratic, SmoothConvex};
use dcstat::problems::{build_problem, smooth_oracles, ProblemSpec};
use dcstat::selectors::covering::cover_ball;
use dcstat::selectors::{sample_ball, SelectorSpec};
use dcstat::subsolver::{solve, solve_quadratic, Subproblem};
use dcstat::{SolverConfig, Vector};
use nalgebra::{dvector, DMatrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vec_in(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vector> {
    prop::collection::vec(lo..hi, n).prop_map(Vector::from_vec)
}

fn random_quadratic(n: usize) -> impl Strategy<Value = (DMatrix<f64>, Vector)> {
    (prop::collection::vec(-1.0..1.0f64, n * n), vec_in(n, -1.0, 1.0), 0.05..1.0f64).prop_map(move |(m, b, s)| {
        let m = DMatrix::from_vec(n, n, m);
        (m.transpose() * &m + DMatrix::identity(n, n) * s, b)
    })
}

/// `x²/2 − |x|`: with slopes s ∈ {+1, −1}, `z = (s + x)/2`, residual `|s − x|/2`.
fn p1_dstat_closed_form(x: f64) -> f64 {
    let slopes: &[f64] = if x > 0.0 {
        &[1.0]
    } else if x < 0.0 {
        &[-1.0]
    } else {
        &[1.0, -1.0]
    };
    slopes.iter().map(|s| (s - x).abs() / 2.0).fold(0.0, f64::max)
}

/// `f′(x; d)` from values of `f` alone.
fn fd_directional(p: &dcstat::DCProgram, x: &Vector, d: &Vector) -> f64 {
    let q = |t: f64| (p.f_value(&(x + d * t)).unwrap() - p.f_value(x).unwrap()) / t;
    2.0 * q(1e-7) - q(2e-7)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn active_set_grows_with_delta(x in vec_in(4, -3.0, 3.0), d1 in 0.0..2.0f64, extra in 0.0..2.0f64) {
        let p = build_problem(&ProblemSpec::p2(4, 5, 0.5, 7)).unwrap();
        let dcstat::HOracle::FiniteMax(h) = &p.h else { unreachable!() };
        let small = h.active_set(&x, d1).unwrap();
        let large = h.active_set(&x, d1 + extra).unwrap();
        prop_assert!(!small.is_empty());
        prop_assert!(small.is_subset(&large));
    }

    #[test]
    fn hull_distance_ignores_point_order(
        pts in prop::collection::vec(vec_in(3, -2.0, 2.0), 1..6),
        target in vec_in(3, -3.0, 3.0),
        seed in any::<u64>(),
    ) {
        let a = hull_distance(&target, &pts, 1e-12).unwrap();
        let mut shuffled = pts.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = hull_distance(&target, &shuffled, 1e-12).unwrap();
        prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a));
        // never farther than the nearest vertex, never negative
        let nearest = pts.iter().map(|p| (p - &target).norm()).fold(f64::INFINITY, f64::min);
        prop_assert!(a <= nearest + 1e-12 && a >= 0.0);
    }

    #[test]
    fn hull_distance_matches_segment_projection(a in vec_in(2, -2.0, 2.0), b in vec_in(2, -2.0, 2.0), t in vec_in(2, -3.0, 3.0)) {
        let ab = &b - &a;
        let s = if ab.norm_squared() > 0.0 { ((&t - &a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
        let exact = (&a + ab * s - &t).norm();
        let d = hull_distance(&t, &[a.clone(), b.clone()], 1e-12).unwrap();
        prop_assert!((d - exact).abs() <= 1e-6);
    }

    #[test]
    fn iterative_and_closed_form_subsolvers_agree(
        (q, b) in (1usize..=8).prop_flat_map(random_quadratic),
        mu in prop::sample::select(vec![0.0, 0.5, 2.0]),
        seed in any::<u64>(),
    ) {
        let n = b.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = sample_ball(&mut rng, &Vector::zeros(n), 2.0);
        let anchor = sample_ball(&mut rng, &Vector::zeros(n), 2.0);
        let g = ConvexG::smooth_only(Arc::new(Quadratic::new(q.clone(), b.clone(), 0.0).unwrap()));
        let sp = Subproblem::new(&g, y, anchor, mu);
        let closed = solve_quadratic(&q, &b, &sp).unwrap();
        let iter = solve(&sp, 1e-10, 100_000).unwrap();
        prop_assert!((&closed.z - &iter.z).norm() <= 1e-7);
        // optimality: no random perturbation does better
        for _ in 0..8 {
            let z = &closed.z + sample_ball(&mut rng, &Vector::zeros(n), 1e-3);
            prop_assert!(sp.objective(&z) >= closed.objective - 1e-12);
        }
    }

    #[test]
    fn p1_stationarity_residual_matches_closed_form(x in -3.0..3.0f64) {
        let p = build_problem(&ProblemSpec::p1()).unwrap();
        let r = dstat_residual(&p, &dvector![x], 0.0, 1e-12).unwrap();
        prop_assert!((r - p1_dstat_closed_form(x)).abs() <= 1e-12);
    }

    #[test]
    fn criticality_bounded_by_stationarity(x in vec_in(4, -3.0, 3.0), delta in 0.0..0.5f64) {
        // ‖∇g(x) − s_i‖ ≤ (1 + L_g)‖z_i − x‖ for every active slope
        let p = build_problem(&ProblemSpec::p2(4, 3, 0.5, 5)).unwrap();
        let lg = p.g.smooth.lipschitz_grad().unwrap();
        let d = dstat_residual(&p, &x, delta, 1e-12).unwrap();
        let c = critical_residual(&p, &x, delta).unwrap();
        prop_assert!(c <= (1.0 + lg) * d + 1e-9);
    }

    #[test]
    fn probe_matches_value_differences(x in vec_in(4, -3.0, 3.0), d in vec_in(4, -1.0, 1.0)) {
        prop_assume!(d.norm() > 1e-3);
        let d = d.normalize();
        for spec in [ProblemSpec::p2(4, 3, 0.5, 2), ProblemSpec::p4(4, 2)] {
            let p = build_problem(&spec).unwrap();
            let probe = directional_derivative_probe(&p, &x, std::slice::from_ref(&d)).unwrap();
            prop_assert!((probe - fd_directional(&p, &x, &d)).abs() <= 1e-4 * (1.0 + probe.abs()));
        }
    }

    #[test]
    fn descent_holds_on_random_p2(seed in 0u64..1000, x0 in vec_in(3, -4.0, 4.0)) {
        let p = build_problem(&ProblemSpec::p2(3, 4, 0.5, seed)).unwrap();
        for sel in [SelectorSpec::FullActive, SelectorSpec::Update1] {
            let cfg = SolverConfig { delta: Some(1.0), check_minorants: true, ..Default::default() };
            let t = alg1_run(&p, &x0, &sel, &cfg).unwrap();
            let f = t.f_values();
            for (k, r) in t.records.iter().enumerate() {
                prop_assert!(f[k + 1] <= f[k] + 1e-10);
                prop_assert!(f[k] - f[k + 1] >= 0.5 * r.descent_modulus * r.step_norm.powi(2) - 1e-9);
            }
        }
    }

    #[test]
    fn coverings_cover(n in 1usize..=3, radius in 0.2..3.0f64, frac in 0.1..1.0f64, seed in any::<u64>()) {
        let eps = frac * radius;
        let c = cover_ball(&Vector::zeros(n), radius, eps).unwrap();
        prop_assert!(c.len() as f64 <= c.count_bound());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..200 {
            let p = sample_ball(&mut rng, &Vector::zeros(n), radius);
            prop_assert!(c.nearest_distance(&p) <= eps + 1e-12);
        }
    }
}

#[test]
fn problem_library_gradients_check() {
    let specs = [
        ProblemSpec::p1(),
        ProblemSpec::p2(4, 3, 0.5, 42),
        ProblemSpec::p2(6, 5, 0.2, 1),
        ProblemSpec::p3(1.0),
        ProblemSpec::p4(5, 3),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for spec in specs {
        let p = build_problem(&spec).unwrap();
        let pts: Vec<Vector> = (0..10).map(|_| sample_ball(&mut rng, &Vector::zeros(p.dim), 3.0)).collect();
        for o in smooth_oracles(&p) {
            assert!(grad_check(o.as_ref(), &pts).unwrap() <= 1e-6, "{}", spec.id);
        }
    }
}

#[test]
fn p2_pieces_are_strongly_convex() {
    let p = build_problem(&ProblemSpec::p2(4, 3, 0.5, 42)).unwrap();
    let dcstat::HOracle::FiniteMax(h) = &p.h else { unreachable!() };
    assert!(h.members().iter().all(|m| m.modulus() >= 0.5 - 1e-12));
    assert!(p.g.modulus >= 0.5);
}

#[test]
fn huber_closed_form() {
    // h(x) = x²/2 on |x| ≤ R, R|x| − R²/2 outside
    let huber = |x: f64, r: f64| if x.abs() <= r { 0.5 * x * x } else { r * x.abs() - 0.5 * r * r };
    for r in [0.5, 1.0, 2.0] {
        let p = build_problem(&ProblemSpec::p3(r)).unwrap();
        for i in -40..=40 {
            let x = i as f64 * 0.1;
            assert!((p.h_value(&dvector![x]).unwrap() - huber(x, r)).abs() <= 1e-14);
        }
    }
}

#[test]
fn finite_max_rejects_mixed_dimensions() {
    let a: Arc<dyn SmoothConvex> = Arc::new(Quadratic::scaled_distance(&dvector![0.0], 1.0));
    let b: Arc<dyn SmoothConvex> = Arc::new(Quadratic::scaled_distance(&dvector![0.0, 0.0], 1.0));
    assert!(FiniteMaxH::new(vec![a, b]).is_err());
}
