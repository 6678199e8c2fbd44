use dcstat::certify::{certify, Verdict};
use dcstat::drivers::{alg1_run, alg2_run, alg3_run, dca_run, SubgradientPolicy};
use dcstat::problems::{build_problem, ProblemSpec};
use dcstat::selectors::SelectorSpec;
use dcstat::{SolverConfig, Termination, Vector};
use nalgebra::dvector;

fn p1() -> dcstat::DCProgram {
    build_problem(&ProblemSpec::p1()).unwrap()
}

fn cfg_delta(delta: f64) -> SolverConfig {
    SolverConfig { delta: Some(delta), ..Default::default() }
}

#[test]
fn dca_average_active_stalls_at_the_kink() {
    let t = dca_run(&p1(), &dvector![0.0], &SubgradientPolicy::AverageActive, &cfg_delta(0.1)).unwrap();
    assert_eq!(t.final_x, dvector![0.0]);
    assert_eq!(t.termination, Termination::StepAndResidualBelowTol);
    let c = certify(&p1(), &t.final_x, 0.0, 1e-6, 1e-10).unwrap();
    assert_eq!(c.verdict, Verdict::CriticalNotDStationary);
}

#[test]
fn full_active_escapes_the_kink() {
    let t = alg1_run(&p1(), &dvector![0.0], &SelectorSpec::FullActive, &cfg_delta(0.1)).unwrap();
    // both candidates have surrogate −0.5; the tie goes to member 0 (slope +1)
    assert_eq!(t.records[0].chosen_index_tag, "0");
    assert_eq!(t.records[0].index_set_size, 2);
    assert!((t.final_x[0] - 1.0).abs() <= 1e-12);
    assert!((t.final_f + 0.5).abs() <= 1e-12);
    assert!(t.converged());
}

#[test]
fn singleton_matches_dca_on_p1() {
    for x0 in [0.0, 0.3, -2.0, 5.0] {
        for policy in [SubgradientPolicy::FirstActive, SubgradientPolicy::AverageActive] {
            let cfg = SolverConfig { max_iters: 50, ..Default::default() };
            let a = dca_run(&p1(), &dvector![x0], &policy, &cfg).unwrap();
            let b = alg1_run(&p1(), &dvector![x0], &SelectorSpec::Singleton { policy: policy.clone(), rho: 0.0 }, &cfg)
                .unwrap();
            let n = a.records.len().min(b.records.len());
            for k in 0..n {
                assert!((&a.records[k].x - &b.records[k].x).amax() <= 1e-12);
            }
        }
    }
}

#[test]
fn alg2_first_step_is_seed_independent() {
    for seed in 0..10 {
        let cfg = SolverConfig { seed, ..cfg_delta(0.1) };
        let t = alg2_run(&p1(), &dvector![0.0], &cfg).unwrap();
        assert_eq!(t.records[1].x, dvector![1.0]);
    }
}

#[test]
fn alg2_from_minus_two() {
    let t = alg2_run(&p1(), &dvector![-2.0], &cfg_delta(0.1)).unwrap();
    assert_eq!(t.records[0].chosen_index_tag, "1");
    assert_eq!(t.final_x, dvector![-1.0]);
}

#[test]
fn alg2_agrees_with_full_active_on_p2() {
    let p = build_problem(&ProblemSpec::p2(4, 3, 0.5, 42)).unwrap();
    let x0 = Vector::from_element(4, 1.0);
    let det = alg1_run(&p, &x0, &SelectorSpec::FullActive, &SolverConfig::default()).unwrap();
    for seed in 0..20 {
        let t = alg2_run(&p, &x0, &SolverConfig { seed, ..Default::default() }).unwrap();
        assert!(t.is_monotone(1e-10));
        assert!((t.final_f - det.final_f).abs() <= 1e-6, "seed {seed}");
    }
}

#[test]
fn alg3_on_huber_continuum() {
    let p = build_problem(&ProblemSpec::p3(1.0)).unwrap();
    let t = alg3_run(&p, &dvector![0.8], &SolverConfig { seed: 7, ..Default::default() }).unwrap();
    assert!(t.final_x[0].abs() <= 1e-4);
    let t = alg3_run(&p, &dvector![0.0], &SolverConfig::default()).unwrap();
    assert_eq!(t.final_x, dvector![0.0]);
    assert_eq!(t.iterations(), 1);
}

#[test]
fn update2_on_huber_continuum() {
    let p = build_problem(&ProblemSpec::p3(1.0)).unwrap();
    let cfg = SolverConfig { check_minorants: true, ..Default::default() };
    let t = alg1_run(&p, &dvector![0.8], &SelectorSpec::Update2, &cfg).unwrap();
    assert!(t.converged());
    assert!(t.final_x[0].abs() <= 1e-6);
}

#[test]
fn limits_pass_the_stationarity_check() {
    let p2 = build_problem(&ProblemSpec::p2(4, 3, 0.5, 42)).unwrap();
    let x0 = Vector::from_element(4, -1.5);
    for (p, x0) in [(p1(), dvector![0.3]), (p2, x0)] {
        let a = alg1_run(&p, &x0, &SelectorSpec::FullActive, &SolverConfig::default()).unwrap();
        let b = alg2_run(&p, &x0, &SolverConfig::default()).unwrap();
        for t in [a, b] {
            let c = certify(&p, &t.final_x, 0.0, 1e-6, 1e-10).unwrap();
            assert!(c.dstat_residual <= 1e-6);
            assert!(t.records.last().unwrap().step_norm <= 1e-8);
        }
    }
}

#[test]
fn update3_reaches_a_stationary_point_of_p4() {
    let p = build_problem(&ProblemSpec::p4(3, 1)).unwrap();
    let cfg = SolverConfig { prox_weight: 1.0, check_minorants: true, ..Default::default() };
    let t = alg1_run(&p, &Vector::zeros(3), &SelectorSpec::Update3, &cfg).unwrap();
    assert!(t.converged());
    // ½‖x − a‖² − ‖x‖₁ is stationary at x = a + sign(x), away from zero
    let a = match &build_problem(&ProblemSpec::p4(3, 1)).unwrap().g.smooth.as_quadratic() {
        Some(q) => -q.linear().clone(),
        None => unreachable!(),
    };
    for j in 0..3 {
        let x = t.final_x[j];
        assert!(x != 0.0);
        assert!((x - a[j] - x.signum()).abs() <= 1e-6);
    }
}

#[test]
fn same_seed_same_trace() {
    let p = build_problem(&ProblemSpec::p2(4, 3, 0.5, 3)).unwrap();
    let x0 = Vector::from_element(4, 2.0);
    let cfg = SolverConfig { seed: 11, ..Default::default() };
    let a = alg2_run(&p, &x0, &cfg).unwrap();
    let b = alg2_run(&p, &x0, &cfg).unwrap();
    assert_eq!(a.records.iter().map(|r| &r.x).collect::<Vec<_>>(), b.records.iter().map(|r| &r.x).collect::<Vec<_>>());
    assert_eq!(a.final_f, b.final_f);
}
