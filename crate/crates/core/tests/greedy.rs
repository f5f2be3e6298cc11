mod common;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dgreedy_core::greedy_driver::{
    dg1, dg2, iterative_tightening, surrogate_truth_dual, surrogate_truth_dual_direct,
    synthetic_saddle, Dg2Config, Dg2Surrogate, GenericSaddle, GreedyConfig, IterationRecord,
    StabMethod, SurrogateKind, SyntheticParams, Termination, TighteningConfig, TighteningMode,
};
use dgreedy_core::saddle_solver::{solve_reduced, TruthCache};
use dgreedy_core::stabilization::StabConfig;
use dgreedy_core::Error;

fn transport_cfg(n_max: usize) -> GreedyConfig {
    GreedyConfig {
        tol: 0.0,
        n_max,
        surrogate: SurrogateKind::ReducedDual,
        method: StabMethod::Delta,
        ..Default::default()
    }
}

/// Records without their wall-clock field.
fn strip(records: &[IterationRecord]) -> Vec<IterationRecord> {
    records
        .iter()
        .map(|r| IterationRecord {
            elapsed_s: 0.0,
            ..r.clone()
        })
        .collect()
}

#[test]
fn huge_tolerance_stops_after_one_snapshot() {
    let problem = common::transport(2, 3, 10);
    let cfg = GreedyConfig {
        tol: 1e6,
        ..transport_cfg(10)
    };
    let run = dg1(&problem, &cfg, &TruthCache::new()).unwrap();
    assert_eq!(run.history.records.len(), 1);
    assert_eq!(run.pair.n(), 1);
    assert_eq!(run.termination, Termination::Tolerance);
}

#[test]
fn dimension_cap_is_respected() {
    let problem = common::transport(2, 3, 10);
    let run = dg1(&problem, &transport_cfg(3), &TruthCache::new()).unwrap();
    assert_eq!(run.pair.n(), 3);
    assert_eq!(run.termination, Termination::MaxDimension);
    let dims: Vec<usize> = run.history.records.iter().map(|r| r.n).collect();
    assert_eq!(dims, vec![1, 2, 3]);
}

#[test]
fn invalid_settings_are_config_errors() {
    let problem = common::transport(2, 3, 10);
    let cfg = GreedyConfig {
        n_max: 0,
        ..Default::default()
    };
    let err = dg1(&problem, &cfg, &TruthCache::new()).unwrap_err();
    assert!(matches!(err, Error::Config { ref field, .. } if field == "n_max"));
}

#[test]
fn snapshots_are_reproduced_on_transport() {
    let problem = common::transport(2, 3, 20);
    let cache = TruthCache::new();
    let run = dg1(&problem, &transport_cfg(5), &cache).unwrap();
    for rec in &run.history.records {
        let pair = run.pair_at(&problem, rec.n).unwrap();
        for earlier in &run.history.records[..rec.n] {
            let mu = earlier.snapshot_mu;
            let truth = cache.get(&problem, mu).unwrap();
            let red = solve_reduced(&problem, mu, &pair).unwrap();
            let e = &truth.p - pair.lift_trial(&red.p);
            let l2 = problem.trial_mass.bilinear(&e, &e).max(0.0).sqrt();
            assert!(l2 < 1e-9, "n = {}, mu = {mu}: {l2:e}", rec.n);
            assert!(red.residual_norm < 1e-9);
        }
    }
}

#[test]
fn best_approximation_error_never_grows() {
    for (problem, cfg) in [
        (common::transport(2, 3, 20), transport_cfg(6)),
        (
            common::cd(2, 3, 20),
            GreedyConfig {
                tol: 0.0,
                n_max: 6,
                ..Default::default()
            },
        ),
    ] {
        let cfg = GreedyConfig {
            diagnostics: true,
            ..cfg
        };
        let run = dg1(&problem, &cfg, &TruthCache::new()).unwrap();
        let errors: Vec<f64> = run
            .history
            .records
            .iter()
            .map(|r| r.best_error.unwrap())
            .collect();
        for w in errors.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10) + 1e-14, "{errors:?}");
        }
    }
}

#[test]
fn test_dimension_stays_within_three_per_snapshot_on_cd() {
    let problem = common::cd(3, 4, 30);
    let cfg = GreedyConfig {
        tol: 0.0,
        n_max: 6,
        stab: StabConfig {
            beta_truth: problem.beta_truth,
            ..Default::default()
        },
        ..Default::default()
    };
    let run = dg1(&problem, &cfg, &TruthCache::new()).unwrap();
    for (n, m) in run.history.dims() {
        assert!(m <= 3 * n, "m = {m} at n = {n}");
    }
}

#[test]
fn offline_truth_dual_matches_direct_evaluation() {
    let problem = common::cd(2, 3, 20);
    let cache = TruthCache::new();
    let cfg = GreedyConfig {
        tol: 0.0,
        n_max: 3,
        ..Default::default()
    };
    let run = dg1(&problem, &cfg, &cache).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let mu = rng.random_range(problem.piece.lo..problem.piece.hi);
        let red = solve_reduced(&problem, mu, &run.pair).unwrap();
        let fast = surrogate_truth_dual(&problem, mu, &run.pair, &red.p).unwrap();
        let slow = surrogate_truth_dual_direct(&problem, mu, &run.pair.lift_trial(&red.p)).unwrap();
        assert!(
            (fast - slow).abs() <= 1e-8 * slow.max(1.0),
            "{fast} vs {slow}"
        );
    }
}

#[test]
fn tightening_without_cycles_is_a_plain_run() {
    let problem = Arc::new(common::transport(2, 3, 20));
    let cfg = GreedyConfig {
        tol: 1e-3,
        ..transport_cfg(6)
    };
    let plain = dg1(&problem, &cfg, &TruthCache::new()).unwrap();
    let tcfg = TighteningConfig {
        cycles: 0,
        ..Default::default()
    };
    let tight =
        iterative_tightening(problem.clone(), &cfg, &tcfg, Arc::new(TruthCache::new())).unwrap();
    assert_eq!(tight.cycles.len(), 1);
    let first = &tight.cycles[0].run;
    assert_eq!(strip(&first.history.records), strip(&plain.history.records));
    assert_eq!(first.termination, plain.termination);
    assert_eq!(first.pair.trial_basis(), plain.pair.trial_basis());
}

#[test]
fn accumulate_cycle_stabilizes_the_joint_space() {
    let problem = Arc::new(common::transport(2, 3, 20));
    let cfg = transport_cfg(4);
    let run = iterative_tightening(
        problem.clone(),
        &cfg,
        &TighteningConfig::default(),
        Arc::new(TruthCache::new()),
    )
    .unwrap();
    assert_eq!(run.cycles.len(), 2);
    let second = &run.cycles[1].run;
    assert!(!second.history.records.is_empty());
    for rec in &second.history.records {
        assert!(rec.delta_max <= cfg.stab.delta + 1e-12);
    }
    // The second cycle keeps test vectors for the first cycle's trial space too.
    let first_m = run.cycles[0].run.pair.m();
    assert!(second.history.records[0].m >= first_m.min(problem.test_dim()) / 2);
}

#[test]
fn defect_cycle_solves_the_residual_equation() {
    let problem = Arc::new(common::transport(2, 3, 20));
    let cfg = transport_cfg(3);
    let tcfg = TighteningConfig {
        cycles: 1,
        mode: TighteningMode::Defect,
        ..Default::default()
    };
    let cache = Arc::new(TruthCache::new());
    let run = iterative_tightening(problem.clone(), &cfg, &tcfg, cache.clone()).unwrap();
    assert_eq!(run.cycles.len(), 2);
    let prev = &run.cycles[0].run.pair;
    let defect = &run.cycles[1];
    for &mu in problem.samples().iter().step_by(4) {
        let truth = cache.get(&problem, mu).unwrap();
        let reduced = prev.lift_trial(&solve_reduced(&problem, mu, prev).unwrap().p);
        let expected = &truth.p - reduced;
        let got = defect.cache.get(&defect.problem, mu).unwrap();
        let rel = (&got.p - &expected).norm() / truth.p.norm();
        assert!(rel < 1e-8, "mu = {mu}: {rel:e}");
    }
    assert!(!defect.run.history.records.is_empty());
}

#[test]
fn two_space_greedy_converges_on_synthetic_problem() {
    let problem = synthetic_saddle(&SyntheticParams::default()).unwrap();
    assert!(problem.base.beta_truth > 0.0 && problem.base.beta_truth <= 1.0);
    let cfg = Dg2Config {
        stab: StabConfig {
            beta_truth: problem.base.beta_truth,
            ..Default::default()
        },
        ..Default::default()
    };
    let run = dg2(&problem, &cfg).unwrap();
    assert_eq!(run.termination, Termination::Tolerance);
    let last = run.records.last().unwrap();
    assert!(last.max_surrogate <= 1e-6);
    for r in &run.records {
        assert!(r.sigma_min >= cfg.stab.inf_sup_target());
        assert!(r.m <= problem.test_dim());
    }
}

#[test]
fn synthetic_problem_is_reproducible() {
    let a = synthetic_saddle(&SyntheticParams::default()).unwrap();
    let b = synthetic_saddle(&SyntheticParams::default()).unwrap();
    let c = synthetic_saddle(&SyntheticParams {
        seed: 8,
        ..Default::default()
    })
    .unwrap();
    let mu = a.base.samples()[3];
    let (sa, sb, sc) = (
        a.solve_truth(mu).unwrap(),
        b.solve_truth(mu).unwrap(),
        c.solve_truth(mu).unwrap(),
    );
    assert_eq!(sa.p, sb.p);
    assert_ne!(sa.p, sc.p);
}

#[test]
fn petrov_galerkin_form_of_two_space_greedy_matches_plain_greedy() {
    let base = Arc::new(common::transport(2, 3, 20));
    let one = dg1(&base, &transport_cfg(5), &TruthCache::new()).unwrap();
    let pg = GenericSaddle::from_petrov_galerkin(base.clone()).unwrap();
    let cfg = Dg2Config {
        tol: 0.0,
        n_max: 5,
        surrogate: Dg2Surrogate::Primal(SurrogateKind::ReducedDual),
        method: StabMethod::Delta,
        ..Default::default()
    };
    let two = dg2(&pg, &cfg).unwrap();
    assert_eq!(one.history.records.len(), two.records.len());
    for (a, b) in one.history.records.iter().zip(&two.records) {
        assert_eq!(a.snapshot_mu, b.snapshot_mu);
        assert_eq!(a.m, b.m);
        assert!(!b.test_snapshot);
        let pa = one.pair_at(&base, a.n).unwrap();
        let pb = two.pair_at(&pg, b.n).unwrap();
        for &mu in base.samples() {
            let x = pa.lift_trial(&solve_reduced(&base, mu, &pa).unwrap().p);
            let y = pb.pair.lift_trial(&pb.solve(&pg, mu).unwrap().p);
            assert!((&x - &y).norm() <= 1e-8 * x.norm());
        }
    }
}
