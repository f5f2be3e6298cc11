use std::path::Path;

use proptest::prelude::*;

use dgreedy_core::experiments::{
    emit_outputs, read_table_csv, run_experiment, ExperimentConfig, ProblemChoice, DECAY_HEADER,
    TABLE_HEADER,
};
use dgreedy_core::Error;

fn small(problem: ProblemChoice) -> ExperimentConfig {
    ExperimentConfig {
        problem,
        trial_level: 2,
        test_level: 3,
        sample_count: 12,
        n_max: 4,
        tol: 1e-8,
        ..Default::default()
    }
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn written_table_parses_back_to_the_same_rows() {
    let cfg = small(ProblemChoice::Transport);
    let result = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_outputs(&cfg, &result, dir.path()).unwrap();
    assert_eq!(files.len(), 4);
    let table = dir.path().join("table.csv");
    assert_eq!(read(&table).lines().next().unwrap(), TABLE_HEADER.join(","));
    assert_eq!(read_table_csv(&table).unwrap(), result.table);

    let decay = read(&dir.path().join("decay.csv"));
    let mut lines = decay.lines();
    assert_eq!(lines.next().unwrap(), DECAY_HEADER.join(","));
    assert_eq!(lines.count(), result.table.rows.len());

    let json: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("history.json"))).unwrap();
    assert_eq!(json["problem"], "transport");
    let cfg_back = ExperimentConfig::from_file(&dir.path().join("config.toml")).unwrap();
    assert_eq!(cfg_back, cfg);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let cfg = small(ProblemChoice::TransportJump);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit_outputs(&cfg, &run_experiment(&cfg).unwrap(), a.path()).unwrap();
    emit_outputs(&cfg, &run_experiment(&cfg).unwrap(), b.path()).unwrap();
    for name in ["table.csv", "history.json", "decay.csv", "config.toml"] {
        assert_eq!(
            read(&a.path().join(name)),
            read(&b.path().join(name)),
            "{name}"
        );
    }
}

#[test]
fn cd_run_keeps_test_dimension_bounded() {
    let cfg = small(ProblemChoice::Cd);
    let result = run_experiment(&cfg).unwrap();
    assert!(!result.table.rows.is_empty());
    for r in &result.table.rows {
        assert!(r.m <= 3 * r.n, "m = {} at n = {}", r.m, r.n);
        assert!(r.ratio.is_finite() && r.ratio > 0.0);
    }
}

#[test]
fn synthetic_run_reaches_tolerance() {
    let cfg = ExperimentConfig {
        problem: ProblemChoice::SyntheticSaddle,
        parameter_interval: [0.2, 1.4],
        tol: 1e-6,
        n_max: 20,
        ..Default::default()
    };
    let result = run_experiment(&cfg).unwrap();
    let last = result.table.rows.last().unwrap();
    assert!(last.max_surrogate <= 1e-6);
}

#[test]
fn tightening_cycles_appear_in_the_table() {
    let cfg = ExperimentConfig {
        cycles: 1,
        ..small(ProblemChoice::Transport)
    };
    let result = run_experiment(&cfg).unwrap();
    assert!(result.table.rows.iter().any(|r| r.cycle == 1));
    for piece in &result.history.pieces {
        assert_eq!(piece.cycles.len(), 2);
        assert!(piece.tau_truth.is_some());
    }
}

#[test]
fn too_few_samples_is_a_config_error() {
    for count in [0, 1] {
        let cfg = ExperimentConfig {
            sample_count: count,
            ..small(ProblemChoice::Transport)
        };
        let err = run_experiment(&cfg).unwrap_err();
        assert!(
            matches!(err, Error::Config { ref field, .. } if field == "sample_count"),
            "{err}"
        );
    }
}

#[test]
fn unknown_problem_is_a_config_error() {
    let err = ExperimentConfig::from_toml_str("problem = \"heat\"").unwrap_err();
    assert!(
        matches!(err, Error::Config { ref field, .. } if field == "problem"),
        "{err}"
    );
    assert!(ProblemChoice::parse("heat").is_err());
}

#[test]
fn unwritable_directory_reports_its_path() {
    let cfg = small(ProblemChoice::Transport);
    let result = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let target = blocker.join("out");
    let err = emit_outputs(&cfg, &result, &target).unwrap_err();
    match err {
        Error::Io { path, .. } => assert!(path.starts_with(&blocker)),
        other => panic!("unexpected error {other}"),
    }
}

fn problem_choice() -> impl Strategy<Value = ProblemChoice> {
    prop_oneof![
        Just(ProblemChoice::Cd),
        Just(ProblemChoice::Transport),
        Just(ProblemChoice::TransportJump),
        Just(ProblemChoice::SyntheticSaddle),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_survives_a_toml_round_trip(
        problem in problem_choice(),
        epsilon in 1e-6f64..1.0,
        omega in 1e-6f64..1.0,
        trial in 1u32..6,
        extra in 1u32..4,
        samples in 2usize..500,
        lo in 0.01f64..1.5,
        width in 0.01f64..1.5,
        zeta in 0.01f64..0.99,
        delta in 0.01f64..0.99,
        tol in 1e-12f64..1.0,
        n_max in 1usize..50,
        cycles in 0usize..4,
        seed in 0u64..=i64::MAX as u64,
    ) {
        let cfg = ExperimentConfig {
            problem,
            epsilon,
            omega,
            trial_level: trial,
            test_level: trial + extra,
            sample_count: samples,
            parameter_interval: [lo, lo + width],
            zeta,
            delta,
            tol,
            n_max,
            cycles,
            output_dir: "results/run".into(),
            seed,
        };
        prop_assert!(cfg.validate().is_ok());
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
