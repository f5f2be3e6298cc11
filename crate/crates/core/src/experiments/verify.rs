use std::f64::consts::FRAC_PI_2;

use crate::error::Result;
use crate::greedy_driver::{
    dg1, dg2, synthetic_saddle, Dg2Config, GreedyConfig, StabMethod, SyntheticParams,
};
use crate::la_core::FactorKind;
use crate::parametric_problem::{
    build_transport_problem, cover_pieces, ParameterDomain, TransportParams,
};
use crate::saddle_solver::{solve_reduced, NormKind, TruthCache};
use crate::stabilization::{sweep_delta, sweep_inf_sup, StabConfig};

use super::ExperimentConfig;

/// Outcome of one self-check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check {
            name,
            passed,
            detail,
        },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Small invariant checks that run in a few seconds.
pub fn self_checks() -> Vec<Check> {
    let mut out = Vec::new();
    out.push(check("config_round_trip", || {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string())?;
        Ok((
            back == cfg,
            "default config survives serialize/parse".into(),
        ))
    }));
    let transport = || -> Result<_> {
        let domain = ParameterDomain::equidistant(0.2, FRAC_PI_2, 12)?;
        let piece = cover_pieces(&domain)?.remove(0);
        let params = TransportParams {
            trial_level: 2,
            test_level: 3,
            ..Default::default()
        };
        build_transport_problem(&params, &piece)
    };
    out.push(check("snapshot_reproduction", || {
        let problem = transport()?;
        let cache = TruthCache::new();
        let cfg = GreedyConfig {
            tol: 0.0,
            n_max: 3,
            method: StabMethod::Delta,
            ..Default::default()
        };
        let run = dg1(&problem, &cfg, &cache)?;
        let mut worst: f64 = 0.0;
        for rec in &run.history.records {
            let mu = rec.snapshot_mu;
            let red = solve_reduced(&problem, mu, &run.pair)?;
            let e = &cache.get(&problem, mu)?.p - run.pair.lift_trial(&red.p);
            worst = worst.max(e.norm() / cache.get(&problem, mu)?.p.norm());
        }
        Ok((
            worst < 1e-8,
            format!("max relative error at snapshots {worst:.2e}"),
        ))
    }));
    out.push(check("sigma_delta_identity", || {
        let problem = transport()?;
        let cache = TruthCache::new();
        let cfg = GreedyConfig {
            tol: 0.0,
            n_max: 2,
            method: StabMethod::Delta,
            ..Default::default()
        };
        let run = dg1(&problem, &cfg, &cache)?;
        let sig = sweep_inf_sup(&problem, &run.pair, NormKind::Graph, FactorKind::Cholesky)?;
        let del = sweep_delta(&problem, &run.pair)?;
        let worst = sig
            .iter()
            .zip(&del)
            .map(|(s, d)| (s.value * s.value + d.value - 1.0).abs())
            .fold(0.0, f64::max);
        Ok((
            worst < 1e-8,
            format!("max |sigma^2 + delta^2 - 1| = {worst:.2e}"),
        ))
    }));
    out.push(check("synthetic_two_space_greedy", || {
        let problem = synthetic_saddle(&SyntheticParams::default())?;
        let cfg = Dg2Config {
            stab: StabConfig {
                beta_truth: problem.base.beta_truth,
                ..Default::default()
            },
            ..Default::default()
        };
        let run = dg2(&problem, &cfg)?;
        let last = run
            .records
            .last()
            .map_or(f64::INFINITY, |r| r.max_surrogate);
        let stable = run
            .records
            .iter()
            .all(|r| r.sigma_min >= cfg.stab.inf_sup_target() - 1e-12);
        Ok((
            last <= cfg.tol && stable,
            format!(
                "final residual {last:.2e} after {} steps",
                run.records.len()
            ),
        ))
    }));
    out
}
