//! Shared fixtures for the benchmark targets.
//!
//! - [`transport`] and [`cd`]: truth problems on the first cover piece.
//! - [`reduced_transport`]: a stabilized reduced pair from a short greedy run.

use std::f64::consts::FRAC_PI_2;

use dgreedy_core::greedy_driver::{dg1, GreedyConfig, StabMethod, SurrogateKind};
use dgreedy_core::parametric_problem::{
    build_cd_problem, build_transport_problem, cover_pieces, CdParams, ParameterDomain,
    TransportParams, TruthDiscretization,
};
use dgreedy_core::saddle_solver::{ReducedPair, TruthCache};

/// Transport problem on `[0.2, π/2]`.
pub fn transport(trial_level: u32, test_level: u32, samples: usize) -> TruthDiscretization {
    let domain = ParameterDomain::equidistant(0.2, FRAC_PI_2, samples).expect("valid domain");
    let piece = cover_pieces(&domain).expect("cover").remove(0);
    let params = TransportParams {
        trial_level,
        test_level,
        ..Default::default()
    };
    build_transport_problem(&params, &piece).expect("transport problem")
}

/// Convection-diffusion problem on `[0.2, π/2]`.
pub fn cd(trial_level: u32, test_level: u32, samples: usize) -> TruthDiscretization {
    let domain = ParameterDomain::equidistant(0.2, FRAC_PI_2, samples).expect("valid domain");
    let piece = cover_pieces(&domain).expect("cover").remove(0);
    let params = CdParams {
        trial_level,
        test_level,
        ..Default::default()
    };
    build_cd_problem(&params, &piece).expect("cd problem")
}

/// Reduced pair with `n` trial snapshots of the transport problem.
pub fn reduced_transport(problem: &TruthDiscretization, n: usize) -> ReducedPair {
    let cfg = GreedyConfig {
        tol: 0.0,
        n_max: n,
        surrogate: SurrogateKind::ReducedDual,
        method: StabMethod::Delta,
        ..Default::default()
    };
    dg1(problem, &cfg, &TruthCache::new())
        .expect("greedy run")
        .pair
}
