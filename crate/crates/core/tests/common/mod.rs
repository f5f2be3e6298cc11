#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use dgreedy_core::parametric_problem::{
    build_cd_problem, build_transport_problem, cover_pieces, CdParams, ParameterDomain,
    TransportParams, TruthDiscretization,
};

/// Transport problem on the first cover piece `[0.2, π/2]`.
pub fn transport(trial_level: u32, test_level: u32, samples: usize) -> TruthDiscretization {
    let domain = ParameterDomain::equidistant(0.2, FRAC_PI_2, samples).unwrap();
    let piece = cover_pieces(&domain).unwrap().remove(0);
    let params = TransportParams {
        trial_level,
        test_level,
        ..Default::default()
    };
    build_transport_problem(&params, &piece).unwrap()
}

/// Convection-diffusion problem with `ε = 2⁻⁵` on `[0.2, π/2]`.
pub fn cd(trial_level: u32, test_level: u32, samples: usize) -> TruthDiscretization {
    let domain = ParameterDomain::equidistant(0.2, FRAC_PI_2, samples).unwrap();
    let piece = cover_pieces(&domain).unwrap().remove(0);
    let params = CdParams {
        trial_level,
        test_level,
        ..Default::default()
    };
    build_cd_problem(&params, &piece).unwrap()
}
