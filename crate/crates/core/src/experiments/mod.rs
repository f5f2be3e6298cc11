//! Experiment orchestration behind the `dgreedy` binary.
//!
//! - [`ExperimentConfig`]: TOML settings with field-named validation errors,
//! - [`run_experiment`]: build the truth problem on every cover piece, run the
//!   double greedy (with tightening cycles for transport) and tabulate errors,
//! - [`emit_outputs`]: write `table.csv`, `history.json`, `decay.csv` and the
//!   effective `config.toml`,
//! - [`self_checks`]: quick invariant checks on tiny problems.
//!
//! Outputs contain no timings, so repeated runs produce identical bytes.

mod config;
mod output;
mod verify;

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, ProblemChoice};
pub use output::{emit_outputs, read_table_csv, DECAY_HEADER, TABLE_HEADER};
pub use verify::{self_checks, Check};

use crate::error::{Error, Result};
use crate::fem_grid::{BoundaryData, Source};
use crate::greedy_driver::{
    dg1, dg2, dg2_report, iterative_tightening, surrogate_report, synthetic_saddle, Dg2Config,
    Dg2Diagnostics, Dg2Record, GreedyConfig, IterationRecord, StabMethod, SurrogateKind,
    SyntheticParams, Termination, TighteningConfig,
};
use crate::parametric_problem::{
    build_cd_problem, build_transport_problem, cover_pieces, CdParams, CoverPiece, ParameterDomain,
    TransportParams,
};
use crate::saddle_solver::TruthCache;
use crate::stabilization::StabConfig;

/// What the ratio column divides the surrogate by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioKind {
    /// Largest surrogate over largest reduced-to-truth `L2` error.
    SurrErr,
    /// Largest surrogate over largest a posteriori bound of the truth error.
    SurrApost,
}

/// One line of the error table: a reduced pair after one outer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub piece: usize,
    pub cycle: usize,
    pub n: usize,
    pub m: usize,
    pub delta: f64,
    pub max_surrogate: f64,
    pub rb_truth: f64,
    pub rb_l2: f64,
    pub ratio: f64,
    pub ratio_kind: RatioKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

/// One outer step without wall-clock data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEntry {
    pub n: usize,
    pub m: usize,
    pub snapshot_mu: f64,
    pub enrichments: usize,
    pub sigma_min: f64,
    pub delta_max: f64,
    pub max_surrogate: f64,
    pub argmax_mu: f64,
}

impl From<&IterationRecord> for StepEntry {
    fn from(r: &IterationRecord) -> Self {
        StepEntry {
            n: r.n,
            m: r.m,
            snapshot_mu: r.snapshot_mu,
            enrichments: r.enrichments,
            sigma_min: r.sigma_min,
            delta_max: r.delta_max,
            max_surrogate: r.max_surrogate,
            argmax_mu: r.argmax_mu,
        }
    }
}

impl From<&Dg2Record> for StepEntry {
    fn from(r: &Dg2Record) -> Self {
        StepEntry {
            n: r.n,
            m: r.m,
            snapshot_mu: r.snapshot_mu,
            enrichments: r.enrichments,
            sigma_min: r.sigma_min,
            delta_max: r.delta_max,
            max_surrogate: r.max_surrogate,
            argmax_mu: r.argmax_mu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleHistory {
    pub cycle: usize,
    pub termination: Termination,
    pub steps: Vec<StepEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceHistory {
    pub piece: usize,
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
    /// Largest truth error bound over the piece's sample (transport only).
    pub tau_truth: Option<f64>,
    pub cycles: Vec<CycleHistory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentHistory {
    pub problem: ProblemChoice,
    pub pieces: Vec<PieceHistory>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub table: ReportTable,
    pub history: ExperimentHistory,
    /// Wall-clock seconds of the whole run.
    pub elapsed_s: f64,
}

fn nonempty(piece: &CoverPiece) -> Result<()> {
    if piece.samples.is_empty() {
        return Err(Error::config(
            "sample_count",
            format!(
                "no training parameter falls into [{}, {}]",
                piece.lo, piece.hi
            ),
        ));
    }
    Ok(())
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

fn greedy_config(
    cfg: &ExperimentConfig,
    beta_truth: f64,
    method: StabMethod,
    surrogate: SurrogateKind,
) -> GreedyConfig {
    GreedyConfig {
        tol: cfg.tol,
        n_max: cfg.n_max,
        surrogate,
        method,
        stab: StabConfig {
            zeta: cfg.zeta,
            delta: cfg.delta,
            beta_truth,
            ..Default::default()
        },
        mu_start: None,
        diagnostics: false,
    }
}

fn run_cd(
    cfg: &ExperimentConfig,
    index: usize,
    piece: &CoverPiece,
    table: &mut ReportTable,
) -> Result<PieceHistory> {
    let params = CdParams {
        epsilon: cfg.epsilon,
        omega: cfg.omega,
        trial_level: cfg.trial_level,
        test_level: cfg.test_level,
        ..Default::default()
    };
    let problem = build_cd_problem(&params, piece)?;
    let gcfg = greedy_config(
        cfg,
        problem.beta_truth,
        StabMethod::InfSup,
        SurrogateKind::TruthDual,
    );
    let cache = TruthCache::new();
    let run = dg1(&problem, &gcfg, &cache)?;
    for rec in &run.history.records {
        let rep = surrogate_report(&problem, &run.pair_at(&problem, rec.n)?, &cache)?;
        table.rows.push(ReportRow {
            piece: index,
            cycle: 0,
            n: rec.n,
            m: rec.m,
            delta: rec.delta_max,
            max_surrogate: rep.max_truth_dual(),
            rb_truth: rep.max_rb_truth(),
            rb_l2: rep.max_rb_l2(),
            ratio: ratio(rep.max_truth_dual(), rep.max_truth_bound()),
            ratio_kind: RatioKind::SurrApost,
        });
    }
    Ok(PieceHistory {
        piece: index,
        lo: piece.lo,
        hi: piece.hi,
        samples: piece.samples.len(),
        tau_truth: None,
        cycles: vec![CycleHistory {
            cycle: 0,
            termination: run.termination.clone(),
            steps: run.history.records.iter().map(StepEntry::from).collect(),
        }],
    })
}

fn run_transport(
    cfg: &ExperimentConfig,
    boundary: BoundaryData,
    source: Source,
    index: usize,
    piece: &CoverPiece,
    table: &mut ReportTable,
) -> Result<PieceHistory> {
    let params = TransportParams {
        trial_level: cfg.trial_level,
        test_level: cfg.test_level,
        source,
        boundary,
        ..Default::default()
    };
    let problem = Arc::new(build_transport_problem(&params, piece)?);
    let gcfg = greedy_config(
        cfg,
        problem.beta_truth,
        StabMethod::Delta,
        SurrogateKind::ReducedDual,
    );
    let tcfg = TighteningConfig {
        cycles: cfg.cycles,
        ..Default::default()
    };
    let run = iterative_tightening(problem, &gcfg, &tcfg, Arc::new(TruthCache::new()))?;
    let mut cycles = Vec::with_capacity(run.cycles.len());
    for (c, res) in run.cycles.iter().enumerate() {
        for rec in &res.run.history.records {
            let pair = res.run.pair_at(&res.problem, rec.n)?;
            let rep = surrogate_report(&res.problem, &pair, &res.cache)?;
            table.rows.push(ReportRow {
                piece: index,
                cycle: c,
                n: rec.n,
                m: rec.m,
                delta: rec.delta_max,
                max_surrogate: rep.max_reduced_dual(),
                rb_truth: rep.max_rb_truth(),
                rb_l2: rep.max_rb_l2(),
                ratio: ratio(rep.max_reduced_dual(), rep.max_rb_truth()),
                ratio_kind: RatioKind::SurrErr,
            });
        }
        cycles.push(CycleHistory {
            cycle: c,
            termination: res.run.termination.clone(),
            steps: res
                .run
                .history
                .records
                .iter()
                .map(StepEntry::from)
                .collect(),
        });
    }
    Ok(PieceHistory {
        piece: index,
        lo: piece.lo,
        hi: piece.hi,
        samples: piece.samples.len(),
        tau_truth: Some(run.tau_truth),
        cycles,
    })
}

fn run_synthetic(cfg: &ExperimentConfig, table: &mut ReportTable) -> Result<PieceHistory> {
    let [lo, hi] = cfg.parameter_interval;
    let problem = synthetic_saddle(&SyntheticParams {
        seed: cfg.seed,
        lo,
        hi,
        samples: cfg.sample_count,
        ..Default::default()
    })?;
    let dcfg = Dg2Config {
        tol: cfg.tol,
        n_max: cfg.n_max,
        stab: StabConfig {
            zeta: cfg.zeta,
            delta: cfg.delta,
            beta_truth: problem.base.beta_truth,
            ..Default::default()
        },
        ..Default::default()
    };
    let run = dg2(&problem, &dcfg)?;
    for rec in &run.records {
        let rep = dg2_report(&problem, &run.pair_at(&problem, rec.n)?)?;
        let max = |f: fn(&Dg2Diagnostics) -> f64| rep.iter().map(f).fold(0.0, f64::max);
        let (surr, err) = (max(|d| d.rstar), max(|d| d.rb_truth));
        table.rows.push(ReportRow {
            piece: 0,
            cycle: 0,
            n: rec.n,
            m: rec.m,
            delta: rec.delta_max,
            max_surrogate: surr,
            rb_truth: err,
            rb_l2: max(|d| d.rb_l2),
            ratio: ratio(surr, err),
            ratio_kind: RatioKind::SurrErr,
        });
    }
    let piece = &problem.base.piece;
    Ok(PieceHistory {
        piece: 0,
        lo: piece.lo,
        hi: piece.hi,
        samples: piece.samples.len(),
        tau_truth: None,
        cycles: vec![CycleHistory {
            cycle: 0,
            termination: run.termination.clone(),
            steps: run.records.iter().map(StepEntry::from).collect(),
        }],
    })
}

/// Runs the configured experiment on every cover piece, in piece order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let clock = Instant::now();
    let mut table = ReportTable::default();
    let mut pieces = Vec::new();
    if cfg.problem == ProblemChoice::SyntheticSaddle {
        pieces.push(run_synthetic(cfg, &mut table)?);
    } else {
        let [lo, hi] = cfg.parameter_interval;
        let domain = ParameterDomain::equidistant(lo, hi, cfg.sample_count)?;
        let cover = cover_pieces(&domain)?;
        for piece in &cover {
            nonempty(piece)?;
        }
        for (index, piece) in cover.iter().enumerate() {
            let hist = match cfg.problem {
                ProblemChoice::Cd => run_cd(cfg, index, piece, &mut table)?,
                ProblemChoice::Transport => run_transport(
                    cfg,
                    BoundaryData::Zero,
                    Source::Constant(1.0),
                    index,
                    piece,
                    &mut table,
                )?,
                ProblemChoice::TransportJump => run_transport(
                    cfg,
                    BoundaryData::JumpAtHalf,
                    Source::Constant(0.0),
                    index,
                    piece,
                    &mut table,
                )?,
                ProblemChoice::SyntheticSaddle => unreachable!("handled above"),
            };
            pieces.push(hist);
        }
    }
    Ok(ExperimentResult {
        table,
        history: ExperimentHistory {
            problem: cfg.problem,
            pieces,
        },
        elapsed_s: clock.elapsed().as_secs_f64(),
    })
}
