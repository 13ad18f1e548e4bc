//! Runs one bounding algorithm on an instance and reports the bounds in a
//! flat record.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::conic::{lower_bound_certificate, solve_sdp, AdmmSettings, SolveStatus};
use crate::cutting_plane::{cp_run, CpConfig};
use crate::error::{Error, Result};
use crate::lift::{default_rank, ladmm_run, FactorPoint, LadmmConfig, LadmmState};
use crate::refine::{alt_sdp, ir_run, AltSdpConfig, IrConfig};
use crate::relax::{build_bipartite_dps, build_ddps_plus, RelaxOptions, TreeShape};
use crate::tensor::DEFAULT_SIZE_CAP;
use crate::states::ThresholdInstance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    AltSdp,
    Ladmm,
    Cp,
    Ir,
    DdpsPlus,
    DpsBipartite,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::AltSdp,
        Algorithm::Ladmm,
        Algorithm::Cp,
        Algorithm::Ir,
        Algorithm::DdpsPlus,
        Algorithm::DpsBipartite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::AltSdp => "alt_sdp",
            Algorithm::Ladmm => "ladmm",
            Algorithm::Cp => "cp",
            Algorithm::Ir => "ir",
            Algorithm::DdpsPlus => "ddps_plus",
            Algorithm::DpsBipartite => "dps_bipartite",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm '{s}'")))
    }
}

/// Settings shared by all algorithms. Unset limits fall back to defaults
/// that depend on the number of subsystems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub rank: Option<usize>,
    pub time_limit_s: Option<f64>,
    pub node_limit: Option<usize>,
    pub dps_level: usize,
    pub tree: TreeShape,
    pub seed: u64,
    pub threads: usize,
    /// Drops wall-clock limits so that repeated runs are identical.
    pub deterministic: bool,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        RunConfig {
            algorithm,
            rank: None,
            time_limit_s: None,
            node_limit: None,
            dps_level: 1,
            tree: TreeShape::Balanced,
            seed: 0,
            threads: 1,
            deterministic: false,
        }
    }

    /// 60 s for two subsystems, 600 s otherwise.
    pub fn effective_time_limit(&self, m: usize) -> Option<Duration> {
        if self.deterministic {
            return None;
        }
        let secs = self.time_limit_s.unwrap_or(if m <= 2 { 60.0 } else { 600.0 });
        Some(Duration::from_secs_f64(secs.max(0.0)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Optimal,
    Limit,
    Failed,
}

/// One row of a results table. Metrics an algorithm does not produce are
/// `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub state: String,
    pub m: usize,
    pub algorithm: Algorithm,
    pub ub_relax: Option<f64>,
    pub lb_relax: Option<f64>,
    pub ub_heur: Option<f64>,
    pub feas_heur: Option<f64>,
    pub time_seconds: f64,
    pub seed: u64,
    pub status: RunStatus,
    pub message: Option<String>,
    pub config: RunConfig,
}

impl RunRecord {
    fn empty(inst: &ThresholdInstance, cfg: &RunConfig) -> Self {
        RunRecord {
            state: inst.name.clone(),
            m: inst.m(),
            algorithm: cfg.algorithm,
            ub_relax: None,
            lb_relax: None,
            ub_heur: None,
            feas_heur: None,
            time_seconds: 0.0,
            seed: cfg.seed,
            status: RunStatus::Failed,
            message: None,
            config: cfg.clone(),
        }
    }

    /// Record for a run that could not be carried out.
    pub fn failed(state: &str, m: usize, cfg: &RunConfig, message: impl Into<String>) -> Self {
        RunRecord {
            state: state.to_string(),
            m,
            algorithm: cfg.algorithm,
            ub_relax: None,
            lb_relax: None,
            ub_heur: None,
            feas_heur: None,
            time_seconds: 0.0,
            seed: cfg.seed,
            status: RunStatus::Failed,
            message: Some(message.into()),
            config: cfg.clone(),
        }
    }

    /// `lb_relax ≤ ub_relax` when both are present.
    pub fn sandwich_holds(&self, tol: f64) -> bool {
        match (self.lb_relax, self.ub_relax) {
            (Some(lb), Some(ub)) => lb <= ub + tol,
            _ => true,
        }
    }
}

fn relax_status(s: SolveStatus) -> RunStatus {
    match s {
        SolveStatus::Optimal => RunStatus::Optimal,
        SolveStatus::Limit => RunStatus::Limit,
        _ => RunStatus::Failed,
    }
}

/// Runs `cfg.algorithm` on `inst`. Solver errors become an `Err`; budget
/// exhaustion is reported through `status`.
pub fn run(inst: &ThresholdInstance, cfg: &RunConfig) -> Result<RunRecord> {
    if cfg.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        pool.install(|| run_inner(inst, cfg))
    } else {
        run_inner(inst, cfg)
    }
}

fn run_inner(inst: &ThresholdInstance, cfg: &RunConfig) -> Result<RunRecord> {
    let start = Instant::now();
    let m = inst.m();
    let time_limit = cfg.effective_time_limit(m);
    let rank = cfg.rank.unwrap_or_else(|| default_rank(m));
    let mut rec = RunRecord::empty(inst, cfg);
    let batch = if cfg.deterministic { 1 } else { cfg.threads.max(1) };

    match cfg.algorithm {
        Algorithm::AltSdp => {
            let acfg = AltSdpConfig {
                time_limit,
                ..AltSdpConfig::default()
            };
            let res = alt_sdp(inst, FactorPoint::random(&inst.dims, rank, cfg.seed), &acfg)?;
            rec.ub_heur = Some(res.z);
            rec.feas_heur = Some(res.residual);
            rec.status = RunStatus::Limit;
        }
        Algorithm::Ladmm => {
            let lcfg = LadmmConfig {
                time_limit,
                ..LadmmConfig::default()
            };
            let st = ladmm_run(inst, LadmmState::random(inst, rank, cfg.seed, 1.0), &lcfg);
            rec.ub_heur = Some(st.z);
            rec.feas_heur = Some(st.residual);
            rec.status = if st.residual <= lcfg.residual_tol {
                RunStatus::Optimal
            } else {
                RunStatus::Limit
            };
        }
        Algorithm::Cp => {
            let mut ccfg = CpConfig {
                time_limit,
                ..CpConfig::default()
            };
            ccfg.lmo.seed = cfg.seed;
            ccfg.lmo.batch = batch;
            if let Some(n) = cfg.node_limit {
                ccfg.lmo.node_limit = n;
            }
            let st = cp_run(inst, &[], &ccfg)?;
            rec.ub_relax = Some(st.ub_relax);
            rec.lb_relax = Some(st.lb_relax);
            rec.status = cp_status(st.status);
        }
        Algorithm::Ir => {
            let mut icfg = IrConfig::for_instance(inst);
            icfg.time_limit = time_limit;
            icfg.rank = cfg.rank;
            icfg.seed = cfg.seed;
            icfg.cp.lmo.seed = cfg.seed;
            icfg.cp.lmo.batch = batch;
            if cfg.deterministic {
                icfg.cp.lmo.time_limit = None;
            }
            if let Some(n) = cfg.node_limit {
                icfg.cp.lmo.node_limit = n;
            }
            let st = ir_run(inst, &icfg)?;
            rec.ub_relax = Some(st.cp.ub_relax);
            rec.lb_relax = Some(st.cp.lb_relax);
            if st.best_ub_heur.is_finite() {
                rec.ub_heur = Some(st.best_ub_heur);
                rec.feas_heur = Some(st.best_feas);
            } else if let Some(last) = st.history.last() {
                rec.ub_heur = Some(last.ub_heur);
                rec.feas_heur = Some(last.feas_heur);
            }
            rec.status = cp_status(st.cp.status);
        }
        Algorithm::DdpsPlus | Algorithm::DpsBipartite => {
            let rel = if cfg.algorithm == Algorithm::DdpsPlus {
                let opts = RelaxOptions {
                    level: cfg.dps_level,
                    tree: cfg.tree,
                    ..RelaxOptions::default()
                };
                build_ddps_plus(inst, &opts)?
            } else {
                build_bipartite_dps(inst, (m / 2).max(1), cfg.dps_level, DEFAULT_SIZE_CAP)?
            };
            let settings = AdmmSettings {
                time_limit,
                ..AdmmSettings::default()
            };
            let sol = solve_sdp(&rel.program, &settings, None);
            rec.lb_relax = Some(lower_bound_certificate(&rel.program, &sol.dual).max(0.0));
            rec.status = relax_status(sol.status);
        }
    }
    rec.time_seconds = start.elapsed().as_secs_f64();
    Ok(rec)
}

fn cp_status(s: crate::cutting_plane::CpStatus) -> RunStatus {
    match s {
        crate::cutting_plane::CpStatus::Optimal => RunStatus::Optimal,
        crate::cutting_plane::CpStatus::Limit => RunStatus::Limit,
        crate::cutting_plane::CpStatus::GenerationFailed => RunStatus::Failed,
    }
}
