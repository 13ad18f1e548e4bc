//! Cutting-plane method for the mixing threshold: an LP master problem over
//! an active set of product rays, cut generation by the branch-and-bound
//! oracle, and Lagrangian lower bounds.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::conic::{solve_lp, LinExpr, LpSettings, ProgramBuilder, SolveStatus};
use crate::error::{Error, Result};
use crate::ray::ExtremeRay;
use crate::sbb::{sbb_solve, BssProblem, LmoResult, SbbConfig};
use crate::states::ThresholdInstance;
use crate::tensor::{HermitianMatrix, SubsystemIndexMap};

/// Computational-basis product rays `|i_1 .. i_m⟩`.
pub fn basis_rays(inst: &ThresholdInstance) -> Vec<ExtremeRay> {
    let map = SubsystemIndexMap::from_dims(&inst.dims);
    (0..inst.total_dim())
        .map(|f| ExtremeRay::basis(&inst.dims, &map.multi(f)))
        .collect()
}

/// Solution of the master LP
/// `min z  s.t.  φ + z (Id/d̄ − φ) = Σ_p λ_p p,  λ ≥ 0,  z ≥ 0`.
#[derive(Clone, Debug)]
pub struct MasterSolution {
    pub z: f64,
    pub weights: Vec<f64>,
    /// Dual of the equality rows: `<y*, p> ≥ 0` on the active set and
    /// `<y*, Id/d̄ − φ> ≤ 1`; its value `<y*, −φ>` equals `z`.
    pub witness: HermitianMatrix,
    pub dual_value: f64,
}

pub fn master_solve(inst: &ThresholdInstance, active: &[ExtremeRay]) -> Result<MasterSolution> {
    if active.is_empty() {
        return Err(Error::InvalidArgument("empty active set".into()));
    }
    let n = inst.total_dim();
    let phi = inst.phi.to_hvec();
    let noise = inst.noise_direction().to_hvec();
    let rays: Vec<Vec<f64>> = active.iter().map(|r| r.matrix().to_hvec()).collect();

    let mut b = ProgramBuilder::new();
    let z = b.add_var(0.0, f64::INFINITY);
    let lam: Vec<usize> = rays.iter().map(|_| b.add_var(0.0, f64::INFINITY)).collect();
    b.minimize(LinExpr::var(z));
    let mut coords = Vec::new();
    for c in 0..phi.len() {
        let mut e = LinExpr::term(z, noise[c]).plus_constant(phi[c]);
        for (p, &l) in rays.iter().zip(&lam) {
            if p[c] != 0.0 {
                e.add_scaled(&LinExpr::term(l, -p[c]), 1.0);
            }
        }
        e.compact();
        if !e.terms.is_empty() {
            coords.push(c);
            b.zero(e);
        } else if e.constant.abs() > 1e-12 {
            return Err(Error::Numerical("master equality row is inconsistent".into()));
        }
    }
    b.nonneg(LinExpr::var(z));
    for &l in &lam {
        b.nonneg(LinExpr::var(l));
    }
    let sol = solve_lp(&b.build(), &LpSettings::default());
    if sol.status != SolveStatus::Optimal {
        return Err(Error::Numerical(format!("master LP ended with status {:?}", sol.status)));
    }
    let mut y = vec![0.0; phi.len()];
    for (r, &c) in coords.iter().enumerate() {
        y[c] = sol.dual[r];
    }
    let witness = HermitianMatrix::from_hvec(n, &y)?;
    Ok(MasterSolution {
        z: sol.x[z],
        weights: lam.iter().map(|&l| sol.x[l].max(0.0)).collect(),
        dual_value: -witness.inner(&inst.phi),
        witness,
    })
}

/// `ub + b̲`: valid lower bound on the threshold when `b̲` bounds
/// `<y*, ρ>` from below over normalized separable `ρ`.
pub fn lagrangian_lb(ub_relax: f64, b_lower: f64) -> f64 {
    ub_relax + b_lower
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpStatus {
    Optimal,
    Limit,
    /// The oracle could neither certify optimality nor find a violated ray.
    GenerationFailed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CpIteration {
    pub iter: usize,
    pub ub_relax: f64,
    pub lb_relax: f64,
    pub active: usize,
    pub b_lower: f64,
    pub b_upper: f64,
}

#[derive(Clone, Debug)]
pub struct CpState {
    pub active: Vec<ExtremeRay>,
    pub ub_relax: f64,
    pub lb_relax: f64,
    pub witness: HermitianMatrix,
    pub dual_weights: Vec<f64>,
    pub z: f64,
    pub iterations: usize,
    pub status: CpStatus,
    pub history: Vec<CpIteration>,
}

#[derive(Clone, Debug)]
pub struct CpConfig {
    pub max_iter: usize,
    pub time_limit: Option<Duration>,
    /// A ray is added only if `<y*, p> < -cut_tol`.
    pub cut_tol: f64,
    /// `b̲ ≥ -opt_tol` certifies optimality.
    pub opt_tol: f64,
    /// Stop once `ub_relax - lb_relax` falls below this.
    pub gap_tol: f64,
    /// Active-set size that triggers dropping zero-weight rays; `None`
    /// uses `4 d̄² + 2`.
    pub max_active: Option<usize>,
    pub lmo: SbbConfig,
}

impl Default for CpConfig {
    fn default() -> Self {
        CpConfig {
            max_iter: 100,
            time_limit: None,
            cut_tol: 1e-9,
            opt_tol: 1e-7,
            gap_tol: 1e-6,
            max_active: None,
            lmo: SbbConfig {
                target: Some(0.0),
                ..SbbConfig::default()
            },
        }
    }
}

impl CpConfig {
    /// Oracle without early stopping and with a larger node budget.
    pub fn gap_closing(&self) -> Self {
        CpConfig {
            lmo: SbbConfig {
                target: None,
                node_limit: self.lmo.node_limit * 4,
                ..self.lmo.clone()
            },
            ..self.clone()
        }
    }
}

fn prune(active: &mut Vec<ExtremeRay>, weights: &[f64], keep_first: usize) {
    let mut i = 0;
    active.retain(|_| {
        let keep = i < keep_first || weights[i] > 0.0;
        i += 1;
        keep
    });
}

impl CpState {
    /// Unsolved state over the computational-basis rays followed by `init`.
    pub fn initial(inst: &ThresholdInstance, init: &[ExtremeRay]) -> Self {
        let mut st = CpState {
            active: basis_rays(inst),
            ub_relax: f64::INFINITY,
            lb_relax: 0.0,
            witness: HermitianMatrix::zeros(inst.total_dim()),
            dual_weights: Vec::new(),
            z: f64::INFINITY,
            iterations: 0,
            status: CpStatus::Limit,
            history: Vec::new(),
        };
        st.add_rays(init);
        st
    }

    /// Appends unit-weight copies of `rays`.
    pub fn add_rays(&mut self, rays: &[ExtremeRay]) {
        self.active.extend(rays.iter().cloned().map(|mut r| {
            r.weight = 1.0;
            r
        }));
    }

    /// Keeps the first `keep_first` rays and those with positive weight in
    /// the last master solution.
    pub fn prune(&mut self, keep_first: usize) {
        if self.dual_weights.len() == self.active.len() {
            prune(&mut self.active, &self.dual_weights, keep_first);
            let w = std::mem::take(&mut self.dual_weights);
            self.dual_weights = w
                .into_iter()
                .enumerate()
                .filter(|&(i, v)| i < keep_first || v > 0.0)
                .map(|(_, v)| v)
                .collect();
        }
    }
}

/// Runs cutting-plane iterations from `init` plus the computational-basis
/// rays.
pub fn cp_run(inst: &ThresholdInstance, init: &[ExtremeRay], cfg: &CpConfig) -> Result<CpState> {
    cp_resume(inst, CpState::initial(inst, init), cfg)
}

/// Continues a previous run with the oracle in full-solve mode; the lower
/// bound only moves up.
pub fn gap_close_run(inst: &ThresholdInstance, state: CpState, cfg: &CpConfig) -> Result<CpState> {
    if state.status == CpStatus::Optimal {
        return Ok(state);
    }
    cp_resume(inst, state, &cfg.gap_closing())
}

/// Continues cutting-plane iterations from `st`.
pub fn cp_resume(inst: &ThresholdInstance, mut st: CpState, cfg: &CpConfig) -> Result<CpState> {
    let start = Instant::now();
    let n_basis = inst.total_dim();
    let cap = cfg.max_active.unwrap_or(4 * n_basis * n_basis + 2);
    st.status = CpStatus::Limit;
    for _ in 0..cfg.max_iter {
        if cfg.time_limit.is_some_and(|t| start.elapsed() >= t) {
            break;
        }
        let master = master_solve(inst, &st.active)?;
        st.iterations += 1;
        st.ub_relax = st.ub_relax.min(master.z);
        st.z = master.z;
        st.witness = master.witness;
        st.dual_weights = master.weights;

        let lmo = lmo_call(inst, &st.witness, &cfg.lmo)?;
        st.lb_relax = st.lb_relax.max(lagrangian_lb(st.ub_relax, lmo.lower).min(st.ub_relax));
        st.history.push(CpIteration {
            iter: st.iterations,
            ub_relax: st.ub_relax,
            lb_relax: st.lb_relax,
            active: st.active.len(),
            b_lower: lmo.lower,
            b_upper: lmo.upper,
        });
        log::info!("{}", serde_json::to_string(st.history.last().expect("just pushed")).expect("serializable"));

        if lmo.lower >= -cfg.opt_tol || st.ub_relax - st.lb_relax <= cfg.gap_tol {
            st.status = CpStatus::Optimal;
            break;
        }
        if lmo.upper < -cfg.cut_tol {
            if st.active.len() >= cap {
                prune(&mut st.active, &st.dual_weights, n_basis);
            }
            let mut ray = lmo.ray;
            ray.weight = 1.0;
            st.active.push(ray);
        } else {
            st.status = CpStatus::GenerationFailed;
            break;
        }
    }
    Ok(st)
}

fn lmo_call(inst: &ThresholdInstance, witness: &HermitianMatrix, cfg: &SbbConfig) -> Result<LmoResult> {
    let prob = BssProblem::new(witness.clone(), inst.dims.clone())?;
    sbb_solve(&prob, cfg)
}
