//! Iterative refinement: LADMM and the cutting-plane method warm-start each
//! other through conversions between factor points and weighted ray sets.
//! Also contains the alternating-SDP baseline.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::conic::{solve_sdp, AdmmSettings, HermExpr, LinExpr, ProgramBuilder, SolveStatus};
use crate::cutting_plane::{cp_resume, gap_close_run, master_solve, CpConfig, CpState, CpStatus};
use crate::error::{Error, Result};
use crate::lift::{affine_target, default_rank, ladmm_run, psi, FactorPoint, LadmmConfig, LadmmState};
use crate::ray::ExtremeRay;
use crate::states::ThresholdInstance;
use crate::tensor::{eig_hermitian, kron, Dims, HermitianMatrix, SubsystemIndexMap, C64};

/// Factor point with one component per ray, `x_i = λ_i^{1/2m} v_i`, so that
/// `Ψ(x) = Σ λ_i p_i`.
pub fn active_to_factor(dims: &Dims, active: &[ExtremeRay], weights: &[f64]) -> Result<FactorPoint> {
    if active.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: active.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidArgument("ray weights must be finite and nonnegative".into()));
    }
    let rays: Vec<ExtremeRay> = active
        .iter()
        .zip(weights)
        .map(|(r, &w)| ExtremeRay {
            modes: r.modes.clone(),
            weight: w,
        })
        .collect();
    Ok(FactorPoint::from_rays(dims, &rays))
}

/// Nonzero components of `x` as normalized rays weighted by
/// `Π_k ‖x_ik‖²`.
pub fn factor_to_rays(x: &FactorPoint) -> Vec<ExtremeRay> {
    x.rays()
}

/// Local states `e_a` and `(e_a ± e_b)/√2`, `(e_a ± i e_b)/√2` for `a < b`.
fn local_spanning_states(d: usize) -> Vec<Vec<C64>> {
    let unit = |a: usize| {
        let mut v = vec![C64::new(0.0, 0.0); d];
        v[a] = C64::new(1.0, 0.0);
        v
    };
    let mut out: Vec<Vec<C64>> = (0..d).map(unit).collect();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for a in 0..d {
        for b in (a + 1)..d {
            for phase in [C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0)] {
                let mut v = vec![C64::new(0.0, 0.0); d];
                v[a] = C64::new(s, 0.0);
                v[b] = phase * s;
                out.push(v);
            }
        }
    }
    out
}

/// Products of local spanning states. Their cone is full-dimensional and
/// contains `Id/d̄` in its interior.
pub fn spanning_rays(dims: &Dims) -> Vec<ExtremeRay> {
    let locals: Vec<Vec<Vec<C64>>> = dims.as_slice().iter().map(|&d| local_spanning_states(d)).collect();
    let mut out = vec![Vec::<Vec<C64>>::new()];
    for states in &locals {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                states.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v.clone());
                    p
                })
            })
            .collect();
    }
    out.into_iter()
        .map(|modes| ExtremeRay { modes, weight: 1.0 })
        .collect()
}

#[derive(Clone, Debug)]
pub struct CrossoverResult {
    pub state: CpState,
    pub failed: bool,
}

/// Certifies a factor point: one master solve over the previous active set,
/// the rays of `x`, and the spanning rays. Returns the previous state
/// flagged as failed unless the certified bound improves.
pub fn crossover(x: &FactorPoint, prev: &CpState, inst: &ThresholdInstance) -> Result<CrossoverResult> {
    let mut st = prev.clone();
    st.add_rays(&factor_to_rays(x));
    st.add_rays(&spanning_rays(&inst.dims));
    let m = master_solve(inst, &st.active)?;
    if m.z < prev.ub_relax - 1e-12 {
        st.ub_relax = m.z;
        st.z = m.z;
        st.witness = m.witness;
        st.dual_weights = m.weights;
        st.lb_relax = st.lb_relax.min(st.ub_relax);
        st.status = CpStatus::Limit;
        st.prune(inst.total_dim());
        Ok(CrossoverResult { state: st, failed: false })
    } else {
        Ok(CrossoverResult {
            state: prev.clone(),
            failed: true,
        })
    }
}

#[derive(Clone, Debug)]
pub struct IrConfig {
    pub max_iter: usize,
    pub time_limit: Option<Duration>,
    /// Component count; `None` uses the default for the number of subsystems.
    pub rank: Option<usize>,
    /// LADMM settings for each phase (`max_iter` is the per-phase limit).
    pub ladmm: LadmmConfig,
    /// CP settings for each phase; `None` for `max_iter` uses the rank.
    pub cp: CpConfig,
    pub cp_phase_iters: Option<usize>,
    /// CP iterations with the full-solve oracle after the main loop.
    pub gap_close_iters: usize,
    /// LADMM iterates with residual at most this count as heuristic bounds.
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub zeta0: f64,
    pub seed: u64,
}

impl IrConfig {
    pub fn for_instance(inst: &ThresholdInstance) -> Self {
        let m = inst.m();
        IrConfig {
            max_iter: 20,
            time_limit: None,
            rank: None,
            ladmm: LadmmConfig {
                max_iter: if m >= 3 { 10 } else { 50 },
                ..LadmmConfig::default()
            },
            cp: CpConfig {
                lmo: crate::sbb::SbbConfig {
                    target: Some(0.0),
                    time_limit: Some(Duration::from_secs(20)),
                    ..crate::sbb::SbbConfig::default()
                },
                ..CpConfig::default()
            },
            cp_phase_iters: None,
            gap_close_iters: 3,
            feas_tol: 1e-4,
            gap_tol: 1e-6,
            zeta0: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IrIteration {
    pub iter: usize,
    pub ub_relax: f64,
    pub lb_relax: f64,
    pub ub_heur: f64,
    pub feas_heur: f64,
    pub active: usize,
    pub crossover_failed: bool,
}

#[derive(Clone, Debug)]
pub struct IrState {
    pub cp: CpState,
    pub ladmm: LadmmState,
    pub iteration: usize,
    /// Smallest LADMM threshold among iterates with residual within
    /// tolerance (`+inf` if none).
    pub best_ub_heur: f64,
    /// Residual `‖Ψ(x) − A(z) − φ‖₂` of that iterate.
    pub best_feas: f64,
    pub history: Vec<IrIteration>,
}

/// Keeps the `r` heaviest rays and pads with small random components.
fn factor_of_rank(dims: &Dims, active: &[ExtremeRay], weights: &[f64], r: usize, rng: &mut ChaCha8Rng) -> Result<FactorPoint> {
    let mut order: Vec<usize> = (0..active.len()).filter(|&i| weights.get(i).is_some_and(|w| *w > 0.0)).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    order.truncate(r);
    let rays: Vec<ExtremeRay> = order.iter().map(|&i| active[i].clone()).collect();
    let w: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
    let mut x = active_to_factor(dims, &rays, &w)?;
    let m = dims.len() as f64;
    let scale = 1e-2 * (1.0 / r.max(1) as f64).powf(1.0 / (2.0 * m));
    while x.r() < r {
        let comp = dims
            .as_slice()
            .iter()
            .map(|&d| {
                let v: Vec<C64> = (0..d)
                    .map(|_| C64::new(StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng)))
                    .collect();
                let n = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
                v.into_iter().map(|a| a * (scale / n)).collect()
            })
            .collect();
        x.modes.push(comp);
    }
    Ok(x)
}

fn remaining(deadline: Option<Instant>) -> Option<Duration> {
    deadline.map(|d| d.saturating_duration_since(Instant::now()))
}

/// Alternates LADMM phases and cutting-plane phases. Each LADMM phase
/// starts from the current active set and weights; each CP phase starts
/// from the previous active set joined with the rays of the LADMM point.
pub fn ir_run(inst: &ThresholdInstance, cfg: &IrConfig) -> Result<IrState> {
    let start = Instant::now();
    let main_deadline = cfg.time_limit.map(|t| start + t.mul_f64(0.9));
    let final_deadline = cfg.time_limit.map(|t| start + t);
    let r = cfg.rank.unwrap_or_else(|| default_rank(inst.m()));
    let n_basis = inst.total_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut cp = CpState::initial(inst, &[]);
    let mut lad = LadmmState::random(inst, r, cfg.seed, cfg.zeta0);
    let mut best_ub_heur = f64::INFINITY;
    let mut best_feas = f64::INFINITY;
    let mut history = Vec::new();
    let mut iteration = 0;

    while iteration < cfg.max_iter {
        if main_deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        if iteration > 0 {
            let x = factor_of_rank(&inst.dims, &cp.active, &cp.dual_weights, r, &mut rng)?;
            lad = LadmmState::new(inst, x, cp.z.min(1.0), lad.zeta);
        }
        let lcfg = LadmmConfig {
            time_limit: remaining(main_deadline),
            ..cfg.ladmm.clone()
        };
        lad = ladmm_run(inst, lad, &lcfg);
        if lad.residual <= cfg.feas_tol && lad.z < best_ub_heur {
            best_ub_heur = lad.z;
            best_feas = lad.residual;
        }

        let cross = crossover(&lad.x, &cp, inst)?;
        cp = cross.state;
        if cross.failed {
            cp.add_rays(&factor_to_rays(&lad.x));
        }
        let ccfg = CpConfig {
            max_iter: cfg.cp_phase_iters.unwrap_or(r),
            time_limit: remaining(main_deadline),
            ..cfg.cp.clone()
        };
        cp = cp_resume(inst, cp, &ccfg)?;
        cp.prune(n_basis);
        iteration += 1;
        let rec = IrIteration {
            iter: iteration,
            ub_relax: cp.ub_relax,
            lb_relax: cp.lb_relax,
            ub_heur: lad.z,
            feas_heur: lad.residual,
            active: cp.active.len(),
            crossover_failed: cross.failed,
        };
        log::info!("{}", serde_json::json!({ "event": "ir_iter", "record": rec }));
        history.push(rec);
        if cp.status == CpStatus::Optimal || cp.ub_relax - cp.lb_relax <= cfg.gap_tol {
            break;
        }
    }

    if cfg.gap_close_iters > 0 && cp.status != CpStatus::Optimal {
        let gcfg = CpConfig {
            max_iter: cfg.gap_close_iters,
            time_limit: remaining(final_deadline),
            ..cfg.cp.clone()
        };
        let before = (cp.ub_relax, cp.lb_relax);
        cp = gap_close_run(inst, cp, &gcfg)?;
        cp.ub_relax = cp.ub_relax.min(before.0);
        cp.lb_relax = cp.lb_relax.max(before.1);
    }

    Ok(IrState {
        cp,
        ladmm: lad,
        iteration,
        best_ub_heur,
        best_feas,
        history,
    })
}

/// `‖Ψ(x) − A(z) − φ‖₂`.
pub fn feasibility_residual(inst: &ThresholdInstance, x: &FactorPoint, z: f64) -> f64 {
    psi(x).sub(&affine_target(inst, z)).frobenius_norm()
}

#[derive(Clone, Debug)]
pub struct AltSdpConfig {
    pub sweeps: usize,
    pub admm: AdmmSettings,
    pub time_limit: Option<Duration>,
}

impl Default for AltSdpConfig {
    fn default() -> Self {
        AltSdpConfig {
            sweeps: 10,
            admm: AdmmSettings::relaxed(),
            time_limit: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AltSdpResult {
    pub z: f64,
    pub x: FactorPoint,
    pub residual: f64,
    /// Threshold after every single-mode SDP.
    pub history: Vec<f64>,
}

/// Kronecker product of the fixed rank-one factors of component `i` with
/// the free mode `k` left as the elementary matrix `E_ab`.
fn component_with_free_mode(x: &FactorPoint, i: usize, k: usize, a: usize, b: usize) -> HermitianMatrix {
    let mut out = HermitianMatrix::identity(1);
    for (s, v) in x.modes[i].iter().enumerate() {
        let f = if s == k {
            HermitianMatrix::from_fn(v.len(), |p, q| {
                if (p, q) == (a, b) || (p, q) == (b, a) {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
        } else {
            HermitianMatrix::outer(v)
        };
        out = kron(&out, &f);
    }
    out
}

/// Alternating-SDP baseline: for each mode `k` in turn, every component's
/// `k`-th factor is replaced by a free PSD matrix and one SDP minimizes `z`
/// subject to `Ψ = φ + z (Id/d̄ − φ)`. Each free matrix is then truncated
/// to its top eigenpair.
pub fn alt_sdp(inst: &ThresholdInstance, x0: FactorPoint, cfg: &AltSdpConfig) -> Result<AltSdpResult> {
    let start = Instant::now();
    let n = inst.total_dim();
    let m = inst.m();
    let mut x = x0;
    let mut z = 1.0;
    let mut history = Vec::new();
    'outer: for _ in 0..cfg.sweeps {
        for k in 0..m {
            if cfg.time_limit.is_some_and(|t| start.elapsed() >= t) {
                break 'outer;
            }
            let dk = inst.dims.get(k);
            let map = SubsystemIndexMap::from_dims(&inst.dims);
            let mut b = ProgramBuilder::new();
            let zv = b.add_var(0.0, 1.0);
            b.enforce_bounds(zv, 0.0, 1.0);
            b.minimize(LinExpr::var(zv));
            let mut total = HermExpr::constant(&inst.phi);
            total.add_matrix_times(&inst.noise_direction(), &LinExpr::var(zv));
            let mut frees = Vec::with_capacity(x.r());
            for i in 0..x.r() {
                let w = b.add_herm_var(dk);
                let we = w.expr();
                b.psd(&we);
                for a in 0..dk {
                    for c in a..dk {
                        let basis = component_with_free_mode(&x, i, k, a, c);
                        if a == c {
                            total.add_matrix_times(&basis, &we.re(a, a).scaled(-1.0));
                        } else {
                            let im_basis =
                                HermitianMatrix::from_fn(n, |p, q| basis.get(p, q) * imag_sign(&map, k, a, c, p, q));
                            total.add_matrix_times(&basis, &we.re(a, c).scaled(-1.0));
                            total.add_matrix_times(&im_basis, &we.im(a, c).scaled(-1.0));
                        }
                    }
                }
                frees.push(w);
            }
            total.compact();
            b.zero_herm(&total);
            let sol = solve_sdp(&b.build(), &cfg.admm, None);
            if !matches!(sol.status, SolveStatus::Optimal | SolveStatus::Limit) {
                continue;
            }
            for (i, w) in frees.iter().enumerate() {
                let wm = w.value(&sol.x);
                let e = eig_hermitian(&wm)?;
                let top = e.values[dk - 1].max(0.0);
                x.modes[i][k] = e.vector(dk - 1).into_iter().map(|a| a * top.sqrt()).collect();
            }
            z = sol.x[zv];
            history.push(z);
        }
    }
    let residual = feasibility_residual(inst, &x, z);
    Ok(AltSdpResult { z, x, residual, history })
}

/// Ratio between entries of `.. ⊗ (i E_ac − i E_ca) ⊗ ..` and
/// `.. ⊗ (E_ac + E_ca) ⊗ ..`: `+i` where mode `k` sits at `(a, c)`, `−i`
/// at `(c, a)`.
fn imag_sign(map: &SubsystemIndexMap, k: usize, a: usize, c: usize, p: usize, q: usize) -> C64 {
    let (pk, qk) = (map.component(p, k), map.component(q, k));
    if (pk, qk) == (a, c) {
        C64::new(0.0, 1.0)
    } else if (pk, qk) == (c, a) {
        C64::new(0.0, -1.0)
    } else {
        C64::new(0.0, 0.0)
    }
}
