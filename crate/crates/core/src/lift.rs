//! Factorization lift `Ψ(x) = Σ_i ⊗_k x_ik x_ik†` and the lifted ADMM
//! heuristic for the white-noise threshold problem.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lbfgs::{self, LbfgsConfig, LbfgsStop};
use crate::ray::ExtremeRay;
use crate::states::ThresholdInstance;
use crate::tensor::{CMatrix, Dims, HermitianMatrix, SubsystemIndexMap, C64};

/// `r` components of `m` complex mode vectors each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorPoint {
    pub dims: Dims,
    /// `modes[i][k]` is `x_ik`.
    pub modes: Vec<Vec<Vec<C64>>>,
}

impl FactorPoint {
    pub fn zeros(dims: &Dims, r: usize) -> Self {
        let comp: Vec<Vec<C64>> = dims
            .as_slice()
            .iter()
            .map(|&d| vec![C64::new(0.0, 0.0); d])
            .collect();
        FactorPoint {
            dims: dims.clone(),
            modes: vec![comp; r],
        }
    }

    /// Random unit-norm modes, scaled so that `tr Ψ(x) = 1`.
    pub fn random(dims: &Dims, r: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = dims.len();
        let scale = (1.0 / r.max(1) as f64).powf(1.0 / (2.0 * m as f64));
        let modes = (0..r)
            .map(|_| {
                dims.as_slice()
                    .iter()
                    .map(|&d| {
                        let v: Vec<C64> = (0..d)
                            .map(|_| {
                                C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
                            })
                            .collect();
                        let n = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
                        v.into_iter().map(|a| a * (scale / n)).collect()
                    })
                    .collect()
            })
            .collect();
        FactorPoint {
            dims: dims.clone(),
            modes,
        }
    }

    /// Components taken from weighted rays: `x_ik = w^{1/2m} v_k`.
    pub fn from_rays(dims: &Dims, rays: &[ExtremeRay]) -> Self {
        let m = dims.len() as f64;
        let modes = rays
            .iter()
            .map(|ray| {
                let s = ray.weight.max(0.0).powf(1.0 / (2.0 * m));
                ray.modes
                    .iter()
                    .map(|v| v.iter().map(|a| a * s).collect())
                    .collect()
            })
            .collect();
        FactorPoint {
            dims: dims.clone(),
            modes,
        }
    }

    pub fn r(&self) -> usize {
        self.modes.len()
    }

    pub fn m(&self) -> usize {
        self.dims.len()
    }

    /// Number of reals in the realified coordinates.
    pub fn real_len(&self) -> usize {
        2 * self.r() * self.dims.as_slice().iter().sum::<usize>()
    }

    /// Interleaved `(re, im)` coordinates ordered by component, mode, entry.
    pub fn to_real(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.real_len());
        for comp in &self.modes {
            for v in comp {
                for a in v {
                    out.push(a.re);
                    out.push(a.im);
                }
            }
        }
        out
    }

    pub fn from_real(dims: &Dims, r: usize, data: &[f64]) -> Result<Self> {
        let mut p = FactorPoint::zeros(dims, r);
        if data.len() != p.real_len() {
            return invalid(format!(
                "expected {} real coordinates, got {}",
                p.real_len(),
                data.len()
            ));
        }
        let mut it = data.chunks_exact(2);
        for comp in &mut p.modes {
            for v in comp {
                for a in v {
                    let c = it.next().unwrap();
                    *a = C64::new(c[0], c[1]);
                }
            }
        }
        Ok(p)
    }

    /// `⊗_k x_ik`.
    pub fn component_vector(&self, i: usize) -> Vec<C64> {
        let mut w = vec![C64::new(1.0, 0.0)];
        for v in &self.modes[i] {
            w = crate::tensor::kron_vec(&w, v);
        }
        w
    }

    /// Nonzero components as normalized rays with weights.
    pub fn rays(&self) -> Vec<ExtremeRay> {
        self.modes
            .iter()
            .filter_map(|comp| ExtremeRay::from_modes(comp.clone()))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.modes
            .iter()
            .flatten()
            .flatten()
            .all(|a| a.re.is_finite() && a.im.is_finite())
    }
}

/// `Ψ(x)`.
pub fn psi(x: &FactorPoint) -> HermitianMatrix {
    let n = x.dims.total();
    let mut data = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..x.r() {
        let w = x.component_vector(i);
        for (a, wa) in w.iter().enumerate() {
            if *wa == C64::new(0.0, 0.0) {
                continue;
            }
            let row = &mut data[a * n..(a + 1) * n];
            for (b, wb) in w.iter().enumerate() {
                row[b] += wa * wb.conj();
            }
        }
    }
    HermitianMatrix::symmetrize(CMatrix::from_vec(n, data).expect("square buffer"))
}

/// `A(z) + a = (Id/d̄ − φ) z + φ`.
pub fn affine_target(inst: &ThresholdInstance, z: f64) -> HermitianMatrix {
    inst.phi.axpy(z, &inst.noise_direction())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LadmmState {
    pub x: FactorPoint,
    pub z: f64,
    pub chi: HermitianMatrix,
    pub zeta: f64,
    /// `‖A(z)+a−Ψ(x)‖₂`.
    pub residual: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

impl LadmmState {
    pub fn new(inst: &ThresholdInstance, x: FactorPoint, z: f64, zeta: f64) -> Self {
        let n = inst.total_dim();
        let residual = affine_target(inst, z).sub(&psi(&x)).frobenius_norm();
        LadmmState {
            x,
            z,
            chi: HermitianMatrix::zeros(n),
            zeta,
            residual,
            grad_norm: f64::INFINITY,
            iterations: 0,
        }
    }

    /// Random start with `r` components and `z = 1`.
    pub fn random(inst: &ThresholdInstance, r: usize, seed: u64, zeta: f64) -> Self {
        LadmmState::new(inst, FactorPoint::random(&inst.dims, r, seed), 1.0, zeta)
    }
}

/// `L_ζ(z, Ψ(x), χ)`.
pub fn augmented_lagrangian(state: &LadmmState, inst: &ThresholdInstance) -> f64 {
    lagrangian_parts(&state.x, state.z, &state.chi, state.zeta, inst).0
}

fn lagrangian_parts(
    x: &FactorPoint,
    z: f64,
    chi: &HermitianMatrix,
    zeta: f64,
    inst: &ThresholdInstance,
) -> (f64, HermitianMatrix) {
    let resid = affine_target(inst, z).sub(&psi(x));
    let nr = resid.frobenius_norm();
    (z + resid.inner(chi) + 0.5 * zeta * nr * nr, resid)
}

/// Gradient of `L_ζ` in the realified coordinates of `x`, returned in the
/// shape of a [`FactorPoint`] with `(∂/∂Re, ∂/∂Im)` packed into each entry.
pub fn grad_x_augmented_lagrangian(state: &LadmmState, inst: &ThresholdInstance) -> FactorPoint {
    let (_, resid) = lagrangian_parts(&state.x, state.z, &state.chi, state.zeta, inst);
    let g = resid.scale(state.zeta).add(&state.chi).scale(-1.0);
    let flat = gradient_from_dpsi(&state.x, &g);
    FactorPoint::from_real(&state.x.dims, state.x.r(), &flat).expect("shape")
}

/// Realified gradient of `x ↦ <G, Ψ(x)>`.
fn gradient_from_dpsi(x: &FactorPoint, g: &HermitianMatrix) -> Vec<f64> {
    let map = SubsystemIndexMap::from_dims(&x.dims);
    let n = map.total();
    let m = x.m();
    let multis: Vec<Vec<usize>> = (0..n).map(|f| map.multi(f)).collect();
    let gm = g.as_cmatrix();
    let mut out = Vec::with_capacity(x.real_len());
    for (i, comp) in x.modes.iter().enumerate() {
        let w = x.component_vector(i);
        let gw = gm.mul_vec(&w);
        for k in 0..m {
            let mut h = vec![C64::new(0.0, 0.0); x.dims.get(k)];
            for (f, multi) in multis.iter().enumerate() {
                let mut coef = gw[f];
                for (j, &fj) in multi.iter().enumerate() {
                    if j != k {
                        coef *= comp[j][fj].conj();
                    }
                }
                h[multi[k]] += coef;
            }
            for a in h {
                out.push(2.0 * a.re);
                out.push(2.0 * a.im);
            }
        }
    }
    out
}

/// Value and realified gradient of `x ↦ L_ζ(z, Ψ(x), χ)`.
fn lagrangian_and_gradient(
    data: &[f64],
    dims: &Dims,
    r: usize,
    z: f64,
    chi: &HermitianMatrix,
    zeta: f64,
    inst: &ThresholdInstance,
) -> (f64, Vec<f64>) {
    let x = FactorPoint::from_real(dims, r, data).expect("shape");
    let (f, resid) = lagrangian_parts(&x, z, chi, zeta, inst);
    let g = resid.scale(zeta).add(chi).scale(-1.0);
    (f, gradient_from_dpsi(&x, &g))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[derive(Clone, Debug)]
pub struct SubproblemResult {
    pub x: FactorPoint,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub line_search_failed: bool,
}

/// Approximate minimization of `L_ζ` over `x` by L-BFGS, warm-started at
/// `state.x`.
pub fn solve_subproblem_x(
    state: &LadmmState,
    inst: &ThresholdInstance,
    cfg: &LbfgsConfig,
) -> SubproblemResult {
    let dims = state.x.dims.clone();
    let r = state.x.r();
    let res = lbfgs::minimize(
        |d| lagrangian_and_gradient(d, &dims, r, state.z, &state.chi, state.zeta, inst),
        state.x.to_real(),
        cfg,
    );
    SubproblemResult {
        x: FactorPoint::from_real(&dims, r, &res.x).expect("shape"),
        value: res.f,
        grad_norm: norm(&res.grad),
        iterations: res.iterations,
        line_search_failed: res.stop == LbfgsStop::LineSearchFailed,
    }
}

/// Closed-form minimizer of `L_ζ` over `z ≥ 0` with `x` fixed.
pub fn solve_subproblem_z(state: &LadmmState, inst: &ThresholdInstance) -> f64 {
    solve_z(&psi(&state.x), &state.chi, state.zeta, inst)
}

fn solve_z(psi_x: &HermitianMatrix, chi: &HermitianMatrix, zeta: f64, inst: &ThresholdInstance) -> f64 {
    let b = inst.noise_direction();
    let nb = b.frobenius_norm();
    if nb < 1e-14 {
        return 0.0;
    }
    let num = -1.0 - b.inner(chi) - zeta * b.inner(&inst.phi.sub(psi_x));
    (num / (zeta * nb * nb)).max(0.0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LadmmConfig {
    pub max_iter: usize,
    pub residual_tol: f64,
    pub grad_tol: f64,
    pub zeta_min: f64,
    pub zeta_max: f64,
    pub time_limit: Option<Duration>,
    #[serde(skip)]
    pub lbfgs: LbfgsConfig,
}

impl Default for LadmmConfig {
    fn default() -> Self {
        LadmmConfig {
            max_iter: 1000,
            residual_tol: 1e-6,
            grad_tol: 1e-6,
            zeta_min: 1e-4,
            zeta_max: 1e6,
            time_limit: None,
            lbfgs: LbfgsConfig::default(),
        }
    }
}

/// Penalty adaptation: grow by 2.5 when the residual dominates the
/// stationarity measure, otherwise shrink by 0.4.
pub fn update_penalty(zeta: f64, residual: f64, grad_norm: f64, cfg: &LadmmConfig) -> f64 {
    let next = if residual > 0.8 * grad_norm {
        2.5 * zeta
    } else {
        0.4 * zeta
    };
    next.clamp(cfg.zeta_min, cfg.zeta_max)
}

/// Default component count for `m` subsystems.
pub fn default_rank(m: usize) -> usize {
    match m {
        0..=2 => 9,
        3 => 256,
        _ => 512,
    }
}

/// Runs LADMM from `init` until the residual and gradient tolerances or a
/// limit is reached.
pub fn ladmm_run(inst: &ThresholdInstance, init: LadmmState, cfg: &LadmmConfig) -> LadmmState {
    let start = Instant::now();
    let mut st = init;
    st.zeta = st.zeta.clamp(cfg.zeta_min, cfg.zeta_max);
    for it in 0..cfg.max_iter {
        let mut inner = cfg.lbfgs.clone();
        if st.residual.is_finite() {
            inner.f_tol = inner.f_tol.min(1e-2 * st.zeta * st.residual * st.residual);
            inner.step_tol = inner.step_tol.min(1e-1 * st.residual);
        }
        let sub = solve_subproblem_x(&st, inst, &inner);
        st.x = sub.x;
        let p = psi(&st.x);
        st.z = solve_z(&p, &st.chi, st.zeta, inst);
        let resid = affine_target(inst, st.z).sub(&p);
        let g = resid.scale(st.zeta).add(&st.chi).scale(-1.0);
        st.grad_norm = norm(&gradient_from_dpsi(&st.x, &g));
        st.residual = resid.frobenius_norm();
        st.chi = st.chi.axpy(st.zeta, &resid);
        st.iterations += 1;
        log::debug!(
            "{}",
            serde_json::json!({
                "event": "ladmm_iter",
                "iter": it,
                "z": st.z,
                "residual": st.residual,
                "grad_norm": st.grad_norm,
                "zeta": st.zeta,
                "inner_iters": sub.iterations,
                "line_search_failed": sub.line_search_failed,
            })
        );
        if st.residual < cfg.residual_tol && st.grad_norm < cfg.grad_tol {
            break;
        }
        st.zeta = update_penalty(st.zeta, st.residual, st.grad_norm, cfg);
        if cfg.time_limit.is_some_and(|t| start.elapsed() >= t) {
            break;
        }
    }
    st
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::ghz_state;
    use crate::tensor::kron_all;

    fn e(d: usize, i: usize) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); d];
        v[i] = C64::new(1.0, 0.0);
        v
    }

    #[test]
    fn psi_basis_product() {
        let x = FactorPoint {
            dims: Dims::qubits(2),
            modes: vec![vec![e(2, 0), e(2, 1)]],
        };
        let p = psi(&x);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == 1 && j == 1 { 1.0 } else { 0.0 };
                assert_eq!(p.get(i, j), C64::new(want, 0.0));
            }
        }
    }

    #[test]
    fn psi_matches_kron_chains() {
        let dims = Dims::new(vec![2, 3]).unwrap();
        let x = FactorPoint::random(&dims, 3, 7);
        let mut want = HermitianMatrix::zeros(6);
        for comp in &x.modes {
            let factors: Vec<HermitianMatrix> = comp.iter().map(|v| HermitianMatrix::outer(v)).collect();
            want = want.add(&kron_all(factors.iter()));
        }
        assert!(psi(&x).sub(&want).frobenius_norm() < 1e-13);
        assert!((psi(&x).trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lagrangian_at_feasible_point_is_z() {
        let inst = ghz_state(2).unwrap();
        let rays: Vec<ExtremeRay> = (0..4)
            .map(|f| {
                let mut r = ExtremeRay::basis(&inst.dims, &[f / 2, f % 2]);
                r.weight = 0.25;
                r
            })
            .collect();
        let x = FactorPoint::from_rays(&inst.dims, &rays);
        let mut st = LadmmState::new(&inst, x, 1.0, 3.0);
        st.chi = HermitianMatrix::identity(4);
        assert!(st.residual < 1e-14);
        assert!((augmented_lagrangian(&st, &inst) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lagrangian_without_multiplier() {
        let inst = ghz_state(2).unwrap();
        let st = LadmmState::new(&inst, FactorPoint::random(&inst.dims, 2, 1), 0.3, 2.0);
        let rho = st.residual;
        assert!((augmented_lagrangian(&st, &inst) - (0.3 + rho * rho)).abs() < 1e-12);
    }

    #[test]
    fn zero_point_has_zero_gradient() {
        let inst = ghz_state(3).unwrap();
        let mut st = LadmmState::new(&inst, FactorPoint::zeros(&inst.dims, 4), 0.5, 1.0);
        st.chi = HermitianMatrix::identity(8);
        let g = grad_x_augmented_lagrangian(&st, &inst);
        assert!(g.to_real().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (seed, dims) in [(1u64, vec![2, 2]), (2, vec![2, 3]), (3, vec![2, 2, 2])] {
            let dims = Dims::new(dims).unwrap();
            let n = dims.total();
            let phi = HermitianMatrix::identity(n).scale(1.0 / n as f64);
            let inst = ThresholdInstance::new("t", phi, dims.clone()).unwrap();
            let mut st = LadmmState::new(&inst, FactorPoint::random(&dims, 3, seed), 0.7, 1.3);
            st.chi = HermitianMatrix::from_fn(n, |i, j| C64::new(0.1 * (i + j) as f64, 0.05 * (i as f64 - j as f64)));
            let g = grad_x_augmented_lagrangian(&st, &inst).to_real();
            let x0 = st.x.to_real();
            let h = 1e-5;
            for (c, &gc) in g.iter().enumerate() {
                let eval = |delta: f64| {
                    let mut d = x0.clone();
                    d[c] += delta;
                    let mut s = st.clone();
                    s.x = FactorPoint::from_real(&dims, 3, &d).unwrap();
                    augmented_lagrangian(&s, &inst)
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                assert!((fd - gc).abs() <= 1e-5 * gc.abs().max(1.0), "{fd} vs {gc}");
            }
        }
    }

    #[test]
    fn z_step_closed_form() {
        let inst = ghz_state(2).unwrap();
        let mut st = LadmmState::new(&inst, FactorPoint::random(&inst.dims, 3, 5), 0.0, 2.0);
        st.chi = HermitianMatrix::from_fn(4, |i, j| C64::new(if i == j { -0.4 } else { 0.1 }, 0.0));
        let z = solve_subproblem_z(&st, &inst);
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=20000 {
            let mut s = st.clone();
            s.z = k as f64 * 1e-4;
            let v = augmented_lagrangian(&s, &inst);
            if v < best.0 {
                best = (v, s.z);
            }
        }
        assert!((z - best.1).abs() <= 1e-4, "{z} vs {}", best.1);
    }

    #[test]
    fn z_step_clamps_at_phi() {
        let inst = ghz_state(2).unwrap();
        let rank1 = FactorPoint {
            dims: inst.dims.clone(),
            modes: vec![vec![e(2, 0), e(2, 0)]],
        };
        let mut st = LadmmState::new(&inst, rank1, 0.0, 1.0);
        // GHZ_2 is rank one and is not a product, so Ψ(x)=φ needs the full vector.
        let w = {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            vec![C64::new(s, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(s, 0.0)]
        };
        assert!(HermitianMatrix::outer(&w).sub(&inst.phi).frobenius_norm() < 1e-14);
        let z = solve_z(&inst.phi, &st.chi, st.zeta, &inst);
        assert_eq!(z, 0.0);
        st.z = 0.0;
        let mixed = inst.maximally_mixed();
        let b = inst.noise_direction();
        let nb2 = b.frobenius_norm().powi(2);
        let want = ((nb2 - 1.0) / nb2).max(0.0);
        assert!((solve_z(&mixed, &st.chi, 1.0, &inst) - want).abs() < 1e-12);
    }

    #[test]
    fn penalty_rule() {
        let cfg = LadmmConfig::default();
        assert_eq!(update_penalty(1.0, 1.0, 1.0, &cfg), 2.5);
        assert_eq!(update_penalty(1.0, 0.0, 1.0, &cfg), 0.4);
        assert_eq!(update_penalty(1e6, 1.0, 0.0, &cfg), 1e6);
        assert_eq!(update_penalty(1e-4, 0.0, 1.0, &cfg), 1e-4);
    }

    #[test]
    fn target_trace_is_one() {
        let inst = ghz_state(3).unwrap();
        for z in [0.0, 0.3, 1.0, 5.0] {
            assert!((affine_target(&inst, z).trace() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn subproblem_reaches_separable_target() {
        let dims = Dims::qubits(2);
        let inst = ThresholdInstance::new("mixed", HermitianMatrix::identity(4).scale(0.25), dims.clone()).unwrap();
        let mut st = LadmmState::random(&inst, 8, 3, 1.0);
        st.z = 1.0;
        let before = augmented_lagrangian(&st, &inst);
        let cfg = LbfgsConfig {
            max_iter: 2000,
            f_tol: 0.0,
            step_tol: 0.0,
            grad_tol: 1e-10,
            ..LbfgsConfig::default()
        };
        let sub = solve_subproblem_x(&st, &inst, &cfg);
        assert!(sub.value <= before);
        st.x = sub.x;
        let resid = affine_target(&inst, 1.0).sub(&psi(&st.x)).frobenius_norm();
        assert!(resid < 1e-6, "{resid}");
    }

    #[test]
    fn ladmm_on_mixed_state_returns_zero() {
        
        let dims = Dims::qubits(2);
        let inst = ThresholdInstance::new("mixed", HermitianMatrix::identity(4).scale(0.25), dims).unwrap();
        let st = ladmm_run(&inst, LadmmState::random(&inst, 9, 1, 1.0), &LadmmConfig {
            max_iter: 300,
            ..LadmmConfig::default()
        });
        assert_eq!(st.z, 0.0);
        assert!(st.residual < 1e-5, "{}", st.residual);
    }

    #[test]
    fn ladmm_ghz2_threshold() {
        let inst = ghz_state(2).unwrap();
        let cfg = LadmmConfig {
            max_iter: 300,
            ..LadmmConfig::default()
        };
        let exact = crate::states::ghz_threshold_exact(2);
        let best = (0..5)
            .map(|seed| ladmm_run(&inst, LadmmState::random(&inst, 9, seed, 1.0), &cfg))
            .filter(|s| s.residual < 1e-4)
            .map(|s| {
                let recomputed = affine_target(&inst, s.z).sub(&psi(&s.x)).frobenius_norm();
                assert!((recomputed - s.residual).abs() < 1e-12);
                (s.z - exact).abs()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(best < 5e-3, "{best}");
    }
}
