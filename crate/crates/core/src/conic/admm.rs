//! Operator-splitting solver for conic programs with PSD blocks.
//!
//! Iterates on the equivalent form `min q'x s.t. Ax + s = b, s ∈ K` with
//! `A = -C`, `b = c`. Each iteration solves one linear system with the
//! fixed matrix `σI + A'RA`, takes an over-relaxed step, projects onto the
//! cone, and updates the dual.

use std::time::{Duration, Instant};

use super::linalg::{Cholesky, CsrMatrix};
use super::{dot, project_cone, project_cone_in_place, Cone, ConicProgram, ConicSolution, SolveStatus};

#[derive(Clone, Debug)]
pub struct AdmmSettings {
    pub max_iter: usize,
    /// Infinity-norm tolerance on the cone distance of `Cx + c`.
    pub eps_primal: f64,
    /// Infinity-norm tolerance on `q - C'dual`.
    pub eps_dual: f64,
    /// Relative duality-gap tolerance.
    pub eps_gap: f64,
    pub eps_infeasible: f64,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub check_every: usize,
    pub adaptive_rho: bool,
    pub scaling_iters: usize,
    pub time_limit: Option<Duration>,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        AdmmSettings {
            max_iter: 50_000,
            eps_primal: 1e-7,
            eps_dual: 1e-7,
            eps_gap: 1e-6,
            eps_infeasible: 1e-8,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            check_every: 25,
            adaptive_rho: true,
            scaling_iters: 10,
            time_limit: None,
        }
    }
}

impl AdmmSettings {
    /// Looser tolerances for relaxations whose value is certified separately.
    pub fn relaxed() -> Self {
        AdmmSettings {
            eps_primal: 1e-6,
            eps_dual: 1e-6,
            eps_gap: 1e-6,
            max_iter: 20_000,
            ..Self::default()
        }
    }
}

struct Scaling {
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
}

fn equilibrate(a: &CsrMatrix, q: &[f64], cones: &[Cone], iters: usize) -> Scaling {
    let (m, n) = (a.n_rows, a.n_cols);
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m];
    let clamp = |v: f64| if v < 1e-4 { 1.0 } else { v.min(1e4) };
    for _ in 0..iters {
        let s = a.scaled(&e, &d);
        let cn = s.col_inf_norms();
        let rn = s.row_inf_norms();
        for j in 0..n {
            d[j] /= clamp(cn[j]).sqrt();
        }
        for i in 0..m {
            e[i] /= clamp(rn[i]).sqrt();
        }
        // A PSD block must be scaled uniformly to keep the cone invariant.
        let mut off = 0;
        for cone in cones {
            let k = cone.rows();
            if let Cone::Psd(_) = cone {
                let mean = e[off..off + k].iter().sum::<f64>() / k as f64;
                e[off..off + k].iter_mut().for_each(|v| *v = mean);
            }
            off += k;
        }
    }
    let dq = q
        .iter()
        .zip(&d)
        .map(|(a, b)| (a * b).abs())
        .fold(0.0, f64::max);
    let c = 1.0 / dq.clamp(1e-4, 1e4);
    Scaling { d, e, c }
}

fn rho_vector(cones: &[Cone], rho: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for cone in cones {
        let r = if matches!(cone, Cone::Zero(_)) {
            1e3 * rho
        } else {
            rho
        };
        out.extend(std::iter::repeat(r).take(cone.rows()));
    }
    out
}

fn factor(a: &CsrMatrix, rho: &[f64], sigma: f64) -> Cholesky {
    let n = a.n_cols;
    let mut k = a.gram(rho);
    for j in 0..n {
        k[j * n + j] += sigma;
    }
    match Cholesky::factor(&k, n) {
        Some(f) => f,
        None => {
            for j in 0..n {
                k[j * n + j] += 1e-8 * (1.0 + k[j * n + j].abs());
            }
            Cholesky::factor(&k, n).expect("regularized KKT matrix is positive definite")
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves a conic program by ADMM, optionally warm-started from a previous
/// solution of a program with identical variable and row layout.
pub fn solve_sdp(
    p: &ConicProgram,
    settings: &AdmmSettings,
    warm: Option<&ConicSolution>,
) -> ConicSolution {
    let start = Instant::now();
    let (m, n) = (p.n_rows(), p.n_vars);
    let neg_c = {
        let mut c = p.constraints.clone();
        let ones = vec![1.0; n];
        let neg = vec![-1.0; m];
        c = c.scaled(&neg, &ones);
        c
    };
    let sc = equilibrate(&neg_c, &p.objective, &p.cones, settings.scaling_iters);
    let a = neg_c.scaled(&sc.e, &sc.d);
    let b: Vec<f64> = p.constants.iter().zip(&sc.e).map(|(v, e)| v * e).collect();
    let q: Vec<f64> = p
        .objective
        .iter()
        .zip(&sc.d)
        .map(|(v, d)| v * d * sc.c)
        .collect();

    let mut x = vec![0.0; n];
    let mut s = vec![0.0; m];
    let mut y = vec![0.0; m];
    if let Some(w) = warm.filter(|w| w.x.len() == n && w.dual.len() == m) {
        let cone_point = project_cone(&p.cones, &p.row_values(&w.x));
        for j in 0..n {
            x[j] = w.x[j] / sc.d[j];
        }
        for i in 0..m {
            s[i] = cone_point[i] * sc.e[i];
            y[i] = -w.dual[i] * sc.c / sc.e[i];
        }
    }

    let mut rho = settings.rho;
    let mut rvec = rho_vector(&p.cones, rho);
    let mut kkt = factor(&a, &rvec, settings.sigma);

    let unscale_x = |xs: &[f64]| -> Vec<f64> { xs.iter().zip(&sc.d).map(|(v, d)| v * d).collect() };
    let unscale_dual =
        |ys: &[f64]| -> Vec<f64> { ys.iter().zip(&sc.e).map(|(v, e)| -v * e / sc.c).collect() };

    let mut y_prev = y.clone();
    let mut x_prev = x.clone();
    let mut status = SolveStatus::Limit;
    let mut iter = 0;
    let mut rhs = vec![0.0; n];
    let mut w = vec![0.0; m];
    while iter < settings.max_iter {
        iter += 1;
        for i in 0..m {
            w[i] = rvec[i] * (b[i] - s[i]) + y[i];
        }
        let atw = a.mul_transpose_vec(&w);
        for j in 0..n {
            rhs[j] = settings.sigma * x[j] - q[j] + atw[j];
        }
        kkt.solve_in_place(&mut rhs);
        let ax = a.mul_vec(&rhs);
        let al = settings.alpha;
        for j in 0..n {
            x[j] = al * rhs[j] + (1.0 - al) * x[j];
        }
        let mut s_rel = vec![0.0; m];
        for i in 0..m {
            let s_tilde = b[i] - ax[i];
            s_rel[i] = al * s_tilde + (1.0 - al) * s[i];
            s[i] = s_rel[i] + y[i] / rvec[i];
        }
        project_cone_in_place(&p.cones, &mut s);
        for i in 0..m {
            y[i] += rvec[i] * (s_rel[i] - s[i]);
        }

        if iter % settings.check_every != 0 && iter != settings.max_iter {
            continue;
        }

        let xu = unscale_x(&x);
        let mu = unscale_dual(&y);
        let pres = p.primal_infeasibility(&xu);
        let dres = p.dual_infeasibility(&mu);
        let pobj = p.objective_value(&xu);
        let dobj = p.dual_objective_value(&mu);
        let gap = (pobj - dobj).abs();
        log::trace!(
            "{{\"admm_iter\":{iter},\"pres\":{pres:.3e},\"dres\":{dres:.3e},\"pobj\":{pobj:.9},\"dobj\":{dobj:.9},\"rho\":{rho:.3e}}}"
        );
        if pres <= settings.eps_primal
            && dres <= settings.eps_dual
            && gap <= settings.eps_gap * pobj.abs().max(dobj.abs()).max(1.0)
        {
            status = SolveStatus::Optimal;
            break;
        }

        // Infeasibility certificates from iterate differences.
        let dy: Vec<f64> = unscale_dual(&y)
            .iter()
            .zip(unscale_dual(&y_prev))
            .map(|(a, b)| a - b)
            .collect();
        let dy_norm = inf_norm(&dy);
        if dy_norm > 1e-6 {
            let mut dmu = dy.clone();
            super::project_dual_cone_in_place(&p.cones, &mut dmu);
            let cone_err = inf_norm(
                &dmu.iter().zip(&dy).map(|(a, b)| a - b).collect::<Vec<_>>(),
            );
            let ct = p.constraints.mul_transpose_vec(&dy);
            if inf_norm(&ct) <= settings.eps_infeasible * dy_norm
                && cone_err <= settings.eps_infeasible * dy_norm
                && -dot(&p.constants, &dy) > settings.eps_infeasible * dy_norm
            {
                status = SolveStatus::Infeasible;
                break;
            }
        }
        let dx: Vec<f64> = xu.iter().zip(unscale_x(&x_prev)).map(|(a, b)| a - b).collect();
        let dx_norm = inf_norm(&dx);
        if dx_norm > 1e-6 {
            let cdx = p.constraints.mul_vec(&dx);
            let proj = project_cone(&p.cones, &cdx);
            let err = inf_norm(&cdx.iter().zip(&proj).map(|(a, b)| a - b).collect::<Vec<_>>());
            if dot(&p.objective, &dx) < -settings.eps_infeasible * dx_norm
                && err <= settings.eps_infeasible * dx_norm
            {
                status = SolveStatus::Unbounded;
                break;
            }
        }
        y_prev.copy_from_slice(&y);
        x_prev.copy_from_slice(&x);

        if settings.time_limit.is_some_and(|t| start.elapsed() > t) {
            break;
        }

        if settings.adaptive_rho {
            let ax = a.mul_vec(&x);
            let rp: Vec<f64> = (0..m).map(|i| ax[i] + s[i] - b[i]).collect();
            let aty = a.mul_transpose_vec(&y);
            let rd: Vec<f64> = (0..n).map(|j| q[j] - aty[j]).collect();
            let pn = inf_norm(&rp) / inf_norm(&ax).max(inf_norm(&s)).max(inf_norm(&b)).max(1e-10);
            let dn = inf_norm(&rd) / inf_norm(&aty).max(inf_norm(&q)).max(1e-10);
            if pn > 0.0 && dn > 0.0 {
                let ratio = (pn / dn).sqrt();
                if !(0.2..=5.0).contains(&ratio) {
                    rho = (rho * ratio).clamp(1e-6, 1e6);
                    rvec = rho_vector(&p.cones, rho);
                    kkt = factor(&a, &rvec, settings.sigma);
                }
            }
        }
    }

    let xu = unscale_x(&x);
    let mut mu = unscale_dual(&y);
    if status == SolveStatus::Infeasible {
        let dy: Vec<f64> = mu
            .iter()
            .zip(unscale_dual(&y_prev))
            .map(|(a, b)| a - b)
            .collect();
        mu = dy;
    }
    ConicSolution {
        status,
        objective: p.objective_value(&xu),
        dual_objective: p.dual_objective_value(&mu),
        primal_residual: p.primal_infeasibility(&xu),
        dual_residual: p.dual_infeasibility(&mu),
        x: xu,
        dual: mu,
        iterations: iter,
    }
}
