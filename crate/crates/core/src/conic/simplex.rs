//! Dense revised simplex method with an explicit basis inverse.

use super::linalg::invert;
use super::{Cone, ConicProgram, ConicSolution, SolveStatus};

#[derive(Clone, Debug)]
pub struct LpSettings {
    pub max_iter: usize,
    /// Reduced-cost and feasibility tolerance.
    pub tol: f64,
    /// Consecutive degenerate pivots after which Bland's rule takes over.
    pub bland_after: usize,
    pub refactor_every: usize,
}

impl Default for LpSettings {
    fn default() -> Self {
        LpSettings {
            max_iter: 100_000,
            tol: 1e-9,
            bland_after: 50,
            refactor_every: 100,
        }
    }
}

/// `min c'x s.t. Ax = b, x >= 0` with `b >= 0`.
struct StandardForm {
    m: usize,
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl StandardForm {
    fn col(&self, j: usize, out: &mut [f64]) {
        for i in 0..self.m {
            out[i] = self.a[i * self.n + j];
        }
    }
}

enum Outcome {
    Optimal,
    Infeasible,
    Unbounded,
    Limit,
}

struct Tableau<'a> {
    sf: &'a StandardForm,
    /// Basic column per row; indices `>= n` are artificials.
    basis: Vec<usize>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    /// Working right-hand side; differs from `sf.b` while perturbed.
    rhs: Vec<f64>,
    settings: &'a LpSettings,
    pivots_since_refactor: usize,
}

impl<'a> Tableau<'a> {
    fn column(&self, j: usize, out: &mut [f64]) {
        if j >= self.sf.n {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[j - self.sf.n] = 1.0;
        } else {
            self.sf.col(j, out);
        }
    }

    /// `Binv * column(j)`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.sf.m;
        let mut a = vec![0.0; m];
        self.column(j, &mut a);
        let mut u = vec![0.0; m];
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            u[i] = row.iter().zip(&a).map(|(x, y)| x * y).sum();
        }
        u
    }

    fn refactor(&mut self) -> bool {
        let m = self.sf.m;
        let mut bmat = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for (k, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for i in 0..m {
                bmat[i * m + k] = col[i];
            }
        }
        if !invert(&mut bmat, m) {
            return false;
        }
        self.binv = bmat;
        for i in 0..m {
            self.xb[i] = (0..m).map(|k| self.binv[i * m + k] * self.rhs[k]).sum();
        }
        self.pivots_since_refactor = 0;
        true
    }

    fn duals(&self, cost: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let m = self.sf.m;
        let mut pi = vec![0.0; m];
        for (k, &j) in self.basis.iter().enumerate() {
            let cb = cost(j);
            if cb != 0.0 {
                for i in 0..m {
                    pi[i] += cb * self.binv[k * m + i];
                }
            }
        }
        pi
    }

    fn reduced_cost(&self, j: usize, pi: &[f64], cost: &dyn Fn(usize) -> f64) -> f64 {
        let n = self.sf.n;
        if j >= n {
            return cost(j) - pi[j - n];
        }
        let mut d = cost(j);
        for (i, p) in pi.iter().enumerate() {
            d -= p * self.sf.a[i * n + j];
        }
        d
    }

    fn pivot(&mut self, r: usize, j: usize, u: &[f64]) {
        let m = self.sf.m;
        let t = self.xb[r] / u[r];
        for i in 0..m {
            if i != r {
                self.xb[i] -= t * u[i];
            }
        }
        self.xb[r] = t;
        let piv = u[r];
        for k in 0..m {
            self.binv[r * m + k] /= piv;
        }
        for i in 0..m {
            if i == r || u[i] == 0.0 {
                continue;
            }
            let f = u[i];
            for k in 0..m {
                self.binv[i * m + k] -= f * self.binv[r * m + k];
            }
        }
        self.basis[r] = j;
        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= self.settings.refactor_every {
            self.refactor();
        }
    }

    /// Shifts each basic value by a small pseudo-random positive amount and
    /// moves the right-hand side accordingly.
    fn perturb(&mut self, round: u64) {
        let m = self.sf.m;
        let mut state = 0x9e37_79b9_7f4a_7c15u64 ^ round.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        let mut col = vec![0.0; m];
        for r in 0..m {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let frac = 0.5 + 0.5 * (state >> 11) as f64 / (1u64 << 53) as f64;
            let eps = 1e-7 * frac * (1.0 + self.xb[r].abs());
            self.xb[r] += eps;
            self.column(self.basis[r], &mut col);
            for (b, c) in self.rhs.iter_mut().zip(&col) {
                *b += eps * c;
            }
        }
    }

    /// Restores the original right-hand side. Returns false if the current
    /// basis is then infeasible beyond `feas_tol`.
    fn unperturb(&mut self, feas_tol: f64) -> bool {
        self.rhs.clone_from(&self.sf.b);
        self.refactor();
        if self.xb.iter().any(|&v| v < -feas_tol) {
            return false;
        }
        self.xb.iter_mut().for_each(|v| *v = v.max(0.0));
        true
    }

    /// Runs the primal simplex for the given column costs over columns for
    /// which `allowed` holds.
    fn optimize(
        &mut self,
        cost: &dyn Fn(usize) -> f64,
        allowed: &dyn Fn(usize) -> bool,
        iterations: &mut usize,
    ) -> Outcome {
        let tol = self.settings.tol;
        let total = self.sf.n + self.sf.m;
        let mut degenerate = 0usize;
        let mut perturbed = false;
        let bnorm = self.sf.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let feas_tol = 1e-7 * (1.0 + bnorm);
        let mut in_basis = vec![false; total];
        for &j in &self.basis {
            in_basis[j] = true;
        }
        loop {
            if *iterations >= self.settings.max_iter {
                if perturbed {
                    self.unperturb(feas_tol);
                }
                return Outcome::Limit;
            }
            if !perturbed && degenerate >= 4 * self.settings.bland_after {
                self.perturb(*iterations as u64);
                perturbed = true;
                degenerate = 0;
            }
            *iterations += 1;
            let pi = self.duals(cost);
            let bland = degenerate >= self.settings.bland_after;
            let mut entering = None;
            let mut best = -tol;
            for j in 0..total {
                if in_basis[j] || !allowed(j) {
                    continue;
                }
                let d = self.reduced_cost(j, &pi, cost);
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(j) = entering else {
                if perturbed && !self.unperturb(feas_tol) {
                    return Outcome::Limit;
                }
                return Outcome::Optimal;
            };
            let u = self.ftran(j);
            let mut leave: Option<(usize, f64)> = None;
            for (i, &ui) in u.iter().enumerate() {
                if ui <= tol {
                    continue;
                }
                let ratio = self.xb[i].max(0.0) / ui;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best_ratio)) => {
                        let better = if ratio < best_ratio - 1e-12 {
                            true
                        } else if ratio <= best_ratio + 1e-12 {
                            if bland {
                                self.basis[i] < self.basis[r]
                            } else {
                                ui > u[r]
                            }
                        } else {
                            false
                        };
                        if better {
                            Some((i, ratio))
                        } else {
                            Some((r, best_ratio))
                        }
                    }
                };
            }
            let Some((r, ratio)) = leave else {
                if perturbed {
                    self.unperturb(feas_tol);
                }
                return Outcome::Unbounded;
            };
            if ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            in_basis[self.basis[r]] = false;
            in_basis[j] = true;
            self.xb[r] = self.xb[r].max(0.0);
            self.pivot(r, j, &u);
        }
    }
}

/// Two-phase simplex on a standard-form LP. Returns the outcome, the primal
/// point, and the equality-row duals.
fn solve_standard(sf: &StandardForm, settings: &LpSettings) -> (Outcome, Vec<f64>, Vec<f64>, usize) {
    let (m, n) = (sf.m, sf.n);
    let mut t = Tableau {
        sf,
        basis: (n..n + m).collect(),
        binv: {
            let mut id = vec![0.0; m * m];
            for i in 0..m {
                id[i * m + i] = 1.0;
            }
            id
        },
        xb: sf.b.clone(),
        rhs: sf.b.clone(),
        settings,
        pivots_since_refactor: 0,
    };
    let mut iterations = 0;
    let phase1_cost = |j: usize| if j >= n { 1.0 } else { 0.0 };
    let outcome = t.optimize(&phase1_cost, &|_| true, &mut iterations);
    if matches!(outcome, Outcome::Limit) {
        return (Outcome::Limit, vec![0.0; n], vec![0.0; m], iterations);
    }
    t.refactor();
    let infeas: f64 = t
        .basis
        .iter()
        .zip(&t.xb)
        .filter(|(&j, _)| j >= n)
        .map(|(_, &v)| v)
        .sum();
    let bnorm = sf.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if infeas > 1e-8 * (1.0 + bnorm) {
        return (Outcome::Infeasible, vec![0.0; n], vec![0.0; m], iterations);
    }
    // Drive artificials out of the basis where possible.
    for r in 0..m {
        if t.basis[r] < n {
            continue;
        }
        let in_basis: Vec<bool> = {
            let mut v = vec![false; n];
            for &j in &t.basis {
                if j < n {
                    v[j] = true;
                }
            }
            v
        };
        for j in 0..n {
            if in_basis[j] {
                continue;
            }
            let u = t.ftran(j);
            if u[r].abs() > 1e-7 {
                t.xb[r] = 0.0;
                t.pivot(r, j, &u);
                break;
            }
        }
    }
    let phase2_cost = |j: usize| if j >= n { 0.0 } else { sf.c[j] };
    let outcome = t.optimize(&phase2_cost, &|j| j < n, &mut iterations);
    t.refactor();
    let mut x = vec![0.0; n];
    for (k, &j) in t.basis.iter().enumerate() {
        if j < n {
            x[j] = t.xb[k].max(0.0);
        }
    }
    let pi = t.duals(&phase2_cost);
    (outcome, x, pi, iterations)
}

/// Solves a conic program whose cones are all zero or nonnegative.
///
/// Single-variable rows `a x_j >= 0` with `a > 0` are absorbed as sign
/// restrictions; all other variables are split into positive and negative
/// parts.
pub fn solve_lp(p: &ConicProgram, settings: &LpSettings) -> ConicSolution {
    assert!(p.is_lp(), "solve_lp needs a program without PSD blocks");
    let rows = p.n_rows();
    let mut is_nonneg_row = vec![false; rows];
    let mut off = 0;
    for cone in &p.cones {
        let k = cone.rows();
        if !matches!(cone, Cone::Zero(_)) {
            is_nonneg_row[off..off + k].iter_mut().for_each(|v| *v = true);
        }
        off += k;
    }

    // Sign rows absorbed into variable restrictions.
    let mut sign_row: Vec<Option<(usize, f64)>> = vec![None; p.n_vars];
    let mut absorbed = vec![false; rows];
    for i in 0..rows {
        if !is_nonneg_row[i] || p.constants[i] != 0.0 {
            continue;
        }
        let entries: Vec<(usize, f64)> = p.constraints.row(i).collect();
        if let [(j, a)] = entries[..] {
            if a > 0.0 && sign_row[j].is_none() {
                sign_row[j] = Some((i, a));
                absorbed[i] = true;
            }
        }
    }

    // Column layout: per variable one (nonneg) or two (free) columns, then
    // one slack per remaining inequality row.
    let mut var_cols: Vec<(usize, Option<usize>)> = Vec::with_capacity(p.n_vars);
    let mut ncols = 0;
    for s in &sign_row {
        if s.is_some() {
            var_cols.push((ncols, None));
            ncols += 1;
        } else {
            var_cols.push((ncols, Some(ncols + 1)));
            ncols += 2;
        }
    }
    let kept_rows: Vec<usize> = (0..rows).filter(|&i| !absorbed[i]).collect();
    let mut slack_of = vec![None; rows];
    for &i in &kept_rows {
        if is_nonneg_row[i] {
            slack_of[i] = Some(ncols);
            ncols += 1;
        }
    }
    let m = kept_rows.len();
    let mut a = vec![0.0; m * ncols];
    let mut b = vec![0.0; m];
    let mut flip = vec![1.0; m];
    for (r, &i) in kept_rows.iter().enumerate() {
        for (j, v) in p.constraints.row(i) {
            let (pos, neg) = var_cols[j];
            a[r * ncols + pos] += v;
            if let Some(nc) = neg {
                a[r * ncols + nc] -= v;
            }
        }
        if let Some(sc) = slack_of[i] {
            a[r * ncols + sc] = -1.0;
        }
        b[r] = -p.constants[i];
        if b[r] < 0.0 {
            flip[r] = -1.0;
            b[r] = -b[r];
            for v in &mut a[r * ncols..(r + 1) * ncols] {
                *v = -*v;
            }
        }
    }
    let mut c = vec![0.0; ncols];
    for (j, &(pos, neg)) in var_cols.iter().enumerate() {
        c[pos] = p.objective[j];
        if let Some(nc) = neg {
            c[nc] = -p.objective[j];
        }
    }
    let sf = StandardForm {
        m,
        n: ncols,
        a,
        b,
        c,
    };
    let (outcome, xs, pi, iterations) = solve_standard(&sf, settings);

    let x: Vec<f64> = var_cols
        .iter()
        .map(|&(pos, neg)| xs[pos] - neg.map_or(0.0, |nc| xs[nc]))
        .collect();
    let mut dual = vec![0.0; rows];
    for (r, &i) in kept_rows.iter().enumerate() {
        dual[i] = pi[r] * flip[r];
    }
    let ct = p.constraints.mul_transpose_vec(&dual);
    for (j, s) in sign_row.iter().enumerate() {
        if let Some((i, coef)) = *s {
            dual[i] = ((p.objective[j] - ct[j]) / coef).max(0.0);
        }
    }
    let status = match outcome {
        Outcome::Optimal => SolveStatus::Optimal,
        Outcome::Infeasible => SolveStatus::Infeasible,
        Outcome::Unbounded => SolveStatus::Unbounded,
        Outcome::Limit => SolveStatus::Limit,
    };
    ConicSolution {
        status,
        objective: p.objective_value(&x),
        dual_objective: p.dual_objective_value(&dual),
        primal_residual: p.primal_infeasibility(&x),
        dual_residual: p.dual_infeasibility(&dual),
        x,
        dual,
        iterations,
    }
}
