//! Small dense conic programs: a builder for affine Hermitian constraints,
//! an operator-splitting SDP solver, a revised simplex LP solver, and a
//! dual-repair lower-bound certificate.
//!
//! Programs are stored as
//!
//! ```text
//! minimize    q'x + q0
//! subject to  C x + c ∈ K_1 × ... × K_p,     x free,
//! ```
//!
//! where each `K_i` is a zero cone, a nonnegative orthant, or a Hermitian
//! PSD cone in the isometric coordinates of [`HermitianMatrix::to_hvec`].
//! Every variable additionally carries a box `[lower, upper]` that all
//! feasible points satisfy; the box is used only by
//! [`lower_bound_certificate`].

mod admm;
mod expr;
mod linalg;
mod simplex;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use admm::{solve_sdp, AdmmSettings};
pub use expr::{HermExpr, HermVar, LinExpr, ProgramBuilder};
pub use linalg::CsrMatrix;
pub use simplex::{solve_lp, LpSettings};

use crate::tensor::HermitianMatrix;

/// Cone block. `Psd(n)` spans `n²` rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    Zero(usize),
    Nonneg(usize),
    Psd(usize),
}

impl Cone {
    pub fn rows(&self) -> usize {
        match *self {
            Cone::Zero(k) | Cone::Nonneg(k) => k,
            Cone::Psd(n) => n * n,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConicProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    pub constraints: CsrMatrix,
    pub constants: Vec<f64>,
    pub cones: Vec<Cone>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Limit,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: SolveStatus,
    /// Primal point.
    pub x: Vec<f64>,
    /// Dual point, one entry per constraint row, in the dual cone.
    pub dual: Vec<f64>,
    /// `q'x + q0`.
    pub objective: f64,
    /// `-c'dual + q0`.
    pub dual_objective: f64,
    /// Infinity norm of the distance of `Cx + c` from the cone.
    pub primal_residual: f64,
    /// Infinity norm of `q - C'dual`.
    pub dual_residual: f64,
    pub iterations: usize,
}

impl ConicSolution {
    pub fn gap(&self) -> f64 {
        (self.objective - self.dual_objective).abs()
    }
}

impl ConicProgram {
    pub fn n_rows(&self) -> usize {
        self.constants.len()
    }

    pub fn is_lp(&self) -> bool {
        self.cones.iter().all(|c| !matches!(c, Cone::Psd(n) if *n > 1))
    }

    /// Row values `Cx + c`.
    pub fn row_values(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.constraints.mul_vec(x);
        for (o, c) in out.iter_mut().zip(&self.constants) {
            *o += c;
        }
        out
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x) + self.objective_constant
    }

    /// Infinity-norm distance of `Cx + c` from the cone product.
    pub fn primal_infeasibility(&self, x: &[f64]) -> f64 {
        let v = self.row_values(x);
        let proj = project_cone(&self.cones, &v);
        v.iter()
            .zip(&proj)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Infinity norm of `q - C'dual`.
    pub fn dual_infeasibility(&self, dual: &[f64]) -> f64 {
        let ct = self.constraints.mul_transpose_vec(dual);
        self.objective
            .iter()
            .zip(&ct)
            .map(|(q, a)| (q - a).abs())
            .fold(0.0, f64::max)
    }

    pub fn dual_objective_value(&self, dual: &[f64]) -> f64 {
        -dot(&self.constants, dual) + self.objective_constant
    }

    /// Text dump: header, objective, cone list, constraint triplets.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "vars {} rows {}", self.n_vars, self.n_rows());
        let _ = writeln!(out, "objective_constant {:.17e}", self.objective_constant);
        for (j, q) in self.objective.iter().enumerate() {
            if *q != 0.0 {
                let _ = writeln!(out, "q {j} {q:.17e}");
            }
        }
        for (j, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            let _ = writeln!(out, "box {j} {lo:.17e} {hi:.17e}");
        }
        for cone in &self.cones {
            let _ = match cone {
                Cone::Zero(k) => writeln!(out, "cone zero {k}"),
                Cone::Nonneg(k) => writeln!(out, "cone nonneg {k}"),
                Cone::Psd(n) => writeln!(out, "cone psd {n}"),
            };
        }
        for (i, c) in self.constants.iter().enumerate() {
            if *c != 0.0 {
                let _ = writeln!(out, "c {i} {c:.17e}");
            }
        }
        for i in 0..self.n_rows() {
            for (j, v) in self.constraints.row(i) {
                let _ = writeln!(out, "C {i} {j} {v:.17e}");
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean projection onto the cone product.
pub(crate) fn project_cone(cones: &[Cone], v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    project_cone_in_place(cones, &mut out);
    out
}

pub(crate) fn project_cone_in_place(cones: &[Cone], v: &mut [f64]) {
    let mut off = 0;
    for cone in cones {
        let k = cone.rows();
        let block = &mut v[off..off + k];
        match *cone {
            Cone::Zero(_) => block.iter_mut().for_each(|x| *x = 0.0),
            Cone::Nonneg(_) => block.iter_mut().for_each(|x| *x = x.max(0.0)),
            Cone::Psd(n) => {
                let m = HermitianMatrix::from_hvec(n, block).expect("block size matches cone");
                let p = crate::tensor::psd_project(&m);
                block.copy_from_slice(&p.to_hvec());
            }
        }
        off += k;
    }
}

/// Projection onto the dual cone product (zero cones become free).
pub(crate) fn project_dual_cone_in_place(cones: &[Cone], v: &mut [f64]) {
    let mut off = 0;
    for cone in cones {
        let k = cone.rows();
        if !matches!(cone, Cone::Zero(_)) {
            project_cone_in_place(std::slice::from_ref(cone), &mut v[off..off + k]);
        }
        off += k;
    }
}

/// Valid lower bound on the optimal value from any dual vector.
///
/// The dual is first projected onto the dual cone; the Lagrangian
/// `q'x + q0 - dual'(Cx + c)` is then minimized over the variable box, which
/// contains every feasible point. Returns `-inf` if a variable with an
/// infinite bound has a nonzero reduced cost.
pub fn lower_bound_certificate(p: &ConicProgram, dual: &[f64]) -> f64 {
    if dual.len() != p.n_rows() || dual.iter().any(|d| !d.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let mut mu = dual.to_vec();
    project_dual_cone_in_place(&p.cones, &mut mu);
    let ct = p.constraints.mul_transpose_vec(&mu);
    let mut lb = p.objective_constant - dot(&p.constants, &mu);
    for j in 0..p.n_vars {
        let r = p.objective[j] - ct[j];
        if r == 0.0 {
            continue;
        }
        let bound = if r > 0.0 { p.lower[j] } else { p.upper[j] };
        if !bound.is_finite() {
            if r.abs() <= 1e-300 {
                continue;
            }
            return f64::NEG_INFINITY;
        }
        lb += r * bound;
    }
    lb
}

/// Dispatch to the simplex solver for LPs and to ADMM otherwise.
pub fn solve(p: &ConicProgram) -> ConicSolution {
    if p.is_lp() {
        solve_lp(p, &LpSettings::default())
    } else {
        solve_sdp(p, &AdmmSettings::default(), None)
    }
}

#[cfg(test)]
mod tests;
