//! Affine scalar and Hermitian-matrix expressions over program variables.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use super::linalg::CsrMatrix;
use super::{Cone, ConicProgram};
use crate::tensor::{hvec_offset, HermitianMatrix};

/// Affine expression `Σ coef * x[var] + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        LinExpr::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(j: usize) -> Self {
        LinExpr {
            terms: vec![(j, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(j: usize, c: f64) -> Self {
        LinExpr {
            terms: vec![(j, c)],
            constant: 0.0,
        }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, alpha: f64) {
        if alpha == 0.0 {
            return;
        }
        self.terms
            .extend(other.terms.iter().map(|&(j, c)| (j, c * alpha)));
        self.constant += other.constant * alpha;
    }

    pub fn plus(mut self, other: &LinExpr) -> Self {
        self.add_scaled(other, 1.0);
        self
    }

    pub fn minus(mut self, other: &LinExpr) -> Self {
        self.add_scaled(other, -1.0);
        self
    }

    pub fn scaled(mut self, alpha: f64) -> Self {
        self.terms.iter_mut().for_each(|t| t.1 *= alpha);
        self.constant *= alpha;
        self
    }

    pub fn plus_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    /// Merges duplicate variables and drops negligible coefficients.
    pub fn compact(&mut self) {
        if self.terms.len() < 2 {
            self.terms.retain(|t| t.1.abs() > 1e-15);
            return;
        }
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(j, c) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == j => last.1 += c,
                _ => out.push((j, c)),
            }
        }
        out.retain(|t| t.1.abs() > 1e-15);
        self.terms = out;
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }
}

/// Hermitian matrix variable occupying `n²` consecutive program variables
/// in isometric coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HermVar {
    pub offset: usize,
    pub n: usize,
}

impl HermVar {
    pub fn expr(&self) -> HermExpr {
        HermExpr {
            n: self.n,
            coords: (0..self.n * self.n)
                .map(|k| LinExpr::var(self.offset + k))
                .collect(),
        }
    }

    pub fn value(&self, x: &[f64]) -> HermitianMatrix {
        HermitianMatrix::from_hvec(self.n, &x[self.offset..self.offset + self.n * self.n])
            .expect("slice length matches")
    }

    /// Program variable index of the coordinate holding the diagonal entry
    /// `(i, i)` or the real part of `(i, j)`, `i < j`.
    pub fn re_var(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.offset + hvec_offset(self.n, a, b)
    }

    /// Program variable index of the imaginary-part coordinate of `(i, j)`
    /// with `i < j`.
    pub fn im_var(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        self.offset + hvec_offset(self.n, i, j) + 1
    }

    /// `Re Z_ij` as an expression.
    pub fn re(&self, i: usize, j: usize) -> LinExpr {
        if i == j {
            LinExpr::var(self.re_var(i, i))
        } else {
            LinExpr::term(self.re_var(i, j), FRAC_1_SQRT_2)
        }
    }

    /// `Im Z_ij` as an expression.
    pub fn im(&self, i: usize, j: usize) -> LinExpr {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => LinExpr::zero(),
            std::cmp::Ordering::Less => LinExpr::term(self.im_var(i, j), FRAC_1_SQRT_2),
            std::cmp::Ordering::Greater => LinExpr::term(self.im_var(j, i), -FRAC_1_SQRT_2),
        }
    }

    /// Conversion factor from entry value to coordinate value.
    pub fn coord_scale(i: usize, j: usize) -> f64 {
        if i == j {
            1.0
        } else {
            SQRT_2
        }
    }
}

/// Affine Hermitian-matrix expression in isometric coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct HermExpr {
    pub n: usize,
    pub coords: Vec<LinExpr>,
}

impl HermExpr {
    pub fn constant(m: &HermitianMatrix) -> Self {
        HermExpr {
            n: m.dim(),
            coords: m.to_hvec().into_iter().map(LinExpr::constant).collect(),
        }
    }

    pub fn zeros(n: usize) -> Self {
        HermExpr {
            n,
            coords: vec![LinExpr::zero(); n * n],
        }
    }

    pub fn add_scaled(&mut self, other: &HermExpr, alpha: f64) {
        assert_eq!(self.n, other.n, "expression dimension mismatch");
        for (a, b) in self.coords.iter_mut().zip(&other.coords) {
            a.add_scaled(b, alpha);
        }
    }

    pub fn plus(mut self, other: &HermExpr) -> Self {
        self.add_scaled(other, 1.0);
        self
    }

    pub fn minus(mut self, other: &HermExpr) -> Self {
        self.add_scaled(other, -1.0);
        self
    }

    pub fn scaled(self, alpha: f64) -> Self {
        HermExpr {
            n: self.n,
            coords: self.coords.into_iter().map(|c| c.scaled(alpha)).collect(),
        }
    }

    /// `self + alpha * var` where `var` is a scalar expression multiplying
    /// a constant matrix `m`.
    pub fn add_matrix_times(&mut self, m: &HermitianMatrix, scalar: &LinExpr) {
        assert_eq!(self.n, m.dim(), "expression dimension mismatch");
        for (c, v) in self.coords.iter_mut().zip(m.to_hvec()) {
            c.add_scaled(scalar, v);
        }
    }

    /// `Re Z_ij`.
    pub fn re(&self, i: usize, j: usize) -> LinExpr {
        if i == j {
            self.coords[hvec_offset(self.n, i, i)].clone()
        } else {
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            self.coords[hvec_offset(self.n, a, b)].clone().scaled(FRAC_1_SQRT_2)
        }
    }

    /// `Im Z_ij`.
    pub fn im(&self, i: usize, j: usize) -> LinExpr {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => LinExpr::zero(),
            std::cmp::Ordering::Less => {
                self.coords[hvec_offset(self.n, i, j) + 1].clone().scaled(FRAC_1_SQRT_2)
            }
            std::cmp::Ordering::Greater => {
                self.coords[hvec_offset(self.n, j, i) + 1].clone().scaled(-FRAC_1_SQRT_2)
            }
        }
    }

    pub fn trace(&self) -> LinExpr {
        let mut out = LinExpr::zero();
        for i in 0..self.n {
            out.add_scaled(&self.coords[hvec_offset(self.n, i, i)], 1.0);
        }
        out
    }

    /// `<m, self>`.
    pub fn inner(&self, m: &HermitianMatrix) -> LinExpr {
        let mut out = LinExpr::zero();
        for (c, v) in self.coords.iter().zip(m.to_hvec()) {
            out.add_scaled(c, v);
        }
        out
    }

    /// Applies a real-linear map on Hermitian matrices. The map is probed
    /// on the coordinate basis, so it must be linear.
    pub fn map(&self, out_n: usize, f: impl Fn(&HermitianMatrix) -> HermitianMatrix) -> HermExpr {
        let nn = self.n * self.n;
        let mut out = HermExpr::zeros(out_n);
        let mut e = vec![0.0; nn];
        for j in 0..nn {
            if self.coords[j].terms.is_empty() && self.coords[j].constant == 0.0 {
                continue;
            }
            e[j] = 1.0;
            let img = f(&HermitianMatrix::from_hvec(self.n, &e).expect("basis size"));
            e[j] = 0.0;
            assert_eq!(img.dim(), out_n, "linear map output dimension");
            for (k, v) in img.to_hvec().into_iter().enumerate() {
                if v.abs() > 1e-15 {
                    out.coords[k].add_scaled(&self.coords[j], v);
                }
            }
        }
        out.compact();
        out
    }

    pub fn compact(&mut self) {
        self.coords.iter_mut().for_each(LinExpr::compact);
    }

    pub fn eval(&self, x: &[f64]) -> HermitianMatrix {
        let v: Vec<f64> = self.coords.iter().map(|c| c.eval(x)).collect();
        HermitianMatrix::from_hvec(self.n, &v).expect("coordinate count")
    }
}

/// Incremental builder for [`ConicProgram`].
#[derive(Clone, Debug, Default)]
pub struct ProgramBuilder {
    lower: Vec<f64>,
    upper: Vec<f64>,
    objective: LinExpr,
    blocks: Vec<(Cone, Vec<LinExpr>)>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn add_var(&mut self, lo: f64, hi: f64) -> usize {
        self.lower.push(lo);
        self.upper.push(hi);
        self.lower.len() - 1
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lower[j] = lo;
        self.upper[j] = hi;
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    /// Hermitian variable with unbounded coordinates.
    pub fn add_herm_var(&mut self, n: usize) -> HermVar {
        let offset = self.n_vars();
        for _ in 0..n * n {
            self.add_var(f64::NEG_INFINITY, f64::INFINITY);
        }
        HermVar { offset, n }
    }

    /// Hermitian variable whose coordinates carry the box implied by
    /// `Z ⪰ 0, tr Z = 1`: diagonal in `[0, 1]`, real and imaginary parts of
    /// off-diagonal entries in `[-1, 1]`.
    pub fn add_density_var(&mut self, n: usize) -> HermVar {
        let v = self.add_herm_var(n);
        for i in 0..n {
            self.set_bounds(v.re_var(i, i), 0.0, 1.0);
            for j in (i + 1)..n {
                self.set_bounds(v.re_var(i, j), -SQRT_2, SQRT_2);
                self.set_bounds(v.im_var(i, j), -SQRT_2, SQRT_2);
            }
        }
        v
    }

    pub fn minimize(&mut self, objective: LinExpr) {
        self.objective = objective;
    }

    pub fn zero(&mut self, e: LinExpr) {
        self.push_scalar(Cone::Zero(1), e);
    }

    pub fn nonneg(&mut self, e: LinExpr) {
        self.push_scalar(Cone::Nonneg(1), e);
    }

    fn push_scalar(&mut self, cone: Cone, e: LinExpr) {
        match (self.blocks.last_mut(), cone) {
            (Some((Cone::Zero(k), rows)), Cone::Zero(_))
            | (Some((Cone::Nonneg(k), rows)), Cone::Nonneg(_)) => {
                *k += 1;
                rows.push(e);
            }
            _ => self.blocks.push((cone, vec![e])),
        }
    }

    /// Entrywise `e = 0`.
    pub fn zero_herm(&mut self, e: &HermExpr) {
        for c in &e.coords {
            if !c.terms.is_empty() || c.constant != 0.0 {
                self.zero(c.clone());
            }
        }
    }

    /// `e ⪰ 0`.
    pub fn psd(&mut self, e: &HermExpr) {
        if e.n == 1 {
            self.nonneg(e.coords[0].clone());
        } else {
            self.blocks.push((Cone::Psd(e.n), e.coords.clone()));
        }
    }

    /// `x_j` within `[lo, hi]` as explicit rows.
    pub fn enforce_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        if lo.is_finite() {
            self.nonneg(LinExpr::var(j).plus_constant(-lo));
        }
        if hi.is_finite() {
            self.nonneg(LinExpr::term(j, -1.0).plus_constant(hi));
        }
    }

    pub fn build(self) -> ConicProgram {
        let n = self.lower.len();
        let mut objective = vec![0.0; n];
        let mut obj = self.objective;
        obj.compact();
        for (j, c) in obj.terms {
            objective[j] += c;
        }
        let mut constraints = CsrMatrix::new(n);
        let mut constants = Vec::new();
        let mut cones = Vec::with_capacity(self.blocks.len());
        for (cone, rows) in self.blocks {
            for mut r in rows {
                r.compact();
                constraints.push_row(r.terms.iter().copied());
                constants.push(r.constant);
            }
            cones.push(cone);
        }
        ConicProgram {
            n_vars: n,
            objective,
            objective_constant: obj.constant,
            constraints,
            constants,
            cones,
            lower: self.lower,
            upper: self.upper,
        }
    }
}
