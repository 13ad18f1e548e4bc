//! McCormick envelopes for real bilinear terms, their aggregation over the
//! complex entry products of `Z_k = Z_A ⊗ Z_B`, and the matrix (tensor)
//! McCormick inequalities.

use std::collections::HashSet;

use crate::conic::{HermExpr, LinExpr, ProgramBuilder};
use crate::tensor::{eigenvalues, kron, HermitianMatrix};

pub type Interval = (f64, f64);

/// `ca·a + cb·b + c0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine2 {
    pub ca: f64,
    pub cb: f64,
    pub c0: f64,
}

impl Affine2 {
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        self.ca * a + self.cb * b + self.c0
    }
}

/// The two under- and two over-estimators of `a·b` on a box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McCormick {
    pub under: [Affine2; 2],
    pub over: [Affine2; 2],
}

pub fn scalar_mccormick(a: Interval, b: Interval) -> McCormick {
    let (al, au) = a;
    let (bl, bu) = b;
    debug_assert!(al <= au && bl <= bu);
    McCormick {
        under: [
            Affine2 { ca: bu, cb: au, c0: -au * bu },
            Affine2 { ca: bl, cb: al, c0: -al * bl },
        ],
        over: [
            Affine2 { ca: bl, cb: au, c0: -au * bl },
            Affine2 { ca: bu, cb: al, c0: -al * bu },
        ],
    }
}

impl McCormick {
    /// Largest under-estimator value.
    pub fn lower(&self, a: f64, b: f64) -> f64 {
        self.under[0].eval(a, b).max(self.under[1].eval(a, b))
    }

    /// Smallest over-estimator value.
    pub fn upper(&self, a: f64, b: f64) -> f64 {
        self.over[0].eval(a, b).min(self.over[1].eval(a, b))
    }
}

/// Box for one complex entry `U + iV`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntryBox {
    pub u: Interval,
    pub v: Interval,
}

/// Values of the six reals tied by one entry relation
/// `μ + iν = (u_A + i v_A)(u_B + i v_B)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EntryValues {
    pub u_a: f64,
    pub v_a: f64,
    pub u_b: f64,
    pub v_b: f64,
    pub mu: f64,
    pub nu: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Target {
    Mu,
    Nu,
}

/// `target ≥ rhs` (lower) or `target ≤ rhs` with
/// `rhs = c·(u_A, v_A, u_B, v_B) + constant`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggregatedRow {
    pub target: Target,
    pub lower: bool,
    pub coef: [f64; 4],
    pub constant: f64,
}

impl AggregatedRow {
    pub fn rhs(&self, e: &EntryValues) -> f64 {
        self.coef[0] * e.u_a + self.coef[1] * e.v_a + self.coef[2] * e.u_b + self.coef[3] * e.v_b + self.constant
    }

    /// Nonnegative iff the row holds.
    pub fn slack(&self, e: &EntryValues) -> f64 {
        let t = match self.target {
            Target::Mu => e.mu,
            Target::Nu => e.nu,
        };
        if self.lower {
            t - self.rhs(e)
        } else {
            self.rhs(e) - t
        }
    }

    /// `slack` as an expression over the given entry expressions.
    pub fn slack_expr(&self, e: &EntryExprs) -> LinExpr {
        let mut rhs = LinExpr::constant(self.constant);
        rhs.add_scaled(&e.u_a, self.coef[0]);
        rhs.add_scaled(&e.v_a, self.coef[1]);
        rhs.add_scaled(&e.u_b, self.coef[2]);
        rhs.add_scaled(&e.v_b, self.coef[3]);
        let t = match self.target {
            Target::Mu => &e.mu,
            Target::Nu => &e.nu,
        };
        let mut out = if self.lower { t.clone().minus(&rhs) } else { rhs.minus(t) };
        out.compact();
        out
    }
}

/// Program expressions for the six reals of one entry relation.
#[derive(Clone, Debug)]
pub struct EntryExprs {
    pub u_a: LinExpr,
    pub v_a: LinExpr,
    pub u_b: LinExpr,
    pub v_b: LinExpr,
    pub mu: LinExpr,
    pub nu: LinExpr,
}

/// `coef` slots: 0 = u_A, 1 = v_A, 2 = u_B, 3 = v_B.
fn place(est: &Affine2, sa: usize, sb: usize, sign: f64, coef: &mut [f64; 4]) -> f64 {
    coef[sa] += sign * est.ca;
    coef[sb] += sign * est.cb;
    sign * est.c0
}

/// Aggregated McCormick rows for one entry relation:
/// `μ ≥ under(u_A u_B) − over(v_A v_B)`, `μ ≤ over(u_A u_B) − under(v_A v_B)`,
/// `ν ≥ under(u_A v_B) + under(v_A u_B)`, `ν ≤ over(u_A v_B) + over(v_A u_B)`.
/// Rows are deduplicated; `with_nu = false` drops the `ν` rows.
pub fn aggregated_mccormick(a: &EntryBox, b: &EntryBox, with_nu: bool) -> Vec<AggregatedRow> {
    let uu = scalar_mccormick(a.u, b.u);
    let vv = scalar_mccormick(a.v, b.v);
    let uv = scalar_mccormick(a.u, b.v);
    let vu = scalar_mccormick(a.v, b.u);
    let mut rows = Vec::with_capacity(16);
    for p in 0..2 {
        for q in 0..2 {
            let mut c = [0.0; 4];
            let k = place(&uu.under[p], 0, 2, 1.0, &mut c) + place(&vv.over[q], 1, 3, -1.0, &mut c);
            rows.push(AggregatedRow { target: Target::Mu, lower: true, coef: c, constant: k });
            let mut c = [0.0; 4];
            let k = place(&uu.over[p], 0, 2, 1.0, &mut c) + place(&vv.under[q], 1, 3, -1.0, &mut c);
            rows.push(AggregatedRow { target: Target::Mu, lower: false, coef: c, constant: k });
            if with_nu {
                let mut c = [0.0; 4];
                let k = place(&uv.under[p], 0, 3, 1.0, &mut c) + place(&vu.under[q], 1, 2, 1.0, &mut c);
                rows.push(AggregatedRow { target: Target::Nu, lower: true, coef: c, constant: k });
                let mut c = [0.0; 4];
                let k = place(&uv.over[p], 0, 3, 1.0, &mut c) + place(&vu.over[q], 1, 2, 1.0, &mut c);
                rows.push(AggregatedRow { target: Target::Nu, lower: false, coef: c, constant: k });
            }
        }
    }
    let mut seen = HashSet::new();
    rows.retain(|r| {
        let key = (
            r.target,
            r.lower,
            r.coef.map(|x| (x + 0.0).to_bits()),
            (r.constant + 0.0).to_bits(),
        );
        seen.insert(key)
    });
    rows
}

/// Per-node entry boxes for the real and imaginary parts.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeBounds {
    pub n: usize,
    u: Vec<Interval>,
    v: Vec<Interval>,
}

impl NodeBounds {
    /// Boxes implied by `Z ⪰ 0, tr Z = 1`.
    pub fn density(n: usize) -> Self {
        let mut u = vec![(-1.0, 1.0); n * n];
        let mut v = vec![(-1.0, 1.0); n * n];
        for i in 0..n {
            u[i * n + i] = (0.0, 1.0);
            v[i * n + i] = (0.0, 0.0);
        }
        NodeBounds { n, u, v }
    }

    pub fn get(&self, i: usize, j: usize) -> EntryBox {
        EntryBox {
            u: self.u[i * self.n + j],
            v: self.v[i * self.n + j],
        }
    }

    /// Sets the box of entry `(i, j)`; the mirrored entry gets the
    /// conjugate box.
    pub fn set(&mut self, i: usize, j: usize, b: EntryBox) {
        let n = self.n;
        self.u[i * n + j] = b.u;
        self.u[j * n + i] = b.u;
        if i == j {
            self.v[i * n + i] = (0.0, 0.0);
        } else {
            self.v[i * n + j] = b.v;
            self.v[j * n + i] = (-b.v.1, -b.v.0);
        }
    }

    /// Tightens boxes with the 2×2 principal-submatrix bounds
    /// `-(Z_ii+Z_jj)/2 ≤ U_ij, V_ij ≤ (2-(Z_ii+Z_jj))/2` and the diagonal
    /// trace bound `Z_ii ≤ 1 - Σ_{j≠i} lo(Z_jj)`.
    pub fn propagate(&mut self) {
        let n = self.n;
        let lo_sum: f64 = (0..n).map(|i| self.u[i * n + i].0).sum();
        for i in 0..n {
            let (lo, hi) = self.u[i * n + i];
            let cap = 1.0 - (lo_sum - lo);
            self.u[i * n + i] = (lo, hi.min(cap));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (li, hi_i) = self.u[i * n + i];
                let (lj, hi_j) = self.u[j * n + j];
                let lo = -(hi_i + hi_j) / 2.0;
                let hi = (2.0 - (li + lj)) / 2.0;
                let mut b = self.get(i, j);
                b.u = (b.u.0.max(lo), b.u.1.min(hi));
                b.v = (b.v.0.max(lo), b.v.1.min(hi));
                self.set(i, j, b);
            }
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.u.iter().chain(&self.v).all(|&(lo, hi)| lo <= hi + 1e-12)
    }

    /// Entries whose box is strictly tighter than the density box.
    pub fn tightened(&self) -> Vec<(usize, usize)> {
        let base = NodeBounds::density(self.n);
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i..self.n {
                if self.get(i, j) != base.get(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Emits `Z_k ⪯ Id ⊗ Z_B`, `Z_k ⪯ Z_A ⊗ Id`, and
/// `Z_k ⪰ Id ⊗ Z_B + Z_A ⊗ Id − Id`.
pub fn tensor_mccormick(b: &mut ProgramBuilder, za: &HermExpr, zb: &HermExpr, zk: &HermExpr) {
    let (na, nb) = (za.n, zb.n);
    let n = na * nb;
    assert_eq!(zk.n, n, "tensor McCormick dimension mismatch");
    let id_a = HermitianMatrix::identity(na);
    let id_b = HermitianMatrix::identity(nb);
    let id_zb = zb.map(n, |m| kron(&id_a, m));
    let za_id = za.map(n, |m| kron(m, &id_b));
    b.psd(&id_zb.clone().minus(zk));
    b.psd(&za_id.clone().minus(zk));
    let mut third = zk.clone().minus(&id_zb).minus(&za_id);
    third.add_matrix_times(&HermitianMatrix::identity(n), &LinExpr::constant(1.0));
    third.compact();
    b.psd(&third);
}

/// Largest violation of each tensor McCormick inequality, measured as the
/// negated minimum eigenvalue of the matrix that should be PSD.
pub fn tensor_mccormick_violation(
    za: &HermitianMatrix,
    zb: &HermitianMatrix,
    zk: &HermitianMatrix,
) -> [f64; 3] {
    let id_a = HermitianMatrix::identity(za.dim());
    let id_b = HermitianMatrix::identity(zb.dim());
    let id_zb = kron(&id_a, zb);
    let za_id = kron(za, &id_b);
    let n = zk.dim();
    let m1 = id_zb.sub(zk);
    let m2 = za_id.sub(zk);
    let m3 = zk.sub(&id_zb).sub(&za_id).add(&HermitianMatrix::identity(n));
    [m1, m2, m3].map(|m| -eigenvalues(&m)[0])
}
