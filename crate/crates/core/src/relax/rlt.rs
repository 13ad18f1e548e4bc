//! Tensor RLT: products of matrix factor constraints, expanded into tensor
//! monomials, rewritten as partial traces and transposes of base
//! monomials, and linearized with one lifted variable per base monomial.

use std::collections::{BTreeMap, BTreeSet};

use crate::conic::HermExpr;
use crate::tensor::{kron_all, partial_trace, partial_transpose, Dims, HermitianMatrix};

/// Symbol of the base alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Base {
    Z(usize),
    Id(usize),
}

impl Base {
    pub fn var(&self) -> usize {
        match *self {
            Base::Z(k) | Base::Id(k) => k,
        }
    }
}

/// Factor constraints; each is PSD (or zero, for the trace factors) on
/// density matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Factor {
    Z(usize),
    IdMinusZ(usize),
    ZT(usize),
    IdMinusZT(usize),
    TraceMinusOne(usize),
    TraceTMinusOne(usize),
}

impl Factor {
    fn is_trace(&self) -> bool {
        matches!(self, Factor::TraceMinusOne(_) | Factor::TraceTMinusOne(_))
    }

    /// Expansion into `(coef, symbol)` with `None` standing for the scalar 1.
    fn expand(&self) -> Vec<(f64, Option<Ext>)> {
        match *self {
            Factor::Z(k) => vec![(1.0, Some(Ext::Z(k)))],
            Factor::IdMinusZ(k) => vec![(1.0, Some(Ext::Id(k))), (-1.0, Some(Ext::Z(k)))],
            Factor::ZT(k) => vec![(1.0, Some(Ext::ZT(k)))],
            Factor::IdMinusZT(k) => vec![(1.0, Some(Ext::Id(k))), (-1.0, Some(Ext::ZT(k)))],
            Factor::TraceMinusOne(k) => vec![(1.0, Some(Ext::Tr(k))), (-1.0, None)],
            Factor::TraceTMinusOne(k) => vec![(1.0, Some(Ext::TrT(k))), (-1.0, None)],
        }
    }

    /// Value of the factor at the given variable assignment.
    pub fn eval(&self, assign: &dyn Fn(usize) -> HermitianMatrix) -> HermitianMatrix {
        match *self {
            Factor::Z(k) => assign(k),
            Factor::IdMinusZ(k) => {
                let m = assign(k);
                HermitianMatrix::identity(m.dim()).sub(&m)
            }
            Factor::ZT(k) => assign(k).transpose(),
            Factor::IdMinusZT(k) => {
                let m = assign(k).transpose();
                HermitianMatrix::identity(m.dim()).sub(&m)
            }
            Factor::TraceMinusOne(k) | Factor::TraceTMinusOne(k) => {
                HermitianMatrix::diag(&[assign(k).trace() - 1.0])
            }
        }
    }
}

/// Symbol of the extended alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ext {
    Z(usize),
    ZT(usize),
    Id(usize),
    Tr(usize),
    TrT(usize),
}

/// `coef · tr_{trace}(T_{transpose}(X_monomial))`; sets index positions in
/// the monomial.
#[derive(Clone, Debug, PartialEq)]
pub struct RltTerm {
    pub coef: f64,
    pub trace: BTreeSet<usize>,
    pub transpose: BTreeSet<usize>,
    pub monomial: Vec<Base>,
    pub lifted: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RltSense {
    Psd,
    Zero,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RltConstraint {
    pub sense: RltSense,
    pub terms: Vec<RltTerm>,
}

/// Lifted variables keyed by their base monomial.
#[derive(Clone, Debug, Default)]
pub struct LiftedRegistry {
    ids: BTreeMap<Vec<Base>, usize>,
    pub monomials: Vec<Vec<Base>>,
}

impl LiftedRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn id(&mut self, monomial: &[Base]) -> usize {
        if let Some(&k) = self.ids.get(monomial) {
            return k;
        }
        let k = self.monomials.len();
        self.monomials.push(monomial.to_vec());
        self.ids.insert(monomial.to_vec(), k);
        k
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }
}

/// Runs constraint-factor, product expansion, monomial rewriting and
/// linearization on `factors`.
pub fn tensor_rlt_generate(factors: &[Factor], reg: &mut LiftedRegistry) -> RltConstraint {
    let mut partial: Vec<(f64, Vec<Ext>)> = vec![(1.0, Vec::new())];
    for f in factors {
        let mut next = Vec::with_capacity(partial.len() * 2);
        for (c, mono) in &partial {
            for (a, sym) in f.expand() {
                let mut m = mono.clone();
                m.extend(sym);
                next.push((c * a, m));
            }
        }
        partial = next;
    }
    type Key = (Vec<Base>, BTreeSet<usize>, BTreeSet<usize>);
    let mut merged: Vec<(Key, f64)> = Vec::new();
    for (coef, mono) in partial {
        let mut base = Vec::with_capacity(mono.len());
        let mut trace = BTreeSet::new();
        let mut transpose = BTreeSet::new();
        for (p, s) in mono.iter().enumerate() {
            match *s {
                Ext::Z(k) => base.push(Base::Z(k)),
                Ext::Id(k) => base.push(Base::Id(k)),
                Ext::ZT(k) => {
                    base.push(Base::Z(k));
                    transpose.insert(p);
                }
                Ext::Tr(k) => {
                    base.push(Base::Z(k));
                    trace.insert(p);
                }
                Ext::TrT(k) => {
                    base.push(Base::Z(k));
                    trace.insert(p);
                    transpose.insert(p);
                }
            }
        }
        let key = (base, trace, transpose);
        match merged.iter_mut().find(|(k, _)| *k == key) {
            Some((_, c)) => *c += coef,
            None => merged.push((key, coef)),
        }
    }
    let terms = merged
        .into_iter()
        .filter(|(_, c)| *c != 0.0)
        .map(|((monomial, trace, transpose), coef)| RltTerm {
            coef,
            lifted: reg.id(&monomial),
            trace,
            transpose,
            monomial,
        })
        .collect();
    let sense = if factors.iter().any(Factor::is_trace) {
        RltSense::Zero
    } else {
        RltSense::Psd
    };
    RltConstraint { sense, terms }
}

fn monomial_dims(monomial: &[Base], dim_of: &dyn Fn(usize) -> usize) -> Option<Dims> {
    if monomial.is_empty() {
        return None;
    }
    Some(Dims::new(monomial.iter().map(|b| dim_of(b.var())).collect()).expect("positive dims"))
}

fn apply_term(term: &RltTerm, x: &HermitianMatrix, dim_of: &dyn Fn(usize) -> usize) -> HermitianMatrix {
    match monomial_dims(&term.monomial, dim_of) {
        None => x.clone(),
        Some(dims) => {
            let t = partial_transpose(x, &dims, &term.transpose).expect("dims");
            if term.trace.is_empty() {
                t
            } else {
                partial_trace(&t, &dims, &term.trace).expect("dims")
            }
        }
    }
}

impl RltConstraint {
    /// Evaluates the linearized constraint with every lifted variable set
    /// to the product its monomial stands for.
    pub fn evaluate_at_products(&self, assign: &dyn Fn(usize) -> HermitianMatrix) -> HermitianMatrix {
        let dim_of = |k: usize| assign(k).dim();
        let mut out: Option<HermitianMatrix> = None;
        for t in &self.terms {
            let factors: Vec<HermitianMatrix> = t
                .monomial
                .iter()
                .map(|b| match *b {
                    Base::Z(k) => assign(k),
                    Base::Id(k) => HermitianMatrix::identity(dim_of(k)),
                })
                .collect();
            let x = if factors.is_empty() {
                HermitianMatrix::identity(1)
            } else {
                kron_all(factors.iter())
            };
            let v = apply_term(t, &x, &dim_of).scale(t.coef);
            out = Some(match out {
                None => v,
                Some(o) => o.add(&v),
            });
        }
        out.unwrap_or_else(|| HermitianMatrix::zeros(1))
    }

    /// Linearized constraint as an expression in the lifted variables.
    pub fn to_expr(&self, lifted: &[HermExpr], dim_of: &dyn Fn(usize) -> usize) -> HermExpr {
        let mut out: Option<HermExpr> = None;
        for t in &self.terms {
            let x = &lifted[t.lifted];
            let out_n = match monomial_dims(&t.monomial, dim_of) {
                None => 1,
                Some(d) => d.total() / t.trace.iter().map(|&p| d.get(p)).product::<usize>(),
            };
            let e = x.map(out_n, |m| apply_term(t, m, dim_of)).scaled(t.coef);
            out = Some(match out {
                None => e,
                Some(o) => o.plus(&e),
            });
        }
        out.unwrap_or_else(|| HermExpr::zeros(1))
    }
}

/// Factors whose RLT product is DPS positivity of `ρ_{AB_[ℓ]}` (`A` = 0,
/// `B` = 1).
pub fn dps_positivity_factors(level: usize) -> Vec<Factor> {
    let mut f = vec![Factor::Z(0)];
    f.extend(std::iter::repeat_n(Factor::Z(1), level));
    f
}

/// Factors whose RLT product is the partial-trace projection.
pub fn dps_projection_factors(level: usize) -> Vec<Factor> {
    let mut f = vec![Factor::Z(0), Factor::Z(1)];
    f.extend(std::iter::repeat_n(Factor::TraceMinusOne(1), level.saturating_sub(1)));
    f
}

/// Factors whose RLT product is PPT on the first `s` of `ℓ` copies.
pub fn dps_ppt_factors(level: usize, s: usize) -> Vec<Factor> {
    let mut f = vec![Factor::Z(0)];
    f.extend(std::iter::repeat_n(Factor::ZT(1), s));
    f.extend(std::iter::repeat_n(Factor::Z(1), level - s));
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::C64;
    use proptest::prelude::*;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn worked_example() {
        let mut reg = LiftedRegistry::new();
        let c = tensor_rlt_generate(
            &[Factor::Z(1), Factor::IdMinusZ(2), Factor::TraceTMinusOne(3)],
            &mut reg,
        );
        assert_eq!(c.sense, RltSense::Zero);
        assert_eq!(c.terms.len(), 4);
        let find = |mono: &[Base], tr: &[usize]| {
            c.terms
                .iter()
                .find(|t| t.monomial == mono && t.trace == set(tr))
                .map(|t| (t.coef, t.transpose.clone()))
                .unwrap()
        };
        use Base::*;
        assert_eq!(find(&[Z(1), Id(2), Z(3)], &[2]), (1.0, set(&[2])));
        assert_eq!(find(&[Z(1), Z(2), Z(3)], &[2]), (-1.0, set(&[2])));
        assert_eq!(find(&[Z(1), Id(2)], &[]), (-1.0, set(&[])));
        assert_eq!(find(&[Z(1), Z(2)], &[]), (1.0, set(&[])));
        assert_eq!(reg.len(), 4);
    }

    #[test]
    fn single_factor_is_positivity() {
        let mut reg = LiftedRegistry::new();
        let c = tensor_rlt_generate(&[Factor::Z(0)], &mut reg);
        assert_eq!(c.sense, RltSense::Psd);
        assert_eq!(c.terms.len(), 1);
        assert_eq!(c.terms[0].monomial, vec![Base::Z(0)]);
        assert!(c.terms[0].trace.is_empty() && c.terms[0].transpose.is_empty());
    }

    #[test]
    fn dps_reconstructions() {
        let mut reg = LiftedRegistry::new();
        let pos = tensor_rlt_generate(&dps_positivity_factors(2), &mut reg);
        assert_eq!(pos.sense, RltSense::Psd);
        assert_eq!(pos.terms.len(), 1);
        assert_eq!(pos.terms[0].monomial, vec![Base::Z(0), Base::Z(1), Base::Z(1)]);

        let proj = tensor_rlt_generate(&dps_projection_factors(2), &mut reg);
        assert_eq!(proj.sense, RltSense::Zero);
        assert_eq!(proj.terms.len(), 2);
        let full = proj.terms.iter().find(|t| t.monomial.len() == 3).unwrap();
        assert_eq!(full.trace, set(&[2]));
        assert_eq!(full.lifted, pos.terms[0].lifted);
        let short = proj.terms.iter().find(|t| t.monomial.len() == 2).unwrap();
        assert_eq!(short.coef, -1.0);

        let ppt = tensor_rlt_generate(&dps_ppt_factors(2, 1), &mut reg);
        assert_eq!(ppt.terms.len(), 1);
        assert_eq!(ppt.terms[0].transpose, set(&[1]));
        assert_eq!(ppt.terms[0].lifted, pos.terms[0].lifted);
    }

    fn random_herm(n: usize, seed: &[f64]) -> HermitianMatrix {
        HermitianMatrix::from_fn(n, |i, j| {
            let a = seed[(i * 7 + j * 3) % seed.len()];
            let b = seed[(i * 5 + j * 11 + 1) % seed.len()];
            if i == j {
                C64::new(a, 0.0)
            } else if i < j {
                C64::new(a, b)
            } else {
                C64::new(seed[(j * 7 + i * 3) % seed.len()], -seed[(j * 5 + i * 11 + 1) % seed.len()])
            }
        })
    }

    proptest! {
        #[test]
        fn linearization_matches_factor_product(
            seed in proptest::collection::vec(-1.0f64..1.0, 13),
            picks in proptest::collection::vec((0usize..6, 0usize..3), 1..4),
        ) {
            let mats = [random_herm(2, &seed), random_herm(3, &seed[3..]), random_herm(2, &seed[5..])];
            let assign = |k: usize| mats[k].clone();
            let factors: Vec<Factor> = picks.iter().map(|&(kind, k)| match kind {
                0 => Factor::Z(k),
                1 => Factor::IdMinusZ(k),
                2 => Factor::ZT(k),
                3 => Factor::IdMinusZT(k),
                4 => Factor::TraceMinusOne(k),
                _ => Factor::TraceTMinusOne(k),
            }).collect();
            let direct: Vec<HermitianMatrix> = factors.iter().map(|f| f.eval(&assign)).collect();
            let want = kron_all(direct.iter());
            let mut reg = LiftedRegistry::new();
            let c = tensor_rlt_generate(&factors, &mut reg);
            let got = c.evaluate_at_products(&assign);
            prop_assert_eq!(got.dim(), want.dim());
            prop_assert!(got.sub(&want).frobenius_norm() < 1e-10);
        }
    }

    #[test]
    fn expression_form_matches_evaluation() {
        let mats = [
            HermitianMatrix::diag(&[0.3, 0.7]),
            HermitianMatrix::from_fn(2, |i, j| match (i, j) {
                (0, 1) => C64::new(0.1, 0.2),
                (1, 0) => C64::new(0.1, -0.2),
                (0, 0) => C64::new(0.4, 0.0),
                _ => C64::new(0.6, 0.0),
            }),
        ];
        let mut reg = LiftedRegistry::new();
        let c = tensor_rlt_generate(&[Factor::Z(0), Factor::IdMinusZT(1), Factor::TraceMinusOne(1)], &mut reg);
        let lifted: Vec<HermExpr> = reg
            .monomials
            .iter()
            .map(|mono| {
                let fs: Vec<HermitianMatrix> = mono
                    .iter()
                    .map(|b| match *b {
                        Base::Z(k) => mats[k].clone(),
                        Base::Id(k) => HermitianMatrix::identity(mats[k].dim()),
                    })
                    .collect();
                HermExpr::constant(&kron_all(fs.iter()))
            })
            .collect();
        let e = c.to_expr(&lifted, &|_| 2);
        let got = e.eval(&[]);
        let want = c.evaluate_at_products(&|k| mats[k].clone());
        assert!(got.sub(&want).frobenius_norm() < 1e-12);
    }
}
