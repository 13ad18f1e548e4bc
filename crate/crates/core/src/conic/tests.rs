use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tensor::{eigenvalues, HermitianMatrix, C64};

fn random_hermitian(n: usize, rng: &mut impl Rng) -> HermitianMatrix {
    HermitianMatrix::from_fn(n, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

/// Minimizes `c'x` over `{x : G x <= h}` in at most three variables by
/// enumerating every vertex.
fn vertex_enumeration(c: &[f64], g: &[Vec<f64>], h: &[f64]) -> f64 {
    let n = c.len();
    let rows = g.len();
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; n];
    fn rec(
        start: usize,
        depth: usize,
        idx: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]),
        rows: usize,
    ) {
        if depth == idx.len() {
            f(idx);
            return;
        }
        for i in start..rows {
            idx[depth] = i;
            rec(i + 1, depth + 1, idx, f, rows);
        }
    }
    let mut visit = |sel: &[usize]| {
        let mut a: Vec<f64> = sel.iter().flat_map(|&i| g[i].clone()).collect();
        if !linalg::invert(&mut a, n) {
            return;
        }
        let x: Vec<f64> = (0..n)
            .map(|r| (0..n).map(|k| a[r * n + k] * h[sel[k]]).sum())
            .collect();
        let feasible = (0..rows).all(|i| dot(&g[i], &x) <= h[i] + 1e-9);
        if feasible {
            best = best.min(dot(c, &x));
        }
    };
    rec(0, 0, &mut idx, &mut visit, rows);
    best
}

#[test]
fn lp_single_bound() {
    let mut b = ProgramBuilder::new();
    let x = b.add_var(3.0, f64::INFINITY);
    b.nonneg(LinExpr::var(x).plus_constant(-3.0));
    b.minimize(LinExpr::var(x));
    let p = b.build();
    let s = solve_lp(&p, &LpSettings::default());
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.objective - 3.0).abs() < 1e-12);
    assert!((lower_bound_certificate(&p, &s.dual) - 3.0).abs() < 1e-12);
}

#[test]
fn lp_simplex_vertex() {
    let c = [0.3, -1.2, 2.5, 0.7];
    let mut b = ProgramBuilder::new();
    let xs: Vec<usize> = (0..4).map(|_| b.add_var(0.0, 1.0)).collect();
    let mut sum = LinExpr::constant(-1.0);
    let mut obj = LinExpr::zero();
    for (&x, &ci) in xs.iter().zip(&c) {
        b.nonneg(LinExpr::var(x));
        sum = sum.plus(&LinExpr::var(x));
        obj = obj.plus(&LinExpr::term(x, -ci));
    }
    b.zero(sum);
    b.minimize(obj);
    let p = b.build();
    let s = solve_lp(&p, &LpSettings::default());
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((-s.objective - 2.5).abs() < 1e-12);
    assert!(s.primal_residual <= 1e-9 && s.dual_residual <= 1e-9);
}

#[test]
fn lp_degenerate_duplicate_rows_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let n = 3;
        let mut g: Vec<Vec<f64>> = Vec::new();
        let mut h = Vec::new();
        for _ in 0..3 {
            let row: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let rhs = rng.random_range(0.5..2.0);
            g.push(row.clone());
            h.push(rhs);
            // Duplicate every row to force degenerate vertices.
            g.push(row);
            h.push(rhs);
        }
        for j in 0..n {
            let mut row = vec![0.0; n];
            row[j] = -1.0;
            g.push(row);
            h.push(0.0);
        }
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let oracle = vertex_enumeration(&c, &g, &h);

        let mut b = ProgramBuilder::new();
        let xs: Vec<usize> = (0..n).map(|_| b.add_var(f64::NEG_INFINITY, f64::INFINITY)).collect();
        for (row, rhs) in g.iter().zip(&h) {
            let mut e = LinExpr::constant(*rhs);
            for (j, &v) in row.iter().enumerate() {
                e = e.plus(&LinExpr::term(xs[j], -v));
            }
            b.nonneg(e);
        }
        b.minimize(LinExpr {
            terms: xs.iter().zip(&c).map(|(&x, &v)| (x, v)).collect(),
            constant: 0.0,
        });
        let p = b.build();
        let s = solve_lp(&p, &LpSettings::default());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - oracle).abs() < 1e-9, "{} vs {oracle}", s.objective);
        assert!(s.primal_residual <= 1e-7 && s.dual_residual <= 1e-7);
        assert!(s.gap() <= 1e-9);
    }
}

#[test]
fn lp_duplicate_equalities() {
    let mut b = ProgramBuilder::new();
    let x = b.add_var(0.0, 1.0);
    let y = b.add_var(0.0, 1.0);
    b.nonneg(LinExpr::var(x));
    b.nonneg(LinExpr::var(y));
    let sum = LinExpr::var(x).plus(&LinExpr::var(y)).plus_constant(-1.0);
    b.zero(sum.clone());
    b.zero(sum.scaled(2.0));
    b.minimize(LinExpr::var(x).plus(&LinExpr::term(y, 2.0)));
    let p = b.build();
    let s = solve_lp(&p, &LpSettings::default());
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.objective - 1.0).abs() < 1e-12);
    assert!(s.dual_residual < 1e-12);
}

#[test]
fn lp_infeasible_and_unbounded() {
    let mut b = ProgramBuilder::new();
    let x = b.add_var(0.0, f64::INFINITY);
    b.nonneg(LinExpr::var(x));
    b.zero(LinExpr::var(x).plus_constant(1.0));
    b.minimize(LinExpr::var(x));
    assert_eq!(solve_lp(&b.build(), &LpSettings::default()).status, SolveStatus::Infeasible);

    let mut b = ProgramBuilder::new();
    let x = b.add_var(0.0, f64::INFINITY);
    b.nonneg(LinExpr::var(x));
    b.minimize(LinExpr::term(x, -1.0));
    assert_eq!(solve_lp(&b.build(), &LpSettings::default()).status, SolveStatus::Unbounded);
}

fn min_trace_program() -> ConicProgram {
    let mut b = ProgramBuilder::new();
    let x = b.add_herm_var(3);
    for i in 0..3 {
        b.set_bounds(x.re_var(i, i), 0.0, f64::INFINITY);
    }
    b.psd(&x.expr());
    b.zero(x.re(0, 0).plus_constant(-1.0));
    b.minimize(x.expr().trace());
    b.build()
}

#[test]
fn sdp_min_trace() {
    let p = min_trace_program();
    let s = solve_sdp(&p, &AdmmSettings::default(), None);
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.objective - 1.0).abs() < 1e-6);
    assert!(s.primal_residual <= 1e-7 && s.dual_residual <= 1e-7);
}

fn spectral_program(c: &HermitianMatrix) -> (ConicProgram, HermVar) {
    let mut b = ProgramBuilder::new();
    let x = b.add_density_var(c.dim());
    b.psd(&x.expr());
    b.zero(x.expr().trace().plus_constant(-1.0));
    b.minimize(x.expr().inner(c));
    (b.build(), x)
}

#[test]
fn sdp_spectral_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for n in [2, 3, 4] {
        for _ in 0..5 {
            let c = random_hermitian(n, &mut rng);
            let (p, x) = spectral_program(&c);
            let s = solve_sdp(&p, &AdmmSettings::default(), None);
            assert_eq!(s.status, SolveStatus::Optimal);
            let lmin = eigenvalues(&c)[0];
            assert!((s.objective - lmin).abs() < 1e-5, "{} vs {lmin}", s.objective);
            let cert = lower_bound_certificate(&p, &s.dual);
            assert!(cert <= lmin + 1e-9 && cert > lmin - 1e-5);
            let xv = x.value(&s.x);
            assert!((xv.trace() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn sdp_warm_start_converges_faster() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let c = random_hermitian(4, &mut rng);
    let (p, _) = spectral_program(&c);
    let cold = solve_sdp(&p, &AdmmSettings::default(), None);
    let warm = solve_sdp(&p, &AdmmSettings::default(), Some(&cold));
    assert_eq!(warm.status, SolveStatus::Optimal);
    assert!(warm.iterations <= cold.iterations);
}

#[test]
fn sdp_detects_infeasibility() {
    let mut b = ProgramBuilder::new();
    let x = b.add_density_var(2);
    b.psd(&x.expr());
    b.zero(x.expr().trace().plus_constant(-1.0));
    b.zero(x.re(0, 0).plus_constant(-2.0));
    b.minimize(x.re(1, 1));
    let s = solve_sdp(&b.build(), &AdmmSettings::default(), None);
    assert_eq!(s.status, SolveStatus::Infeasible);
}

#[test]
fn certificate_is_valid_for_perturbed_duals() {
    let p = min_trace_program();
    let s = solve_sdp(&p, &AdmmSettings::default(), None);
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..50 {
        let noisy: Vec<f64> = s.dual.iter().map(|d| d + rng.random_range(-0.1..0.1)).collect();
        let lb = lower_bound_certificate(&p, &noisy);
        assert!(lb <= 1.0 + 1e-12);
    }
    let zero = vec![0.0; p.n_rows()];
    assert_eq!(lower_bound_certificate(&p, &zero), 0.0);

    // Unbounded variables with nonzero reduced cost make the bound vacuous.
    let mut b = ProgramBuilder::new();
    let x = b.add_var(0.0, f64::INFINITY);
    b.nonneg(LinExpr::var(x));
    b.nonneg(LinExpr::term(x, -1.0).plus_constant(2.0));
    b.minimize(LinExpr::term(x, -1.0));
    let q = b.build();
    assert_eq!(lower_bound_certificate(&q, &[0.0, 0.0]), f64::NEG_INFINITY);
    assert!((lower_bound_certificate(&q, &[0.0, 1.0]) + 2.0).abs() < 1e-15);
}

#[test]
fn certificate_below_feasible_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..5 {
        let c = random_hermitian(3, &mut rng);
        let (p, _) = spectral_program(&c);
        let s = solve_sdp(&p, &AdmmSettings::relaxed(), None);
        let lb = lower_bound_certificate(&p, &s.dual);
        for _ in 0..100 {
            // Random density matrix: normalized Gram matrix.
            let g = random_hermitian(3, &mut rng);
            let r = HermitianMatrix::symmetrize(g.as_cmatrix().matmul(g.as_cmatrix()));
            let rho = r.scale(1.0 / r.trace());
            assert!(lb <= rho.inner(&c) + 1e-12);
        }
    }
}

#[test]
fn lp_and_sdp_backends_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    for _ in 0..5 {
        let n = 4;
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut b = ProgramBuilder::new();
        let xs: Vec<usize> = (0..n).map(|_| b.add_var(0.0, 1.0)).collect();
        let mut sum = LinExpr::constant(-1.0);
        let mut cap = LinExpr::constant(0.6);
        for &x in &xs {
            b.nonneg(LinExpr::var(x));
            sum = sum.plus(&LinExpr::var(x));
        }
        cap = cap.minus(&LinExpr::var(xs[0])).minus(&LinExpr::var(xs[1]));
        b.zero(sum);
        b.nonneg(cap);
        b.minimize(LinExpr {
            terms: xs.iter().zip(&c).map(|(&x, &v)| (x, v)).collect(),
            constant: 0.0,
        });
        let p = b.build();
        let a = solve_lp(&p, &LpSettings::default());
        let s = solve_sdp(&p, &AdmmSettings::default(), None);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((a.objective - s.objective).abs() < 1e-5);
    }
}

#[test]
fn weak_duality_on_returned_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    for _ in 0..5 {
        let c = random_hermitian(3, &mut rng);
        let (p, _) = spectral_program(&c);
        let s = solve_sdp(&p, &AdmmSettings::default(), None);
        assert!(s.dual_objective <= s.objective + 1e-6);
    }
}

#[test]
fn text_dump_lists_cones_and_triplets() {
    let p = min_trace_program();
    let t = p.to_text();
    assert!(t.starts_with("vars 9 rows 10"));
    assert!(t.contains("cone psd 3"));
    assert!(t.contains("cone zero 1"));
    assert!(t.lines().any(|l| l.starts_with("C ")));
}

#[test]
fn herm_expr_linear_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    let mut b = ProgramBuilder::new();
    let v = b.add_herm_var(4);
    let x: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let val = v.value(&x);
    let dims = crate::tensor::Dims::qubits(2);
    let set: std::collections::BTreeSet<usize> = [1].into_iter().collect();
    let e = v
        .expr()
        .map(2, |m| crate::tensor::partial_trace(m, &dims, &set).unwrap());
    let expected = crate::tensor::partial_trace(&val, &dims, &set).unwrap();
    assert!(e.eval(&x).sub(&expected).frobenius_norm() < 1e-12);
    for i in 0..4 {
        for j in 0..4 {
            assert!((v.re(i, j).eval(&x) - val.get(i, j).re).abs() < 1e-12);
            assert!((v.im(i, j).eval(&x) - val.get(i, j).im).abs() < 1e-12);
        }
    }
    assert!((v.expr().trace().eval(&x) - val.trace()).abs() < 1e-12);
}
