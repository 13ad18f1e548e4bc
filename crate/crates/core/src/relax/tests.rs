use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::conic::{lower_bound_certificate, solve_sdp, AdmmSettings, SolveStatus};
use crate::states::{ghz_state, noise_interpolate};
use crate::tensor::{kron, kron_all, partial_trace, partial_transpose, eigenvalues, C64};

fn random_density(n: usize, rank: usize, rng: &mut ChaCha8Rng) -> HermitianMatrix {
    let mut m = HermitianMatrix::zeros(n);
    for _ in 0..rank {
        let v: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        m = m.add(&HermitianMatrix::outer(&v));
    }
    m.scale(1.0 / m.trace())
}

/// Program point for a product assignment of every node and extension.
fn product_point(rel: &Relaxation, nodes: &[HermitianMatrix], level: usize) -> Vec<f64> {
    let mut x = vec![0.0; rel.program.n_vars];
    for (k, v) in rel.vars.vars.iter().enumerate() {
        if let Some(v) = v {
            x[v.offset..v.offset + v.n * v.n].copy_from_slice(&nodes[k].to_hvec());
        }
    }
    let internal: Vec<(usize, (usize, usize))> = rel.tree.internal().collect();
    assert_eq!(rel.vars.extensions.len(), if level > 1 { internal.len() } else { 0 });
    for (ext, (_, (ka, kb))) in rel.vars.extensions.iter().zip(&internal) {
        let mut factors = vec![nodes[*ka].clone()];
        factors.extend(std::iter::repeat_n(nodes[*kb].clone(), level));
        let e = kron_all(factors.iter());
        x[ext.offset..ext.offset + ext.n * ext.n].copy_from_slice(&e.to_hvec());
    }
    x
}

#[test]
fn tree_shapes() {
    let t = DdpsTree::balanced(&Dims::qubits(4));
    assert_eq!(t.n_internal(), 3);
    assert_eq!(t.nodes[t.root].dim, 16);
    let (a, b) = t.nodes[t.root].children.unwrap();
    assert_eq!((t.nodes[a].range, t.nodes[b].range), ((0, 2), (2, 4)));

    let p = DdpsTree::path(&Dims::qubits(4));
    assert_eq!(p.n_internal(), 3);
    for (_, (_, kb)) in p.internal() {
        assert!(p.nodes[kb].is_leaf());
    }
    let t3 = DdpsTree::balanced(&Dims::new(vec![2, 3, 2]).unwrap());
    let (a, _) = t3.nodes[t3.root].children.unwrap();
    assert_eq!(t3.nodes[a].dim, 6);
}

#[test]
fn product_states_satisfy_every_builder() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let shapes = [
        (Dims::qubits(2), TreeShape::Balanced, 1),
        (Dims::qubits(2), TreeShape::Balanced, 2),
        (Dims::new(vec![2, 3]).unwrap(), TreeShape::Balanced, 1),
        (Dims::qubits(3), TreeShape::Balanced, 1),
        (Dims::qubits(3), TreeShape::Path, 2),
    ];
    for trial in 0..50 {
        let (dims, shape, level) = &shapes[trial % shapes.len()];
        let tree = DdpsTree::new(dims, *shape);
        let locals: Vec<HermitianMatrix> = dims
            .as_slice()
            .iter()
            .map(|&d| {
                // Bose-symmetric extensions of mixed states are not products.
                let rank = if *level > 1 { 1 } else { 1 + trial % d };
                random_density(d, rank, &mut rng)
            })
            .collect();
        let nodes = product_assignment(&tree, &locals);
        let chi = HermitianMatrix::identity(dims.total());
        let opts = RelaxOptions { level: *level, tree: *shape, ..RelaxOptions::default() };
        let rel = build_bss_relaxation(&chi, &tree, &EntryBounds::initial(&tree), &opts).unwrap();
        let x = product_point(&rel, &nodes, *level);
        let viol = rel.program.primal_infeasibility(&x);
        assert!(viol < 1e-9, "trial {trial}: violation {viol}");
        for j in 0..x.len() {
            assert!(x[j] >= rel.program.lower[j] - 1e-12 && x[j] <= rel.program.upper[j] + 1e-12);
        }

        // Boxes shrunk around the point keep it feasible.
        let mut bounds = EntryBounds::initial(&tree);
        for (k, nb) in bounds.nodes.iter_mut().enumerate() {
            let z = nodes[k].get(0, 0).re;
            nb.set(0, 0, EntryBox { u: (z - 0.01, z + 0.01), v: (0.0, 0.0) });
            nb.propagate();
        }
        let rel = build_bss_relaxation(&chi, &tree, &bounds, &opts).unwrap();
        let x = product_point(&rel, &nodes, *level);
        assert!(rel.program.primal_infeasibility(&x) < 1e-9);
    }
}

#[test]
fn aggregated_rows_hold_at_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tree = DdpsTree::balanced(&Dims::qubits(3));
    let bounds = EntryBounds::initial(&tree);
    for _ in 0..20 {
        let locals: Vec<HermitianMatrix> = (0..3).map(|_| random_density(2, 2, &mut rng)).collect();
        let nodes = product_assignment(&tree, &locals);
        for (k, _) in tree.internal() {
            let n = tree.nodes[k].dim;
            for i in 0..n {
                for j in 0..n {
                    let (ba, bb) = entry_boxes(&tree, &bounds, k, i, j);
                    let e = entry_values(&tree, &nodes, k, i, j);
                    for r in aggregated_mccormick(&ba, &bb, true) {
                        assert!(r.slack(&e) >= -1e-12);
                    }
                }
            }
        }
    }
}

/// Random triple with consistent marginals, mixed toward the product of its
/// marginals until the tensor McCormick inequalities hold.
fn tensor_mccormick_triple(da: usize, db: usize, rng: &mut ChaCha8Rng) -> [HermitianMatrix; 3] {
    let dims = Dims::new(vec![da, db]).unwrap();
    let zk0 = random_density(da * db, 1 + rng.random_range(0..da * db), rng);
    let za = partial_trace(&zk0, &dims, &BTreeSet::from([1])).unwrap();
    let zb = partial_trace(&zk0, &dims, &BTreeSet::from([0])).unwrap();
    let prod = kron(&za, &zb);
    let mut t = 0.0;
    loop {
        let zk = zk0.scale(1.0 - t).add(&prod.scale(t));
        if tensor_mccormick_violation(&za, &zb, &zk).iter().all(|&v| v <= 0.0) {
            return [za, zb, zk];
        }
        t += 0.02;
        assert!(t <= 1.0 + 1e-9);
    }
}

#[test]
fn tensor_mccormick_implies_aggregated() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tree = DdpsTree::balanced(&Dims::qubits(2));
    let bounds = EntryBounds::initial(&tree);
    let mut non_product = 0;
    for _ in 0..100 {
        let [za, zb, zk] = tensor_mccormick_triple(2, 2, &mut rng);
        if zk.sub(&kron(&za, &zb)).frobenius_norm() > 1e-3 {
            non_product += 1;
        }
        let nodes = vec![za, zb, zk];
        for i in 0..4 {
            for j in 0..4 {
                let (ba, bb) = entry_boxes(&tree, &bounds, 2, i, j);
                let e = entry_values(&tree, &nodes, 2, i, j);
                for r in aggregated_mccormick(&ba, &bb, true) {
                    assert!(r.slack(&e) >= -1e-10, "slack {}", r.slack(&e));
                }
            }
        }
    }
    assert!(non_product > 50, "{non_product}");
}

#[test]
fn ppt_is_exact_on_two_qubits() {
    let inst = ghz_state(2).unwrap();
    let rel = build_bipartite_dps(&inst, 1, 1, 4096).unwrap();
    let sol = solve_sdp(&rel.program, &AdmmSettings::default(), None);
    assert_eq!(sol.status, SolveStatus::Optimal);
    let lb = lower_bound_certificate(&rel.program, &sol.dual);
    assert!((lb - 2.0 / 3.0).abs() < 1e-4, "{lb}");
    assert!(lb <= sol.objective + 1e-9);
}

#[test]
fn bell_state_at_half_noise_is_cut() {
    let inst = ghz_state(2).unwrap();
    let rho = noise_interpolate(&inst, 0.5);
    let pt = partial_transpose(&rho, &inst.dims, &BTreeSet::from([1])).unwrap();
    assert!(eigenvalues(&pt)[0] < 0.0);
    let tree = DdpsTree::balanced(&inst.dims);
    let mut b = ProgramBuilder::new();
    build_ddps(&mut b, &tree, 1, Some(HermExpr::constant(&rho)), 4096).unwrap();
    let p = b.build();
    let sol = solve_sdp(&p, &AdmmSettings::default(), None);
    assert_eq!(sol.status, SolveStatus::Infeasible);
}

#[test]
fn level_two_is_at_least_level_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let w: Vec<C64> = (0..4)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let phi = HermitianMatrix::outer(&w);
        let phi = phi.scale(1.0 / phi.trace());
        let inst = ThresholdInstance::new("rand", phi, Dims::qubits(2)).unwrap();
        let solve = |l| {
            let rel = build_bipartite_dps(&inst, 1, l, 4096).unwrap();
            let sol = solve_sdp(&rel.program, &AdmmSettings::default(), None);
            lower_bound_certificate(&rel.program, &sol.dual)
        };
        let (l1, l2) = (solve(1), solve(2));
        assert!(l2 >= l1 - 1e-5, "{l2} < {l1}");
    }
}

#[test]
fn path_and_recursive_agree() {
    let inst = crate::states::dicke_state(3, 1).unwrap();
    let mut values = Vec::new();
    for shape in [TreeShape::Path, TreeShape::Balanced] {
        let opts = RelaxOptions { tree: shape, tensor_mccormick: false, aggregated_mccormick: false, ..RelaxOptions::default() };
        let rel = build_ddps_plus(&inst, &opts).unwrap();
        let sol = solve_sdp(&rel.program, &AdmmSettings::default(), None);
        values.push(sol.objective);
    }
    let mut b = ProgramBuilder::new();
    let z = b.add_var(0.0, 1.0);
    b.enforce_bounds(z, 0.0, 1.0);
    b.minimize(LinExpr::var(z));
    let mut root = HermExpr::constant(&inst.phi);
    root.add_matrix_times(&inst.noise_direction(), &LinExpr::var(z));
    build_recursive_dps(&mut b, &inst.dims, 1, Some(root), 4096).unwrap();
    let sol = solve_sdp(&b.build(), &AdmmSettings::default(), None);
    values.push(sol.objective);
    assert!((values[0] - values[2]).abs() < 1e-6, "{values:?}");
    assert!((values[0] - values[1]).abs() < 1e-6, "{values:?}");
    assert!(values[0] <= 0.7905);
}

#[test]
fn ddps_bound_is_below_ghz_threshold() {
    let inst = ghz_state(3).unwrap();
    let opts = RelaxOptions { tensor_mccormick: false, aggregated_mccormick: false, ..RelaxOptions::default() };
    let rel = build_ddps_plus(&inst, &opts).unwrap();
    let sol = solve_sdp(&rel.program, &AdmmSettings::default(), None);
    let lb = lower_bound_certificate(&rel.program, &sol.dual);
    assert!(lb <= crate::states::ghz_threshold_exact(3) + 1e-6);
    assert!(lb > 0.5);
}

#[test]
fn rlt_expressions_reproduce_dps_block() {
    // PPT and projection from the generator agree with the block builder on
    // a concrete level-2 extension.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_density(2, 2, &mut rng);
    let bm = random_density(2, 2, &mut rng);
    let ext = kron_all([a.clone(), bm.clone(), bm.clone()].iter());
    let mut reg = LiftedRegistry::new();
    let ppt = tensor_rlt_generate(&rlt::dps_ppt_factors(2, 1), &mut reg);
    let proj = tensor_rlt_generate(&rlt::dps_projection_factors(2), &mut reg);
    let lifted: Vec<HermExpr> = reg
        .monomials
        .iter()
        .map(|mono| match mono.len() {
            3 => HermExpr::constant(&ext),
            _ => HermExpr::constant(&kron(&a, &bm)),
        })
        .collect();
    let dims3 = Dims::qubits(3);
    let want = partial_transpose(&ext, &dims3, &BTreeSet::from([1])).unwrap();
    assert!(ppt.to_expr(&lifted, &|_| 2).eval(&[]).sub(&want).frobenius_norm() < 1e-12);
    assert!(proj.to_expr(&lifted, &|_| 2).eval(&[]).frobenius_norm() < 1e-12);
}
