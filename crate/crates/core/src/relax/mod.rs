//! Convex outer approximations of the separable cone and the relaxations
//! built from them.

pub mod dps;
pub mod mccormick;
pub mod rlt;

use std::f64::consts::SQRT_2;

pub use dps::{build_ddps, build_dps_block, build_recursive_dps, DdpsTree, DdpsVars, DpsConfig, TreeNode, TreeShape};
pub use mccormick::{
    aggregated_mccormick, scalar_mccormick, tensor_mccormick, tensor_mccormick_violation, AggregatedRow,
    EntryBox, EntryExprs, EntryValues, McCormick, NodeBounds, Target,
};
pub use rlt::{tensor_rlt_generate, Base, Factor, LiftedRegistry, RltConstraint, RltSense, RltTerm};

use crate::conic::{ConicProgram, HermExpr, LinExpr, ProgramBuilder};
use crate::error::{Error, Result};
use crate::states::ThresholdInstance;
use crate::tensor::{Dims, HermitianMatrix, DEFAULT_SIZE_CAP};

/// Entry boxes for every node of a tree.
#[derive(Clone, Debug, PartialEq)]
pub struct EntryBounds {
    pub nodes: Vec<NodeBounds>,
}

impl EntryBounds {
    pub fn initial(tree: &DdpsTree) -> Self {
        EntryBounds {
            nodes: tree.nodes.iter().map(|n| NodeBounds::density(n.dim)).collect(),
        }
    }

    pub fn propagate(&mut self) {
        self.nodes.iter_mut().for_each(NodeBounds::propagate);
    }

    pub fn is_consistent(&self) -> bool {
        self.nodes.iter().all(NodeBounds::is_consistent)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelaxOptions {
    pub level: usize,
    pub tree: TreeShape,
    pub tensor_mccormick: bool,
    pub aggregated_mccormick: bool,
    pub size_cap: usize,
    /// Emit interval rows for every entry of every non-root node, so that
    /// the row layout does not depend on the bounds.
    pub fixed_layout: bool,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions {
            level: 1,
            tree: TreeShape::Balanced,
            tensor_mccormick: true,
            aggregated_mccormick: true,
            size_cap: DEFAULT_SIZE_CAP,
            fixed_layout: false,
        }
    }
}

/// A built relaxation with handles to its node expressions.
#[derive(Clone, Debug)]
pub struct Relaxation {
    pub program: ConicProgram,
    pub tree: DdpsTree,
    pub vars: DdpsVars,
    /// Index of the threshold variable `z`, if any.
    pub z: Option<usize>,
}

impl Relaxation {
    pub fn node_value(&self, k: usize, x: &[f64]) -> HermitianMatrix {
        self.vars.nodes[k].eval(x)
    }
}

/// Expressions of the six reals in the relation between entry `(i, j)` of
/// node `k` and the entries of its children.
pub fn entry_exprs(tree: &DdpsTree, vars: &DdpsVars, k: usize, i: usize, j: usize) -> EntryExprs {
    let (ka, kb) = tree.nodes[k].children.expect("internal node");
    let db = tree.nodes[kb].dim;
    let (ia, ib) = (i / db, i % db);
    let (ja, jb) = (j / db, j % db);
    let (za, zb, zk) = (&vars.nodes[ka], &vars.nodes[kb], &vars.nodes[k]);
    EntryExprs {
        u_a: za.re(ia, ja),
        v_a: za.im(ia, ja),
        u_b: zb.re(ib, jb),
        v_b: zb.im(ib, jb),
        mu: zk.re(i, j),
        nu: zk.im(i, j),
    }
}

/// Children boxes of the relation for entry `(i, j)` of node `k`.
pub fn entry_boxes(tree: &DdpsTree, bounds: &EntryBounds, k: usize, i: usize, j: usize) -> (EntryBox, EntryBox) {
    let (ka, kb) = tree.nodes[k].children.expect("internal node");
    let db = tree.nodes[kb].dim;
    (
        bounds.nodes[ka].get(i / db, j / db),
        bounds.nodes[kb].get(i % db, j % db),
    )
}

/// DDPS system plus tensor and aggregated McCormick inequalities under
/// `bounds`. Boxes tighter than the density box are enforced as rows.
pub fn build_separable_relaxation(
    b: &mut ProgramBuilder,
    tree: &DdpsTree,
    root: Option<HermExpr>,
    bounds: &EntryBounds,
    opts: &RelaxOptions,
) -> Result<DdpsVars> {
    let vars = build_ddps(b, tree, opts.level, root, opts.size_cap)?;
    for (k, nb) in bounds.nodes.iter().enumerate() {
        let entries = if opts.fixed_layout && k != tree.root {
            (0..nb.n).flat_map(|i| (i..nb.n).map(move |j| (i, j))).collect()
        } else {
            nb.tightened()
        };
        for (i, j) in entries {
            let bx = nb.get(i, j);
            let e = &vars.nodes[k];
            enforce_interval(b, e.re(i, j), bx.u);
            if i != j {
                enforce_interval(b, e.im(i, j), bx.v);
            }
            if let Some(v) = vars.vars[k] {
                let s = if i == j { 1.0 } else { SQRT_2 };
                let (lo, hi) = b.bounds(v.re_var(i, j));
                b.set_bounds(v.re_var(i, j), lo.max(s * bx.u.0), hi.min(s * bx.u.1));
                if i != j {
                    let (lo, hi) = b.bounds(v.im_var(i, j));
                    b.set_bounds(v.im_var(i, j), lo.max(s * bx.v.0), hi.min(s * bx.v.1));
                }
            }
        }
    }
    for (k, (ka, kb)) in tree.internal() {
        if opts.tensor_mccormick {
            tensor_mccormick(b, &vars.nodes[ka], &vars.nodes[kb], &vars.nodes[k]);
        }
        if opts.aggregated_mccormick {
            let n = tree.nodes[k].dim;
            for i in 0..n {
                for j in i..n {
                    let (ba, bb) = entry_boxes(tree, bounds, k, i, j);
                    let ex = entry_exprs(tree, &vars, k, i, j);
                    for row in aggregated_mccormick(&ba, &bb, i != j) {
                        let s = row.slack_expr(&ex);
                        if !s.terms.is_empty() {
                            b.nonneg(s);
                        }
                    }
                }
            }
        }
    }
    Ok(vars)
}

fn enforce_interval(b: &mut ProgramBuilder, e: LinExpr, (lo, hi): (f64, f64)) {
    if e.terms.is_empty() {
        return;
    }
    b.nonneg(e.clone().plus_constant(-lo));
    b.nonneg(e.scaled(-1.0).plus_constant(hi));
}

/// `φ + z (Id/d̄ − φ)` as an expression in the program variable `z`.
fn threshold_root(inst: &ThresholdInstance, z: usize) -> HermExpr {
    let mut e = HermExpr::constant(&inst.phi);
    e.add_matrix_times(&inst.noise_direction(), &LinExpr::var(z));
    e.compact();
    e
}

fn threshold_var(b: &mut ProgramBuilder) -> usize {
    let z = b.add_var(0.0, 1.0);
    b.enforce_bounds(z, 0.0, 1.0);
    b.minimize(LinExpr::var(z));
    z
}

/// `min z` subject to `φ + z(Id/d̄ − φ)` lying in the DDPS + McCormick
/// outer approximation. Its value is a lower bound on the threshold.
pub fn build_ddps_plus(inst: &ThresholdInstance, opts: &RelaxOptions) -> Result<Relaxation> {
    if inst.m() < 2 {
        return Err(Error::InvalidArgument("need at least two subsystems".into()));
    }
    let tree = DdpsTree::new(&inst.dims, opts.tree);
    let mut b = ProgramBuilder::new();
    let z = threshold_var(&mut b);
    let bounds = EntryBounds::initial(&tree);
    let vars = build_separable_relaxation(&mut b, &tree, Some(threshold_root(inst, z)), &bounds, opts)?;
    Ok(Relaxation {
        program: b.build(),
        tree,
        vars,
        z: Some(z),
    })
}

/// `min <χ, Z_root>` over the relaxation of normalized separable states
/// under `bounds`.
pub fn build_bss_relaxation(
    chi: &HermitianMatrix,
    tree: &DdpsTree,
    bounds: &EntryBounds,
    opts: &RelaxOptions,
) -> Result<Relaxation> {
    if chi.dim() != tree.dims.total() {
        return Err(Error::DimensionMismatch {
            expected: tree.dims.total(),
            got: chi.dim(),
        });
    }
    let mut b = ProgramBuilder::new();
    let vars = build_separable_relaxation(&mut b, tree, None, bounds, opts)?;
    b.minimize(vars.nodes[tree.root].inner(chi));
    Ok(Relaxation {
        program: b.build(),
        tree: tree.clone(),
        vars,
        z: None,
    })
}

/// Threshold lower bound from a single level-ℓ DPS block on the bipartition
/// of the first `split` subsystems against the rest.
pub fn build_bipartite_dps(inst: &ThresholdInstance, split: usize, level: usize, size_cap: usize) -> Result<Relaxation> {
    let m = inst.m();
    if split == 0 || split >= m {
        return Err(Error::InvalidArgument(format!("split {split} out of range for {m} subsystems")));
    }
    let d_a = inst.dims.prefix(split);
    let d_b = inst.total_dim() / d_a;
    let grouped = Dims::new(vec![d_a, d_b])?;
    let tree = DdpsTree::balanced(&grouped);
    let mut b = ProgramBuilder::new();
    let z = threshold_var(&mut b);
    let root = threshold_root(inst, z);
    let vars = build_ddps(&mut b, &tree, level, Some(root), size_cap)?;
    Ok(Relaxation {
        program: b.build(),
        tree,
        vars,
        z: Some(z),
    })
}

/// Exact product assignment `Z_k = ⊗_{s in range(k)} X_s` for every node.
pub fn product_assignment(tree: &DdpsTree, locals: &[HermitianMatrix]) -> Vec<HermitianMatrix> {
    tree.nodes
        .iter()
        .map(|n| crate::tensor::kron_all(locals[n.range.0..n.range.1].iter()))
        .collect()
}

/// Reads the entry relation values for entry `(i, j)` of node `k`.
pub fn entry_values(tree: &DdpsTree, nodes: &[HermitianMatrix], k: usize, i: usize, j: usize) -> EntryValues {
    let (ka, kb) = tree.nodes[k].children.expect("internal node");
    let db = tree.nodes[kb].dim;
    let a = nodes[ka].get(i / db, j / db);
    let bb = nodes[kb].get(i % db, j % db);
    let z = nodes[k].get(i, j);
    EntryValues {
        u_a: a.re,
        v_a: a.im,
        u_b: bb.re,
        v_b: bb.im,
        mu: z.re,
        nu: z.im,
    }
}

#[cfg(test)]
mod tests;
