//! Symmetric-extension (DPS) constraints for bipartite blocks and their
//! tree-structured multipartite combination.

use std::collections::BTreeSet;

use crate::conic::{HermExpr, HermVar, ProgramBuilder};
use crate::error::{Error, Result};
use crate::tensor::{
    partial_trace, partial_transpose, symmetric_projector_capped, Dims, HermitianMatrix,
    DEFAULT_SIZE_CAP,
};

#[derive(Clone, Debug, PartialEq)]
pub struct DpsConfig {
    pub d_a: usize,
    pub d_b: usize,
    pub level: usize,
    /// Enforce `T_{B_1..B_s}(ρ) ⪰ 0` for `s = 1..=level`.
    pub ppt: bool,
    pub size_cap: usize,
}

impl DpsConfig {
    pub fn new(d_a: usize, d_b: usize, level: usize) -> Self {
        DpsConfig {
            d_a,
            d_b,
            level,
            ppt: true,
            size_cap: DEFAULT_SIZE_CAP,
        }
    }

    /// `d_A · d_B^ℓ`.
    pub fn extension_dim(&self) -> Option<usize> {
        (0..self.level).try_fold(self.d_a, |acc, _| acc.checked_mul(self.d_b))
    }

    fn extension_dims(&self) -> Dims {
        let mut d = vec![self.d_a];
        d.extend(std::iter::repeat_n(self.d_b, self.level));
        Dims::new(d).expect("positive dims")
    }
}

/// Emits level-ℓ DPS constraints for `rho_ab` (dimension `d_A d_B`):
/// positivity and unit trace of the extension, the partial-trace link to
/// `rho_ab`, Bose symmetry of the `B` copies, and PPT on the first `s`
/// copies. At level 1 the extension is `rho_ab` itself. Returns the
/// extension variable for levels above 1.
pub fn build_dps_block(
    b: &mut ProgramBuilder,
    cfg: &DpsConfig,
    rho_ab: &HermExpr,
) -> Result<Option<HermVar>> {
    if cfg.level == 0 {
        return Err(Error::InvalidArgument("DPS level must be at least 1".into()));
    }
    if rho_ab.n != cfg.d_a * cfg.d_b {
        return Err(Error::DimensionMismatch {
            expected: cfg.d_a * cfg.d_b,
            got: rho_ab.n,
        });
    }
    let n_ext = cfg.extension_dim().unwrap_or(usize::MAX);
    if n_ext > cfg.size_cap {
        return Err(Error::SizeCap {
            size: n_ext,
            cap: cfg.size_cap,
        });
    }
    let dims = cfg.extension_dims();
    let (ext, var) = if cfg.level == 1 {
        (rho_ab.clone(), None)
    } else {
        let v = b.add_density_var(n_ext);
        (v.expr(), Some(v))
    };
    b.psd(&ext);
    let tr = ext.trace().plus_constant(-1.0);
    if !tr.terms.is_empty() {
        b.zero(tr);
    }
    if cfg.level > 1 {
        let rest: BTreeSet<usize> = (2..=cfg.level).collect();
        let reduced = ext.map(rho_ab.n, |m| partial_trace(m, &dims, &rest).expect("dims"));
        b.zero_herm(&reduced.minus(rho_ab));

        let pi = symmetric_projector_capped(cfg.d_b, cfg.level, cfg.size_cap)?;
        let proj = crate::tensor::kron(&HermitianMatrix::identity(cfg.d_a), &pi);
        let p = proj.as_cmatrix().clone();
        let sym = ext.map(n_ext, |m| {
            let pmp = p.matmul(m.as_cmatrix()).matmul(&p);
            HermitianMatrix::symmetrize(pmp).sub(m)
        });
        b.zero_herm(&sym);
    }
    if cfg.ppt {
        for s in 1..=cfg.level {
            let set: BTreeSet<usize> = (1..=s).collect();
            let t = ext.map(n_ext, |m| partial_transpose(m, &dims, &set).expect("dims"));
            b.psd(&t);
        }
    }
    Ok(var)
}

/// One node of a binary tree over contiguous subsystem ranges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    /// Subsystems `lo..hi`.
    pub range: (usize, usize),
    pub children: Option<(usize, usize)>,
    pub dim: usize,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeShape {
    #[default]
    Balanced,
    Path,
}

/// Binary tree describing the order in which `Z_root = X_1 ⊗ ... ⊗ X_m` is
/// assembled. Nodes `0..m` are the leaves, in subsystem order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DdpsTree {
    pub dims: Dims,
    pub nodes: Vec<TreeNode>,
    pub root: usize,
}

impl DdpsTree {
    pub fn new(dims: &Dims, shape: TreeShape) -> Self {
        let m = dims.len();
        let mut nodes: Vec<TreeNode> = (0..m)
            .map(|k| TreeNode {
                range: (k, k + 1),
                children: None,
                dim: dims.get(k),
            })
            .collect();
        let root = build_range(dims, shape, 0, m, &mut nodes);
        DdpsTree {
            dims: dims.clone(),
            nodes,
            root,
        }
    }

    pub fn balanced(dims: &Dims) -> Self {
        DdpsTree::new(dims, TreeShape::Balanced)
    }

    pub fn path(dims: &Dims) -> Self {
        DdpsTree::new(dims, TreeShape::Path)
    }

    pub fn internal(&self) -> impl Iterator<Item = (usize, (usize, usize))> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(k, n)| n.children.map(|c| (k, c)))
    }

    pub fn n_internal(&self) -> usize {
        self.internal().count()
    }
}

fn build_range(dims: &Dims, shape: TreeShape, lo: usize, hi: usize, nodes: &mut Vec<TreeNode>) -> usize {
    if hi - lo == 1 {
        return lo;
    }
    let split = match shape {
        TreeShape::Balanced => lo + (hi - lo).div_ceil(2),
        TreeShape::Path => hi - 1,
    };
    let a = build_range(dims, shape, lo, split, nodes);
    let b = build_range(dims, shape, split, hi, nodes);
    let dim = nodes[a].dim * nodes[b].dim;
    nodes.push(TreeNode {
        range: (lo, hi),
        children: Some((a, b)),
        dim,
    });
    nodes.len() - 1
}

/// Expressions for every tree node of an emitted DDPS system.
#[derive(Clone, Debug)]
pub struct DdpsVars {
    pub nodes: Vec<HermExpr>,
    /// Program variable backing each node, if any (the root may be an
    /// affine expression).
    pub vars: Vec<Option<HermVar>>,
    pub extensions: Vec<HermVar>,
}

/// Emits the DDPS system for `tree`: unit-trace PSD node variables, a
/// level-ℓ DPS block at every internal node, and the two partial-trace
/// links to its children. If `root` is given it replaces the root variable.
pub fn build_ddps(
    b: &mut ProgramBuilder,
    tree: &DdpsTree,
    level: usize,
    root: Option<HermExpr>,
    size_cap: usize,
) -> Result<DdpsVars> {
    let mut nodes = Vec::with_capacity(tree.nodes.len());
    let mut vars = Vec::with_capacity(tree.nodes.len());
    let mut root = root;
    for (k, node) in tree.nodes.iter().enumerate() {
        match root.take_if(|_| k == tree.root) {
            Some(e) => {
                if e.n != node.dim {
                    return Err(Error::DimensionMismatch {
                        expected: node.dim,
                        got: e.n,
                    });
                }
                nodes.push(e);
                vars.push(None);
            }
            None => {
                let v = b.add_density_var(node.dim);
                nodes.push(v.expr());
                vars.push(Some(v));
            }
        }
    }
    let mut extensions = Vec::new();
    for (k, node) in tree.nodes.iter().enumerate() {
        match node.children {
            None => {
                b.psd(&nodes[k]);
                b.zero(nodes[k].trace().plus_constant(-1.0));
            }
            Some((ka, kb)) => {
                let (da, db) = (tree.nodes[ka].dim, tree.nodes[kb].dim);
                let cfg = DpsConfig {
                    size_cap,
                    ..DpsConfig::new(da, db, level)
                };
                if let Some(ext) = build_dps_block(b, &cfg, &nodes[k])? {
                    extensions.push(ext);
                }
                let pair = Dims::new(vec![da, db]).expect("positive dims");
                let tr_a = nodes[k].map(db, |m| {
                    partial_trace(m, &pair, &BTreeSet::from([0])).expect("dims")
                });
                let tr_b = nodes[k].map(da, |m| {
                    partial_trace(m, &pair, &BTreeSet::from([1])).expect("dims")
                });
                b.zero_herm(&tr_a.minus(&nodes[kb]));
                b.zero_herm(&tr_b.minus(&nodes[ka]));
            }
        }
    }
    Ok(DdpsVars {
        nodes,
        vars,
        extensions,
    })
}

/// Recursive DPS system `Z_h = Z_{h-1} ⊗ X_h`, i.e. DDPS on a path tree.
pub fn build_recursive_dps(
    b: &mut ProgramBuilder,
    dims: &Dims,
    level: usize,
    root: Option<HermExpr>,
    size_cap: usize,
) -> Result<DdpsVars> {
    if dims.len() < 2 {
        return Err(Error::InvalidArgument(
            "recursive DPS needs at least two subsystems".into(),
        ));
    }
    build_ddps(b, &DdpsTree::path(dims), level, root, size_cap)
}
