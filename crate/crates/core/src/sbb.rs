//! Spatial branch-and-bound for `min <χ, y>` over normalized separable
//! states, used as the linear minimization oracle of the cutting-plane
//! method.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{lower_bound_certificate, solve_sdp, AdmmSettings, ConicSolution, SolveStatus};
use crate::error::{Error, Result};
use crate::ray::ExtremeRay;
use crate::relax::{
    aggregated_mccormick, build_bss_relaxation, entry_values, DdpsTree, EntryBounds, EntryBox, EntryValues,
    RelaxOptions, Target,
};
use crate::tensor::{eig_hermitian, Dims, HermitianMatrix, SubsystemIndexMap, C64};

#[derive(Clone, Debug)]
pub struct BssProblem {
    pub chi: HermitianMatrix,
    pub dims: Dims,
}

impl BssProblem {
    pub fn new(chi: HermitianMatrix, dims: Dims) -> Result<Self> {
        if chi.dim() != dims.total() {
            return Err(Error::DimensionMismatch {
                expected: dims.total(),
                got: chi.dim(),
            });
        }
        let dev = chi.as_cmatrix().max_hermitian_deviation();
        if dev > 1e-9 {
            return Err(Error::NotHermitian(dev));
        }
        Ok(BssProblem { chi, dims })
    }
}

#[derive(Clone, Debug)]
pub struct SbbNode {
    pub id: usize,
    pub bounds: EntryBounds,
    pub depth: usize,
    pub node_lb: f64,
    /// Relaxation values of every tree node, once solved.
    pub reference: Option<Vec<HermitianMatrix>>,
    /// Parent relaxation solution used as a warm start.
    pub warm: Option<std::sync::Arc<ConicSolution>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmoStatus {
    Optimal,
    Limit,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LmoResult {
    pub lower: f64,
    pub upper: f64,
    pub ray: ExtremeRay,
    pub nodes_explored: usize,
    pub status: LmoStatus,
}

/// Which tree variables may be branched on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchScope {
    Leaves,
    /// Leaves and internal nodes whose children are both leaves.
    #[default]
    FirstLevel,
    /// Every non-root node.
    All,
}

#[derive(Clone, Debug)]
pub struct SbbConfig {
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
    /// Return as soon as the incumbent drops below this value.
    pub target: Option<f64>,
    /// Nodes within `gap_tol · max(1, |b̄|)` of the incumbent are fathomed.
    pub gap_tol: f64,
    pub root_restarts: usize,
    pub heuristic_iters: usize,
    pub scope: BranchScope,
    /// Smallest box width that is still split.
    pub min_width: f64,
    /// Open nodes relaxed concurrently; 1 runs single-threaded.
    pub batch: usize,
    pub seed: u64,
    pub admm: AdmmSettings,
    pub relax: RelaxOptions,
}

impl Default for SbbConfig {
    fn default() -> Self {
        SbbConfig {
            node_limit: 120,
            time_limit: None,
            target: None,
            gap_tol: 1e-6,
            root_restarts: 8,
            heuristic_iters: 200,
            scope: BranchScope::default(),
            min_width: 1e-7,
            batch: 1,
            seed: 0,
            admm: AdmmSettings::relaxed(),
            relax: RelaxOptions::default(),
        }
    }
}

/// Real or imaginary part of entry `(i, j)`, `i <= j`, of tree node `node`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BranchEntry {
    pub node: usize,
    pub i: usize,
    pub j: usize,
    pub imag: bool,
}

#[derive(Clone, Debug)]
pub struct NodeRelax {
    /// Certified lower bound; `+inf` if the node is infeasible.
    pub value: f64,
    pub reference: Option<Vec<HermitianMatrix>>,
    pub status: SolveStatus,
    pub solution: Option<ConicSolution>,
}

/// Solves the node relaxation and certifies its value.
pub fn node_relax(
    prob: &BssProblem,
    tree: &DdpsTree,
    bounds: &EntryBounds,
    cfg: &SbbConfig,
    warm: Option<&ConicSolution>,
) -> Result<NodeRelax> {
    let infeasible = |status| NodeRelax {
        value: f64::INFINITY,
        reference: None,
        status,
        solution: None,
    };
    if !bounds.is_consistent() {
        return Ok(infeasible(SolveStatus::Infeasible));
    }
    let opts = RelaxOptions {
        fixed_layout: true,
        ..cfg.relax.clone()
    };
    let rel = build_bss_relaxation(&prob.chi, tree, bounds, &opts)?;
    let sol = solve_sdp(&rel.program, &cfg.admm, warm);
    if sol.status == SolveStatus::Infeasible {
        return Ok(infeasible(sol.status));
    }
    let value = lower_bound_certificate(&rel.program, &sol.dual);
    let reference = (0..tree.nodes.len()).map(|k| rel.node_value(k, &sol.x)).collect();
    Ok(NodeRelax {
        value,
        reference: Some(reference),
        status: sol.status,
        solution: Some(sol),
    })
}

/// `χ_k` with `<χ_k, X> = <χ, X_1 ⊗ .. ⊗ X ⊗ .. ⊗ X_m>`, where `fixed`
/// holds the `m - 1` matrices other than mode `k`, in order.
pub fn contract_mode(chi: &HermitianMatrix, dims: &Dims, fixed: &[HermitianMatrix], k: usize) -> HermitianMatrix {
    let m = dims.len();
    assert_eq!(fixed.len() + 1, m, "expected {} fixed modes", m - 1);
    let map = SubsystemIndexMap::from_dims(dims);
    let n = dims.total();
    let dk = dims.get(k);
    let multi: Vec<Vec<usize>> = (0..n).map(|f| map.multi(f)).collect();
    let mut out = crate::tensor::CMatrix::zeros(dk);
    for (ii, mi) in multi.iter().enumerate() {
        for (jj, mj) in multi.iter().enumerate() {
            let c = chi.get(ii, jj);
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            let mut w = c;
            for s in (0..m).filter(|&s| s != k) {
                let x = &fixed[if s < k { s } else { s - 1 }];
                w *= x.get(mj[s], mi[s]);
            }
            let (a, b) = (mi[k], mj[k]);
            out.set(a, b, out.get(a, b) + w);
        }
    }
    HermitianMatrix::symmetrize(out)
}

#[derive(Clone, Debug)]
pub struct AltResult {
    pub value: f64,
    pub ray: ExtremeRay,
    /// Objective after every single-mode update.
    pub history: Vec<f64>,
}

fn min_eigvec(m: &HermitianMatrix) -> Vec<C64> {
    eig_hermitian(m).expect("contracted matrix is Hermitian").vector(0)
}

/// Block-coordinate descent over rank-one factors: each step replaces one
/// mode by the minimal eigenvector of the contracted objective.
pub fn alternating_heuristic(prob: &BssProblem, init: Vec<Vec<C64>>, max_iter: usize) -> AltResult {
    let m = prob.dims.len();
    let mut ray = ExtremeRay::from_modes(init).unwrap_or_else(|| ExtremeRay::basis(&prob.dims, &vec![0; m]));
    let mut value = ray.value(&prob.chi);
    let mut history = vec![value];
    for _ in 0..max_iter {
        let start = value;
        for k in 0..m {
            let fixed: Vec<HermitianMatrix> = (0..m)
                .filter(|&s| s != k)
                .map(|s| HermitianMatrix::outer(&ray.modes[s]))
                .collect();
            let ck = contract_mode(&prob.chi, &prob.dims, &fixed, k);
            let x = min_eigvec(&ck);
            let mut modes = ray.modes.clone();
            modes[k] = x;
            let cand = ExtremeRay::from_modes(modes).expect("unit eigenvector");
            let v = cand.value(&prob.chi);
            if v <= value {
                ray = cand;
                value = v;
            }
            history.push(value);
        }
        if start - value < 1e-10 {
            break;
        }
    }
    ray.weight = 1.0;
    AltResult { value, ray, history }
}

fn random_modes(dims: &Dims, rng: &mut ChaCha8Rng) -> Vec<Vec<C64>> {
    dims.as_slice()
        .iter()
        .map(|&d| {
            (0..d)
                .map(|_| C64::new(StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng)))
                .collect()
        })
        .collect()
}

/// Top eigenvectors of the leaf values of a relaxation solution.
fn seeded_modes(tree: &DdpsTree, reference: &[HermitianMatrix]) -> Vec<Vec<C64>> {
    (0..tree.dims.len())
        .map(|k| {
            let e = eig_hermitian(&reference[k]).expect("Hermitian reference");
            e.vector(e.values.len() - 1)
        })
        .collect()
}

fn parents(tree: &DdpsTree) -> Vec<Option<usize>> {
    let mut p = vec![None; tree.nodes.len()];
    for (k, (a, b)) in tree.internal() {
        p[a] = Some(k);
        p[b] = Some(k);
    }
    p
}

fn in_scope(tree: &DdpsTree, k: usize, scope: BranchScope) -> bool {
    match (scope, tree.nodes[k].children) {
        (_, None) => true,
        (BranchScope::Leaves, Some(_)) => false,
        (BranchScope::FirstLevel, Some((a, b))) => tree.nodes[a].is_leaf() && tree.nodes[b].is_leaf(),
        (BranchScope::All, Some(_)) => true,
    }
}

/// Candidate entries in lexicographic order.
pub fn branch_candidates(tree: &DdpsTree, scope: BranchScope) -> Vec<BranchEntry> {
    let par = parents(tree);
    let mut out = Vec::new();
    for (k, node) in tree.nodes.iter().enumerate() {
        if par[k].is_none() || !in_scope(tree, k, scope) {
            continue;
        }
        for i in 0..node.dim {
            for j in i..node.dim {
                out.push(BranchEntry { node: k, i, j, imag: false });
                if i != j {
                    out.push(BranchEntry { node: k, i, j, imag: true });
                }
            }
        }
    }
    out
}

fn interval_of(b: &EntryBox, imag: bool) -> (f64, f64) {
    if imag {
        b.v
    } else {
        b.u
    }
}

fn with_interval(mut b: EntryBox, imag: bool, iv: (f64, f64)) -> EntryBox {
    if imag {
        b.v = iv;
    } else {
        b.u = iv;
    }
    b
}

fn reference_value(reference: &[HermitianMatrix], e: &BranchEntry) -> f64 {
    let (re, im) = reference[e.node].parts(e.i, e.j);
    if e.imag {
        im
    } else {
        re
    }
}

/// Sum over the four row families (lower/upper bound on `μ` and `ν`) of the
/// largest violation of the aggregated McCormick rows at `vals`.
pub fn relation_violation(a: &EntryBox, b: &EntryBox, vals: &EntryValues, with_nu: bool) -> f64 {
    let mut worst = [0.0f64; 4];
    for row in aggregated_mccormick(a, b, with_nu) {
        let f = match (row.target, row.lower) {
            (Target::Mu, true) => 0,
            (Target::Mu, false) => 1,
            (Target::Nu, true) => 2,
            (Target::Nu, false) => 3,
        };
        worst[f] = worst[f].max(-row.slack(vals));
    }
    worst.iter().sum()
}

/// Total violation, in the two children of splitting `entry` at `at`, of
/// the relations in which `entry` appears as a factor.
fn split_violations(tree: &DdpsTree, bounds: &EntryBounds, reference: &[HermitianMatrix], e: &BranchEntry, at: f64) -> (f64, f64) {
    let parent = match parents(tree)[e.node] {
        Some(p) => p,
        None => return (0.0, 0.0),
    };
    let (ka, kb) = tree.nodes[parent].children.expect("internal parent");
    let side_a = ka == e.node;
    let db = tree.nodes[kb].dim;
    let n = tree.nodes[parent].dim;
    let base = bounds.nodes[e.node].get(e.i, e.j);
    let (lo, hi) = interval_of(&base, e.imag);
    let children = [
        with_interval(base, e.imag, (lo, at)),
        with_interval(base, e.imag, (at, hi)),
    ];
    let mut s = [0.0; 2];
    for big_i in 0..n {
        for big_j in 0..n {
            let (ci, cj, oi, oj) = if side_a {
                (big_i / db, big_j / db, big_i % db, big_j % db)
            } else {
                (big_i % db, big_j % db, big_i / db, big_j / db)
            };
            if (ci, cj) != (e.i, e.j) {
                continue;
            }
            let other = if side_a { kb } else { ka };
            let ob = bounds.nodes[other].get(oi, oj);
            let vals = entry_values(tree, reference, parent, big_i, big_j);
            for (c, cb) in children.iter().enumerate() {
                let (ba, bb) = if side_a { (*cb, ob) } else { (ob, *cb) };
                s[c] += relation_violation(&ba, &bb, &vals, big_i != big_j);
            }
        }
    }
    (s[0], s[1])
}

/// Child violation sums and the combined score `5/6 min + 1/6 max` for a
/// split of `entry` at its reference value. Zero if the reference sits on
/// the box boundary.
pub fn branch_scores(
    tree: &DdpsTree,
    bounds: &EntryBounds,
    reference: &[HermitianMatrix],
    entry: &BranchEntry,
    min_width: f64,
) -> (f64, f64, f64) {
    let (lo, hi) = interval_of(&bounds.nodes[entry.node].get(entry.i, entry.j), entry.imag);
    let at = reference_value(reference, entry);
    if at - lo < min_width || hi - at < min_width {
        return (0.0, 0.0, 0.0);
    }
    let (s1, s2) = split_violations(tree, bounds, reference, entry, at);
    (s1, s2, 5.0 / 6.0 * s1.min(s2) + 1.0 / 6.0 * s1.max(s2))
}

/// Entry with the largest score, or `None` if no split reduces any
/// McCormick violation.
pub fn select_branch(
    tree: &DdpsTree,
    bounds: &EntryBounds,
    reference: &[HermitianMatrix],
    scope: BranchScope,
    min_width: f64,
) -> Option<BranchEntry> {
    let mut best: Option<(f64, BranchEntry)> = None;
    for e in branch_candidates(tree, scope) {
        let (_, _, s) = branch_scores(tree, bounds, reference, &e, min_width);
        if s > 1e-12 && best.is_none_or(|(b, _)| s > b) {
            best = Some((s, e));
        }
    }
    best.map(|(_, e)| e)
}

/// Widest leaf-entry box, bisected at its midpoint.
fn widest_leaf_entry(tree: &DdpsTree, bounds: &EntryBounds, min_width: f64) -> Option<(BranchEntry, f64)> {
    let mut best: Option<(f64, BranchEntry)> = None;
    for e in branch_candidates(tree, BranchScope::Leaves) {
        let (lo, hi) = interval_of(&bounds.nodes[e.node].get(e.i, e.j), e.imag);
        let w = hi - lo;
        if w > 2.0 * min_width && best.is_none_or(|(b, _)| w > b) {
            best = Some((w, e));
        }
    }
    best.map(|(_, e)| {
        let (lo, hi) = interval_of(&bounds.nodes[e.node].get(e.i, e.j), e.imag);
        (e, 0.5 * (lo + hi))
    })
}

/// Bounds of the two children from splitting `entry` at `at`.
pub fn split_bounds(bounds: &EntryBounds, entry: &BranchEntry, at: f64) -> [EntryBounds; 2] {
    let base = bounds.nodes[entry.node].get(entry.i, entry.j);
    let (lo, hi) = interval_of(&base, entry.imag);
    [(lo, at), (at, hi)].map(|iv| {
        let mut b = bounds.clone();
        b.nodes[entry.node].set(entry.i, entry.j, with_interval(base, entry.imag, iv));
        b.propagate();
        b
    })
}

fn node_order(a: &SbbNode, b: &SbbNode) -> Ordering {
    a.node_lb.total_cmp(&b.node_lb).then(a.id.cmp(&b.id))
}

fn node_seed(seed: u64, id: usize) -> u64 {
    seed ^ (id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct Incumbent {
    value: f64,
    ray: ExtremeRay,
}

impl Incumbent {
    fn offer(&mut self, r: AltResult) {
        if r.value < self.value {
            self.value = r.value;
            self.ray = r.ray;
        }
    }
}

/// Best-first spatial branch-and-bound. The incumbent comes from the
/// alternating heuristic with random starts and starts seeded by node
/// relaxation solutions; the lower bound is the smallest open-node bound.
pub fn sbb_solve(prob: &BssProblem, cfg: &SbbConfig) -> Result<LmoResult> {
    let start = Instant::now();
    let tree = DdpsTree::new(&prob.dims, cfg.relax.tree);
    let floor_bound = prob.chi.min_eigenvalue();
    let m = prob.dims.len();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let first = ExtremeRay::basis(&prob.dims, &vec![0; m]);
    let mut inc = Incumbent {
        value: first.value(&prob.chi),
        ray: first,
    };
    for _ in 0..cfg.root_restarts.max(1) {
        inc.offer(alternating_heuristic(prob, random_modes(&prob.dims, &mut rng), cfg.heuristic_iters));
    }

    let mut root_bounds = EntryBounds::initial(&tree);
    root_bounds.propagate();
    let mut open = vec![SbbNode {
        id: 0,
        bounds: root_bounds,
        depth: 0,
        node_lb: floor_bound,
        reference: None,
        warm: None,
    }];
    let mut next_id = 1;
    // Bound of nodes dropped without being resolved.
    let mut unresolved = f64::INFINITY;
    let mut fathomed = f64::INFINITY;
    let mut explored = 0;
    let mut hit_limit = false;

    let tol = |v: f64| cfg.gap_tol * v.abs().max(1.0);
    loop {
        let cut = inc.value - tol(inc.value);
        open.retain(|n| {
            let keep = n.node_lb < cut;
            if !keep {
                fathomed = fathomed.min(n.node_lb);
            }
            keep
        });
        if open.is_empty() {
            break;
        }
        if cfg.target.is_some_and(|t| inc.value < t) && explored > 0 {
            hit_limit = true;
            break;
        }
        if explored >= cfg.node_limit || cfg.time_limit.is_some_and(|t| start.elapsed() >= t) {
            hit_limit = true;
            break;
        }
        open.sort_by(node_order);
        let take = cfg.batch.max(1).min(open.len()).min(cfg.node_limit - explored);
        let batch: Vec<SbbNode> = open.drain(..take).collect();
        let solved: Vec<Result<NodeRelax>> = if batch.len() > 1 {
            batch
                .par_iter()
                .map(|n| node_relax(prob, &tree, &n.bounds, cfg, n.warm.as_deref()))
                .collect()
        } else {
            batch
                .iter()
                .map(|n| node_relax(prob, &tree, &n.bounds, cfg, n.warm.as_deref()))
                .collect()
        };
        for (mut node, res) in batch.into_iter().zip(solved) {
            let res = res?;
            explored += 1;
            let parent_lb = node.node_lb;
            node.node_lb = res.value.max(parent_lb);
            node.reference = res.reference;
            let warm = res.solution.map(std::sync::Arc::new);
            let mut nrng = ChaCha8Rng::seed_from_u64(node_seed(cfg.seed, node.id));
            if let Some(r) = &node.reference {
                inc.offer(alternating_heuristic(prob, seeded_modes(&tree, r), cfg.heuristic_iters));
            }
            if node.id > 0 {
                inc.offer(alternating_heuristic(prob, random_modes(&prob.dims, &mut nrng), cfg.heuristic_iters));
            }
            log::debug!(
                "{}",
                serde_json::json!({
                    "event": "sbb_node", "id": node.id, "depth": node.depth,
                    "node_lb": node.node_lb, "upper": inc.value, "open": open.len(),
                })
            );
            if node.node_lb >= inc.value - tol(inc.value) {
                fathomed = fathomed.min(node.node_lb);
                continue;
            }
            let reference = match &node.reference {
                Some(r) => r,
                None => continue,
            };
            let split = select_branch(&tree, &node.bounds, reference, cfg.scope, cfg.min_width)
                .map(|e| (e, reference_value(reference, &e)))
                .or_else(|| widest_leaf_entry(&tree, &node.bounds, cfg.min_width));
            match split {
                Some((e, at)) => {
                    for b in split_bounds(&node.bounds, &e, at) {
                        open.push(SbbNode {
                            id: next_id,
                            bounds: b,
                            depth: node.depth + 1,
                            node_lb: node.node_lb,
                            reference: None,
                            warm: warm.clone(),
                        });
                        next_id += 1;
                    }
                }
                None => unresolved = unresolved.min(node.node_lb),
            }
        }
    }

    let open_min = open.iter().map(|n| n.node_lb).fold(f64::INFINITY, f64::min);
    let lower = open_min.min(unresolved).min(fathomed).min(inc.value).max(floor_bound.min(inc.value));
    let status = if !hit_limit && inc.value - lower <= tol(inc.value) {
        LmoStatus::Optimal
    } else {
        LmoStatus::Limit
    };
    log::debug!(
        "{}",
        serde_json::json!({
            "event": "sbb_done", "nodes": explored, "lower": lower, "upper": inc.value,
            "elapsed_s": start.elapsed().as_secs_f64(),
        })
    );
    Ok(LmoResult {
        lower,
        upper: inc.value,
        ray: inc.ray,
        nodes_explored: explored,
        status,
    })
}
