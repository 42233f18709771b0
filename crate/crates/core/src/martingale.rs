//! Dyadic (Paley–Walsh) martingale trees, coefficient transforms, and
//! alternating maximization for lower bounds on transform constants.
//!
//! A depth-`N` tree stores the constant start value `f_0` and, for each level
//! `n = 1..N`, the predictable factors `phi_n` indexed by the sign history
//! `(r_1, ..., r_{n-1})`. The underlying process is `df_n = r_n * phi_n`,
//! so every terminal value is a signed path sum over a complete binary tree
//! of depth `N` carrying the uniform measure on its `2^N` leaves.
//!
//! A transform plan multiplies the level-`n` increment by a coefficient,
//! either one per level (a deterministic sequence) or one per node (an
//! adapted sequence). The achieved ratio of terminal p-norms is a certified
//! lower bound for the transform constant of the coefficient set, and
//! [`optimize_tree`] searches for large ratios by alternating projected
//! subgradient ascent on tree values with coefficient re-optimization over
//! the extreme points of the coefficient hull.

use crate::sets::{ConvexRegion, PointSet};
use crate::spaces::{norm_q, Exponent, Field, Scalar, SpaceSpec, Vector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MartingaleError {
    #[error("tree depth {tree} does not match plan depth {plan}")]
    DepthMismatch { tree: u32, plan: u32 },
    #[error("terminal p-norm of the input martingale is zero")]
    ZeroMartingale,
    #[error("depth {0} too large for a dense transform matrix (max 6)")]
    DepthTooLarge(u32),
    #[error("transform matrices require a one-dimensional space")]
    NotScalarSpace,
    #[error("plan coefficient at slot {0} is not a sign")]
    NotSignPlan(usize),
    #[error("level {level} must hold {want} values, got {got}")]
    BadLevelShape { level: u32, want: usize, got: usize },
    #[error("coefficient plan has {got} coefficients, expected {want}")]
    BadPlanShape { got: usize, want: usize },
}

/// Complete binary martingale tree of depth `N >= 0`.
///
/// Storage is node-major: node 0 is the start value, node `2^{n-1} + h` is
/// `phi_n` at history `h` (histories are binary-encoded with `r_1` as the
/// most significant bit and `r = +1` mapping to bit 1). Each node occupies
/// `dim` consecutive scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleTree {
    pub space: SpaceSpec,
    pub depth: u32,
    data: Vec<Scalar>,
}

pub fn node_index(level: u32, history: usize) -> usize {
    if level == 0 {
        0
    } else {
        (1usize << (level - 1)) + history
    }
}

impl MartingaleTree {
    pub fn node_count(depth: u32) -> usize {
        1usize << depth
    }

    pub fn leaf_count(&self) -> usize {
        1usize << self.depth
    }

    /// Build from a start vector and per-level factor arrays.
    pub fn from_parts(
        space: SpaceSpec,
        root: &Vector,
        levels: &[Vec<Vector>],
    ) -> Result<Self, MartingaleError> {
        let depth = levels.len() as u32;
        let dim = space.dim;
        let mut data = vec![Scalar::ZERO; Self::node_count(depth) * dim];
        data[..dim].copy_from_slice(root.entries());
        for (li, level) in levels.iter().enumerate() {
            let n = li as u32 + 1;
            let want = 1usize << (n - 1);
            if level.len() != want {
                return Err(MartingaleError::BadLevelShape { level: n, want, got: level.len() });
            }
            for (h, v) in level.iter().enumerate() {
                let at = node_index(n, h) * dim;
                data[at..at + dim].copy_from_slice(v.entries());
            }
        }
        Ok(MartingaleTree { space, depth, data })
    }

    pub fn zero(space: SpaceSpec, depth: u32) -> Self {
        MartingaleTree { space, depth, data: vec![Scalar::ZERO; Self::node_count(depth) * space.dim] }
    }

    /// Componentwise uniform values on [-1, 1], imaginary parts included for
    /// complex spaces, then radial normalization to unit terminal p-norm.
    pub fn random_normalized(space: SpaceSpec, depth: u32, p: f64, rng: &mut impl Rng) -> Self {
        let mut t = MartingaleTree::zero(space, depth);
        for e in t.data.iter_mut() {
            let re = rng.gen_range(-1.0..=1.0);
            let im = if space.is_real() { 0.0 } else { rng.gen_range(-1.0..=1.0) };
            *e = Scalar::new(re, im);
        }
        let s = terminal_pnorm(&t, p);
        if s > 0.0 {
            t.scale_in_place(1.0 / s);
        }
        t
    }

    pub fn node(&self, level: u32, history: usize) -> &[Scalar] {
        let dim = self.space.dim;
        let at = node_index(level, history) * dim;
        &self.data[at..at + dim]
    }

    pub fn root(&self) -> &[Scalar] {
        &self.data[..self.space.dim]
    }

    pub fn data(&self) -> &[Scalar] {
        &self.data
    }

    fn scale_in_place(&mut self, t: f64) {
        for e in self.data.iter_mut() {
            *e *= t;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|e| e.re == 0.0 && e.im == 0.0)
    }

    /// Extend to a deeper tree with vanishing new increments; terminal
    /// values, and hence every transform ratio, are unchanged.
    pub fn zero_padded(&self, depth: u32) -> MartingaleTree {
        assert!(depth >= self.depth);
        let mut out = MartingaleTree::zero(self.space, depth);
        out.data[..self.data.len()].copy_from_slice(&self.data);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    /// One coefficient per level: a deterministic transform sequence.
    Level,
    /// One coefficient per tree node: an adapted transform sequence.
    Adapted,
}

/// Transform coefficients for a tree of a fixed depth.
///
/// Slot 0 multiplies the start value; level `n >= 1` increments are
/// multiplied by the slot for that level (Level mode) or for the node at
/// `(n, history)` (Adapted mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientPlan {
    pub mode: PlanMode,
    pub depth: u32,
    coeffs: Vec<Scalar>,
}

impl CoefficientPlan {
    pub fn slot_count(mode: PlanMode, depth: u32) -> usize {
        match mode {
            PlanMode::Level => depth as usize + 1,
            PlanMode::Adapted => MartingaleTree::node_count(depth),
        }
    }

    pub fn new(mode: PlanMode, depth: u32, coeffs: Vec<Scalar>) -> Result<Self, MartingaleError> {
        let want = Self::slot_count(mode, depth);
        if coeffs.len() != want {
            return Err(MartingaleError::BadPlanShape { got: coeffs.len(), want });
        }
        Ok(CoefficientPlan { mode, depth, coeffs })
    }

    pub fn constant(mode: PlanMode, depth: u32, a: Scalar) -> Self {
        CoefficientPlan { mode, depth, coeffs: vec![a; Self::slot_count(mode, depth)] }
    }

    pub fn coeffs(&self) -> &[Scalar] {
        &self.coeffs
    }

    /// Coefficient applied to the increment at `(level, history)`.
    pub fn coeff(&self, level: u32, history: usize) -> Scalar {
        match self.mode {
            PlanMode::Level => self.coeffs[level as usize],
            PlanMode::Adapted => self.coeffs[node_index(level, history)],
        }
    }

    pub fn scale(&self, a: Scalar) -> CoefficientPlan {
        CoefficientPlan {
            mode: self.mode,
            depth: self.depth,
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
        }
    }

    /// True when every coefficient lies in the region (with its slack).
    pub fn lies_in(&self, hull: &ConvexRegion) -> bool {
        self.coeffs.iter().all(|&c| hull.contains(c))
    }

    pub fn zero_padded(&self, depth: u32, fill: Scalar) -> CoefficientPlan {
        assert!(depth >= self.depth);
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(Self::slot_count(self.mode, depth), fill);
        CoefficientPlan { mode: self.mode, depth, coeffs }
    }
}

/// Expand terminal values of the (optionally transformed) tree into `out`,
/// one leaf per `dim` scalars, leaves ordered by their sign paths.
fn leaves_into(tree: &MartingaleTree, plan: Option<&CoefficientPlan>, out: &mut Vec<Scalar>) {
    let dim = tree.space.dim;
    let leaves = tree.leaf_count();
    out.clear();
    out.resize(leaves * dim, Scalar::ZERO);
    let c0 = plan.map_or(Scalar::ONE, |p| p.coeff(0, 0));
    for (o, r) in out[..dim].iter_mut().zip(tree.root()) {
        *o = c0 * r;
    }
    let mut base = vec![Scalar::ZERO; dim];
    for n in 1..=tree.depth {
        let half = 1usize << (n - 1);
        for h in (0..half).rev() {
            base.copy_from_slice(&out[h * dim..(h + 1) * dim]);
            let coeff = plan.map_or(Scalar::ONE, |p| p.coeff(n, h));
            let phi = tree.node(n, h);
            let lo = 2 * h * dim;
            let hi = (2 * h + 1) * dim;
            for k in 0..dim {
                let step = coeff * phi[k];
                out[hi + k] = base[k] + step;
                out[lo + k] = base[k] - step;
            }
        }
    }
}

fn pnorm_of_leaves(leaves: &[Scalar], dim: usize, q: Exponent, p: f64) -> f64 {
    let count = leaves.len() / dim;
    let sum: f64 = leaves.chunks_exact(dim).map(|leaf| norm_q(leaf, q).powf(p)).sum();
    (sum / count as f64).powf(1.0 / p)
}

/// Terminal p-norm `(2^{-N} sum_leaves ||f_N||^p)^{1/p}`.
pub fn terminal_pnorm(tree: &MartingaleTree, p: f64) -> f64 {
    assert!(p > 1.0);
    let mut buf = Vec::new();
    leaves_into(tree, None, &mut buf);
    pnorm_of_leaves(&buf, tree.space.dim, tree.space.exponent, p)
}

/// Terminal p-norm of the transformed tree without materializing it.
pub fn transformed_pnorm(tree: &MartingaleTree, plan: &CoefficientPlan, p: f64) -> f64 {
    let mut buf = Vec::new();
    leaves_into(tree, Some(plan), &mut buf);
    pnorm_of_leaves(&buf, tree.space.dim, tree.space.exponent, p)
}

/// Apply the transform, producing the tree with start `a_0 f_0` and factors
/// `coeff(n, h) * phi_n(h)`. Complex coefficients promote a real space to
/// its complexification.
pub fn apply_transform(
    tree: &MartingaleTree,
    plan: &CoefficientPlan,
) -> Result<MartingaleTree, MartingaleError> {
    if tree.depth != plan.depth {
        return Err(MartingaleError::DepthMismatch { tree: tree.depth, plan: plan.depth });
    }
    let needs_complex = plan.coeffs.iter().any(|c| c.im != 0.0);
    let mut space = tree.space;
    if needs_complex {
        space.field = Field::Complex;
    }
    let dim = tree.space.dim;
    let mut data = tree.data.clone();
    let node_total = MartingaleTree::node_count(tree.depth);
    for node in 0..node_total {
        let (level, history) = if node == 0 {
            (0, 0)
        } else {
            let level = usize::BITS - (node.leading_zeros() + 1) + 1;
            (level, node - (1usize << (level - 1)))
        };
        let c = plan.coeff(level, history);
        for k in 0..dim {
            data[node * dim + k] *= c;
        }
    }
    Ok(MartingaleTree { space, depth: tree.depth, data })
}

/// Ratio of terminal p-norms of the transformed and the input tree.
pub fn ratio(tree: &MartingaleTree, plan: &CoefficientPlan, p: f64) -> Result<f64, MartingaleError> {
    if tree.depth != plan.depth {
        return Err(MartingaleError::DepthMismatch { tree: tree.depth, plan: plan.depth });
    }
    let denom = terminal_pnorm(tree, p);
    if denom == 0.0 {
        return Err(MartingaleError::ZeroMartingale);
    }
    Ok(transformed_pnorm(tree, plan, p) / denom)
}

// ---------------------------------------------------------------------------
// Coefficient optimization
// ---------------------------------------------------------------------------

/// Objective used when optimizing coefficients: the transformed terminal
/// p-norm (the input tree, and hence the denominator, is fixed).
fn plan_objective(tree: &MartingaleTree, plan: &CoefficientPlan, p: f64, buf: &mut Vec<Scalar>) -> f64 {
    leaves_into(tree, Some(plan), buf);
    pnorm_of_leaves(buf, tree.space.dim, tree.space.exponent, p)
}

/// Optimize transform coefficients over the extreme points of the hull of
/// `set`. Exhaustive when `|Ext|^slots <= budget`, otherwise seeded cyclic
/// coordinate ascent, monotone in the objective.
pub fn optimize_coefficients(
    tree: &MartingaleTree,
    set: &PointSet,
    mode: PlanMode,
    p: f64,
    budget: u128,
    rng: &mut impl Rng,
) -> CoefficientPlan {
    let ext = set.convex_hull().as_point_set();
    let ext = ext.points();
    let start = {
        let coeffs =
            (0..CoefficientPlan::slot_count(mode, tree.depth)).map(|_| ext[rng.gen_range(0..ext.len())]).collect();
        CoefficientPlan { mode, depth: tree.depth, coeffs }
    };
    optimize_coefficients_from(tree, ext, start, p, budget)
}

/// Same as [`optimize_coefficients`] but warm-started; used by the
/// alternating optimizer so the plan step never decreases the objective.
fn optimize_coefficients_from(
    tree: &MartingaleTree,
    ext: &[Scalar],
    start: CoefficientPlan,
    p: f64,
    budget: u128,
) -> CoefficientPlan {
    let slots = CoefficientPlan::slot_count(start.mode, tree.depth);
    let mut buf = Vec::new();
    if ext.len() == 1 {
        return CoefficientPlan::constant(start.mode, tree.depth, ext[0]);
    }
    let combos = (ext.len() as u128).checked_pow(slots as u32);
    if combos.map_or(false, |c| c <= budget) {
        // Exhaustive enumeration in odometer order; first maximizer wins.
        let mut idx = vec![0usize; slots];
        let mut plan = CoefficientPlan {
            mode: start.mode,
            depth: tree.depth,
            coeffs: vec![ext[0]; slots],
        };
        let mut best = plan.clone();
        let mut best_val = plan_objective(tree, &plan, p, &mut buf);
        loop {
            // advance odometer
            let mut s = 0;
            loop {
                if s == slots {
                    return best;
                }
                idx[s] += 1;
                if idx[s] < ext.len() {
                    plan.coeffs[s] = ext[idx[s]];
                    break;
                }
                idx[s] = 0;
                plan.coeffs[s] = ext[0];
                s += 1;
            }
            let val = plan_objective(tree, &plan, p, &mut buf);
            if val > best_val {
                best_val = val;
                best = plan.clone();
            }
        }
    }
    // Cyclic coordinate ascent: level 0 -> N, histories in order.
    let mut plan = start;
    let mut best_val = plan_objective(tree, &plan, p, &mut buf);
    for _sweep in 0..100 {
        let mut changed = false;
        for s in 0..slots {
            let current = plan.coeffs[s];
            let mut slot_best = current;
            let mut slot_val = best_val;
            for &e in ext {
                if e == current {
                    continue;
                }
                plan.coeffs[s] = e;
                let val = plan_objective(tree, &plan, p, &mut buf);
                if val > slot_val + 1e-15 {
                    slot_val = val;
                    slot_best = e;
                }
            }
            plan.coeffs[s] = slot_best;
            if slot_best != current {
                best_val = slot_val;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    plan
}

// ---------------------------------------------------------------------------
// Tree optimization
// ---------------------------------------------------------------------------

/// Rebuild the tree whose terminal values are the given X-valued leaf array
/// (one `dim`-block per leaf), by conditional averaging down the tree. Every
/// leaf array is realizable, so trees and leaf arrays are in bijection.
fn tree_from_leaves(space: SpaceSpec, depth: u32, leaves: &[Scalar]) -> MartingaleTree {
    let dim = space.dim;
    debug_assert_eq!(leaves.len(), (1usize << depth) * dim);
    let mut means = leaves.to_vec();
    let mut tree = MartingaleTree::zero(space, depth);
    let mut n = depth;
    while n >= 1 {
        let half = 1usize << (n - 1);
        for h in 0..half {
            let at = node_index(n, h) * dim;
            for k in 0..dim {
                let lo = means[2 * h * dim + k];
                let hi = means[(2 * h + 1) * dim + k];
                tree.data[at + k] = (hi - lo) / 2.0;
                means[h * dim + k] = (lo + hi) / 2.0;
            }
        }
        n -= 1;
    }
    tree.data[..dim].copy_from_slice(&means[..dim]);
    tree
}

/// Apply the transform to a leaf array: pyramid down, scale increments,
/// expand back. `conjugate` applies the conjugated coefficients, which is
/// the adjoint under the uniform leaf pairing (the increment projections
/// are orthogonal).
fn transform_leaves(
    space: SpaceSpec,
    depth: u32,
    plan: &CoefficientPlan,
    conjugate: bool,
    leaves: &[Scalar],
    out: &mut Vec<Scalar>,
) {
    let tree = tree_from_leaves(space, depth, leaves);
    let dim = space.dim;
    out.clear();
    out.resize(leaves.len(), Scalar::ZERO);
    let coeff = |level: u32, h: usize| {
        let c = plan.coeff(level, h);
        if conjugate {
            c.conj()
        } else {
            c
        }
    };
    let c0 = coeff(0, 0);
    for k in 0..dim {
        out[k] = c0 * tree.data[k];
    }
    let mut base = vec![Scalar::ZERO; dim];
    for n in 1..=depth {
        let half = 1usize << (n - 1);
        for h in (0..half).rev() {
            base.copy_from_slice(&out[h * dim..(h + 1) * dim]);
            let cnh = coeff(n, h);
            let phi = tree.node(n, h);
            let lo = 2 * h * dim;
            let hi = (2 * h + 1) * dim;
            for k in 0..dim {
                let step = cnh * phi[k];
                out[hi + k] = base[k] + step;
                out[lo + k] = base[k] - step;
            }
        }
    }
}

fn leaf_pnorm(leaves: &[Scalar], dim: usize, q: Exponent, p: f64) -> f64 {
    pnorm_of_leaves(leaves, dim, q, p)
}

/// Per-leaf duality map built from the norm-power subgradient.
fn leaf_duality_map(leaves: &[Scalar], dim: usize, q: Exponent, p: f64, out: &mut Vec<Scalar>) {
    out.clear();
    out.resize(leaves.len(), Scalar::ZERO);
    let mut g = vec![Scalar::ZERO; dim];
    for (chunk, slot) in leaves.chunks_exact(dim).zip(out.chunks_exact_mut(dim)) {
        subgradient_into(chunk, q, p, &mut g);
        slot.copy_from_slice(&g);
    }
}

/// Slice version of the norm-power subgradient, reused across hot loops.
fn subgradient_into(entries: &[Scalar], q: Exponent, p: f64, out: &mut [Scalar]) {
    let n = norm_q(entries, q);
    if n == 0.0 {
        out.fill(Scalar::ZERO);
        return;
    }
    let scale = p * n.powf(p - 1.0);
    match q {
        Exponent::Infinity => {
            out.fill(Scalar::ZERO);
            let mut best = 0usize;
            let mut best_m = -1.0;
            for (i, e) in entries.iter().enumerate() {
                let m = e.norm();
                if m > best_m {
                    best_m = m;
                    best = i;
                }
            }
            let m = entries[best].norm();
            out[best] = scale * entries[best] / m;
        }
        Exponent::Finite(q) => {
            for (o, e) in out.iter_mut().zip(entries) {
                let m = e.norm();
                *o = if m == 0.0 { Scalar::ZERO } else { scale * (m / n).powf(q - 1.0) * (e / m) };
            }
        }
    }
}

/// Options for [`optimize_tree`]. Defaults follow the desk-scale budget.
#[derive(Debug, Clone)]
pub struct OptimizeOptions {
    pub mode: PlanMode,
    pub restarts: usize,
    pub seed: u64,
    /// Enumeration cutoff for the coefficient subproblem.
    pub budget: u128,
    /// Cap on plan/tree alternations per restart.
    pub max_outer: usize,
    /// Ascent steps per tree phase.
    pub inner_steps: usize,
    /// Stop when the relative improvement of an alternation drops below this.
    pub rel_tol: f64,
    /// Witness from a shallower run; zero-padded and used in restart 0.
    pub warm_start: Option<(MartingaleTree, CoefficientPlan)>,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            mode: PlanMode::Level,
            restarts: 16,
            seed: 0,
            budget: 4096,
            max_outer: 40,
            inner_steps: 60,
            rel_tol: 1e-8,
            warm_start: None,
        }
    }
}

/// A certified lower bound: the value is an achieved transform ratio,
/// recomputable from the stored witnesses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub value: f64,
    pub witness_tree: MartingaleTree,
    pub witness_plan: CoefficientPlan,
    pub depth: u32,
    pub restarts_used: usize,
    pub seed: u64,
    pub p: f64,
}

impl BetaEstimate {
    /// Recompute the ratio from the witnesses; by construction it matches
    /// `value` to 1e-10.
    pub fn recompute(&self) -> Result<f64, MartingaleError> {
        ratio(&self.witness_tree, &self.witness_plan, self.p)
    }
}

fn single_restart(
    set: &PointSet,
    p: f64,
    depth: u32,
    space: SpaceSpec,
    opts: &OptimizeOptions,
    restart: usize,
) -> (f64, MartingaleTree, CoefficientPlan) {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(restart as u64);
    let ext_set = set.convex_hull().as_point_set();
    let ext = ext_set.points();

    let (mut tree, mut plan) = match (&opts.warm_start, restart) {
        (Some((wt, wp)), 0) => {
            let mut t = wt.zero_padded(depth);
            let s = terminal_pnorm(&t, p);
            if s > 0.0 {
                t.scale_in_place(1.0 / s);
            }
            (t, wp.zero_padded(depth, ext[0]))
        }
        _ => {
            let t = MartingaleTree::random_normalized(space, depth, p, &mut rng);
            let coeffs = (0..CoefficientPlan::slot_count(opts.mode, depth))
                .map(|_| ext[rng.gen_range(0..ext.len())])
                .collect();
            (t, CoefficientPlan { mode: opts.mode, depth, coeffs })
        }
    };
    if tree.is_zero() {
        tree = MartingaleTree::random_normalized(space, depth, p, &mut rng);
    }

    let dim = space.dim;
    let q = space.exponent;
    let qd = q.dual();
    let pd = p / (p - 1.0);
    let mut value = transformed_pnorm(&tree, &plan, p) / terminal_pnorm(&tree, p);

    let mut u = Vec::new();
    leaves_into(&tree, None, &mut u);
    let mut v = Vec::new();
    let mut w = Vec::new();
    let mut z = Vec::new();
    let mut cand = Vec::new();

    for _outer in 0..opts.max_outer {
        let before = value;
        // (a) ascent on the tree at fixed plan, working on terminal values
        // (trees and leaf arrays are in bijection). Each step follows the
        // duality-map direction built from norm_pow_subgradient and is
        // accepted only when the ratio does not decrease, backtracking
        // toward the previous normalized iterate otherwise.
        let nu = leaf_pnorm(&u, dim, q, p);
        if nu == 0.0 {
            break;
        }
        for e in u.iter_mut() {
            *e /= nu;
        }
        transform_leaves(space, depth, &plan, false, &u, &mut v);
        value = leaf_pnorm(&v, dim, q, p);
        for _step in 0..opts.inner_steps {
            leaf_duality_map(&v, dim, q, p, &mut w);
            transform_leaves(space, depth, &plan, true, &w, &mut z);
            leaf_duality_map(&z, dim, qd, pd, &mut cand);
            let nc = leaf_pnorm(&cand, dim, q, p);
            if nc == 0.0 {
                break;
            }
            for e in cand.iter_mut() {
                *e /= nc;
            }
            transform_leaves(space, depth, &plan, false, &cand, &mut v);
            let val = leaf_pnorm(&v, dim, q, p);
            if val >= value {
                let gain = val - value;
                std::mem::swap(&mut u, &mut cand);
                value = val;
                if gain <= opts.rel_tol * value {
                    break;
                }
            } else {
                // backtrack: step-halve toward the previous iterate
                let mut t = 0.5;
                let mut accepted = false;
                while t >= 1e-10 {
                    let mixed: Vec<Scalar> =
                        u.iter().zip(&cand).map(|(a, b)| a + t * (b - a)).collect();
                    let nm = leaf_pnorm(&mixed, dim, q, p);
                    if nm > 0.0 {
                        let mixed: Vec<Scalar> = mixed.iter().map(|e| e / nm).collect();
                        transform_leaves(space, depth, &plan, false, &mixed, &mut v);
                        let vm = leaf_pnorm(&v, dim, q, p);
                        if vm >= value {
                            u = mixed;
                            value = vm;
                            accepted = true;
                            break;
                        }
                    }
                    t *= 0.5;
                }
                if !accepted {
                    transform_leaves(space, depth, &plan, false, &u, &mut v);
                    break;
                }
            }
        }
        tree = tree_from_leaves(space, depth, &u);
        // (b) re-optimize the plan from its current state.
        plan = optimize_coefficients_from(&tree, ext, plan, p, opts.budget);
        value = transformed_pnorm(&tree, &plan, p) / terminal_pnorm(&tree, p);
        if value - before <= opts.rel_tol * value.max(1e-300) {
            break;
        }
    }
    let value = transformed_pnorm(&tree, &plan, p) / terminal_pnorm(&tree, p);
    (value, tree, plan)
}

/// Alternating maximization over trees and coefficient plans; the returned
/// value is the best achieved ratio over all restarts, hence a valid lower
/// bound for the transform constant.
///
/// A coefficient set with nonreal points forces the complex scalar field:
/// the witnesses then live in the complexification of the requested space.
pub fn optimize_tree(
    set: &PointSet,
    p: f64,
    depth: u32,
    space: SpaceSpec,
    opts: &OptimizeOptions,
) -> Result<BetaEstimate, MartingaleError> {
    assert!(depth >= 1, "optimize_tree requires depth >= 1");
    assert!(opts.restarts >= 1);
    let mut space = space;
    if space.is_real() && set.points().iter().any(|a| a.im != 0.0) {
        space.field = Field::Complex;
    }
    let results: Vec<(f64, MartingaleTree, CoefficientPlan)> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| single_restart(set, p, depth, space, opts, r))
        .collect();
    // Deterministic: strict improvement keeps the lowest restart index.
    let mut best = None::<(f64, MartingaleTree, CoefficientPlan)>;
    for cand in results {
        match &best {
            Some((v, _, _)) if cand.0 <= *v => {}
            _ => best = Some(cand),
        }
    }
    let (_, tree, plan) = best.unwrap();
    let value = ratio(&tree, &plan, p)?;
    Ok(BetaEstimate {
        value,
        witness_tree: tree,
        witness_plan: plan,
        depth,
        restarts_used: opts.restarts,
        seed: opts.seed,
        p,
    })
}

// ---------------------------------------------------------------------------
// Two-point lifting
// ---------------------------------------------------------------------------

/// Lift a sign plan to the two-point set `{a1, a2}`: the plans with
/// coefficients `(a1+a2)/2 ± (a1-a2)/2 * eps_n`. For each fixed tree,
/// `|a1-a2|/2 * ||T_sign f||_p <= max` of the two lifted terminal norms.
pub fn lift_witness(
    sign_plan: &CoefficientPlan,
    a1: Scalar,
    a2: Scalar,
) -> Result<(CoefficientPlan, CoefficientPlan), MartingaleError> {
    for (s, &c) in sign_plan.coeffs.iter().enumerate() {
        if c.im != 0.0 || (c.re.abs() - 1.0).abs() > 1e-12 {
            return Err(MartingaleError::NotSignPlan(s));
        }
    }
    let mid = (a1 + a2) / 2.0;
    let dev = (a1 - a2) / 2.0;
    let plus = CoefficientPlan {
        mode: sign_plan.mode,
        depth: sign_plan.depth,
        coeffs: sign_plan.coeffs.iter().map(|&e| mid + dev * e).collect(),
    };
    let minus = CoefficientPlan {
        mode: sign_plan.mode,
        depth: sign_plan.depth,
        coeffs: sign_plan.coeffs.iter().map(|&e| mid - dev * e).collect(),
    };
    Ok((plus, minus))
}

// ---------------------------------------------------------------------------
// Dense transform matrices and p <-> p' duality
// ---------------------------------------------------------------------------

/// The transform as a dense linear map on scalar terminal values.
#[derive(Debug, Clone)]
pub struct TransformMatrix {
    pub n: usize,
    /// Row-major entries; row = output leaf, column = input leaf.
    pub a: Vec<Scalar>,
}

impl TransformMatrix {
    pub fn apply(&self, x: &[Scalar], out: &mut [Scalar]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.a[r * self.n..(r + 1) * self.n];
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// Conjugate transpose: the adjoint under the uniform leaf pairing.
    pub fn adjoint(&self) -> TransformMatrix {
        let mut a = vec![Scalar::ZERO; self.n * self.n];
        for r in 0..self.n {
            for c in 0..self.n {
                a[c * self.n + r] = self.a[r * self.n + c].conj();
            }
        }
        TransformMatrix { n: self.n, a }
    }
}

/// Reconstruct the martingale tree whose terminal values are given, by
/// conditional averaging down the binary tree.
pub fn tree_from_terminal(
    space: SpaceSpec,
    depth: u32,
    terminal: &[Scalar],
) -> Result<MartingaleTree, MartingaleError> {
    if space.dim != 1 {
        return Err(MartingaleError::NotScalarSpace);
    }
    let leaves = 1usize << depth;
    assert_eq!(terminal.len(), leaves);
    let mut means = terminal.to_vec();
    let mut tree = MartingaleTree::zero(space, depth);
    let mut n = depth;
    while n >= 1 {
        let half = 1usize << (n - 1);
        for h in 0..half {
            let lo = means[2 * h];
            let hi = means[2 * h + 1];
            tree.data[node_index(n, h)] = (hi - lo) / 2.0;
            means[h] = (lo + hi) / 2.0;
        }
        n -= 1;
    }
    tree.data[0] = means[0];
    Ok(tree)
}

/// Dense matrix of `f |-> T_plan f` acting on terminal values of scalar
/// depth-`N` trees under the uniform measure p-norm.
pub fn finite_transform_matrix(
    space: SpaceSpec,
    plan: &CoefficientPlan,
) -> Result<TransformMatrix, MartingaleError> {
    if space.dim != 1 {
        return Err(MartingaleError::NotScalarSpace);
    }
    if plan.depth > 6 {
        return Err(MartingaleError::DepthTooLarge(plan.depth));
    }
    let n = 1usize << plan.depth;
    let mut a = vec![Scalar::ZERO; n * n];
    let mut basis = vec![Scalar::ZERO; n];
    let mut buf = Vec::new();
    for col in 0..n {
        basis.fill(Scalar::ZERO);
        basis[col] = Scalar::ONE;
        let tree = tree_from_terminal(space, plan.depth, &basis)?;
        leaves_into(&tree, Some(plan), &mut buf);
        for row in 0..n {
            a[row * n + col] = buf[row];
        }
    }
    Ok(TransformMatrix { n, a })
}

fn lp_norm(x: &[Scalar], p: f64) -> f64 {
    x.iter().map(|e| e.norm().powf(p)).sum::<f64>().powf(1.0 / p)
}

fn dual_map(x: &[Scalar], p: f64, out: &mut [Scalar]) {
    for (o, e) in out.iter_mut().zip(x) {
        let m = e.norm();
        *o = if m == 0.0 { Scalar::ZERO } else { m.powf(p - 1.0) * (e / m) };
    }
}

/// Safeguarded nonlinear power iteration for a lower bound on the matrix
/// p -> p operator norm; multi-start over seeded random vectors plus all
/// coordinate starts. The best ratio is achieved, hence a lower bound.
pub fn matrix_pnorm_lower_bound(
    m: &TransformMatrix,
    p: f64,
    restarts: usize,
    max_iter: usize,
    seed: u64,
) -> f64 {
    let n = m.n;
    let pd = p / (p - 1.0);
    let adj = m.adjoint();
    let mut best = 0.0_f64;
    let mut starts: Vec<Vec<Scalar>> = Vec::new();
    for i in 0..n {
        let mut e = vec![Scalar::ZERO; n];
        e[i] = Scalar::ONE;
        starts.push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..restarts {
        starts.push((0..n).map(|_| Scalar::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0))).collect());
    }
    let mut y = vec![Scalar::ZERO; n];
    let mut g = vec![Scalar::ZERO; n];
    let mut z = vec![Scalar::ZERO; n];
    for mut x in starts {
        let nx = lp_norm(&x, p);
        if nx == 0.0 {
            continue;
        }
        for e in x.iter_mut() {
            *e /= nx;
        }
        m.apply(&x, &mut y);
        let mut value = lp_norm(&y, p);
        best = best.max(value);
        for _ in 0..max_iter {
            dual_map(&y, p, &mut g);
            adj.apply(&g, &mut z);
            let mut xn = vec![Scalar::ZERO; n];
            dual_map(&z, pd, &mut xn);
            let nn = lp_norm(&xn, p);
            if nn == 0.0 {
                break;
            }
            for e in xn.iter_mut() {
                *e /= nn;
            }
            m.apply(&xn, &mut y);
            let val = lp_norm(&y, p);
            if val < value {
                // step-halve toward the previous iterate
                let mut t = 0.5;
                let mut accepted = false;
                while t >= 1e-10 {
                    let mut xm: Vec<Scalar> =
                        x.iter().zip(&xn).map(|(a, b)| a + t * (b - a)).collect();
                    let nm = lp_norm(&xm, p);
                    if nm > 0.0 {
                        for e in xm.iter_mut() {
                            *e /= nm;
                        }
                        m.apply(&xm, &mut y);
                        let vm = lp_norm(&y, p);
                        if vm >= value {
                            x = xm;
                            value = vm;
                            accepted = true;
                            break;
                        }
                    }
                    t *= 0.5;
                }
                if !accepted {
                    m.apply(&x, &mut y);
                    break;
                }
            } else {
                let improved = val - value;
                x = xn;
                value = val;
                if improved <= 1e-12 * value {
                    break;
                }
            }
        }
        best = best.max(value);
    }
    best
}

/// Estimate `||T||_{p->p}` and `||T*||_{p'->p'}`; the two must agree, which
/// the callers assert at 1e-4.
pub fn adjoint_pnorm_check(
    m: &TransformMatrix,
    p: f64,
    restarts: usize,
    seed: u64,
) -> (f64, f64) {
    let pd = p / (p - 1.0);
    let primal = matrix_pnorm_lower_bound(m, p, restarts, 300, seed);
    let dual = matrix_pnorm_lower_bound(&m.adjoint(), pd, restarts, 300, seed ^ 0x9e3779b9);
    (primal, dual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::c;

    fn scalar_space() -> SpaceSpec {
        SpaceSpec::scalar_real()
    }

    fn scalar_tree(root: f64, levels: &[&[f64]]) -> MartingaleTree {
        let sp = scalar_space();
        let rootv = Vector::new(sp, vec![c(root, 0.0)]).unwrap();
        let levels: Vec<Vec<Vector>> = levels
            .iter()
            .map(|lv| lv.iter().map(|&x| Vector::new(sp, vec![c(x, 0.0)]).unwrap()).collect())
            .collect();
        MartingaleTree::from_parts(sp, &rootv, &levels).unwrap()
    }

    #[test]
    fn terminal_pnorm_depth0_is_root_norm() {
        let t = scalar_tree(-2.5, &[]);
        assert!((terminal_pnorm(&t, 3.0) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn terminal_pnorm_symmetric_two_point() {
        let t = scalar_tree(0.0, &[&[1.7]]);
        for p in [1.5, 2.0, 4.0] {
            assert!((terminal_pnorm(&t, p) - 1.7).abs() < 1e-12);
        }
    }

    #[test]
    fn terminal_pnorm_depth2_enumeration() {
        // leaves 1 ± 1 ± 1 = {3, 1, 1, -1}; mean square 3.
        let t = scalar_tree(1.0, &[&[1.0], &[1.0, 1.0]]);
        assert!((terminal_pnorm(&t, 2.0) - 3.0_f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn identity_plan_is_identity() {
        let t = scalar_tree(0.7, &[&[1.0], &[0.5, -2.0]]);
        let plan = CoefficientPlan::constant(PlanMode::Level, 2, Scalar::ONE);
        let g = apply_transform(&t, &plan).unwrap();
        assert_eq!(t.data(), g.data());
    }

    #[test]
    fn constant_plan_ratio_is_modulus() {
        let t = scalar_tree(0.7, &[&[1.0], &[0.5, -2.0]]);
        for a in [c(2.0, 0.0), c(0.0, -3.0), c(1.0, 1.0)] {
            let plan = CoefficientPlan::constant(PlanMode::Adapted, 2, a);
            let r = ratio(&t, &plan, 4.0).unwrap();
            assert!((r - a.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn alternating_sign_plan_preserves_terminal_norm_depth1() {
        let t = scalar_tree(0.0, &[&[1.3]]);
        let plan = CoefficientPlan::new(PlanMode::Level, 1, vec![c(1.0, 0.0), c(-1.0, 0.0)]).unwrap();
        let g = apply_transform(&t, &plan).unwrap();
        assert!((terminal_pnorm(&g, 3.0) - terminal_pnorm(&t, 3.0)).abs() < 1e-14);
    }

    #[test]
    fn unimodular_plans_have_unit_ratio_at_p2() {
        // scalar p=2: increments are orthogonal, so any unimodular plan is an isometry.
        let t = scalar_tree(0.3, &[&[1.0], &[-0.25, 2.0]]);
        let plan = CoefficientPlan::new(
            PlanMode::Adapted,
            2,
            vec![c(-1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0)],
        )
        .unwrap();
        assert!((ratio(&t, &plan, 2.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_martingale_is_an_error() {
        let t = MartingaleTree::zero(scalar_space(), 2);
        let plan = CoefficientPlan::constant(PlanMode::Level, 2, Scalar::ONE);
        assert_eq!(ratio(&t, &plan, 2.0).unwrap_err(), MartingaleError::ZeroMartingale);
    }

    #[test]
    fn depth_mismatch_is_an_error() {
        let t = scalar_tree(1.0, &[&[1.0]]);
        let plan = CoefficientPlan::constant(PlanMode::Level, 2, Scalar::ONE);
        assert!(matches!(
            apply_transform(&t, &plan),
            Err(MartingaleError::DepthMismatch { .. })
        ));
    }

    #[test]
    fn singleton_set_gives_modulus() {
        let set = PointSet::new(vec![c(-0.4, 0.3)]).unwrap();
        let est = optimize_tree(
            &set,
            3.0,
            3,
            scalar_space(),
            &OptimizeOptions { restarts: 2, ..Default::default() },
        )
        .unwrap();
        assert!((est.value - 0.5).abs() < 1e-9);
        assert!((est.recompute().unwrap() - est.value).abs() < 1e-10);
    }

    #[test]
    fn p2_scalar_optimum_is_max_modulus() {
        for pts in [vec![c(-1.0, 0.0), c(1.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(0.5, 0.5), c(-0.25, 0.0), c(0.0, -0.9)]] {
            let set = PointSet::new(pts).unwrap();
            let est = optimize_tree(
                &set,
                2.0,
                4,
                scalar_space(),
                &OptimizeOptions { restarts: 4, ..Default::default() },
            )
            .unwrap();
            assert!(
                (est.value - set.max_modulus()).abs() < 1e-6,
                "value {} vs max modulus {}",
                est.value,
                set.max_modulus()
            );
        }
    }

    #[test]
    fn optimize_coefficients_p2_zero_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = MartingaleTree::random_normalized(scalar_space(), 3, 2.0, &mut rng);
        let set = PointSet::from_reals(&[0.0, 1.0]).unwrap();
        let plan = optimize_coefficients(&t, &set, PlanMode::Level, 2.0, 1 << 20, &mut rng);
        let r = ratio(&t, &plan, 2.0).unwrap();
        assert!(r <= 1.0 + 1e-12);
        assert!(r >= 1.0 - 1e-12, "constant-one plan is available, got {r}");
    }

    #[test]
    fn adapted_enumeration_at_least_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let set = PointSet::from_reals(&[-1.0, 1.0]).unwrap();
        for depth in 1..=3u32 {
            let t = MartingaleTree::random_normalized(scalar_space(), depth, 4.0, &mut rng);
            let level = optimize_coefficients(&t, &set, PlanMode::Level, 4.0, 1 << 30, &mut rng);
            let adapted = optimize_coefficients(&t, &set, PlanMode::Adapted, 4.0, 1 << 30, &mut rng);
            let rl = ratio(&t, &level, 4.0).unwrap();
            let ra = ratio(&t, &adapted, 4.0).unwrap();
            assert!(ra >= rl - 1e-12, "adapted {ra} < level {rl}");
        }
    }

    #[test]
    fn instance_scaling_law_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let set = PointSet::from_reals(&[-1.0, 0.5, 1.0]).unwrap();
        for _ in 0..50 {
            let t = MartingaleTree::random_normalized(scalar_space(), 3, 4.0, &mut rng);
            let plan = optimize_coefficients(&t, &set, PlanMode::Level, 4.0, 1 << 20, &mut rng);
            let a = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let lhs = ratio(&t, &plan.scale(a), 4.0).unwrap();
            let rhs = a.norm() * ratio(&t, &plan, 4.0).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
        }
    }

    #[test]
    fn lift_witness_sign_cases() {
        let sign = CoefficientPlan::new(
            PlanMode::Level,
            2,
            vec![c(1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0)],
        )
        .unwrap();
        let (p1, p2) = lift_witness(&sign, c(-1.0, 0.0), c(1.0, 0.0)).unwrap();
        for (s, (a, b)) in sign.coeffs().iter().zip(p1.coeffs().iter().zip(p2.coeffs())) {
            assert!((a + s).norm() < 1e-15); // mid 0, dev -1: plans are -eps, +eps
            assert!((b - s).norm() < 1e-15);
        }
        let (q1, q2) = lift_witness(&sign, c(0.0, 0.0), c(1.0, 0.0)).unwrap();
        for (a, b) in q1.coeffs().iter().zip(q2.coeffs()) {
            for v in [a, b] {
                assert!(v.norm() < 1e-15 || (v - Scalar::ONE).norm() < 1e-15);
            }
        }
        let bad = CoefficientPlan::constant(PlanMode::Level, 1, c(0.5, 0.0));
        assert!(matches!(lift_witness(&bad, Scalar::ZERO, Scalar::ONE), Err(MartingaleError::NotSignPlan(0))));
    }

    #[test]
    fn lift_inequality_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let depth = rng.gen_range(1..=4);
            let t = MartingaleTree::random_normalized(scalar_space(), depth, 3.0, &mut rng);
            let signs: Vec<Scalar> = (0..=depth as usize)
                .map(|_| if rng.gen::<bool>() { Scalar::ONE } else { -Scalar::ONE })
                .collect();
            let sign = CoefficientPlan::new(PlanMode::Level, depth, signs).unwrap();
            let a1 = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let a2 = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let (p1, p2) = lift_witness(&sign, a1, a2).unwrap();
            let lhs = (a1 - a2).norm() / 2.0 * transformed_pnorm(&t, &sign, 3.0);
            let rhs = transformed_pnorm(&t, &p1, 3.0).max(transformed_pnorm(&t, &p2, 3.0));
            assert!(rhs - lhs >= -1e-12, "lhs {lhs} rhs {rhs}");
        }
    }

    #[test]
    fn transform_matrix_identity_and_constant() {
        let sp = scalar_space();
        let id = CoefficientPlan::constant(PlanMode::Level, 3, Scalar::ONE);
        let m = finite_transform_matrix(sp, &id).unwrap();
        let norm = matrix_pnorm_lower_bound(&m, 4.0, 8, 100, 0);
        assert!((norm - 1.0).abs() < 1e-9);
        let tripled = CoefficientPlan::constant(PlanMode::Level, 3, c(-3.0, 0.0));
        let m3 = finite_transform_matrix(sp, &tripled).unwrap();
        let (a, b) = adjoint_pnorm_check(&m3, 4.0, 16, 0);
        assert!((a - 3.0).abs() < 1e-8);
        assert!((b - 3.0).abs() < 1e-8);
    }

    #[test]
    fn matrix_depth_cap() {
        let plan = CoefficientPlan::constant(PlanMode::Level, 7, Scalar::ONE);
        assert!(matches!(
            finite_transform_matrix(scalar_space(), &plan),
            Err(MartingaleError::DepthTooLarge(7))
        ));
    }

    #[test]
    fn warm_start_is_monotone_in_depth() {
        let set = PointSet::from_reals(&[-1.0, 1.0]).unwrap();
        let opts = OptimizeOptions { restarts: 4, seed: 9, ..Default::default() };
        let shallow = optimize_tree(&set, 4.0, 4, scalar_space(), &opts).unwrap();
        let deep = optimize_tree(
            &set,
            4.0,
            6,
            scalar_space(),
            &OptimizeOptions {
                restarts: 4,
                seed: 9,
                warm_start: Some((shallow.witness_tree.clone(), shallow.witness_plan.clone())),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(deep.value >= shallow.value - 1e-12);
    }

    #[test]
    fn estimates_are_reproducible_bit_for_bit() {
        let set = PointSet::from_reals(&[-1.0, 1.0]).unwrap();
        let opts = OptimizeOptions { restarts: 3, seed: 42, max_outer: 6, ..Default::default() };
        let a = optimize_tree(&set, 4.0, 3, scalar_space(), &opts).unwrap();
        let b = optimize_tree(&set, 4.0, 3, scalar_space(), &opts).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(
            serde_json::to_string(&a.witness_tree).unwrap(),
            serde_json::to_string(&b.witness_tree).unwrap()
        );
    }
}
