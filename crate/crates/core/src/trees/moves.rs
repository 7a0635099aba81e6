use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{DecisionTree, SplitRule, TreeDesign};
use crate::error::{Error, Result};
use crate::priors::tree_split_probability;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoveProbabilities {
    pub grow: f64,
    pub prune: f64,
    pub change: f64,
}

impl Default for MoveProbabilities {
    fn default() -> Self {
        MoveProbabilities {
            grow: 0.25,
            prune: 0.25,
            change: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MoveKind {
    Grow,
    Prune,
    Change,
}

/// Everything a tree update needs besides the tree itself.
#[derive(Clone, Copy, Debug)]
pub struct MoveContext<'a> {
    pub design: &'a TreeDesign,
    /// Partial residual minus offset, `r_i - u_i`, per training row.
    pub resid: &'a [f64],
    /// Conditional error variance of this outcome.
    pub v: f64,
    /// Leaf-prior variance σ_μ².
    pub leaf_var: f64,
    pub alpha: f64,
    pub beta: f64,
    pub probs: MoveProbabilities,
}

/// A candidate tree expressed as an edit of the current one.
#[derive(Clone, Debug)]
pub struct Proposal {
    pub kind: MoveKind,
    pub node: usize,
    pub rule: Option<SplitRule>,
    pub left_rows: Vec<u32>,
    pub right_rows: Vec<u32>,
    pub log_lik_ratio: f64,
    pub log_prior_ratio: f64,
    pub log_q_ratio: f64,
    /// No valid candidate exists; the move must be rejected.
    pub auto_reject: bool,
}

impl Proposal {
    fn rejected(kind: MoveKind) -> Self {
        Proposal {
            kind,
            node: 0,
            rule: None,
            left_rows: vec![],
            right_rows: vec![],
            log_lik_ratio: 0.0,
            log_prior_ratio: 0.0,
            log_q_ratio: 0.0,
            auto_reject: true,
        }
    }

    pub fn log_ratio(&self) -> f64 {
        if self.auto_reject {
            f64::NEG_INFINITY
        } else {
            self.log_lik_ratio + self.log_prior_ratio + self.log_q_ratio
        }
    }

    pub fn apply(self, tree: &mut DecisionTree) {
        assert!(!self.auto_reject, "applying an auto-rejected proposal");
        match self.kind {
            MoveKind::Grow => tree.split_leaf(
                self.node,
                self.rule.expect("grow carries a rule"),
                self.left_rows,
                self.right_rows,
            ),
            MoveKind::Prune => tree.collapse(self.node),
            MoveKind::Change => tree.change_rule(
                self.node,
                self.rule.expect("change carries a rule"),
                self.left_rows,
                self.right_rows,
            ),
        }
    }
}

/// Leaf log marginal of `n` values with sum `w` and sum of squares `s`,
/// each `N(μ, v)` with `μ ~ N(0, leaf_var)` integrated out.
pub fn leaf_log_marginal(n: usize, w: f64, s: f64, v: f64, leaf_var: f64) -> f64 {
    let nf = n as f64;
    -0.5 * nf * (2.0 * std::f64::consts::PI * v).ln() - s / (2.0 * v) + leaf_core(n, w, v, leaf_var)
}

/// The part of [`leaf_log_marginal`] that does not cancel between partitions of the same rows.
#[inline]
fn leaf_core(n: usize, w: f64, v: f64, leaf_var: f64) -> f64 {
    let denom = v + n as f64 * leaf_var;
    0.5 * (v / denom).ln() + leaf_var * w * w / (2.0 * v * denom)
}

/// Sum over leaves of the integrated log likelihood of `residuals - offsets`.
pub fn tree_log_marginal_likelihood(
    tree: &DecisionTree,
    residuals: &[f64],
    offsets: &[f64],
    v: f64,
    leaf_sd: f64,
) -> f64 {
    tree.leaves()
        .into_iter()
        .map(|id| {
            let (mut w, mut s) = (0.0, 0.0);
            let rows = tree.leaf_rows(id);
            for &r in rows {
                let e = residuals[r as usize] - offsets[r as usize];
                w += e;
                s += e * e;
            }
            leaf_log_marginal(rows.len(), w, s, v, leaf_sd * leaf_sd)
        })
        .sum()
}

fn sum_rows(resid: &[f64], rows: &[u32]) -> f64 {
    rows.iter().map(|&r| resid[r as usize]).sum()
}

/// Sort observed levels by mean partial residual, ties by level index.
pub fn order_categorical_levels(levels: &[usize], means: &[f64]) -> Result<Vec<usize>> {
    if levels.len() < 2 {
        return Err(Error::SingleLevel);
    }
    let mut idx: Vec<usize> = (0..levels.len()).collect();
    idx.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(levels[a].cmp(&levels[b])));
    Ok(idx.into_iter().map(|k| levels[k]).collect())
}

/// Draw a split rule on `var` for a node holding `rows`; `var` must be splittable there.
fn draw_rule<R: Rng + ?Sized>(ctx: &MoveContext, var: usize, rows: &[u32], rng: &mut R) -> SplitRule {
    let design = ctx.design;
    if design.is_categorical(var) {
        let present = design.present_levels(var, rows);
        let l = design.levels[var].expect("categorical");
        let mut sums = vec![0.0; l];
        let mut counts = vec![0usize; l];
        for &r in rows {
            let lv = design.columns[var][r as usize] as usize;
            sums[lv] += ctx.resid[r as usize];
            counts[lv] += 1;
        }
        let means: Vec<f64> = present.iter().map(|&k| sums[k] / counts[k] as f64).collect();
        let order = order_categorical_levels(&present, &means).expect("splittable var");
        let cut = rng.random_range(1..order.len());
        let mask = order[..cut].iter().fold(0u64, |m, &lv| m | (1u64 << lv));
        SplitRule::Categorical { var, left_mask: mask }
    } else {
        let vals = design.distinct_values(var, rows);
        let t = vals[rng.random_range(0..vals.len() - 1)];
        SplitRule::Continuous { var, threshold: t }
    }
}

/// Uniformly random splittable variable, or `None`.
fn draw_var<R: Rng + ?Sized>(design: &TreeDesign, rows: &[u32], rng: &mut R) -> Option<usize> {
    let mut vars: Vec<usize> = (0..design.n_vars()).collect();
    vars.shuffle(rng);
    vars.into_iter().find(|&v| design.var_splittable(v, rows))
}

fn partition(design: &TreeDesign, rule: &SplitRule, rows: &[u32]) -> (Vec<u32>, Vec<u32>) {
    let col = &design.columns[rule.var()];
    rows.iter().partition(|&&r| rule.goes_left(col[r as usize]))
}

/// `ln(1 - p(depth))` for a splittable leaf, 0 otherwise.
fn leaf_prior_term(ctx: &MoveContext, depth: usize, rows: &[u32]) -> f64 {
    if ctx.design.node_splittable(rows) {
        (1.0 - tree_split_probability(depth, ctx.alpha, ctx.beta)).ln()
    } else {
        0.0
    }
}

fn is_nog(tree: &DecisionTree, id: usize) -> bool {
    match tree.children(id) {
        Some((l, r)) => tree.rule(l).is_none() && tree.rule(r).is_none(),
        None => false,
    }
}

/// Draw a grow, prune, or change candidate.
pub fn propose_move<R: Rng + ?Sized>(
    tree: &DecisionTree,
    ctx: &MoveContext,
    rng: &mut R,
) -> Proposal {
    let p = ctx.probs;
    let kind = if tree.is_stump() {
        MoveKind::Grow
    } else {
        let u: f64 = rng.random();
        if u < p.grow {
            MoveKind::Grow
        } else if u < p.grow + p.prune {
            MoveKind::Prune
        } else {
            MoveKind::Change
        }
    };
    match kind {
        MoveKind::Grow => propose_grow(tree, ctx, rng),
        MoveKind::Prune => propose_prune(tree, ctx, rng),
        MoveKind::Change => propose_change(tree, ctx, rng),
    }
}

fn grow_probability(tree: &DecisionTree, p: &MoveProbabilities) -> f64 {
    if tree.is_stump() {
        1.0
    } else {
        p.grow
    }
}

fn propose_grow<R: Rng + ?Sized>(tree: &DecisionTree, ctx: &MoveContext, rng: &mut R) -> Proposal {
    let leaves = tree.leaves();
    let b = leaves.len();
    let leaf = leaves[rng.random_range(0..b)];
    let rows = tree.leaf_rows(leaf);
    let Some(var) = draw_var(ctx.design, rows, rng) else {
        return Proposal::rejected(MoveKind::Grow);
    };
    let rule = draw_rule(ctx, var, rows, rng);
    let (left, right) = partition(ctx.design, &rule, rows);
    let depth = tree.node(leaf).depth;

    let (wl, wr) = (sum_rows(ctx.resid, &left), sum_rows(ctx.resid, &right));
    let log_lik = leaf_core(left.len(), wl, ctx.v, ctx.leaf_var)
        + leaf_core(right.len(), wr, ctx.v, ctx.leaf_var)
        - leaf_core(rows.len(), wl + wr, ctx.v, ctx.leaf_var);

    // the rule probability appears in both prior and proposal and cancels
    let p_d = tree_split_probability(depth, ctx.alpha, ctx.beta);
    let log_prior = p_d.ln() - (1.0 - p_d).ln()
        + leaf_prior_term(ctx, depth + 1, &left)
        + leaf_prior_term(ctx, depth + 1, &right);

    let w = tree.nog_nodes().len();
    let parent_was_nog = tree.node(leaf).parent.is_some_and(|pa| is_nog(tree, pa));
    let w_star = w + 1 - usize::from(parent_was_nog);
    let log_q = (ctx.probs.prune / w_star as f64).ln()
        - (grow_probability(tree, &ctx.probs) / b as f64).ln();

    Proposal {
        kind: MoveKind::Grow,
        node: leaf,
        rule: Some(rule),
        left_rows: left,
        right_rows: right,
        log_lik_ratio: log_lik,
        log_prior_ratio: log_prior,
        log_q_ratio: log_q,
        auto_reject: false,
    }
}

fn propose_prune<R: Rng + ?Sized>(tree: &DecisionTree, ctx: &MoveContext, rng: &mut R) -> Proposal {
    let nog = tree.nog_nodes();
    let w = nog.len();
    let node = nog[rng.random_range(0..w)];
    let (l, r) = tree.children(node).expect("nog node");
    let (left, right) = (tree.leaf_rows(l), tree.leaf_rows(r));
    let depth = tree.node(node).depth;

    let (wl, wr) = (sum_rows(ctx.resid, left), sum_rows(ctx.resid, right));
    let log_lik = leaf_core(left.len() + right.len(), wl + wr, ctx.v, ctx.leaf_var)
        - leaf_core(left.len(), wl, ctx.v, ctx.leaf_var)
        - leaf_core(right.len(), wr, ctx.v, ctx.leaf_var);

    let p_d = tree_split_probability(depth, ctx.alpha, ctx.beta);
    let log_prior = (1.0 - p_d).ln()
        - p_d.ln()
        - leaf_prior_term(ctx, depth + 1, left)
        - leaf_prior_term(ctx, depth + 1, right);

    let b_star = tree.n_leaves() - 1;
    let p_grow_star = if node == 0 { 1.0 } else { ctx.probs.grow };
    let log_q = (p_grow_star / b_star as f64).ln() - (ctx.probs.prune / w as f64).ln();

    Proposal {
        kind: MoveKind::Prune,
        node,
        rule: None,
        left_rows: vec![],
        right_rows: vec![],
        log_lik_ratio: log_lik,
        log_prior_ratio: log_prior,
        log_q_ratio: log_q,
        auto_reject: false,
    }
}

fn propose_change<R: Rng + ?Sized>(tree: &DecisionTree, ctx: &MoveContext, rng: &mut R) -> Proposal {
    let nog = tree.nog_nodes();
    let node = nog[rng.random_range(0..nog.len())];
    let (l, r) = tree.children(node).expect("nog node");
    let (old_left, old_right) = (tree.leaf_rows(l), tree.leaf_rows(r));
    let rows = super::merge_sorted(old_left, old_right);
    let depth = tree.node(node).depth;

    let var = draw_var(ctx.design, &rows, rng).expect("a split node has a splittable variable");
    let rule = draw_rule(ctx, var, &rows, rng);
    let (left, right) = partition(ctx.design, &rule, &rows);

    let core = |rs: &[u32]| leaf_core(rs.len(), sum_rows(ctx.resid, rs), ctx.v, ctx.leaf_var);
    let log_lik = core(&left) + core(&right) - core(old_left) - core(old_right);
    let log_prior = leaf_prior_term(ctx, depth + 1, &left) + leaf_prior_term(ctx, depth + 1, &right)
        - leaf_prior_term(ctx, depth + 1, old_left)
        - leaf_prior_term(ctx, depth + 1, old_right);

    Proposal {
        kind: MoveKind::Change,
        node,
        rule: Some(rule),
        left_rows: left,
        right_rows: right,
        log_lik_ratio: log_lik,
        log_prior_ratio: log_prior,
        log_q_ratio: 0.0,
        auto_reject: false,
    }
}

/// Metropolis-Hastings accept step on a log ratio.
pub fn mh_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if log_ratio == f64::NEG_INFINITY || log_ratio.is_nan() {
        return false;
    }
    rng.random::<f64>().ln() < log_ratio
}

/// One proposal plus accept/reject; returns the move kind and whether it was accepted.
pub fn update_tree<R: Rng + ?Sized>(
    tree: &mut DecisionTree,
    ctx: &MoveContext,
    rng: &mut R,
) -> (MoveKind, bool) {
    let prop = propose_move(tree, ctx, rng);
    let kind = prop.kind;
    if prop.auto_reject {
        return (kind, false);
    }
    if mh_accept(prop.log_ratio(), rng) {
        prop.apply(tree);
        (kind, true)
    } else {
        (kind, false)
    }
}

/// Posterior mean and sd of a leaf value given `n` residuals summing to `w`.
pub fn leaf_posterior(n: usize, w: f64, v: f64, leaf_var: f64) -> (f64, f64) {
    let denom = v + n as f64 * leaf_var;
    (leaf_var / denom * w, (v * leaf_var / denom).sqrt())
}

/// Redraw every leaf from its conjugate normal posterior.
pub fn draw_leaf_parameters<R: Rng + ?Sized>(
    tree: &mut DecisionTree,
    resid: &[f64],
    v: f64,
    leaf_var: f64,
    rng: &mut R,
) {
    for id in tree.leaves() {
        let rows = tree.leaf_rows(id);
        let (mean, sd) = leaf_posterior(rows.len(), sum_rows(resid, rows), v, leaf_var);
        let z: f64 = rng.sample(StandardNormal);
        tree.set_leaf_mu(id, mean + sd * z);
    }
}
