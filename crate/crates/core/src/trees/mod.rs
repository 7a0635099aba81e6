//! Regression trees: structure, proposals, and conjugate leaf updates.

mod design;
mod moves;

pub use design::TreeDesign;
pub use moves::{
    draw_leaf_parameters, leaf_log_marginal, leaf_posterior, mh_accept, order_categorical_levels, propose_move,
    tree_log_marginal_likelihood, update_tree, MoveContext, MoveKind, MoveProbabilities, Proposal,
};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Covariates;
use crate::priors::tree_split_probability;

/// Categorical split sets are stored as a `u64` bitmask.
pub const MAX_CATEGORY_LEVELS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SplitRule {
    /// `x <= threshold` goes left.
    Continuous { var: usize, threshold: f64 },
    /// Levels whose bit is set go left.
    Categorical { var: usize, left_mask: u64 },
}

impl SplitRule {
    pub fn var(&self) -> usize {
        match *self {
            SplitRule::Continuous { var, .. } | SplitRule::Categorical { var, .. } => var,
        }
    }

    #[inline]
    pub fn goes_left(&self, x: f64) -> bool {
        match *self {
            SplitRule::Continuous { threshold, .. } => x <= threshold,
            SplitRule::Categorical { left_mask, .. } => {
                let level = x as u64;
                level < 64 && (left_mask >> level) & 1 == 1
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    Leaf { mu: f64, rows: Vec<u32> },
    Internal { rule: SplitRule, left: usize, right: usize },
    Free,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub parent: Option<usize>,
    pub depth: usize,
    pub kind: NodeKind,
}

/// Arena-backed binary tree; the root is node 0. Leaves cache their training rows.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    free: Vec<usize>,
}

impl DecisionTree {
    /// Single leaf holding every training row.
    pub fn stump(n_rows: usize, mu: f64) -> Self {
        DecisionTree {
            nodes: vec![Node {
                parent: None,
                depth: 0,
                kind: NodeKind::Leaf {
                    mu,
                    rows: (0..n_rows as u32).collect(),
                },
            }],
            free: Vec::new(),
        }
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    fn alloc(&mut self, node: Node) -> usize {
        match self.free.pop() {
            Some(id) => {
                self.nodes[id] = node;
                id
            }
            None => {
                self.nodes.push(node);
                self.nodes.len() - 1
            }
        }
    }

    pub fn is_stump(&self) -> bool {
        matches!(self.nodes[0].kind, NodeKind::Leaf { .. })
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i].kind, NodeKind::Leaf { .. }))
            .collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Leaf { .. }))
            .count()
    }

    pub fn n_internal(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Internal { .. }))
            .count()
    }

    fn is_leaf(&self, id: usize) -> bool {
        matches!(self.nodes[id].kind, NodeKind::Leaf { .. })
    }

    /// Internal nodes whose children are both leaves.
    pub fn nog_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| match self.nodes[i].kind {
                NodeKind::Internal { left, right, .. } => self.is_leaf(left) && self.is_leaf(right),
                _ => false,
            })
            .collect()
    }

    pub fn leaf_rows(&self, id: usize) -> &[u32] {
        match &self.nodes[id].kind {
            NodeKind::Leaf { rows, .. } => rows,
            _ => panic!("node {id} is not a leaf"),
        }
    }

    pub fn leaf_mu(&self, id: usize) -> f64 {
        match self.nodes[id].kind {
            NodeKind::Leaf { mu, .. } => mu,
            _ => panic!("node {id} is not a leaf"),
        }
    }

    pub fn set_leaf_mu(&mut self, id: usize, value: f64) {
        match &mut self.nodes[id].kind {
            NodeKind::Leaf { mu, .. } => *mu = value,
            _ => panic!("node {id} is not a leaf"),
        }
    }

    /// Turn leaf `id` into an internal node with two fresh leaves.
    pub fn split_leaf(&mut self, id: usize, rule: SplitRule, left_rows: Vec<u32>, right_rows: Vec<u32>) {
        let depth = self.nodes[id].depth;
        let left = self.alloc(Node {
            parent: Some(id),
            depth: depth + 1,
            kind: NodeKind::Leaf { mu: 0.0, rows: left_rows },
        });
        let right = self.alloc(Node {
            parent: Some(id),
            depth: depth + 1,
            kind: NodeKind::Leaf { mu: 0.0, rows: right_rows },
        });
        self.nodes[id].kind = NodeKind::Internal { rule, left, right };
    }

    /// Collapse a node with two leaf children back into a leaf.
    pub fn collapse(&mut self, id: usize) {
        let (left, right) = match self.nodes[id].kind {
            NodeKind::Internal { left, right, .. } => (left, right),
            _ => panic!("node {id} is not internal"),
        };
        let a = match std::mem::replace(&mut self.nodes[left].kind, NodeKind::Free) {
            NodeKind::Leaf { rows, .. } => rows,
            _ => panic!("left child of {id} is not a leaf"),
        };
        let rows = match std::mem::replace(&mut self.nodes[right].kind, NodeKind::Free) {
            NodeKind::Leaf { rows: b, .. } => merge_sorted(&a, &b),
            _ => panic!("right child of {id} is not a leaf"),
        };
        self.free.push(left);
        self.free.push(right);
        self.nodes[id].kind = NodeKind::Leaf { mu: 0.0, rows };
    }

    /// Replace the rule of a node with two leaf children.
    pub fn change_rule(&mut self, id: usize, rule: SplitRule, left_rows: Vec<u32>, right_rows: Vec<u32>) {
        let (left, right) = match &mut self.nodes[id].kind {
            NodeKind::Internal { rule: r, left, right } => {
                *r = rule;
                (*left, *right)
            }
            _ => panic!("node {id} is not internal"),
        };
        if let NodeKind::Leaf { rows, .. } = &mut self.nodes[left].kind {
            *rows = left_rows;
        }
        if let NodeKind::Leaf { rows, .. } = &mut self.nodes[right].kind {
            *rows = right_rows;
        }
    }

    pub fn rule(&self, id: usize) -> Option<SplitRule> {
        match self.nodes[id].kind {
            NodeKind::Internal { rule, .. } => Some(rule),
            _ => None,
        }
    }

    pub fn children(&self, id: usize) -> Option<(usize, usize)> {
        match self.nodes[id].kind {
            NodeKind::Internal { left, right, .. } => Some((left, right)),
            _ => None,
        }
    }

    /// Leaf value for a row given a covariate accessor.
    #[inline]
    pub fn evaluate_with(&self, x: impl Fn(usize) -> f64) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id].kind {
                NodeKind::Leaf { mu, .. } => return *mu,
                NodeKind::Internal { rule, left, right } => {
                    id = if rule.goes_left(x(rule.var())) { *left } else { *right };
                }
                NodeKind::Free => unreachable!("route reached a free slot"),
            }
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.evaluate_with(|v| x[v])
    }

    pub fn evaluate_covariates(&self, x: &Covariates, row: usize) -> f64 {
        self.evaluate_with(|v| x.value(row, v))
    }

    /// Adds one to `counts[var]` for every internal node splitting on `var`.
    pub fn add_split_counts(&self, counts: &mut [u32]) {
        for n in &self.nodes {
            if let NodeKind::Internal { rule, .. } = n.kind {
                counts[rule.var()] += 1;
            }
        }
    }

    /// Compact, serializable copy without row caches.
    pub fn snapshot(&self) -> TreeSnapshot {
        let mut out = Vec::new();
        self.snapshot_into(0, &mut out);
        TreeSnapshot { nodes: out }
    }

    fn snapshot_into(&self, id: usize, out: &mut Vec<SnapshotNode>) -> u32 {
        let pos = out.len();
        match &self.nodes[id].kind {
            NodeKind::Leaf { mu, .. } => out.push(SnapshotNode::Leaf { mu: *mu }),
            NodeKind::Internal { rule, left, right } => {
                out.push(SnapshotNode::Leaf { mu: 0.0 });
                self.snapshot_into(*left, out);
                let r = self.snapshot_into(*right, out);
                out[pos] = SnapshotNode::Split { rule: *rule, right: r };
            }
            NodeKind::Free => unreachable!(),
        }
        pos as u32
    }

    /// Walk from every leaf up to the root checking parent/child links and depths.
    pub fn check_structure(&self) -> bool {
        for (id, n) in self.nodes.iter().enumerate() {
            if let NodeKind::Internal { left, right, .. } = n.kind {
                for c in [left, right] {
                    let child = &self.nodes[c];
                    if child.parent != Some(id) || child.depth != n.depth + 1 {
                        return false;
                    }
                    if matches!(child.kind, NodeKind::Free) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Build a tree from a snapshot, routing training rows to populate the leaf caches.
    pub fn from_snapshot(snap: &TreeSnapshot, design: &TreeDesign) -> Self {
        let mut tree = DecisionTree {
            nodes: Vec::new(),
            free: Vec::new(),
        };
        let rows: Vec<u32> = (0..design.n as u32).collect();
        tree.build_from(snap, 0, None, 0, rows, design);
        tree
    }

    fn build_from(
        &mut self,
        snap: &TreeSnapshot,
        pos: usize,
        parent: Option<usize>,
        depth: usize,
        rows: Vec<u32>,
        design: &TreeDesign,
    ) -> usize {
        let id = self.alloc(Node {
            parent,
            depth,
            kind: NodeKind::Free,
        });
        match snap.nodes[pos] {
            SnapshotNode::Leaf { mu } => {
                self.nodes[id].kind = NodeKind::Leaf { mu, rows };
            }
            SnapshotNode::Split { rule, right } => {
                let (l, r): (Vec<u32>, Vec<u32>) = rows
                    .iter()
                    .partition(|&&i| rule.goes_left(design.columns[rule.var()][i as usize]));
                let left = self.build_from(snap, pos + 1, Some(id), depth + 1, l, design);
                let right = self.build_from(snap, right as usize, Some(id), depth + 1, r, design);
                self.nodes[id].kind = NodeKind::Internal { rule, left, right };
            }
        }
        id
    }
}

/// Pre-order node list; a split's left child immediately follows it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSnapshot {
    pub nodes: Vec<SnapshotNode>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SnapshotNode {
    Leaf { mu: f64 },
    Split { rule: SplitRule, right: u32 },
}

impl TreeSnapshot {
    #[inline]
    pub fn evaluate_with(&self, x: impl Fn(usize) -> f64) -> f64 {
        let mut pos = 0usize;
        loop {
            match self.nodes[pos] {
                SnapshotNode::Leaf { mu } => return mu,
                SnapshotNode::Split { rule, right } => {
                    pos = if rule.goes_left(x(rule.var())) {
                        pos + 1
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.evaluate_with(|v| x[v])
    }
}

/// Draw a topology and leaf values from the tree prior on the given rows.
pub fn sample_tree_from_prior<R: Rng + ?Sized>(
    design: &TreeDesign,
    alpha: f64,
    beta: f64,
    leaf_sd: f64,
    rng: &mut R,
) -> DecisionTree {
    let mut tree = DecisionTree::stump(design.n, 0.0);
    let mut stack = vec![0usize];
    let leaf = Normal::new(0.0, leaf_sd).expect("finite sd");
    while let Some(id) = stack.pop() {
        let depth = tree.node(id).depth;
        let rows = tree.leaf_rows(id).to_vec();
        let valid: Vec<usize> = (0..design.n_vars())
            .filter(|&v| design.var_splittable(v, &rows))
            .collect();
        if valid.is_empty() || rng.random::<f64>() >= tree_split_probability(depth, alpha, beta) {
            tree.set_leaf_mu(id, leaf.sample(rng));
            continue;
        }
        let var = *valid.choose(rng).expect("non-empty");
        let rule = if design.is_categorical(var) {
            let present = design.present_levels(var, &rows);
            let cut = rng.random_range(1..present.len());
            let mask = present[..cut].iter().fold(0u64, |m, &l| m | (1 << l));
            SplitRule::Categorical { var, left_mask: mask }
        } else {
            let vals = design.distinct_values(var, &rows);
            let t = vals[rng.random_range(0..vals.len() - 1)];
            SplitRule::Continuous { var, threshold: t }
        };
        let (l, r): (Vec<u32>, Vec<u32>) = rows
            .iter()
            .partition(|&&i| rule.goes_left(design.columns[var][i as usize]));
        tree.split_leaf(id, rule, l, r);
        let (a, b) = tree.children(id).expect("just split");
        stack.push(b);
        stack.push(a);
    }
    tree
}

/// Merge two ascending row lists.
pub(crate) fn merge_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}
