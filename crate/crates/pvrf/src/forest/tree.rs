//! Tree structure shared by both splitting algorithms: node representation,
//! recursive growth, and prediction routing.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{stream, stream_rng};

/// A covariate column in the dense working form used during tree growth and
/// prediction: continuous and binary columns as numbers, categorical columns
/// as level codes.
#[derive(Debug, Clone)]
pub enum WorkingColumn {
    Numeric(Vec<f64>),
    Coded { n_levels: u32, codes: Vec<u32> },
}

impl WorkingColumn {
    pub fn len(&self) -> usize {
        match self {
            WorkingColumn::Numeric(v) => v.len(),
            WorkingColumn::Coded { codes, .. } => codes.len(),
        }
    }
}

/// A split rule, stated so that routing any future observation is a pure
/// table/threshold lookup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitRule {
    /// Numeric: `x ≤ threshold` goes left.
    Threshold(f64),
    /// Categorical: `in_left[code]` goes left.  The table covers *all*
    /// declared levels of the column; levels absent from the node at fit
    /// time are assigned to the child with more training members (ties go
    /// left), so prediction never encounters an unmapped level.
    LevelSet { in_left: Vec<bool> },
}

/// One node of a fitted regression tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        /// Column index of the split variable.
        variable: usize,
        rule: SplitRule,
        /// Training members reaching this node (diagnostic; children
        /// partition this count).
        n_members: usize,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        /// Mean pseudo-value of the training members in this leaf.
        prediction: f64,
        n_members: usize,
    },
}

impl TreeNode {
    /// Leaf prediction for row `row` of `columns`.
    pub fn predict_row(&self, columns: &[WorkingColumn], row: usize) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { prediction, .. } => return *prediction,
                TreeNode::Split {
                    variable,
                    rule,
                    left,
                    right,
                    ..
                } => {
                    node = if goes_left(&columns[*variable], rule, row) {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn n_members(&self) -> usize {
        match self {
            TreeNode::Split { n_members, .. } | TreeNode::Leaf { n_members, .. } => *n_members,
        }
    }

    /// Number of leaves under (and including) this node.
    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }
}

/// Apply a rule to one row.
pub fn goes_left(column: &WorkingColumn, rule: &SplitRule, row: usize) -> bool {
    match (column, rule) {
        (WorkingColumn::Numeric(v), SplitRule::Threshold(t)) => v[row] <= *t,
        (WorkingColumn::Coded { codes, .. }, SplitRule::LevelSet { in_left }) => {
            in_left[codes[row] as usize]
        }
        _ => unreachable!("rule kind does not match column kind"),
    }
}

/// A node-splitting strategy (CART or conditional inference).
///
/// `find_split` receives the node's members and that node's private RNG; it
/// either proposes `(variable, rule)` or declines, in which case the node
/// becomes a leaf.  The growth driver applies the rule itself so that the
/// fitted tree's routing is by construction consistent with training.
pub trait Splitter {
    fn find_split(&self, members: &[u32], rng: &mut ChaCha12Rng) -> Option<(usize, SplitRule)>;
}

/// Grow a tree over `members` (indices into `columns`/`theta`).
///
/// Nodes are numbered in pre-order visit order and each draws its RNG from
/// `(tree_seed, node id)`, so the tree is a pure function of (data, seed)
/// no matter how trees are scheduled across threads.
pub fn grow_tree<S: Splitter>(
    splitter: &S,
    columns: &[WorkingColumn],
    theta: &[f64],
    members: Vec<u32>,
    tree_seed: u64,
) -> TreeNode {
    let mut next_id = 0u64;
    grow_node(splitter, columns, theta, members, tree_seed, &mut next_id)
}

fn grow_node<S: Splitter>(
    splitter: &S,
    columns: &[WorkingColumn],
    theta: &[f64],
    members: Vec<u32>,
    tree_seed: u64,
    next_id: &mut u64,
) -> TreeNode {
    let node_id = *next_id;
    *next_id += 1;
    let mut rng = stream_rng(tree_seed, &[stream::NODE, node_id]);

    let n_members = members.len();
    if let Some((variable, rule)) = splitter.find_split(&members, &mut rng) {
        let mut left_members = Vec::new();
        let mut right_members = Vec::new();
        for &m in &members {
            if goes_left(&columns[variable], &rule, m as usize) {
                left_members.push(m);
            } else {
                right_members.push(m);
            }
        }
        debug_assert!(!left_members.is_empty() && !right_members.is_empty());
        let left = grow_node(splitter, columns, theta, left_members, tree_seed, next_id);
        let right = grow_node(splitter, columns, theta, right_members, tree_seed, next_id);
        return TreeNode::Split {
            variable,
            rule,
            n_members,
            left: Box::new(left),
            right: Box::new(right),
        };
    }

    let prediction = if members.is_empty() {
        f64::NAN
    } else {
        members.iter().map(|&m| theta[m as usize]).sum::<f64>() / n_members as f64
    };
    TreeNode::Leaf {
        prediction,
        n_members,
    }
}

/// Draw `mtry` distinct candidate variable indices, returned in ascending
/// order so that tie-breaking by lowest variable index is a plain first-win
/// scan.
pub fn draw_candidates(p: usize, mtry: usize, rng: &mut ChaCha12Rng) -> Vec<usize> {
    let mut all: Vec<usize> = (0..p).collect();
    let (chosen, _) = all.partial_shuffle(rng, mtry.min(p));
    let mut chosen = chosen.to_vec();
    chosen.sort_unstable();
    chosen
}

/// Complete a categorical left-assignment over all declared levels: levels
/// unseen in the node go to the child that has more training members, with
/// ties going left.
pub fn complete_level_assignment(
    n_levels: u32,
    in_left_present: &[Option<bool>],
    n_left: usize,
    n_right: usize,
) -> Vec<bool> {
    let default_left = n_left >= n_right;
    (0..n_levels as usize)
        .map(|l| in_left_present[l].unwrap_or(default_left))
        .collect()
}
