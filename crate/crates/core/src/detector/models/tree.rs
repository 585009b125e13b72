//! Binary classification trees over small integer features, stored as a
//! flat node array so any reader can reload them without recursion.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One node. Samples with `x[feature] <= cut` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split {
        feature: usize,
        cut: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Fraction of positive training samples that reached this leaf.
        leaf: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Positive fraction at the leaf reached by `x`.
    pub fn leaf_value(&self, x: &[i8]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { leaf } => return leaf,
                Node::Split {
                    feature,
                    cut,
                    left,
                    right,
                } => at = if f64::from(x[feature]) <= cut { left } else { right },
            }
        }
    }

    /// A tree votes positive when more than half of its leaf is positive.
    pub fn votes_positive(&self, x: &[i8]) -> bool {
        self.leaf_value(x) > 0.5
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 1,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// How a node picks its split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRule {
    /// Best Gini cut over `candidates` random features (all features when
    /// `None`), cuts at midpoints between observed values.
    Exhaustive { candidates: Option<usize> },
    /// Geurts-style: `candidates` random non-constant features, one uniform
    /// random cut each between the node's min and max, best Gini wins.
    Randomized { candidates: usize },
}

fn gini_weighted(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    // total · (1 − p² − (1 − p)²)
    total as f64 * 2.0 * p * (1.0 - p)
}

fn split_cost(x: &[Vec<i8>], y: &[bool], idx: &[usize], feature: usize, cut: f64) -> f64 {
    let (mut left, mut left_pos, mut right_pos) = (0usize, 0usize, 0usize);
    for &i in idx {
        if f64::from(x[i][feature]) <= cut {
            left += 1;
            left_pos += usize::from(y[i]);
        } else {
            right_pos += usize::from(y[i]);
        }
    }
    gini_weighted(left_pos, left) + gini_weighted(right_pos, idx.len() - left)
}

fn feature_range(x: &[Vec<i8>], idx: &[usize], feature: usize) -> (i8, i8) {
    idx.iter()
        .map(|&i| x[i][feature])
        .fold((i8::MAX, i8::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn choose_split<R: Rng>(
    rule: SplitRule,
    x: &[Vec<i8>],
    y: &[bool],
    idx: &[usize],
    rng: &mut R,
) -> Option<(usize, f64)> {
    let dim = x[idx[0]].len();
    let non_constant: Vec<usize> = (0..dim)
        .filter(|&f| {
            let (lo, hi) = feature_range(x, idx, f);
            lo < hi
        })
        .collect();
    if non_constant.is_empty() {
        return None;
    }
    let pick = |k: usize, rng: &mut R| -> Vec<usize> {
        if k >= non_constant.len() {
            non_constant.clone()
        } else {
            index::sample(rng, non_constant.len(), k)
                .into_iter()
                .map(|j| non_constant[j])
                .collect()
        }
    };
    let mut best: Option<(f64, usize, f64)> = None;
    let mut consider = |cost: f64, feature: usize, cut: f64| {
        if best.is_none_or(|(c, _, _)| cost < c) {
            best = Some((cost, feature, cut));
        }
    };
    match rule {
        SplitRule::Randomized { candidates } => {
            for feature in pick(candidates, rng) {
                let (lo, hi) = feature_range(x, idx, feature);
                let cut = rng.gen_range(f64::from(lo)..f64::from(hi));
                consider(split_cost(x, y, idx, feature, cut), feature, cut);
            }
        }
        SplitRule::Exhaustive { candidates } => {
            let features = match candidates {
                Some(k) => {
                    let mut f = pick(k, rng);
                    f.sort_unstable();
                    f
                }
                None => non_constant.clone(),
            };
            for feature in features {
                let mut values: Vec<i8> = idx.iter().map(|&i| x[i][feature]).collect();
                values.sort_unstable();
                values.dedup();
                for pair in values.windows(2) {
                    let cut = (f64::from(pair[0]) + f64::from(pair[1])) / 2.0;
                    consider(split_cost(x, y, idx, feature, cut), feature, cut);
                }
            }
        }
    }
    best.map(|(_, f, c)| (f, c))
}

/// Grows a tree until every leaf is pure, holds fewer than two samples, or
/// has no feature left to split on (or `max_depth` is reached).
///
/// Nodes are built depth-first, left child first, so the random stream is
/// consumed in an order fixed by the tree shape alone.
pub fn grow<R: Rng>(
    x: &[Vec<i8>],
    y: &[bool],
    sample: Vec<usize>,
    rule: SplitRule,
    max_depth: Option<usize>,
    rng: &mut R,
) -> Tree {
    struct Pending {
        slot: usize,
        idx: Vec<usize>,
        depth: usize,
    }
    let mut nodes = vec![Node::Leaf { leaf: 0.0 }];
    let mut stack = vec![Pending {
        slot: 0,
        idx: sample,
        depth: 0,
    }];
    while let Some(Pending { slot, idx, depth }) = stack.pop() {
        let positives = idx.iter().filter(|&&i| y[i]).count();
        let fraction = if idx.is_empty() { 0.0 } else { positives as f64 / idx.len() as f64 };
        let pure = positives == 0 || positives == idx.len();
        let capped = max_depth.is_some_and(|d| depth >= d);
        let split = if pure || idx.len() < 2 || capped {
            None
        } else {
            choose_split(rule, x, y, &idx, rng)
        };
        let Some((feature, cut)) = split else {
            nodes[slot] = Node::Leaf { leaf: fraction };
            continue;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            idx.into_iter().partition(|&i| f64::from(x[i][feature]) <= cut);
        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { leaf: 0.0 });
        nodes.push(Node::Leaf { leaf: 0.0 });
        nodes[slot] = Node::Split {
            feature,
            cut,
            left,
            right,
        };
        stack.push(Pending {
            slot: right,
            idx: right_idx,
            depth: depth + 1,
        });
        stack.push(Pending {
            slot: left,
            idx: left_idx,
            depth: depth + 1,
        });
    }
    Tree { nodes }
}
