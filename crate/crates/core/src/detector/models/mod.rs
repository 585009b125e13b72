//! The classifier families behind the one-vs-rest detector.

pub mod knn;
pub mod logreg;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use knn::Knn;
pub use logreg::{LogReg, LogRegParams};
pub use tree::{Node, SplitRule, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    ExtraTrees,
    RandomForest,
    Knn,
    #[serde(rename = "logreg-l2")]
    LogRegL2,
    DecisionTree,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::ExtraTrees,
        Family::RandomForest,
        Family::Knn,
        Family::LogRegL2,
        Family::DecisionTree,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::ExtraTrees => "extra-trees",
            Family::RandomForest => "random-forest",
            Family::Knn => "knn",
            Family::LogRegL2 => "logreg-l2",
            Family::DecisionTree => "decision-tree",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown model family {s:?}"))
    }
}

/// Hyperparameters shared by all families; each reads only its own fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub n_trees: usize,
    pub knn_k: usize,
    pub logreg: LogRegParams,
    /// Candidate features per node for the forests; `None` means ⌈√d⌉.
    pub max_features: Option<usize>,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            knn_k: 5,
            logreg: LogRegParams::default(),
            max_features: None,
        }
    }
}

/// One fitted per-label model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BinaryModel {
    /// Always answers `score`; used for labels too rare to fit.
    Constant { score: f64 },
    Forest { trees: Vec<Tree> },
    Tree(Tree),
    Knn(Knn),
    #[serde(rename = "logreg")]
    LogReg(LogReg),
}

impl BinaryModel {
    /// Score in [0, 1]; higher means more likely positive.
    pub fn score(&self, x: &[i8]) -> f64 {
        match self {
            BinaryModel::Constant { score } => *score,
            BinaryModel::Forest { trees } => {
                if trees.is_empty() {
                    return 0.0;
                }
                trees.iter().filter(|t| t.votes_positive(x)).count() as f64 / trees.len() as f64
            }
            BinaryModel::Tree(tree) => tree.leaf_value(x),
            BinaryModel::Knn(knn) => knn.score(x),
            BinaryModel::LogReg(model) => model.score(x),
        }
    }

    pub fn constant_negative() -> Self {
        BinaryModel::Constant { score: 0.0 }
    }
}

fn candidates(params: &ModelParams, dim: usize) -> usize {
    params
        .max_features
        .unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize)
        .clamp(1, dim.max(1))
}

/// Fits one binary model. `seed` fully determines any randomness.
pub fn fit(family: Family, x: &[Vec<i8>], y: &[bool], params: &ModelParams, seed: u64) -> BinaryModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = x.first().map_or(0, Vec::len);
    let all: Vec<usize> = (0..x.len()).collect();
    match family {
        Family::ExtraTrees => {
            let rule = SplitRule::Randomized {
                candidates: candidates(params, dim),
            };
            let trees = (0..params.n_trees)
                .map(|_| tree::grow(x, y, all.clone(), rule, None, &mut rng))
                .collect();
            BinaryModel::Forest { trees }
        }
        Family::RandomForest => {
            let rule = SplitRule::Exhaustive {
                candidates: Some(candidates(params, dim)),
            };
            let trees = (0..params.n_trees)
                .map(|_| {
                    let sample = (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect();
                    tree::grow(x, y, sample, rule, None, &mut rng)
                })
                .collect();
            BinaryModel::Forest { trees }
        }
        Family::DecisionTree => BinaryModel::Tree(tree::grow(
            x,
            y,
            all,
            SplitRule::Exhaustive { candidates: None },
            None,
            &mut rng,
        )),
        Family::Knn => BinaryModel::Knn(Knn::fit(x, y, params.knn_k)),
        Family::LogRegL2 => BinaryModel::LogReg(LogReg::fit(x, y, params.logreg)),
    }
}
