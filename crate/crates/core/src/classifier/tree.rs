//! Axis-aligned binary trees and the greedy grower shared by the CART
//! classifier and the boosting regressor.

use serde::{Deserialize, Serialize};

use super::{check_training_data, TreeParams};
use crate::error::Result;

/// Minimum impurity decrease for a split to be kept.
const MIN_GAIN: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` goes to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Flat node arena; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Sufficient statistics and impurity for one splitting objective.
pub(crate) trait Criterion {
    type Stats: Copy + Default;
    fn add(stats: &mut Self::Stats, target: f64);
    fn sub(stats: &mut Self::Stats, target: f64);
    fn count(stats: &Self::Stats) -> usize;
    /// Size-weighted impurity; a split's gain is parent cost minus child costs.
    fn cost(stats: &Self::Stats) -> f64;
    fn leaf_value(&self, stats: &Self::Stats) -> f64;
}

/// Gini impurity over 0/1 targets; leaves hold the positive fraction.
pub(crate) struct Gini;

#[derive(Clone, Copy, Default)]
pub(crate) struct ClassCounts {
    n: usize,
    pos: usize,
}

impl Criterion for Gini {
    type Stats = ClassCounts;

    fn add(s: &mut ClassCounts, t: f64) {
        s.n += 1;
        s.pos += usize::from(t > 0.5);
    }

    fn sub(s: &mut ClassCounts, t: f64) {
        s.n -= 1;
        s.pos -= usize::from(t > 0.5);
    }

    fn count(s: &ClassCounts) -> usize {
        s.n
    }

    fn cost(s: &ClassCounts) -> f64 {
        if s.n == 0 {
            return 0.0;
        }
        // n * (1 - p² - q²) = 2·pos·neg / n
        let (pos, neg) = (s.pos as f64, (s.n - s.pos) as f64);
        2.0 * pos * neg / s.n as f64
    }

    fn leaf_value(&self, s: &ClassCounts) -> f64 {
        s.pos as f64 / s.n as f64
    }
}

/// Squared error; leaves hold `scale` times the mean target.
pub(crate) struct SquaredError {
    pub scale: f64,
}

#[derive(Clone, Copy, Default)]
pub(crate) struct SumStats {
    n: usize,
    sum: f64,
}

impl Criterion for SquaredError {
    type Stats = SumStats;

    fn add(s: &mut SumStats, t: f64) {
        s.n += 1;
        s.sum += t;
    }

    fn sub(s: &mut SumStats, t: f64) {
        s.n -= 1;
        s.sum -= t;
    }

    fn count(s: &SumStats) -> usize {
        s.n
    }

    fn cost(s: &SumStats) -> f64 {
        // SSE up to the constant Σt², which cancels in the gain
        if s.n == 0 {
            0.0
        } else {
            -(s.sum * s.sum) / s.n as f64
        }
    }

    fn leaf_value(&self, s: &SumStats) -> f64 {
        self.scale * s.sum / s.n as f64
    }
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
    /// Number of rows (in sorted order) going left.
    n_left: usize,
}

pub(crate) struct Grower<'a, C: Criterion> {
    pub x: &'a [Vec<f64>],
    pub targets: &'a [f64],
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub criterion: C,
}

impl<C: Criterion> Grower<'_, C> {
    pub fn grow(&self, rows: Vec<usize>) -> Tree {
        let mut nodes = Vec::new();
        self.build(rows, 0, &mut nodes);
        Tree { nodes }
    }

    fn stats(&self, rows: &[usize]) -> C::Stats {
        let mut s = C::Stats::default();
        for &r in rows {
            C::add(&mut s, self.targets[r]);
        }
        s
    }

    fn build(&self, rows: Vec<usize>, depth: usize, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        let stats = self.stats(&rows);
        nodes.push(Node::Leaf {
            value: self.criterion.leaf_value(&stats),
        });
        if depth >= self.max_depth || rows.len() < 2 * self.min_samples_leaf.max(1) {
            return id;
        }
        let Some(best) = self.best_split(&rows, &stats) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| self.x[r][best.feature] <= best.threshold);
        debug_assert_eq!(left_rows.len(), best.n_left);
        let left = self.build(left_rows, depth + 1, nodes);
        let right = self.build(right_rows, depth + 1, nodes);
        nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    /// Exhaustive search over midpoints between consecutive distinct values.
    /// Only a strictly larger gain replaces the incumbent, so ties go to the
    /// lowest feature index and then the lowest threshold.
    fn best_split(&self, rows: &[usize], parent: &C::Stats) -> Option<BestSplit> {
        let n = rows.len();
        let min_leaf = self.min_samples_leaf.max(1);
        let parent_cost = C::cost(parent);
        let d = self.x[rows[0]].len();
        let mut best: Option<BestSplit> = None;
        let mut sorted = rows.to_vec();
        for f in 0..d {
            sorted.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left = C::Stats::default();
            let mut right = *parent;
            for pos in 0..n - 1 {
                let r = sorted[pos];
                C::add(&mut left, self.targets[r]);
                C::sub(&mut right, self.targets[r]);
                let n_left = pos + 1;
                if n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let (lo, hi) = (self.x[r][f], self.x[sorted[pos + 1]][f]);
                if lo == hi {
                    continue;
                }
                let gain = parent_cost - C::cost(&left) - C::cost(&right);
                if gain > MIN_GAIN && best.as_ref().map_or(true, |b| gain > b.gain) {
                    debug_assert_eq!(C::count(&left), n_left);
                    best = Some(BestSplit {
                        feature: f,
                        threshold: midpoint(lo, hi),
                        gain,
                        n_left,
                    });
                }
            }
        }
        best
    }
}

/// A threshold `t` with `lo <= t < hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mut m = (lo + hi) / 2.0;
    if !m.is_finite() {
        m = lo / 2.0 + hi / 2.0;
    }
    if m >= hi || m < lo {
        lo
    } else {
        m
    }
}

/// CART classification tree with Gini splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub params: TreeParams,
    pub n_features: usize,
    pub tree: Tree,
}

impl DecisionTree {
    /// Probability of class 1 for one row.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        self.tree.predict(x)
    }
}

/// Fits a Gini tree. Training is fully deterministic: split ties are broken by
/// feature index and threshold, so `seed` never changes the result.
pub fn train_tree(x: &[Vec<f64>], y: &[u8], params: &TreeParams, _seed: u64) -> Result<DecisionTree> {
    params.validate()?;
    let d = check_training_data(x, y)?;
    let targets: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let grower = Grower {
        x,
        targets: &targets,
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        criterion: Gini,
    };
    Ok(DecisionTree {
        params: *params,
        n_features: d,
        tree: grower.grow((0..x.len()).collect()),
    })
}
