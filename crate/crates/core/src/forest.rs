//! Random forest: bootstrap-trained CART trees with Gini splits over a
//! random feature subset per node, predicting by averaging leaf class
//! distributions across trees.

use rand::seq::index;
use rand::{Rng as _, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dimred::FeatureMatrix;
use crate::labels::{ClassId, NUM_CLASSES};
use crate::rng::{self, Rng};

pub const DEFAULT_TREE_COUNTS: [usize; 3] = [50, 100, 2000];
pub const FORMAT: &str = "hwr-forest/1";
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("{what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("class id {0} outside 1..={NUM_CLASSES}")]
    Label(ClassId),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("gini of an empty node")]
    EmptyCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        /// Training samples per class, index `id - 1`.
        counts: Vec<u32>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    /// Leaf reached by `x`; samples with `x[feature] <= threshold` go left.
    pub fn leaf(&self, x: &[f64]) -> &[u32] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { counts } => return counts,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let counts = self.leaf(x);
        let total: u32 = counts.iter().sum();
        counts.iter().map(|&c| f64::from(c) / f64::from(total)).collect()
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }
}

/// `1 - sum p_i^2`.
pub fn gini(counts: &[u32]) -> Result<f64, ForestError> {
    let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
    if total == 0 {
        return Err(ForestError::EmptyCounts);
    }
    Ok(gini_unchecked(counts, total as f64))
}

fn gini_unchecked(counts: &[u32], total: f64) -> f64 {
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = f64::from(c) / total;
            p * p
        })
        .sum::<f64>()
}

/// `floor(sqrt(d))`, at least 1.
pub fn feature_subset_size(d: usize) -> usize {
    ((d as f64).sqrt().floor() as usize).max(1)
}

/// Distinct feature indices for one node, ascending.
pub fn draw_features(rng: &mut Rng, d: usize) -> Vec<usize> {
    let mut f = index::sample(rng, d, feature_subset_size(d)).into_vec();
    f.sort_unstable();
    f
}

fn class_counts(labels: &[ClassId], rows: &[usize]) -> Vec<u32> {
    let mut counts = vec![0u32; NUM_CLASSES];
    for &r in rows {
        counts[labels[r] - 1] += 1;
    }
    counts
}

fn check_labels(labels: &[ClassId]) -> Result<(), ForestError> {
    match labels.iter().find(|&&l| !(1..=NUM_CLASSES).contains(&l)) {
        Some(&l) => Err(ForestError::Label(l)),
        None => Ok(()),
    }
}

/// Best `(feature, threshold)` over `features`, or `None` when no split
/// decreases impurity. Ties go to the lower feature, then lower threshold.
fn best_split(
    x: &FeatureMatrix,
    labels: &[ClassId],
    rows: &[usize],
    features: &[usize],
    parent: &[u32],
) -> Option<(usize, f64)> {
    let n = rows.len() as f64;
    let parent_gini = gini_unchecked(parent, n);
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order: Vec<(f64, ClassId)> = Vec::with_capacity(rows.len());
    for &f in features {
        order.clear();
        order.extend(rows.iter().map(|&r| (x.row(r)[f], labels[r])));
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = vec![0u32; NUM_CLASSES];
        let mut right = parent.to_vec();
        for s in 0..order.len() - 1 {
            let class = order[s].1 - 1;
            left[class] += 1;
            right[class] -= 1;
            let (lo, hi) = (order[s].0, order[s + 1].0);
            if lo == hi {
                continue;
            }
            let nl = (s + 1) as f64;
            let nr = n - nl;
            let child = (nl * gini_unchecked(&left, nl) + nr * gini_unchecked(&right, nr)) / n;
            let gain = parent_gini - child;
            if gain > MIN_GAIN && best.is_none_or(|(g, _, _)| gain > g) {
                let mut t = lo + (hi - lo) / 2.0;
                if t >= hi {
                    t = lo;
                }
                best = Some((gain, f, t));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

fn grow(x: &FeatureMatrix, labels: &[ClassId], rows: &mut [usize], rng: &mut Rng) -> TreeNode {
    let counts = class_counts(labels, rows);
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if pure || rows.len() < 2 {
        return TreeNode::Leaf { counts };
    }
    let features = draw_features(rng, x.cols());
    let Some((feature, threshold)) = best_split(x, labels, rows, &features, &counts) else {
        return TreeNode::Leaf { counts };
    };
    // Stable partition keeps the left-then-right sample order deterministic.
    let (mut l, mut r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.row(i)[feature] <= threshold);
    let left = grow(x, labels, &mut l, rng);
    let right = grow(x, labels, &mut r, rng);
    TreeNode::Split {
        feature,
        threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

fn grow_rows(x: &FeatureMatrix, labels: &[ClassId], rows: &mut [usize], tree_seed: u64) -> TreeNode {
    let mut r = rng::rng(tree_seed);
    grow(x, labels, rows, &mut r)
}

/// Grow one unpruned CART tree on every row of `x`.
pub fn grow_tree(x: &FeatureMatrix, labels: &[ClassId], tree_seed: u64) -> Result<TreeNode, ForestError> {
    if x.rows() != labels.len() {
        return Err(ForestError::Shape {
            what: "labels",
            expected: x.rows(),
            got: labels.len(),
        });
    }
    if x.rows() == 0 {
        return Err(ForestError::Param("need at least one sample".into()));
    }
    check_labels(labels)?;
    let mut rows: Vec<usize> = (0..x.rows()).collect();
    Ok(grow_rows(x, labels, &mut rows, tree_seed))
}

/// Bootstrap sample and tree seed for tree `b`, both drawn from stream `b`.
pub fn bootstrap(n: usize, seed: u64, b: usize) -> (Vec<usize>, u64) {
    let mut r = rng::stream(seed, b as u64);
    let rows = (0..n).map(|_| r.random_range(0..n)).collect();
    (rows, r.next_u64())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Voting {
    /// Mean of per-tree leaf distributions.
    #[default]
    Soft,
    /// Fraction of trees whose leaf argmax is each class.
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format: String,
    pub m: usize,
    pub d: usize,
    pub seed: u64,
    pub feature_subset_size: usize,
    #[serde(default)]
    pub voting: Voting,
    pub trees: Vec<TreeNode>,
}

pub fn rf_train(x: &FeatureMatrix, labels: &[ClassId], m: usize, seed: u64) -> Result<ForestModel, ForestError> {
    if x.rows() != labels.len() {
        return Err(ForestError::Shape {
            what: "labels",
            expected: x.rows(),
            got: labels.len(),
        });
    }
    if x.rows() < 2 {
        return Err(ForestError::Param(format!("need at least 2 samples, got {}", x.rows())));
    }
    if m == 0 {
        return Err(ForestError::Param("tree count must be at least 1".into()));
    }
    check_labels(labels)?;
    let n = x.rows();
    let trees = (0..m)
        .into_par_iter()
        .map(|b| {
            let (mut rows, tree_seed) = bootstrap(n, seed, b);
            grow_rows(x, labels, &mut rows, tree_seed)
        })
        .collect();
    Ok(ForestModel {
        format: FORMAT.into(),
        m,
        d: x.cols(),
        seed,
        feature_subset_size: feature_subset_size(x.cols()),
        voting: Voting::Soft,
        trees,
    })
}

impl ForestModel {
    /// Wrap prebuilt trees.
    pub fn from_trees(trees: Vec<TreeNode>, d: usize) -> Result<Self, ForestError> {
        if trees.is_empty() {
            return Err(ForestError::Param("tree count must be at least 1".into()));
        }
        Ok(Self {
            format: FORMAT.into(),
            m: trees.len(),
            d,
            seed: 0,
            feature_subset_size: feature_subset_size(d),
            voting: Voting::Soft,
            trees,
        })
    }

    /// Probability per class, index `id - 1`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, ForestError> {
        if x.len() != self.d {
            return Err(ForestError::Shape {
                what: "feature vector",
                expected: self.d,
                got: x.len(),
            });
        }
        let mut acc = vec![0.0; NUM_CLASSES];
        for tree in &self.trees {
            match self.voting {
                Voting::Soft => {
                    for (a, p) in acc.iter_mut().zip(tree.predict_proba(x)) {
                        *a += p;
                    }
                }
                Voting::Hard => acc[argmax(&tree.predict_proba(x))] += 1.0,
            }
        }
        let m = self.trees.len() as f64;
        Ok(acc.into_iter().map(|a| a / m).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<ClassId, ForestError> {
        Ok(argmax(&self.predict_proba(x)?) + 1)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate() {
        if p > v[best] {
            best = i;
        }
    }
    best
}

pub fn rf_predict_proba(model: &ForestModel, x: &[f64]) -> Result<Vec<f64>, ForestError> {
    model.predict_proba(x)
}

pub fn rf_predict(model: &ForestModel, x: &[f64]) -> Result<ClassId, ForestError> {
    model.predict(x)
}
