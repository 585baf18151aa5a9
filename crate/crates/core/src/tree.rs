//! Second-order regression trees: the weighted least-squares base learner
//! fitted to per-row gradients and Hessians.
//!
//! Split search is exact and greedy over pre-sorted feature columns.
//! Candidate thresholds are midpoints between consecutive distinct values,
//! rows with `x <= threshold` go left, and equal gains are resolved toward
//! the lower feature index and then the lower threshold.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node counts above which per-feature split search runs on the rayon pool.
const PARALLEL_MIN_WORK: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        leaf: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    /// Minimum gain a split has to clear.
    pub gamma: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 6,
            min_samples_leaf: 20,
            lambda: 1.0,
            gamma: 0.0,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::Config("min_samples_leaf must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config("gamma must be non-negative".into()));
        }
        Ok(())
    }
}

impl TreeNode {
    pub fn leaf(value: f64) -> TreeNode {
        TreeNode::Leaf { leaf: value }
    }

    /// Traverses with a column accessor.
    #[inline]
    pub fn eval(&self, value_of: impl Fn(usize) -> f64) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { leaf } => return *leaf,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if value_of(*feature) <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Output for row `i` of a column-major matrix.
    #[inline]
    pub fn eval_at(&self, columns: &[Vec<f64>], i: usize) -> f64 {
        self.eval(|j| columns[j][i])
    }

    /// Highest feature index the tree reads, if it splits at all.
    pub fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split {
                feature,
                left,
                right,
                ..
            } => [Some(*feature), left.max_feature(), right.max_feature()]
                .into_iter()
                .flatten()
                .max(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Realized split gain summed per feature. Empty for a single leaf.
    pub fn gain_by_feature(&self) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        self.accumulate_gain(&mut out);
        out
    }

    pub(crate) fn accumulate_gain(&self, out: &mut BTreeMap<usize, f64>) {
        if let TreeNode::Split {
            feature,
            gain,
            left,
            right,
            ..
        } = self
        {
            *out.entry(*feature).or_insert(0.0) += gain;
            left.accumulate_gain(out);
            right.accumulate_gain(out);
        }
    }

    pub(crate) fn uses_feature(&self, j: usize) -> bool {
        match self {
            TreeNode::Leaf { .. } => false,
            TreeNode::Split {
                feature,
                left,
                right,
                ..
            } => *feature == j || left.uses_feature(j) || right.uses_feature(j),
        }
    }
}

/// Predicts one row. Fails if the row is too narrow for the tree.
pub fn predict_tree(tree: &TreeNode, row: &[f64]) -> Result<f64> {
    if let Some(j) = tree.max_feature() {
        if j >= row.len() {
            return Err(Error::WidthMismatch {
                expected: j + 1,
                got: row.len(),
            });
        }
    }
    Ok(tree.eval(|j| row[j]))
}

/// Row indices of every column sorted by value (ties by row index).
/// Reusable across all trees fitted to the same feature matrix.
#[derive(Debug, Clone)]
pub struct SortedColumns {
    order: Vec<Vec<u32>>,
}

impl SortedColumns {
    pub fn new(columns: &[Vec<f64>]) -> Self {
        let order = columns
            .par_iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        SortedColumns { order }
    }
}

/// Fits one tree to gradients `g` and Hessians `h`.
pub fn fit_tree(columns: &[Vec<f64>], g: &[f64], h: &[f64], cfg: &TreeConfig) -> Result<TreeNode> {
    let sorted = SortedColumns::new(columns);
    fit_tree_presorted(columns, &sorted, g, h, cfg)
}

pub fn fit_tree_presorted(
    columns: &[Vec<f64>],
    sorted: &SortedColumns,
    g: &[f64],
    h: &[f64],
    cfg: &TreeConfig,
) -> Result<TreeNode> {
    cfg.validate()?;
    let n = g.len();
    if n == 0 || columns.is_empty() {
        return Err(Error::EmptyInput);
    }
    if h.len() != n || columns.iter().any(|c| c.len() != n) || sorted.order.len() != columns.len() {
        return Err(Error::InvalidData(
            "gradients, Hessians and features are not row-aligned".into(),
        ));
    }
    let mut builder = Builder {
        columns,
        g,
        h,
        cfg,
        side: vec![false; n],
    };
    let rows: Vec<u32> = (0..n as u32).collect();
    Ok(builder.grow(rows, sorted.order.clone(), 0))
}

struct Builder<'a> {
    columns: &'a [Vec<f64>],
    g: &'a [f64],
    h: &'a [f64],
    cfg: &'a TreeConfig,
    /// Scratch: true for rows routed left at the node being split.
    side: Vec<bool>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn leaf_value(&self, g_sum: f64, h_sum: f64) -> f64 {
        let v = -g_sum / (h_sum + self.cfg.lambda);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    }

    fn grow(&mut self, rows: Vec<u32>, sorted: Vec<Vec<u32>>, depth: usize) -> TreeNode {
        let (mut g_sum, mut h_sum) = (0.0, 0.0);
        for &r in &rows {
            g_sum += self.g[r as usize];
            h_sum += self.h[r as usize];
        }
        let min_leaf = self.cfg.min_samples_leaf;
        if depth >= self.cfg.max_depth || rows.len() < 2 * min_leaf {
            return TreeNode::leaf(self.leaf_value(g_sum, h_sum));
        }
        let best = match self.best_split(&sorted, g_sum, h_sum) {
            Some(c) if c.gain > 0.0 => c,
            _ => return TreeNode::leaf(self.leaf_value(g_sum, h_sum)),
        };

        let col = &self.columns[best.feature];
        for &r in &rows {
            self.side[r as usize] = col[r as usize] <= best.threshold;
        }
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
            rows.iter().partition(|&&r| self.side[r as usize]);
        let mut left_sorted = Vec::with_capacity(sorted.len());
        let mut right_sorted = Vec::with_capacity(sorted.len());
        for order in sorted {
            let mut l = Vec::with_capacity(left_rows.len());
            let mut r = Vec::with_capacity(right_rows.len());
            for idx in order {
                if self.side[idx as usize] {
                    l.push(idx);
                } else {
                    r.push(idx);
                }
            }
            left_sorted.push(l);
            right_sorted.push(r);
        }
        let left = self.grow(left_rows, left_sorted, depth + 1);
        let right = self.grow(right_rows, right_sorted, depth + 1);
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            gain: best.gain,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn best_split(&self, sorted: &[Vec<u32>], g_sum: f64, h_sum: f64) -> Option<Candidate> {
        let n_node = sorted.first().map_or(0, Vec::len);
        let search = |j: usize| self.best_for_feature(j, &sorted[j], g_sum, h_sum);
        let per_feature: Vec<Option<Candidate>> = if n_node * sorted.len() >= PARALLEL_MIN_WORK {
            (0..sorted.len()).into_par_iter().map(search).collect()
        } else {
            (0..sorted.len()).map(search).collect()
        };
        // strict improvement keeps the lowest feature index on ties
        per_feature
            .into_iter()
            .flatten()
            .fold(None, |best: Option<Candidate>, c| match best {
                Some(b) if c.gain <= b.gain => Some(b),
                _ => Some(c),
            })
    }

    fn best_for_feature(
        &self,
        feature: usize,
        order: &[u32],
        g_sum: f64,
        h_sum: f64,
    ) -> Option<Candidate> {
        let col = &self.columns[feature];
        let n = order.len();
        let min_leaf = self.cfg.min_samples_leaf;
        if n < 2 || col[order[0] as usize] == col[order[n - 1] as usize] {
            return None;
        }
        let lambda = self.cfg.lambda;
        let parent = g_sum * g_sum / (h_sum + lambda);
        let (mut gl, mut hl) = (0.0, 0.0);
        let mut best: Option<Candidate> = None;
        for pos in 0..n - 1 {
            let r = order[pos] as usize;
            gl += self.g[r];
            hl += self.h[r];
            let n_left = pos + 1;
            if n_left < min_leaf {
                continue;
            }
            if n - n_left < min_leaf {
                break;
            }
            let (a, b) = (col[r], col[order[pos + 1] as usize]);
            if a == b {
                continue;
            }
            let gr = g_sum - gl;
            let hr = h_sum - hl;
            let gain =
                0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent) - self.cfg.gamma;
            if !gain.is_finite() {
                continue;
            }
            if best.is_none_or(|c| gain > c.gain) {
                let mid = 0.5 * (a + b);
                let threshold = if mid >= b || mid < a { a } else { mid };
                best = Some(Candidate {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
        best
    }
}
