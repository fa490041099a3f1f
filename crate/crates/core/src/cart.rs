//! Single-feature CART over the levels of one categorical column.
//!
//! Levels are placed on one axis ordered by a target statistic, the tree
//! splits that axis greedily, and the cost-complexity pruning level is chosen
//! by internal cross-validation with the one-standard-error rule.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glmm::level_codes;
use crate::table::{assign_folds, Column, TargetValues, TaskKind};

/// Growth and pruning settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Fewest rows a node needs before a split is attempted.
    pub min_split: usize,
    /// Fewest rows allowed in a child.
    pub min_bucket: usize,
    pub max_depth: usize,
    pub cv_folds: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            min_split: 20,
            min_bucket: 7,
            max_depth: 10,
            cv_folds: 10,
        }
    }
}

/// Sufficient statistics of the rows at one level (or node).
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LevelStats {
    pub n: f64,
    pub sum: f64,
    pub sumsq: f64,
    /// Per-class counts; empty for regression.
    pub classes: Vec<f64>,
}

impl LevelStats {
    fn empty(n_classes: usize) -> Self {
        LevelStats {
            classes: vec![0.0; n_classes],
            ..Default::default()
        }
    }

    fn add(&mut self, other: &LevelStats) {
        self.n += other.n;
        self.sum += other.sum;
        self.sumsq += other.sumsq;
        for (a, b) in self.classes.iter_mut().zip(&other.classes) {
            *a += b;
        }
    }

    fn sub(&self, other: &LevelStats) -> LevelStats {
        LevelStats {
            n: self.n - other.n,
            sum: self.sum - other.sum,
            sumsq: self.sumsq - other.sumsq,
            classes: self.classes.iter().zip(&other.classes).map(|(a, b)| a - b).collect(),
        }
    }

    /// Sum of squared errors (regression) or `n` times the Gini index.
    pub fn impurity(&self) -> f64 {
        if self.n <= 0.0 {
            return 0.0;
        }
        if self.classes.is_empty() {
            (self.sumsq - self.sum * self.sum / self.n).max(0.0)
        } else {
            (self.n - self.classes.iter().map(|c| c * c).sum::<f64>() / self.n).max(0.0)
        }
    }

    /// Mean (regression) or class proportions.
    pub fn prediction(&self) -> Vec<f64> {
        if self.classes.is_empty() {
            vec![if self.n > 0.0 { self.sum / self.n } else { 0.0 }]
        } else {
            self.classes.iter().map(|c| c / self.n.max(1e-300)).collect()
        }
    }
}

fn collect_stats(n_levels: usize, codes: &[usize], target: &TargetValues, rows: &[usize]) -> Vec<LevelStats> {
    let n_classes = target.n_classes().unwrap_or(0);
    let mut stats = vec![LevelStats::empty(n_classes); n_levels];
    for &r in rows {
        let s = &mut stats[codes[r]];
        s.n += 1.0;
        match target {
            TargetValues::Numeric(y) => {
                s.sum += y[r];
                s.sumsq += y[r] * y[r];
            }
            TargetValues::Classes { codes: y, .. } => s.classes[y[r] as usize] += 1.0,
        }
    }
    stats
}

/// Orders level indices by a target statistic: the mean (regression), the
/// positive-class share (binary), or the score on the first principal
/// component of the count-weighted covariance of class proportions
/// (multiclass). Levels without rows are placed last; ties keep the input
/// order.
pub fn order_from_stats(stats: &[LevelStats]) -> Vec<usize> {
    let present: Vec<usize> = (0..stats.len()).filter(|&i| stats[i].n > 0.0).collect();
    let n_classes = stats.first().map_or(0, |s| s.classes.len());
    let score: Vec<f64> = match n_classes {
        0 => stats.iter().map(|s| if s.n > 0.0 { s.sum / s.n } else { 0.0 }).collect(),
        2 => stats.iter().map(|s| if s.n > 0.0 { s.classes[1] / s.n } else { 0.0 }).collect(),
        c => {
            let axis = principal_axis(stats, &present, c);
            stats
                .iter()
                .map(|s| {
                    if s.n > 0.0 {
                        s.classes.iter().zip(&axis).map(|(k, a)| k / s.n * a).sum()
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    };
    let mut order = present;
    order.sort_by(|&a, &b| score[a].total_cmp(&score[b]));
    order.extend((0..stats.len()).filter(|&i| stats[i].n <= 0.0));
    order
}

/// Leading eigenvector of the weighted covariance of class-proportion rows,
/// signed so its largest-magnitude entry is positive.
fn principal_axis(stats: &[LevelStats], present: &[usize], c: usize) -> Vec<f64> {
    let total: f64 = present.iter().map(|&i| stats[i].n).sum();
    let props: Vec<Vec<f64>> = present
        .iter()
        .map(|&i| stats[i].classes.iter().map(|k| k / stats[i].n).collect())
        .collect();
    let mut mean = vec![0.0; c];
    for (p, &i) in props.iter().zip(present) {
        for k in 0..c {
            mean[k] += stats[i].n * p[k] / total;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(c, c);
    for (p, &i) in props.iter().zip(present) {
        let w = stats[i].n / total;
        for a in 0..c {
            for b in 0..c {
                cov[(a, b)] += w * (p[a] - mean[a]) * (p[b] - mean[b]);
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut best = 0;
    for k in 1..c {
        if eig.eigenvalues[k] > eig.eigenvalues[best] {
            best = k;
        }
    }
    let mut v: Vec<f64> = eig.eigenvectors.column(best).iter().copied().collect();
    let mut lead = 0;
    for k in 1..c {
        if v[k].abs() > v[lead].abs() + 1e-12 {
            lead = k;
        }
    }
    if v[lead] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// Level labels in split-axis order.
pub fn order_levels(column: &Column, target: &Column, task: TaskKind) -> Result<Vec<String>> {
    let (labels, codes) = level_codes(column)?;
    let y = TargetValues::from_column(target, task)?;
    let rows: Vec<usize> = (0..codes.len()).collect();
    let stats = collect_stats(labels.len(), &codes, &y, &rows);
    Ok(order_from_stats(&stats)
        .into_iter()
        .filter(|&i| stats[i].n > 0.0)
        .map(|i| labels[i].clone())
        .collect())
}

/// Best split position over ordered level statistics: the returned `k`
/// sends positions `..k` left. Both children need `min_bucket` rows and the
/// split must strictly reduce impurity.
pub fn best_ordered_split(ordered: &[LevelStats], min_bucket: usize) -> Option<(usize, f64)> {
    if ordered.len() < 2 {
        return None;
    }
    let mut total = LevelStats::empty(ordered[0].classes.len());
    ordered.iter().for_each(|s| total.add(s));
    let parent = total.impurity();
    let mut left = LevelStats::empty(total.classes.len());
    let mut best: Option<(usize, f64)> = None;
    for k in 1..ordered.len() {
        left.add(&ordered[k - 1]);
        let right = total.sub(&left);
        if left.n < min_bucket as f64 || right.n < min_bucket as f64 {
            continue;
        }
        let gain = parent - left.impurity() - right.impurity();
        if gain > 1e-10 * (1.0 + parent) && best.is_none_or(|(_, g)| gain > g) {
            best = Some((k, gain));
        }
    }
    best
}

#[derive(Clone, Debug)]
struct Node {
    lo: usize,
    hi: usize,
    stats: LevelStats,
    children: Option<(usize, usize)>,
}

/// A fully grown tree on an ordered level axis with its pruning sequence.
#[derive(Clone, Debug)]
pub struct GrownTree {
    nodes: Vec<Node>,
    /// Complexity at which each node is collapsed into a leaf; infinite for
    /// original leaves.
    collapse_alpha: Vec<f64>,
}

impl GrownTree {
    pub fn grow(ordered: &[LevelStats], params: &TreeParams) -> GrownTree {
        let mut total = LevelStats::empty(ordered.first().map_or(0, |s| s.classes.len()));
        ordered.iter().for_each(|s| total.add(s));
        let mut nodes = vec![Node {
            lo: 0,
            hi: ordered.len(),
            stats: total,
            children: None,
        }];
        let mut stack = vec![(0usize, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            let (lo, hi) = (nodes[id].lo, nodes[id].hi);
            if depth >= params.max_depth || nodes[id].stats.n < params.min_split as f64 {
                continue;
            }
            let Some((k, _)) = best_ordered_split(&ordered[lo..hi], params.min_bucket) else {
                continue;
            };
            let mut left = LevelStats::empty(nodes[id].stats.classes.len());
            ordered[lo..lo + k].iter().for_each(|s| left.add(s));
            let right = nodes[id].stats.sub(&left);
            let l = nodes.len();
            nodes.push(Node {
                lo,
                hi: lo + k,
                stats: left,
                children: None,
            });
            nodes.push(Node {
                lo: lo + k,
                hi,
                stats: right,
                children: None,
            });
            nodes[id].children = Some((l, l + 1));
            stack.push((l + 1, depth + 1));
            stack.push((l, depth + 1));
        }
        let collapse_alpha = weakest_link(&nodes);
        GrownTree { nodes, collapse_alpha }
    }

    /// Distinct complexity values at which the pruned tree changes, starting
    /// at 0 (the full tree).
    pub fn pruning_path(&self) -> Vec<f64> {
        let mut alphas: Vec<f64> = self.collapse_alpha.iter().copied().filter(|a| a.is_finite()).collect();
        alphas.push(0.0);
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        alphas
    }

    /// Leaf node ids of the subtree pruned at `alpha`, left to right.
    fn leaves_at(&self, alpha: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            match self.nodes[id].children {
                Some((l, r)) if self.collapse_alpha[id] > alpha => {
                    stack.push(r);
                    stack.push(l);
                }
                _ => out.push(id),
            }
        }
        out
    }

    /// Axis ranges `[lo, hi)` of the leaves at `alpha`.
    pub fn leaf_ranges(&self, alpha: f64) -> Vec<(usize, usize)> {
        self.leaves_at(alpha)
            .into_iter()
            .map(|id| (self.nodes[id].lo, self.nodes[id].hi))
            .collect()
    }

    fn leaf_stats(&self, alpha: f64) -> Vec<LevelStats> {
        self.leaves_at(alpha)
            .into_iter()
            .map(|id| self.nodes[id].stats.clone())
            .collect()
    }

    /// Every internal split reduces training impurity.
    pub fn splits_reduce_impurity(&self) -> bool {
        self.nodes.iter().all(|n| match n.children {
            Some((l, r)) => {
                self.nodes[l].stats.impurity() + self.nodes[r].stats.impurity() < n.stats.impurity()
            }
            None => true,
        })
    }
}

/// Weakest-link pruning: repeatedly collapse the internal node(s) with the
/// smallest per-leaf impurity increase.
fn weakest_link(nodes: &[Node]) -> Vec<f64> {
    let mut alpha = vec![f64::INFINITY; nodes.len()];
    let mut collapsed = vec![false; nodes.len()];
    let mut previous = 0.0f64;

    // (impurity of current subtree leaves, leaf count)
    fn subtree(nodes: &[Node], collapsed: &[bool], id: usize) -> (f64, usize) {
        match nodes[id].children {
            Some((l, r)) if !collapsed[id] => {
                let a = subtree(nodes, collapsed, l);
                let b = subtree(nodes, collapsed, r);
                (a.0 + b.0, a.1 + b.1)
            }
            _ => (nodes[id].stats.impurity(), 1),
        }
    }

    loop {
        let mut candidates = Vec::new();
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            if collapsed[id] {
                continue;
            }
            if let Some((l, r)) = nodes[id].children {
                let (r_sub, leaves) = subtree(nodes, &collapsed, id);
                let g = (nodes[id].stats.impurity() - r_sub) / (leaves as f64 - 1.0);
                candidates.push((id, g));
                stack.push(l);
                stack.push(r);
            }
        }
        let Some(min) = candidates.iter().map(|c| c.1).min_by(f64::total_cmp) else {
            break;
        };
        let level = min.max(previous);
        let tol = 1e-12 * (1.0 + min.abs());
        for &(id, g) in &candidates {
            if g <= min + tol {
                collapsed[id] = true;
                alpha[id] = level;
            }
        }
        previous = level;
    }
    // Nodes below a collapsed ancestor disappear with it.
    fn propagate(nodes: &[Node], alpha: &mut [f64], id: usize, cap: f64) {
        alpha[id] = alpha[id].min(cap);
        if let Some((l, r)) = nodes[id].children {
            let a = alpha[id];
            propagate(nodes, alpha, l, a);
            propagate(nodes, alpha, r, a);
        }
    }
    propagate(nodes, &mut alpha, 0, f64::INFINITY);
    for (id, n) in nodes.iter().enumerate() {
        if n.children.is_none() {
            alpha[id] = f64::INFINITY;
        }
    }
    alpha
}

/// One terminal node of a pruned tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    /// Dense id, 1-based, left to right on the level axis.
    pub id: usize,
    pub levels: Vec<String>,
    pub count: f64,
    pub prediction: Vec<f64>,
}

/// Pruned single-feature tree mapping levels to terminal nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelTree {
    pub order: Vec<String>,
    pub leaves: Vec<Leaf>,
    /// Selected complexity parameter.
    pub alpha: f64,
    pub path: Vec<f64>,
    /// Cross-validated loss and its standard error for each path entry.
    pub cv_error: Vec<f64>,
    pub cv_se: Vec<f64>,
}

impl LevelTree {
    fn root_only(order: Vec<String>, stats: &[LevelStats], n_classes: usize) -> LevelTree {
        let mut total = LevelStats::empty(n_classes);
        stats.iter().for_each(|s| total.add(s));
        LevelTree {
            leaves: vec![Leaf {
                id: 1,
                levels: order.clone(),
                count: total.n,
                prediction: total.prediction(),
            }],
            order,
            alpha: 0.0,
            path: vec![0.0],
            cv_error: Vec::new(),
            cv_se: Vec::new(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// Terminal id of a level; unseen levels go to the leaf with the most
    /// training rows (smallest id on ties).
    pub fn assign_leaf(&self, level: &str) -> usize {
        self.leaves
            .iter()
            .find(|l| l.levels.iter().any(|x| x == level))
            .map(|l| l.id)
            .unwrap_or_else(|| self.largest_leaf())
    }

    pub fn largest_leaf(&self) -> usize {
        let mut best = &self.leaves[0];
        for l in &self.leaves[1..] {
            if l.count > best.count {
                best = l;
            }
        }
        best.id
    }

    /// Level → terminal id lookup for the training levels.
    pub fn level_map(&self) -> HashMap<&str, usize> {
        self.leaves
            .iter()
            .flat_map(|l| l.levels.iter().map(move |x| (x.as_str(), l.id)))
            .collect()
    }
}

/// Grows and prunes a tree of `target` on the levels of `column`.
pub fn grow_and_prune(column: &Column, target: &Column, task: TaskKind, seed: u64) -> Result<LevelTree> {
    let (labels, codes) = level_codes(column)?;
    let y = TargetValues::from_column(target, task)?;
    if codes.len() != y.len() {
        return Err(Error::InvalidArgument("feature and target differ in length".into()));
    }
    fit_level_tree(&labels, &codes, &y, &TreeParams::default(), seed)
}

/// Tree fit on coded rows.
pub fn fit_level_tree(
    labels: &[String],
    codes: &[usize],
    target: &TargetValues,
    params: &TreeParams,
    seed: u64,
) -> Result<LevelTree> {
    let n = codes.len();
    let n_classes = target.n_classes().unwrap_or(0);
    let all: Vec<usize> = (0..n).collect();
    let stats = collect_stats(labels.len(), codes, target, &all);
    let order: Vec<usize> = order_from_stats(&stats).into_iter().filter(|&i| stats[i].n > 0.0).collect();
    let order_labels: Vec<String> = order.iter().map(|&i| labels[i].clone()).collect();
    let ordered: Vec<LevelStats> = order.iter().map(|&i| stats[i].clone()).collect();

    if n < params.min_split.max(params.cv_folds) || ordered.len() < 2 {
        return Ok(LevelTree::root_only(order_labels, &ordered, n_classes));
    }
    let full = GrownTree::grow(&ordered, params);
    let path = full.pruning_path();
    if path.len() == 1 {
        return Ok(LevelTree::root_only(order_labels, &ordered, n_classes));
    }
    // Geometric midpoints of consecutive path values.
    let probes: Vec<f64> = (0..path.len())
        .map(|k| {
            if k + 1 < path.len() {
                (path[k] * path[k + 1]).sqrt()
            } else {
                path[k] * 2.0 + 1.0
            }
        })
        .collect();

    let folds = match target {
        TargetValues::Classes { .. } if target.class_counts().iter().all(|&c| c >= params.cv_folds) => {
            assign_folds(target, params.cv_folds, seed)?
        }
        _ => assign_folds(&TargetValues::Numeric(vec![0.0; n]), params.cv_folds, seed)?,
    };
    let mut losses = vec![vec![0.0; n]; probes.len()];
    for f in 0..params.cv_folds {
        let train = folds.train_rows(f);
        let test = folds.test_rows(f);
        let fstats = collect_stats(labels.len(), codes, target, &train);
        let forder: Vec<usize> = order_from_stats(&fstats).into_iter().filter(|&i| fstats[i].n > 0.0).collect();
        let fordered: Vec<LevelStats> = forder.iter().map(|&i| fstats[i].clone()).collect();
        let mut position = vec![usize::MAX; labels.len()];
        for (p, &i) in forder.iter().enumerate() {
            position[i] = p;
        }
        let tree = GrownTree::grow(&fordered, params);
        for (k, &alpha) in probes.iter().enumerate() {
            let leaves = tree.leaves_at(alpha);
            let ranges: Vec<(usize, usize)> = leaves.iter().map(|&id| (tree.nodes[id].lo, tree.nodes[id].hi)).collect();
            let preds: Vec<Vec<f64>> = leaves.iter().map(|&id| tree.nodes[id].stats.prediction()).collect();
            let fallback = (0..leaves.len())
                .max_by(|&a, &b| {
                    tree.nodes[leaves[a]]
                        .stats
                        .n
                        .total_cmp(&tree.nodes[leaves[b]].stats.n)
                        .then(b.cmp(&a))
                })
                .unwrap_or(0);
            for &r in &test {
                let p = position[codes[r]];
                let leaf = if p == usize::MAX {
                    fallback
                } else {
                    ranges.iter().position(|&(lo, hi)| p >= lo && p < hi).unwrap_or(fallback)
                };
                losses[k][r] = row_loss(&preds[leaf], target, r);
            }
        }
    }
    let cv_error: Vec<f64> = losses.iter().map(|l| l.iter().sum()).collect();
    let cv_se: Vec<f64> = losses
        .iter()
        .map(|l| {
            let m = l.iter().sum::<f64>() / n as f64;
            l.iter().map(|x| (x - m).powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    let kmin = (0..cv_error.len())
        .min_by(|&a, &b| cv_error[a].total_cmp(&cv_error[b]))
        .expect("non-empty path");
    let threshold = cv_error[kmin] + cv_se[kmin];
    let chosen = (0..cv_error.len()).rev().find(|&k| cv_error[k] <= threshold).unwrap_or(kmin);
    let alpha = path[chosen];

    let leaves = full
        .leaf_ranges(alpha)
        .into_iter()
        .zip(full.leaf_stats(alpha))
        .enumerate()
        .map(|(i, ((lo, hi), s))| Leaf {
            id: i + 1,
            levels: order_labels[lo..hi].to_vec(),
            count: s.n,
            prediction: s.prediction(),
        })
        .collect();
    Ok(LevelTree {
        order: order_labels,
        leaves,
        alpha,
        path,
        cv_error,
        cv_se,
    })
}

/// Squared error, or the Brier score for classes.
fn row_loss(pred: &[f64], target: &TargetValues, row: usize) -> f64 {
    match target {
        TargetValues::Numeric(y) => (y[row] - pred[0]).powi(2),
        TargetValues::Classes { codes, .. } => {
            let c = codes[row] as usize;
            pred.iter()
                .enumerate()
                .map(|(k, p)| (p - if k == c { 1.0 } else { 0.0 }).powi(2))
                .sum()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn reg_stats(groups: &[&[f64]]) -> Vec<LevelStats> {
        groups
            .iter()
            .map(|g| LevelStats {
                n: g.len() as f64,
                sum: g.iter().sum(),
                sumsq: g.iter().map(|v| v * v).sum(),
                classes: Vec::new(),
            })
            .collect()
    }

    #[test]
    fn binary_order_by_positive_share() {
        let x = Column::categorical_dense("x", &["a"; 10].iter().chain(&["b"; 10]).chain(&["c"; 10]).copied().collect::<Vec<_>>());
        let mut y = Vec::new();
        for (pos, _) in [(9, 'a'), (1, 'b'), (5, 'c')] {
            for i in 0..10 {
                y.push(if i < pos { "p" } else { "n" });
            }
        }
        let y = Column::categorical_dense("y", &y);
        // First-seen class is "p", so code 1 is "n": order by share of "n".
        let order = order_levels(&x, &y, TaskKind::Binary).unwrap();
        assert_eq!(order, vec!["a", "c", "b"]);
    }

    #[test]
    fn regression_ties_keep_first_appearance() {
        let x = Column::categorical_dense("x", &["c", "a", "b", "c", "a", "b"]);
        let y = Column::numeric_dense("y", &[1.0; 6]);
        assert_eq!(order_levels(&x, &y, TaskKind::Regression).unwrap(), vec!["c", "a", "b"]);
    }

    #[test]
    fn multiclass_order_matches_eigen_oracle() {
        // Four levels, three classes, hand-built counts.
        let counts = [[8.0, 1.0, 1.0], [1.0, 8.0, 1.0], [3.0, 3.0, 4.0], [1.0, 1.0, 8.0]];
        let stats: Vec<LevelStats> = counts
            .iter()
            .map(|c| LevelStats {
                n: c.iter().sum(),
                classes: c.to_vec(),
                ..Default::default()
            })
            .collect();
        // Oracle: power iteration on the weighted covariance.
        let props: Vec<Vec<f64>> = counts.iter().map(|c| c.iter().map(|x| x / 10.0).collect()).collect();
        let mean: Vec<f64> = (0..3).map(|k| props.iter().map(|p| p[k]).sum::<f64>() / 4.0).collect();
        let mut cov = [[0.0; 3]; 3];
        for p in &props {
            for a in 0..3 {
                for b in 0..3 {
                    cov[a][b] += 0.25 * (p[a] - mean[a]) * (p[b] - mean[b]);
                }
            }
        }
        let mut v = [1.0, 0.3, -0.2];
        for _ in 0..500 {
            let mut w = [0.0; 3];
            for a in 0..3 {
                for b in 0..3 {
                    w[a] += cov[a][b] * v[b];
                }
            }
            let norm = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
            v = [w[0] / norm, w[1] / norm, w[2] / norm];
        }
        let scores: Vec<f64> = props.iter().map(|p| p[0] * v[0] + p[1] * v[1] + p[2] * v[2]).collect();
        let mut expected: Vec<usize> = (0..4).collect();
        expected.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        let got = order_from_stats(&stats);
        let reversed: Vec<usize> = expected.iter().rev().copied().collect();
        assert!(got == expected || got == reversed, "{got:?} vs {expected:?}");
    }

    /// Best split over all bipartitions of the levels.
    fn brute_force_gain(stats: &[LevelStats]) -> f64 {
        let l = stats.len();
        let mut total = LevelStats::empty(stats[0].classes.len());
        stats.iter().for_each(|s| total.add(s));
        let mut best = 0.0f64;
        for mask in 1..(1u32 << (l - 1)) {
            let mut left = LevelStats::empty(total.classes.len());
            for (i, s) in stats.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    left.add(s);
                }
            }
            let right = total.sub(&left);
            best = best.max(total.impurity() - left.impurity() - right.impurity());
        }
        best
    }

    #[test]
    fn ordered_split_equals_best_subset_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..60 {
            let l = rng.random_range(2..=12);
            let stats: Vec<LevelStats> = if trial % 2 == 0 {
                (0..l)
                    .map(|_| {
                        let vals: Vec<f64> = (0..rng.random_range(1..8)).map(|_| rng.random_range(-3.0..3.0)).collect();
                        reg_stats(&[&vals])[0].clone()
                    })
                    .collect()
            } else {
                (0..l)
                    .map(|_| {
                        let a = rng.random_range(0..6) as f64;
                        let b = rng.random_range(0..6) as f64 + if a == 0.0 { 1.0 } else { 0.0 };
                        LevelStats {
                            n: a + b,
                            classes: vec![a, b],
                            ..Default::default()
                        }
                    })
                    .collect()
            };
            let order = order_from_stats(&stats);
            let ordered: Vec<LevelStats> = order.iter().map(|&i| stats[i].clone()).collect();
            let ordered_gain = best_ordered_split(&ordered, 1).map_or(0.0, |s| s.1);
            let brute = brute_force_gain(&stats);
            assert!((ordered_gain - brute).abs() < 1e-9 * (1.0 + brute), "trial {trial}: {ordered_gain} vs {brute}");
        }
    }

    fn coded(levels: usize, per: usize) -> (Vec<String>, Vec<usize>) {
        let labels = (0..levels).map(|i| format!("l{i}")).collect();
        let codes = (0..levels * per).map(|i| i % levels).collect();
        (labels, codes)
    }

    #[test]
    fn constant_target_gives_root() {
        let (labels, codes) = coded(5, 10);
        let y = TargetValues::Numeric(vec![3.0; 50]);
        let t = fit_level_tree(&labels, &codes, &y, &TreeParams::default(), 1).unwrap();
        assert_eq!(t.n_leaves(), 1);
        assert_eq!(t.assign_leaf("l3"), 1);
        assert_eq!(t.assign_leaf("unseen"), 1);
    }

    #[test]
    fn perfect_binary_signal_splits_once() {
        let labels = vec!["a".to_string(), "b".to_string()];
        let codes: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let y = TargetValues::Classes {
            codes: codes.iter().map(|&c| c as u32).collect(),
            n_classes: 2,
        };
        let t = fit_level_tree(&labels, &codes, &y, &TreeParams::default(), 3).unwrap();
        assert_eq!(t.n_leaves(), 2);
        assert_ne!(t.assign_leaf("a"), t.assign_leaf("b"));
    }

    #[test]
    fn separated_groups_give_two_leaves() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let means = [0.0, 10.0, 0.0, 10.0, 0.0, 10.0, 0.0, 10.0];
        let (labels, codes) = coded(8, 25);
        let y: Vec<f64> = codes.iter().map(|&c| means[c] + noise.sample(&mut rng)).collect();
        let t = fit_level_tree(&labels, &codes, &TargetValues::Numeric(y), &TreeParams::default(), 9).unwrap();
        assert_eq!(t.n_leaves(), 2);
        let low = t.assign_leaf("l0");
        for (i, m) in means.iter().enumerate() {
            assert_eq!(t.assign_leaf(&format!("l{i}")) == low, *m == 0.0);
        }
    }

    #[test]
    fn six_levels_two_mean_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = Normal::new(0.0, 0.2).unwrap();
        let means = [1.0, 1.0, 1.0, 9.0, 9.0, 9.0];
        let (labels, codes) = coded(6, 20);
        let y: Vec<f64> = codes.iter().map(|&c| means[c] + noise.sample(&mut rng)).collect();
        let t = fit_level_tree(&labels, &codes, &TargetValues::Numeric(y), &TreeParams::default(), 2).unwrap();
        assert_eq!(t.n_leaves(), 2);
        let ids: Vec<usize> = (0..6).map(|i| t.assign_leaf(&format!("l{i}"))).collect();
        assert!(ids[0] == ids[1] && ids[1] == ids[2] && ids[3] == ids[4] && ids[4] == ids[5] && ids[0] != ids[3]);
    }

    #[test]
    fn pruning_path_is_nested() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let stats: Vec<LevelStats> = (0..30)
            .map(|i| {
                let vals: Vec<f64> = (0..10).map(|_| (i % 4) as f64 + rng.random_range(-1.0..1.0)).collect();
                reg_stats(&[&vals])[0].clone()
            })
            .collect();
        let order = order_from_stats(&stats);
        let ordered: Vec<LevelStats> = order.iter().map(|&i| stats[i].clone()).collect();
        let tree = GrownTree::grow(&ordered, &TreeParams::default());
        assert!(tree.splits_reduce_impurity());
        let path = tree.pruning_path();
        assert!(path.len() > 2);
        for w in path.windows(2) {
            let fine = tree.leaf_ranges(w[0]);
            let coarse = tree.leaf_ranges(w[1]);
            assert!(coarse.len() < fine.len());
            // Every fine leaf lies inside one coarse leaf.
            for (lo, hi) in fine {
                assert!(coarse.iter().any(|&(a, b)| a <= lo && hi <= b));
            }
        }
        assert_eq!(tree.leaf_ranges(*path.last().unwrap()).len(), 1);
    }

    #[test]
    fn unseen_level_goes_to_largest_leaf() {
        let tree = LevelTree {
            order: vec!["a".into(), "b".into()],
            leaves: vec![
                Leaf { id: 1, levels: vec!["a".into()], count: 40.0, prediction: vec![0.0] },
                Leaf { id: 2, levels: vec!["b".into()], count: 60.0, prediction: vec![1.0] },
            ],
            alpha: 0.0,
            path: vec![0.0],
            cv_error: vec![],
            cv_se: vec![],
        };
        assert_eq!(tree.assign_leaf("zz"), 2);
        assert_eq!(tree.assign_leaf("a"), 1);
    }

    #[test]
    fn pure_noise_prunes_to_root() {
        let mut roots = 0;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (labels, codes) = coded(50, 10);
            let y: Vec<f64> = codes.iter().map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
            let t = fit_level_tree(&labels, &codes, &TargetValues::Numeric(y), &TreeParams::default(), seed).unwrap();
            if t.n_leaves() == 1 {
                roots += 1;
            }
        }
        assert!(roots >= 18, "{roots}/20");
    }
}
