//! Performance metrics, the corrected resampled t-test and per-dataset
//! dominance relations between encoder conditions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::learners::Predictions;
use crate::table::{TargetValues, TaskKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Rmse,
    Auc,
    Aunu,
}

impl Metric {
    pub fn for_task(task: TaskKind) -> Metric {
        match task {
            TaskKind::Regression => Metric::Rmse,
            TaskKind::Binary => Metric::Auc,
            TaskKind::Multiclass(_) => Metric::Aunu,
        }
    }

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Rmse)
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::Auc => "auc",
            Metric::Aunu => "aunu",
        }
    }

    /// Whether `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }

    /// Scores predictions against the truth.
    pub fn evaluate(self, pred: &Predictions, truth: &TargetValues) -> Result<f64> {
        match (self, pred, truth) {
            (Metric::Rmse, Predictions::Regression(p), TargetValues::Numeric(y)) => rmse(p, y),
            (Metric::Auc, Predictions::Scores(s), TargetValues::Classes { codes, n_classes: 2 }) => {
                let scores: Vec<f64> = s.column(1).iter().copied().collect();
                let labels: Vec<bool> = codes.iter().map(|&c| c == 1).collect();
                auc(&scores, &labels)
            }
            (Metric::Aunu, Predictions::Scores(s), TargetValues::Classes { codes, .. }) => aunu(s, codes),
            _ => Err(Error::InvalidArgument(format!(
                "metric {} does not fit these predictions",
                self.name()
            ))),
        }
    }
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "rmse needs equal non-empty inputs, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

/// Area under the ROC curve as the Mann-Whitney statistic; tied
/// positive-negative pairs count one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateFold("only one class present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the win count, so ties stay integral.
    let mut doubled: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        doubled += pos * (2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    Ok(doubled as f64 / (2 * n_pos * n_neg) as f64)
}

/// Unweighted mean of one-vs-rest AUCs. Score rows must sum to one.
pub fn aunu(scores: &DMatrix<f64>, labels: &[u32]) -> Result<f64> {
    if scores.nrows() != labels.len() {
        return Err(Error::InvalidArgument("scores and labels differ in length".into()));
    }
    for i in 0..scores.nrows() {
        let s = scores.row(i).sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("score row {i} sums to {s}")));
        }
    }
    let c = scores.ncols();
    let mut total = 0.0;
    for k in 0..c {
        let col: Vec<f64> = scores.column(k).iter().copied().collect();
        let hit: Vec<bool> = labels.iter().map(|&l| l as usize == k).collect();
        total += auc(&col, &hit).map_err(|e| match e {
            Error::DegenerateFold(_) => Error::DegenerateFold(format!("class {k} absent or alone")),
            other => other,
        })?;
    }
    Ok(total / c as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    /// One-sided p-value for a positive mean difference.
    pub p: f64,
    pub df: f64,
}

/// Paired t-test on per-fold differences with the variance inflated by
/// `1/J + n_test/n_train`.
pub fn corrected_ttest(diffs: &[f64], n_train: f64, n_test: f64) -> Result<TTest> {
    let j = diffs.len();
    if j < 2 {
        return Err(Error::InvalidArgument(format!("t-test needs at least 2 differences, got {j}")));
    }
    if !(n_train > 0.0) || n_test < 0.0 {
        return Err(Error::InvalidArgument("fold sizes must be positive".into()));
    }
    let jf = j as f64;
    let mean = diffs.iter().sum::<f64>() / jf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (jf - 1.0);
    let df = jf - 1.0;
    if var == 0.0 {
        let (t, p) = if mean > 0.0 {
            (f64::INFINITY, 0.0)
        } else if mean < 0.0 {
            (f64::NEG_INFINITY, 1.0)
        } else {
            (0.0, 0.5)
        };
        return Ok(TTest { t, p, df });
    }
    let t = mean / ((1.0 / jf + n_test / n_train) * var).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid degrees of freedom");
    Ok(TTest {
        t,
        p: 1.0 - dist.cdf(t),
        df,
    })
}

/// Binary dominance relation over conditions: `beats[i][j]` means
/// condition `i` beats condition `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub labels: Vec<String>,
    pub beats: Vec<Vec<bool>>,
}

impl Relation {
    pub fn new(labels: Vec<String>, beats: Vec<Vec<bool>>) -> Result<Self> {
        let m = labels.len();
        if beats.len() != m || beats.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidArgument("relation matrix does not match its labels".into()));
        }
        if (0..m).any(|i| beats[i][i]) {
            return Err(Error::InvalidArgument("relation has a true diagonal entry".into()));
        }
        Ok(Relation { labels, beats })
    }

    pub fn empty(labels: Vec<String>) -> Self {
        let m = labels.len();
        Relation {
            labels,
            beats: vec![vec![false; m]; m],
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_antisymmetric(&self) -> bool {
        let m = self.len();
        (0..m).all(|i| (0..m).all(|j| !(self.beats[i][j] && self.beats[j][i])))
    }
}

/// Per-fold metric values of one condition; `None` marks a failed or
/// degenerate fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionScores {
    pub label: String,
    pub values: Vec<Option<f64>>,
    pub n_train: Vec<usize>,
    pub n_test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationResult {
    pub relation: Relation,
    /// Conditions left out for incomplete folds.
    pub excluded: Vec<String>,
}

/// Dominance relation among conditions with complete folds: `i` beats `j`
/// when the corrected one-sided p-value for `i` being better is below
/// `alpha`.
pub fn build_relation(conditions: &[ConditionScores], metric: Metric, alpha: f64) -> Result<RelationResult> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 0.5], got {alpha}")));
    }
    let (complete, incomplete): (Vec<&ConditionScores>, Vec<&ConditionScores>) = conditions
        .iter()
        .partition(|c| !c.values.is_empty() && c.values.iter().all(Option::is_some));
    let labels: Vec<String> = complete.iter().map(|c| c.label.clone()).collect();
    let m = complete.len();
    let mut beats = vec![vec![false; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let (a, b) = (complete[i], complete[j]);
            if a.values.len() != b.values.len() {
                return Err(Error::InvalidArgument(format!(
                    "conditions `{}` and `{}` have different fold counts",
                    a.label, b.label
                )));
            }
            let sign = if metric.higher_is_better() { 1.0 } else { -1.0 };
            let diffs: Vec<f64> = a
                .values
                .iter()
                .zip(&b.values)
                .map(|(x, y)| sign * (x.unwrap() - y.unwrap()))
                .collect();
            let mean = |v: &[usize]| v.iter().sum::<usize>() as f64 / v.len().max(1) as f64;
            let test = corrected_ttest(&diffs, mean(&a.n_train), mean(&a.n_test))?;
            beats[i][j] = test.p < alpha;
        }
    }
    Ok(RelationResult {
        relation: Relation::new(labels, beats)?,
        excluded: incomplete.iter().map(|c| c.label.clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 2.5 * 2f64.sqrt()).abs() < 1e-12);
        assert!((rmse(&[3.5, 1.5], &[1.0, -1.0]).unwrap() - 2.5).abs() < 1e-12);
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.7, 0.85], &[true, true, false, false]).unwrap(), 0.75);
        assert_eq!(auc(&[0.1, 0.9], &[false, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &[true, true]), Err(Error::DegenerateFold(_))));
    }

    #[test]
    fn aunu_uniform_and_perfect() {
        let labels = [0u32, 1, 2, 0, 1, 2];
        let uniform = DMatrix::from_element(6, 3, 1.0 / 3.0);
        assert_eq!(aunu(&uniform, &labels).unwrap(), 0.5);
        let perfect = DMatrix::from_fn(6, 3, |i, c| if labels[i] as usize == c { 1.0 } else { 0.0 });
        assert_eq!(aunu(&perfect, &labels).unwrap(), 1.0);
        let bad = DMatrix::from_element(6, 3, 0.5);
        assert!(aunu(&bad, &labels).is_err());
    }

    #[test]
    fn ttest_examples() {
        let z = corrected_ttest(&[0.0; 5], 4.0, 1.0).unwrap();
        assert_eq!((z.t, z.p), (0.0, 0.5));
        let t = corrected_ttest(&[1.0, 2.0, 3.0, 4.0, 5.0], 4.0, 1.0).unwrap();
        assert!((t.t - 3.0 / (0.45f64 * 2.5).sqrt()).abs() < 1e-12);
        assert_eq!(t.df, 4.0);
        assert!(corrected_ttest(&[1.0], 4.0, 1.0).is_err());
        assert_eq!(corrected_ttest(&[-1.0, -1.0], 4.0, 1.0).unwrap().p, 1.0);
    }

    fn cond(label: &str, values: &[f64]) -> ConditionScores {
        ConditionScores {
            label: label.into(),
            values: values.iter().map(|&v| Some(v)).collect(),
            n_train: vec![80; values.len()],
            n_test: vec![20; values.len()],
        }
    }

    #[test]
    fn relation_examples() {
        let same = build_relation(&[cond("a", &[0.7, 0.8, 0.75]), cond("b", &[0.7, 0.8, 0.75])], Metric::Auc, 0.05)
            .unwrap();
        assert!(!same.relation.beats[0][1] && !same.relation.beats[1][0]);
        let clear = build_relation(
            &[cond("a", &[0.9, 0.91, 0.92, 0.9, 0.93]), cond("b", &[0.6, 0.61, 0.6, 0.62, 0.6])],
            Metric::Auc,
            0.05,
        )
        .unwrap();
        assert!(clear.relation.beats[0][1] && !clear.relation.beats[1][0]);
        // Lower RMSE wins.
        let rmse = build_relation(
            &[cond("a", &[0.9, 0.91, 0.92, 0.9, 0.93]), cond("b", &[0.6, 0.61, 0.6, 0.62, 0.6])],
            Metric::Rmse,
            0.05,
        )
        .unwrap();
        assert!(rmse.relation.beats[1][0]);
        let mut failed = cond("c", &[0.5, 0.5, 0.5]);
        failed.values[1] = None;
        let r = build_relation(&[cond("a", &[0.1, 0.2, 0.3]), failed], Metric::Auc, 0.05).unwrap();
        assert_eq!(r.excluded, vec!["c"]);
        assert_eq!(r.relation.labels, vec!["a"]);
        assert!(build_relation(&[], Metric::Auc, 0.6).is_err());
    }
}
