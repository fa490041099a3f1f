//! Target-based encoders: impact (smoothed centered target statistics),
//! leaf (terminal nodes of a single-feature tree) and GLMM
//! (random-intercept conditional modes), plus cross-fitting.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::{fit_level_tree, LevelTree, TreeParams};
use crate::error::{Error, Result};
use crate::glmm::{
    fit_binomial_groups, fit_gaussian_groups, level_codes, logit, BinomialGroups, GaussianGroups, GlmmOptions,
    RandomInterceptFit,
};
use crate::table::{assign_folds, Column, TargetValues, TaskKind};

/// Smoothing constant of the impact encoder.
pub const IMPACT_EPSILON: f64 = 1e-4;

/// Salt mixed into encoder seeds so encoder folds never coincide with outer
/// evaluation folds built from the same seed.
const CROSS_FIT_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

fn check_classes(target: &TargetValues) -> Result<()> {
    if let Some(absent) = target.class_counts().iter().position(|&n| n == 0) {
        return Err(Error::Data(format!("class {absent} does not occur in the training data")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Impact

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactFit {
    pub epsilon: f64,
    /// Grand mean (regression) or class priors.
    pub global: Vec<f64>,
    /// One encoded value per output column for each training level.
    pub values: HashMap<String, Vec<f64>>,
    pub n_outputs: usize,
}

impl ImpactFit {
    /// Encoded values of a level; unseen levels get 0 in every column.
    pub fn encode(&self, level: &str) -> Vec<f64> {
        self.values.get(level).cloned().unwrap_or_else(|| vec![0.0; self.n_outputs])
    }
}

pub fn fit_impact(column: &Column, target: &Column, task: TaskKind, epsilon: f64) -> Result<ImpactFit> {
    let (labels, codes) = level_codes(column)?;
    let y = TargetValues::from_column(target, task)?;
    fit_impact_coded(&labels, &codes, &y, epsilon, false)
}

/// Impact encoding from dense level codes.
///
/// Regression: `(sum_l + eps * mean) / (n_l + eps) - mean`.
/// Classification, per class: `logit((n_lc + eps * p_c) / (n_l + eps)) - logit(p_c)`.
pub fn fit_impact_coded(
    labels: &[String],
    codes: &[usize],
    target: &TargetValues,
    epsilon: f64,
    single_binary: bool,
) -> Result<ImpactFit> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("impact epsilon must be positive, got {epsilon}")));
    }
    if codes.is_empty() {
        return Err(Error::Data("impact encoding needs at least one row".into()));
    }
    let l = labels.len();
    let mut counts = vec![0.0; l];
    for &c in codes {
        counts[c] += 1.0;
    }
    let n = codes.len() as f64;
    let (global, per_level): (Vec<f64>, Vec<Vec<f64>>) = match target {
        TargetValues::Numeric(y) => {
            let mean = y.iter().sum::<f64>() / n;
            let mut sums = vec![0.0; l];
            for (&c, &v) in codes.iter().zip(y) {
                sums[c] += v;
            }
            let enc = (0..l)
                .map(|i| vec![(sums[i] + epsilon * mean) / (counts[i] + epsilon) - mean])
                .collect();
            (vec![mean], enc)
        }
        TargetValues::Classes { codes: y, n_classes } => {
            check_classes(target)?;
            let prior: Vec<f64> = target.class_counts().iter().map(|&c| c as f64 / n).collect();
            let mut joint = vec![vec![0.0; *n_classes]; l];
            for (&c, &k) in codes.iter().zip(y) {
                joint[c][k as usize] += 1.0;
            }
            let enc = (0..l)
                .map(|i| {
                    (0..*n_classes)
                        .map(|k| {
                            logit((joint[i][k] + epsilon * prior[k]) / (counts[i] + epsilon)) - logit(prior[k])
                        })
                        .collect()
                })
                .collect();
            (prior, enc)
        }
    };
    let keep = match target {
        TargetValues::Numeric(_) => vec![0],
        _ => output_classes(target, single_binary),
    };
    let values = (0..l)
        .filter(|&i| counts[i] > 0.0)
        .map(|i| (labels[i].clone(), keep.iter().map(|&k| per_level[i][k]).collect()))
        .collect();
    Ok(ImpactFit {
        epsilon,
        n_outputs: keep.len(),
        global,
        values,
    })
}

// ---------------------------------------------------------------------------
// Leaf

/// Level → terminal-node label of a fitted single-feature tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafFit {
    pub tree: LevelTree,
}

impl LeafFit {
    pub fn node_label(id: usize) -> String {
        format!("node{id}")
    }

    pub fn encode(&self, level: &str) -> String {
        Self::node_label(self.tree.assign_leaf(level))
    }
}

pub fn fit_leaf(column: &Column, target: &Column, task: TaskKind, seed: u64) -> Result<LeafFit> {
    let (labels, codes) = level_codes(column)?;
    let y = TargetValues::from_column(target, task)?;
    fit_leaf_coded(&labels, &codes, &y, seed)
}

pub fn fit_leaf_coded(labels: &[String], codes: &[usize], target: &TargetValues, seed: u64) -> Result<LeafFit> {
    Ok(LeafFit {
        tree: fit_level_tree(labels, codes, target, &TreeParams::default(), seed)?,
    })
}

// ---------------------------------------------------------------------------
// GLMM

/// One random-intercept model per output column: a Gaussian model for
/// regression, one-vs-rest logistic models for classification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlmmFit {
    pub models: Vec<RandomInterceptFit>,
    /// Class index modelled by each output (empty for regression).
    pub classes: Vec<usize>,
    pub spherical: bool,
}

impl GlmmFit {
    pub fn n_outputs(&self) -> usize {
        self.models.len()
    }

    /// Link-scale encoding; unseen levels get each model's intercept.
    pub fn encode(&self, level: &str) -> Vec<f64> {
        self.models.iter().map(|m| m.encode(level, self.spherical)).collect()
    }
}

/// Output classes of a GLMM or impact encoder: every class, or only class 1
/// for a binary target when `single_binary` is set.
pub fn output_classes(target: &TargetValues, single_binary: bool) -> Vec<usize> {
    match target.n_classes() {
        None => Vec::new(),
        Some(2) if single_binary => vec![1],
        Some(c) => (0..c).collect(),
    }
}

pub fn fit_glmm_coded(
    labels: &[String],
    codes: &[usize],
    target: &TargetValues,
    single_binary: bool,
    spherical: bool,
) -> Result<GlmmFit> {
    let opts = GlmmOptions::default();
    let classes = output_classes(target, single_binary);
    let models = match target {
        TargetValues::Numeric(y) => {
            let groups = GaussianGroups::from_rows(labels, codes, y)?;
            vec![fit_gaussian_groups(&groups, &opts)?]
        }
        TargetValues::Classes { codes: y, .. } => {
            check_classes(target)?;
            classes
                .par_iter()
                .map(|&k| {
                    let hit: Vec<bool> = y.iter().map(|&c| c as usize == k).collect();
                    let groups = BinomialGroups::from_rows(labels, codes, &hit)?;
                    fit_binomial_groups(&groups, &opts)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(GlmmFit {
        models,
        classes,
        spherical,
    })
}

pub fn fit_glmm_encoder(column: &Column, target: &Column, task: TaskKind) -> Result<GlmmFit> {
    let (labels, codes) = level_codes(column)?;
    let y = TargetValues::from_column(target, task)?;
    fit_glmm_coded(&labels, &codes, &y, false, false)
}

/// Cross-fitted training encoding and the full-data model used afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossFitPlan {
    pub n_folds: usize,
    pub fold_of_row: Vec<usize>,
    /// Full-data fit used for every later transform.
    pub full: GlmmFit,
}

/// Encodes each training row with a model fit on the other folds. Returns
/// one vector per output column, row-aligned with `codes`.
pub fn cross_fit_encode(
    labels: &[String],
    codes: &[usize],
    target: &TargetValues,
    n_folds: usize,
    seed: u64,
    single_binary: bool,
    spherical: bool,
) -> Result<(Vec<Vec<f64>>, CrossFitPlan)> {
    if n_folds < 2 {
        return Err(Error::InvalidArgument(format!("cross-fitting needs at least 2 folds, got {n_folds}")));
    }
    let folds = assign_folds(target, n_folds, seed ^ CROSS_FIT_SALT)?;
    let full = fit_glmm_coded(labels, codes, target, single_binary, spherical)?;
    let sub: Vec<(Vec<usize>, GlmmFit)> = (0..n_folds)
        .into_par_iter()
        .map(|f| {
            let train = folds.train_rows(f);
            let sub_codes: Vec<usize> = train.iter().map(|&r| codes[r]).collect();
            let model = fit_glmm_coded(labels, &sub_codes, &target.take(&train), single_binary, spherical)?;
            Ok((folds.test_rows(f), model))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut encoded = vec![vec![0.0; codes.len()]; full.n_outputs()];
    for (rows, model) in &sub {
        for &r in rows {
            for (k, v) in model.encode(&labels[codes[r]]).into_iter().enumerate() {
                encoded[k][r] = v;
            }
        }
    }
    Ok((
        encoded,
        CrossFitPlan {
            n_folds,
            fold_of_row: folds.fold_of_row,
            full,
        },
    ))
}

/// Cross-fitted GLMM encoding of one column. Returns the training encoding
/// (one vector per output) and the plan holding the full-data model.
pub fn cross_fit_column(
    column: &Column,
    target: &Column,
    task: TaskKind,
    n_folds: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, CrossFitPlan)> {
    let (labels, codes) = level_codes(column)?;
    let y = TargetValues::from_column(target, task)?;
    cross_fit_encode(&labels, &codes, &y, n_folds, seed, false, false)
}
