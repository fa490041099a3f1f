//! Encoder strategies, high-cardinality routing and the fitted encoder that
//! replays an encoding on new data.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glmm::level_codes;
use crate::preprocess::indicator_name;
use crate::table::{Column, DataTable, TargetValues};
use crate::target::{
    cross_fit_encode, fit_glmm_coded, fit_impact_coded, fit_leaf_coded, output_classes, GlmmFit, ImpactFit, LeafFit,
    IMPACT_EPSILON,
};

/// Label that collects the rare levels of an indicator encoding.
pub const OTHER_LEVEL: &str = "__OTHER__";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Integer,
    Frequency,
    OneHot,
    Dummy,
    Hash,
    Leaf,
    Impact,
    Glmm,
    Remove,
}

impl Strategy {
    pub const ALL: [Strategy; 9] = [
        Strategy::Integer,
        Strategy::Frequency,
        Strategy::OneHot,
        Strategy::Dummy,
        Strategy::Hash,
        Strategy::Leaf,
        Strategy::Impact,
        Strategy::Glmm,
        Strategy::Remove,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Integer => "integer",
            Strategy::Frequency => "frequency",
            Strategy::OneHot => "one_hot",
            Strategy::Dummy => "dummy",
            Strategy::Hash => "hash",
            Strategy::Leaf => "leaf",
            Strategy::Impact => "impact",
            Strategy::Glmm => "glmm",
            Strategy::Remove => "remove",
        }
    }

    /// Indicator strategies act on every categorical column.
    pub fn is_indicator(self) -> bool {
        matches!(self, Strategy::OneHot | Strategy::Dummy)
    }

    /// Strategies whose HCT only decides which columns they touch, so two
    /// thresholds with the same routing give the same encoding.
    pub fn hct_only_routes(self) -> bool {
        !matches!(self, Strategy::OneHot | Strategy::Dummy | Strategy::Hash)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown encoder strategy `{s}`")))
    }
}

/// One encoder condition.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub strategy: Strategy,
    /// Level-count threshold; also the hash size.
    pub hct: usize,
    /// Cross-fitting folds of the GLMM encoder; 0 fits on all rows.
    #[serde(default)]
    pub glmm_folds: usize,
    #[serde(default)]
    pub seed: u64,
    /// Seeded permutation of integer codes.
    #[serde(default)]
    pub shuffle_integer: bool,
    /// Frequency as a share of training rows instead of a count.
    #[serde(default)]
    pub relative_frequency: bool,
    /// One output column instead of two for binary targets (impact, GLMM).
    #[serde(default)]
    pub single_binary_column: bool,
    /// GLMM modes divided by the random-intercept standard deviation.
    #[serde(default)]
    pub spherical: bool,
}

impl EncoderSpec {
    pub fn new(strategy: Strategy, hct: usize) -> Self {
        EncoderSpec {
            strategy,
            hct,
            glmm_folds: 0,
            seed: 0,
            shuffle_integer: false,
            relative_frequency: false,
            single_binary_column: false,
            spherical: false,
        }
    }

    pub fn with_folds(mut self, folds: usize) -> Self {
        self.glmm_folds = folds;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.hct < 2 {
            return Err(Error::InvalidArgument(format!("hct must be at least 2, got {}", self.hct)));
        }
        if self.glmm_folds == 1 || self.glmm_folds > 20 {
            return Err(Error::InvalidArgument(format!(
                "glmm_folds must be 0 or 2..=20, got {}",
                self.glmm_folds
            )));
        }
        Ok(())
    }

    /// Condition name without the threshold, e.g. `glmm_5cv`.
    pub fn label(&self) -> String {
        match self.strategy {
            Strategy::Glmm if self.glmm_folds >= 2 => format!("glmm_{}cv", self.glmm_folds),
            s => s.name().to_owned(),
        }
    }
}

/// Columns touched by an encoder, left for the final one-hot stage, or
/// deleted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingPlan {
    pub encoded: Vec<String>,
    pub one_hot: Vec<String>,
    pub removed: Vec<String>,
}

/// Decides which categorical columns of `table` the strategy encodes.
pub fn apply_hct_routing(table: &DataTable, spec: &EncoderSpec) -> Result<RoutingPlan> {
    spec.validate()?;
    let mut plan = RoutingPlan::default();
    for col in table.features().filter(|c| c.is_categorical()) {
        let name = col.name().to_owned();
        let high = col.n_observed_levels() > spec.hct;
        match spec.strategy {
            s if s.is_indicator() => plan.encoded.push(name),
            Strategy::Remove if high => plan.removed.push(name),
            _ if high => plan.encoded.push(name),
            _ => plan.one_hot.push(name),
        }
    }
    Ok(plan)
}

/// 64-bit FNV-1a of the UTF-8 bytes, offset basis folded with `seed`.
pub fn stable_hash(label: &str, seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hash column (1-based) of a label.
pub fn hash_column(label: &str, size: usize, seed: u64) -> usize {
    (stable_hash(label, seed) % size as u64) as usize + 1
}

/// Fitted state of one encoded column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ColumnEncoder {
    Integer {
        map: HashMap<String, f64>,
        /// Code of the training mode level, used for unseen levels.
        fallback: f64,
    },
    Frequency {
        map: HashMap<String, f64>,
        unseen: f64,
    },
    Indicator {
        /// Kept levels in frequency order.
        kept: Vec<String>,
        /// Training levels folded into [`OTHER_LEVEL`].
        collapsed: Vec<String>,
        /// Omitted level for dummy coding.
        reference: Option<String>,
        /// Most frequent training level.
        mode: String,
    },
    Hash {
        size: usize,
        seed: u64,
        /// Hash columns that vary in training.
        columns: Vec<usize>,
    },
    Leaf(LeafFit),
    Impact {
        fit: ImpactFit,
        suffixes: Vec<String>,
    },
    Glmm {
        fit: GlmmFit,
        suffixes: Vec<String>,
        cross_fit_folds: usize,
    },
}

fn first_appearance(codes: &[usize], n_levels: usize) -> Vec<usize> {
    let mut seen = vec![false; n_levels];
    let mut order = Vec::new();
    for &c in codes {
        if !seen[c] {
            seen[c] = true;
            order.push(c);
        }
    }
    order
}

/// Level counts, and levels sorted by descending count with first-appearance
/// tie-breaking.
fn frequency_rank(codes: &[usize], n_levels: usize) -> (Vec<usize>, Vec<usize>) {
    let mut counts = vec![0usize; n_levels];
    for &c in codes {
        counts[c] += 1;
    }
    let mut order = first_appearance(codes, n_levels);
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]));
    (counts, order)
}

fn output_names(column: &str, suffixes: &[String]) -> Vec<String> {
    if suffixes.len() <= 1 {
        vec![column.to_owned()]
    } else {
        suffixes.iter().map(|s| format!("{column}:{s}")).collect()
    }
}

impl ColumnEncoder {
    /// Fits the encoder for one column. Returns the state and, for
    /// cross-fitted GLMM, the out-of-fold training encoding.
    fn fit(
        column: &Column,
        target: &TargetValues,
        class_labels: &[String],
        spec: &EncoderSpec,
    ) -> Result<(ColumnEncoder, Option<Vec<Vec<f64>>>)> {
        let (labels, codes) = level_codes(column)?;
        let state = match spec.strategy {
            Strategy::Integer => {
                let mut order = first_appearance(&codes, labels.len());
                if spec.shuffle_integer {
                    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
                }
                let map: HashMap<String, f64> =
                    order.iter().enumerate().map(|(i, &c)| (labels[c].clone(), (i + 1) as f64)).collect();
                let (_, rank) = frequency_rank(&codes, labels.len());
                let fallback = rank.first().map_or(1.0, |&c| map[&labels[c]]);
                ColumnEncoder::Integer { map, fallback }
            }
            Strategy::Frequency => {
                let (counts, _) = frequency_rank(&codes, labels.len());
                let scale = if spec.relative_frequency { codes.len() as f64 } else { 1.0 };
                let map = (0..labels.len())
                    .filter(|&i| counts[i] > 0)
                    .map(|i| (labels[i].clone(), counts[i] as f64 / scale))
                    .collect();
                ColumnEncoder::Frequency {
                    map,
                    unseen: 1.0 / scale,
                }
            }
            Strategy::OneHot | Strategy::Dummy => {
                if labels.iter().any(|l| l == OTHER_LEVEL) {
                    return Err(Error::Data(format!(
                        "column `{}` has a level named {OTHER_LEVEL}, which is reserved",
                        column.name()
                    )));
                }
                let (_, rank) = frequency_rank(&codes, labels.len());
                let n_keep = rank.len().min(spec.hct - 1);
                let kept: Vec<String> = rank[..n_keep].iter().map(|&c| labels[c].clone()).collect();
                let collapsed: Vec<String> = rank[n_keep..].iter().map(|&c| labels[c].clone()).collect();
                let reference = (spec.strategy == Strategy::Dummy)
                    .then(|| kept.iter().min().cloned())
                    .flatten();
                ColumnEncoder::Indicator {
                    mode: kept.first().cloned().unwrap_or_default(),
                    kept,
                    collapsed,
                    reference,
                }
            }
            Strategy::Hash => {
                let size = spec.hct;
                let mut counts = vec![0usize; size + 1];
                for &c in &codes {
                    counts[hash_column(&labels[c], size, spec.seed)] += 1;
                }
                let columns = (1..=size).filter(|&k| counts[k] > 0 && counts[k] < codes.len()).collect();
                ColumnEncoder::Hash {
                    size,
                    seed: spec.seed,
                    columns,
                }
            }
            Strategy::Leaf => ColumnEncoder::Leaf(fit_leaf_coded(&labels, &codes, target, spec.seed)?),
            Strategy::Impact => {
                let fit = fit_impact_coded(&labels, &codes, target, IMPACT_EPSILON, spec.single_binary_column)?;
                let suffixes = suffixes(target, class_labels, spec.single_binary_column);
                ColumnEncoder::Impact { fit, suffixes }
            }
            Strategy::Glmm => {
                let suffixes = suffixes(target, class_labels, spec.single_binary_column);
                if spec.glmm_folds >= 2 {
                    let (train, plan) = cross_fit_encode(
                        &labels,
                        &codes,
                        target,
                        spec.glmm_folds,
                        spec.seed,
                        spec.single_binary_column,
                        spec.spherical,
                    )?;
                    let state = ColumnEncoder::Glmm {
                        fit: plan.full,
                        suffixes,
                        cross_fit_folds: spec.glmm_folds,
                    };
                    return Ok((state, Some(train)));
                }
                let fit = fit_glmm_coded(&labels, &codes, target, spec.single_binary_column, spec.spherical)?;
                ColumnEncoder::Glmm {
                    fit,
                    suffixes,
                    cross_fit_folds: 0,
                }
            }
            Strategy::Remove => {
                return Err(Error::InvalidArgument("remove has no column encoder".into()));
            }
        };
        Ok((state, None))
    }

    /// Names of the columns this encoder emits for `column`.
    pub fn output_columns(&self, column: &str) -> Vec<String> {
        match self {
            ColumnEncoder::Integer { .. } | ColumnEncoder::Frequency { .. } | ColumnEncoder::Leaf(_) => {
                vec![column.to_owned()]
            }
            ColumnEncoder::Indicator {
                kept,
                collapsed,
                reference,
                ..
            } => kept
                .iter()
                .map(String::as_str)
                .chain((!collapsed.is_empty()).then_some(OTHER_LEVEL))
                .filter(|l| reference.as_deref() != Some(*l))
                .map(|l| indicator_name(column, l))
                .collect(),
            ColumnEncoder::Hash { columns, .. } => columns.iter().map(|k| format!("{column}#{k}")).collect(),
            ColumnEncoder::Impact { suffixes, .. } | ColumnEncoder::Glmm { suffixes, .. } => {
                output_names(column, suffixes)
            }
        }
    }

    /// Encodes the cells of `column`. Missing or unseen cells follow the
    /// encoder's unseen-level policy; only integer encoding leaves them
    /// missing.
    fn transform(&self, column: &Column) -> Result<Vec<Column>> {
        if !column.is_categorical() {
            return Err(Error::SchemaMismatch(format!("feature `{}` is no longer categorical", column.name())));
        }
        let name = column.name();
        let n = column.len();
        let cell = |i: usize| column.label_at(i);
        let names = self.output_columns(name);
        let out = match self {
            ColumnEncoder::Integer { map, .. } => {
                vec![Column::numeric(name, (0..n).map(|i| cell(i).and_then(|l| map.get(l).copied())).collect())]
            }
            ColumnEncoder::Frequency { map, unseen } => vec![Column::numeric(
                name,
                (0..n).map(|i| Some(cell(i).and_then(|l| map.get(l).copied()).unwrap_or(*unseen))).collect(),
            )],
            ColumnEncoder::Indicator {
                kept,
                collapsed,
                reference,
                mode,
            } => {
                let collapsed: HashSet<&str> = collapsed.iter().map(String::as_str).collect();
                let slots: Vec<&str> = kept
                    .iter()
                    .map(String::as_str)
                    .chain((!collapsed.is_empty()).then_some(OTHER_LEVEL))
                    .filter(|l| reference.as_deref() != Some(*l))
                    .collect();
                let dummy = reference.is_some();
                let target_slot = |i: usize| -> Option<&str> {
                    match cell(i) {
                        Some(l) if kept.iter().any(|k| k == l) => Some(l),
                        Some(l) if collapsed.contains(l) => Some(OTHER_LEVEL),
                        _ if dummy => Some(mode.as_str()),
                        _ => None,
                    }
                };
                let hits: Vec<Option<&str>> = (0..n).map(target_slot).collect();
                slots
                    .iter()
                    .zip(&names)
                    .map(|(slot, col_name)| {
                        Column::numeric(
                            col_name.clone(),
                            hits.iter().map(|h| Some(if *h == Some(*slot) { 1.0 } else { 0.0 })).collect(),
                        )
                    })
                    .collect()
            }
            ColumnEncoder::Hash { size, seed, columns } => {
                let hashed: Vec<Option<usize>> = (0..n).map(|i| cell(i).map(|l| hash_column(l, *size, *seed))).collect();
                columns
                    .iter()
                    .zip(&names)
                    .map(|(k, col_name)| {
                        Column::numeric(
                            col_name.clone(),
                            hashed.iter().map(|h| Some(if *h == Some(*k) { 1.0 } else { 0.0 })).collect(),
                        )
                    })
                    .collect()
            }
            ColumnEncoder::Leaf(fit) => {
                let cells: Vec<String> = (0..n)
                    .map(|i| match cell(i) {
                        Some(l) => fit.encode(l),
                        None => LeafFit::node_label(fit.tree.largest_leaf()),
                    })
                    .collect();
                vec![Column::categorical_dense(name, &cells)]
            }
            ColumnEncoder::Impact { fit, .. } => {
                let rows: Vec<Vec<f64>> = (0..n).map(|i| fit.encode(cell(i).unwrap_or(""))).collect();
                split_outputs(&names, fit.n_outputs, &rows)
            }
            ColumnEncoder::Glmm { fit, .. } => {
                let rows: Vec<Vec<f64>> = (0..n)
                    .map(|i| match cell(i) {
                        Some(l) => fit.encode(l),
                        None => fit.models.iter().map(|m| m.beta0).collect(),
                    })
                    .collect();
                split_outputs(&names, fit.n_outputs(), &rows)
            }
        };
        Ok(out)
    }
}

fn split_outputs(names: &[String], width: usize, rows: &[Vec<f64>]) -> Vec<Column> {
    (0..width)
        .map(|k| Column::numeric(names[k].clone(), rows.iter().map(|r| Some(r[k])).collect()))
        .collect()
}

fn suffixes(target: &TargetValues, class_labels: &[String], single_binary: bool) -> Vec<String> {
    output_classes(target, single_binary)
        .into_iter()
        .map(|k| class_labels[k].clone())
        .collect()
}

/// Encoder fitted on training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedEncoder {
    pub spec: EncoderSpec,
    pub routing: RoutingPlan,
    /// Feature names of the fit-time table, in order.
    pub input_features: Vec<String>,
    pub columns: Vec<(String, ColumnEncoder)>,
}

impl FittedEncoder {
    pub fn fit(train: &DataTable, spec: &EncoderSpec) -> Result<FittedEncoder> {
        Ok(Self::fit_transform(train, spec)?.0)
    }

    /// Fits on `train` and returns its training encoding. This equals
    /// `transform(train)` except for cross-fitted GLMM columns, whose rows
    /// come from out-of-fold models.
    pub fn fit_transform(train: &DataTable, spec: &EncoderSpec) -> Result<(FittedEncoder, DataTable)> {
        let routing = apply_hct_routing(train, spec)?;
        let target = train.target_values();
        let class_labels: Vec<String> = train.target().levels().map(|l| l.labels().to_vec()).unwrap_or_default();
        let mut columns = Vec::new();
        let mut cross_fitted = HashMap::new();
        for name in &routing.encoded {
            let col = train.column(name).expect("routed column exists");
            let (state, train_enc) = ColumnEncoder::fit(col, &target, &class_labels, spec)?;
            if let Some(enc) = train_enc {
                cross_fitted.insert(name.clone(), enc);
            }
            columns.push((name.clone(), state));
        }
        let fitted = FittedEncoder {
            spec: spec.clone(),
            routing,
            input_features: train.feature_names(),
            columns,
        };
        let mut encoded = fitted.transform(train)?;
        if !cross_fitted.is_empty() {
            let mut feats: Vec<Column> = encoded.features().cloned().collect();
            for (name, state) in &fitted.columns {
                if let Some(values) = cross_fitted.get(name) {
                    for (out, v) in state.output_columns(name).iter().zip(values) {
                        let slot = feats.iter_mut().find(|c| c.name() == out).expect("encoded output");
                        *slot = Column::numeric_dense(out.clone(), v);
                    }
                }
            }
            encoded = encoded.with_features(feats)?;
        }
        Ok((fitted, encoded))
    }

    /// Applies the fitted encoding; the input is not modified.
    pub fn transform(&self, table: &DataTable) -> Result<DataTable> {
        let names = table.feature_names();
        if names != self.input_features {
            return Err(Error::SchemaMismatch(format!(
                "encoder was fit on features {:?}, got {:?}",
                self.input_features, names
            )));
        }
        let states: HashMap<&str, &ColumnEncoder> = self.columns.iter().map(|(n, s)| (n.as_str(), s)).collect();
        let removed: HashSet<&str> = self.routing.removed.iter().map(String::as_str).collect();
        let mut out = Vec::new();
        for col in table.features() {
            if removed.contains(col.name()) {
                continue;
            }
            match states.get(col.name()) {
                Some(state) => out.extend(state.transform(col)?),
                None => out.push(col.clone()),
            }
        }
        table.with_features(out)
    }

    /// Declared fallback for columns that may come out missing.
    pub fn fallbacks(&self) -> HashMap<String, f64> {
        self.columns
            .iter()
            .filter_map(|(name, state)| match state {
                ColumnEncoder::Integer { fallback, .. } => Some((name.clone(), *fallback)),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::ColumnValues;

    fn table(cols: Vec<Column>, y: &[f64]) -> DataTable {
        let mut cols = cols;
        cols.push(Column::numeric_dense("y", y));
        DataTable::new(cols, "y").unwrap()
    }

    fn values(t: &DataTable, name: &str) -> Vec<f64> {
        match t.column(name).unwrap().values() {
            ColumnValues::Numeric(v) => v.iter().map(|x| x.unwrap_or(f64::NAN)).collect(),
            _ => panic!("categorical"),
        }
    }

    fn cat(name: &str, cells: &[&str]) -> Column {
        Column::categorical_dense(name, cells)
    }

    #[test]
    fn integer_first_appearance_and_mode_fallback() {
        let train = table(vec![cat("x", &["c", "a", "b", "c"])], &[0.0; 4]);
        let spec = EncoderSpec::new(Strategy::Integer, 2);
        let (enc, out) = FittedEncoder::fit_transform(&train, &spec).unwrap();
        assert_eq!(values(&out, "x"), vec![1.0, 2.0, 3.0, 1.0]);
        let test = table(vec![cat("x", &["z", "b"])], &[0.0; 2]);
        let t = enc.transform(&test).unwrap();
        assert!(t.column("x").unwrap().is_missing(0));
        assert_eq!(enc.fallbacks()["x"], 1.0);
    }

    #[test]
    fn frequency_counts_and_unseen() {
        let train = table(vec![cat("x", &["a", "a", "b"])], &[0.0; 3]);
        let enc = FittedEncoder::fit(&train, &EncoderSpec::new(Strategy::Frequency, 2)).unwrap();
        // Two levels do not exceed hct = 2.
        assert!(enc.routing.encoded.is_empty());
        let train = table(vec![cat("x", &["a", "a", "b", "c"])], &[0.0; 4]);
        let enc = FittedEncoder::fit(&train, &EncoderSpec::new(Strategy::Frequency, 2)).unwrap();
        let test = table(vec![cat("x", &["a", "b", "q"])], &[0.0; 3]);
        assert_eq!(values(&enc.transform(&test).unwrap(), "x"), vec![2.0, 1.0, 1.0]);
    }

    #[test]
    fn indicator_collapses_to_hct_minus_one() {
        let cells = ["a", "a", "a", "a", "a", "b", "b", "b", "c", "d"];
        let train = table(vec![cat("x", &cells)], &[0.0; 10]);
        let enc = FittedEncoder::fit(&train, &EncoderSpec::new(Strategy::OneHot, 3)).unwrap();
        let test = table(vec![cat("x", &["d", "zz"])], &[0.0; 2]);
        let t = enc.transform(&test).unwrap();
        assert_eq!(t.feature_names(), vec!["x=a", "x=b", "x=__OTHER__"]);
        assert_eq!(values(&t, "x=__OTHER__"), vec![1.0, 0.0]);
        assert_eq!(values(&t, "x=a"), vec![0.0, 0.0]);

        let enc = FittedEncoder::fit(&train, &EncoderSpec::new(Strategy::Dummy, 3)).unwrap();
        let test = table(vec![cat("x", &["a", "b", "zz"])], &[0.0; 3]);
        let t = enc.transform(&test).unwrap();
        assert_eq!(t.feature_names(), vec!["x=b", "x=__OTHER__"]);
        assert_eq!(values(&t, "x=b"), vec![0.0, 1.0, 0.0]);
        assert_eq!(values(&t, "x=__OTHER__"), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn indicator_rejects_reserved_level() {
        let train = table(vec![cat("x", &["a", OTHER_LEVEL])], &[0.0; 2]);
        assert!(FittedEncoder::fit(&train, &EncoderSpec::new(Strategy::OneHot, 3)).is_err());
    }

    #[test]
    fn hash_size_one_emits_nothing() {
        let train = table(vec![cat("x", &["a", "b", "c"])], &[0.0; 3]);
        let enc = FittedEncoder::fit(&train, &EncoderSpec::new(Strategy::Hash, 2)).unwrap();
        assert!(enc.transform(&train).unwrap().feature_names().len() <= 2);
        assert_eq!(hash_column("abc", 25, 7), hash_column("abc", 25, 7));
        assert_eq!(hash_column("anything", 1, 3), 1);
    }

    #[test]
    fn remove_deletes_high_cardinality_columns() {
        let many: Vec<String> = (0..14).map(|i| format!("l{i}")).collect();
        let few: Vec<String> = (0..14).map(|i| format!("m{}", i % 3)).collect();
        let train = table(
            vec![Column::categorical_dense("x", &many), Column::categorical_dense("z", &few)],
            &[0.0; 14],
        );
        let plan = apply_hct_routing(&train, &EncoderSpec::new(Strategy::Remove, 10)).unwrap();
        assert_eq!(plan.removed, vec!["x"]);
        assert_eq!(plan.one_hot, vec!["z"]);
        let enc = FittedEncoder::fit(&train, &EncoderSpec::new(Strategy::Remove, 10)).unwrap();
        assert_eq!(enc.transform(&train).unwrap().feature_names(), vec!["z"]);
    }

    #[test]
    fn glmm_cross_fit_replaces_training_rows_only() {
        let levels: Vec<String> = (0..60).map(|i| format!("l{}", i % 30)).collect();
        let y: Vec<f64> = (0..60).map(|i| ((i * 13) % 7) as f64).collect();
        let train = table(vec![Column::categorical_dense("x", &levels)], &y);
        let spec = EncoderSpec::new(Strategy::Glmm, 10).with_folds(5).with_seed(4);
        let (enc, train_enc) = FittedEncoder::fit_transform(&train, &spec).unwrap();
        let replay = enc.transform(&train).unwrap();
        assert_ne!(values(&train_enc, "x"), values(&replay, "x"));
        let spec0 = EncoderSpec::new(Strategy::Glmm, 10);
        let (enc0, train0) = FittedEncoder::fit_transform(&train, &spec0).unwrap();
        assert_eq!(values(&train0, "x"), values(&enc0.transform(&train).unwrap(), "x"));
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let train = table(vec![cat("x", &["a", "b", "c"])], &[0.0; 3]);
        let enc = FittedEncoder::fit(&train, &EncoderSpec::new(Strategy::Frequency, 2)).unwrap();
        let other = table(vec![cat("w", &["a"])], &[0.0]);
        assert!(matches!(enc.transform(&other), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn spec_validation() {
        assert!(EncoderSpec::new(Strategy::Glmm, 1).validate().is_err());
        assert!(EncoderSpec::new(Strategy::Glmm, 10).with_folds(1).validate().is_err());
        assert!(EncoderSpec::new(Strategy::Glmm, 10).with_folds(21).validate().is_err());
        assert_eq!(EncoderSpec::new(Strategy::Glmm, 10).with_folds(5).label(), "glmm_5cv");
        assert_eq!("one_hot".parse::<Strategy>().unwrap(), Strategy::OneHot);
        assert!("onehot".parse::<Strategy>().is_err());
    }
}
