//! Non-encoder pipeline stages: missing-value imputation before and after
//! encoding, constant-column removal and the final one-hot expansion.
//!
//! Every stage is split into a `fit` on training data returning a plan, and
//! a replay of that plan on any table with the same features.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{Column, ColumnValues, DataTable, Levels};

/// Pseudo-level that replaces missing cells of multi-level categoricals.
pub const MISSING_LEVEL: &str = "__MISSING__";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ColumnImputation {
    /// Missing cells become the [`MISSING_LEVEL`] pseudo-level.
    MissingLevel,
    /// Missing cells become the training mode label.
    Mode(String),
    /// Missing cells become the training mean.
    Mean(f64),
}

/// Replayable first imputation stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputationPlan {
    pub columns: Vec<(String, ColumnImputation)>,
}

/// Most frequent level code; ties go to the earliest level.
pub(crate) fn mode_code(column: &Column) -> Option<u32> {
    let counts = column.level_counts();
    let mut best: Option<(usize, u32)> = None;
    for (code, &n) in counts.iter().enumerate() {
        if n > 0 && best.is_none_or(|(b, _)| n > b) {
            best = Some((n, code as u32));
        }
    }
    best.map(|(_, c)| c)
}

/// Fits the first imputation stage on training data and applies it.
///
/// Categorical features with more than two observed levels get a missing
/// pseudo-level, binary categoricals take the training mode and numeric
/// features the training mean.
pub fn impute_stage1(train: &DataTable) -> Result<(DataTable, ImputationPlan)> {
    let mut columns = Vec::new();
    for col in train.features() {
        let rule = match col.values() {
            ColumnValues::Numeric(v) => {
                let seen: Vec<f64> = v.iter().flatten().copied().collect();
                if seen.is_empty() {
                    return Err(Error::AllMissing(col.name().to_owned()));
                }
                ColumnImputation::Mean(seen.iter().sum::<f64>() / seen.len() as f64)
            }
            ColumnValues::Categorical { levels, .. } => {
                let observed = col.n_observed_levels();
                if observed == 0 {
                    return Err(Error::AllMissing(col.name().to_owned()));
                }
                if observed > 2 {
                    ColumnImputation::MissingLevel
                } else {
                    let mode = mode_code(col).expect("observed level");
                    ColumnImputation::Mode(levels.label(mode).to_owned())
                }
            }
        };
        columns.push((col.name().to_owned(), rule));
    }
    let plan = ImputationPlan { columns };
    let imputed = plan.apply(train)?;
    Ok((imputed, plan))
}

impl ImputationPlan {
    pub fn apply(&self, table: &DataTable) -> Result<DataTable> {
        let feats: Vec<&Column> = table.features().collect();
        if feats.len() != self.columns.len() {
            return Err(Error::SchemaMismatch(format!(
                "imputation plan covers {} features, table has {}",
                self.columns.len(),
                feats.len()
            )));
        }
        let mut out = Vec::with_capacity(feats.len());
        for (col, (name, rule)) in feats.into_iter().zip(&self.columns) {
            if col.name() != name {
                return Err(Error::SchemaMismatch(format!(
                    "expected feature `{name}`, found `{}`",
                    col.name()
                )));
            }
            out.push(impute_column(col, rule)?);
        }
        table.with_features(out)
    }
}

fn impute_column(col: &Column, rule: &ColumnImputation) -> Result<Column> {
    if col.n_missing() == 0 {
        return Ok(col.clone());
    }
    match (col.values(), rule) {
        (ColumnValues::Numeric(v), ColumnImputation::Mean(m)) => Ok(Column::numeric(
            col.name(),
            v.iter().map(|x| Some(x.unwrap_or(*m))).collect(),
        )),
        (ColumnValues::Categorical { codes, levels }, ColumnImputation::MissingLevel) => {
            fill_label(col.name(), codes, levels, MISSING_LEVEL)
        }
        (ColumnValues::Categorical { codes, levels }, ColumnImputation::Mode(label)) => {
            fill_label(col.name(), codes, levels, label)
        }
        _ => Err(Error::SchemaMismatch(format!(
            "column `{}` changed kind since the imputation plan was fit",
            col.name()
        ))),
    }
}

fn fill_label(name: &str, codes: &[Option<u32>], levels: &Levels, label: &str) -> Result<Column> {
    let mut levels = levels.clone();
    let mut fill = None;
    let codes = codes
        .iter()
        .map(|c| Some(c.unwrap_or_else(|| *fill.get_or_insert_with(|| levels.get_or_insert(label)))))
        .collect();
    Column::from_codes(name, codes, levels)
}

/// Fallback value for cells an encoder left missing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Fallback {
    Value(f64),
    Label(String),
}

/// Second imputation stage: one fallback per encoded column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FallbackPlan {
    pub columns: Vec<(String, Fallback)>,
}

impl FallbackPlan {
    /// Builds the plan from encoded training data. Columns with an
    /// encoder-declared fallback use it; other numeric columns fall back to
    /// the training mean and categoricals to the training mode.
    pub fn fit(encoded_train: &DataTable, declared: &HashMap<String, f64>) -> Result<FallbackPlan> {
        let mut columns = Vec::new();
        for col in encoded_train.features() {
            let fallback = if let Some(&v) = declared.get(col.name()) {
                Fallback::Value(v)
            } else {
                match col.values() {
                    ColumnValues::Numeric(v) => {
                        let seen: Vec<f64> = v.iter().flatten().copied().collect();
                        if seen.is_empty() {
                            return Err(Error::AllMissing(col.name().to_owned()));
                        }
                        Fallback::Value(seen.iter().sum::<f64>() / seen.len() as f64)
                    }
                    ColumnValues::Categorical { levels, .. } => {
                        let code = mode_code(col).ok_or_else(|| Error::AllMissing(col.name().to_owned()))?;
                        Fallback::Label(levels.label(code).to_owned())
                    }
                }
            };
            columns.push((col.name().to_owned(), fallback));
        }
        Ok(FallbackPlan { columns })
    }
}

/// Replaces every missing cell left after encoding with the column's
/// fallback. Columns unknown to the plan pass through unchanged.
pub fn impute_stage2(encoded: &DataTable, plan: &FallbackPlan) -> Result<DataTable> {
    let lookup: HashMap<&str, &Fallback> = plan.columns.iter().map(|(n, f)| (n.as_str(), f)).collect();
    let mut out = Vec::new();
    for col in encoded.features() {
        if col.n_missing() == 0 {
            out.push(col.clone());
            continue;
        }
        let filled = match (col.values(), lookup.get(col.name())) {
            (ColumnValues::Numeric(v), Some(Fallback::Value(f))) => {
                Column::numeric(col.name(), v.iter().map(|x| Some(x.unwrap_or(*f))).collect())
            }
            (ColumnValues::Categorical { codes, levels }, Some(Fallback::Label(l))) => {
                fill_label(col.name(), codes, levels, l)?
            }
            _ => {
                return Err(Error::SchemaMismatch(format!(
                    "no fallback for missing cells in `{}`",
                    col.name()
                )))
            }
        };
        out.push(filled);
    }
    encoded.with_features(out)
}

/// Names of the training features removed for being constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropPlan {
    pub dropped: Vec<String>,
    pub kept: Vec<String>,
}

/// Whether a column takes a single value (missing cells ignored).
pub fn is_constant(col: &Column) -> bool {
    match col.values() {
        ColumnValues::Numeric(v) => {
            let mut it = v.iter().flatten();
            match it.next() {
                None => true,
                Some(first) => it.all(|x| x == first),
            }
        }
        ColumnValues::Categorical { .. } => col.n_observed_levels() <= 1,
    }
}

/// Drops features that are constant on the training data.
pub fn drop_constant_columns(train: &DataTable) -> Result<(DataTable, DropPlan)> {
    let (kept, dropped): (Vec<&Column>, Vec<&Column>) = train.features().partition(|c| !is_constant(c));
    if kept.is_empty() && !dropped.is_empty() {
        return Err(Error::Data(format!(
            "every feature is constant in training data ({})",
            dropped.iter().map(|c| c.name()).collect::<Vec<_>>().join(", ")
        )));
    }
    let plan = DropPlan {
        dropped: dropped.iter().map(|c| c.name().to_owned()).collect(),
        kept: kept.iter().map(|c| c.name().to_owned()).collect(),
    };
    let table = train.with_features(kept.into_iter().cloned().collect())?;
    Ok((table, plan))
}

impl DropPlan {
    pub fn apply(&self, table: &DataTable) -> Result<DataTable> {
        let out = self
            .kept
            .iter()
            .map(|name| {
                table
                    .column(name)
                    .filter(|_| name != table.target().name())
                    .cloned()
                    .ok_or_else(|| Error::SchemaMismatch(format!("feature `{name}` is missing")))
            })
            .collect::<Result<Vec<_>>>()?;
        table.with_features(out)
    }
}

/// Training levels of each categorical feature expanded by the final
/// one-hot stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneHotPlan {
    pub columns: Vec<(String, Vec<String>)>,
}

/// Name of the indicator for `level` in `column`.
pub fn indicator_name(column: &str, level: &str) -> String {
    format!("{column}={level}")
}

/// Expands every remaining categorical feature into one indicator per
/// training level.
pub fn final_one_hot(train: &DataTable) -> Result<(DataTable, OneHotPlan)> {
    let columns = train
        .features()
        .filter(|c| c.is_categorical())
        .map(|c| {
            let levels = c.levels().expect("categorical");
            let counts = c.level_counts();
            let observed = levels
                .labels()
                .iter()
                .zip(counts)
                .filter(|(_, n)| *n > 0)
                .map(|(l, _)| l.clone())
                .collect();
            (c.name().to_owned(), observed)
        })
        .collect();
    let plan = OneHotPlan { columns };
    Ok((plan.apply(train)?, plan))
}

impl OneHotPlan {
    /// Unseen levels map to the all-zero vector.
    pub fn apply(&self, table: &DataTable) -> Result<DataTable> {
        if self.columns.is_empty() && table.features().all(|c| !c.is_categorical()) {
            return Ok(table.clone());
        }
        let plan: HashMap<&str, &Vec<String>> = self.columns.iter().map(|(n, l)| (n.as_str(), l)).collect();
        let mut out = Vec::new();
        for col in table.features() {
            let Some(levels) = plan.get(col.name()) else {
                if col.is_categorical() {
                    return Err(Error::SchemaMismatch(format!(
                        "categorical feature `{}` unknown to the one-hot plan",
                        col.name()
                    )));
                }
                out.push(col.clone());
                continue;
            };
            if !col.is_categorical() {
                return Err(Error::SchemaMismatch(format!("feature `{}` is not categorical", col.name())));
            }
            for level in levels.iter() {
                let values = (0..col.len())
                    .map(|i| Some(if col.label_at(i) == Some(level.as_str()) { 1.0 } else { 0.0 }))
                    .collect();
                out.push(Column::numeric(indicator_name(col.name(), level), values));
            }
        }
        table.with_features(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(features: Vec<Column>, n: usize) -> DataTable {
        let mut cols = features;
        cols.push(Column::numeric_dense("y", &vec![1.0; n]));
        DataTable::new(cols, "y").unwrap()
    }

    #[test]
    fn multilevel_missing_gets_pseudo_level() {
        let x = Column::categorical("x", &[Some("a"), None, Some("b"), Some("c"), None]);
        let t = table(vec![x], 5);
        let (imp, plan) = impute_stage1(&t).unwrap();
        let col = imp.column("x").unwrap();
        assert_eq!(col.levels().unwrap().labels(), &["a", "b", "c", MISSING_LEVEL]);
        assert_eq!(col.n_missing(), 0);
        assert_eq!(plan.columns[0].1, ColumnImputation::MissingLevel);
    }

    #[test]
    fn binary_missing_takes_mode() {
        let mut cells: Vec<Option<&str>> = vec![Some("yes"); 7];
        cells.extend([Some("no"), Some("no"), None]);
        let t = table(vec![Column::categorical("b", &cells)], 10);
        let (imp, _) = impute_stage1(&t).unwrap();
        assert_eq!(imp.column("b").unwrap().label_at(9), Some("yes"));
    }

    #[test]
    fn numeric_missing_takes_mean() {
        let t = table(vec![Column::numeric("z", vec![Some(1.0), Some(3.0), None])], 3);
        let (imp, _) = impute_stage1(&t).unwrap();
        assert_eq!(imp.column("z").unwrap().numeric_values().unwrap()[2], Some(2.0));
    }

    #[test]
    fn all_missing_training_column_is_rejected() {
        let t = table(vec![Column::numeric("z", vec![None, None])], 2);
        match impute_stage1(&t) {
            Err(Error::AllMissing(name)) => assert_eq!(name, "z"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn plan_replays_on_test_rows() {
        let x = Column::categorical("x", &[Some("a"), Some("b"), Some("c"), None]);
        let z = Column::numeric("z", vec![Some(2.0), None, Some(4.0), Some(6.0)]);
        let t = table(vec![x, z], 4);
        let (imp, plan) = impute_stage1(&t).unwrap();
        assert_eq!(plan.apply(&t).unwrap(), imp);

        let test = table(
            vec![
                Column::categorical("x", &[None, Some("d")]),
                Column::numeric("z", vec![None, Some(1.0)]),
            ],
            2,
        );
        let out = plan.apply(&test).unwrap();
        assert_eq!(out.column("x").unwrap().label_at(0), Some(MISSING_LEVEL));
        assert_eq!(out.column("z").unwrap().numeric_values().unwrap()[0], Some(4.0));
    }

    #[test]
    fn stage2_fills_with_declared_fallback() {
        let enc = table(vec![Column::numeric("x", vec![Some(1.0), None, None])], 3);
        let plan = FallbackPlan {
            columns: vec![("x".into(), Fallback::Value(7.0))],
        };
        let out = impute_stage2(&enc, &plan).unwrap();
        assert_eq!(
            out.column("x").unwrap().numeric_values().unwrap(),
            &[Some(1.0), Some(7.0), Some(7.0)]
        );
        let clean = table(vec![Column::numeric_dense("x", &[1.0, 2.0])], 2);
        assert_eq!(impute_stage2(&clean, &plan).unwrap(), clean);
    }

    #[test]
    fn constant_columns_are_dropped_by_training_rule() {
        let t = table(
            vec![
                Column::numeric_dense("zero", &[0.0, 0.0, 0.0]),
                Column::numeric_dense("var", &[0.0, 0.0, 1.0]),
                Column::categorical_dense("one", &["a", "a", "a"]),
            ],
            3,
        );
        let (out, plan) = drop_constant_columns(&t).unwrap();
        assert_eq!(out.feature_names(), vec!["var"]);
        assert_eq!(plan.dropped, vec!["zero", "one"]);

        let test = table(
            vec![
                Column::numeric_dense("zero", &[1.0, 2.0]),
                Column::numeric_dense("var", &[5.0, 5.0]),
                Column::categorical_dense("one", &["a", "b"]),
            ],
            2,
        );
        assert_eq!(plan.apply(&test).unwrap().feature_names(), vec!["var"]);
    }

    #[test]
    fn dropping_every_feature_is_rejected() {
        let t = table(vec![Column::numeric_dense("zero", &[0.0, 0.0])], 2);
        assert!(drop_constant_columns(&t).is_err());
    }

    #[test]
    fn one_hot_expands_and_zeroes_unseen() {
        let t = table(vec![Column::categorical_dense("c", &["a", "b", "c"])], 3);
        let (out, plan) = final_one_hot(&t).unwrap();
        assert_eq!(out.feature_names(), vec!["c=a", "c=b", "c=c"]);
        let m = out.feature_matrix().unwrap();
        assert_eq!(m.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0]);

        let test = table(vec![Column::categorical_dense("c", &["d"])], 1);
        let m = plan.apply(&test).unwrap().feature_matrix().unwrap();
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn one_hot_without_categoricals_is_identity() {
        let t = table(vec![Column::numeric_dense("z", &[1.0, 2.0])], 2);
        let (out, plan) = final_one_hot(&t).unwrap();
        assert_eq!(out, t);
        assert!(plan.columns.is_empty());
    }
}
