//! Columnar data model, CSV ingestion, fold assignment and profiling.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supervised task type of a table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Regression,
    Binary,
    /// Multiclass with the number of classes.
    Multiclass(usize),
}

impl TaskKind {
    pub fn from_class_count(n_classes: usize) -> Self {
        if n_classes == 2 {
            TaskKind::Binary
        } else {
            TaskKind::Multiclass(n_classes)
        }
    }

    /// Number of classes; `None` for regression.
    pub fn n_classes(self) -> Option<usize> {
        match self {
            TaskKind::Regression => None,
            TaskKind::Binary => Some(2),
            TaskKind::Multiclass(c) => Some(c),
        }
    }

    pub fn is_classification(self) -> bool {
        !matches!(self, TaskKind::Regression)
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Regression => "regression",
            TaskKind::Binary => "binary",
            TaskKind::Multiclass(_) => "multiclass",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::Multiclass(c) => write!(f, "multiclass({c})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Ordered dictionary of level labels.
#[derive(Clone, Debug, Default)]
pub struct Levels {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl PartialEq for Levels {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels
    }
}

impl Levels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let mut levels = Levels::new();
        for label in labels {
            if levels.code(label.as_ref()).is_some() {
                return Err(Error::Data(format!("duplicate level `{}`", label.as_ref())));
            }
            levels.get_or_insert(label.as_ref());
        }
        Ok(levels)
    }

    pub fn get_or_insert(&mut self, label: &str) -> u32 {
        if let Some(&code) = self.index.get(label) {
            return code;
        }
        let code = self.labels.len() as u32;
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), code);
        code
    }

    pub fn code(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn label(&self, code: u32) -> &str {
        &self.labels[code as usize]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Cell storage of a column. `None` marks a missing cell.
#[derive(Clone, Debug, PartialEq)]
pub enum ColumnValues {
    Numeric(Vec<Option<f64>>),
    Categorical {
        codes: Vec<Option<u32>>,
        levels: Levels,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    name: String,
    values: ColumnValues,
}

impl Column {
    /// Numeric column; NaN cells are treated as missing.
    pub fn numeric(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        let values = values
            .into_iter()
            .map(|v| v.filter(|x| !x.is_nan()))
            .collect();
        Column {
            name: name.into(),
            values: ColumnValues::Numeric(values),
        }
    }

    pub fn numeric_dense(name: impl Into<String>, values: &[f64]) -> Self {
        Self::numeric(name, values.iter().map(|&v| Some(v)).collect())
    }

    /// Categorical column with levels in first-appearance order.
    pub fn categorical<S: AsRef<str>>(name: impl Into<String>, cells: &[Option<S>]) -> Self {
        let mut levels = Levels::new();
        let codes = cells
            .iter()
            .map(|c| c.as_ref().map(|s| levels.get_or_insert(s.as_ref())))
            .collect();
        Column {
            name: name.into(),
            values: ColumnValues::Categorical { codes, levels },
        }
    }

    pub fn categorical_dense<S: AsRef<str>>(name: impl Into<String>, cells: &[S]) -> Self {
        let cells: Vec<Option<&str>> = cells.iter().map(|s| Some(s.as_ref())).collect();
        Self::categorical(name, &cells)
    }

    pub fn from_codes(
        name: impl Into<String>,
        codes: Vec<Option<u32>>,
        levels: Levels,
    ) -> Result<Self> {
        let name = name.into();
        if let Some(bad) = codes.iter().flatten().find(|&&c| c as usize >= levels.len()) {
            return Err(Error::Data(format!(
                "column `{name}`: code {bad} outside level dictionary of size {}",
                levels.len()
            )));
        }
        Ok(Column {
            name,
            values: ColumnValues::Categorical { codes, levels },
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rename(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn values(&self) -> &ColumnValues {
        &self.values
    }

    pub fn len(&self) -> usize {
        match &self.values {
            ColumnValues::Numeric(v) => v.len(),
            ColumnValues::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.values, ColumnValues::Categorical { .. })
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match &self.values {
            ColumnValues::Numeric(v) => v[row].is_none(),
            ColumnValues::Categorical { codes, .. } => codes[row].is_none(),
        }
    }

    pub fn missing_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.is_missing(i)).collect()
    }

    pub fn n_missing(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_missing(i)).count()
    }

    pub fn numeric_values(&self) -> Option<&[Option<f64>]> {
        match &self.values {
            ColumnValues::Numeric(v) => Some(v),
            ColumnValues::Categorical { .. } => None,
        }
    }

    pub fn codes(&self) -> Option<&[Option<u32>]> {
        match &self.values {
            ColumnValues::Categorical { codes, .. } => Some(codes),
            ColumnValues::Numeric(_) => None,
        }
    }

    pub fn levels(&self) -> Option<&Levels> {
        match &self.values {
            ColumnValues::Categorical { levels, .. } => Some(levels),
            ColumnValues::Numeric(_) => None,
        }
    }

    /// Label of a categorical cell.
    pub fn label_at(&self, row: usize) -> Option<&str> {
        match &self.values {
            ColumnValues::Categorical { codes, levels } => codes[row].map(|c| levels.label(c)),
            ColumnValues::Numeric(_) => None,
        }
    }

    /// Per-level counts over non-missing cells, indexed by level code.
    pub fn level_counts(&self) -> Vec<usize> {
        match &self.values {
            ColumnValues::Categorical { codes, levels } => {
                let mut counts = vec![0; levels.len()];
                for c in codes.iter().flatten() {
                    counts[*c as usize] += 1;
                }
                counts
            }
            ColumnValues::Numeric(_) => Vec::new(),
        }
    }

    /// Number of levels with at least one non-missing cell.
    pub fn n_observed_levels(&self) -> usize {
        self.level_counts().iter().filter(|&&n| n > 0).count()
    }

    /// Row subset. Categorical level dictionaries are rebuilt from the
    /// rows that remain, in first-appearance order.
    pub fn take(&self, rows: &[usize]) -> Column {
        match &self.values {
            ColumnValues::Numeric(v) => Column {
                name: self.name.clone(),
                values: ColumnValues::Numeric(rows.iter().map(|&r| v[r]).collect()),
            },
            ColumnValues::Categorical { codes, levels } => {
                let mut sub = Levels::new();
                let codes = rows
                    .iter()
                    .map(|&r| codes[r].map(|c| sub.get_or_insert(levels.label(c))))
                    .collect();
                Column {
                    name: self.name.clone(),
                    values: ColumnValues::Categorical { codes, levels: sub },
                }
            }
        }
    }

    /// Row subset that keeps the full level dictionary.
    pub fn take_keep_levels(&self, rows: &[usize]) -> Column {
        match &self.values {
            ColumnValues::Numeric(_) => self.take(rows),
            ColumnValues::Categorical { codes, levels } => Column {
                name: self.name.clone(),
                values: ColumnValues::Categorical {
                    codes: rows.iter().map(|&r| codes[r]).collect(),
                    levels: levels.clone(),
                },
            },
        }
    }
}

/// Target values in learner-friendly form.
#[derive(Clone, Debug, PartialEq)]
pub enum TargetValues {
    Numeric(Vec<f64>),
    Classes { codes: Vec<u32>, n_classes: usize },
}

impl TargetValues {
    pub fn from_column(column: &Column, task: TaskKind) -> Result<Self> {
        let name = column.name();
        match (task, column.values()) {
            (TaskKind::Regression, ColumnValues::Numeric(v)) => v
                .iter()
                .map(|x| x.ok_or_else(|| Error::Data(format!("target `{name}` has missing values"))))
                .collect::<Result<Vec<f64>>>()
                .map(TargetValues::Numeric),
            (TaskKind::Regression, _) => Err(Error::Data(format!(
                "regression target `{name}` must be numeric"
            ))),
            (_, ColumnValues::Categorical { codes, levels }) => {
                let n_classes = task.n_classes().unwrap_or(0);
                if levels.len() != n_classes {
                    return Err(Error::Data(format!(
                        "target `{name}` has {} classes but task is {task}",
                        levels.len()
                    )));
                }
                codes
                    .iter()
                    .map(|c| c.ok_or_else(|| Error::Data(format!("target `{name}` has missing values"))))
                    .collect::<Result<Vec<u32>>>()
                    .map(|codes| TargetValues::Classes { codes, n_classes })
            }
            (_, ColumnValues::Numeric(_)) => Err(Error::Data(format!(
                "classification target `{name}` must be categorical"
            ))),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TargetValues::Numeric(v) => v.len(),
            TargetValues::Classes { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_classes(&self) -> Option<usize> {
        match self {
            TargetValues::Numeric(_) => None,
            TargetValues::Classes { n_classes, .. } => Some(*n_classes),
        }
    }

    pub fn take(&self, rows: &[usize]) -> TargetValues {
        match self {
            TargetValues::Numeric(v) => TargetValues::Numeric(rows.iter().map(|&r| v[r]).collect()),
            TargetValues::Classes { codes, n_classes } => TargetValues::Classes {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                n_classes: *n_classes,
            },
        }
    }

    /// Per-class counts (empty for regression).
    pub fn class_counts(&self) -> Vec<usize> {
        match self {
            TargetValues::Numeric(_) => Vec::new(),
            TargetValues::Classes { codes, n_classes } => {
                let mut counts = vec![0; *n_classes];
                for &c in codes {
                    counts[c as usize] += 1;
                }
                counts
            }
        }
    }
}

/// A columnar dataset with one designated target column.
#[derive(Clone, Debug, PartialEq)]
pub struct DataTable {
    columns: Vec<Column>,
    n_rows: usize,
    target: usize,
    task: TaskKind,
}

impl DataTable {
    /// Builds a table, inferring the task from the target column: numeric
    /// targets are regression, categorical targets classification with one
    /// class per level.
    pub fn new(columns: Vec<Column>, target: &str) -> Result<Self> {
        let idx = columns
            .iter()
            .position(|c| c.name() == target)
            .ok_or_else(|| Error::Schema(format!("target column `{target}` not found")))?;
        let task = match columns[idx].levels() {
            None => TaskKind::Regression,
            Some(levels) => TaskKind::from_class_count(levels.len()),
        };
        Self::with_task(columns, target, task)
    }

    pub fn with_task(columns: Vec<Column>, target: &str, task: TaskKind) -> Result<Self> {
        let n_rows = columns.first().map_or(0, Column::len);
        let mut seen = std::collections::HashSet::new();
        for c in &columns {
            if c.len() != n_rows {
                return Err(Error::Data(format!(
                    "column `{}` has {} rows, expected {n_rows}",
                    c.name(),
                    c.len()
                )));
            }
            if !seen.insert(c.name().to_owned()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name())));
            }
        }
        let target_idx = columns
            .iter()
            .position(|c| c.name() == target)
            .ok_or_else(|| Error::Schema(format!("target column `{target}` not found")))?;
        let tcol = &columns[target_idx];
        if tcol.n_missing() > 0 {
            return Err(Error::Data(format!("target `{target}` has missing values")));
        }
        if let Some(c) = task.n_classes() {
            if c < 2 {
                return Err(Error::Data(format!(
                    "classification target `{target}` needs at least 2 classes"
                )));
            }
        }
        TargetValues::from_column(tcol, task)?;
        Ok(DataTable {
            columns,
            n_rows,
            target: target_idx,
            task,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name() == name)
    }

    pub fn target_index(&self) -> usize {
        self.target
    }

    pub fn target(&self) -> &Column {
        &self.columns[self.target]
    }

    pub fn target_values(&self) -> TargetValues {
        TargetValues::from_column(self.target(), self.task)
            .expect("target validated at construction")
    }

    /// Feature columns in table order (everything except the target).
    pub fn features(&self) -> impl Iterator<Item = &Column> {
        let t = self.target;
        self.columns
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != t)
            .map(|(_, c)| c)
    }

    pub fn n_features(&self) -> usize {
        self.columns.len() - 1
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features().map(|c| c.name().to_owned()).collect()
    }

    /// Same target, new feature columns. The target is placed last.
    pub fn with_features(&self, features: Vec<Column>) -> Result<DataTable> {
        let mut columns = features;
        columns.push(self.target().clone());
        let mut table = DataTable::with_task(columns, self.target().name(), self.task)?;
        table.n_rows = self.n_rows;
        Ok(table)
    }

    /// Row subset; feature level dictionaries are compacted, the target's
    /// class dictionary is kept so class codes agree across splits.
    pub fn take_rows(&self, rows: &[usize]) -> DataTable {
        let columns = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == self.target {
                    c.take_keep_levels(rows)
                } else {
                    c.take(rows)
                }
            })
            .collect();
        DataTable {
            columns,
            n_rows: rows.len(),
            target: self.target,
            task: self.task,
        }
    }

    /// Replaces the target column (same name, same kind). Used to check that
    /// predictions never depend on held-out targets.
    pub fn with_target(&self, target: Column) -> Result<DataTable> {
        let mut columns = self.columns.clone();
        let name = self.target().name().to_owned();
        columns[self.target] = target.rename(name.clone());
        DataTable::with_task(columns, &name, self.task)
    }

    /// Dense row-major feature matrix. Every feature must be numeric and
    /// complete.
    pub fn feature_matrix(&self) -> Result<DMatrix<f64>> {
        let feats: Vec<&Column> = self.features().collect();
        let mut m = DMatrix::zeros(self.n_rows, feats.len());
        for (j, c) in feats.iter().enumerate() {
            let v = c.numeric_values().ok_or_else(|| {
                Error::Data(format!("feature `{}` is still categorical", c.name()))
            })?;
            for (i, x) in v.iter().enumerate() {
                m[(i, j)] = x.ok_or_else(|| {
                    Error::Data(format!("feature `{}` has a missing value at row {i}", c.name()))
                })?;
            }
        }
        Ok(m)
    }

    /// Checks that `other` carries the same feature columns (names and kinds).
    pub fn check_same_features(&self, other: &DataTable) -> Result<()> {
        let a: Vec<(&str, bool)> = self.features().map(|c| (c.name(), c.is_categorical())).collect();
        let b: Vec<(&str, bool)> = other.features().map(|c| (c.name(), c.is_categorical())).collect();
        if a != b {
            return Err(Error::SchemaMismatch(format!(
                "expected features {:?}, found {:?}",
                a.iter().map(|x| x.0).collect::<Vec<_>>(),
                b.iter().map(|x| x.0).collect::<Vec<_>>()
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// CSV + schema ingestion

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    #[serde(alias = "cat", alias = "factor")]
    Categorical,
    #[serde(alias = "num")]
    Numeric,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
}

/// JSON sidecar describing a CSV file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableSchema {
    pub columns: Vec<ColumnSchema>,
    pub target: String,
    /// "regression", "classification", "binary" or "multiclass".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
}

#[derive(Clone, Debug)]
pub struct LoadOptions {
    /// Cell contents treated as missing (after trimming).
    pub missing_tokens: Vec<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            missing_tokens: vec![String::new(), "NA".to_owned()],
        }
    }
}

pub fn read_schema(path: &Path) -> Result<TableSchema> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads a CSV file described by a JSON schema sidecar.
pub fn load_dataset(csv_path: &Path, schema_path: &Path, options: &LoadOptions) -> Result<DataTable> {
    let schema = read_schema(schema_path)?;
    let file = std::fs::File::open(csv_path).map_err(|source| Error::Io {
        path: csv_path.to_owned(),
        source,
    })?;
    read_csv(file, &schema, options)
}

/// Parses CSV text against a schema.
pub fn read_csv<R: std::io::Read>(reader: R, schema: &TableSchema, options: &LoadOptions) -> Result<DataTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_owned()).collect();

    let kinds: HashMap<&str, ColumnKind> =
        schema.columns.iter().map(|c| (c.name.as_str(), c.kind)).collect();
    if kinds.len() != schema.columns.len() {
        return Err(Error::Schema("duplicate column in schema".into()));
    }
    for h in &headers {
        if !kinds.contains_key(h.as_str()) {
            return Err(Error::Schema(format!("CSV column `{h}` is not declared in the schema")));
        }
    }
    for c in &schema.columns {
        if !headers.contains(&c.name) {
            return Err(Error::Schema(format!("schema column `{}` is absent from the CSV", c.name)));
        }
    }
    if !headers.contains(&schema.target) {
        return Err(Error::Schema(format!("target `{}` is not a column", schema.target)));
    }

    let is_missing = |s: &str| options.missing_tokens.iter().any(|t| t == s);
    let mut raw: Vec<Vec<Option<String>>> = vec![Vec::new(); headers.len()];
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Data(format!(
                "row {} has {} fields, expected {}",
                line + 2,
                record.len(),
                headers.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            raw[j].push(if is_missing(cell) { None } else { Some(cell.to_owned()) });
        }
    }

    let columns: Vec<Column> = headers
        .iter()
        .zip(raw)
        .map(|(name, cells)| match kinds[name.as_str()] {
            ColumnKind::Categorical => Column::categorical(name.clone(), &cells),
            ColumnKind::Numeric => Column::numeric(
                name.clone(),
                cells
                    .iter()
                    .map(|c| c.as_deref().and_then(|s| s.parse::<f64>().ok()))
                    .collect(),
            ),
        })
        .collect();

    let target_kind = kinds[schema.target.as_str()];
    if let Some(task) = &schema.task {
        let ok = match task.as_str() {
            "regression" => target_kind == ColumnKind::Numeric,
            "classification" | "binary" | "multiclass" => target_kind == ColumnKind::Categorical,
            other => return Err(Error::Schema(format!("unknown task `{other}`"))),
        };
        if !ok {
            return Err(Error::Schema(format!(
                "task `{task}` is inconsistent with the kind of target `{}`",
                schema.target
            )));
        }
    }
    let table = DataTable::new(columns, &schema.target)?;
    match (schema.task.as_deref(), table.task()) {
        (Some("binary"), TaskKind::Multiclass(c)) => Err(Error::Schema(format!(
            "task declared binary but target has {c} classes"
        ))),
        (Some("multiclass"), TaskKind::Binary) => Err(Error::Schema(
            "task declared multiclass but target has 2 classes".into(),
        )),
        _ => Ok(table),
    }
}

// ---------------------------------------------------------------------------
// Folds

/// Assignment of rows to cross-validation folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold_of_row: Vec<usize>,
    pub n_folds: usize,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of_row.len())
            .filter(|&i| self.fold_of_row[i] == fold)
            .collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of_row.len())
            .filter(|&i| self.fold_of_row[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.fold_of_row {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified (classification) or plain (regression) k-fold assignment.
pub fn stratified_kfold(table: &DataTable, n_folds: usize, seed: u64) -> Result<FoldAssignment> {
    assign_folds(&table.target_values(), n_folds, seed)
}

/// Fold assignment as a pure function of the target, fold count and seed.
///
/// Rows are shuffled within each class, classes are laid out one after
/// another and dealt round-robin, so per-class and total fold sizes each
/// differ by at most one.
pub fn assign_folds(target: &TargetValues, n_folds: usize, seed: u64) -> Result<FoldAssignment> {
    let n = target.len();
    if n_folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {n_folds}")));
    }
    if n_folds > n {
        return Err(Error::InvalidArgument(format!("{n_folds} folds requested for {n} rows")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = match target {
        TargetValues::Numeric(_) => {
            let mut rows: Vec<usize> = (0..n).collect();
            rows.shuffle(&mut rng);
            rows
        }
        TargetValues::Classes { codes, n_classes } => {
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); *n_classes];
            for (i, &c) in codes.iter().enumerate() {
                by_class[c as usize].push(i);
            }
            if let Some(empty) = by_class.iter().position(Vec::is_empty) {
                return Err(Error::Data(format!("class {empty} has no members")));
            }
            let mut order = Vec::with_capacity(n);
            for mut rows in by_class {
                rows.shuffle(&mut rng);
                order.extend(rows);
            }
            order
        }
    };
    let mut fold_of_row = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold_of_row[row] = pos % n_folds;
    }
    Ok(FoldAssignment {
        fold_of_row,
        n_folds,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Profiling

/// Shannon entropy of the level frequencies divided by `ln L`.
/// Missing cells are ignored; a single observed level gives 0.
pub fn normalized_entropy(column: &Column) -> Result<f64> {
    if !column.is_categorical() {
        return Err(Error::InvalidArgument(format!(
            "normalized entropy needs a categorical column, `{}` is numeric",
            column.name()
        )));
    }
    let counts: Vec<usize> = column.level_counts().into_iter().filter(|&n| n > 0).collect();
    let total: usize = counts.iter().sum();
    if counts.is_empty() {
        return Err(Error::AllMissing(column.name().to_owned()));
    }
    if counts.len() == 1 {
        return Ok(0.0);
    }
    let h: f64 = counts
        .iter()
        .map(|&n| {
            let p = n as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    Ok((h / (counts.len() as f64).ln()).clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub name: String,
    pub n_levels: usize,
    pub normalized_entropy: f64,
    pub missing_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub n_rows: usize,
    pub task: String,
    pub n_classes: Option<usize>,
    pub categorical: Vec<ColumnProfile>,
}

/// Level count, normalized entropy and missing rate of every categorical
/// feature.
pub fn profile_dataset(table: &DataTable) -> DatasetProfile {
    let n = table.n_rows().max(1) as f64;
    let categorical = table
        .features()
        .filter(|c| c.is_categorical())
        .map(|c| ColumnProfile {
            name: c.name().to_owned(),
            n_levels: c.n_observed_levels(),
            normalized_entropy: normalized_entropy(c).unwrap_or(0.0),
            missing_rate: c.n_missing() as f64 / n,
        })
        .collect();
    DatasetProfile {
        n_rows: table.n_rows(),
        task: table.task().name().to_owned(),
        n_classes: table.task().n_classes(),
        categorical,
    }
}
