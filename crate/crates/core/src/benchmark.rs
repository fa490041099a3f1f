//! The outer cross-validation benchmark over datasets, encoder conditions
//! and learners.

use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoders::{apply_hct_routing, EncoderSpec, Strategy};
use crate::error::{Error, Result};
use crate::evaluation::Metric;
use crate::learners::{Learner, LearnerSpec};
use crate::pipeline::FittedPipeline;
use crate::table::{assign_folds, DataTable, FoldAssignment};

/// Version of the [`BenchmarkRecord`] layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Reason attached to grid points whose encoder would touch no feature.
pub const HCT_INFEASIBLE: &str = "hct-infeasible";
/// Reason attached to grid points that repeat an earlier threshold's
/// encoding exactly.
pub const HCT_DUPLICATE: &str = "hct-duplicate";

#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub table: DataTable,
}

/// A learner configuration with the label used in records.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedLearner {
    pub label: String,
    #[serde(flatten)]
    pub spec: LearnerSpec,
}

impl NamedLearner {
    pub fn new(spec: LearnerSpec) -> Self {
        NamedLearner {
            label: spec.name(),
            spec,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPlan {
    pub encoders: Vec<EncoderSpec>,
    pub learners: Vec<NamedLearner>,
    pub outer_folds: usize,
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    /// Wall times in records; when off they are all zero so that reruns
    /// produce byte-identical output.
    pub record_timings: bool,
}

impl BenchmarkPlan {
    pub fn validate(&self) -> Result<()> {
        if self.encoders.is_empty() || self.learners.is_empty() {
            return Err(Error::InvalidArgument("need at least one encoder and one learner".into()));
        }
        if self.outer_folds < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 outer folds, got {}",
                self.outer_folds
            )));
        }
        let mut seen = HashSet::new();
        for e in &self.encoders {
            e.validate()?;
            if !seen.insert(e) {
                return Err(Error::InvalidArgument(format!("encoder {} hct {} listed twice", e.label(), e.hct)));
            }
        }
        let mut labels = HashSet::new();
        for l in &self.learners {
            l.spec.validate()?;
            if !labels.insert(&l.label) {
                return Err(Error::InvalidArgument(format!("learner label `{}` used twice", l.label)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Ok,
    /// The test fold lacks a class; excluded from aggregation.
    Degenerate,
    Failed,
}

/// One (dataset, encoder, learner, outer fold) evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub schema_version: u32,
    pub dataset: String,
    pub condition: String,
    pub strategy: Strategy,
    pub hct: usize,
    pub glmm_folds: usize,
    pub learner: String,
    pub fold: usize,
    pub seed: u64,
    pub metric: Metric,
    pub value: Option<f64>,
    pub status: RecordStatus,
    pub message: Option<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub fit_seconds: f64,
    pub transform_seconds: f64,
    pub train_seconds: f64,
    pub predict_seconds: f64,
}

impl BenchmarkRecord {
    pub fn total_seconds(&self) -> f64 {
        self.fit_seconds + self.transform_seconds + self.train_seconds + self.predict_seconds
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Outcome of one (dataset, encoder) grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionStatus {
    pub dataset: String,
    pub condition: String,
    pub strategy: Strategy,
    pub hct: usize,
    pub glmm_folds: usize,
    /// "run" or "skipped".
    pub status: String,
    pub reason: Option<String>,
    pub records: usize,
    pub failed_records: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub conditions: Vec<ConditionStatus>,
    pub n_records: usize,
    pub n_ok: usize,
    pub n_degenerate: usize,
    pub n_failed: usize,
}

/// Whether an encoder condition applies to a table, and a signature that
/// identifies equivalent thresholds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Feasibility {
    Feasible(String),
    Infeasible,
}

/// An encoder must touch at least one feature. Indicator encodings touch
/// every categorical column and collapse those with at least `hct` levels;
/// other strategies touch the columns routed to them by the threshold.
pub fn hct_feasibility(table: &DataTable, spec: &EncoderSpec) -> Result<Feasibility> {
    let mut key = spec.clone();
    key.hct = 0;
    let base = serde_json::to_string(&key)?;
    if spec.strategy.is_indicator() {
        let parts: Vec<String> = table
            .features()
            .filter(|c| c.is_categorical())
            .map(|c| {
                if c.n_observed_levels() >= spec.hct {
                    format!("{}:{}", c.name(), spec.hct)
                } else {
                    format!("{}:all", c.name())
                }
            })
            .collect();
        if parts.is_empty() {
            return Ok(Feasibility::Infeasible);
        }
        return Ok(Feasibility::Feasible(format!("{base}|{}", parts.join(","))));
    }
    let routing = apply_hct_routing(table, spec)?;
    if routing.encoded.is_empty() && routing.removed.is_empty() {
        return Ok(Feasibility::Infeasible);
    }
    let hct = if spec.strategy.hct_only_routes() {
        String::new()
    } else {
        spec.hct.to_string()
    };
    Ok(Feasibility::Feasible(format!(
        "{base}|{hct}|{}|{}",
        routing.encoded.join(","),
        routing.removed.join(",")
    )))
}

/// SplitMix64 finalizer of `a` combined with `b`.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(a << 6).wrapping_add(a >> 2);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn name_seed(name: &str) -> u64 {
    crate::encoders::stable_hash(name, 0)
}

/// Outer fold assignment of a dataset; shared by all conditions so that
/// fold-wise differences are paired.
pub fn outer_folds(dataset: &Dataset, plan: &BenchmarkPlan) -> Result<FoldAssignment> {
    assign_folds(
        &dataset.table.target_values(),
        plan.outer_folds,
        mix_seed(plan.seed, name_seed(&dataset.name)),
    )
}

struct Unit<'a> {
    dataset: &'a Dataset,
    folds: &'a FoldAssignment,
    encoder: &'a EncoderSpec,
    fold: usize,
}

fn elapsed(start: Instant, on: bool) -> f64 {
    if on {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    }
}

/// Fits the pipeline on the training part of a fold and returns the
/// numeric training and test tables.
pub fn prepare_fold(
    train: &DataTable,
    test: &DataTable,
    spec: &EncoderSpec,
) -> Result<(DataTable, DataTable, FittedPipeline)> {
    let (pipe, train_out) = FittedPipeline::fit(train, spec)?;
    let test_out = pipe.transform(test)?;
    Ok((train_out, test_out, pipe))
}

fn run_unit(unit: &Unit<'_>, plan: &BenchmarkPlan) -> Vec<BenchmarkRecord> {
    let table = &unit.dataset.table;
    let metric = Metric::for_task(table.task());
    let seed = mix_seed(mix_seed(plan.seed, name_seed(&unit.dataset.name)), unit.fold as u64 + 1);
    let train_rows = unit.folds.train_rows(unit.fold);
    let test_rows = unit.folds.test_rows(unit.fold);
    let template = BenchmarkRecord {
        schema_version: SCHEMA_VERSION,
        dataset: unit.dataset.name.clone(),
        condition: unit.encoder.label(),
        strategy: unit.encoder.strategy,
        hct: unit.encoder.hct,
        glmm_folds: unit.encoder.glmm_folds,
        learner: String::new(),
        fold: unit.fold,
        seed,
        metric,
        value: None,
        status: RecordStatus::Failed,
        message: None,
        n_train: train_rows.len(),
        n_test: test_rows.len(),
        fit_seconds: 0.0,
        transform_seconds: 0.0,
        train_seconds: 0.0,
        predict_seconds: 0.0,
    };
    let failed = |message: String| -> Vec<BenchmarkRecord> {
        plan.learners
            .iter()
            .map(|l| BenchmarkRecord {
                learner: l.label.clone(),
                message: Some(message.clone()),
                ..template.clone()
            })
            .collect()
    };

    let train = table.take_rows(&train_rows);
    let test = table.take_rows(&test_rows);
    let spec = unit.encoder.clone().with_seed(mix_seed(seed, unit.encoder.seed));
    let t = Instant::now();
    let fitted = FittedPipeline::fit(&train, &spec);
    let fit_seconds = elapsed(t, plan.record_timings);
    let (pipe, train_out) = match fitted {
        Ok(v) => v,
        Err(e) => return failed(format!("pipeline fit: {e}")),
    };
    let t = Instant::now();
    let transformed = pipe.transform(&test);
    let transform_seconds = elapsed(t, plan.record_timings);
    let test_out = match transformed {
        Ok(v) => v,
        Err(e) => return failed(format!("pipeline transform: {e}")),
    };
    let (x_train, x_test) = match (train_out.feature_matrix(), test_out.feature_matrix()) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return failed(format!("design matrix: {e}")),
    };
    let (y_train, y_test) = (train_out.target_values(), test_out.target_values());

    plan.learners
        .iter()
        .map(|l| {
            let mut rec = BenchmarkRecord {
                learner: l.label.clone(),
                fit_seconds,
                transform_seconds,
                ..template.clone()
            };
            let t = Instant::now();
            let model = l.spec.fit(&x_train, &y_train, seed);
            rec.train_seconds = elapsed(t, plan.record_timings);
            let model = match model {
                Ok(m) => m,
                Err(e) => {
                    rec.message = Some(format!("learner fit: {e}"));
                    return rec;
                }
            };
            let t = Instant::now();
            let pred = model.predict(&x_test);
            rec.predict_seconds = elapsed(t, plan.record_timings);
            match pred.and_then(|p| metric.evaluate(&p, &y_test)) {
                Ok(v) => {
                    rec.value = Some(v);
                    rec.status = RecordStatus::Ok;
                }
                Err(Error::DegenerateFold(m)) => {
                    rec.status = RecordStatus::Degenerate;
                    rec.message = Some(m);
                }
                Err(e) => rec.message = Some(format!("prediction: {e}")),
            }
            rec
        })
        .collect()
}

/// Runs every (dataset, encoder, outer fold) unit and passes its records
/// to `sink` in grid order: datasets, then encoders, then folds, then
/// learners. The pipeline is fit once per unit and shared by the learners.
/// An error from `sink` stops the run.
pub fn run_benchmark(
    datasets: &[Dataset],
    plan: &BenchmarkPlan,
    sink: &mut dyn FnMut(&BenchmarkRecord) -> Result<()>,
) -> Result<RunSummary> {
    plan.validate()?;
    if datasets.is_empty() {
        return Err(Error::InvalidArgument("no datasets".into()));
    }
    let mut names = HashSet::new();
    for d in datasets {
        if !names.insert(&d.name) {
            return Err(Error::InvalidArgument(format!("dataset `{}` listed twice", d.name)));
        }
    }

    let mut summary = RunSummary::default();
    let mut folds = Vec::with_capacity(datasets.len());
    for d in datasets {
        folds.push(outer_folds(d, plan)?);
    }
    // (dataset index, encoder index) of grid points that run, with their
    // index into `summary.conditions`.
    let mut active = Vec::new();
    for (di, d) in datasets.iter().enumerate() {
        let mut seen = HashSet::new();
        for (ei, e) in plan.encoders.iter().enumerate() {
            let reason = match hct_feasibility(&d.table, e)? {
                Feasibility::Infeasible => Some(HCT_INFEASIBLE),
                Feasibility::Feasible(sig) => (!seen.insert(sig)).then_some(HCT_DUPLICATE),
            };
            if reason.is_none() {
                active.push((di, ei, summary.conditions.len()));
            }
            summary.conditions.push(ConditionStatus {
                dataset: d.name.clone(),
                condition: e.label(),
                strategy: e.strategy,
                hct: e.hct,
                glmm_folds: e.glmm_folds,
                status: if reason.is_some() { "skipped" } else { "run" }.into(),
                reason: reason.map(str::to_owned),
                records: 0,
                failed_records: 0,
            });
        }
    }
    let units: Vec<(Unit<'_>, usize)> = active
        .iter()
        .flat_map(|&(di, ei, ci)| {
            let folds = &folds[di];
            (0..plan.outer_folds).map(move |fold| {
                (
                    Unit {
                        dataset: &datasets[di],
                        folds,
                        encoder: &plan.encoders[ei],
                        fold,
                    },
                    ci,
                )
            })
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let cancel = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Vec<BenchmarkRecord>)>();
    let mut sink_error = None;
    std::thread::scope(|scope| {
        let units = &units;
        let cancel = &cancel;
        scope.spawn(move || {
            pool.install(|| {
                units.par_iter().enumerate().for_each_with(tx, |tx, (i, (unit, _))| {
                    if cancel.load(Ordering::Relaxed) {
                        return;
                    }
                    let _ = tx.send((i, run_unit(unit, plan)));
                });
            });
        });
        // Reorder buffer so records leave in grid order.
        let mut pending = BTreeMap::new();
        let mut next = 0;
        for (i, recs) in rx {
            pending.insert(i, recs);
            while let Some(recs) = pending.remove(&next) {
                let ci = units[next].1;
                for r in &recs {
                    if sink_error.is_none() {
                        if let Err(e) = sink(r) {
                            sink_error = Some(e);
                            cancel.store(true, Ordering::Relaxed);
                        }
                    }
                    let c = &mut summary.conditions[ci];
                    c.records += 1;
                    summary.n_records += 1;
                    match r.status {
                        RecordStatus::Ok => summary.n_ok += 1,
                        RecordStatus::Degenerate => summary.n_degenerate += 1,
                        RecordStatus::Failed => {
                            summary.n_failed += 1;
                            c.failed_records += 1;
                        }
                    }
                }
                next += 1;
            }
        }
    });
    match sink_error {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}

/// [`run_benchmark`] collecting the records in memory.
pub fn run_benchmark_collect(datasets: &[Dataset], plan: &BenchmarkPlan) -> Result<(Vec<BenchmarkRecord>, RunSummary)> {
    let mut records = Vec::new();
    let summary = run_benchmark(datasets, plan, &mut |r| {
        records.push(r.clone());
        Ok(())
    })?;
    Ok((records, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{categorical_signal, SignalSpec};
    use crate::table::{Column, TaskKind};

    fn plan(encoders: Vec<EncoderSpec>, learners: Vec<LearnerSpec>) -> BenchmarkPlan {
        BenchmarkPlan {
            encoders,
            learners: learners.into_iter().map(NamedLearner::new).collect(),
            outer_folds: 3,
            seed: 11,
            workers: 2,
            record_timings: false,
        }
    }

    fn signal(task: TaskKind, seed: u64) -> Dataset {
        Dataset {
            name: "sig".into(),
            table: categorical_signal(&SignalSpec {
                n_rows: 300,
                n_levels: 30,
                n_noise_features: 1,
                task,
                seed,
                ..SignalSpec::default()
            })
            .unwrap(),
        }
    }

    #[test]
    fn featureless_matches_fold_baseline() {
        let d = signal(TaskKind::Regression, 1);
        let p = plan(vec![EncoderSpec::new(Strategy::Integer, 10)], vec![LearnerSpec::Featureless]);
        let (recs, _) = run_benchmark_collect(std::slice::from_ref(&d), &p).unwrap();
        let folds = outer_folds(&d, &p).unwrap();
        let y = match d.table.target_values() {
            crate::table::TargetValues::Numeric(y) => y,
            _ => unreachable!(),
        };
        for r in &recs {
            let train: Vec<f64> = folds.train_rows(r.fold).iter().map(|&i| y[i]).collect();
            let test: Vec<f64> = folds.test_rows(r.fold).iter().map(|&i| y[i]).collect();
            let mean = train.iter().sum::<f64>() / train.len() as f64;
            let want = crate::evaluation::rmse(&vec![mean; test.len()], &test).unwrap();
            assert!((r.value.unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn records_are_ordered_and_deterministic() {
        let d = signal(TaskKind::Binary, 2);
        let p = plan(
            vec![
                EncoderSpec::new(Strategy::Glmm, 10).with_folds(3),
                EncoderSpec::new(Strategy::OneHot, 10),
            ],
            vec![LearnerSpec::Featureless, LearnerSpec::knn()],
        );
        let (a, summary) = run_benchmark_collect(std::slice::from_ref(&d), &p).unwrap();
        assert_eq!(a.len(), 2 * 3 * 2);
        assert_eq!(summary.n_ok, 12);
        let keys: Vec<(String, usize, String)> =
            a.iter().map(|r| (r.condition.clone(), r.fold, r.learner.clone())).collect();
        assert_eq!(keys[0], ("glmm_3cv".into(), 0, "featureless".into()));
        assert_eq!(keys[1], ("glmm_3cv".into(), 0, "knn".into()));
        assert_eq!(keys[6], ("one_hot".into(), 0, "featureless".into()));
        let (b, _) = run_benchmark_collect(std::slice::from_ref(&d), &BenchmarkPlan { workers: 1, ..p }).unwrap();
        let lines = |v: &[BenchmarkRecord]| v.iter().map(|r| r.to_json_line().unwrap()).collect::<Vec<_>>();
        assert_eq!(lines(&a), lines(&b));
    }

    #[test]
    fn infeasible_and_duplicate_thresholds_are_skipped() {
        let d = signal(TaskKind::Binary, 3);
        let p = plan(
            vec![
                EncoderSpec::new(Strategy::Impact, 10),
                EncoderSpec::new(Strategy::Impact, 25),
                EncoderSpec::new(Strategy::Impact, 125),
                EncoderSpec::new(Strategy::OneHot, 125),
            ],
            vec![LearnerSpec::Featureless],
        );
        let (recs, summary) = run_benchmark_collect(&[d], &p).unwrap();
        let reasons: Vec<Option<&str>> = summary.conditions.iter().map(|c| c.reason.as_deref()).collect();
        assert_eq!(reasons, vec![None, Some(HCT_DUPLICATE), Some(HCT_INFEASIBLE), None]);
        assert_eq!(recs.len(), 2 * 3);
    }

    #[test]
    fn removing_the_only_signal_gives_chance_auc() {
        let d = Dataset {
            name: "sig".into(),
            table: categorical_signal(&SignalSpec {
                n_rows: 2000,
                n_levels: 40,
                effect_sd: 2.0,
                noise_sd: 0.5,
                n_noise_features: 2,
                seed: 4,
                ..SignalSpec::default()
            })
            .unwrap(),
        };
        let p = plan(vec![EncoderSpec::new(Strategy::Remove, 10)], vec![LearnerSpec::knn()]);
        let (recs, _) = run_benchmark_collect(&[d], &p).unwrap();
        let mean = recs.iter().map(|r| r.value.unwrap()).sum::<f64>() / recs.len() as f64;
        assert!((mean - 0.5).abs() < 0.05, "{mean}");
    }

    #[test]
    fn single_class_test_folds_are_flagged_degenerate() {
        let n = 60;
        let x: Vec<String> = (0..n).map(|i| format!("l{}", i % 20)).collect();
        let y: Vec<&str> = (0..n).map(|i| if i == 7 { "b" } else { "a" }).collect();
        let table = DataTable::new(
            vec![Column::categorical_dense("x", &x), Column::categorical_dense("y", &y)],
            "y",
        )
        .unwrap();
        let p = plan(
            vec![EncoderSpec::new(Strategy::Frequency, 5)],
            vec![LearnerSpec::Featureless, LearnerSpec::knn()],
        );
        let (recs, summary) = run_benchmark_collect(&[Dataset { name: "t".into(), table }], &p).unwrap();
        assert_eq!(recs.len(), 6);
        assert_eq!((summary.n_ok, summary.n_degenerate, summary.n_failed), (2, 4, 0));
        assert!(recs
            .iter()
            .filter(|r| r.status == RecordStatus::Degenerate)
            .all(|r| r.value.is_none()));
    }

    #[test]
    fn sink_error_stops_the_run() {
        let d = signal(TaskKind::Binary, 6);
        let p = plan(vec![EncoderSpec::new(Strategy::Integer, 10)], vec![LearnerSpec::Featureless]);
        let mut seen = 0;
        let err = run_benchmark(&[d], &p, &mut |_| {
            seen += 1;
            Err(Error::Data("disk full".into()))
        });
        assert!(err.is_err());
        assert_eq!(seen, 1);
    }

    #[test]
    fn test_targets_never_reach_the_pipeline() {
        let d = signal(TaskKind::Binary, 5);
        let folds = outer_folds(&d, &plan(vec![], vec![])).unwrap();
        let spec = EncoderSpec::new(Strategy::Glmm, 10).with_folds(5);
        let train = d.table.take_rows(&folds.train_rows(0));
        let test = d.table.take_rows(&folds.test_rows(0));
        let codes: Vec<Option<u32>> = test.target().codes().unwrap().iter().map(|c| c.map(|c| 1 - c)).collect();
        let poisoned = test
            .with_target(Column::from_codes("y", codes, test.target().levels().unwrap().clone()).unwrap())
            .unwrap();
        let (_, a, _) = prepare_fold(&train, &test, &spec).unwrap();
        let (_, b, _) = prepare_fold(&train, &poisoned, &spec).unwrap();
        assert_eq!(a.feature_matrix().unwrap(), b.feature_matrix().unwrap());
    }
}
