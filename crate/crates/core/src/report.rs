//! Summaries computed from benchmark records: best-threshold metric
//! tables, consensus rankings, runtime ratios and dataset clustering.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::benchmark::{BenchmarkRecord, RecordStatus};
use crate::consensus::{complete_linkage, consensus_weak_order, Dendrogram};
use crate::encoders::Strategy;
use crate::error::{Error, Result};
use crate::evaluation::{build_relation, ConditionScores, Metric, Relation};

/// Condition used as the runtime reference.
pub const REFERENCE_CONDITION: &str = "one_hot";

const CONSENSUS_NOTE: &str = "weak-order consensus; per-dataset relations are significance-based \
dominance relations, conditions missing from a dataset dominate nothing and are dominated by nothing";

/// Reads a JSON Lines records file; blank lines are ignored.
pub fn read_records(path: &Path) -> Result<Vec<BenchmarkRecord>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: BenchmarkRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Mean, min and max over the usable folds of a condition at its best
/// threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub learner: String,
    pub condition: String,
    pub best_hct: usize,
    pub metric: Metric,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub n_folds: usize,
}

/// Total runtime relative to the reference condition, across datasets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub condition: String,
    pub learner: String,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub n_datasets: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRelation {
    pub dataset: String,
    /// Threshold of a per-threshold relation; absent for best-threshold.
    pub hct: Option<usize>,
    pub relation: Relation,
    pub excluded: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub hct: Option<usize>,
    pub labels: Vec<String>,
    pub tiers: Vec<usize>,
    /// Conditions grouped by tier, best first.
    pub ranking: Vec<Vec<String>>,
    pub total_distance: usize,
    pub exact: bool,
    pub n_relations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConsensus {
    pub learner: String,
    pub best_hct: ConsensusReport,
    pub per_hct: Vec<ConsensusReport>,
    pub relations: Vec<DatasetRelation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerDendrogram {
    pub learner: String,
    pub dendrogram: Option<Dendrogram>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub alpha: f64,
    pub summary: Vec<SummaryRow>,
    pub consensus: Vec<LearnerConsensus>,
    pub runtime_ratios: Vec<RatioRow>,
    pub dendrograms: Vec<LearnerDendrogram>,
}

type Key = (String, String, String); // dataset, learner, condition

struct Cell<'a> {
    records: Vec<&'a BenchmarkRecord>,
}

impl Cell<'_> {
    fn usable(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.status == RecordStatus::Ok)
            .filter_map(|r| r.value)
            .collect()
    }

    fn scores(&self, label: &str) -> ConditionScores {
        ConditionScores {
            label: label.to_owned(),
            values: self
                .records
                .iter()
                .map(|r| if r.status == RecordStatus::Ok { r.value } else { None })
                .collect(),
            n_train: self.records.iter().map(|r| r.n_train).collect(),
            n_test: self.records.iter().map(|r| r.n_test).collect(),
        }
    }

    fn total_seconds(&self) -> f64 {
        self.records.iter().map(|r| r.total_seconds()).sum()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Re-indexes a relation onto a larger label set.
fn expand(rel: &Relation, universe: &[String]) -> Relation {
    let idx: Vec<usize> = rel
        .labels
        .iter()
        .map(|l| universe.iter().position(|u| u == l).expect("label in universe"))
        .collect();
    let mut out = Relation::empty(universe.to_vec());
    for (i, &a) in idx.iter().enumerate() {
        for (j, &b) in idx.iter().enumerate() {
            out.beats[a][b] = rel.beats[i][j];
        }
    }
    out
}

fn consensus_of(relations: &[Relation], universe: &[String], hct: Option<usize>, seed: u64) -> Result<ConsensusReport> {
    let expanded: Vec<Relation> = relations.iter().map(|r| expand(r, universe)).collect();
    let c = consensus_weak_order(&expanded, seed)?;
    let ranking = c
        .order
        .groups()
        .into_iter()
        .map(|g| g.into_iter().map(|i| universe[i].clone()).collect())
        .collect();
    Ok(ConsensusReport {
        hct,
        labels: c.labels,
        tiers: c.order.tiers,
        ranking,
        total_distance: c.total_distance,
        exact: c.exact,
        n_relations: relations.len(),
    })
}

/// Builds every summary from the records. The result depends on the
/// records, `alpha` and `seed` only.
pub fn build_report(records: &[BenchmarkRecord], alpha: f64, seed: u64) -> Result<Report> {
    if records.is_empty() {
        return Err(Error::Data("no benchmark records".into()));
    }
    let mut by_hct: BTreeMap<Key, BTreeMap<usize, Cell<'_>>> = BTreeMap::new();
    let mut metric_of: BTreeMap<String, Metric> = BTreeMap::new();
    for r in records {
        if let Some(m) = metric_of.insert(r.dataset.clone(), r.metric) {
            if m != r.metric {
                return Err(Error::Data(format!("dataset `{}` mixes metrics", r.dataset)));
            }
        }
        by_hct
            .entry((r.dataset.clone(), r.learner.clone(), r.condition.clone()))
            .or_default()
            .entry(r.hct)
            .or_insert_with(|| Cell { records: Vec::new() })
            .records
            .push(r);
    }
    for cells in by_hct.values_mut() {
        for cell in cells.values_mut() {
            cell.records.sort_by_key(|r| r.fold);
        }
    }

    // Best threshold: highest mean usable metric, ties to the smaller hct.
    let mut best: BTreeMap<&Key, usize> = BTreeMap::new();
    let mut summary = Vec::new();
    for (key, cells) in &by_hct {
        let metric = metric_of[&key.0];
        let mut choice: Option<(usize, f64)> = None;
        for (&hct, cell) in cells {
            let v = cell.usable();
            if v.is_empty() {
                continue;
            }
            let m = mean(&v);
            if choice.is_none_or(|(_, bm)| metric.better(m, bm)) {
                choice = Some((hct, m));
            }
        }
        let Some((hct, m)) = choice else { continue };
        best.insert(key, hct);
        let v = cells[&hct].usable();
        summary.push(SummaryRow {
            dataset: key.0.clone(),
            learner: key.1.clone(),
            condition: key.2.clone(),
            best_hct: hct,
            metric,
            mean: m,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            n_folds: v.len(),
        });
    }

    let datasets: BTreeSet<&String> = by_hct.keys().map(|k| &k.0).collect();
    let learners: BTreeSet<&String> = by_hct.keys().map(|k| &k.1).collect();
    let mut consensus = Vec::new();
    let mut dendrograms = Vec::new();
    let mut runtime_ratios = Vec::new();
    for learner in &learners {
        let universe: Vec<String> = by_hct
            .keys()
            .filter(|k| &k.1 == *learner)
            .map(|k| k.2.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let hcts: BTreeSet<usize> = by_hct
            .iter()
            .filter(|(k, _)| &k.1 == *learner)
            .flat_map(|(_, cells)| cells.keys().copied())
            .collect();

        let mut relations = Vec::new();
        let mut best_rel = Vec::new();
        let mut best_names = Vec::new();
        let mut per_hct_rel: BTreeMap<usize, Vec<Relation>> = BTreeMap::new();
        for dataset in &datasets {
            let metric = metric_of[*dataset];
            let keys: Vec<&Key> = by_hct
                .keys()
                .filter(|k| &k.0 == *dataset && &k.1 == *learner)
                .collect();
            if keys.is_empty() {
                continue;
            }
            let scores: Vec<ConditionScores> = keys
                .iter()
                .filter_map(|k| best.get(k).map(|h| by_hct[*k][h].scores(&k.2)))
                .collect();
            let unusable: Vec<String> = keys.iter().filter(|k| !best.contains_key(*k)).map(|k| k.2.clone()).collect();
            let res = build_relation(&scores, metric, alpha)?;
            best_rel.push(res.relation.clone());
            best_names.push((*dataset).clone());
            relations.push(DatasetRelation {
                dataset: (*dataset).clone(),
                hct: None,
                relation: res.relation,
                excluded: res.excluded.into_iter().chain(unusable).collect(),
            });
            for &h in &hcts {
                let scores: Vec<ConditionScores> = keys
                    .iter()
                    .filter_map(|k| by_hct[*k].get(&h).map(|c| c.scores(&k.2)))
                    .collect();
                if scores.is_empty() {
                    continue;
                }
                let res = build_relation(&scores, metric, alpha)?;
                per_hct_rel.entry(h).or_default().push(res.relation.clone());
                relations.push(DatasetRelation {
                    dataset: (*dataset).clone(),
                    hct: Some(h),
                    relation: res.relation,
                    excluded: res.excluded,
                });
            }
        }
        let best_hct = consensus_of(&best_rel, &universe, None, seed)?;
        let mut per_hct = Vec::new();
        for (h, rels) in &per_hct_rel {
            let labels: Vec<String> = rels
                .iter()
                .flat_map(|r| r.labels.iter().cloned())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            per_hct.push(consensus_of(rels, &labels, Some(*h), seed)?);
        }
        consensus.push(LearnerConsensus {
            learner: (*learner).clone(),
            best_hct,
            per_hct,
            relations,
        });

        dendrograms.push(if best_rel.len() >= 2 {
            let expanded: Vec<Relation> = best_rel.iter().map(|r| expand(r, &universe)).collect();
            LearnerDendrogram {
                learner: (*learner).clone(),
                dendrogram: Some(complete_linkage(best_names, &expanded)?),
                note: None,
            }
        } else {
            LearnerDendrogram {
                learner: (*learner).clone(),
                dendrogram: None,
                note: Some("clustering needs at least two datasets".into()),
            }
        });

        // Runtime of each condition at its best threshold over the
        // reference condition at its own best threshold.
        let mut ratios: BTreeMap<&String, Vec<f64>> = BTreeMap::new();
        for dataset in &datasets {
            let ref_key: Key = ((*dataset).clone(), (*learner).clone(), REFERENCE_CONDITION.to_owned());
            let Some(ref_hct) = best.get(&ref_key) else { continue };
            let ref_time = by_hct[&ref_key][ref_hct].total_seconds();
            for condition in &universe {
                let key: Key = ((*dataset).clone(), (*learner).clone(), condition.clone());
                let Some(h) = best.get(&key) else { continue };
                let ratio = if condition == REFERENCE_CONDITION {
                    1.0
                } else {
                    by_hct[&key][h].total_seconds() / ref_time
                };
                if ratio.is_finite() && ratio > 0.0 {
                    ratios.entry(condition).or_default().push(ratio);
                }
            }
        }
        for (condition, mut v) in ratios {
            runtime_ratios.push(RatioRow {
                condition: condition.clone(),
                learner: (*learner).clone(),
                min: v.iter().copied().fold(f64::INFINITY, f64::min),
                max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                median: median(&mut v),
                n_datasets: v.len(),
            });
        }
    }

    Ok(Report {
        alpha,
        summary,
        consensus,
        runtime_ratios,
        dendrograms,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

/// File names written by [`write_report`].
pub const REPORT_FILES: [&str; 4] = ["summary.csv", "consensus.json", "runtime_ratios.csv", "dendrogram.json"];

pub fn write_report(dir: &Path, report: &Report) -> Result<()> {
    write_csv(&dir.join(REPORT_FILES[0]), &report.summary)?;
    write_json(
        &dir.join(REPORT_FILES[1]),
        &serde_json::json!({
            "alpha": report.alpha,
            "method": CONSENSUS_NOTE,
            "learners": report.consensus,
        }),
    )?;
    write_csv(&dir.join(REPORT_FILES[2]), &report.runtime_ratios)?;
    write_json(&dir.join(REPORT_FILES[3]), &report.dendrograms)
}

/// Strategy of a condition label such as `glmm_5cv`.
pub fn condition_strategy(label: &str) -> Option<Strategy> {
    label.parse().ok().or_else(|| label.starts_with("glmm_").then_some(Strategy::Glmm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::SCHEMA_VERSION;

    fn rec(dataset: &str, condition: &str, hct: usize, learner: &str, fold: usize, value: f64, secs: f64) -> BenchmarkRecord {
        BenchmarkRecord {
            schema_version: SCHEMA_VERSION,
            dataset: dataset.into(),
            condition: condition.into(),
            strategy: condition_strategy(condition).unwrap(),
            hct,
            glmm_folds: 0,
            learner: learner.into(),
            fold,
            seed: 0,
            metric: Metric::Auc,
            value: Some(value),
            status: RecordStatus::Ok,
            message: None,
            n_train: 80,
            n_test: 20,
            fit_seconds: secs,
            transform_seconds: 0.0,
            train_seconds: 0.0,
            predict_seconds: 0.0,
        }
    }

    fn grid() -> Vec<BenchmarkRecord> {
        let mut out = Vec::new();
        for d in ["d1", "d2"] {
            for fold in 0..5 {
                let e = 0.001 * fold as f64;
                out.push(rec(d, "one_hot", 10, "knn", fold, 0.70 + e, 2.0));
                out.push(rec(d, "one_hot", 25, "knn", fold, 0.72 + e, 4.0));
                out.push(rec(d, "impact", 10, "knn", fold, 0.60 + e, 1.0));
                out.push(rec(d, "glmm_5cv", 10, "knn", fold, 0.80 + e, if d == "d1" { 8.0 } else { 12.0 }));
            }
        }
        out
    }

    #[test]
    fn best_hct_and_summary() {
        let r = build_report(&grid(), 0.05, 0).unwrap();
        let oh = r.summary.iter().find(|s| s.dataset == "d1" && s.condition == "one_hot").unwrap();
        assert_eq!(oh.best_hct, 25);
        assert!((oh.mean - 0.722).abs() < 1e-12);
        assert_eq!((oh.min, oh.max, oh.n_folds), (0.72, 0.724, 5));
    }

    #[test]
    fn equal_means_pick_the_smaller_threshold() {
        let mut recs = Vec::new();
        for fold in 0..3 {
            recs.push(rec("d", "impact", 25, "knn", fold, 0.7, 1.0));
            recs.push(rec("d", "impact", 10, "knn", fold, 0.7, 1.0));
        }
        let r = build_report(&recs, 0.05, 0).unwrap();
        assert_eq!(r.summary[0].best_hct, 10);
    }

    #[test]
    fn runtime_ratios_reference_is_one() {
        let r = build_report(&grid(), 0.05, 0).unwrap();
        let oh = r.runtime_ratios.iter().find(|x| x.condition == "one_hot").unwrap();
        assert_eq!((oh.median, oh.min, oh.max), (1.0, 1.0, 1.0));
        let g = r.runtime_ratios.iter().find(|x| x.condition == "glmm_5cv").unwrap();
        assert_eq!((g.min, g.max, g.median, g.n_datasets), (2.0, 3.0, 2.5, 2));
    }

    #[test]
    fn consensus_recovers_the_planted_order() {
        let r = build_report(&grid(), 0.05, 0).unwrap();
        let c = &r.consensus[0].best_hct;
        assert_eq!(
            c.ranking,
            vec![vec!["glmm_5cv".to_string()], vec!["one_hot".to_string()], vec!["impact".to_string()]]
        );
        assert_eq!(c.total_distance, 0);
        assert!(c.exact);
        let d = r.dendrograms[0].dendrogram.as_ref().unwrap();
        assert_eq!(d.merges.len(), 1);
        assert_eq!(d.merges[0].height, 0.0);
    }

    #[test]
    fn single_condition_gives_one_tier() {
        let recs: Vec<BenchmarkRecord> = (0..3).map(|f| rec("d", "impact", 10, "knn", f, 0.6, 1.0)).collect();
        let r = build_report(&recs, 0.05, 0).unwrap();
        assert_eq!(r.consensus[0].best_hct.ranking, vec![vec!["impact".to_string()]]);
        assert!(r.dendrograms[0].dendrogram.is_none());
    }

    #[test]
    fn empty_records_are_rejected() {
        assert!(build_report(&[], 0.05, 0).is_err());
    }

    #[test]
    fn report_is_pure_and_files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let a = build_report(&grid(), 0.05, 0).unwrap();
        let b = build_report(&grid(), 0.05, 0).unwrap();
        assert_eq!(a, b);
        write_report(dir.path(), &a).unwrap();
        for f in REPORT_FILES {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let csv = std::fs::read_to_string(dir.path().join("runtime_ratios.csv")).unwrap();
        assert!(csv.starts_with("condition,learner,median,min,max,n_datasets"));
    }
}
