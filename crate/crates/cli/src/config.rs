//! Run configuration: TOML written by hand, JSON written back resolved.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use catenc_core::benchmark::{BenchmarkPlan, Dataset, NamedLearner};
use catenc_core::learners::Learner;
use catenc_core::table::{load_dataset, LoadOptions};
use catenc_core::{EncoderSpec, LearnerSpec, Strategy};
use serde::{Deserialize, Serialize};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "CATENC_WORKERS";

fn default_folds() -> usize {
    5
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

fn default_true() -> bool {
    true
}

fn default_alpha() -> f64 {
    0.05
}

fn default_hct() -> Vec<usize> {
    vec![10, 25, 125]
}

fn default_glmm_folds() -> Vec<usize> {
    vec![5]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub datasets: Vec<DatasetEntry>,
    pub encoders: EncoderGrid,
    pub learners: Vec<LearnerEntry>,
    #[serde(default = "default_folds")]
    pub outer_folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_true")]
    pub record_timings: bool,
    /// Significance level of the dominance relations in reports.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub csv: PathBuf,
    pub schema: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing_tokens: Option<Vec<String>>,
}

impl DatasetEntry {
    pub fn load(&self) -> Result<Dataset> {
        let mut options = LoadOptions::default();
        if let Some(tokens) = &self.missing_tokens {
            options.missing_tokens = tokens.clone();
        }
        let table = load_dataset(&self.csv, &self.schema, &options)
            .with_context(|| format!("loading dataset `{}`", self.name))?;
        Ok(Dataset {
            name: self.name.clone(),
            table,
        })
    }
}

/// Strategies crossed with thresholds; GLMM additionally with its
/// cross-fitting fold counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderGrid {
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_hct")]
    pub hct: Vec<usize>,
    #[serde(default = "default_glmm_folds")]
    pub glmm_folds: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub shuffle_integer: bool,
    #[serde(default)]
    pub relative_frequency: bool,
    #[serde(default)]
    pub single_binary_column: bool,
    #[serde(default)]
    pub spherical: bool,
}

impl EncoderGrid {
    pub fn expand(&self) -> Vec<EncoderSpec> {
        let mut out = Vec::new();
        for &strategy in &self.strategies {
            let folds: &[usize] = if strategy == Strategy::Glmm { &self.glmm_folds } else { &[0] };
            for &f in folds {
                for &hct in &self.hct {
                    out.push(EncoderSpec {
                        strategy,
                        hct,
                        glmm_folds: f,
                        seed: self.seed,
                        shuffle_integer: self.shuffle_integer,
                        relative_frequency: self.relative_frequency,
                        single_binary_column: self.single_binary_column,
                        spherical: self.spherical,
                    });
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(flatten)]
    pub spec: LearnerSpec,
}

impl LearnerEntry {
    fn named(&self) -> NamedLearner {
        NamedLearner {
            label: self.label.clone().unwrap_or_else(|| self.spec.name()),
            spec: self.spec.clone(),
        }
    }
}

/// Parses a `.json` file as JSON and anything else as TOML. Error messages
/// carry the line and column of the offending input.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
    } else {
        toml::from_str(&text).map_err(|e| {
            let at = e
                .span()
                .map(|s| {
                    let line = text[..s.start].matches('\n').count() + 1;
                    let col = s.start - text[..s.start].rfind('\n').map_or(0, |p| p + 1) + 1;
                    format!("{line}:{col}:")
                })
                .unwrap_or_default();
            anyhow::anyhow!("{}:{at} {}", path.display(), e.message())
        })
    }
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_owned()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Makes paths absolute relative to `base`, fills learner labels and
    /// the worker count, and checks the grid.
    pub fn resolve(mut self, base: &Path, workers_override: Option<usize>) -> Result<RunConfig> {
        for d in &mut self.datasets {
            d.csv = absolute(base, &d.csv);
            d.schema = absolute(base, &d.schema);
        }
        self.output_dir = absolute(base, &self.output_dir);
        for l in &mut self.learners {
            l.label = Some(l.named().label);
        }
        let env = match std::env::var(WORKERS_ENV) {
            Ok(v) => Some(v.trim().parse::<usize>().with_context(|| format!("{WORKERS_ENV}=`{v}` is not a count"))?),
            Err(_) => None,
        };
        self.workers = Some(workers_override.or(self.workers).or(env).unwrap_or(0));
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            bail!("config lists no datasets");
        }
        if self.encoders.strategies.is_empty() || self.encoders.hct.is_empty() {
            bail!("config lists no encoder strategies or thresholds");
        }
        if self.learners.is_empty() {
            bail!("config lists no learners");
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            bail!("alpha must lie in (0, 0.5], got {}", self.alpha);
        }
        self.plan().validate()?;
        Ok(())
    }

    pub fn plan(&self) -> BenchmarkPlan {
        BenchmarkPlan {
            encoders: self.encoders.expand(),
            learners: self.learners.iter().map(LearnerEntry::named).collect(),
            outer_folds: self.outer_folds,
            seed: self.seed,
            workers: self.workers.unwrap_or(0),
            record_timings: self.record_timings,
        }
    }

    pub fn dataset(&self, name: &str) -> Result<&DatasetEntry> {
        self.datasets
            .iter()
            .find(|d| d.name == name)
            .with_context(|| format!("no dataset named `{name}` in the config"))
    }
}
