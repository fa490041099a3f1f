//! Categorical feature encoding for high-cardinality data: classic and
//! target encoders, random-intercept (GLMM) target encoding with
//! cross-fitting, and a benchmark harness with significance-based
//! consensus rankings.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod cart;
pub mod consensus;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod glmm;
pub mod learners;
pub mod optim;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod synth;
pub mod table;
pub mod target;

pub use benchmark::{
    run_benchmark, run_benchmark_collect, BenchmarkPlan, BenchmarkRecord, Dataset, NamedLearner, RecordStatus,
    RunSummary,
};
pub use consensus::{consensus_weak_order, symdiff_distance, Consensus, Dendrogram, WeakOrder};
pub use encoders::{EncoderSpec, FittedEncoder, Strategy};
pub use error::{Error, Result};
pub use evaluation::{Metric, Relation};
pub use glmm::RandomInterceptFit;
pub use learners::{Learner, LearnerSpec, Model, Predictions};
pub use pipeline::FittedPipeline;
pub use report::{build_report, Report};
pub use table::{DataTable, LoadOptions, TableSchema, TaskKind};
