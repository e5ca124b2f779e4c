//! Synthetic benchmark for multi-study causal EM: random canonical models,
//! sampled observational and randomized-trial datasets, and a brute-force
//! grid oracle for tiny models.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod oracle;
pub mod run;
pub mod sample;
pub mod summary;
pub mod tiny;

pub use config::{BenchConfig, CompatRule};
pub use oracle::{grid_oracle, OracleResult};
pub use run::{run_benchmark, BenchOutput, BenchRecord, SkipRecord};
pub use sample::{sample_model, sample_studies, SampledModel, SampledStudies};
pub use summary::{boxplot_csv, summarize, BenchSummary, Quartiles};
pub use tiny::{tiny_case, tiny_cases, TinyCase, TinyKind};
