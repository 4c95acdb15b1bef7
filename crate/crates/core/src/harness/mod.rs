//! Experiment harness: phantoms, raw I/O, config files, tuning and benchmarks.

pub mod benchmark;
pub mod config;
pub mod io;
pub mod phantom;
pub mod plan;
pub mod tune;

pub use config::{Config, Section};
pub use plan::{
    fit_gaussian, fit_prior, measure, reconstruct, ExperimentPlan, MethodKind, MethodOutput,
    MethodSpec, Metric, Observation, PhantomSource, PriorFamily, PriorSettings, Task, TaskPrior,
    TuneRequest,
};
pub use benchmark::{run_benchmark, BenchmarkReport, CellRow, CSV_HEADER, WORKERS_ENV};
pub use tune::{grid_search, holdout_phantoms, GridPoint, TuneOutcome};
