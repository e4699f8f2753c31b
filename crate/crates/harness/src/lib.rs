//! Experiment driver: runs the allocators over generated scenarios and
//! writes per-set records, μ_save records and summaries.

pub mod algorithm;
pub mod experiment;
pub mod report;
pub mod verify;

pub use algorithm::{parse_algorithms, run_algorithm, AlgoRun, Algorithm};
pub use experiment::{
    run_experiment, summarize, write_results, CacheSaveRecord, ExperimentOptions, ExperimentRecord, ExperimentResult,
    Summary, BOTH,
};
pub use report::{runtime_report, RuntimeRow};
