//! Experiment orchestration: synthetic benchmarks, sweeps, the random
//! baseline and report rendering.

pub mod bench;
pub mod config;
pub mod report;
pub mod sweep;

pub use bench::{generate_benchmark, Benchmark, SynthBenchConfig, SCORE_TABLE_NAMES};
pub use config::{resolve, ExperimentConfig, Resolved};
pub use report::{emit_report, ReportFormat};
pub use sweep::{random_baseline, run_cell, run_sweep, BaselineCell, Experiment, SweepCell, SweepResult};
