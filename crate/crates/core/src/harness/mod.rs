//! Experiment runner: config loading, per-trajectory loops, aggregation
//! and CSV output.

mod config;
mod learner;
mod output;
mod run;

pub use config::{BenchConfig, EstimatorKind, ExperimentConfig, RegretConfig};
pub use learner::{BatchOracle, Learner, Observation};
pub use output::{write_experiment, write_regret, write_timing, SCHEMA_LINE};
pub use run::{
    run_experiment, run_regret_sweep, run_trajectory, runtime_bench, trajectory_seed,
    ExperimentOutput, RegretRow, RegretSweep, StabilityRow, TimingRow, TrajectoryResult,
    TRUNCATION_TOLERANCE,
};
