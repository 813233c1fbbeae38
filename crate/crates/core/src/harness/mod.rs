//! Seeded trial execution, parameter sweeps and result persistence.

pub mod persist;
pub mod stats;
pub mod sweep;
pub mod trial;

pub use persist::{load, save, write_manifest};
pub use stats::RunningStats;
pub use sweep::{run_sweep, run_sweep_trials, Axis, Series, SeriesPoint, SweepResult, ValueRun};
pub use trial::{run_trial, Scheme, SchemeOutcome, TrialOutput};
