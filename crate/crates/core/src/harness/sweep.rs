//! Parameter sweeps over seeded, parallel trials.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::stats::RunningStats;
use super::trial::{run_trial, Scheme, TrialOutput};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Swept configuration parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    SnrDb,
    FeedbackBits,
    PathBudget,
    /// Sets `num_paths = P` and `path_budget = 2P` together.
    NumPaths,
    NumBs,
}

impl Axis {
    pub const ALL: [Axis; 5] = [Axis::SnrDb, Axis::FeedbackBits, Axis::PathBudget, Axis::NumPaths, Axis::NumBs];

    pub fn name(self) -> &'static str {
        match self {
            Axis::SnrDb => "snr_db",
            Axis::FeedbackBits => "feedback_bits",
            Axis::PathBudget => "path_budget",
            Axis::NumPaths => "num_paths",
            Axis::NumBs => "num_bs",
        }
    }

    /// `config` with this parameter set to `value`.
    pub fn apply(self, config: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let count = || -> Result<usize> {
            if value.fract() == 0.0 && value >= 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(Error::InvalidConfig(format!("{} needs a nonnegative integer, got {value}", self.name())))
            }
        };
        let mut out = config.clone();
        match self {
            Axis::SnrDb => out.snr_db = value,
            Axis::FeedbackBits => out.feedback_bits = count()? as u32,
            Axis::PathBudget => out.path_budget = count()?,
            Axis::NumPaths => {
                out.num_paths = count()?;
                out.path_budget = 2 * out.num_paths;
            }
            Axis::NumBs => out.num_bs = count()?,
        }
        out.validate()?;
        Ok(out)
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::UnknownAxis(s.to_string()))
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Aggregate of one scheme at one axis value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub mean: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: f64,
    pub trials: usize,
    pub failed_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub scheme: String,
    /// One point per axis value.
    pub points: Vec<SeriesPoint>,
}

/// Tabulated sweep: one series per scheme over the axis values.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis_name: String,
    pub axis_values: Vec<f64>,
    pub series: Vec<Series>,
    pub config: SystemConfig,
    pub master_seed: u64,
}

impl SweepResult {
    pub fn series(&self, scheme: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.scheme == scheme)
    }

    /// Series lengths match the axis, intervals are nonnegative and every
    /// point rests on at least two trials.
    pub fn check(&self) -> Result<()> {
        for s in &self.series {
            if s.points.len() != self.axis_values.len() {
                return Err(Error::Schema(format!("series `{}` length differs from the axis", s.scheme)));
            }
            if let Some(p) = s.points.iter().find(|p| !(p.ci95 >= 0.0) || p.trials < 2) {
                return Err(Error::Schema(format!(
                    "series `{}` has a point with ci95 {} over {} trials",
                    s.scheme, p.ci95, p.trials
                )));
            }
        }
        Ok(())
    }
}

/// A trial that returned an error, kept for re-running.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub trial_seed: u64,
    pub message: String,
}

/// Raw per-trial results of one axis value, in trial-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueRun {
    pub value: f64,
    pub config: SystemConfig,
    pub trials: Vec<std::result::Result<TrialOutput, TrialFailure>>,
}

impl ValueRun {
    pub fn successes(&self) -> impl Iterator<Item = &TrialOutput> {
        self.trials.iter().filter_map(|t| t.as_ref().ok())
    }

    pub fn failures(&self) -> usize {
        self.trials.iter().filter(|t| t.is_err()).count()
    }

    /// Per-trial `a − b` sum-rate differences over successful trials.
    pub fn paired_differences(&self, a: Scheme, b: Scheme) -> Vec<f64> {
        self.successes()
            .filter_map(|t| Some(t.sum_rate(a)? - t.sum_rate(b)?))
            .collect()
    }

    /// Moments of one scheme's sum rate.
    pub fn stats(&self, scheme: Scheme) -> RunningStats {
        self.successes().filter_map(|t| t.sum_rate(scheme)).collect()
    }
}

/// Seed of trial `trial` at axis index `value_index`.
pub fn trial_seed(master_seed: u64, value_index: usize, trial: usize) -> u64 {
    derive_seed(master_seed, &[value_index as u64, trial as u64])
}

/// Runs `trials` trials per axis value in parallel and keeps them all.
pub fn run_sweep_trials(config: &SystemConfig, axis: Axis, values: &[f64], trials: usize) -> Result<Vec<ValueRun>> {
    if values.is_empty() {
        return Err(Error::Empty("sweep values"));
    }
    if trials < 2 {
        return Err(Error::InvalidConfig(format!("a sweep needs at least 2 trials, got {trials}")));
    }
    let configs = values
        .iter()
        .map(|&v| axis.apply(config, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(values
        .iter()
        .zip(configs)
        .enumerate()
        .map(|(vi, (&value, cfg))| {
            let trials = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let seed = trial_seed(config.master_seed, vi, t);
                    run_trial(&cfg, seed).map_err(|e| {
                        log::warn!("{axis}={value}: trial {t} (seed {seed}) failed: {e}");
                        TrialFailure { trial_seed: seed, message: e.to_string() }
                    })
                })
                .collect();
            ValueRun { value, config: cfg, trials }
        })
        .collect())
}

/// Mean sum rate and 95% interval per scheme and axis value.
pub fn aggregate(config: &SystemConfig, axis: Axis, runs: &[ValueRun]) -> SweepResult {
    let schemes = Scheme::enabled(config);
    let series = schemes
        .iter()
        .map(|&scheme| Series {
            scheme: scheme.name().to_string(),
            points: runs
                .iter()
                .map(|run| {
                    let s = run.stats(scheme);
                    SeriesPoint {
                        mean: s.mean(),
                        ci95: s.ci95(),
                        trials: s.count() as usize,
                        failed_trials: run.failures(),
                    }
                })
                .collect(),
        })
        .collect();
    SweepResult {
        axis_name: axis.name().to_string(),
        axis_values: runs.iter().map(|r| r.value).collect(),
        series,
        config: config.clone(),
        master_seed: config.master_seed,
    }
}

/// [`run_sweep_trials`] followed by [`aggregate`].
pub fn run_sweep(config: &SystemConfig, axis: Axis, values: &[f64], trials: usize) -> Result<SweepResult> {
    let runs = run_sweep_trials(config, axis, values, trials)?;
    Ok(aggregate(config, axis, &runs))
}

/// Single-BS layout with more paths than budget: one BS, `P = 8`, `L = 4`.
pub fn single_bs_preset() -> SystemConfig {
    SystemConfig { num_bs: 1, num_paths: 8, path_budget: 4, ..SystemConfig::default() }
}
