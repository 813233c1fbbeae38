//! Shared fixtures for the benchmarks.

use pgi_core::model::{calibrate_noise, draw_gains, draw_scenario};
use pgi_core::rng::{stream_rng, streams};
use pgi_core::selection::select_dominating_paths;
use pgi_core::{BsUserGrid, CMat, CVec, SelectionState, SystemConfig};

/// One drawn scenario with its calibrated noise and dominating-path selection.
pub struct Fixture {
    pub config: SystemConfig,
    pub steering: BsUserGrid<CMat>,
    pub noise_var: f64,
    pub selection: SelectionState,
    pub gains: BsUserGrid<CVec>,
}

impl Fixture {
    pub fn new(config: SystemConfig, seed: u64) -> Self {
        let steering = draw_scenario(&config, seed).steering();
        let noise_var = calibrate_noise(&steering, &config).expect("calibration");
        let selection = select_dominating_paths(&steering, config.path_budget, noise_var).expect("selection");
        let gains = draw_gains(
            &mut stream_rng(seed, streams::GAINS),
            config.num_bs,
            config.num_users,
            config.num_paths,
        );
        Fixture { config, steering, noise_var, selection, gains }
    }

    /// The default system on seed 7.
    pub fn default_system() -> Self {
        Self::new(SystemConfig::default(), 7)
    }
}
