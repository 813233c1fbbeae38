use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference schemes evaluated next to the proposed one on the same realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Proposed selection with perfect, unquantized PGI at the DU.
    IdealPgi,
    /// Uniformly random L-subset of paths, SLNR precoder, RVQ feedback.
    RandomPath,
    /// Quantized full-CSI feedback with regularized zero-forcing.
    RvqCsi,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::IdealPgi, Baseline::RandomPath, Baseline::RvqCsi];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::IdealPgi => "ideal_pgi",
            Baseline::RandomPath => "random_path",
            Baseline::RvqCsi => "rvq_csi",
        }
    }

    pub fn parse(s: &str) -> Option<Baseline> {
        Baseline::ALL.into_iter().find(|b| b.name() == s)
    }
}

/// Transmit-power reference that `snr_db` is measured against.
///
/// Both use the all-path matched filter as the reference precoder; they
/// differ in the power it radiates per user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrReference {
    /// Unit total power across the cooperating group, so the noise floor
    /// does not grow with the number of BSs.
    #[default]
    GroupPower,
    /// Unit power at every BS, i.e. a total of `M`.
    PerBsPower,
}

/// All scenario scalars. Field names double as configuration-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// M
    pub num_bs: usize,
    /// K
    pub num_users: usize,
    /// N
    pub num_antennas: usize,
    /// P
    pub num_paths: usize,
    /// L, dominating paths kept per user.
    pub path_budget: usize,
    /// B, feedback bits per user.
    pub feedback_bits: u32,
    pub snr_db: f64,
    pub snr_reference: SnrReference,
    /// Antenna spacing over wavelength.
    #[serde(alias = "spacing_ratio")]
    pub d_over_lambda: f64,
    /// Full AoD spread around the geometric bearing, degrees.
    pub angular_spread: f64,
    /// Side of the square deployment area, km.
    pub area_side: f64,
    /// Explicit pilot noise variance; see [`SystemConfig::pilot_noise_variance`].
    pub pilot_noise_var: Option<f64>,
    pub pilot_noise_equals_data_noise: bool,
    pub master_seed: u64,
    pub trials: usize,
    /// Trial count used when full-scale mode is requested.
    pub full_scale_trials: usize,
    /// Gain draws per trial for the expectation-based rates.
    pub gain_draws: usize,
    pub use_estimated_aods: bool,
    pub music_snapshots: usize,
    pub music_snr_db: f64,
    pub codebook_seed_offset: u64,
    #[serde(alias = "baseline")]
    pub baselines: Vec<Baseline>,
    /// Informational only; no formula depends on it once `d_over_lambda` is fixed.
    pub carrier_frequency_ghz: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_bs: 5,
            num_users: 5,
            num_antennas: 8,
            num_paths: 4,
            path_budget: 8,
            feedback_bits: 6,
            snr_db: 15.0,
            snr_reference: SnrReference::GroupPower,
            d_over_lambda: 0.5,
            angular_spread: 10.0,
            area_side: 1.0,
            pilot_noise_var: None,
            pilot_noise_equals_data_noise: false,
            master_seed: 2019,
            trials: 200,
            full_scale_trials: 1000,
            gain_draws: 32,
            use_estimated_aods: false,
            music_snapshots: 64,
            music_snr_db: 20.0,
            codebook_seed_offset: 0,
            baselines: Baseline::ALL.to_vec(),
            carrier_frequency_ghz: 2.0,
        }
    }
}

impl SystemConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SystemConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let counts = [
            ("num_bs", self.num_bs),
            ("num_users", self.num_users),
            ("num_antennas", self.num_antennas),
            ("num_paths", self.num_paths),
            ("path_budget", self.path_budget),
            ("trials", self.trials),
            ("gain_draws", self.gain_draws),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{name} must be at least 1"));
        }
        if self.num_paths > self.num_antennas {
            return bad(format!(
                "num_paths ({}) exceeds num_antennas ({})",
                self.num_paths, self.num_antennas
            ));
        }
        if self.path_budget > self.num_bs * self.num_paths {
            return bad(format!(
                "path_budget ({}) exceeds num_bs * num_paths ({})",
                self.path_budget,
                self.num_bs * self.num_paths
            ));
        }
        if !(self.angular_spread >= 0.0) {
            return bad("angular_spread must be nonnegative".into());
        }
        if !(self.area_side > 0.0) || !(self.d_over_lambda > 0.0) {
            return bad("area_side and d_over_lambda must be positive".into());
        }
        if !self.snr_db.is_finite() {
            return bad("snr_db must be finite".into());
        }
        if let Some(v) = self.pilot_noise_var {
            if !(v >= 0.0) {
                return bad("pilot_noise_var must be nonnegative".into());
            }
        }
        if self.use_estimated_aods && self.num_paths >= self.num_antennas {
            return bad("estimated-AoD mode needs num_paths < num_antennas".into());
        }
        Ok(())
    }

    /// Linear SNR.
    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Pilot-phase noise variance given the calibrated data noise variance.
    ///
    /// Tied to the data noise when requested, otherwise the configured value,
    /// otherwise `1/snr` so the per-gain pilot SNR equals the data SNR.
    pub fn pilot_noise_variance(&self, data_noise_var: f64) -> f64 {
        if self.pilot_noise_equals_data_noise {
            data_noise_var
        } else {
            self.pilot_noise_var.unwrap_or_else(|| 1.0 / self.snr_linear())
        }
    }

    /// Count of random per-user draws in one trial.
    pub fn total_paths(&self) -> usize {
        self.num_bs * self.num_paths
    }
}
