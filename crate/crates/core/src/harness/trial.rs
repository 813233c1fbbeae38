//! One seeded end-to-end trial with paired baselines.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::aod::estimate_steering;
use crate::config::{Baseline, SystemConfig};
use crate::error::{Error, Result};
use crate::feedback::{csi_baseline_feedback, quantize_round_trip, rvq_codebook_from, rzf_precoder, Codebook};
use crate::model::{calibrate_noise, draw_gains, draw_scenario, BsUserGrid, ChannelRealization};
use crate::pilot::{build_pilot_plan, estimate_all, simulate_training, PilotPlan};
use crate::rate::{
    beams_from_gains, received_powers, received_powers_stacked, selected_gains, stack_user, unstack_user,
    RateAccumulator, RateEstimate, RateMode,
};
use crate::rng::{derive_seed, stream_rng, streams};
use crate::selection::{random_path_selection, select_dominating_paths, SlnrSolver};
use crate::{CMat, CVec, SelectionState};

/// Every scheme a trial can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    /// Dominating paths, estimated and quantized PGI.
    Proposed,
    /// Dominating paths with the true PGI at the BSs.
    IdealPgi,
    /// Uniformly random paths, estimated and quantized PGI.
    RandomPath,
    /// Quantized full CSI with regularized zero-forcing.
    RvqCsi,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::IdealPgi => Baseline::IdealPgi.name(),
            Scheme::RandomPath => Baseline::RandomPath.name(),
            Scheme::RvqCsi => Baseline::RvqCsi.name(),
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        if s == "proposed" {
            Some(Scheme::Proposed)
        } else {
            Baseline::parse(s).map(Scheme::from)
        }
    }

    /// The proposed scheme followed by the enabled baselines.
    pub fn enabled(config: &SystemConfig) -> Vec<Scheme> {
        let mut out = vec![Scheme::Proposed];
        for b in Baseline::ALL {
            if config.baselines.contains(&b) {
                out.push(b.into());
            }
        }
        out
    }
}

impl From<Baseline> for Scheme {
    fn from(b: Baseline) -> Self {
        match b {
            Baseline::IdealPgi => Scheme::IdealPgi,
            Baseline::RandomPath => Scheme::RandomPath,
            Baseline::RvqCsi => Scheme::RvqCsi,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeOutcome {
    pub scheme: Scheme,
    /// Ratio-of-means rate per user over the trial's gain draws.
    pub rates: RateEstimate,
    /// SHA-256 over every channel and pilot-noise seed this scheme consumed.
    pub realization_digest: String,
}

impl SchemeOutcome {
    pub fn sum_rate(&self) -> f64 {
        self.rates.sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutput {
    pub trial_seed: u64,
    /// Calibrated data noise variance.
    pub noise_var: f64,
    pub outcomes: Vec<SchemeOutcome>,
    /// Pilot precoders that needed the regularized inverse.
    pub regularized_pilots: usize,
    /// (BS, user) pairs where MUSIC fell back to the true angles.
    pub aod_fallbacks: usize,
}

impl TrialOutput {
    pub fn outcome(&self, scheme: Scheme) -> Option<&SchemeOutcome> {
        self.outcomes.iter().find(|o| o.scheme == scheme)
    }

    pub fn sum_rate(&self, scheme: Scheme) -> Option<f64> {
        self.outcome(scheme).map(SchemeOutcome::sum_rate)
    }
}

/// Per-scheme evaluation state that persists across gain draws.
struct Evaluator {
    scheme: Scheme,
    acc: RateAccumulator,
    hasher: Sha256,
}

impl Evaluator {
    fn absorb(&mut self, channels: &BsUserGrid<CVec>, noise_seed: u64) {
        for (_, h) in channels.iter() {
            for z in h.iter() {
                self.hasher.update(z.re.to_le_bytes());
                self.hasher.update(z.im.to_le_bytes());
            }
        }
        self.hasher.update(noise_seed.to_le_bytes());
    }
}

/// A path selection with its training plan and feedback codebooks.
struct PgiLink {
    state: SelectionState,
    plan: PilotPlan,
}

impl PgiLink {
    fn new(steering: &BsUserGrid<CMat>, state: SelectionState, seed: u64) -> Result<Self> {
        let plan = build_pilot_plan(steering, &state, seed)?;
        Ok(Self { state, plan })
    }

    /// Training, LMMSE estimation and per-user quantized feedback; returns
    /// the beams built from the reconstructed PGI.
    fn beams(
        &self,
        channels: &BsUserGrid<CVec>,
        pilot_noise: f64,
        noise_seed: u64,
        codebooks: &BTreeMap<usize, Codebook>,
    ) -> Result<BsUserGrid<CVec>> {
        let mut rng = stream_rng(noise_seed, streams::PILOT_NOISE);
        let obs = simulate_training(channels, &self.plan, pilot_noise, &mut rng);
        let est = estimate_all(&self.plan, &obs, pilot_noise);
        let mut fed = Vec::with_capacity(self.state.num_users());
        for k in 0..self.state.num_users() {
            let g = stack_user(&est, k);
            let cb = &codebooks[&g.len()];
            fed.push(unstack_user(&self.state, k, &quantize_round_trip(&g, cb)?));
        }
        let grid = BsUserGrid::from_fn(self.state.num_bs(), self.state.num_users(), |m, k| fed[k][m].clone());
        Ok(beams_from_gains(&self.state, &grid))
    }
}

/// Runs the full pipeline on one seeded realization.
///
/// Scenario, optional MUSIC, noise calibration, dominating-path selection,
/// precoded training, LMMSE estimation and RVQ feedback, then the rate of
/// `w = V ĝ`. Every enabled baseline sees the same channels and pilot noise.
pub fn run_trial(config: &SystemConfig, trial_seed: u64) -> Result<TrialOutput> {
    config.validate()?;
    let schemes = Scheme::enabled(config);
    let geometry = draw_scenario(config, trial_seed);
    let truth = geometry.steering();
    let (bs_steering, aod_fallbacks) = if config.use_estimated_aods {
        let est = estimate_steering(&geometry, config, trial_seed)?;
        (est.steering, est.fallbacks)
    } else {
        (truth.clone(), 0)
    };
    let noise_var = calibrate_noise(&truth, config)?;
    let pilot_noise = config.pilot_noise_variance(noise_var);
    let budget = config.path_budget;

    let dominating = PgiLink::new(&bs_steering, select_dominating_paths(&bs_steering, budget, noise_var)?, trial_seed)?;
    let random = if schemes.contains(&Scheme::RandomPath) {
        let solver = SlnrSolver::new(&bs_steering, noise_var)?;
        let mut rng = stream_rng(trial_seed, streams::RANDOM_SELECTION);
        let state = random_path_selection(&mut rng, &solver, &bs_steering, budget)?;
        Some(PgiLink::new(&bs_steering, state, trial_seed)?)
    } else {
        None
    };

    let codebook_seed = derive_seed(trial_seed, &[config.codebook_seed_offset]);
    let mut codebooks = BTreeMap::new();
    for k in 0..config.num_users {
        for link in [Some(&dominating), random.as_ref()].into_iter().flatten() {
            let dim = link.state.path_count(k);
            if let std::collections::btree_map::Entry::Vacant(e) = codebooks.entry(dim) {
                let mut rng = stream_rng(derive_seed(codebook_seed, &[dim as u64]), streams::CODEBOOK);
                e.insert(rvq_codebook_from(&mut rng, dim, config.feedback_bits)?);
            }
        }
    }
    let csi_codebook = if schemes.contains(&Scheme::RvqCsi) {
        let mut rng = stream_rng(codebook_seed, streams::CSI_CODEBOOK);
        Some(rvq_codebook_from(&mut rng, config.num_bs * config.num_antennas, config.feedback_bits)?)
    } else {
        None
    };

    let mut evals: Vec<Evaluator> = schemes
        .iter()
        .map(|&scheme| Evaluator {
            scheme,
            acc: RateAccumulator::new(config.num_users, noise_var, RateMode::RatioOfMeans),
            hasher: Sha256::new(),
        })
        .collect();
    let mut gain_rng = stream_rng(trial_seed, streams::GAINS);
    for draw in 0..config.gain_draws {
        let gains = draw_gains(&mut gain_rng, config.num_bs, config.num_users, config.num_paths);
        let realization = ChannelRealization::from_gains(truth.clone(), gains)?;
        let channels = &realization.channels;
        let noise_seed = derive_seed(trial_seed, &[draw as u64]);
        for ev in evals.iter_mut() {
            ev.absorb(channels, noise_seed);
            let powers: DMatrix<f64> = match ev.scheme {
                Scheme::Proposed => {
                    received_powers(channels, &dominating.beams(channels, pilot_noise, noise_seed, &codebooks)?)
                }
                Scheme::IdealPgi => received_powers(
                    channels,
                    &beams_from_gains(&dominating.state, &selected_gains(&dominating.state, &realization.gains)),
                ),
                Scheme::RandomPath => {
                    let link = random.as_ref().expect("built when enabled");
                    received_powers(channels, &link.beams(channels, pilot_noise, noise_seed, &codebooks)?)
                }
                Scheme::RvqCsi => {
                    let cb = csi_codebook.as_ref().expect("built when enabled");
                    let fed = (0..config.num_users)
                        .map(|k| {
                            let per_bs: Vec<CVec> = (0..config.num_bs).map(|m| channels.get(m, k).clone()).collect();
                            let hat = csi_baseline_feedback(&per_bs, cb)?;
                            let mut stacked = CVec::zeros(config.num_bs * config.num_antennas);
                            for (m, h) in hat.iter().enumerate() {
                                stacked.rows_mut(m * config.num_antennas, h.len()).copy_from(h);
                            }
                            Ok(stacked)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    received_powers_stacked(channels, &rzf_precoder(&fed, noise_var, config.num_bs)?)
                }
            };
            if powers.iter().any(|p| !p.is_finite()) {
                return Err(Error::Dimension(format!("non-finite received power in {}", ev.scheme)));
            }
            ev.acc.push(&powers);
        }
    }

    let outcomes = evals
        .into_iter()
        .map(|ev| SchemeOutcome {
            scheme: ev.scheme,
            rates: ev.acc.finish(),
            realization_digest: to_hex(&ev.hasher.finalize()),
        })
        .collect();
    let regularized_pilots = dominating.plan.regularized_count()
        + random.as_ref().map_or(0, |l| l.plan.regularized_count());
    Ok(TrialOutput { trial_seed, noise_var, outcomes, regularized_pilots, aod_fallbacks })
}

pub(crate) fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
