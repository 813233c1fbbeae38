//! Spatially precoded downlink pilots and LMMSE path-gain estimation.
//!
//! BS `m` sends `W^d_{m,k} = G_{m,k} A_{m,k}^+` on pilot rows `Ψ_{m,k}`, so
//! user `k` observes its own selected gains through `W^d h = g_Λ` and every
//! other block cancels after despreading.

use nalgebra::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::random_unitary;
use crate::model::BsUserGrid;
use crate::rng::{complex_normal, stream_rng, streams};
use crate::selection::SelectionState;
use crate::{CMat, CVec};

/// Condition number of `A^H A` above which the pseudo-inverse is regularized.
pub const CONDITION_GUARD: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoInverse {
    pub matrix: CMat,
    /// Condition number of `A^H A`.
    pub condition: f64,
    pub regularized: bool,
}

/// `A^+ = (A^H A)^{-1} A^H`, via SVD when well conditioned and
/// `(A^H A + εI)^{-1} A^H` with `ε = 1e−10 tr(A^H A)/P` otherwise.
pub fn pseudo_inverse(a: &CMat) -> Result<PseudoInverse> {
    let p = a.ncols();
    if p == 0 || a.nrows() < p {
        return Err(Error::Dimension(format!("pseudo-inverse of a {}x{p} matrix", a.nrows())));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
    if condition <= CONDITION_GUARD {
        let matrix = svd
            .pseudo_inverse(0.0)
            .map_err(|e| Error::Dimension(format!("pseudo-inverse failed: {e}")))?;
        return Ok(PseudoInverse { matrix, condition, regularized: false });
    }
    let gram = a.adjoint() * a;
    let eps = 1e-10 * gram.trace().re / p as f64;
    let reg = gram + CMat::identity(p, p) * Complex::from(eps);
    let matrix = reg
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("regularized steering Gram"))?
        .solve(&a.adjoint());
    Ok(PseudoInverse { matrix, condition, regularized: true })
}

/// 0/1 matrix picking the entries of `set` out of a length-`p` vector.
pub fn selection_matrix(set: &[usize], p: usize) -> CMat {
    CMat::from_fn(set.len(), p, |r, c| if set[r] == c { Complex::from(1.0) } else { Complex::from(0.0) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotPrecoder {
    /// `|Λ| × N`.
    pub matrix: CMat,
    pub condition: f64,
    pub regularized: bool,
}

/// `W^d = G A^+`.
pub fn build_pilot_precoder(a: &CMat, set: &[usize]) -> Result<PilotPrecoder> {
    if let Some(&bad) = set.iter().find(|&&i| i >= a.ncols()) {
        return Err(Error::Dimension(format!("path index {bad} exceeds {} paths", a.ncols())));
    }
    let pinv = pseudo_inverse(a)?;
    let matrix = CMat::from_fn(set.len(), a.nrows(), |r, c| pinv.matrix[(set[r], c)]);
    Ok(PilotPrecoder { matrix, condition: pinv.condition, regularized: pinv.regularized })
}

/// Disjoint row blocks of one `τ × τ` unitary.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSequences {
    /// `|Λ_{m,k}| × τ` per (BS, user).
    pub blocks: BsUserGrid<CMat>,
    pub tau: usize,
}

/// Sequences for the given block sizes, `τ = Σ |Λ_{m,k}|`.
pub fn gen_pilot_sequences(sizes: &BsUserGrid<usize>, seed: u64) -> PilotSequences {
    let tau: usize = sizes.iter().map(|(_, &s)| s).sum();
    let mut rng = stream_rng(seed, streams::PILOT_SEQUENCES);
    let base = random_unitary(&mut rng, tau);
    let mut row = 0;
    let blocks = sizes.map(|_, _, &s| {
        let b = base.rows(row, s).into_owned();
        row += s;
        b
    });
    PilotSequences { blocks, tau }
}

/// Everything the BSs transmit during training.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPlan {
    pub precoders: BsUserGrid<PilotPrecoder>,
    pub sequences: PilotSequences,
}

impl PilotPlan {
    pub fn regularized_count(&self) -> usize {
        self.precoders.iter().filter(|(_, p)| p.regularized).count()
    }
}

/// Pilot precoders for the selected paths plus their sequences.
pub fn build_pilot_plan(steering: &BsUserGrid<CMat>, state: &SelectionState, seed: u64) -> Result<PilotPlan> {
    let mut precoders = Vec::new();
    for ((m, k), set) in state.index_sets.iter() {
        precoders.push(build_pilot_precoder(steering.get(m, k), set)?);
    }
    let mut it = precoders.into_iter();
    let precoders = BsUserGrid::from_fn(state.num_bs(), state.num_users(), |_, _| it.next().expect("one per pair"));
    let sizes = state.index_sets.map(|_, _, s| s.len());
    Ok(PilotPlan { precoders, sequences: gen_pilot_sequences(&sizes, seed) })
}

/// Conjugated received training vector `y^d_k` of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingObservation {
    pub received: CVec,
    pub noise_var: f64,
}

/// Synthesizes every user's training observation.
///
/// `y^d_k = Σ_{m,j} Ψ_{m,j}^H W^d_{m,j} h_{m,k} + z_k` with `z_k ~ CN(0, σ_z² I_τ)`,
/// the conjugate of the per-slot model.
pub fn simulate_training<R: Rng + ?Sized>(
    channels: &BsUserGrid<CVec>,
    plan: &PilotPlan,
    noise_var: f64,
    rng: &mut R,
) -> Vec<TrainingObservation> {
    let tau = plan.sequences.tau;
    (0..channels.num_users())
        .map(|k| {
            let mut y = CVec::from_fn(tau, |_, _| complex_normal(rng, noise_var));
            for ((m, j), w) in plan.precoders.iter() {
                let coeff = &w.matrix * channels.get(m, k);
                y += plan.sequences.blocks.get(m, j).ad_mul(&coeff);
            }
            TrainingObservation { received: y, noise_var }
        })
        .collect()
}

/// `Ψ_{m,k} y^d_k = g_{Λ_{m,k}} + n_k`.
pub fn despread(obs: &TrainingObservation, psi: &CMat) -> CVec {
    psi * &obs.received
}

/// Scalar LMMSE shrinkage of the despread observation under a unit prior.
pub fn lmmse_pgi(obs: &TrainingObservation, psi: &CMat, noise_var: f64) -> CVec {
    despread(obs, psi) * Complex::from(1.0 / (1.0 + noise_var))
}

/// LMMSE estimates `ĝ_{Λ_{m,k}}` for every pair.
pub fn estimate_all(plan: &PilotPlan, observations: &[TrainingObservation], noise_var: f64) -> BsUserGrid<CVec> {
    plan.sequences
        .blocks
        .map(|_, k, psi| lmmse_pgi(&observations[k], psi, noise_var))
}
