//! Closed-form and Monte Carlo rates, the DS/US/IS split and measured
//! quantization distortion.

use nalgebra::{Complex, DMatrix};
use rand::Rng;

use crate::error::{Error, Result};
use crate::feedback::{rvq_codebook_from, Codebook};
use crate::linalg::{block_diag, frobenius_sq};
use crate::model::BsUserGrid;
use crate::rng::{complex_normal_vec, stream_rng, streams};
use crate::selection::{selected_columns, SelectionState};
use crate::{CMat, CVec};

pub use crate::selection::slnr_value;

/// Expected received powers of one user under perfect PGI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealTerms {
    /// `|Σ_m tr(A_Λ^H V)|² + Σ_m ‖A_Λ^H V‖_F²`.
    pub signal: f64,
    /// `Σ_m ‖A_{Λᶜ}^H V‖_F²`, power arriving over unselected paths.
    pub unselected: f64,
    /// `Σ_{j≠k} Σ_m ‖A_{m,k}^H V_{m,j}‖_F²`.
    pub interference: f64,
}

/// `blockdiag_m(A_{Λ_{m,k}}^H V_{Λ_{m,k}})`, the `L × L` effective gain matrix.
pub fn effective_gain_matrix(steering: &BsUserGrid<CMat>, state: &SelectionState, k: usize) -> CMat {
    let blocks: Vec<CMat> = (0..state.num_bs())
        .map(|m| selected_columns(steering.get(m, k), state.index_sets.get(m, k)).adjoint() * state.precoders.get(m, k))
        .collect();
    block_diag(&blocks)
}

/// Per-user DS, US and IS expectations over the gains.
pub fn ideal_terms(steering: &BsUserGrid<CMat>, state: &SelectionState) -> Vec<IdealTerms> {
    let (num_bs, num_users) = (state.num_bs(), state.num_users());
    (0..num_users)
        .map(|k| {
            let c = effective_gain_matrix(steering, state, k);
            let signal = c.trace().norm_sqr() + frobenius_sq(&c);
            let mut unselected = 0.0;
            let mut interference = 0.0;
            for m in 0..num_bs {
                let a = steering.get(m, k);
                let full = frobenius_sq(&a.ad_mul(state.precoders.get(m, k)));
                unselected += full - frobenius_sq(&selected_columns(a, state.index_sets.get(m, k)).ad_mul(state.precoders.get(m, k)));
                for j in (0..num_users).filter(|&j| j != k) {
                    interference += frobenius_sq(&a.ad_mul(state.precoders.get(m, j)));
                }
            }
            IdealTerms { signal, unselected: unselected.max(0.0), interference }
        })
        .collect()
}

/// Per-user rate `log₂(1 + (DS+US)/(IS+σ²))` of the ideal system.
pub fn ideal_rate_closed_form(steering: &BsUserGrid<CMat>, state: &SelectionState, noise_var: f64) -> Vec<f64> {
    ideal_terms(steering, state)
        .iter()
        .map(|t| (1.0 + (t.signal + t.unselected) / (t.interference + noise_var)).log2())
        .collect()
}

/// `g_{Λ_{m,k}}` cut out of the full per-pair gain vectors.
pub fn selected_gains(state: &SelectionState, gains: &BsUserGrid<CVec>) -> BsUserGrid<CVec> {
    state.index_sets.map(|m, k, set| CVec::from_iterator(set.len(), set.iter().map(|&i| gains.get(m, k)[i])))
}

/// Per-user stacking `g_{Λ_k}` of per-pair vectors, BS-major.
pub fn stack_user(blocks: &BsUserGrid<CVec>, k: usize) -> CVec {
    let len: usize = (0..blocks.num_bs()).map(|m| blocks.get(m, k).len()).sum();
    CVec::from_iterator(len, (0..blocks.num_bs()).flat_map(|m| blocks.get(m, k).iter().copied()))
}

/// Inverse of [`stack_user`] for the block sizes of `state`.
pub fn unstack_user(state: &SelectionState, k: usize, stacked: &CVec) -> Vec<CVec> {
    let mut off = 0;
    (0..state.num_bs())
        .map(|m| {
            let n = state.index_sets.get(m, k).len();
            let v = stacked.rows(off, n).into_owned();
            off += n;
            v
        })
        .collect()
}

/// Data beams `w_{m,k} = V_{Λ_{m,k}} ĝ_{Λ_{m,k}}`.
pub fn beams_from_gains(state: &SelectionState, gains: &BsUserGrid<CVec>) -> BsUserGrid<CVec> {
    state.precoders.map(|m, k, v| v * gains.get(m, k))
}

/// `P[k, j] = |Σ_m h_{m,k}^H w_{m,j}|²`.
pub fn received_powers(channels: &BsUserGrid<CVec>, beams: &BsUserGrid<CVec>) -> DMatrix<f64> {
    let (num_bs, num_users) = (channels.num_bs(), channels.num_users());
    DMatrix::from_fn(num_users, num_users, |k, j| {
        (0..num_bs)
            .map(|m| channels.get(m, k).dotc(beams.get(m, j)))
            .sum::<Complex<f64>>()
            .norm_sqr()
    })
}

/// [`received_powers`] for beams stacked over the BSs, one vector per user.
pub fn received_powers_stacked(channels: &BsUserGrid<CVec>, beams: &[CVec]) -> DMatrix<f64> {
    let (num_bs, num_users) = (channels.num_bs(), channels.num_users());
    DMatrix::from_fn(num_users, num_users, |k, j| {
        let mut acc = Complex::from(0.0);
        let mut off = 0;
        for m in 0..num_bs {
            let h = channels.get(m, k);
            acc += h.dotc(&beams[j].rows(off, h.len()));
            off += h.len();
        }
        acc.norm_sqr()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMode {
    /// Mean of `log₂(1 + SINR)` over draws.
    Instantaneous,
    /// `log₂(1 + E[signal]/(E[interference] + σ²))`.
    RatioOfMeans,
}

/// Per-user rate estimate with standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub draws: usize,
}

impl RateEstimate {
    pub fn sum(&self) -> f64 {
        self.mean.iter().sum()
    }
}

/// Running first and second moments of (signal, interference) per user.
#[derive(Debug, Clone)]
pub struct RateAccumulator {
    mode: RateMode,
    noise_var: f64,
    n: usize,
    /// Σs, Σi, Σs², Σi², Σsi per user; Σlog, Σlog² in instantaneous mode.
    sums: Vec<[f64; 5]>,
}

impl RateAccumulator {
    pub fn new(num_users: usize, noise_var: f64, mode: RateMode) -> Self {
        Self { mode, noise_var, n: 0, sums: vec![[0.0; 5]; num_users] }
    }

    pub fn push(&mut self, powers: &DMatrix<f64>) {
        self.n += 1;
        for (k, acc) in self.sums.iter_mut().enumerate() {
            let s = powers[(k, k)];
            let i: f64 = (0..powers.ncols()).filter(|&j| j != k).map(|j| powers[(k, j)]).sum();
            match self.mode {
                RateMode::RatioOfMeans => {
                    acc[0] += s;
                    acc[1] += i;
                    acc[2] += s * s;
                    acc[3] += i * i;
                    acc[4] += s * i;
                }
                RateMode::Instantaneous => {
                    let r = (1.0 + s / (i + self.noise_var)).log2();
                    acc[0] += r;
                    acc[2] += r * r;
                }
            }
        }
    }

    pub fn finish(&self) -> RateEstimate {
        let n = self.n as f64;
        let var = |sum: f64, sq: f64| if self.n > 1 { ((sq - sum * sum / n) / (n - 1.0)).max(0.0) } else { f64::NAN };
        let mut mean = Vec::with_capacity(self.sums.len());
        let mut se = Vec::with_capacity(self.sums.len());
        for acc in &self.sums {
            match self.mode {
                RateMode::Instantaneous => {
                    mean.push(acc[0] / n);
                    se.push((var(acc[0], acc[2]) / n).sqrt());
                }
                RateMode::RatioOfMeans => {
                    let (s, i) = (acc[0] / n, acc[1] / n);
                    let d = i + self.noise_var;
                    mean.push((1.0 + s / d).log2());
                    // delta method on f(s, i) = log₂(1 + s/(i+σ²))
                    let ln2 = std::f64::consts::LN_2;
                    let gs = 1.0 / (ln2 * (d + s));
                    let gi = -s / (ln2 * d * (d + s));
                    let cov_si = if self.n > 1 { (acc[4] - acc[0] * acc[1] / n) / (n - 1.0) } else { f64::NAN };
                    let v = gs * gs * var(acc[0], acc[2]) + gi * gi * var(acc[1], acc[3]) + 2.0 * gs * gi * cov_si;
                    se.push((v.max(0.0) / n).sqrt());
                }
            }
        }
        RateEstimate { mean, se, draws: self.n }
    }
}

/// Monte Carlo rate over received-power draws.
pub fn mc_rate(draws: impl IntoIterator<Item = DMatrix<f64>>, noise_var: f64, mode: RateMode) -> Result<RateEstimate> {
    let mut acc: Option<RateAccumulator> = None;
    for p in draws {
        acc.get_or_insert_with(|| RateAccumulator::new(p.nrows(), noise_var, mode)).push(&p);
    }
    acc.map(|a| a.finish()).ok_or(Error::Empty("no rate draws"))
}

/// DS/US/IS split of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBreakdown {
    /// Mean `|g_Λ^H C ĝ_Λ|²` with the fed-back gains.
    pub ds: f64,
    /// Mean `|g_Λ^H C g_Λ|²` on the same draws.
    pub ds_ideal: f64,
    pub us: f64,
    pub is_: f64,
    pub rate_ideal: f64,
    pub rate_realistic: f64,
}

/// Rate decomposition from paired draws of true and fed-back stacked PGI.
///
/// DS terms are measured on the supplied draws; US and IS are the
/// closed-form expectations. Both are unchanged by magnitude-preserving
/// direction quantization, so ideal and realistic runs share them exactly.
pub fn rate_breakdown<'a>(
    steering: &BsUserGrid<CMat>,
    state: &SelectionState,
    noise_var: f64,
    draws: impl IntoIterator<Item = (&'a [CVec], &'a [CVec])>,
) -> Result<Vec<RateBreakdown>> {
    let terms = ideal_terms(steering, state);
    let cs: Vec<CMat> = (0..state.num_users()).map(|k| effective_gain_matrix(steering, state, k)).collect();
    let mut ds = vec![0.0; cs.len()];
    let mut ds_ideal = vec![0.0; cs.len()];
    let mut n = 0usize;
    for (truth, fed) in draws {
        if truth.len() != cs.len() || fed.len() != cs.len() {
            return Err(Error::Dimension("one stacked PGI vector per user expected".into()));
        }
        for (k, c) in cs.iter().enumerate() {
            let cg = c * &fed[k];
            ds[k] += truth[k].dotc(&cg).norm_sqr();
            ds_ideal[k] += truth[k].dotc(&(c * &truth[k])).norm_sqr();
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("no breakdown draws"));
    }
    Ok(terms
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let (ds, ds_ideal) = (ds[k] / n as f64, ds_ideal[k] / n as f64);
            let den = t.interference + noise_var;
            RateBreakdown {
                ds,
                ds_ideal,
                us: t.unselected,
                is_: t.interference,
                rate_ideal: (1.0 + (ds_ideal + t.unselected) / den).log2(),
                rate_realistic: (1.0 + (ds + t.unselected) / den).log2(),
            }
        })
        .collect())
}

/// Ratio-estimator mean with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

/// Normalized quantization distortion of the effective gain matrix `c`,
/// with a fresh RVQ codebook on every draw.
pub fn measure_distortion(c: &CMat, bits: u32, trials: usize, seed: u64) -> Result<Estimate> {
    let mut rng = stream_rng(seed, streams::DISTORTION);
    let dim = c.nrows();
    measure_distortion_with(c, trials, &mut rng, |rng, _| rvq_codebook_from(rng, dim, bits))
}

/// [`measure_distortion`] with a caller-supplied codebook per draw; the
/// closure also sees the drawn gain vector.
pub fn measure_distortion_with<R: Rng>(
    c: &CMat,
    trials: usize,
    rng: &mut R,
    mut codebook: impl FnMut(&mut R, &CVec) -> Result<Codebook>,
) -> Result<Estimate> {
    if trials < 100 {
        return Err(Error::InvalidConfig(format!("distortion estimate needs >= 100 trials, got {trials}")));
    }
    if c.nrows() != c.ncols() {
        return Err(Error::Dimension("effective gain matrix must be square".into()));
    }
    let l = c.nrows();
    let (mut sn, mut sd, mut snn, mut sdd, mut snd) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..trials {
        let g = complex_normal_vec(rng, l, 1.0);
        let cb = codebook(rng, &g)?;
        let g_hat = crate::feedback::quantize_round_trip(&g, &cb)?;
        let ideal = g.dotc(&(c * &g)).norm_sqr();
        let real = g.dotc(&(c * &g_hat)).norm_sqr();
        let num = ideal - real;
        sn += num;
        sd += ideal;
        snn += num * num;
        sdd += ideal * ideal;
        snd += num * ideal;
    }
    let n = trials as f64;
    let (mn, md) = (sn / n, sd / n);
    let ratio = mn / md;
    let vn = (snn - sn * sn / n) / (n - 1.0);
    let vd = (sdd - sd * sd / n) / (n - 1.0);
    let cnd = (snd - sn * sd / n) / (n - 1.0);
    let var = (vn - 2.0 * ratio * cnd + ratio * ratio * vd) / (md * md);
    Ok(Estimate { mean: ratio, se: (var.max(0.0) / n).sqrt() })
}

/// `E|ḡ^H A ḡ|²` for `ḡ` uniform on the unit sphere:
/// `(|tr A|² + ‖A‖_F²)/(L(L+1))`.
pub fn quadratic_moment_closed_form(a: &CMat) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!("{}x{} matrix is not square", a.nrows(), a.ncols())));
    }
    let l = a.nrows() as f64;
    Ok((a.trace().norm_sqr() + frobenius_sq(a)) / (l * (l + 1.0)))
}
