//! MUSIC angle-of-departure estimation from uplink snapshots.
//!
//! Uplink and downlink share path angles, so the BS estimates the AoDs
//! from the sample covariance of uplink channel snapshots.

use nalgebra::Complex;
use rand::Rng;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::hermitian_eig;
use crate::model::{steering_matrix, steering_vector, BsUserGrid, Geometry};
use crate::rng::{complex_normal_vec, derive_seed, stream_rng, streams};
use crate::{CMat, CVec};

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: CMat,
    pub snapshot_count: usize,
}

/// `R = (1/T) Σ_t x_t x_t^H`.
pub fn sample_covariance(snapshots: &[CVec]) -> Result<CovarianceEstimate> {
    let first = snapshots.first().ok_or(Error::Empty("snapshot list"))?;
    let n = first.len();
    let mut r = CMat::zeros(n, n);
    for x in snapshots {
        if x.len() != n {
            return Err(Error::Dimension("snapshots differ in length".into()));
        }
        r.gerc(Complex::from(1.0), x, x, Complex::from(1.0));
    }
    r /= Complex::from(snapshots.len() as f64);
    // exact Hermitian symmetry regardless of rounding in the rank-one updates
    let r = (&r + r.adjoint()) * Complex::from(0.5);
    Ok(CovarianceEstimate { matrix: r, snapshot_count: snapshots.len() })
}

/// Angles from just above −90° to just below 90° in 0.1° steps, radians.
pub fn default_grid() -> Vec<f64> {
    (1..1800).map(|i| (-90.0 + 0.1 * i as f64).to_radians()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MusicSpectrum {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub signal_dim: usize,
}

/// `f(θ) = 1/(a(θ)^H E_n E_n^H a(θ))` with the denominator floored at
/// `1e−12 tr R`.
pub fn music_spectrum(cov: &CovarianceEstimate, signal_dim: usize, grid: &[f64], spacing_ratio: f64) -> Result<MusicSpectrum> {
    let n = cov.matrix.nrows();
    if signal_dim >= n {
        return Err(Error::SignalDimension { signal_dim, antennas: n });
    }
    if grid.is_empty() {
        return Err(Error::Empty("angle grid"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidConfig("angle grid must be strictly increasing".into()));
    }
    let (_, vectors) = hermitian_eig(&cov.matrix);
    let noise = vectors.columns(0, n - signal_dim);
    let floor = 1e-12 * cov.matrix.trace().re.max(f64::MIN_POSITIVE);
    let values = grid
        .iter()
        .map(|&th| {
            let a = steering_vector(th, n, spacing_ratio);
            let proj = noise.ad_mul(&a);
            1.0 / proj.norm_squared().max(floor)
        })
        .collect();
    Ok(MusicSpectrum { grid: grid.to_vec(), values, signal_dim })
}

/// Relative rise below which neighboring spectrum values count as equal.
const FLAT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AodEstimate {
    /// Ascending angles, radians.
    pub angles: Vec<f64>,
    /// Fewer local maxima than requested.
    pub shortfall: bool,
}

/// The `p` largest interior local maxima, each refined by a parabola
/// through the log-spectrum at the peak and its two neighbors.
pub fn estimate_aods(spectrum: &MusicSpectrum, p: usize) -> AodEstimate {
    let v = &spectrum.values;
    let g = &spectrum.grid;
    let mut peaks: Vec<usize> = (1..v.len().saturating_sub(1))
        .filter(|&i| v[i] - v[i - 1] > FLAT_TOLERANCE * v[i] && v[i] >= v[i + 1])
        .collect();
    peaks.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    peaks.truncate(p);
    let mut angles: Vec<f64> = peaks
        .iter()
        .map(|&i| {
            let (l, c, r) = (v[i - 1].ln(), v[i].ln(), v[i + 1].ln());
            let curv = l - 2.0 * c + r;
            let offset = if curv < 0.0 { (0.5 * (l - r) / curv).clamp(-0.5, 0.5) } else { 0.0 };
            let step = if offset >= 0.0 { g[i + 1] - g[i] } else { g[i] - g[i - 1] };
            g[i] + offset * step
        })
        .collect();
    angles.sort_by(f64::total_cmp);
    AodEstimate { shortfall: angles.len() < p, angles }
}

/// `x_t = A g_t + n_t` with fresh CN(0, I) gains per snapshot.
pub fn uplink_snapshots<R: Rng + ?Sized>(a: &CMat, count: usize, noise_var: f64, rng: &mut R) -> Vec<CVec> {
    (0..count)
        .map(|_| {
            let g = complex_normal_vec(rng, a.ncols(), 1.0);
            let mut x = a * g;
            if noise_var > 0.0 {
                x += complex_normal_vec(rng, a.nrows(), noise_var);
            }
            x
        })
        .collect()
}

/// BS-side steering matrices built from MUSIC estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedSteering {
    pub steering: BsUserGrid<CMat>,
    pub angles: BsUserGrid<Vec<f64>>,
    /// Pairs where MUSIC found too few peaks and the true angles were used.
    pub fallbacks: usize,
}

/// Runs MUSIC for every (BS, user) pair of `geometry`.
///
/// Per-antenna uplink SNR is `music_snr_db`, i.e. noise variance
/// `P/10^{snr/10}` against a received power of `P` per antenna.
pub fn estimate_steering(geometry: &Geometry, config: &SystemConfig, seed: u64) -> Result<EstimatedSteering> {
    let grid = default_grid();
    let p = geometry.num_paths();
    let noise_var = p as f64 / 10f64.powf(config.music_snr_db / 10.0);
    let truth = geometry.steering();
    let mut fallbacks = 0;
    let mut angles = Vec::new();
    for ((m, k), a) in truth.iter() {
        let mut rng = stream_rng(derive_seed(seed, &[m as u64, k as u64]), streams::UPLINK);
        let snaps = uplink_snapshots(a, config.music_snapshots.max(1), noise_var, &mut rng);
        let cov = sample_covariance(&snaps)?;
        let spec = music_spectrum(&cov, p, &grid, geometry.spacing_ratio)?;
        let est = estimate_aods(&spec, p);
        if est.shortfall {
            fallbacks += 1;
            angles.push(geometry.path_aods.get(m, k).clone());
        } else {
            angles.push(est.angles);
        }
    }
    let mut it = angles.into_iter();
    let angles = BsUserGrid::from_fn(geometry.num_bs(), geometry.num_users(), |_, _| it.next().expect("one per pair"));
    let steering = angles.map(|_, _, th| steering_matrix(th, geometry.num_antennas, geometry.spacing_ratio));
    Ok(EstimatedSteering { steering, angles, fallbacks })
}
