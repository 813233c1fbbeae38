//! Seed lineage and sampling helpers.
//!
//! Every random quantity in a trial comes from a ChaCha stream identified by
//! a 64-bit seed and a stream number, so any single trial can be replayed from
//! `(master_seed, axis index, trial index)` alone.

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::CVec;

/// Named stream identifiers used inside one trial.
pub mod streams {
    pub const SCENARIO: u64 = 1;
    pub const GAINS: u64 = 2;
    pub const UPLINK: u64 = 3;
    pub const PILOT_SEQUENCES: u64 = 4;
    pub const PILOT_NOISE: u64 = 5;
    pub const CODEBOOK: u64 = 6;
    pub const RANDOM_SELECTION: u64 = 7;
    pub const CSI_CODEBOOK: u64 = 8;
    pub const DISTORTION: u64 = 9;
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a path of indices.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(parent), |acc, &idx| mix64(acc ^ mix64(idx.wrapping_add(0xA076_1D64_78BD_642F))))
}

/// A ChaCha8 generator on a given stream of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One draw of CN(0, variance).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex<f64> {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(s * re, s * im)
}

/// Vector of i.i.d. CN(0, variance) entries.
pub fn complex_normal_vec<R: Rng + ?Sized>(rng: &mut R, len: usize, variance: f64) -> CVec {
    CVec::from_fn(len, |_, _| complex_normal(rng, variance))
}

/// Uniform direction on the complex unit sphere of dimension `len`.
pub fn unit_sphere<R: Rng + ?Sized>(rng: &mut R, len: usize) -> CVec {
    loop {
        let v = complex_normal_vec(rng, len, 1.0);
        let n = v.norm();
        if n > 0.0 {
            return v / Complex::from(n);
        }
    }
}
