//! RVQ codebooks, PGI quantization and the quantized-CSI baseline.

use nalgebra::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams, unit_sphere};
use crate::{CMat, CVec};

/// Largest codebook that will be materialized.
pub const MAX_CODEBOOK_BITS: u32 = 24;

/// `2^B` unit vectors stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub bits: u32,
    pub seed: u64,
    words: CMat,
}

impl Codebook {
    /// Codebook with explicit words; columns are normalized.
    pub fn from_words(words: CMat) -> Result<Self> {
        let size = words.ncols();
        if size == 0 || !size.is_power_of_two() {
            return Err(Error::Dimension(format!("codebook size {size} is not a power of two")));
        }
        let mut words = words;
        for mut c in words.column_iter_mut() {
            let n = c.norm();
            if n == 0.0 {
                return Err(Error::ZeroVector);
            }
            c /= Complex::from(n);
        }
        Ok(Self { bits: size.trailing_zeros(), seed: 0, words })
    }

    pub fn dimension(&self) -> usize {
        self.words.nrows()
    }

    pub fn len(&self) -> usize {
        self.words.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.words.ncols() == 0
    }

    pub fn word(&self, index: usize) -> Result<CVec> {
        if index >= self.len() {
            return Err(Error::CodewordIndex { index, size: self.len() });
        }
        Ok(self.words.column(index).into_owned())
    }

    pub fn words(&self) -> &CMat {
        &self.words
    }

    /// Index of the word most correlated with `dir` and that correlation.
    pub fn best_match(&self, dir: &CVec) -> (usize, f64) {
        let corr = self.words.ad_mul(dir);
        let mut best = (0, f64::NEG_INFINITY);
        for (i, c) in corr.iter().enumerate() {
            let v = c.norm_sqr();
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    }
}

/// Random-vector-quantization codebook drawn from `rng`.
///
/// Words are drawn one after another, so for a fixed generator state the
/// `B`-bit codebook is the prefix of any larger one.
pub fn rvq_codebook_from<R: Rng + ?Sized>(rng: &mut R, dim: usize, bits: u32) -> Result<Codebook> {
    if bits > MAX_CODEBOOK_BITS {
        return Err(Error::CodebookTooLarge { bits });
    }
    if dim == 0 {
        return Err(Error::Dimension("codebook dimension must be positive".into()));
    }
    let size = 1usize << bits;
    let mut words = CMat::zeros(dim, size);
    for i in 0..size {
        words.set_column(i, &unit_sphere(rng, dim));
    }
    Ok(Codebook { bits, seed: 0, words })
}

/// Seeded RVQ codebook, reproducible from `(dim, bits, seed)`.
pub fn gen_rvq_codebook(dim: usize, bits: u32, seed: u64) -> Result<Codebook> {
    let mut rng = stream_rng(seed, streams::CODEBOOK);
    let mut cb = rvq_codebook_from(&mut rng, dim, bits)?;
    cb.seed = seed;
    Ok(cb)
}

/// What a user sends back: the codeword index and the unquantized norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackMessage {
    /// 0-based codeword index.
    pub index: usize,
    pub magnitude: f64,
}

/// Quantizes the direction of a stacked PGI vector.
pub fn quantize_pgi(g: &CVec, codebook: &Codebook) -> Result<FeedbackMessage> {
    if g.len() != codebook.dimension() {
        return Err(Error::Dimension(format!(
            "PGI length {} but codebook dimension {}",
            g.len(),
            codebook.dimension()
        )));
    }
    let magnitude = g.norm();
    if !(magnitude > 0.0) {
        return Err(Error::ZeroVector);
    }
    let (index, _) = codebook.best_match(&(g / Complex::from(magnitude)));
    Ok(FeedbackMessage { index, magnitude })
}

/// `‖g‖ c_î`.
pub fn reconstruct_pgi(msg: &FeedbackMessage, codebook: &Codebook) -> Result<CVec> {
    Ok(codebook.word(msg.index)? * Complex::from(msg.magnitude))
}

/// Quantize then reconstruct.
pub fn quantize_round_trip(g: &CVec, codebook: &Codebook) -> Result<CVec> {
    reconstruct_pgi(&quantize_pgi(g, codebook)?, codebook)
}

/// Bits per BS that keep conventional CSI quantization loss under control.
pub fn csi_bits_rule(num_antennas: usize, snr_db: f64) -> f64 {
    (num_antennas as f64 - 1.0) / 3.0 * snr_db
}

/// One user's quantized CSI: the `M·N` concatenated channel direction is
/// quantized with a single codebook and rescaled by the true norm.
///
/// Returns the per-BS blocks of the reconstruction.
pub fn csi_baseline_feedback(channels: &[CVec], codebook: &Codebook) -> Result<Vec<CVec>> {
    let n: usize = channels.iter().map(|h| h.len()).sum();
    let mut stacked = CVec::zeros(n);
    let mut off = 0;
    for h in channels {
        stacked.rows_mut(off, h.len()).copy_from(h);
        off += h.len();
    }
    let hat = quantize_round_trip(&stacked, codebook)?;
    let mut out = Vec::with_capacity(channels.len());
    let mut off = 0;
    for h in channels {
        out.push(hat.rows(off, h.len()).into_owned());
        off += h.len();
    }
    Ok(out)
}

/// Regularized zero-forcing on stacked channel estimates.
///
/// `W = Ĥ^H(ĤĤ^H + Kσ²I)^{-1}` with `Ĥ` holding `ĥ_k^H` as rows; every
/// column is rescaled to norm `√M`.
pub fn rzf_precoder(channels: &[CVec], noise_var: f64, num_bs: usize) -> Result<Vec<CVec>> {
    let k = channels.len();
    if k == 0 {
        return Err(Error::Empty("no users"));
    }
    let dim = channels[0].len();
    let h = CMat::from_fn(k, dim, |r, c| channels[r][c].conj());
    let gram = &h * h.adjoint() + CMat::identity(k, k) * Complex::from(k as f64 * noise_var);
    let inv = gram
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("regularized channel Gram"))?
        .inverse();
    let w = h.adjoint() * inv;
    let target = (num_bs as f64).sqrt();
    w.column_iter()
        .map(|c| {
            let n = c.norm();
            if n > 0.0 {
                Ok(c.into_owned() * Complex::from(target / n))
            } else {
                Err(Error::ZeroVector)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::rvq_gamma;
    use crate::rng::complex_normal_vec;
    use approx::assert_relative_eq;

    #[test]
    fn codebook_shape_and_determinism() {
        let cb = gen_rvq_codebook(8, 0, 1).unwrap();
        assert_eq!(cb.len(), 1);
        let cb = gen_rvq_codebook(5, 6, 3).unwrap();
        assert_eq!(cb.len(), 64);
        for c in cb.words().column_iter() {
            assert_relative_eq!(c.norm(), 1.0, epsilon = 1e-12);
        }
        assert_eq!(cb, gen_rvq_codebook(5, 6, 3).unwrap());
        assert_ne!(cb, gen_rvq_codebook(5, 6, 4).unwrap());
        assert!(matches!(gen_rvq_codebook(4, 40, 0), Err(Error::CodebookTooLarge { .. })));
    }

    #[test]
    fn nested_prefix() {
        let small = gen_rvq_codebook(4, 2, 7).unwrap();
        let big = gen_rvq_codebook(4, 5, 7).unwrap();
        assert_eq!(small.words(), &big.words().columns(0, 4).into_owned());
    }

    #[test]
    fn isotropy() {
        let cb = gen_rvq_codebook(8, 12, 21).unwrap();
        let mut rng = stream_rng(2, 0);
        let g = unit_sphere(&mut rng, 8);
        let mean: f64 = cb.words().ad_mul(&g).iter().map(|z| z.norm_sqr()).sum::<f64>() / cb.len() as f64;
        assert!((mean - 1.0 / 8.0).abs() < 0.02 / 8.0, "{mean}");
    }

    #[test]
    fn perfect_word_and_phase_invariance() {
        let cb = gen_rvq_codebook(6, 4, 5).unwrap();
        let g = cb.word(9).unwrap() * Complex::from(3.0);
        let msg = quantize_pgi(&g, &cb).unwrap();
        assert_eq!(msg.index, 9);
        assert_relative_eq!(msg.magnitude, 3.0, epsilon = 1e-12);
        let back = reconstruct_pgi(&msg, &cb).unwrap();
        assert!((back - &g).norm() < 1e-12);

        let mut rng = stream_rng(4, 0);
        for _ in 0..50 {
            let g = complex_normal_vec(&mut rng, 6, 1.0);
            let i = quantize_pgi(&g, &cb).unwrap().index;
            let rotated = &g * Complex::from_polar(0.3, 2.1);
            assert_eq!(quantize_pgi(&rotated, &cb).unwrap().index, i);
            let dir = &g / Complex::from(g.norm());
            let chosen = cb.word(i).unwrap().dotc(&dir).norm_sqr();
            for c in cb.words().column_iter() {
                assert!(chosen >= c.dotc(&dir).norm_sqr());
            }
            let r = quantize_round_trip(&g, &cb).unwrap();
            assert_relative_eq!(r.norm(), g.norm(), max_relative = 1e-12);
            // orthogonal decomposition: ‖ḡ − (c^H ḡ)c‖² = 1 − |c^H ḡ|²
            let c = cb.word(i).unwrap();
            let resid = &dir - &c * c.dotc(&dir);
            assert_relative_eq!(resid.norm_squared(), 1.0 - chosen, epsilon = 1e-12);
        }
    }

    #[test]
    fn errors() {
        let cb = gen_rvq_codebook(3, 2, 0).unwrap();
        assert!(matches!(quantize_pgi(&CVec::zeros(3), &cb), Err(Error::ZeroVector)));
        assert!(quantize_pgi(&CVec::zeros(4), &cb).is_err());
        let msg = FeedbackMessage { index: 4, magnitude: 1.0 };
        assert!(matches!(reconstruct_pgi(&msg, &cb), Err(Error::CodewordIndex { .. })));
        let zero = FeedbackMessage { index: 1, magnitude: 0.0 };
        assert_eq!(reconstruct_pgi(&zero, &cb).unwrap(), CVec::zeros(3));
    }

    #[test]
    fn mean_correlation_matches_gamma() {
        let (l, b) = (8usize, 6u32);
        let mut rng = stream_rng(31, 0);
        let trials = 4000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let cb = rvq_codebook_from(&mut rng, l, b).unwrap();
            let g = unit_sphere(&mut rng, l);
            acc += cb.best_match(&g).1;
        }
        let gamma = rvq_gamma(b, l).unwrap().gamma;
        assert!((acc / trials as f64 - gamma).abs() < 0.02 * gamma);
    }

    #[test]
    fn distortion_non_increasing_in_bits() {
        let mut losses = Vec::new();
        for bits in [0u32, 2, 4, 6] {
            let mut rng = stream_rng(8, 0);
            let mut loss = 0.0;
            for _ in 0..500 {
                let cb = rvq_codebook_from(&mut rng.clone(), 4, 6).unwrap();
                let nested = Codebook::from_words(cb.words().columns(0, 1 << bits).into_owned()).unwrap();
                // advance the shared stream past the master list
                let _ = rvq_codebook_from(&mut rng, 4, 6).unwrap();
                let g = unit_sphere(&mut rng, 4);
                loss += 1.0 - nested.best_match(&g).1;
            }
            losses.push(loss / 500.0);
        }
        assert!(losses.windows(2).all(|w| w[1] <= w[0]), "{losses:?}");
    }

    #[test]
    fn csi_rule_and_baseline() {
        assert_relative_eq!(csi_bits_rule(16, 10.0), 50.0);
        assert_relative_eq!(6.0 * csi_bits_rule(16, 10.0), 300.0);
        let cb = gen_rvq_codebook(8, 3, 1).unwrap();
        let w = cb.word(5).unwrap() * Complex::from(2.0);
        let blocks = vec![w.rows(0, 4).into_owned(), w.rows(4, 4).into_owned()];
        let back = csi_baseline_feedback(&blocks, &cb).unwrap();
        assert!((&back[0] - &blocks[0]).norm() < 1e-12 && (&back[1] - &blocks[1]).norm() < 1e-12);
    }

    #[test]
    fn rzf_nulls_interference_at_low_noise() {
        let mut rng = stream_rng(12, 0);
        let hs: Vec<CVec> = (0..3).map(|_| complex_normal_vec(&mut rng, 6, 1.0)).collect();
        let w = rzf_precoder(&hs, 1e-12, 2).unwrap();
        for (k, h) in hs.iter().enumerate() {
            for (j, wj) in w.iter().enumerate() {
                assert_relative_eq!(wj.norm(), 2f64.sqrt(), epsilon = 1e-12);
                if j != k {
                    assert!(h.dotc(wj).norm() < 1e-6);
                }
            }
        }
    }
}
