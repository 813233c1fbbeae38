//! Closed-form distortion, rate-gap and bit-scaling expressions.

use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{block_diag, frobenius_sq};
use crate::CMat;

/// Expected codeword correlation of a `B`-bit RVQ codebook in dimension `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RvqGamma {
    /// `γ = E|ḡ^H c_î|²`.
    pub gamma: f64,
    /// `1 − γ = 2^B Beta(2^B, L/(L−1))`, the conventional RVQ distortion.
    pub distortion: f64,
    /// `2^{−B/(L−1)}`.
    pub simple_bound: f64,
}

/// Codebook sizes above `2^ASYMPTOTIC_BITS` use the large-size expansion.
const ASYMPTOTIC_BITS: u32 = 24;

/// `γ = 1 − 2^B Beta(2^B, L/(L−1))`, evaluated through log-gamma.
pub fn rvq_gamma(bits: u32, l: usize) -> Result<RvqGamma> {
    if l < 2 {
        return Err(Error::InfeasibleBound(format!("RVQ correlation needs L >= 2, got {l}")));
    }
    let b = l as f64 / (l as f64 - 1.0);
    let distortion = if bits <= ASYMPTOTIC_BITS {
        let size = 2f64.powi(bits as i32);
        (size.ln() + ln_beta(size, b)).exp()
    } else {
        // ln Γ(a+b) − ln Γ(a) cancels badly for large a; use
        // a Beta(a, b) = Γ(b) a^{1−b} (1 − b(b−1)/(2a) + O(a^{−2}))
        let ln_a = bits as f64 * std::f64::consts::LN_2;
        let correction = 1.0 - b * (b - 1.0) / 2.0 * (-ln_a).exp();
        ((1.0 - b) * ln_a + ln_gamma(b)).exp() * correction
    };
    Ok(RvqGamma {
        gamma: 1.0 - distortion,
        distortion,
        simple_bound: simple_bound(bits, l),
    })
}

/// `2^{−B/(L−1)}`; zero for `L = 1` where only a phase is quantized.
pub fn simple_bound(bits: u32, l: usize) -> f64 {
    if l < 2 {
        0.0
    } else {
        2f64.powf(-(bits as f64) / (l as f64 - 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaFactor {
    pub delta: f64,
    /// Trace sum numerically zero relative to the Frobenius norm.
    pub degenerate: bool,
}

/// `δ = ‖C‖_F² / |tr C|²` of the effective gain matrix `C = blockdiag(A_Λ^H V)`.
pub fn delta_factor(c: &CMat) -> Result<DeltaFactor> {
    let fro = frobenius_sq(c);
    if !(fro > 0.0) {
        return Err(Error::InfeasibleBound("effective gain matrix is zero".into()));
    }
    let tr = c.trace().norm();
    Ok(DeltaFactor {
        delta: fro / (tr * tr),
        degenerate: tr < 1e-12 * fro.sqrt(),
    })
}

/// [`delta_factor`] from matching per-BS `A_Λ` and `V` blocks.
pub fn delta_factor_blocks(a_blocks: &[CMat], v_blocks: &[CMat]) -> Result<DeltaFactor> {
    if a_blocks.len() != v_blocks.len() {
        return Err(Error::Dimension("unequal block counts".into()));
    }
    let mut products = Vec::with_capacity(a_blocks.len());
    for (a, v) in a_blocks.iter().zip(v_blocks) {
        if a.nrows() != v.nrows() || a.ncols() != v.ncols() {
            return Err(Error::Dimension("A_Λ and V blocks differ in shape".into()));
        }
        products.push(a.adjoint() * v);
    }
    delta_factor(&block_diag(&products))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionBounds {
    /// `(1−γ)(L−δ)/((L−1)(1+δ))`.
    pub closed_form: f64,
    /// `2^{−B/(L−1)}(L−δ)/((L−1)(1+δ))`.
    pub shaped: f64,
    /// `2^{−B/(L−1)}`.
    pub simple: f64,
    /// `δ > L`: the expressions go negative and are not meaningful.
    pub degenerate: bool,
}

/// Normalized quantization distortion: exact expectation and its two bounds.
pub fn distortion_bound(l: usize, bits: u32, delta: f64) -> Result<DistortionBounds> {
    let g = rvq_gamma(bits, l)?;
    let lf = l as f64;
    let shape = (lf - delta) / ((lf - 1.0) * (1.0 + delta));
    Ok(DistortionBounds {
        closed_form: g.distortion * shape,
        shaped: g.simple_bound * shape,
        simple: g.simple_bound,
        degenerate: delta > lf,
    })
}

/// Upper bound on the per-user rate loss from `B`-bit PGI feedback.
///
/// Zero for `L = 1`, where the fed-back direction is exact up to phase.
pub fn rate_gap_bound(l: usize, bits: u32, delta: f64, snr: f64) -> Result<f64> {
    rate_gap_bound_real(l, bits as f64, delta, snr)
}

/// [`rate_gap_bound`] at a real-valued bit count, e.g. one returned by
/// [`bits_for_rate_gap`].
pub fn rate_gap_bound_real(l: usize, bits: f64, delta: f64, snr: f64) -> Result<f64> {
    if l < 2 {
        return Ok(0.0);
    }
    if !(snr >= 0.0) {
        return Err(Error::InfeasibleBound(format!("SNR must be nonnegative, got {snr}")));
    }
    let lf = l as f64;
    let q = 2f64.powf(-bits / (lf - 1.0));
    let denom = (lf - 1.0) * (1.0 + delta) - q * (lf - delta);
    if !(denom > 0.0) {
        return Err(Error::InfeasibleBound(format!(
            "rate-gap denominator {denom:.3e} is not positive (L={l}, B={bits}, δ={delta})"
        )));
    }
    let s = snr / (1.0 + snr);
    Ok((1.0 + s * (lf - delta) * q / denom).log2())
}

/// Feedback bits that hold the rate-gap bound at `log₂ β`.
///
/// Solving the bound for `2^{−B/(L−1)}` gives
/// `B = (L−1)[log₂(s/(β−1) + 1) + log₂((L−δ)/((L−1)(1+δ)))]` with
/// `s = snr/(1+snr)`. A negative result means every `B ≥ 0` already meets the
/// target.
pub fn bits_for_rate_gap(l: usize, delta: f64, snr: f64, beta: f64) -> Result<f64> {
    if l < 2 {
        return Err(Error::InfeasibleBound(format!("bit scaling needs L >= 2, got {l}")));
    }
    if !(beta > 1.0) {
        return Err(Error::InfeasibleBound(format!("rate-gap factor must exceed 1, got {beta}")));
    }
    if !(snr > 0.0) {
        return Err(Error::InfeasibleBound(format!("SNR must be positive, got {snr}")));
    }
    let lf = l as f64;
    if !(delta < lf) || !(delta > -1.0) {
        return Err(Error::InfeasibleBound(format!("δ = {delta} outside (−1, L)")));
    }
    let s = snr / (1.0 + snr);
    let shape = (lf - delta) / ((lf - 1.0) * (1.0 + delta));
    Ok((lf - 1.0) * ((s / (beta - 1.0) + 1.0).log2() + shape.log2()))
}

/// Single-cell lower bound `log₂(1 + (L+1)/σ²) − ΔR`.
pub fn single_cell_rate_bound(l: usize, bits: u32, delta: f64, noise_var: f64, snr: f64) -> Result<f64> {
    if l == 0 || !(noise_var > 0.0) {
        return Err(Error::InfeasibleBound("single-cell bound needs L >= 1 and σ² > 0".into()));
    }
    let first = (1.0 + (l as f64 + 1.0) / noise_var).log2();
    Ok(first - rate_gap_bound(l, bits, delta, snr)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal, stream_rng};
    use crate::Complex;
    use approx::assert_relative_eq;

    #[test]
    fn gamma_zero_bits() {
        for l in 2..12 {
            let g = rvq_gamma(0, l).unwrap();
            assert_relative_eq!(g.gamma, 1.0 / l as f64, epsilon = 1e-12);
        }
        assert!(rvq_gamma(3, 1).is_err());
    }

    #[test]
    fn gamma_grid_properties() {
        for l in 2..=16 {
            let mut prev = 0.0;
            for b in 0..=12 {
                let g = rvq_gamma(b, l).unwrap();
                assert!(g.gamma > 0.0 && g.gamma <= 1.0);
                assert!(g.gamma > prev, "γ not increasing at L={l}, B={b}");
                assert!(g.distortion <= g.simple_bound * (1.0 + 1e-12));
                prev = g.gamma;
            }
        }
    }

    #[test]
    fn gamma_asymptotic_branch_is_continuous() {
        for l in [2, 5, 16] {
            let exact = rvq_gamma(ASYMPTOTIC_BITS, l).unwrap().distortion;
            let next = rvq_gamma(ASYMPTOTIC_BITS + 1, l).unwrap().distortion;
            let b = l as f64 / (l as f64 - 1.0);
            // one extra bit scales the leading term by 2^{1−b}
            assert_relative_eq!(next / exact, 2f64.powf(1.0 - b), max_relative = 1e-6);
        }
        let huge = rvq_gamma(4000, 3).unwrap();
        assert!(huge.distortion.is_finite() && huge.distortion >= 0.0 && huge.distortion < 1e-300);
    }

    #[test]
    fn gamma_against_direct_beta() {
        // Beta(a, b) = Γ(a)Γ(b)/Γ(a+b), small arguments by the product form
        let (b, l) = (2u32, 3usize);
        let a = 4.0;
        let bb = 1.5;
        let g = |x: f64| statrs::function::gamma::gamma(x);
        let expected = 4.0 * g(a) * g(bb) / g(a + bb);
        assert_relative_eq!(rvq_gamma(b, l).unwrap().distortion, expected, max_relative = 1e-12);
    }

    #[test]
    fn delta_examples() {
        let d = delta_factor(&CMat::identity(8, 8)).unwrap();
        assert_relative_eq!(d.delta, 1.0 / 8.0);
        let mut rng = stream_rng(1, 0);
        for _ in 0..50 {
            let c = CMat::from_fn(6, 6, |_, _| complex_normal(&mut rng, 1.0));
            let d = delta_factor(&c).unwrap().delta;
            assert!(d >= 1.0 / 6.0 - 1e-12);
            let scaled = delta_factor(&(&c * Complex::new(-2.0, 0.5))).unwrap().delta;
            assert_relative_eq!(d, scaled, max_relative = 1e-12);
        }
        let nil = CMat::from_diagonal(&crate::CVec::from_vec(vec![Complex::from(1.0), Complex::from(-1.0)]));
        assert!(delta_factor(&nil).unwrap().degenerate);
    }

    #[test]
    fn distortion_chain() {
        for &l in &[2usize, 4, 8] {
            let at_min = distortion_bound(l, 6, 1.0 / l as f64).unwrap();
            assert_relative_eq!(at_min.shaped, at_min.simple, max_relative = 1e-12);
            for i in 0..=20 {
                let delta = 1.0 / l as f64 + i as f64 / 20.0 * (l as f64 - 1.0 / l as f64);
                let d = distortion_bound(l, 4, delta).unwrap();
                assert!(d.closed_form <= d.shaped + 1e-15);
                assert!(d.shaped <= d.simple + 1e-15);
            }
            let big = distortion_bound(l, 4000, 0.5).unwrap();
            assert!(big.closed_form.abs() < 1e-12 && big.shaped.abs() < 1e-12 && big.simple < 1e-12);
        }
    }

    #[test]
    fn gap_limits() {
        assert!(rate_gap_bound(8, 4000, 0.3, 30.0).unwrap() < 1e-12);
        let inf = rate_gap_bound(8, 6, 0.3, 1e15).unwrap();
        let q = 2f64.powf(-6.0 / 7.0);
        let denom = 7.0 * 1.3 - q * 7.7;
        assert_relative_eq!(inf, (1.0 + 7.7 * q / denom).log2(), max_relative = 1e-12);
        // δ = 1/L with B = 0 drives the denominator to zero
        assert!(rate_gap_bound(4, 0, 0.25, 10.0).is_err());
    }

    #[test]
    fn bits_round_trip_and_growth() {
        let snr = 10f64.powf(1.5);
        let beta = 1.5;
        let b = bits_for_rate_gap(8, 0.3, snr, beta).unwrap();
        assert_relative_eq!(rate_gap_bound_real(8, b, 0.3, snr).unwrap(), beta.log2(), epsilon = 1e-12);
        let lf = 8.0;
        let q = 2f64.powf(-b / (lf - 1.0));
        let s = snr / (1.0 + snr);
        let gap = (1.0 + s * (lf - 0.3) * q / ((lf - 1.0) * 1.3 - q * (lf - 0.3))).log2();
        assert_relative_eq!(gap, beta.log2(), epsilon = 1e-12);

        let mut prev = f64::NEG_INFINITY;
        for beta in [2.0, 1.5, 1.1, 1.01, 1.001] {
            let b = bits_for_rate_gap(8, 0.3, snr, beta).unwrap();
            assert!(b > prev);
            prev = b;
        }
        let mut prev = f64::NEG_INFINITY;
        for l in 2..=16usize {
            let b = bits_for_rate_gap(l, 1.0 / l as f64, snr, 1.2).unwrap();
            assert!(b > prev);
            prev = b;
        }
        assert!(bits_for_rate_gap(8, 0.3, snr, 1.0).is_err());
        assert!(bits_for_rate_gap(8, 9.0, snr, 2.0).is_err());
    }

    #[test]
    fn single_cell_limit() {
        let v = single_cell_rate_bound(4, 4000, 0.25, 0.5, 10.0).unwrap();
        assert_relative_eq!(v, (1.0 + 5.0 / 0.5f64).log2(), epsilon = 1e-12);
        let mut prev = 0.0;
        for l in 1..10 {
            let first = single_cell_rate_bound(l, 4000, 1.0 / l as f64, 1.0, 1.0).unwrap();
            assert!(first > prev);
            prev = first;
        }
    }
}
