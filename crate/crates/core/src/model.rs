//! Scenario geometry, ULA steering vectors and the ray-based channel.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Complex;
use rand::Rng;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::rng::{complex_normal_vec, stream_rng, streams};
use crate::{CMat, CVec};

/// Dense table indexed by (BS, user), stored BS-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BsUserGrid<T> {
    num_bs: usize,
    num_users: usize,
    data: Vec<T>,
}

impl<T> BsUserGrid<T> {
    pub fn from_fn(num_bs: usize, num_users: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(num_bs * num_users);
        for m in 0..num_bs {
            for k in 0..num_users {
                data.push(f(m, k));
            }
        }
        Self { num_bs, num_users, data }
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn get(&self, m: usize, k: usize) -> &T {
        assert!(m < self.num_bs && k < self.num_users, "grid index ({m}, {k}) out of range");
        &self.data[m * self.num_users + k]
    }

    pub fn get_mut(&mut self, m: usize, k: usize) -> &mut T {
        assert!(m < self.num_bs && k < self.num_users, "grid index ({m}, {k}) out of range");
        &mut self.data[m * self.num_users + k]
    }

    /// Entries in storage order together with their (m, k) index.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &T)> {
        let users = self.num_users;
        self.data.iter().enumerate().map(move |(i, v)| ((i / users, i % users), v))
    }

    pub fn map<U>(&self, mut f: impl FnMut(usize, usize, &T) -> U) -> BsUserGrid<U> {
        BsUserGrid::from_fn(self.num_bs, self.num_users, |m, k| f(m, k, self.get(m, k)))
    }
}

/// ULA response `[1, e^{-iφ}, …, e^{-i(n-1)φ}]` with `φ = 2π (d/λ) sin θ`.
pub fn steering_vector(theta: f64, n: usize, spacing_ratio: f64) -> CVec {
    let phase = -2.0 * PI * spacing_ratio * theta.sin();
    CVec::from_fn(n, |j, _| Complex::from_polar(1.0, phase * j as f64))
}

/// Steering vectors of `thetas` stacked as columns.
pub fn steering_matrix(thetas: &[f64], n: usize, spacing_ratio: f64) -> CMat {
    let mut a = CMat::zeros(n, thetas.len());
    for (i, &t) in thetas.iter().enumerate() {
        a.set_column(i, &steering_vector(t, n, spacing_ratio));
    }
    a
}

/// Broadside-referenced AoD of the direction `(dx, dy)`.
///
/// The array axis is taken along y, so the bearing `atan2(dy, dx)` is
/// mirrored about the axis into `[-π/2, π/2]`; both half-planes produce the
/// same ULA response.
pub fn broadside_angle(dx: f64, dy: f64) -> f64 {
    let phi = dy.atan2(dx);
    if phi > FRAC_PI_2 {
        PI - phi
    } else if phi < -FRAC_PI_2 {
        -PI - phi
    } else {
        phi
    }
}

/// Positions and per-path angles of one deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub bs_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
    pub nominal_aods: BsUserGrid<f64>,
    /// `P` angles per (BS, user), radians.
    pub path_aods: BsUserGrid<Vec<f64>>,
    pub num_antennas: usize,
    pub spacing_ratio: f64,
}

impl Geometry {
    pub fn num_bs(&self) -> usize {
        self.bs_positions.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_positions.len()
    }

    pub fn num_paths(&self) -> usize {
        self.path_aods.get(0, 0).len()
    }

    /// `A_{m,k}` for every pair, built from the true path angles.
    pub fn steering(&self) -> BsUserGrid<CMat> {
        self.path_aods
            .map(|_, _, th| steering_matrix(th, self.num_antennas, self.spacing_ratio))
    }
}

/// Uniform placement in the square plus uniform per-path offsets around
/// each geometric bearing.
pub fn draw_scenario(config: &SystemConfig, seed: u64) -> Geometry {
    let mut rng = stream_rng(seed, streams::SCENARIO);
    let side = config.area_side;
    let point = |rng: &mut rand_chacha::ChaCha8Rng| [side * rng.random::<f64>(), side * rng.random::<f64>()];
    let bs_positions: Vec<[f64; 2]> = (0..config.num_bs).map(|_| point(&mut rng)).collect();
    let user_positions: Vec<[f64; 2]> = (0..config.num_users).map(|_| point(&mut rng)).collect();

    let nominal_aods = BsUserGrid::from_fn(config.num_bs, config.num_users, |m, k| {
        let (b, u) = (bs_positions[m], user_positions[k]);
        broadside_angle(u[0] - b[0], u[1] - b[1])
    });
    let half = 0.5 * config.angular_spread.to_radians();
    let path_aods = nominal_aods.map(|_, _, &nominal| {
        (0..config.num_paths)
            .map(|_| nominal + half * (2.0 * rng.random::<f64>() - 1.0))
            .collect()
    });
    Geometry {
        bs_positions,
        user_positions,
        nominal_aods,
        path_aods,
        num_antennas: config.num_antennas,
        spacing_ratio: config.d_over_lambda,
    }
}

/// Steering matrices, path gains and the resulting channels `h = A g`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub steering: BsUserGrid<CMat>,
    pub gains: BsUserGrid<CVec>,
    pub channels: BsUserGrid<CVec>,
}

impl ChannelRealization {
    pub fn from_gains(steering: BsUserGrid<CMat>, gains: BsUserGrid<CVec>) -> Result<Self> {
        if steering.num_bs() != gains.num_bs() || steering.num_users() != gains.num_users() {
            return Err(Error::Dimension("gain grid does not match steering grid".into()));
        }
        for ((m, k), a) in steering.iter() {
            if a.ncols() != gains.get(m, k).len() {
                return Err(Error::Dimension(format!(
                    "pair ({m}, {k}): {} paths but {} gains",
                    a.ncols(),
                    gains.get(m, k).len()
                )));
            }
        }
        let channels = steering.map(|m, k, a| a * gains.get(m, k));
        Ok(Self { steering, gains, channels })
    }

    pub fn num_bs(&self) -> usize {
        self.steering.num_bs()
    }

    pub fn num_users(&self) -> usize {
        self.steering.num_users()
    }
}

/// I.i.d. CN(0, 1) gains for every (BS, user, path), drawn BS-major.
pub fn draw_gains<R: Rng + ?Sized>(rng: &mut R, num_bs: usize, num_users: usize, num_paths: usize) -> BsUserGrid<CVec> {
    BsUserGrid::from_fn(num_bs, num_users, |_, _| complex_normal_vec(rng, num_paths, 1.0))
}

/// One gain draw on top of the geometry's steering matrices.
pub fn realize_channel(geometry: &Geometry, seed: u64) -> ChannelRealization {
    let mut rng = stream_rng(seed, streams::GAINS);
    let gains = draw_gains(&mut rng, geometry.num_bs(), geometry.num_users(), geometry.num_paths());
    ChannelRealization::from_gains(geometry.steering(), gains).expect("grids built from one geometry")
}

/// Noise variance that puts the mean per-user received power at `snr_db`.
///
/// Received power is the expected `DS + US + IS` of `selection` over the
/// gains, so doubling every precoder doubles the result.
pub fn noise_variance_for_snr(
    steering: &BsUserGrid<CMat>,
    selection: &crate::SelectionState,
    snr_db: f64,
) -> Result<f64> {
    let terms = crate::rate::ideal_terms(steering, selection);
    let total: f64 = terms.iter().map(|t| t.signal + t.unselected + t.interference).sum();
    let mean = total / terms.len() as f64;
    if !(mean.is_finite() && mean > f64::MIN_POSITIVE * 1e6) {
        return Err(Error::ZeroSignalPower);
    }
    Ok(mean / 10f64.powf(snr_db / 10.0))
}

/// Data noise variance of a scenario under `config.snr_db`.
///
/// The reference is the all-path matched filter on the true steering, which
/// does not depend on the noise level and so avoids a circular calibration.
pub fn calibrate_noise(steering: &BsUserGrid<CMat>, config: &crate::SystemConfig) -> Result<f64> {
    let per_bs = noise_variance_for_snr(steering, &crate::SelectionState::matched_reference(steering), config.snr_db)?;
    Ok(match config.snr_reference {
        crate::config::SnrReference::PerBsPower => per_bs,
        // received power is quadratic in the precoders, so scaling the
        // total power from M to 1 divides it by M
        crate::config::SnrReference::GroupPower => per_bs / steering.num_bs() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn steering_examples() {
        let a = steering_vector(0.0, 4, 0.5);
        for z in a.iter() {
            assert_eq!(*z, Complex::from(1.0));
        }
        let b = steering_vector(FRAC_PI_2, 2, 0.5);
        assert_eq!(b[0], Complex::from(1.0));
        assert!((b[1] - Complex::from(-1.0)).norm() < 1e-15);
        let c = steering_vector(30f64.to_radians(), 8, 0.5);
        assert_relative_eq!(c.norm_squared(), 8.0, epsilon = 1e-12);
        for z in c.iter() {
            assert_relative_eq!(z.norm(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn broadside_mirrors_back_half_plane() {
        assert_relative_eq!(broadside_angle(1.0, 0.0), 0.0);
        assert_relative_eq!(broadside_angle(0.0, 1.0), FRAC_PI_2);
        assert_relative_eq!(broadside_angle(-1.0, 1.0), PI / 4.0, epsilon = 1e-15);
        assert_relative_eq!(broadside_angle(-1.0, -1.0), -PI / 4.0, epsilon = 1e-15);
        let th = broadside_angle(-2.0, 0.7);
        // mirrored direction gives the same array response
        let fwd = steering_vector(0.7f64.atan2(-2.0), 6, 0.5);
        assert!((steering_vector(th, 6, 0.5) - fwd).norm() < 1e-12);
    }

    #[test]
    fn scenario_respects_spread_and_area() {
        let cfg = SystemConfig::default();
        let g = draw_scenario(&cfg, 42);
        for p in g.bs_positions.iter().chain(&g.user_positions) {
            assert!(p.iter().all(|&c| (0.0..=1.0).contains(&c)));
        }
        for ((m, k), paths) in g.path_aods.iter() {
            assert_eq!(paths.len(), 4);
            for &t in paths {
                assert!((t - g.nominal_aods.get(m, k)).abs() <= 5f64.to_radians() + 1e-15);
            }
        }
        assert_eq!(g, draw_scenario(&cfg, 42));
        assert_ne!(g, draw_scenario(&cfg, 43));
    }

    #[test]
    fn group_reference_divides_by_bs_count() {
        let group = SystemConfig::default();
        let per_bs = SystemConfig { snr_reference: crate::config::SnrReference::PerBsPower, ..group.clone() };
        let steering = draw_scenario(&group, 5).steering();
        let a = calibrate_noise(&steering, &group).unwrap();
        let b = calibrate_noise(&steering, &per_bs).unwrap();
        assert_relative_eq!(a * group.num_bs as f64, b, max_relative = 1e-14);
    }

    #[test]
    fn zero_spread_collapses_paths() {
        let cfg = SystemConfig { angular_spread: 0.0, ..SystemConfig::default() };
        let g = draw_scenario(&cfg, 1);
        for ((m, k), paths) in g.path_aods.iter() {
            assert!(paths.iter().all(|t| t == g.nominal_aods.get(m, k)));
        }
    }

    #[test]
    fn channel_is_steering_times_gains() {
        let cfg = SystemConfig::default();
        let g = draw_scenario(&cfg, 9);
        let ch = realize_channel(&g, 9);
        for ((m, k), h) in ch.channels.iter() {
            let a = ch.steering.get(m, k);
            let diff = (h - a * ch.gains.get(m, k)).norm();
            assert!(diff <= 1e-12 * h.norm().max(1.0));
            for col in a.column_iter() {
                assert_relative_eq!(col.norm_squared(), 8.0, epsilon = 1e-12);
                assert_eq!(col[0], Complex::from(1.0));
            }
        }
        assert_eq!(ch, realize_channel(&g, 9));
    }

    #[test]
    fn single_path_unit_gain_is_steering_vector() {
        let a = steering_matrix(&[0.3], 5, 0.5);
        let steering = BsUserGrid::from_fn(1, 1, |_, _| a.clone());
        let gains = BsUserGrid::from_fn(1, 1, |_, _| CVec::from_element(1, Complex::from(1.0)));
        let ch = ChannelRealization::from_gains(steering, gains).unwrap();
        assert_eq!(ch.channels.get(0, 0), &steering_vector(0.3, 5, 0.5));
    }

    #[test]
    fn gain_moments() {
        let mut rng = stream_rng(77, streams::GAINS);
        let n = 100_000;
        let v = complex_normal_vec(&mut rng, n, 1.0);
        let re: f64 = v.iter().map(|z| z.re * z.re).sum::<f64>() / n as f64;
        let im: f64 = v.iter().map(|z| z.im * z.im).sum::<f64>() / n as f64;
        // Var of a squared N(0, 1/2) draw is 1/2, so SE of the mean is sqrt(0.5/n)
        let se = (0.5 / n as f64).sqrt();
        assert!((re - 0.5).abs() < 3.0 * se, "re {re}");
        assert!((im - 0.5).abs() < 3.0 * se, "im {im}");
        assert!((re + im - 1.0).abs() < 0.02);
    }
}
