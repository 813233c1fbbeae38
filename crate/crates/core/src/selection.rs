//! Alternating dominating-path selection with SLNR precoding.
//!
//! Each user's precoder bank `[V_{Λ_{1,k}}, …, V_{Λ_{M,k}}]` is stored per
//! (BS, user) block. The stacked vector `x_{Λ_k}` concatenates the
//! column-major vectorizations of those blocks, BS-major, and `μ_{Λ_k}`
//! stacks the selected steering columns in the same order so that
//! `μ^H x = Σ_m tr(A_Λ^H V)`.

use nalgebra::Complex;
use rand::Rng;

use crate::bounds;
use crate::error::{Error, Result};
use crate::linalg::{block_diag, generalized_top_eig_dense, hermitian_eig, rank_one_update_top};
use crate::model::BsUserGrid;
use crate::rate;
use crate::{CMat, CVec};

/// Selected path indices and the precoder blocks built on them.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionState {
    /// Sorted 0-based path indices per (BS, user).
    pub index_sets: BsUserGrid<Vec<usize>>,
    /// `N × |Λ_{m,k}|` precoder block per (BS, user).
    pub precoders: BsUserGrid<CMat>,
    pub num_antennas: usize,
}

impl SelectionState {
    /// Given index sets with all-zero precoders.
    pub fn from_sets(index_sets: BsUserGrid<Vec<usize>>, num_antennas: usize) -> Self {
        let precoders = index_sets.map(|_, _, s| CMat::zeros(num_antennas, s.len()));
        Self { index_sets, precoders, num_antennas }
    }

    /// Every path selected, zero precoders.
    pub fn all_paths(num_bs: usize, num_users: usize, num_paths: usize, num_antennas: usize) -> Self {
        Self::from_sets(
            BsUserGrid::from_fn(num_bs, num_users, |_, _| (0..num_paths).collect()),
            num_antennas,
        )
    }

    /// All paths with the matched precoder `x_k = √M μ_k/‖μ_k‖`.
    ///
    /// Depends only on the steering matrices, which makes it a neutral
    /// reference for calibrating the noise floor before any SLNR solve.
    pub fn matched_reference(steering: &BsUserGrid<CMat>) -> Self {
        let (num_bs, num_users) = (steering.num_bs(), steering.num_users());
        let n = steering.get(0, 0).nrows();
        let p = steering.get(0, 0).ncols();
        let mut state = Self::all_paths(num_bs, num_users, p, n);
        for k in 0..num_users {
            let mu = state.stacked_steering(steering, k);
            let x = &mu * Complex::from((num_bs as f64).sqrt() / mu.norm());
            state.set_stacked(k, &x);
        }
        state
    }

    pub fn num_bs(&self) -> usize {
        self.index_sets.num_bs()
    }

    pub fn num_users(&self) -> usize {
        self.index_sets.num_users()
    }

    /// `Σ_m |Λ_{m,k}|`.
    pub fn path_count(&self, k: usize) -> usize {
        (0..self.num_bs()).map(|m| self.index_sets.get(m, k).len()).sum()
    }

    /// Index sets of user `k`, one per BS.
    pub fn user_sets(&self, k: usize) -> Vec<&[usize]> {
        (0..self.num_bs()).map(|m| self.index_sets.get(m, k).as_slice()).collect()
    }

    /// Stacked precoder `x_{Λ_k}`.
    pub fn stacked(&self, k: usize) -> CVec {
        let n = self.num_antennas;
        let mut x = CVec::zeros(n * self.path_count(k));
        let mut off = 0;
        for m in 0..self.num_bs() {
            let v = self.precoders.get(m, k);
            for c in 0..v.ncols() {
                x.rows_mut(off, n).copy_from(&v.column(c));
                off += n;
            }
        }
        x
    }

    /// Writes the stacked vector back into per-BS blocks.
    pub fn set_stacked(&mut self, k: usize, x: &CVec) {
        let n = self.num_antennas;
        assert_eq!(x.len(), n * self.path_count(k), "stacked precoder length");
        let mut off = 0;
        for m in 0..self.num_bs() {
            let cols = self.index_sets.get(m, k).len();
            let v = CMat::from_fn(n, cols, |r, c| x[off + c * n + r]);
            off += n * cols;
            *self.precoders.get_mut(m, k) = v;
        }
    }

    /// `μ_{Λ_k}`: selected steering columns stacked in precoder order.
    pub fn stacked_steering(&self, steering: &BsUserGrid<CMat>, k: usize) -> CVec {
        let n = self.num_antennas;
        let mut mu = CVec::zeros(n * self.path_count(k));
        let mut off = 0;
        for m in 0..self.num_bs() {
            let a = steering.get(m, k);
            for &i in self.index_sets.get(m, k) {
                mu.rows_mut(off, n).copy_from(&a.column(i));
                off += n;
            }
        }
        mu
    }
}

/// Columns of `a` listed in `set`.
pub fn selected_columns(a: &CMat, set: &[usize]) -> CMat {
    CMat::from_fn(a.nrows(), set.len(), |r, c| a[(r, set[c])])
}

/// Dense SLNR operands of one user.
#[derive(Debug, Clone)]
pub struct SlnrOperands {
    pub user: usize,
    pub mu: CVec,
    /// `Γ_{k,j}` for every user `j`: the power user `k`'s precoder puts on
    /// user `j`'s paths. Entry `k` is the own-signal term.
    pub gammas: Vec<CMat>,
    pub u: CMat,
    pub w: CMat,
    pub noise_var: f64,
}

/// Assembles `μ`, `Γ`, `U` and `W` for user `k`.
pub fn build_slnr_operands(
    steering: &BsUserGrid<CMat>,
    index_sets: &BsUserGrid<Vec<usize>>,
    noise_var: f64,
    k: usize,
) -> Result<SlnrOperands> {
    let (num_bs, num_users) = (steering.num_bs(), steering.num_users());
    if index_sets.num_bs() != num_bs || index_sets.num_users() != num_users {
        return Err(Error::Dimension("index-set grid does not match steering grid".into()));
    }
    let n = steering.get(0, 0).nrows();
    for m in 0..num_bs {
        let p = steering.get(m, k).ncols();
        if let Some(&bad) = index_sets.get(m, k).iter().find(|&&i| i >= p) {
            return Err(Error::Dimension(format!("path index {bad} at BS {m} exceeds {p} paths")));
        }
    }
    let state = SelectionState::from_sets(index_sets.clone(), n);
    let mu = state.stacked_steering(steering, k);
    let gammas: Vec<CMat> = (0..num_users)
        .map(|j| {
            let mut blocks = Vec::new();
            for m in 0..num_bs {
                let a = steering.get(m, j);
                let g = a * a.adjoint();
                blocks.extend(std::iter::repeat_n(g, index_sets.get(m, k).len()));
            }
            block_diag(&blocks)
        })
        .collect();
    let dim = mu.len();
    let u = &mu * mu.adjoint() + &gammas[k];
    let mut w = CMat::identity(dim, dim) * Complex::from(noise_var / num_bs as f64);
    for (j, g) in gammas.iter().enumerate() {
        if j != k {
            w += g;
        }
    }
    Ok(SlnrOperands { user: k, mu, gammas, u, w, noise_var })
}

/// Generalized top eigenpair scaled to the power constraint.
#[derive(Debug, Clone)]
pub struct SlnrSolution {
    pub lambda: f64,
    /// Stacked precoder with `‖x‖ = √M`.
    pub x: CVec,
}

/// Maximizer of `x^H U x / x^H W x` on the dense operands, scaled to `√M`.
pub fn slnr_precoder(ops: &SlnrOperands, num_bs: usize) -> Result<SlnrSolution> {
    let (lambda, u_max) = generalized_top_eig_dense(&ops.u, &ops.w)?;
    let ux = &ops.u * &u_max;
    let residual = (&ux - (&ops.w * &u_max) * Complex::from(lambda)).norm() / ux.norm().max(f64::MIN_POSITIVE);
    if !lambda.is_finite() || !(residual <= 1e-8) {
        let diag: Vec<f64> = ops.w.diagonal().iter().map(|z| z.re).collect();
        let hi = diag.iter().copied().fold(0.0, f64::max);
        let lo = diag.iter().copied().fold(f64::INFINITY, f64::min);
        return Err(Error::EigenNonConvergence { condition: hi / lo });
    }
    let x = &u_max * Complex::from((num_bs as f64).sqrt() / u_max.norm());
    Ok(SlnrSolution { lambda, x })
}

/// `Σ_k`-separable SLNR value of a stacked precoder.
pub fn slnr_value(x: &CVec, mu: &CVec, gammas: &[CMat], k: usize, noise_var: f64) -> f64 {
    let quad = |g: &CMat| (x.adjoint() * g * x)[(0, 0)].re;
    let num = mu.dotc(x).norm_sqr() + quad(&gammas[k]);
    let leak: f64 = gammas.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, g)| quad(g)).sum();
    num / (leak + noise_var)
}

#[derive(Debug, Clone)]
struct PairFactor {
    /// Eigenvalues of `L^{-1} A A^H L^{-H}` with `B = L L^H` the pair's leakage block.
    theta: Vec<f64>,
    /// `L^{-H} Q`, maps whitened coordinates back to precoder space.
    back: CMat,
    /// `Q^H L^{-1} A`, whitened steering columns.
    proj: CMat,
}

/// SLNR solver exploiting the block structure of `W`.
///
/// `W_k` repeats one `N × N` block `Σ_{j≠k} A_{m,j}A_{m,j}^H + σ²/M I` per
/// selected path at BS `m`, and `Γ_{k,k}` repeats `A_{m,k}A_{m,k}^H` on the same
/// pattern. After whitening with the block Cholesky factor and rotating
/// into the eigenbasis of the whitened own-signal block, `W^{-1}U` becomes a
/// diagonal plus rank-one matrix whose top eigenpair follows from the
/// secular equation. The per-pair factors do not depend on the index sets,
/// so one solver serves a whole pruning run.
#[derive(Debug, Clone)]
pub struct SlnrSolver {
    factors: BsUserGrid<PairFactor>,
    num_antennas: usize,
}

impl SlnrSolver {
    pub fn new(steering: &BsUserGrid<CMat>, noise_var: f64) -> Result<Self> {
        if !(noise_var > 0.0) {
            return Err(Error::NotPositiveDefinite("noise variance must be positive"));
        }
        let (num_bs, num_users) = (steering.num_bs(), steering.num_users());
        let n = steering.get(0, 0).nrows();
        let grams = steering.map(|_, _, a| a * a.adjoint());
        let loading = Complex::from(noise_var / num_bs as f64);
        let mut totals = Vec::with_capacity(num_bs);
        for m in 0..num_bs {
            let mut t = CMat::zeros(n, n);
            for k in 0..num_users {
                t += grams.get(m, k);
            }
            totals.push(t);
        }
        let mut factors = Vec::with_capacity(num_bs * num_users);
        for (m, total) in totals.iter().enumerate() {
            for k in 0..num_users {
                let own = grams.get(m, k);
                let b = total - own + CMat::identity(n, n) * loading;
                let chol = b.cholesky().ok_or(Error::NotPositiveDefinite("leakage block"))?;
                let l = chol.l();
                let left = l.solve_lower_triangular(own).expect("Cholesky factor is nonsingular");
                let d = l
                    .solve_lower_triangular(&left.adjoint())
                    .expect("Cholesky factor is nonsingular")
                    .adjoint();
                let (theta, q) = hermitian_eig(&d);
                let back = l.adjoint().solve_upper_triangular(&q).expect("Cholesky factor is nonsingular");
                let whitened = l
                    .solve_lower_triangular(steering.get(m, k))
                    .expect("Cholesky factor is nonsingular");
                let proj = q.adjoint() * whitened;
                factors.push(PairFactor { theta, back, proj });
            }
        }
        let mut it = factors.into_iter();
        let factors = BsUserGrid::from_fn(num_bs, num_users, |_, _| it.next().expect("sized above"));
        Ok(Self { factors, num_antennas: n })
    }

    /// Top generalized eigenpair for user `k` on the given per-BS index sets.
    pub fn solve(&self, k: usize, sets: &[&[usize]]) -> Result<SlnrSolution> {
        let n = self.num_antennas;
        let num_bs = self.factors.num_bs();
        if sets.len() != num_bs {
            return Err(Error::Dimension(format!("{} index sets for {num_bs} BSs", sets.len())));
        }
        let total: usize = sets.iter().map(|s| s.len()).sum();
        if total == 0 {
            return Err(Error::Empty("user has no selected paths"));
        }
        let mut d = Vec::with_capacity(n * total);
        let mut z = CVec::zeros(n * total);
        let mut off = 0;
        for (m, set) in sets.iter().enumerate() {
            let f = self.factors.get(m, k);
            for &i in set.iter() {
                if i >= f.proj.ncols() {
                    return Err(Error::Dimension(format!("path index {i} at BS {m} out of range")));
                }
                d.extend_from_slice(&f.theta);
                z.rows_mut(off, n).copy_from(&f.proj.column(i));
                off += n;
            }
        }
        let (lambda, v) = rank_one_update_top(&d, &z);
        if !lambda.is_finite() || v.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::EigenNonConvergence { condition: f64::NAN });
        }
        let mut x = CVec::zeros(n * total);
        let mut off = 0;
        for (m, set) in sets.iter().enumerate() {
            let f = self.factors.get(m, k);
            for _ in set.iter() {
                let blk = &f.back * v.rows(off, n);
                x.rows_mut(off, n).copy_from(&blk);
                off += n;
            }
        }
        let scale = (num_bs as f64).sqrt() / x.norm();
        x *= Complex::from(scale);
        Ok(SlnrSolution { lambda, x })
    }

    /// Re-solves every user's precoder on the current index sets.
    pub fn optimize(&self, state: &mut SelectionState) -> Result<Vec<f64>> {
        let mut lambdas = Vec::with_capacity(state.num_users());
        for k in 0..state.num_users() {
            let sol = self.solve(k, &state.user_sets(k))?;
            state.set_stacked(k, &sol.x);
            lambdas.push(sol.lambda);
        }
        Ok(lambdas)
    }
}

/// Removes user `k`'s weakest path: the precoder column of minimal norm,
/// ties going to the smallest `(m, i)`.
pub fn prune_one_path(state: &mut SelectionState, k: usize, budget: usize) -> Result<(usize, usize)> {
    let paths = state.path_count(k);
    if paths <= budget {
        return Err(Error::AtBudget { user: k, paths, budget });
    }
    let mut best: Option<(f64, usize, usize)> = None;
    for m in 0..state.num_bs() {
        let v = state.precoders.get(m, k);
        for c in 0..v.ncols() {
            let norm = v.column(c).norm();
            if best.is_none_or(|(b, _, _)| norm < b) {
                best = Some((norm, m, c));
            }
        }
    }
    let (_, m, c) = best.expect("user holds at least one path");
    let i = state.index_sets.get_mut(m, k).remove(c);
    let v = state.precoders.get(m, k).clone().remove_column(c);
    *state.precoders.get_mut(m, k) = v;
    Ok((m, i))
}

/// Table-I loop: optimize every precoder, prune each user above budget,
/// repeat until all users hold exactly `budget` paths.
pub fn select_dominating_paths(steering: &BsUserGrid<CMat>, budget: usize, noise_var: f64) -> Result<SelectionState> {
    select_dominating_paths_traced(steering, budget, noise_var, |_| Ok(()))
}

/// [`select_dominating_paths`] with a hook called after every optimization,
/// including the initial all-path one.
pub fn select_dominating_paths_traced(
    steering: &BsUserGrid<CMat>,
    budget: usize,
    noise_var: f64,
    mut observe: impl FnMut(&SelectionState) -> Result<()>,
) -> Result<SelectionState> {
    let solver = SlnrSolver::new(steering, noise_var)?;
    let (num_bs, num_users) = (steering.num_bs(), steering.num_users());
    let a0 = steering.get(0, 0);
    let mut state = SelectionState::all_paths(num_bs, num_users, a0.ncols(), a0.nrows());
    if budget == 0 || budget > num_bs * a0.ncols() {
        return Err(Error::InvalidConfig(format!(
            "path budget {budget} outside 1..={}",
            num_bs * a0.ncols()
        )));
    }
    loop {
        solver.optimize(&mut state)?;
        observe(&state)?;
        let mut pruned = false;
        for k in 0..num_users {
            if state.path_count(k) > budget {
                prune_one_path(&mut state, k, budget)?;
                pruned = true;
            }
        }
        if !pruned {
            return Ok(state);
        }
    }
}

/// Uniformly random `budget`-subset of the `M·P` paths per user, with the
/// SLNR precoder optimized on it.
pub fn random_path_selection<R: Rng + ?Sized>(
    rng: &mut R,
    solver: &SlnrSolver,
    steering: &BsUserGrid<CMat>,
    budget: usize,
) -> Result<SelectionState> {
    let (num_bs, num_users) = (steering.num_bs(), steering.num_users());
    let a0 = steering.get(0, 0);
    let p = a0.ncols();
    let mut sets = BsUserGrid::from_fn(num_bs, num_users, |_, _| Vec::new());
    for k in 0..num_users {
        let mut picks = rand::seq::index::sample(rng, num_bs * p, budget).into_vec();
        picks.sort_unstable();
        for flat in picks {
            sets.get_mut(flat / p, k).push(flat % p);
        }
    }
    let mut state = SelectionState::from_sets(sets, a0.nrows());
    solver.optimize(&mut state)?;
    Ok(state)
}

/// Path budget maximizing the summed lower bound `R^{ideal}_k(l) − ΔR_k(l)`
/// over one pruning run from `M·P` down to a single path.
///
/// The rate-gap term uses each user's own `δ_k(l)` and received SNR.
pub fn choose_path_budget(steering: &BsUserGrid<CMat>, bits: u32, noise_var: f64) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    select_dominating_paths_traced(steering, 1, noise_var, |state| {
        let level = state.path_count(0);
        let terms = rate::ideal_terms(steering, state);
        let mut score = 0.0;
        for (k, t) in terms.iter().enumerate() {
            let ideal = (1.0 + (t.signal + t.unselected) / (t.interference + noise_var)).log2();
            let gap = if level < 2 {
                0.0
            } else {
                let delta = bounds::delta_factor(&rate::effective_gain_matrix(steering, state, k))?.delta;
                let snr = (t.signal + t.unselected + t.interference) / noise_var;
                bounds::rate_gap_bound(level, bits, delta, snr)?
            };
            score += ideal - gap;
        }
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, level));
        }
        Ok(())
    })?;
    Ok(best.expect("at least one level is visited").1)
}

/// Budget in `1..=num_paths` maximizing the single-cell lower bound with
/// orthonormal steering columns (`δ = 1/l`).
pub fn choose_path_budget_single_cell(num_paths: usize, bits: u32, noise_var: f64, snr: f64) -> Result<usize> {
    let mut best = (f64::NEG_INFINITY, 1);
    for l in 1..=num_paths {
        let value = bounds::single_cell_rate_bound(l, bits, 1.0 / l as f64, noise_var, snr)?;
        if value > best.0 {
            best = (value, l);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemConfig;
    use crate::model::{draw_scenario, steering_matrix};
    use crate::rng::{complex_normal_vec, stream_rng};
    use approx::assert_relative_eq;

    fn small_steering(seed: u64, m: usize, k: usize, n: usize, p: usize) -> BsUserGrid<CMat> {
        let mut rng = stream_rng(seed, 0);
        BsUserGrid::from_fn(m, k, |_, _| {
            let th: Vec<f64> = (0..p).map(|_| (rng.random::<f64>() - 0.5) * 2.5).collect();
            steering_matrix(&th, n, 0.5)
        })
    }

    #[test]
    fn stacking_round_trip() {
        let steering = small_steering(1, 2, 2, 4, 3);
        let mut state = SelectionState::all_paths(2, 2, 3, 4);
        state.index_sets.get_mut(1, 0).remove(1);
        state = SelectionState::from_sets(state.index_sets, 4);
        let mut rng = stream_rng(2, 0);
        let x = complex_normal_vec(&mut rng, 4 * 5, 1.0);
        state.set_stacked(0, &x);
        assert_eq!(state.stacked(0), x);
        assert_eq!(state.precoders.get(1, 0).ncols(), 2);
        // μ^H x equals the trace sum
        let mu = state.stacked_steering(&steering, 0);
        let tr: Complex<f64> = (0..2)
            .map(|m| {
                let a = selected_columns(steering.get(m, 0), state.index_sets.get(m, 0));
                (a.adjoint() * state.precoders.get(m, 0)).trace()
            })
            .sum();
        assert!((mu.dotc(&x) - tr).norm() < 1e-12);
    }

    #[test]
    fn operand_traces() {
        let steering = small_steering(3, 2, 3, 4, 3);
        let state = SelectionState::all_paths(2, 3, 3, 4);
        let ops = build_slnr_operands(&steering, &state.index_sets, 0.1, 1).unwrap();
        let tr: f64 = ops.gammas[1].trace().re;
        assert_relative_eq!(tr, 2.0 * 3.0 * 4.0 * 3.0, epsilon = 1e-9);
        assert_relative_eq!(ops.mu.norm_squared(), 4.0 * 6.0, epsilon = 1e-9);
        assert!(crate::linalg::hermitian_defect(&ops.u) < 1e-10);
        assert!(crate::linalg::hermitian_defect(&ops.w) < 1e-10);
        let min_eig = hermitian_eig(&ops.w).0[0];
        assert!(min_eig >= 0.1 / 2.0 - 1e-12);
    }

    #[test]
    fn single_block_gamma() {
        let steering = small_steering(4, 1, 2, 4, 2);
        let sets = BsUserGrid::from_fn(1, 2, |_, _| vec![0]);
        let ops = build_slnr_operands(&steering, &sets, 1.0, 0).unwrap();
        let a = steering.get(0, 1);
        assert!((&ops.gammas[1] - a * a.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn matched_direction_without_leakage() {
        // a single user has no leakage; with Γ_kk removed the precoder is μ
        let steering = small_steering(5, 2, 1, 4, 2);
        let state = SelectionState::all_paths(2, 1, 2, 4);
        let mut ops = build_slnr_operands(&steering, &state.index_sets, 1.0, 0).unwrap();
        ops.u = &ops.mu * ops.mu.adjoint();
        let sol = slnr_precoder(&ops, 2).unwrap();
        let cos = ops.mu.dotc(&sol.x).norm() / (ops.mu.norm() * sol.x.norm());
        assert_relative_eq!(cos, 1.0, epsilon = 1e-10);
        assert_relative_eq!(sol.x.norm(), 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn structured_solver_matches_dense() {
        let steering = small_steering(6, 3, 3, 5, 3);
        let solver = SlnrSolver::new(&steering, 0.3).unwrap();
        let mut sets = BsUserGrid::from_fn(3, 3, |_, _| vec![0, 1, 2]);
        sets.get_mut(0, 1).clear();
        sets.get_mut(2, 1).retain(|&i| i != 1);
        for k in 0..3 {
            let ops = build_slnr_operands(&steering, &sets, 0.3, k).unwrap();
            let dense = slnr_precoder(&ops, 3).unwrap();
            let user_sets: Vec<&[usize]> = (0..3).map(|m| sets.get(m, k).as_slice()).collect();
            let fast = solver.solve(k, &user_sets).unwrap();
            assert_relative_eq!(fast.lambda, dense.lambda, max_relative = 1e-9);
            let align = dense.x.dotc(&fast.x).norm() / 3.0;
            assert_relative_eq!(align, 1.0, epsilon = 1e-8);
            let value = slnr_value(&fast.x, &ops.mu, &ops.gammas, k, 0.3);
            assert_relative_eq!(value, fast.lambda, max_relative = 1e-8);
        }
    }

    #[test]
    fn prune_picks_min_norm_then_lexicographic() {
        let mut state = SelectionState::all_paths(1, 1, 3, 1);
        state.set_stacked(0, &CVec::from_vec(vec![3.0, 1.0, 2.0].into_iter().map(Complex::from).collect()));
        assert_eq!(prune_one_path(&mut state, 0, 1).unwrap(), (0, 1));
        assert_eq!(state.index_sets.get(0, 0), &vec![0, 2]);

        let mut tie = SelectionState::all_paths(2, 1, 2, 1);
        tie.set_stacked(0, &CVec::from_vec([5.0, 1.0, 1.0, 4.0].into_iter().map(Complex::from).collect()));
        assert_eq!(prune_one_path(&mut tie, 0, 1).unwrap(), (0, 1));
        assert!(matches!(prune_one_path(&mut tie, 0, 3), Err(Error::AtBudget { .. })));
    }

    #[test]
    fn selection_counts() {
        let steering = small_steering(7, 2, 2, 4, 2);
        let mut rounds = 0;
        let state = select_dominating_paths_traced(&steering, 1, 0.5, |_| {
            rounds += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(rounds, 4);
        for k in 0..2 {
            assert_eq!(state.path_count(k), 1);
            assert_relative_eq!(state.stacked(k).norm(), 2f64.sqrt(), epsilon = 1e-10);
        }

        let mut calls = 0;
        let full = select_dominating_paths_traced(&steering, 4, 0.5, |_| {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 1);
        assert_eq!(full.path_count(0), 4);
    }

    #[test]
    fn default_selection_is_deterministic() {
        let cfg = SystemConfig::default();
        let steering = draw_scenario(&cfg, 11).steering();
        let a = select_dominating_paths(&steering, cfg.path_budget, 1.0).unwrap();
        let b = select_dominating_paths(&steering, cfg.path_budget, 1.0).unwrap();
        assert_eq!(a.index_sets, b.index_sets);
        for k in 0..cfg.num_users {
            assert_eq!(a.path_count(k), cfg.path_budget);
            assert_relative_eq!(a.stacked(k).norm(), 5f64.sqrt(), epsilon = 1e-10);
        }
    }

    #[test]
    fn random_selection_has_budget() {
        let steering = small_steering(8, 3, 2, 4, 3);
        let solver = SlnrSolver::new(&steering, 0.2).unwrap();
        let mut rng = stream_rng(9, 0);
        let state = random_path_selection(&mut rng, &solver, &steering, 4).unwrap();
        for k in 0..2 {
            assert_eq!(state.path_count(k), 4);
            for m in 0..3 {
                let s = state.index_sets.get(m, k);
                assert!(s.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn single_cell_budget_without_quantization_loss_is_full() {
        assert_eq!(choose_path_budget_single_cell(8, 4000, 1.0, 10.0).unwrap(), 8);
    }

    #[test]
    fn single_cell_budget_matches_scan() {
        let (noise, snr) = (1.0, 1.0 / 1.0);
        let chosen = choose_path_budget_single_cell(8, 6, noise, snr).unwrap();
        let scan: Vec<f64> = (1..=8usize)
            .map(|l| {
                let first = (1.0 + (l as f64 + 1.0) / noise).log2();
                if l == 1 {
                    return first;
                }
                let q = 2f64.powf(-6.0 / (l as f64 - 1.0));
                // δ = 1/l makes the distortion factor exactly one
                first - (1.0 + snr / (1.0 + snr) * q / (1.0 - q)).log2()
            })
            .collect();
        let argmax = scan
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
            .0
            + 1;
        assert_eq!(chosen, argmax);
    }

    #[test]
    fn general_budget_in_range() {
        let steering = small_steering(10, 2, 2, 4, 2);
        let l = choose_path_budget(&steering, 6, 0.5).unwrap();
        assert!((1..=4).contains(&l));
    }
}
