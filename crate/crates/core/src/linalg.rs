//! Dense complex linear-algebra helpers shared by the estimators.

use nalgebra::{Complex, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::complex_normal;
use crate::{CMat, CVec};

/// Frobenius norm squared.
pub fn frobenius_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Largest entrywise deviation of `m` from its conjugate transpose.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..=i {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted ascending.
///
/// Only the lower triangle is trusted; the matrix is symmetrized first.
pub fn hermitian_eig(m: &CMat) -> (Vec<f64>, CMat) {
    let sym = (m + m.adjoint()) * Complex::from(0.5);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn largest_eigenvalue(m: &CMat) -> f64 {
    let (values, _) = hermitian_eig(m);
    values.last().copied().unwrap_or(0.0)
}

/// Top eigenpair of the pencil `U u = λ W u` for Hermitian `U` and Hermitian
/// positive definite `W`, by Cholesky congruence and a dense Hermitian solve.
pub fn generalized_top_eig_dense(u: &CMat, w: &CMat) -> Result<(f64, CVec)> {
    let n = u.nrows();
    if w.nrows() != n || u.ncols() != n || w.ncols() != n {
        return Err(Error::Dimension("pencil operands must be square and equal-sized".into()));
    }
    let chol = w
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("W in generalized eigenproblem"))?;
    let l = chol.l();
    // C = L^{-1} U L^{-H}
    let left = l
        .solve_lower_triangular(u)
        .ok_or(Error::NotPositiveDefinite("singular Cholesky factor"))?;
    let c = l
        .solve_lower_triangular(&left.adjoint())
        .ok_or(Error::NotPositiveDefinite("singular Cholesky factor"))?
        .adjoint();
    let (values, vectors) = hermitian_eig(&c);
    let lambda = values[n - 1];
    let y = vectors.column(n - 1).into_owned();
    let x = l
        .adjoint()
        .solve_upper_triangular(&y)
        .ok_or(Error::NotPositiveDefinite("singular Cholesky factor"))?;
    Ok((lambda, x))
}

/// Top eigenpair of `diag(d) + z z^H` by the secular equation.
///
/// Returns the eigenvalue and a unit eigenvector. `d` may be unsorted.
pub fn rank_one_update_top(d: &[f64], z: &CVec) -> (f64, CVec) {
    let n = d.len();
    assert_eq!(n, z.len());
    let (arg_max, d_max) = d
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let weights: Vec<f64> = z.iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = weights.iter().sum();
    let scale = d_max.abs().max(total).max(f64::MIN_POSITIVE);

    let unit = |i: usize| {
        let mut e = CVec::zeros(n);
        e[i] = Complex::from(1.0);
        e
    };
    if total <= f64::EPSILON * f64::EPSILON * scale {
        return (d_max, unit(arg_max));
    }

    // f(λ) = 1 - Σ w_i/(λ - d_i) is increasing on (d_max, ∞) and f(d_max + total) ≥ 0.
    let secular = |lambda: f64| {
        1.0 - weights
            .iter()
            .zip(d)
            .map(|(&w, &di)| if w == 0.0 { 0.0 } else { w / (lambda - di) })
            .sum::<f64>()
    };
    let mut lo = d_max;
    let mut hi = d_max + total;
    let probe = d_max + 4.0 * f64::EPSILON * scale;
    if secular(probe) >= 0.0 {
        // the rank-one term has (numerically) no weight on the top eigenspace of D
        return (d_max, unit(arg_max));
    }
    lo = lo.max(probe);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if secular(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let mut v = CVec::from_fn(n, |i, _| z[i] / Complex::from(lambda - d[i]));
    let norm = v.norm();
    v /= Complex::from(norm);
    (lambda, v)
}

/// Block-diagonal matrix from square or rectangular blocks.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// Haar-like random unitary from the QR factor of a complex Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| complex_normal(rng, 1.0));
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    // fix column phases so the distribution does not depend on the QR sign convention
    let mut q = q;
    for c in 0..n {
        let d = r[(c, c)];
        if d.norm() > 0.0 {
            let phase = d / Complex::from(d.norm());
            let mut col = q.column_mut(c);
            col *= phase;
        }
    }
    q
}

/// Matrix with orthonormal columns spanning a random `cols`-dimensional subspace.
pub fn random_orthonormal_columns<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    random_unitary(rng, rows).columns(0, cols).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn random_hermitian_psd(rng: &mut impl Rng, n: usize, rank: usize) -> CMat {
        let a = CMat::from_fn(n, rank, |_, _| complex_normal(rng, 1.0));
        &a * a.adjoint()
    }

    #[test]
    fn rank_one_update_matches_dense_eigen() {
        let mut rng = stream_rng(11, 0);
        for trial in 0..20 {
            let n = 3 + trial % 7;
            let d: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 5.0).collect();
            let z = crate::rng::complex_normal_vec(&mut rng, n, 1.0);
            let (lambda, v) = rank_one_update_top(&d, &z);
            let dense = CMat::from_diagonal(&CVec::from_fn(n, |i, _| Complex::from(d[i])))
                + &z * z.adjoint();
            let expected = largest_eigenvalue(&dense);
            assert!((lambda - expected).abs() <= 1e-10 * expected, "{lambda} vs {expected}");
            let residual = (&dense * &v - &v * Complex::from(lambda)).norm();
            assert!(residual <= 1e-9 * expected);
        }
    }

    #[test]
    fn rank_one_update_deflated_top() {
        // the largest diagonal entry carries no rank-one weight and dominates
        let d = [10.0, 1.0, 0.5];
        let z = CVec::from_vec(vec![Complex::from(0.0), Complex::new(0.3, 0.1), Complex::from(0.2)]);
        let (lambda, v) = rank_one_update_top(&d, &z);
        assert_eq!(lambda, 10.0);
        assert!((v[0].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dense_generalized_solver_residual() {
        let mut rng = stream_rng(5, 1);
        let u = random_hermitian_psd(&mut rng, 6, 2);
        let w = random_hermitian_psd(&mut rng, 6, 6) + CMat::identity(6, 6);
        let (lambda, x) = generalized_top_eig_dense(&u, &w).unwrap();
        let ux = &u * &x;
        let residual = (&ux - (&w * &x) * Complex::from(lambda)).norm() / ux.norm();
        assert!(residual < 1e-10);
    }

    #[test]
    fn unitary_is_unitary() {
        let mut rng = stream_rng(3, 0);
        let q = random_unitary(&mut rng, 7);
        let err = (&q * q.adjoint() - CMat::identity(7, 7)).norm();
        assert!(err < 1e-13);
    }
}
