//! Dense complex linear algebra shared by the rest of the crate.
//!
//! Every eigenvalue computation goes through the real symmetric embedding
//! `[[Re X, -Im X], [Im X, Re X]]` of a Hermitian matrix, so only a real
//! symmetric eigensolver is needed. Each eigenvalue of `X` appears twice in
//! the embedding.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;

/// Maximum entry-wise deviation `|x_ij - conj(x_ji)|` tolerated for inputs
/// declared Hermitian (scaled by `max(1, max|x_ij|)`).
pub const HERMITIAN_TOL: f64 = 1e-12;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn max_abs(x: &CMat) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.norm()))
}

/// Largest `|x_ij - conj(x_ji)|`; `None` for non-square input.
pub fn hermitian_deviation(x: &CMat) -> Option<f64> {
    if !x.is_square() {
        return None;
    }
    let n = x.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((x[(i, j)] - x[(j, i)].conj()).norm());
        }
    }
    Some(dev)
}

/// `(X + X^H) / 2`.
pub fn symmetrize(x: &CMat) -> CMat {
    (x + x.adjoint()).scale(0.5)
}

fn check_hermitian(x: &CMat, what: &str) -> Result<()> {
    let dev = hermitian_deviation(x).ok_or_else(|| {
        Error::contract(format!(
            "{what}: expected a square matrix, got {}x{}",
            x.nrows(),
            x.ncols()
        ))
    })?;
    let tol = HERMITIAN_TOL * max_abs(x).max(1.0);
    if dev > tol {
        return Err(Error::contract(format!(
            "{what}: matrix is not Hermitian (deviation {dev:.3e} > {tol:.3e})"
        )));
    }
    Ok(())
}

/// Real symmetric `2n x 2n` embedding of a Hermitian `n x n` matrix.
///
/// The input is symmetrized before embedding so solver roundoff below the
/// Hermitian tolerance does not leak into the result.
pub fn hermitian_real_embedding(x: &CMat) -> Result<RMat> {
    check_hermitian(x, "hermitian_real_embedding")?;
    Ok(embed_unchecked(&symmetrize(x)))
}

pub(crate) fn embed_unchecked(x: &CMat) -> RMat {
    let n = x.nrows();
    let mut out = RMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = x[(i, j)];
            out[(i, j)] = v.re;
            out[(i + n, j + n)] = v.re;
            out[(i, j + n)] = -v.im;
            out[(i + n, j)] = v.im;
        }
    }
    out
}

/// Eigenvalues of a real symmetric matrix, sorted descending.
pub fn symmetric_eigenvalues(x: &RMat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(x.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Eigenvalues of a Hermitian matrix, sorted descending (each listed once).
pub fn hermitian_eigenvalues(x: &CMat) -> Result<Vec<f64>> {
    let emb = hermitian_real_embedding(x)?;
    let ev = symmetric_eigenvalues(&emb);
    Ok(ev.into_iter().step_by(2).collect())
}

pub fn min_eigenvalue(x: &CMat) -> Result<f64> {
    Ok(*hermitian_eigenvalues(x)?.last().unwrap_or(&0.0))
}

/// PSD test with an absolute eigenvalue tolerance.
pub fn is_psd(x: &CMat, tol: f64) -> Result<bool> {
    Ok(min_eigenvalue(x)? >= -tol)
}

/// Tolerance on negative eigenvalues used by [`rank_one_ratio`] and
/// [`principal_eigenpair`], relative to the largest eigenvalue.
pub const PSD_REL_TOL: f64 = 1e-8;

/// `lambda_2 / lambda_1` for a Hermitian PSD matrix (0 when `lambda_1 = 0`).
pub fn rank_one_ratio(x: &CMat) -> Result<f64> {
    let ev = hermitian_eigenvalues(x)?;
    let l1 = ev.first().copied().unwrap_or(0.0);
    let lmin = ev.last().copied().unwrap_or(0.0);
    let scale = l1.abs().max(lmin.abs());
    if lmin < -PSD_REL_TOL * scale {
        return Err(Error::contract(format!(
            "rank_one_ratio: matrix is indefinite (lambda_min = {lmin:.3e}, lambda_max = {l1:.3e})"
        )));
    }
    if l1 <= 0.0 {
        return Ok(0.0);
    }
    let l2 = ev.get(1).copied().unwrap_or(0.0).max(0.0);
    Ok(l2 / l1)
}

/// Largest eigenvalue and a unit eigenvector of a Hermitian matrix.
pub fn principal_eigenpair(x: &CMat) -> Result<(f64, CVec)> {
    check_hermitian(x, "principal_eigenpair")?;
    let n = x.nrows();
    let emb = embed_unchecked(&symmetrize(x));
    let eig = SymmetricEigen::new(emb);
    let (idx, &lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::contract("principal_eigenpair: empty matrix"))?;
    // Any vector of the doubled eigenspace maps to a complex eigenvector.
    let col = eig.eigenvectors.column(idx);
    let mut v = CVec::from_fn(n, |i, _| c(col[i], col[i + n]));
    let norm = v.norm();
    if norm > 0.0 {
        v.unscale_mut(norm);
    }
    Ok((lambda, v))
}

/// Real Frobenius inner product `Re Tr(A^H B)`.
pub fn frobenius_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn frobenius_norm_sq(a: &CMat) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}

pub fn diag(v: &CVec) -> CMat {
    CMat::from_diagonal(v)
}

/// `v v^H`.
pub fn outer(v: &CVec) -> CMat {
    v * v.adjoint()
}

pub fn trace_re(a: &CMat) -> f64 {
    a.diagonal().iter().map(|v| v.re).sum()
}

/// Hermitian quadratic form `x^H A x` (real part).
pub fn quad_form(a: &CMat, x: &CVec) -> f64 {
    (x.adjoint() * a * x)[(0, 0)].re
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_embeds_to_identity() {
        let e = hermitian_real_embedding(&CMat::identity(2, 2)).unwrap();
        assert_eq!(e, RMat::identity(4, 4));
    }

    #[test]
    fn pauli_y_embedding_has_doubled_spectrum() {
        let x = CMat::from_row_slice(2, 2, &[ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO]);
        let ev = symmetric_eigenvalues(&hermitian_real_embedding(&x).unwrap());
        let expected = [1.0, 1.0, -1.0, -1.0];
        for (a, b) in ev.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{ev:?}");
        }
    }

    #[test]
    fn psd_check_flips_past_lambda_min() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_psd(&mut rng, 3);
        let lmin = min_eigenvalue(&x).unwrap();
        assert!(is_psd(&x, 1e-12).unwrap());
        let shifted = &x - CMat::identity(3, 3).scale(lmin * 1.01 + 1e-9);
        assert!(!is_psd(&shifted, 0.0).unwrap());
        // Eigenvalue oracle: the embedding's minimum equals X's.
        let emb_min = *symmetric_eigenvalues(&hermitian_real_embedding(&shifted).unwrap())
            .last()
            .unwrap();
        assert!((emb_min - min_eigenvalue(&shifted).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_square_and_non_hermitian() {
        assert!(matches!(
            hermitian_real_embedding(&CMat::zeros(2, 3)),
            Err(Error::Contract(_))
        ));
        let x = CMat::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(matches!(hermitian_real_embedding(&x), Err(Error::Contract(_))));
    }

    #[test]
    fn rank_one_ratio_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_cvec(&mut rng, 4);
        assert!(rank_one_ratio(&outer(&v)).unwrap() < 1e-12);
        assert!((rank_one_ratio(&CMat::identity(2, 2)).unwrap() - 1.0).abs() < 1e-12);
        let d = diag(&CVec::from_vec(vec![c(4.0, 0.0), c(1.0, 0.0), ZERO]));
        assert!((rank_one_ratio(&d).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(rank_one_ratio(&CMat::zeros(3, 3)).unwrap(), 0.0);
        let indefinite = diag(&CVec::from_vec(vec![ONE, c(-1.0, 0.0)]));
        assert!(rank_one_ratio(&indefinite).is_err());
    }

    #[test]
    fn principal_pair_recovers_rank_one_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = random_cvec(&mut rng, 4);
        let (lambda, u) = principal_eigenpair(&outer(&w)).unwrap();
        assert!((lambda - w.norm_squared()).abs() < 1e-10);
        let rebuilt = u.scale(lambda.sqrt());
        // Equal up to a global phase.
        let overlap = (rebuilt.adjoint() * &w)[(0, 0)].norm();
        assert!((overlap - w.norm_squared()).abs() < 1e-10);
    }

    #[test]
    fn psd_sign_agreement_over_random_hermitians() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for i in 0..1000 {
            let n = 1 + i % 5;
            let x = random_hermitian(&mut rng, n);
            let direct = SymmetricEigen::new(embed_unchecked(&x)).eigenvalues.min();
            // Independent route: nalgebra's complex Hermitian eigensolver.
            let lmin = SymmetricEigen::new(x.clone()).eigenvalues.min();
            assert!((direct - lmin).abs() < 1e-10);
            assert_eq!(direct >= 0.0, lmin >= 0.0);
        }
    }

    fn arb_hermitian(n: usize) -> impl Strategy<Value = CMat> {
        proptest::collection::vec(-5.0f64..5.0, 2 * n * n).prop_map(move |v| {
            let m = CMat::from_fn(n, n, |i, j| c(v[2 * (i * n + j)], v[2 * (i * n + j) + 1]));
            symmetrize(&m)
        })
    }

    proptest! {
        #[test]
        fn embedding_is_linear(x in arb_hermitian(3), y in arb_hermitian(3), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let lhs = hermitian_real_embedding(&(x.scale(a) + y.scale(b))).unwrap();
            let rhs = hermitian_real_embedding(&x).unwrap() * a + hermitian_real_embedding(&y).unwrap() * b;
            prop_assert!((lhs - rhs).abs().max() < 1e-12);
        }

        #[test]
        fn embedding_doubles_trace(x in arb_hermitian(4)) {
            let e = hermitian_real_embedding(&x).unwrap();
            prop_assert!((e.trace() - 2.0 * trace_re(&x)).abs() < 1e-12);
        }
    }
}
