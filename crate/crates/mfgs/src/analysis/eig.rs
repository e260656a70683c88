//! Eigenvalue kernels: Hessenberg reduction and (generalized) eigenvalues.

use faer::dyn_stack::{MemBuffer, MemStack, StackReq};
use faer::linalg::evd::hessenberg;
use faer::linalg::gevd::{self, ComputeEigenvectors};
use faer::{c64, Conj, Mat, MatRef, Par};

use crate::error::{Error, Result};
use crate::linalg::fro;

/// Orthogonal Hessenberg reduction `A = Q H Q^T`.
pub(crate) struct Hessenberg {
    pub h: Mat<f64>,
    pub q: Mat<f64>,
}

pub(crate) fn hessenberg_reduce(a: MatRef<'_, f64>) -> Hessenberg {
    let n = a.nrows();
    if n <= 2 {
        return Hessenberg {
            h: a.to_owned(),
            q: Mat::identity(n, n),
        };
    }
    let par = Par::Seq;
    let bs = faer::linalg::qr::no_pivoting::factor::recommended_block_size::<f64>(n - 1, n - 1);
    let req = StackReq::any_of(&[
        hessenberg::hessenberg_in_place_scratch::<f64>(n, bs, par, Default::default()),
        faer::linalg::householder::apply_block_householder_sequence_on_the_right_in_place_scratch::<f64>(n - 1, bs, n - 1),
    ]);
    let mut mem = MemBuffer::new(req);
    let stack = MemStack::new(&mut mem);
    let mut h = a.to_owned();
    let mut hh = Mat::<f64>::zeros(bs, n - 1);
    hessenberg::hessenberg_in_place(h.as_mut(), hh.as_mut(), par, stack, Default::default());
    let mut q = Mat::<f64>::identity(n, n);
    faer::linalg::householder::apply_block_householder_sequence_on_the_right_in_place_with_conj(
        h.as_ref().submatrix(1, 0, n - 1, n - 1),
        hh.as_ref(),
        Conj::No,
        q.as_mut().submatrix_mut(1, 1, n - 1, n - 1),
        par,
        stack,
    );
    for j in 0..n {
        for i in j + 2..n {
            h[(i, j)] = 0.0;
        }
    }
    Hessenberg { h, q }
}

/// Eigenvalues of a real square matrix.
pub(crate) fn eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<c64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if !a[(i, j)].is_finite() {
                return Err(Error::EigenFailure);
            }
        }
    }
    let ev = a.eigenvalues().map_err(|_| Error::EigenFailure)?;
    if ev.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigenFailure);
    }
    Ok(ev)
}

/// Finite generalized eigenvalues of the pencil `(A, E)`.
///
/// A QZ pair `(alpha, beta)` counts as infinite when
/// `|beta| <= n eps (||A||_F + ||E||_F)`.
pub(crate) fn finite_generalized_eigenvalues(a: MatRef<'_, f64>, e: MatRef<'_, f64>) -> Result<Vec<c64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let par = Par::Seq;
    let req = gevd::gevd_scratch::<f64>(n, ComputeEigenvectors::No, ComputeEigenvectors::No, par, Default::default());
    let mut mem = MemBuffer::new(req);
    let stack = MemStack::new(&mut mem);
    let mut aa = a.to_owned();
    let mut ee = e.to_owned();
    let mut s_re = faer::diag::Diag::<f64>::zeros(n);
    let mut s_im = faer::diag::Diag::<f64>::zeros(n);
    let mut beta = faer::diag::Diag::<f64>::zeros(n);
    gevd::gevd_real(
        aa.as_mut(),
        ee.as_mut(),
        s_re.as_mut(),
        s_im.as_mut(),
        beta.as_mut(),
        None,
        None,
        par,
        stack,
        Default::default(),
    )
    .map_err(|_| Error::EigenFailure)?;
    let thresh = n as f64 * f64::EPSILON * (fro(a) + fro(e));
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        let b = beta[i];
        let (re, im) = (s_re[i], s_im[i]);
        if !re.is_finite() || !im.is_finite() || !b.is_finite() {
            return Err(Error::EigenFailure);
        }
        // faer can return a second pair member that is not the conjugate of
        // the first; the first one agrees with the standard-form spectrum
        let pair = im != 0.0 && i + 1 < n && s_im[i + 1] != 0.0 && s_im[i + 1].signum() != im.signum();
        if b.abs() > thresh {
            let z = c64::new(re / b, im / b);
            out.push(z);
            if pair {
                out.push(z.conj());
            }
        }
        i += if pair { 2 } else { 1 };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hessenberg_reconstructs() {
        let n = 9;
        let a = Mat::from_fn(n, n, |i, j| ((i * 13 + j * 7) % 17) as f64 / 17.0 - 0.4);
        let Hessenberg { h, q } = hessenberg_reduce(a.as_ref());
        let back = &q * &h * q.transpose();
        for i in 0..n {
            for j in 0..n {
                assert!((back[(i, j)] - a[(i, j)]).abs() < 1e-12);
                if i > j + 1 {
                    assert_eq!(h[(i, j)], 0.0);
                }
            }
        }
        let qtq = q.transpose() * &q;
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[(i, j)] - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn infinite_eigenvalue_is_dropped() {
        let e = Mat::from_fn(2, 2, |i, j| if i == 0 && j == 0 { 1.0 } else { 0.0 });
        let a = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => -3.0,
            (1, 1) => 1.0,
            _ => 0.0,
        });
        let ev = finite_generalized_eigenvalues(a.as_ref(), e.as_ref()).unwrap();
        assert_eq!(ev.len(), 1);
        assert!((ev[0] - c64::new(-3.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn generalized_spectrum_matches_standard_form() {
        use faer::linalg::solvers::DenseSolveCore;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let n = 18;
        let e = Mat::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 4.0 / 6.0,
            1 => 1.0 / 6.0,
            _ => 0.0,
        });
        let einv = e.partial_piv_lu().inverse();
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let a = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let mut gen = finite_generalized_eigenvalues(a.as_ref(), e.as_ref()).unwrap();
            let mut std = eigenvalues((&einv * &a).as_ref()).unwrap();
            let key = |z: &c64| (z.re, z.im);
            gen.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
            std.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
            assert_eq!(gen.len(), n);
            for (x, y) in gen.iter().zip(&std) {
                worst = worst.max((x - y).norm());
            }
        }
        assert!(worst < 1e-9, "{worst}");
    }
}
