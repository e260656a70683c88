//! Spectral abscissa of the closed-loop pencil with normalized left and
//! right eigenvectors.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat};

use super::eig::{eigenvalues, finite_generalized_eigenvalues};
use crate::error::{Error, Result};
use crate::linalg::fro;
use crate::lti::ClosedLoop;

/// Rightmost finite eigenvalue and its eigenvector pair.
#[derive(Clone, Debug)]
pub struct SpectralResult {
    pub alpha: f64,
    pub lambda_peak: c64,
    /// Right eigenvector, unit 2-norm. Empty when vectors were not requested.
    pub right_vec: Vec<c64>,
    /// Left eigenvector scaled so that `w^H Ec v = 1`.
    pub left_vec: Vec<c64>,
    /// `alpha` minus the largest real part among the remaining finite
    /// eigenvalues (the conjugate partner of a complex peak is skipped).
    pub gap: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SpectralOptions {
    pub with_vectors: bool,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { with_vectors: true }
    }
}

/// Finite eigenvalues of `(Ac, Ec)`.
pub(crate) fn closed_loop_eigenvalues(cl: &ClosedLoop) -> Result<Vec<c64>> {
    if cl.ec_is_identity() {
        eigenvalues(cl.ac.as_ref())
    } else {
        finite_generalized_eigenvalues(cl.ac.as_ref(), cl.ec.as_ref())
    }
}

/// Index of the rightmost eigenvalue; ties prefer the upper half plane.
pub(crate) fn rightmost(eigs: &[c64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, z) in eigs.iter().enumerate() {
        match best {
            None => best = Some(i),
            Some(b) => {
                let zb = eigs[b];
                if z.re > zb.re || (z.re == zb.re && z.im > zb.im) {
                    best = Some(i);
                }
            }
        }
    }
    best
}

pub(crate) fn spectral_gap(eigs: &[c64], peak: usize) -> f64 {
    let lp = eigs[peak];
    let tol = 1e-10 * (1.0 + lp.norm());
    let mut conj_skipped = lp.im == 0.0;
    let mut second = f64::NEG_INFINITY;
    for (i, z) in eigs.iter().enumerate() {
        if i == peak {
            continue;
        }
        if !conj_skipped && (z - lp.conj()).norm() <= tol {
            conj_skipped = true;
            continue;
        }
        second = second.max(z.re);
    }
    lp.re - second
}

/// Spectral abscissa over the finite generalized eigenvalues.
pub fn spectral_abscissa(cl: &ClosedLoop, opts: SpectralOptions) -> Result<SpectralResult> {
    let eigs = closed_loop_eigenvalues(cl)?;
    spectral_from_eigs(cl, &eigs, opts)
}

pub(crate) fn spectral_from_eigs(cl: &ClosedLoop, eigs: &[c64], opts: SpectralOptions) -> Result<SpectralResult> {
    let peak = rightmost(eigs).ok_or(Error::NoFiniteEigenvalues)?;
    let lambda = eigs[peak];
    let gap = spectral_gap(eigs, peak);
    if !opts.with_vectors {
        return Ok(SpectralResult {
            alpha: lambda.re,
            lambda_peak: lambda,
            right_vec: Vec::new(),
            left_vec: Vec::new(),
            gap,
        });
    }
    let (lambda, v, w) = eigenvector_pair(cl, lambda)?;
    Ok(SpectralResult {
        alpha: lambda.re,
        lambda_peak: lambda,
        right_vec: v,
        left_vec: w,
        gap,
    })
}

fn norm2(x: &[c64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn e_times(cl: &ClosedLoop, x: &Mat<c64>, adjoint: bool) -> Mat<c64> {
    let n = cl.order();
    if cl.ec_is_identity() {
        return x.clone();
    }
    Mat::from_fn(n, 1, |i, _| {
        let mut acc = c64::new(0.0, 0.0);
        for j in 0..n {
            let e = if adjoint { cl.ec[(j, i)] } else { cl.ec[(i, j)] };
            acc += x[(j, 0)] * e;
        }
        acc
    })
}

/// Inverse iteration for the right and left eigenvectors of `lambda`,
/// followed by a Rayleigh-quotient update of `lambda`.
fn eigenvector_pair(cl: &ClosedLoop, lambda: c64) -> Result<(c64, Vec<c64>, Vec<c64>)> {
    let n = cl.order();
    let scale = fro(cl.ac.as_ref()) + lambda.norm() * fro(cl.ec.as_ref());
    let start = Mat::from_fn(n, 1, |i, _| c64::new(1.0 + 0.37 * ((i * 7919) % 13) as f64 / 13.0, 0.0));
    let mut last_err = Error::EigenFailure;
    for attempt in 0..4 {
        let shift = if attempt == 0 {
            lambda
        } else {
            lambda + c64::new(scale.max(1.0) * f64::EPSILON * 10f64.powi(2 * attempt), 0.0)
        };
        // M = Ac - shift Ec
        let m = Mat::from_fn(n, n, |i, j| c64::new(cl.ac[(i, j)], 0.0) - shift * cl.ec[(i, j)]);
        let lu = m.partial_piv_lu();
        let mut v = start.clone();
        let mut w = start.clone();
        let mut ok = true;
        for _ in 0..3 {
            let rhs = e_times(cl, &v, false);
            v = lu.solve(&rhs);
            let rhs = e_times(cl, &w, true);
            w = lu.solve_adjoint(&rhs);
            let (nv, nw) = (norm2(v.col_as_slice(0)), norm2(w.col_as_slice(0)));
            if !(nv.is_finite() && nw.is_finite() && nv > 0.0 && nw > 0.0) {
                ok = false;
                break;
            }
            v = v * faer::Scale(c64::new(1.0 / nv, 0.0));
            w = w * faer::Scale(c64::new(1.0 / nw, 0.0));
        }
        if !ok {
            continue;
        }
        let ev = e_times(cl, &v, false);
        let s: c64 = (0..n).map(|i| w[(i, 0)].conj() * ev[(i, 0)]).sum();
        let ec_norm = if cl.ec_is_identity() { (n as f64).sqrt() } else { fro(cl.ec.as_ref()) };
        if s.norm() <= 1e-10 * ec_norm.max(1.0) {
            last_err = Error::Defective(s.norm());
            continue;
        }
        let av = Mat::from_fn(n, 1, |i, _| {
            let mut acc = c64::new(0.0, 0.0);
            for j in 0..n {
                acc += v[(j, 0)] * cl.ac[(i, j)];
            }
            acc
        });
        let num: c64 = (0..n).map(|i| w[(i, 0)].conj() * av[(i, 0)]).sum();
        let refined = num / s;
        let lam = if (refined - lambda).norm() <= 1e-6 * (1.0 + lambda.norm()) { refined } else { lambda };
        let inv = s.conj().inv();
        let w: Vec<c64> = (0..n).map(|i| w[(i, 0)] * inv).collect();
        let v: Vec<c64> = (0..n).map(|i| v[(i, 0)]).collect();
        return Ok((lam, v, w));
    }
    Err(last_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(d: &[f64]) -> Mat<f64> {
        Mat::from_fn(d.len(), d.len(), |i, j| if i == j { d[i] } else { 0.0 })
    }

    fn loop_of(ec: Mat<f64>, ac: Mat<f64>) -> ClosedLoop {
        let n = ac.nrows();
        ClosedLoop::from_matrices(ec, ac, Mat::zeros(n, 1), Mat::zeros(1, n), Mat::zeros(1, 1)).unwrap()
    }

    #[test]
    fn diagonal_abscissa() {
        let r = spectral_abscissa(&loop_of(diag(&[1.0, 1.0]), diag(&[-1.0, -2.0])), Default::default()).unwrap();
        assert!((r.alpha + 1.0).abs() < 1e-14);
        assert!((r.lambda_peak - c64::new(-1.0, 0.0)).norm() < 1e-14);
        assert!((r.gap - 1.0).abs() < 1e-12);
        // right and left vectors are multiples of e1
        assert!(r.right_vec[1].norm() < 1e-14 && r.left_vec[1].norm() < 1e-14);
        assert!(r.right_vec.iter().chain(&r.left_vec).all(|z| z.im == 0.0));
    }

    #[test]
    fn imaginary_pair_has_zero_abscissa() {
        let a = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => 1.0,
            (1, 0) => -1.0,
            _ => 0.0,
        });
        let r = spectral_abscissa(&loop_of(diag(&[1.0, 1.0]), a), Default::default()).unwrap();
        assert!(r.alpha.abs() < 1e-14);
        assert!(r.lambda_peak.im > 0.0);
    }

    #[test]
    fn dae_drops_infinite_eigenvalue() {
        let r = spectral_abscissa(&loop_of(diag(&[1.0, 0.0]), diag(&[-3.0, 1.0])), Default::default()).unwrap();
        assert!((r.alpha + 3.0).abs() < 1e-13);
        let ev: c64 = r.left_vec.iter().zip(&r.right_vec).enumerate().map(|(i, (w, v))| w.conj() * v * [1.0, 0.0][i]).sum();
        assert!((ev - c64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn nilpotent_pencil_is_an_error() {
        let e = Mat::from_fn(2, 2, |i, j| if i == 0 && j == 1 { 1.0 } else { 0.0 });
        let cl = loop_of(e, diag(&[1.0, 1.0]));
        assert!(matches!(spectral_abscissa(&cl, Default::default()), Err(Error::NoFiniteEigenvalues)));
    }
}
