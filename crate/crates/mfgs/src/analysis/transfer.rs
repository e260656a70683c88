//! Transfer-function evaluation `Gc(s) = Cc (s Ec - Ac)^{-1} Bc + Dc`.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{c64, Mat, MatRef};

use super::eig::Hessenberg;
use crate::error::{Error, Result};
use crate::linalg::{fro, to_complex, ShiftedHessenberg};
use crate::lti::ClosedLoop;

/// Evaluate the transfer matrix at a complex frequency with one LU
/// factorization of `s Ec - Ac`.
pub fn transfer_eval(cl: &ClosedLoop, s: c64) -> Result<Mat<c64>> {
    let lu = shifted_lu(cl.ec.as_ref(), cl.ac.as_ref(), s)?;
    let x = lu.solve(to_complex(cl.bc.as_ref()));
    Ok(to_complex(cl.cc.as_ref()) * x + to_complex(cl.dc.as_ref()))
}

/// LU of `s E - A`, rejecting numerically singular pivots.
pub(crate) fn shifted_lu(e: MatRef<'_, f64>, a: MatRef<'_, f64>, s: c64) -> Result<PartialPivLu<c64>> {
    let n = a.nrows();
    let m = Mat::from_fn(n, n, |i, j| s * e[(i, j)] - c64::new(a[(i, j)], 0.0));
    let lu = m.partial_piv_lu();
    let tol = (n as f64) * f64::EPSILON * (fro(a) + s.norm() * fro(e)) * 1e-3;
    let u = lu.U();
    for i in 0..n {
        let d = u[(i, i)];
        if !(d.norm() > tol) {
            return Err(Error::SingularShift { re: s.re, im: s.im });
        }
    }
    Ok(lu)
}

/// Singular triple of `Gc(i omega)`.
#[derive(Clone, Debug)]
pub(crate) struct SvdPoint {
    pub sigma: f64,
    pub sigma2: f64,
    pub u: Vec<c64>,
    pub v: Vec<c64>,
}

enum Kind {
    Hess { h: ShiftedHessenberg, bt: Mat<c64>, ct: Mat<c64> },
    Dense { e: Mat<f64>, a: Mat<f64>, b: Mat<c64>, c: Mat<c64> },
}

/// Precomputed data for repeated frequency-response evaluations on the
/// imaginary axis.
pub(crate) struct FreqEvaluator {
    kind: Kind,
    dc: Mat<c64>,
}

impl FreqEvaluator {
    pub fn new(cl: &ClosedLoop, hess: Option<&Hessenberg>) -> Self {
        let dc = to_complex(cl.dc.as_ref());
        let kind = match hess {
            Some(hs) if cl.ec_is_identity() => {
                let bt = hs.q.transpose() * &cl.bc;
                let ct = &cl.cc * &hs.q;
                Kind::Hess {
                    h: ShiftedHessenberg::new(hs.h.as_ref()),
                    bt: to_complex(bt.as_ref()),
                    ct: to_complex(ct.as_ref()),
                }
            }
            _ => Kind::Dense {
                e: cl.ec.clone(),
                a: cl.ac.clone(),
                b: to_complex(cl.bc.as_ref()),
                c: to_complex(cl.cc.as_ref()),
            },
        };
        Self { kind, dc }
    }

    /// `Gc(i omega)`, or `None` when the shifted pencil is singular.
    pub fn eval(&self, omega: f64) -> Option<Mat<c64>> {
        let s = c64::new(0.0, omega);
        let x = match &self.kind {
            Kind::Hess { h, bt, ct } => {
                let x = h.solve(s, bt.as_ref())?;
                ct * x
            }
            Kind::Dense { e, a, b, c } => {
                let lu = shifted_lu(e.as_ref(), a.as_ref(), s).ok()?;
                c * lu.solve(b)
            }
        };
        let g = x + &self.dc;
        for j in 0..g.ncols() {
            for i in 0..g.nrows() {
                if !g[(i, j)].re.is_finite() || !g[(i, j)].im.is_finite() {
                    return None;
                }
            }
        }
        Some(g)
    }

    /// Largest singular value of `Gc(i omega)`; `+inf` on a pole.
    pub fn sigma_max(&self, omega: f64) -> f64 {
        match self.eval(omega) {
            Some(g) => sigma_max(g.as_ref()),
            None => f64::INFINITY,
        }
    }

    pub fn svd_point(&self, omega: f64) -> Option<SvdPoint> {
        let g = if omega.is_infinite() { self.dc.clone() } else { self.eval(omega)? };
        svd_point(g.as_ref())
    }

    pub fn sigma_dc(&self) -> f64 {
        sigma_max(self.dc.as_ref())
    }
}

pub(crate) fn sigma_max(g: MatRef<'_, c64>) -> f64 {
    if g.nrows() == 0 || g.ncols() == 0 {
        return 0.0;
    }
    match g.singular_values() {
        Ok(s) => s.first().copied().unwrap_or(0.0),
        Err(_) => f64::NAN,
    }
}

pub(crate) fn svd_point(g: MatRef<'_, c64>) -> Option<SvdPoint> {
    let (p, m) = (g.nrows(), g.ncols());
    if p == 0 || m == 0 {
        return Some(SvdPoint {
            sigma: 0.0,
            sigma2: 0.0,
            u: vec![c64::new(0.0, 0.0); p],
            v: vec![c64::new(0.0, 0.0); m],
        });
    }
    let svd = g.svd().ok()?;
    let s = svd.S().column_vector();
    let sigma = s[0].re;
    let sigma2 = if s.nrows() > 1 { s[1].re } else { 0.0 };
    let u = (0..p).map(|i| svd.U()[(i, 0)]).collect();
    let v = (0..m).map(|i| svd.V()[(i, 0)]).collect();
    Some(SvdPoint { sigma, sigma2, u, v })
}
