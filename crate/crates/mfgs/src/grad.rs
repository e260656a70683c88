//! Gradients of the H-infinity objective and of the spectral abscissa with
//! respect to the controller design vector, plus a finite-difference oracle.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, MatRef};

use crate::analysis::{shifted_lu, NormResult, SpectralResult};
use crate::error::{Error, Result};
use crate::lti::{assemble_closed_loop, Controller, DescriptorPlant};

/// Gradient blocks with respect to `(AK, BK, CK, DK)`.
#[derive(Clone, Debug)]
pub struct ControllerGradient {
    pub d_ak: Mat<f64>,
    pub d_bk: Mat<f64>,
    pub d_ck: Mat<f64>,
    pub d_dk: Mat<f64>,
    /// Column-major packing of the blocks; `d_dk` is omitted when DK is
    /// fixed at zero.
    pub as_vector: Vec<f64>,
}

impl ControllerGradient {
    fn pack(d_ak: Mat<f64>, d_bk: Mat<f64>, d_ck: Mat<f64>, d_dk: Mat<f64>, dk_fixed_zero: bool) -> Self {
        let mut v = Vec::new();
        let mut push = |m: &Mat<f64>| {
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    v.push(m[(i, j)]);
                }
            }
        };
        push(&d_ak);
        push(&d_bk);
        push(&d_ck);
        if !dk_fixed_zero {
            push(&d_dk);
        }
        Self {
            d_ak,
            d_bk,
            d_ck,
            d_dk,
            as_vector: v,
        }
    }
}

/// Closed-loop gradients in rank-one form:
/// `dAc = a b^H`, `dBc = a v^H`, `dCc = u b^H`, `dDc = u v^H`.
struct RankOne<'a> {
    a: &'a [c64],
    b: &'a [c64],
    u: &'a [c64],
    v: &'a [c64],
    /// Include the `Bc`, `Cc`, `Dc` terms (false for the spectral abscissa).
    io_terms: bool,
}

fn zc() -> c64 {
    c64::new(0.0, 0.0)
}

/// `M x` for a real matrix and complex vector.
fn mv(m: MatRef<'_, f64>, x: &[c64]) -> Vec<c64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).fold(zc(), |acc, j| acc + x[j] * m[(i, j)]))
        .collect()
}

/// `M^T x` for a real matrix and complex vector.
fn mtv(m: MatRef<'_, f64>, x: &[c64]) -> Vec<c64> {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).fold(zc(), |acc, i| acc + x[i] * m[(i, j)]))
        .collect()
}

/// `Re(x y^H)`.
fn re_outer(x: &[c64], y: &[c64]) -> Mat<f64> {
    Mat::from_fn(x.len(), y.len(), |i, j| (x[i] * y[j].conj()).re)
}

fn add_into(acc: &mut Mat<f64>, x: &[c64], y: &[c64]) {
    for j in 0..y.len() {
        for i in 0..x.len() {
            acc[(i, j)] += (x[i] * y[j].conj()).re;
        }
    }
}

/// Chain rule from closed-loop to controller blocks, realified.
fn chain(plant: &DescriptorPlant, k: &Controller, g: RankOne<'_>) -> ControllerGradient {
    let n = plant.dims().n;
    let (a1, a2) = g.a.split_at(n);
    let (b1, b2) = g.b.split_at(n);

    // dAK = Re(a2 b2^H)
    let d_ak = re_outer(a2, b2);

    // dBK = Re(a2 (C2 b1)^H + a2 (D21 v)^H)
    let c2b1 = mv(plant.c2(), b1);
    let mut d_bk = re_outer(a2, &c2b1);
    // dCK = Re(B2^T a1 b2^H + D12^T u b2^H)
    let b2ta1 = mtv(plant.b2(), a1);
    let mut d_ck = re_outer(&b2ta1, b2);
    // dDK = Re(B2^T a1 (C2 b1)^H + B2^T a1 (D21 v)^H + D12^T u (C2 b1)^H + D12^T u (D21 v)^H)
    let mut d_dk = re_outer(&b2ta1, &c2b1);

    if g.io_terms {
        let d21v = mv(plant.d21(), g.v);
        let d12tu = mtv(plant.d12(), g.u);
        add_into(&mut d_bk, a2, &d21v);
        add_into(&mut d_ck, &d12tu, b2);
        add_into(&mut d_dk, &b2ta1, &d21v);
        add_into(&mut d_dk, &d12tu, &c2b1);
        add_into(&mut d_dk, &d12tu, &d21v);
    }
    ControllerGradient::pack(d_ak, d_bk, d_ck, d_dk, k.dk_fixed_zero())
}

/// Gradient of the H-infinity norm at a differentiable point.
///
/// Uses one LU factorization of `Z = i w Ec - Ac` for both `Z^{-1} Bc v` and
/// `Z^{-H} Cc^T u`.
pub fn grad_hinf(plant: &DescriptorPlant, k: &Controller, norm: &NormResult) -> Result<ControllerGradient> {
    if !norm.value.is_finite() {
        return Err(Error::UnstableGradient);
    }
    if norm.sv_gap < 1e-8 {
        // ties are broken by the SVD ordering
        log::debug!("repeated largest singular value at omega = {}: gap {:e}", norm.omega_peak, norm.sv_gap);
    }
    let cl = assemble_closed_loop(plant, k)?;
    let nc = cl.order();
    let (u, v) = (&norm.u_peak[..], &norm.v_peak[..]);
    if u.len() != cl.cc.nrows() || v.len() != cl.bc.ncols() {
        return Err(Error::dim("singular vectors", (cl.cc.nrows(), cl.bc.ncols()), (u.len(), v.len())));
    }
    let (a, b) = if norm.omega_peak.is_infinite() {
        (vec![zc(); nc], vec![zc(); nc])
    } else {
        let lu = shifted_lu(cl.ec.as_ref(), cl.ac.as_ref(), c64::new(0.0, norm.omega_peak))?;
        let bv = mv(cl.bc.as_ref(), v);
        let bv = Mat::from_fn(nc, 1, |i, _| bv[i]);
        let ctu = mtv(cl.cc.as_ref(), u);
        let ctu = Mat::from_fn(nc, 1, |i, _| ctu[i]);
        // shifted_lu factors Z = s Ec - Ac
        let a = lu.solve_adjoint(&ctu);
        let b = lu.solve(&bv);
        (
            (0..nc).map(|i| a[(i, 0)]).collect::<Vec<_>>(),
            (0..nc).map(|i| b[(i, 0)]).collect::<Vec<_>>(),
        )
    };
    Ok(chain(
        plant,
        k,
        RankOne {
            a: &a,
            b: &b,
            u,
            v,
            io_terms: true,
        },
    ))
}

/// Gradient of the spectral abscissa, from `dAc = w v^H` with
/// `w^H Ec v = 1`.
pub fn grad_specabs(plant: &DescriptorPlant, k: &Controller, spec: &SpectralResult) -> Result<ControllerGradient> {
    let nc = plant.dims().n + k.nk();
    if spec.right_vec.len() != nc || spec.left_vec.len() != nc {
        return Err(Error::dim("eigenvectors", (nc, nc), (spec.right_vec.len(), spec.left_vec.len())));
    }
    Ok(chain(
        plant,
        k,
        RankOne {
            a: &spec.left_vec,
            b: &spec.right_vec,
            u: &[],
            v: &[],
            io_terms: false,
        },
    ))
}

/// Default relative step of [`fd_gradient`].
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Central differences with step `step * max(1, |x_i|)` per coordinate.
pub fn fd_gradient(mut objective: impl FnMut(&[f64]) -> Result<f64>, x: &[f64], step: f64) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = step * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let fp = objective(&probe)?;
        probe[i] = x[i] - h;
        let fm = objective(&probe)?;
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::FdInfinite { index: i });
        }
        g.push((fp - fm) / (2.0 * h));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{hinf_norm, spectral_abscissa, SpectralOptions, DEFAULT_NORM_TOL};
    use crate::lti::{make_normalized_lqg, Layout};

    fn s(v: f64) -> Mat<f64> {
        Mat::from_fn(1, 1, |_, _| v)
    }

    fn scalar_plant() -> DescriptorPlant {
        DescriptorPlant::new(s(1.0), s(-1.0), s(1.0), s(1.0), s(1.0), s(1.0), s(0.0), s(0.0), s(0.0), s(0.0)).unwrap()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        d / nb.max(1e-300)
    }

    fn f_of(plant: &DescriptorPlant, l: Layout) -> impl Fn(&[f64]) -> Result<f64> + '_ {
        move |x| {
            let k = Controller::from_slice(l, x)?;
            Ok(hinf_norm(&assemble_closed_loop(plant, &k)?, DEFAULT_NORM_TOL)?.value)
        }
    }

    fn h_of(plant: &DescriptorPlant, l: Layout) -> impl Fn(&[f64]) -> Result<f64> + '_ {
        move |x| {
            let k = Controller::from_slice(l, x)?;
            Ok(spectral_abscissa(&assemble_closed_loop(plant, &k)?, SpectralOptions { with_vectors: false })?.alpha)
        }
    }

    #[test]
    fn quadratic_fd() {
        let g = fd_gradient(|x| Ok(x.iter().map(|v| v * v).sum()), &[1.0, 0.0, 0.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-9 && g[1].abs() < 1e-9 && g[2].abs() < 1e-9);
    }

    #[test]
    fn fd_names_infinite_coordinate() {
        let err = fd_gradient(|x| Ok(if x[1] > 0.5 { f64::INFINITY } else { 0.0 }), &[0.0, 0.5], 1e-3).unwrap_err();
        assert!(matches!(err, Error::FdInfinite { index: 1 }));
    }

    #[test]
    fn scalar_hinf_gradient_matches_fd() {
        let p = scalar_plant();
        // scalar plant has D12 = D21 = 0: f reduces to the open-loop-like path
        let l = Layout::new(1, 1, 1, false);
        let x = [-2.0, 0.7, 0.4, -0.3];
        let k = Controller::from_slice(l, &x).unwrap();
        let nr = hinf_norm(&assemble_closed_loop(&p, &k).unwrap(), DEFAULT_NORM_TOL).unwrap();
        let g = grad_hinf(&p, &k, &nr).unwrap();
        let fd = fd_gradient(f_of(&p, l), &x, 1e-6).unwrap();
        assert!(rel_err(&g.as_vector, &fd) < 1e-6, "{:?} {:?}", g.as_vector, fd);
    }

    #[test]
    fn lqg_hinf_gradient_matches_fd() {
        let n = 4;
        let a = Mat::from_fn(n, n, |i, j| if i == j { -1.0 - 0.5 * i as f64 } else if i.abs_diff(j) == 1 { 0.4 } else { 0.0 });
        let p = make_normalized_lqg(Mat::identity(n, n), a, Mat::from_fn(n, 1, |i, _| 1.0 / (1.0 + i as f64)), Mat::from_fn(1, n, |_, j| 0.5 + 0.2 * j as f64)).unwrap();
        for fixed in [true, false] {
            let l = Layout::new(2, 1, 1, fixed);
            let x: Vec<f64> = [-1.5, 0.2, -0.3, -2.0, 0.6, -0.4, 0.3, 0.5, -0.2][..l.len()].to_vec();
            let k = Controller::from_slice(l, &x).unwrap();
            let nr = hinf_norm(&assemble_closed_loop(&p, &k).unwrap(), DEFAULT_NORM_TOL).unwrap();
            assert!(nr.is_finite());
            let g = grad_hinf(&p, &k, &nr).unwrap();
            assert_eq!(g.as_vector.len(), l.len());
            let fd = fd_gradient(f_of(&p, l), &x, 1e-6).unwrap();
            assert!(rel_err(&g.as_vector, &fd) < 1e-6, "{:?} {:?}", g.as_vector, fd);
        }
    }

    #[test]
    fn singular_vector_phase_invariance() {
        let p = scalar_plant();
        let l = Layout::new(1, 1, 1, true);
        let k = Controller::from_slice(l, &[-2.0, 0.7, 0.4]).unwrap();
        let nr = hinf_norm(&assemble_closed_loop(&p, &k).unwrap(), DEFAULT_NORM_TOL).unwrap();
        let g0 = grad_hinf(&p, &k, &nr).unwrap();
        let mut rot = nr.clone();
        let ph = c64::from_polar(1.0, 0.83);
        rot.u_peak.iter_mut().for_each(|z| *z *= ph);
        rot.v_peak.iter_mut().for_each(|z| *z *= ph);
        let g1 = grad_hinf(&p, &k, &rot).unwrap();
        assert!(rel_err(&g1.as_vector, &g0.as_vector) < 1e-14);
    }

    #[test]
    fn no_disturbance_path_gives_zero_gradient() {
        let p = DescriptorPlant::new(s(1.0), s(-1.0), s(0.0), s(1.0), s(1.0), s(1.0), s(0.5), s(0.0), s(0.0), s(0.0)).unwrap();
        let l = Layout::new(1, 1, 1, false);
        let k = Controller::from_slice(l, &[-2.0, 0.7, 0.4, 0.1]).unwrap();
        let nr = hinf_norm(&assemble_closed_loop(&p, &k).unwrap(), DEFAULT_NORM_TOL).unwrap();
        assert!((nr.value - 0.5).abs() < 1e-14);
        let g = grad_hinf(&p, &k, &nr).unwrap();
        assert!(g.as_vector.iter().all(|v| *v == 0.0), "{:?}", g.as_vector);
    }

    #[test]
    fn unstable_gradient_is_an_error() {
        let p = scalar_plant();
        let k = Controller::from_slice(Layout::new(1, 1, 1, true), &[2.0, 0.0, 0.0]).unwrap();
        let nr = hinf_norm(&assemble_closed_loop(&p, &k).unwrap(), DEFAULT_NORM_TOL).unwrap();
        assert!(matches!(grad_hinf(&p, &k, &nr), Err(Error::UnstableGradient)));
    }

    #[test]
    fn decoupled_controller_mode_has_zero_ak_sensitivity() {
        // Ac = diag(-1, -2) with AK in the (2,2) slot and no coupling
        let p = DescriptorPlant::new(s(1.0), s(-1.0), s(1.0), s(1.0), s(1.0), s(1.0), s(0.0), s(0.0), s(0.0), s(0.0)).unwrap();
        let k = Controller::from_slice(Layout::new(1, 1, 1, true), &[-2.0, 0.0, 0.0]).unwrap();
        let sr = spectral_abscissa(&assemble_closed_loop(&p, &k).unwrap(), Default::default()).unwrap();
        let g = grad_specabs(&p, &k, &sr).unwrap();
        assert!(g.d_ak[(0, 0)].abs() < 1e-14);
    }

    #[test]
    fn specabs_gradient_matches_fd() {
        let n = 3;
        let a = Mat::from_fn(n, n, |i, j| if i == j { -1.0 - i as f64 } else { 0.3 * (i as f64 - j as f64) });
        let p = make_normalized_lqg(Mat::identity(n, n), a, Mat::from_fn(n, 1, |i, _| 1.0 + i as f64), Mat::from_fn(1, n, |_, j| 1.0 - 0.3 * j as f64)).unwrap();
        let l = Layout::new(2, 1, 1, false);
        let x = [0.3, 1.1, -1.2, 0.4, 0.8, -0.5, 0.9, 0.2, -0.1];
        let k = Controller::from_slice(l, &x).unwrap();
        let sr = spectral_abscissa(&assemble_closed_loop(&p, &k).unwrap(), Default::default()).unwrap();
        let g = grad_specabs(&p, &k, &sr).unwrap();
        let fd = fd_gradient(h_of(&p, l), &x, 1e-6).unwrap();
        assert!(rel_err(&g.as_vector, &fd) < 1e-6, "{:?} {:?}", g.as_vector, fd);
    }

    #[test]
    fn real_rightmost_eigenvalue_gives_real_vectors() {
        let p = scalar_plant();
        let k = Controller::from_slice(Layout::new(1, 1, 1, true), &[-3.0, 0.5, 0.5]).unwrap();
        let sr = spectral_abscissa(&assemble_closed_loop(&p, &k).unwrap(), Default::default()).unwrap();
        assert_eq!(sr.lambda_peak.im, 0.0);
        assert!(sr.right_vec.iter().chain(&sr.left_vec).all(|z| z.im == 0.0));
    }
}
