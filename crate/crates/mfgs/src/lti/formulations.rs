use faer::Mat;

use super::DescriptorPlant;
use crate::error::Result;
use crate::linalg::{check_shape, leading_identity, set_block};

/// Normalized LQG wiring: disturbances enter through the control and the
/// measurement channel, the performance output stacks `y` and `u`.
///
/// `B1 = [B, 0]`, `B2 = B`, `C1 = [C; 0]`, `C2 = C`, `D11 = 0`,
/// `D12 = [0; I]`, `D21 = [0, I]`.
pub fn make_normalized_lqg(e: Mat<f64>, a: Mat<f64>, b: Mat<f64>, c: Mat<f64>) -> Result<DescriptorPlant> {
    let n = a.nrows();
    let (m, p) = (b.ncols(), c.nrows());
    check_shape("A", a.as_ref(), n, n)?;
    check_shape("E", e.as_ref(), n, n)?;
    check_shape("B", b.as_ref(), n, m)?;
    check_shape("C", c.as_ref(), p, n)?;
    let (m1, p1) = (m + p, p + m);

    let mut b1 = Mat::zeros(n, m1);
    set_block(b1.as_mut(), 0, 0, b.as_ref());
    let mut c1 = Mat::zeros(p1, n);
    set_block(c1.as_mut(), 0, 0, c.as_ref());
    let mut d12 = Mat::zeros(p1, m);
    set_block(d12.as_mut(), p, 0, Mat::<f64>::identity(m, m).as_ref());
    let mut d21 = Mat::zeros(p, m1);
    set_block(d21.as_mut(), 0, m, Mat::<f64>::identity(p, p).as_ref());

    DescriptorPlant::new(e, a, b1, b.clone(), c1, c.clone(), Mat::zeros(p1, m1), d12, d21, Mat::zeros(p, m))
}

/// Plant with `C1 = C2`, rectangular-identity `D12` and `D21`, and zero
/// `D11`, `D22`.
pub fn make_general_plant(e: Mat<f64>, a: Mat<f64>, b1: Mat<f64>, b2: Mat<f64>, c2: Mat<f64>) -> Result<DescriptorPlant> {
    let n = a.nrows();
    let (m1, m2, p2) = (b1.ncols(), b2.ncols(), c2.nrows());
    check_shape("A", a.as_ref(), n, n)?;
    check_shape("E", e.as_ref(), n, n)?;
    check_shape("B1", b1.as_ref(), n, m1)?;
    check_shape("B2", b2.as_ref(), n, m2)?;
    check_shape("C2", c2.as_ref(), p2, n)?;
    let p1 = p2;
    DescriptorPlant::new(
        e,
        a,
        b1,
        b2,
        c2.clone(),
        c2,
        Mat::zeros(p1, m1),
        leading_identity(p1, m2),
        leading_identity(p2, m1),
        Mat::zeros(p2, m2),
    )
}
