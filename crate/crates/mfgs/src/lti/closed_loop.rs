use faer::{Mat, MatRef};

use super::{Controller, DescriptorPlant};
use crate::error::{Error, Result};
use crate::linalg::{mat_eq, set_block};

/// Closed-loop descriptor system `(Ec, Ac, Bc, Cc, Dc)`.
#[derive(Clone, Debug)]
pub struct ClosedLoop {
    pub ec: Mat<f64>,
    pub ac: Mat<f64>,
    pub bc: Mat<f64>,
    pub cc: Mat<f64>,
    pub dc: Mat<f64>,
    /// Hierarchy level (1-based) the loop was assembled for, if any.
    pub level: Option<usize>,
    ec_identity: bool,
}

impl ClosedLoop {
    /// Build a loop directly from its matrices; used for standalone analysis.
    pub fn from_matrices(ec: Mat<f64>, ac: Mat<f64>, bc: Mat<f64>, cc: Mat<f64>, dc: Mat<f64>) -> Result<Self> {
        let n = ac.nrows();
        let (m1, p1) = (bc.ncols(), cc.nrows());
        crate::linalg::check_shape("Ac", ac.as_ref(), n, n)?;
        crate::linalg::check_shape("Ec", ec.as_ref(), n, n)?;
        crate::linalg::check_shape("Bc", bc.as_ref(), n, m1)?;
        crate::linalg::check_shape("Cc", cc.as_ref(), p1, n)?;
        crate::linalg::check_shape("Dc", dc.as_ref(), p1, m1)?;
        let ec_identity = crate::linalg::is_identity(ec.as_ref());
        Ok(Self {
            ec,
            ac,
            bc,
            cc,
            dc,
            level: None,
            ec_identity,
        })
    }

    /// Standard state-space loop with `Ec = I`.
    pub fn standard(ac: Mat<f64>, bc: Mat<f64>, cc: Mat<f64>, dc: Mat<f64>) -> Result<Self> {
        let n = ac.nrows();
        Self::from_matrices(Mat::identity(n, n), ac, bc, cc, dc)
    }

    pub fn order(&self) -> usize {
        self.ac.nrows()
    }

    pub fn ec_is_identity(&self) -> bool {
        self.ec_identity
    }

    /// Entrywise bitwise equality of all five matrices.
    pub fn same_matrices(&self, other: &ClosedLoop) -> bool {
        mat_eq(self.ec.as_ref(), other.ec.as_ref())
            && mat_eq(self.ac.as_ref(), other.ac.as_ref())
            && mat_eq(self.bc.as_ref(), other.bc.as_ref())
            && mat_eq(self.cc.as_ref(), other.cc.as_ref())
            && mat_eq(self.dc.as_ref(), other.dc.as_ref())
    }
}

fn mul(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    a * b
}

/// Close the plant with the controller `u = K y`.
pub fn assemble_closed_loop(plant: &DescriptorPlant, k: &Controller) -> Result<ClosedLoop> {
    let d = plant.dims();
    let nk = k.nk();
    if k.bk().ncols() != d.p2 {
        return Err(Error::dim("BK", (nk, d.p2), (k.bk().nrows(), k.bk().ncols())));
    }
    if k.ck().nrows() != d.m2 {
        return Err(Error::dim("CK", (d.m2, nk), (k.ck().nrows(), k.ck().ncols())));
    }
    if k.dk().nrows() != d.m2 || k.dk().ncols() != d.p2 {
        return Err(Error::dim("DK", (d.m2, d.p2), (k.dk().nrows(), k.dk().ncols())));
    }
    let n = d.n;
    let nc = n + nk;

    let mut ec = Mat::<f64>::zeros(nc, nc);
    set_block(ec.as_mut(), 0, 0, plant.e());
    for i in 0..nk {
        ec[(n + i, n + i)] = 1.0;
    }

    let b2dk = mul(plant.b2(), k.dk());
    let d12dk = mul(plant.d12(), k.dk());

    let mut ac = Mat::<f64>::zeros(nc, nc);
    let a11 = plant.a() + mul(b2dk.as_ref(), plant.c2());
    set_block(ac.as_mut(), 0, 0, a11.as_ref());
    set_block(ac.as_mut(), 0, n, mul(plant.b2(), k.ck()).as_ref());
    set_block(ac.as_mut(), n, 0, mul(k.bk(), plant.c2()).as_ref());
    set_block(ac.as_mut(), n, n, k.ak());

    let mut bc = Mat::<f64>::zeros(nc, d.m1);
    let b_top = plant.b1() + mul(b2dk.as_ref(), plant.d21());
    set_block(bc.as_mut(), 0, 0, b_top.as_ref());
    set_block(bc.as_mut(), n, 0, mul(k.bk(), plant.d21()).as_ref());

    let mut cc = Mat::<f64>::zeros(d.p1, nc);
    let c_left = plant.c1() + mul(d12dk.as_ref(), plant.c2());
    set_block(cc.as_mut(), 0, 0, c_left.as_ref());
    set_block(cc.as_mut(), 0, n, mul(plant.d12(), k.ck()).as_ref());

    let dc = plant.d11() + mul(d12dk.as_ref(), plant.d21());

    Ok(ClosedLoop {
        ec,
        ac,
        bc,
        cc,
        dc,
        level: None,
        ec_identity: plant.e_is_identity(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::Layout;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(v: f64) -> Mat<f64> {
        Mat::from_fn(1, 1, |_, _| v)
    }

    fn scalar_plant() -> DescriptorPlant {
        DescriptorPlant::new(s(1.0), s(-1.0), s(1.0), s(1.0), s(1.0), s(1.0), s(0.0), s(0.0), s(0.0), s(0.0)).unwrap()
    }

    #[test]
    fn scalar_loop_blocks() {
        let k = Controller::new(s(-2.0), s(1.0), s(1.0), s(0.0), true).unwrap();
        let cl = assemble_closed_loop(&scalar_plant(), &k).unwrap();
        let want_ac = [[-1.0, 1.0], [1.0, -2.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(cl.ac[(i, j)], want_ac[i][j]);
            }
        }
        assert_eq!((cl.bc[(0, 0)], cl.bc[(1, 0)]), (1.0, 0.0));
        assert_eq!((cl.cc[(0, 0)], cl.cc[(0, 1)]), (1.0, 0.0));
        assert_eq!(cl.dc[(0, 0)], 0.0);
        assert_eq!(cl.ec[(1, 1)], 1.0);
        assert!(cl.ec_is_identity());
    }

    fn random_plant(rng: &mut ChaCha8Rng) -> DescriptorPlant {
        let (n, m1, m2, p1, p2) = (4, 2, 2, 3, 2);
        let mut r = |a: usize, b: usize| Mat::from_fn(a, b, |_, _| rng.random_range(-1.0..1.0));
        let e = Mat::identity(n, n);
        DescriptorPlant::new(e, r(n, n), r(n, m1), r(n, m2), r(p1, n), r(p2, n), r(p1, m1), r(p1, m2), r(p2, m1), Mat::zeros(p2, m2)).unwrap()
    }

    #[test]
    fn zero_order_controller_gives_open_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_plant(&mut rng);
        let k = Controller::zeros(Layout::new(0, 2, 2, true));
        let cl = assemble_closed_loop(&p, &k).unwrap();
        assert!(mat_eq(cl.ac.as_ref(), p.a()));
        assert!(mat_eq(cl.bc.as_ref(), p.b1()));
        assert!(mat_eq(cl.cc.as_ref(), p.c1()));
        assert!(mat_eq(cl.dc.as_ref(), p.d11()));
    }

    #[test]
    fn assembly_is_affine_in_the_controller() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p = random_plant(&mut rng);
            let l = Layout::new(3, 2, 2, false);
            let draw = |rng: &mut ChaCha8Rng| {
                let x: Vec<f64> = (0..l.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
                Controller::from_slice(l, &x).unwrap()
            };
            let (k1, k2) = (draw(&mut rng), draw(&mut rng));
            let a = assemble_closed_loop(&p, &k1).unwrap();
            let b = assemble_closed_loop(&p, &k2).unwrap();
            let mid = assemble_closed_loop(&p, &k1.blend(0.5, &k2, 0.5).unwrap()).unwrap();
            let pairs = [
                (&mid.ac, &a.ac, &b.ac),
                (&mid.bc, &a.bc, &b.bc),
                (&mid.cc, &a.cc, &b.cc),
                (&mid.dc, &a.dc, &b.dc),
                (&mid.ec, &a.ec, &b.ec),
            ];
            for (m, x, y) in pairs {
                for j in 0..m.ncols() {
                    for i in 0..m.nrows() {
                        let want = 0.5 * x[(i, j)] + 0.5 * y[(i, j)];
                        assert!((m[(i, j)] - want).abs() <= 1e-12 * (1.0 + want.abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn mismatched_controller_names_block() {
        let k = Controller::zeros(Layout::new(1, 1, 2, true));
        let err = assemble_closed_loop(&scalar_plant(), &k).unwrap_err();
        assert!(err.to_string().contains("BK"), "{err}");
    }
}
