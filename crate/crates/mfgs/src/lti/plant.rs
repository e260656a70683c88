use faer::linalg::solvers::FullPivLu;
use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg::{check_finite, check_shape, fro, is_identity, is_zero};

/// External and state dimensions of a plant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m1: usize,
    pub m2: usize,
    pub p1: usize,
    pub p2: usize,
}

/// Descriptor plant
///
/// ```text
/// E x' = A x + B1 w + B2 u
///    z = C1 x + D11 w + D12 u
///    y = C2 x + D21 w + D22 u
/// ```
///
/// with `D22 = 0`. Fields are immutable after construction.
#[derive(Clone, Debug)]
pub struct DescriptorPlant {
    e: Mat<f64>,
    a: Mat<f64>,
    b1: Mat<f64>,
    b2: Mat<f64>,
    c1: Mat<f64>,
    c2: Mat<f64>,
    d11: Mat<f64>,
    d12: Mat<f64>,
    d21: Mat<f64>,
    d22: Mat<f64>,
    dims: Dims,
    e_identity: bool,
}

const REGULARITY_PROBES: [(f64, f64); 4] = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (10.0, 0.0)];

impl DescriptorPlant {
    /// Validate shapes, finiteness, `D22 = 0` and pencil regularity.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        e: Mat<f64>,
        a: Mat<f64>,
        b1: Mat<f64>,
        b2: Mat<f64>,
        c1: Mat<f64>,
        c2: Mat<f64>,
        d11: Mat<f64>,
        d12: Mat<f64>,
        d21: Mat<f64>,
        d22: Mat<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        let dims = Dims {
            n,
            m1: b1.ncols(),
            m2: b2.ncols(),
            p1: c1.nrows(),
            p2: c2.nrows(),
        };
        let Dims { m1, m2, p1, p2, .. } = dims;
        check_shape("A", a.as_ref(), n, n)?;
        check_shape("E", e.as_ref(), n, n)?;
        check_shape("B1", b1.as_ref(), n, m1)?;
        check_shape("B2", b2.as_ref(), n, m2)?;
        check_shape("C1", c1.as_ref(), p1, n)?;
        check_shape("C2", c2.as_ref(), p2, n)?;
        check_shape("D11", d11.as_ref(), p1, m1)?;
        check_shape("D12", d12.as_ref(), p1, m2)?;
        check_shape("D21", d21.as_ref(), p2, m1)?;
        check_shape("D22", d22.as_ref(), p2, m2)?;
        for (name, m) in [
            ("E", &e),
            ("A", &a),
            ("B1", &b1),
            ("B2", &b2),
            ("C1", &c1),
            ("C2", &c2),
            ("D11", &d11),
            ("D12", &d12),
            ("D21", &d21),
            ("D22", &d22),
        ] {
            check_finite(name, m.as_ref())?;
        }
        if !is_zero(d22.as_ref()) {
            return Err(Error::NonzeroD22 { level: None });
        }
        if !pencil_is_regular(e.as_ref(), a.as_ref()) {
            return Err(Error::IrregularPencil);
        }
        let e_identity = is_identity(e.as_ref());
        Ok(Self {
            e,
            a,
            b1,
            b2,
            c1,
            c2,
            d11,
            d12,
            d21,
            d22,
            dims,
            e_identity,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }
    pub fn e(&self) -> MatRef<'_, f64> {
        self.e.as_ref()
    }
    pub fn a(&self) -> MatRef<'_, f64> {
        self.a.as_ref()
    }
    pub fn b1(&self) -> MatRef<'_, f64> {
        self.b1.as_ref()
    }
    pub fn b2(&self) -> MatRef<'_, f64> {
        self.b2.as_ref()
    }
    pub fn c1(&self) -> MatRef<'_, f64> {
        self.c1.as_ref()
    }
    pub fn c2(&self) -> MatRef<'_, f64> {
        self.c2.as_ref()
    }
    pub fn d11(&self) -> MatRef<'_, f64> {
        self.d11.as_ref()
    }
    pub fn d12(&self) -> MatRef<'_, f64> {
        self.d12.as_ref()
    }
    pub fn d21(&self) -> MatRef<'_, f64> {
        self.d21.as_ref()
    }
    pub fn d22(&self) -> MatRef<'_, f64> {
        self.d22.as_ref()
    }

    /// True when `E` is exactly the identity (standard state space).
    pub fn e_is_identity(&self) -> bool {
        self.e_identity
    }

    /// Matrices in the order E, A, B1, B2, C1, C2, D11, D12, D21, D22.
    pub fn matrices(&self) -> [(&'static str, MatRef<'_, f64>); 10] {
        [
            ("E", self.e()),
            ("A", self.a()),
            ("B1", self.b1()),
            ("B2", self.b2()),
            ("C1", self.c1()),
            ("C2", self.c2()),
            ("D11", self.d11()),
            ("D12", self.d12()),
            ("D21", self.d21()),
            ("D22", self.d22()),
        ]
    }
}

/// Full-rank test of `lambda E - A` at a fixed probe set via a fully
/// pivoted LU.
pub(crate) fn pencil_is_regular(e: MatRef<'_, f64>, a: MatRef<'_, f64>) -> bool {
    let n = a.nrows();
    if n == 0 {
        return true;
    }
    let scale = fro(a) + fro(e);
    REGULARITY_PROBES.iter().any(|&(re, im)| {
        let lam = c64::new(re, im);
        let m = Mat::from_fn(n, n, |i, j| lam * e[(i, j)] - c64::new(a[(i, j)], 0.0));
        let lu = FullPivLu::new(m.as_ref());
        let u = lu.U();
        let tol = (n as f64) * f64::EPSILON * scale * (1.0 + lam.norm());
        (0..n).all(|i| u[(i, i)].norm() > tol)
    })
}
