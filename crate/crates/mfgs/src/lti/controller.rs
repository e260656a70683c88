use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg::{check_finite, check_shape, is_zero};

/// Shape of a controller and of its design vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub nk: usize,
    pub m2: usize,
    pub p2: usize,
    pub dk_fixed_zero: bool,
}

impl Layout {
    pub fn new(nk: usize, m2: usize, p2: usize, dk_fixed_zero: bool) -> Self {
        Self {
            nk,
            m2,
            p2,
            dk_fixed_zero,
        }
    }

    /// Design-vector length `N`.
    pub fn len(&self) -> usize {
        let base = self.nk * self.nk + self.nk * self.m2 + self.p2 * self.nk;
        if self.dk_fixed_zero {
            base
        } else {
            base + self.p2 * self.m2
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fixed-order controller `(AK, BK, CK, DK)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Controller {
    ak: Mat<f64>,
    bk: Mat<f64>,
    ck: Mat<f64>,
    dk: Mat<f64>,
    dk_fixed_zero: bool,
}

impl Controller {
    pub fn new(ak: Mat<f64>, bk: Mat<f64>, ck: Mat<f64>, dk: Mat<f64>, dk_fixed_zero: bool) -> Result<Self> {
        let nk = ak.nrows();
        let p2 = bk.ncols();
        let m2 = ck.nrows();
        check_shape("AK", ak.as_ref(), nk, nk)?;
        check_shape("BK", bk.as_ref(), nk, p2)?;
        check_shape("CK", ck.as_ref(), m2, nk)?;
        check_shape("DK", dk.as_ref(), m2, p2)?;
        for (name, m) in [("AK", &ak), ("BK", &bk), ("CK", &ck), ("DK", &dk)] {
            check_finite(name, m.as_ref())?;
        }
        if dk_fixed_zero && !is_zero(dk.as_ref()) {
            return Err(Error::InvalidParameter(
                "DK must be zero when dk_fixed_zero is set".into(),
            ));
        }
        Ok(Self {
            ak,
            bk,
            ck,
            dk,
            dk_fixed_zero,
        })
    }

    pub fn zeros(layout: Layout) -> Self {
        let Layout { nk, m2, p2, .. } = layout;
        Self {
            ak: Mat::zeros(nk, nk),
            bk: Mat::zeros(nk, p2),
            ck: Mat::zeros(m2, nk),
            dk: Mat::zeros(m2, p2),
            dk_fixed_zero: layout.dk_fixed_zero,
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.ak.nrows(), self.ck.nrows(), self.bk.ncols(), self.dk_fixed_zero)
    }

    pub fn nk(&self) -> usize {
        self.ak.nrows()
    }
    pub fn ak(&self) -> MatRef<'_, f64> {
        self.ak.as_ref()
    }
    pub fn bk(&self) -> MatRef<'_, f64> {
        self.bk.as_ref()
    }
    pub fn ck(&self) -> MatRef<'_, f64> {
        self.ck.as_ref()
    }
    pub fn dk(&self) -> MatRef<'_, f64> {
        self.dk.as_ref()
    }
    pub fn dk_fixed_zero(&self) -> bool {
        self.dk_fixed_zero
    }

    /// Column-major `[vec(AK); vec(BK); vec(CK); vec(DK)]`, omitting DK when
    /// it is fixed at zero.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.layout().len());
        push_colmajor(&mut x, self.ak.as_ref());
        push_colmajor(&mut x, self.bk.as_ref());
        push_colmajor(&mut x, self.ck.as_ref());
        if !self.dk_fixed_zero {
            push_colmajor(&mut x, self.dk.as_ref());
        }
        x
    }

    pub fn from_slice(layout: Layout, x: &[f64]) -> Result<Self> {
        if x.len() != layout.len() {
            return Err(Error::Layout {
                expected: layout.len(),
                found: x.len(),
            });
        }
        let Layout { nk, m2, p2, .. } = layout;
        let mut off = 0;
        let ak = take_colmajor(x, &mut off, nk, nk);
        let bk = take_colmajor(x, &mut off, nk, p2);
        let ck = take_colmajor(x, &mut off, m2, nk);
        let dk = if layout.dk_fixed_zero {
            Mat::zeros(m2, p2)
        } else {
            take_colmajor(x, &mut off, m2, p2)
        };
        Self::new(ak, bk, ck, dk, layout.dk_fixed_zero)
    }

    /// `a * self + b * other`, entrywise.
    pub fn blend(&self, a: f64, other: &Controller, b: f64) -> Result<Controller> {
        if self.layout() != other.layout() {
            return Err(Error::InvalidParameter("blending controllers of different layouts".into()));
        }
        let lin = |p: MatRef<'_, f64>, q: MatRef<'_, f64>| Mat::from_fn(p.nrows(), p.ncols(), |i, j| a * p[(i, j)] + b * q[(i, j)]);
        Controller::new(
            lin(self.ak(), other.ak()),
            lin(self.bk(), other.bk()),
            lin(self.ck(), other.ck()),
            lin(self.dk(), other.dk()),
            self.dk_fixed_zero,
        )
    }
}

fn push_colmajor(x: &mut Vec<f64>, m: MatRef<'_, f64>) {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            x.push(m[(i, j)]);
        }
    }
}

fn take_colmajor(x: &[f64], off: &mut usize, rows: usize, cols: usize) -> Mat<f64> {
    let start = *off;
    *off += rows * cols;
    Mat::from_fn(rows, cols, |i, j| x[start + j * rows + i])
}

/// Design vector together with its layout.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignVector {
    pub x: Vec<f64>,
    pub layout: Layout,
}

impl DesignVector {
    pub fn new(x: Vec<f64>, layout: Layout) -> Result<Self> {
        if x.len() != layout.len() {
            return Err(Error::Layout {
                expected: layout.len(),
                found: x.len(),
            });
        }
        Ok(Self { x, layout })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

pub fn pack_controller(k: &Controller) -> DesignVector {
    DesignVector {
        x: k.to_vec(),
        layout: k.layout(),
    }
}

pub fn unpack_controller(x: &DesignVector) -> Result<Controller> {
    Controller::from_slice(x.layout, &x.x)
}
