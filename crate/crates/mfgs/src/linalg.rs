//! Small dense helpers shared by the numerical modules.

use faer::{c64, Mat, MatMut, MatRef};

use crate::error::{Error, Result};

pub(crate) fn check_shape(block: &str, m: MatRef<'_, f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::dim(block, (rows, cols), (m.nrows(), m.ncols())));
    }
    Ok(())
}

pub(crate) fn check_finite(block: &str, m: MatRef<'_, f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite(block.to_string()));
            }
        }
    }
    Ok(())
}

/// Frobenius norm.
pub fn fro(m: MatRef<'_, f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)] * m[(i, j)];
        }
    }
    s.sqrt()
}

pub(crate) fn is_identity(m: MatRef<'_, f64>) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let want = if i == j { 1.0 } else { 0.0 };
            if m[(i, j)] != want {
                return false;
            }
        }
    }
    true
}

pub(crate) fn is_zero(m: MatRef<'_, f64>) -> bool {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != 0.0 {
                return false;
            }
        }
    }
    true
}

pub(crate) fn to_complex(m: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)], 0.0))
}

pub(crate) fn set_block(dst: MatMut<'_, f64>, row: usize, col: usize, src: MatRef<'_, f64>) {
    dst.submatrix_mut(row, col, src.nrows(), src.ncols()).copy_from(src);
}

pub(crate) fn mat_eq(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> bool {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return false;
    }
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if a[(i, j)].to_bits() != b[(i, j)].to_bits() {
                return false;
            }
        }
    }
    true
}

/// Rectangular identity: ones on the leading diagonal, zeros elsewhere.
pub fn leading_identity(rows: usize, cols: usize) -> Mat<f64> {
    Mat::from_fn(rows, cols, |i, j| if i == j { 1.0 } else { 0.0 })
}

/// Row-major copy of an upper Hessenberg `H` for repeated solves of
/// `(s I - H) X = R` with adjacent-row partial pivoting, `O(n^2)` per
/// right-hand side column.
pub(crate) struct ShiftedHessenberg {
    n: usize,
    rows: Vec<f64>,
    scale: f64,
}

impl ShiftedHessenberg {
    pub fn new(h: MatRef<'_, f64>) -> Self {
        let n = h.nrows();
        let mut rows = vec![0.0; n * n];
        let mut scale = 0.0f64;
        for j in 0..n {
            for i in 0..n.min(j + 2) {
                let v = h[(i, j)];
                rows[i * n + j] = v;
                scale = scale.max(v.abs());
            }
        }
        Self { n, rows, scale }
    }

    /// Returns `None` when a pivot vanishes.
    pub fn solve(&self, s: c64, rhs: MatRef<'_, c64>) -> Option<Mat<c64>> {
        let n = self.n;
        let k = rhs.ncols();
        let w = n + k;
        // row-major augmented matrix [sI - H | R]
        let mut m = vec![c64::new(0.0, 0.0); n * w];
        for i in 0..n {
            let row = &mut m[i * w..(i + 1) * w];
            let lo = i.saturating_sub(1);
            for (d, v) in row[lo..n].iter_mut().zip(&self.rows[i * n + lo..(i + 1) * n]) {
                *d = c64::new(-v, 0.0);
            }
            row[i] += s;
            for c in 0..k {
                row[n + c] = rhs[(i, c)];
            }
        }
        let tiny = (self.scale + s.norm()) * f64::EPSILON * 1e-3;
        for p in 0..n.saturating_sub(1) {
            let (a, b) = (m[p * w + p].norm(), m[(p + 1) * w + p].norm());
            if b > a {
                let (top, bot) = m.split_at_mut((p + 1) * w);
                top[p * w + p..p * w + w].swap_with_slice(&mut bot[p..w]);
            }
            let piv = m[p * w + p];
            if piv.norm() <= tiny {
                return None;
            }
            let l = m[(p + 1) * w + p] / piv;
            if l != c64::new(0.0, 0.0) {
                let (top, bot) = m.split_at_mut((p + 1) * w);
                let src = &top[p * w + p + 1..p * w + w];
                for (d, s) in bot[p + 1..w].iter_mut().zip(src) {
                    *d -= l * *s;
                }
            }
            m[(p + 1) * w + p] = c64::new(0.0, 0.0);
        }
        if n > 0 && m[(n - 1) * w + n - 1].norm() <= tiny {
            return None;
        }
        let mut x = Mat::<c64>::zeros(n, k);
        let mut xc = vec![c64::new(0.0, 0.0); n];
        for c in 0..k {
            for i in (0..n).rev() {
                let row = &m[i * w..(i + 1) * w];
                let acc = row[i + 1..n].iter().zip(&xc[i + 1..n]).fold(row[n + c], |acc, (a, b)| acc - *a * *b);
                xc[i] = acc / row[i];
            }
            for (i, v) in xc.iter().enumerate() {
                x[(i, c)] = *v;
            }
        }
        Some(x)
    }
}

/// Brent's method for maximizing a unimodal function on `[a, b]`.
///
/// Stops once the bracket is below `rtol |x| + atol`. Returns the maximizer
/// and the maximum value.
pub(crate) fn brent_max(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, rtol: f64, atol: f64, max_iter: usize) -> (f64, f64) {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = -f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = rtol * x.abs() + atol;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else if d > 0.0 { x + tol1 } else { x - tol1 };
        let fu = -f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, -fx)
}
