//! Minimum-norm point of the convex hull of a finite set of vectors
//! (Wolfe's algorithm).

use faer::linalg::solvers::{Solve, SolveLstsq};
use faer::Mat;

use crate::error::{Error, Result};

/// Certificate tolerance for [`min_norm_hull`].
pub const TOL_CERT: f64 = 1e-12;
/// Columns closer than this (max-norm, relative) are treated as duplicates.
pub const DEDUP_TOL: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct HullProblem {
    /// Columns are the input vectors.
    pub g: Mat<f64>,
    /// Convex weights, one per input column.
    pub weights: Vec<f64>,
    pub g_star: Vec<f64>,
    /// `||g*||^2 - min_i <g*, g_i>`; nonpositive up to rounding at optimum.
    pub gap: f64,
    pub certified: bool,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn combine(cols: &[Vec<f64>], support: &[usize], w: &[f64], n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for (&s, &ws) in support.iter().zip(w) {
        for (xi, ci) in x.iter_mut().zip(&cols[s]) {
            *xi += ws * ci;
        }
    }
    x
}

/// Affine-hull minimizer of the support, as barycentric coordinates.
fn affine_min(cols: &[Vec<f64>], support: &[usize], n: usize) -> Vec<f64> {
    let m = support.len();
    if m == 1 {
        return vec![1.0];
    }
    let p0 = &cols[support[0]];
    let d = Mat::from_fn(n, m - 1, |i, j| cols[support[j + 1]][i] - p0[i]);
    let rhs = Mat::from_fn(n, 1, |i, _| -p0[i]);
    let c = if n >= m - 1 {
        d.qr().solve_lstsq(&rhs)
    } else {
        // more support points than dimensions cannot stay affinely independent
        let dtd = d.transpose() * &d;
        let dtr = d.transpose() * &rhs;
        dtd.full_piv_lu().solve(&dtr)
    };
    let mut mu = Vec::with_capacity(m);
    mu.push(1.0 - (0..m - 1).map(|j| c[(j, 0)]).sum::<f64>());
    mu.extend((0..m - 1).map(|j| c[(j, 0)]));
    mu
}

/// Minimum-norm element of `conv{columns}`.
pub fn min_norm_hull(columns: &[Vec<f64>]) -> Result<HullProblem> {
    let q1 = columns.len();
    if q1 == 0 {
        return Err(Error::EmptyHull);
    }
    let n = columns[0].len();
    for (i, c) in columns.iter().enumerate() {
        if c.len() != n {
            return Err(Error::dim("hull column", (n, 1), (c.len(), 1)));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGenerator { index: i });
        }
    }

    // first occurrence of each distinct column; duplicates keep zero weight
    let mut uniq: Vec<usize> = Vec::new();
    for i in 0..q1 {
        let scale = columns[i].iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let dup = uniq
            .iter()
            .any(|&u| columns[u].iter().zip(&columns[i]).all(|(a, b)| (a - b).abs() <= DEDUP_TOL * scale));
        if !dup {
            uniq.push(i);
        }
    }

    let max_sq = uniq.iter().map(|&u| dot(&columns[u], &columns[u])).fold(0.0, f64::max);
    let tol = |xx: f64| (TOL_CERT * (1.0 + xx)).max(64.0 * f64::EPSILON * max_sq);

    let start = *uniq
        .iter()
        .min_by(|&&a, &&b| dot(&columns[a], &columns[a]).total_cmp(&dot(&columns[b], &columns[b])))
        .unwrap();
    let mut support = vec![start];
    let mut w = vec![1.0];
    let mut x = columns[start].clone();
    let max_iter = 50 * (uniq.len() + n) + 100;
    let mut iterations = 0;

    loop {
        iterations += 1;
        let xx = dot(&x, &x);
        let (j, xj) = uniq
            .iter()
            .map(|&u| (u, dot(&x, &columns[u])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if xx - xj <= tol(xx) || support.contains(&j) || iterations > max_iter {
            break;
        }
        support.push(j);
        w.push(0.0);

        // minor cycle
        loop {
            let mu = affine_min(columns, &support, n);
            if mu.iter().all(|&m| m > 1e-12) {
                w = mu;
                break;
            }
            let theta = w
                .iter()
                .zip(&mu)
                .filter(|(_, &m)| m <= 1e-12)
                .map(|(&wi, &mi)| if wi - mi > 0.0 { wi / (wi - mi) } else { 0.0 })
                .fold(1.0f64, f64::min);
            for (wi, mi) in w.iter_mut().zip(&mu) {
                *wi = (1.0 - theta) * *wi + theta * mi;
            }
            // drop at least the blocking point
            let drop = w
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap();
            let mut keep = Vec::new();
            let mut kw = Vec::new();
            for (i, (&s, &wi)) in support.iter().zip(&w).enumerate() {
                if i != drop && wi > 1e-15 {
                    keep.push(s);
                    kw.push(wi);
                }
            }
            let total: f64 = kw.iter().sum();
            kw.iter_mut().for_each(|v| *v /= total);
            support = keep;
            w = kw;
            if support.len() <= 1 {
                break;
            }
        }
        x = combine(columns, &support, &w, n);
    }

    let mut weights = vec![0.0; q1];
    for (&s, &ws) in support.iter().zip(&w) {
        weights[s] = ws;
    }
    let g_star = combine(columns, &(0..q1).collect::<Vec<_>>(), &weights, n);
    let xx = dot(&g_star, &g_star);
    let gap = columns.iter().map(|c| xx - dot(&g_star, c)).fold(f64::NEG_INFINITY, f64::max);
    Ok(HullProblem {
        g: Mat::from_fn(n, q1, |i, j| columns[j][i]),
        weights,
        g_star,
        gap,
        certified: gap <= tol(xx),
        iterations,
    })
}
