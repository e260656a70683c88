//! L-infinity and H-infinity norms via a level-set iteration on the even
//! pencil, seeded by a pole-aware frequency sweep.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat};
use rayon::prelude::*;

use super::eig::{eigenvalues, finite_generalized_eigenvalues, hessenberg_reduce};
use super::spectral::closed_loop_eigenvalues;
use super::transfer::FreqEvaluator;
use crate::error::{Error, Result};
use crate::linalg::{brent_max, set_block};
use crate::lti::ClosedLoop;

/// Default relative tolerance of the norm computation.
pub const DEFAULT_NORM_TOL: f64 = 1e-8;

/// Default closed-loop order above which optimization runs skip the
/// level-set certification.
pub const DEFAULT_CERTIFY_MAX_ORDER: usize = 128;

const SWEEP_POINTS: usize = 48;
const FALLBACK_POINTS: usize = 2000;
const FALLBACK_PEAKS: usize = 10;
const REFINE_PEAKS: usize = 5;
const MAX_LEVEL_SET_ITERS: usize = 30;
// a smooth peak is flat to rounding within about sqrt(eps) of its argmax
const BRENT_TOL: f64 = 1e-9;

/// Peak of the frequency response.
#[derive(Clone, Debug)]
pub struct NormResult {
    /// Norm value; `+inf` for unstable loops in [`hinf_norm`].
    pub value: f64,
    /// Peak frequency in rad/s; `+inf` when the supremum is the
    /// high-frequency limit, NaN when `value` is infinite.
    pub omega_peak: f64,
    /// Left singular vector at the peak.
    pub u_peak: Vec<c64>,
    /// Right singular vector at the peak.
    pub v_peak: Vec<c64>,
    /// `(sigma_1 - sigma_2) / sigma_1` at the peak.
    pub sv_gap: f64,
    pub certified_tol: f64,
    /// Whether the final level-set test found no level crossing above
    /// `value (1 + certified_tol)`. False after a fallback sweep.
    pub certified: bool,
    /// Spectral abscissa of the loop.
    pub alpha: f64,
}

impl NormResult {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }

    /// True when the pencil has an eigenvalue with nonnegative real part.
    pub fn unstable(&self) -> bool {
        self.alpha >= 0.0
    }

    fn infinite(alpha: f64, tol: f64) -> Self {
        Self {
            value: f64::INFINITY,
            omega_peak: f64::NAN,
            u_peak: Vec::new(),
            v_peak: Vec::new(),
            sv_gap: f64::NAN,
            certified_tol: tol,
            certified: true,
            alpha,
        }
    }
}

fn abscissa(eigs: &[c64]) -> Result<f64> {
    eigs.iter()
        .map(|z| z.re)
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
        .ok_or(Error::NoFiniteEigenvalues)
}

/// Options of [`hinf_norm_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormOptions {
    pub tol: f64,
    /// Loops of larger order skip the level-set test and return the refined
    /// sweep peak with `certified == false`. Stability is still decided from
    /// the full spectrum.
    pub certify_max_order: usize,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_NORM_TOL,
            certify_max_order: usize::MAX,
        }
    }
}

/// H-infinity norm: the L-infinity norm for stable loops, `+inf` otherwise.
pub fn hinf_norm(cl: &ClosedLoop, tol: f64) -> Result<NormResult> {
    hinf_norm_with(
        cl,
        &NormOptions {
            tol,
            ..NormOptions::default()
        },
    )
}

pub fn hinf_norm_with(cl: &ClosedLoop, opts: &NormOptions) -> Result<NormResult> {
    let eigs = closed_loop_eigenvalues(cl)?;
    let alpha = abscissa(&eigs)?;
    if alpha >= 0.0 {
        return Ok(NormResult::infinite(alpha, opts.tol));
    }
    linf_with_eigs(cl, &eigs, alpha, opts.tol, cl.order() <= opts.certify_max_order)
}

/// Supremum of the largest singular value over the imaginary axis.
pub fn linf_norm(cl: &ClosedLoop, tol: f64) -> Result<NormResult> {
    let eigs = closed_loop_eigenvalues(cl)?;
    let alpha = abscissa(&eigs).unwrap_or(f64::NEG_INFINITY);
    linf_with_eigs(cl, &eigs, alpha, tol, true)
}

/// Maximum of the largest singular value over `grid_size` log-spaced
/// frequencies in `[1e-8, 1e8]` and `omega = 0`. A lower bound on the norm.
pub fn linf_oracle_grid(cl: &ClosedLoop, grid_size: usize) -> f64 {
    let hs = cl.ec_is_identity().then(|| hessenberg_reduce(cl.ac.as_ref()));
    let ev = FreqEvaluator::new(cl, hs.as_ref());
    let at_zero = ev.sigma_max(0.0);
    let denom = (grid_size.max(2) - 1) as f64;
    let sweep = (0..grid_size)
        .into_par_iter()
        .map(|k| ev.sigma_max(10f64.powf(-8.0 + 16.0 * k as f64 / denom)))
        .reduce(|| 0.0, f64::max);
    at_zero.max(sweep)
}

#[derive(Clone, Copy, Debug)]
struct Peak {
    omega: f64,
    sigma: f64,
}

/// Tie rule: a candidate only replaces the incumbent when strictly larger
/// beyond rounding, so equal maxima keep the smallest frequency when
/// candidates are visited in increasing frequency.
fn beats(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + 8.0 * f64::EPSILON * incumbent.abs()
}

fn refine(ev: &FreqEvaluator, lo: f64, hi: f64) -> Peak {
    if hi <= lo {
        return Peak {
            omega: lo,
            sigma: ev.sigma_max(lo),
        };
    }
    let (omega, sigma) = if lo <= 0.0 {
        brent_max(|w| ev.sigma_max(w), 0.0, hi, BRENT_TOL, BRENT_TOL * hi, 200)
    } else {
        let (t, s) = brent_max(|t| ev.sigma_max(t.exp()), lo.ln(), hi.ln(), BRENT_TOL, BRENT_TOL, 200);
        (t.exp(), s)
    };
    Peak { omega, sigma }
}

fn frequency_range(eigs: &[c64]) -> (f64, f64) {
    let mags: Vec<f64> = eigs.iter().map(|z| z.norm()).filter(|m| *m > 0.0 && m.is_finite()).collect();
    if mags.is_empty() {
        return (1e-3, 1e3);
    }
    let lo = mags.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = mags.iter().cloned().fold(0.0, f64::max);
    ((lo / 10.0).max(1e-10), (hi * 10.0).max(1e-6))
}

fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(move |k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
}

/// Sample, then refine the largest local maxima with Brent's method.
fn sweep(ev: &FreqEvaluator, mut omegas: Vec<f64>, refine_count: usize) -> (Vec<Peak>, Peak) {
    omegas.sort_by(|a, b| a.total_cmp(b));
    omegas.dedup();
    let samples: Vec<Peak> = omegas.iter().map(|&omega| Peak { omega, sigma: ev.sigma_max(omega) }).collect();
    let mut local: Vec<usize> = (0..samples.len())
        .filter(|&k| {
            let s = samples[k].sigma;
            let left = k == 0 || samples[k - 1].sigma <= s;
            let right = k + 1 == samples.len() || samples[k + 1].sigma <= s;
            left && right
        })
        .collect();
    local.sort_by(|&a, &b| samples[b].sigma.total_cmp(&samples[a].sigma).then(a.cmp(&b)));
    local.truncate(refine_count);
    let mut refined: Vec<Peak> = local
        .iter()
        .map(|&k| {
            let lo = if k == 0 { samples[0].omega } else { samples[k - 1].omega };
            let hi = if k + 1 == samples.len() { samples[k].omega } else { samples[k + 1].omega };
            let r = refine(ev, lo, hi);
            if beats(r.sigma, samples[k].sigma) {
                r
            } else {
                samples[k]
            }
        })
        .collect();
    refined.extend(samples.iter().copied());
    refined.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    let mut best = refined[0];
    for p in &refined[1..] {
        if beats(p.sigma, best.sigma) {
            best = *p;
        }
    }
    (samples, best)
}

fn linf_with_eigs(cl: &ClosedLoop, eigs: &[c64], alpha: f64, tol: f64, certify: bool) -> Result<NormResult> {
    let hs = cl.ec_is_identity().then(|| hessenberg_reduce(cl.ac.as_ref()));
    let ev = FreqEvaluator::new(cl, hs.as_ref());
    let (lo, hi) = frequency_range(eigs);

    let mut omegas: Vec<f64> = vec![0.0];
    omegas.extend(log_grid(lo, hi, SWEEP_POINTS));
    let mut poles: Vec<c64> = eigs.iter().copied().filter(|z| z.im > 0.0).collect();
    poles.sort_by(|a, b| (a.re.abs() / a.norm()).total_cmp(&(b.re.abs() / b.norm())));
    omegas.extend(poles.iter().take(40).map(|z| z.im));

    let (_, mut best) = sweep(&ev, omegas, REFINE_PEAKS);
    if !best.sigma.is_finite() {
        // pole on the imaginary axis
        let mut r = NormResult::infinite(alpha, tol);
        r.omega_peak = best.omega;
        r.certified = false;
        return finish(&ev, r, best, tol, false, alpha);
    }

    // high-frequency limit
    let limit = if cl.ec_is_identity() {
        Peak {
            omega: f64::INFINITY,
            sigma: ev.sigma_dc(),
        }
    } else {
        let w = hi * 100.0;
        let (s1, s2, s3) = (ev.sigma_max(w), ev.sigma_max(10.0 * w), ev.sigma_max(100.0 * w));
        if s1 > best.sigma && s2 > s1 * (1.0 + 1e-6) && s3 > s2 * (1.0 + 1e-6) {
            return Err(Error::Improper { omega: w });
        }
        Peak {
            omega: 100.0 * w,
            sigma: s3,
        }
    };
    if beats(limit.sigma, best.sigma) {
        best = limit;
    }
    if best.sigma == 0.0 {
        return finish(&ev, NormResult::infinite(alpha, tol), best, tol, true, alpha);
    }

    let mut certified = false;
    let iters = if certify { MAX_LEVEL_SET_ITERS } else { 0 };
    for _ in 0..iters {
        let gamma = best.sigma * (1.0 + 2.0 * tol);
        let crossings = match level_crossings(cl, gamma) {
            Ok(c) => c,
            Err(_) => {
                let mut omegas: Vec<f64> = vec![0.0];
                omegas.extend(log_grid(lo / 10.0, hi * 10.0, FALLBACK_POINTS));
                omegas.extend(poles.iter().map(|z| z.im));
                let (_, p) = sweep(&ev, omegas, FALLBACK_PEAKS);
                if beats(p.sigma, best.sigma) {
                    best = p;
                }
                certified = false;
                break;
            }
        };
        if crossings.is_empty() {
            certified = true;
            break;
        }
        let mut pts = vec![0.0];
        pts.extend(crossings);
        pts.sort_by(|a, b| a.total_cmp(b));
        pts.dedup();
        let mut improved = best;
        for w in pts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let s = ev.sigma_max(mid);
            if s > best.sigma {
                let r = refine(&ev, w[0], w[1]);
                let cand = if beats(r.sigma, s) { r } else { Peak { omega: mid, sigma: s } };
                if beats(cand.sigma, improved.sigma) {
                    improved = cand;
                }
            }
        }
        if improved.sigma <= best.sigma * (1.0 + tol) {
            if beats(improved.sigma, best.sigma) {
                best = improved;
            }
            certified = true;
            break;
        }
        best = improved;
    }
    finish(&ev, NormResult::infinite(alpha, tol), best, tol, certified, alpha)
}

fn finish(ev: &FreqEvaluator, mut r: NormResult, best: Peak, tol: f64, certified: bool, alpha: f64) -> Result<NormResult> {
    r.alpha = alpha;
    r.certified_tol = tol;
    r.certified = certified;
    if !best.sigma.is_finite() {
        return Ok(r);
    }
    match ev.svd_point(best.omega) {
        Some(p) => {
            r.value = p.sigma;
            r.omega_peak = best.omega;
            r.sv_gap = if p.sigma > 0.0 { (p.sigma - p.sigma2) / p.sigma } else { 0.0 };
            r.u_peak = p.u;
            r.v_peak = p.v;
        }
        None => {
            r.value = f64::INFINITY;
            r.omega_peak = best.omega;
            r.certified = false;
        }
    }
    Ok(r)
}

/// Nonnegative frequencies at which some singular value of `Gc(i w)`
/// equals `gamma`: imaginary eigenvalues of the even pencil.
fn level_crossings(cl: &ClosedLoop, gamma: f64) -> Result<Vec<f64>> {
    let n = cl.order();
    let (m1, p1) = (cl.bc.ncols(), cl.cc.nrows());
    let eigs = if cl.ec_is_identity() {
        // eliminate the disturbance/output block of the even pencil
        let q = m1 + p1;
        let mut m2 = Mat::<f64>::zeros(q, q);
        for i in 0..m1 {
            m2[(i, i)] = -gamma;
        }
        for i in 0..p1 {
            m2[(m1 + i, m1 + i)] = -gamma;
        }
        set_block(m2.as_mut(), 0, m1, cl.dc.transpose());
        set_block(m2.as_mut(), m1, 0, cl.dc.as_ref());
        let mut rhs = Mat::<f64>::zeros(q, 2 * n);
        set_block(rhs.as_mut(), 0, n, cl.bc.transpose());
        set_block(rhs.as_mut(), m1, 0, cl.cc.as_ref());
        let k = m2.partial_piv_lu().solve(&rhs);
        let ku = k.as_ref().subrows(0, m1);
        let kv = k.as_ref().subrows(m1, p1);
        let top = &cl.bc * ku;
        let bot = cl.cc.transpose() * kv;
        let mut h = Mat::<f64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..2 * n {
                h[(i, j)] = -top[(i, j)];
                h[(n + i, j)] = bot[(i, j)];
            }
            for j in 0..n {
                h[(i, j)] += cl.ac[(i, j)];
                h[(n + i, n + j)] -= cl.ac[(j, i)];
            }
        }
        eigenvalues(h.as_ref())?
    } else {
        let size = 2 * n + m1 + p1;
        let mut m = Mat::<f64>::zeros(size, size);
        let mut e = Mat::<f64>::zeros(size, size);
        set_block(m.as_mut(), 0, 0, cl.ac.as_ref());
        set_block(m.as_mut(), 0, 2 * n, cl.bc.as_ref());
        let neg_at = Mat::from_fn(n, n, |i, j| -cl.ac[(j, i)]);
        set_block(m.as_mut(), n, n, neg_at.as_ref());
        let neg_ct = Mat::from_fn(n, p1, |i, j| -cl.cc[(j, i)]);
        set_block(m.as_mut(), n, 2 * n + m1, neg_ct.as_ref());
        set_block(m.as_mut(), 2 * n, n, cl.bc.transpose());
        set_block(m.as_mut(), 2 * n, 2 * n + m1, cl.dc.transpose());
        set_block(m.as_mut(), 2 * n + m1, 0, cl.cc.as_ref());
        set_block(m.as_mut(), 2 * n + m1, 2 * n, cl.dc.as_ref());
        for i in 0..m1 + p1 {
            m[(2 * n + i, 2 * n + i)] = -gamma;
        }
        set_block(e.as_mut(), 0, 0, cl.ec.as_ref());
        set_block(e.as_mut(), n, n, cl.ec.transpose());
        finite_generalized_eigenvalues(m.as_ref(), e.as_ref())?
    };
    let scale = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let mut out: Vec<f64> = eigs
        .iter()
        .filter(|z| z.im >= 0.0 && z.re.abs() <= 1e-6 * z.norm() + 1e-11 * scale)
        .map(|z| z.im)
        .collect();
    out.sort_by(|a, b| a.total_cmp(b));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::transfer::{sigma_max, transfer_eval};

    fn oscillator(zeta: f64) -> ClosedLoop {
        let a = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => 1.0,
            (1, 0) => -1.0,
            (1, 1) => -2.0 * zeta,
            _ => 0.0,
        });
        ClosedLoop::standard(a, Mat::from_fn(2, 1, |i, _| i as f64), Mat::from_fn(1, 2, |_, j| if j == 0 { 1.0 } else { 0.0 }), Mat::zeros(1, 1)).unwrap()
    }

    fn first_order() -> ClosedLoop {
        let s = |v: f64| Mat::from_fn(1, 1, |_, _| v);
        ClosedLoop::standard(s(-1.0), s(1.0), s(1.0), s(0.0)).unwrap()
    }

    #[test]
    fn first_order_peak_at_zero() {
        let r = hinf_norm(&first_order(), DEFAULT_NORM_TOL).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        assert_eq!(r.omega_peak, 0.0);
        assert!(r.certified);
    }

    #[test]
    fn damped_oscillator_peak() {
        let zeta: f64 = 0.05;
        let r = hinf_norm(&oscillator(zeta), DEFAULT_NORM_TOL).unwrap();
        let want = 1.0 / (2.0 * zeta * (1.0 - zeta * zeta).sqrt());
        assert!((r.value - want).abs() <= 1e-9 * want, "{} vs {want}", r.value);
        assert!((r.omega_peak - (1.0 - 2.0 * zeta * zeta).sqrt()).abs() < 1e-6);
        assert!((want - 10.01252).abs() < 1e-5);
    }

    #[test]
    fn static_gain_ties_to_zero_frequency() {
        let cl = ClosedLoop::standard(
            Mat::from_fn(2, 2, |i, j| if i == j { -1.0 } else { 0.0 }),
            Mat::zeros(2, 2),
            Mat::from_fn(2, 2, |_, _| 1.0),
            Mat::from_fn(2, 2, |i, j| match (i, j) {
                (0, 0) => 3.0,
                (1, 1) => 1.0,
                _ => 0.0,
            }),
        )
        .unwrap();
        let r = linf_norm(&cl, DEFAULT_NORM_TOL).unwrap();
        assert!((r.value - 3.0).abs() < 1e-14);
        assert_eq!(r.omega_peak, 0.0);
    }

    #[test]
    fn unstable_loop_is_infinite() {
        let s = |v: f64| Mat::from_fn(1, 1, |_, _| v);
        let cl = ClosedLoop::standard(s(1.0), s(1.0), s(1.0), s(0.0)).unwrap();
        let r = hinf_norm(&cl, DEFAULT_NORM_TOL).unwrap();
        assert!(r.value.is_infinite() && r.unstable());
        // the axis supremum itself is finite: |1/(iw - 1)| peaks at w = 0
        let l = linf_norm(&cl, DEFAULT_NORM_TOL).unwrap();
        assert!((l.value - 1.0).abs() < 1e-12 && l.unstable());
    }

    #[test]
    fn oracle_bounds() {
        assert!((linf_oracle_grid(&first_order(), 1000) - 1.0).abs() < 1e-14);
        let zeta = 0.05;
        let want = 1.0 / (2.0 * zeta * (1.0f64 - zeta * zeta).sqrt());
        let g = linf_oracle_grid(&oscillator(zeta), 1_000_000);
        assert!(g <= want * (1.0 + 1e-12) && g >= want * (1.0 - 1e-6), "{g}");
    }

    #[test]
    fn oracle_feedthrough_only() {
        let cl = ClosedLoop::standard(Mat::from_fn(1, 1, |_, _| -1.0), Mat::zeros(1, 2), Mat::zeros(2, 1), Mat::from_fn(2, 2, |i, j| (i + 2 * j) as f64)).unwrap();
        let want = sigma_max(crate::linalg::to_complex(cl.dc.as_ref()).as_ref());
        assert!((linf_oracle_grid(&cl, 100) - want).abs() < 1e-14);
    }

    #[test]
    fn peak_matches_singular_value_at_peak() {
        let r = hinf_norm(&oscillator(0.2), DEFAULT_NORM_TOL).unwrap();
        let g = transfer_eval(&oscillator(0.2), c64::new(0.0, r.omega_peak)).unwrap();
        assert!((sigma_max(g.as_ref()) - r.value).abs() <= r.certified_tol * r.value);
    }

    #[test]
    fn descriptor_path_matches_standard() {
        // same oscillator with an appended algebraic state x3 = x1
        let zeta = 0.1;
        let ec = Mat::from_fn(3, 3, |i, j| if i == j && i < 2 { 1.0 } else { 0.0 });
        let ac = Mat::from_fn(3, 3, |i, j| match (i, j) {
            (0, 1) => 1.0,
            (1, 0) => -1.0,
            (1, 1) => -2.0 * zeta,
            (2, 0) => 1.0,
            (2, 2) => -1.0,
            _ => 0.0,
        });
        let bc = Mat::from_fn(3, 1, |i, _| if i == 1 { 1.0 } else { 0.0 });
        let cc = Mat::from_fn(1, 3, |_, j| if j == 2 { 1.0 } else { 0.0 });
        let cl = ClosedLoop::from_matrices(ec, ac, bc, cc, Mat::zeros(1, 1)).unwrap();
        let r = hinf_norm(&cl, DEFAULT_NORM_TOL).unwrap();
        let want = hinf_norm(&oscillator(zeta), DEFAULT_NORM_TOL).unwrap();
        assert!((r.value - want.value).abs() < 1e-9 * want.value, "{} {}", r.value, want.value);
    }
}
