//! Gradient sampling: ball sampling, the line-search step, the inner
//! optimization loop, and stabilization on the spectral abscissa.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::analysis::{hinf_norm_with, spectral_abscissa, NormOptions, NormResult, SpectralOptions};
use crate::error::{Error, Result};
use crate::grad::{grad_hinf, grad_specabs};
use crate::lti::{assemble_closed_loop, Controller, DescriptorPlant, Layout};
use crate::qp::min_norm_hull;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GsParams {
    pub q: usize,
    pub eps0: f64,
    pub nu0: f64,
    pub eps_opt: f64,
    pub nu_opt: f64,
    pub theta_eps: f64,
    pub theta_nu: f64,
    pub beta: f64,
    pub gamma: f64,
    pub max_iters: usize,
    pub max_linesearch_halvings: usize,
}

impl GsParams {
    /// Defaults for a design vector of length `n`: `q = n + 2`, radii 0.1,
    /// tolerances 1e-4, reduction 0.1, Armijo `beta = 1e-4`, `gamma = 0.5`.
    pub fn new(n: usize) -> Self {
        Self {
            q: n + 2,
            eps0: 0.1,
            nu0: 0.1,
            eps_opt: 1e-4,
            nu_opt: 1e-4,
            theta_eps: 0.1,
            theta_nu: 0.1,
            beta: 1e-4,
            gamma: 0.5,
            max_iters: 500,
            max_linesearch_halvings: 50,
        }
    }

    /// `eps_opt == eps0` is accepted so the finest level of a decade
    /// schedule may start at its own tolerance.
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.q < n + 1 {
            return bad(format!("q = {} must be at least N + 1 = {}", self.q, n + 1));
        }
        if !(self.eps_opt > 0.0 && self.eps_opt <= self.eps0 && self.eps0.is_finite()) {
            return bad(format!("need 0 < eps_opt <= eps0, got {} and {}", self.eps_opt, self.eps0));
        }
        if !(self.nu_opt > 0.0 && self.nu_opt <= self.nu0 && self.nu0.is_finite()) {
            return bad(format!("need 0 < nu_opt <= nu0, got {} and {}", self.nu_opt, self.nu0));
        }
        for (name, v) in [("theta_eps", self.theta_eps), ("theta_nu", self.theta_nu), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} = {v} must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `q` points uniform on the closed Euclidean ball of radius `eps` around `x`.
pub fn sample_ball<R: Rng + ?Sized>(x: &[f64], eps: f64, q: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut out = Vec::with_capacity(q);
    while out.len() < q {
        let d: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let u: f64 = rng.random();
        let nd = norm(&d);
        if nd == 0.0 {
            continue;
        }
        let r = eps * u.powf(1.0 / n as f64) / nd;
        let p: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + r * di).collect();
        let dist = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        // rounding can push a point just outside; redraw keeps the law uniform
        if dist <= eps {
            out.push(p);
        }
    }
    out
}

/// An objective that is `+inf` outside its domain.
pub trait Objective: Sync {
    fn value(&self, x: &[f64]) -> Result<f64>;
    /// `None` where the value is not finite or the point is not
    /// differentiable.
    fn gradient(&self, x: &[f64]) -> Result<Option<Vec<f64>>>;

    /// Gradient together with the singular-value or eigenvalue gap at `x`
    /// (NaN when not applicable).
    fn gradient_with_gap(&self, x: &[f64]) -> Result<(Option<Vec<f64>>, f64)> {
        Ok((self.gradient(x)?, f64::NAN))
    }
}

/// Objective from a pair of closures.
pub struct FnObjective<F, G> {
    pub f: F,
    pub g: G,
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok((self.f)(x))
    }

    fn gradient(&self, x: &[f64]) -> Result<Option<Vec<f64>>> {
        Ok((self.f)(x).is_finite().then(|| (self.g)(x)))
    }
}

/// Evaluation counters for one objective.
#[derive(Debug, Default)]
pub struct Counter {
    pub feval: AtomicU64,
    pub geval: AtomicU64,
}

impl Counter {
    pub fn get(&self) -> (u64, u64) {
        (self.feval.load(Ordering::Relaxed), self.geval.load(Ordering::Relaxed))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    /// H-infinity norm of the closed loop.
    Hinf,
    /// Spectral abscissa of the closed loop.
    SpecAbs,
}

/// `f` or `h` on one plant, with an optional counter and a one-entry cache
/// so the gradient at an accepted line-search point reuses its norm.
pub struct PlantObjective<'a> {
    plant: &'a DescriptorPlant,
    layout: Layout,
    kind: Kind,
    counter: Option<&'a Counter>,
    norm: NormOptions,
    cache: Mutex<Option<(Vec<u64>, NormResult)>>,
}

fn bits(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

fn undifferentiable(e: &Error) -> bool {
    matches!(e, Error::Defective(_) | Error::SingularShift { .. })
}

impl<'a> PlantObjective<'a> {
    pub fn new(plant: &'a DescriptorPlant, layout: Layout, kind: Kind, counter: Option<&'a Counter>) -> Self {
        Self {
            plant,
            layout,
            kind,
            counter,
            norm: NormOptions::default(),
            cache: Mutex::new(None),
        }
    }

    pub fn with_norm(mut self, norm: NormOptions) -> Self {
        self.norm = norm;
        self
    }

    fn bump(&self, grad: bool) {
        if let Some(c) = self.counter {
            let a = if grad { &c.geval } else { &c.feval };
            a.fetch_add(1, Ordering::Relaxed);
        }
    }

    fn norm_at(&self, x: &[f64]) -> Result<NormResult> {
        let k = Controller::from_slice(self.layout, x)?;
        hinf_norm_with(&assemble_closed_loop(self.plant, &k)?, &self.norm)
    }
}

impl Objective for PlantObjective<'_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        self.bump(false);
        match self.kind {
            Kind::Hinf => {
                let nr = self.norm_at(x)?;
                let v = nr.value;
                *self.cache.lock().unwrap() = Some((bits(x), nr));
                Ok(v)
            }
            Kind::SpecAbs => {
                let k = Controller::from_slice(self.layout, x)?;
                let cl = assemble_closed_loop(self.plant, &k)?;
                Ok(spectral_abscissa(&cl, SpectralOptions { with_vectors: false })?.alpha)
            }
        }
    }

    fn gradient(&self, x: &[f64]) -> Result<Option<Vec<f64>>> {
        Ok(self.gradient_with_gap(x)?.0)
    }

    fn gradient_with_gap(&self, x: &[f64]) -> Result<(Option<Vec<f64>>, f64)> {
        self.bump(true);
        let k = Controller::from_slice(self.layout, x)?;
        let (res, gap) = match self.kind {
            Kind::Hinf => {
                let cached = {
                    let c = self.cache.lock().unwrap();
                    c.as_ref().filter(|(b, _)| *b == bits(x)).map(|(_, nr)| nr.clone())
                };
                let nr = match cached {
                    Some(nr) => nr,
                    None => self.norm_at(x)?,
                };
                if !nr.is_finite() {
                    return Ok((None, f64::NAN));
                }
                (grad_hinf(self.plant, &k, &nr), nr.sv_gap)
            }
            Kind::SpecAbs => {
                let cl = assemble_closed_loop(self.plant, &k)?;
                match spectral_abscissa(&cl, SpectralOptions::default()) {
                    Ok(sr) => (grad_specabs(self.plant, &k, &sr), sr.gap),
                    Err(e) => (Err(e), f64::NAN),
                }
            }
        };
        match res {
            Ok(g) => Ok((Some(g.as_vector), gap)),
            Err(e) if undifferentiable(&e) => Ok((None, gap)),
            Err(e) => Err(e),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// `||g|| <= nu_opt` and `eps <= eps_opt`: no move.
    Terminate,
    /// `||g|| <= nu`: shrink `nu` and `eps`, no move.
    Shrink,
    /// Armijo backtracking along `-g`.
    LineSearch,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Terminate => "terminate",
            Branch::Shrink => "shrink",
            Branch::LineSearch => "linesearch",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Step {
    pub x: Vec<f64>,
    pub f: f64,
    pub eps: f64,
    pub nu: f64,
    pub branch: Branch,
    /// Accepted step length; 0 when no move was made.
    pub t: f64,
    pub ls_evals: usize,
    pub ls_failed: bool,
}

/// One gradient-sampling step from `x` (with value `fx`) along the hull
/// element `g`.
pub fn gs_step(x: &[f64], fx: f64, g: &[f64], objective: &dyn Objective, eps: f64, nu: f64, p: &GsParams) -> Result<Step> {
    let gn = norm(g);
    let stay = |branch, eps, nu| Step {
        x: x.to_vec(),
        f: fx,
        eps,
        nu,
        branch,
        t: 0.0,
        ls_evals: 0,
        ls_failed: false,
    };
    if gn <= p.nu_opt && eps <= p.eps_opt {
        return Ok(stay(Branch::Terminate, eps, nu));
    }
    if gn <= nu {
        return Ok(stay(Branch::Shrink, p.theta_eps * eps, p.theta_nu * nu));
    }
    let gg = gn * gn;
    let mut t = 1.0;
    let mut evals = 0;
    for _ in 0..=p.max_linesearch_halvings {
        let trial: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - t * gi).collect();
        let ft = objective.value(&trial)?;
        evals += 1;
        // +inf and NaN both fail the comparison
        if ft < fx - p.beta * t * gg {
            return Ok(Step {
                x: trial,
                f: ft,
                eps,
                nu,
                branch: Branch::LineSearch,
                t,
                ls_evals: evals,
                ls_failed: false,
            });
        }
        t *= p.gamma;
    }
    let mut s = stay(Branch::LineSearch, eps, nu);
    s.ls_evals = evals;
    s.ls_failed = true;
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GsStatus {
    Converged,
    IterCap,
    LinesearchCap,
    /// Early exit once the objective dropped below the requested bound.
    TargetReached,
}

impl GsStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            GsStatus::Converged => "converged",
            GsStatus::IterCap => "iter_cap",
            GsStatus::LinesearchCap => "linesearch_cap",
            GsStatus::TargetReached => "target_reached",
        }
    }
}

#[derive(Clone, Debug)]
pub struct IterRecord {
    /// 1-based iteration index within the level.
    pub k: usize,
    pub level: usize,
    /// Iterate after the step.
    pub x: Vec<f64>,
    /// Line-search objective at `x`.
    pub f_level: f64,
    /// Top-level objective at `x`, NaN when not computed.
    pub f_top: f64,
    pub grad_norm: f64,
    /// Radius and target used for this iteration's samples.
    pub eps: f64,
    pub nu: f64,
    pub branch: Branch,
    pub step_t: f64,
    pub ls_evals: usize,
    pub wall_seconds: f64,
    /// Sample gradients discarded as non-finite or undifferentiable.
    pub dropped: usize,
    /// `<g, anchor gradient> - ||g||^2`, NaN when the anchor was dropped.
    pub anchor_gap: f64,
    /// Singular-value or eigenvalue gap at the iterate before the step.
    pub gap: f64,
    pub feval: Vec<u64>,
    pub geval: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct GsTrace {
    pub level: usize,
    pub x0: Vec<f64>,
    pub f0: f64,
    pub records: Vec<IterRecord>,
    pub status: GsStatus,
}

impl GsTrace {
    pub fn final_x(&self) -> &[f64] {
        self.records.last().map_or(&self.x0, |r| &r.x)
    }

    pub fn final_f(&self) -> f64 {
        self.records.last().map_or(self.f0, |r| r.f_level)
    }
}

/// Clock and evaluation counts stamped onto every record.
pub trait Tracker: Sync {
    fn seconds(&self) -> f64;
    /// Per-level objective and gradient evaluation counts.
    fn counts(&self) -> (Vec<u64>, Vec<u64>);
}

pub struct WallTracker(Instant);

impl WallTracker {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Tracker for WallTracker {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }

    fn counts(&self) -> (Vec<u64>, Vec<u64>) {
        (Vec::new(), Vec::new())
    }
}

/// The inner loop: sample, build the hull from the anchor gradient at `x^k`
/// and the sampled gradients, step on the line-search objective.
pub struct GsLoop<'a> {
    pub line: &'a dyn Objective,
    pub anchor: &'a dyn Objective,
    pub samples: &'a dyn Objective,
    pub level: usize,
    /// The line-search objective is the top-level objective.
    pub line_is_top: bool,
    /// Stop as soon as the line-search value is strictly below this.
    pub stop_below: Option<f64>,
    pub tracker: &'a dyn Tracker,
}

impl GsLoop<'_> {
    pub fn run<R: Rng + ?Sized>(&self, x0: Vec<f64>, f0: Option<f64>, p: &GsParams, rng: &mut R) -> Result<GsTrace> {
        p.validate(x0.len())?;
        let f0 = match f0 {
            Some(v) => v,
            None => self.line.value(&x0)?,
        };
        if !f0.is_finite() {
            return Err(Error::InfiniteStart);
        }
        let mut trace = GsTrace {
            level: self.level,
            x0: x0.clone(),
            f0,
            records: Vec::new(),
            status: GsStatus::IterCap,
        };
        if self.stop_below.is_some_and(|b| f0 < b) {
            trace.status = GsStatus::TargetReached;
            return Ok(trace);
        }
        let (mut x, mut fx, mut eps, mut nu) = (x0, f0, p.eps0, p.nu0);
        for k in 1..=p.max_iters {
            let mut points = vec![x.clone()];
            points.extend(sample_ball(&x, eps, p.q, rng));
            let (grads, gaps): (Vec<_>, Vec<_>) = points
                .par_iter()
                .enumerate()
                .map(|(i, pt)| {
                    if i == 0 {
                        self.anchor.gradient_with_gap(pt)
                    } else {
                        Ok((self.samples.gradient(pt)?, f64::NAN))
                    }
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip();
            let anchor = grads[0].clone().filter(|g| g.iter().all(|v| v.is_finite()));
            let cols: Vec<Vec<f64>> = grads.into_iter().flatten().filter(|g| g.iter().all(|v| v.is_finite())).collect();
            let dropped = p.q + 1 - cols.len();
            let hull = min_norm_hull(&cols)?;
            let g = hull.g_star;
            let gg = dot(&g, &g);
            let anchor_gap = anchor.as_ref().map_or(f64::NAN, |a| dot(&g, a) - gg);

            let step = gs_step(&x, fx, &g, self.line, eps, nu, p)?;
            let (feval, geval) = self.tracker.counts();
            trace.records.push(IterRecord {
                k,
                level: self.level,
                x: step.x.clone(),
                f_level: step.f,
                f_top: if self.line_is_top { step.f } else { f64::NAN },
                grad_norm: gg.sqrt(),
                eps,
                nu,
                branch: step.branch,
                step_t: step.t,
                ls_evals: step.ls_evals,
                wall_seconds: self.tracker.seconds(),
                dropped,
                anchor_gap,
                gap: gaps[0],
                feval,
                geval,
            });
            if step.branch == Branch::Terminate {
                trace.status = GsStatus::Converged;
                return Ok(trace);
            }
            if step.ls_failed {
                trace.status = GsStatus::LinesearchCap;
                return Ok(trace);
            }
            (x, fx, eps, nu) = (step.x, step.f, step.eps, step.nu);
            if self.stop_below.is_some_and(|b| fx < b) {
                trace.status = GsStatus::TargetReached;
                return Ok(trace);
            }
        }
        Ok(trace)
    }
}

/// Single-fidelity gradient sampling on one objective.
pub fn run_gs<R: Rng + ?Sized>(objective: &dyn Objective, x0: Vec<f64>, params: &GsParams, rng: &mut R) -> Result<GsTrace> {
    let tracker = WallTracker::start();
    GsLoop {
        line: objective,
        anchor: objective,
        samples: objective,
        level: 1,
        line_is_top: true,
        stop_below: None,
        tracker: &tracker,
    }
    .run(x0, None, params, rng)
}

/// Default stabilization margin for a starting abscissa `h0`.
pub fn default_margin(h0: f64) -> f64 {
    1e-6 * (1.0 + h0.abs())
}

/// Gradient sampling on the spectral abscissa `h`, stopping once
/// `h < -margin`. A starting point that already satisfies this is returned
/// with an empty trace.
pub fn stabilize<R: Rng + ?Sized>(
    h: &dyn Objective,
    x0: Vec<f64>,
    params: &GsParams,
    rng: &mut R,
    margin: Option<f64>,
    level: usize,
    tracker: &dyn Tracker,
) -> Result<GsTrace> {
    let h0 = h.value(&x0)?;
    let margin = margin.unwrap_or_else(|| default_margin(h0));
    let trace = GsLoop {
        line: h,
        anchor: h,
        samples: h,
        level,
        line_is_top: false,
        stop_below: Some(-margin),
        tracker,
    }
    .run(x0, Some(h0), params, rng)?;
    let hf = trace.final_f();
    if !(hf < 0.0 && hf < -margin) {
        return Err(Error::StabilizationFailed { h: hf, iters: trace.records.len() });
    }
    Ok(trace)
}

/// [`stabilize`] on a single plant.
pub fn stabilize_plant<R: Rng + ?Sized>(
    plant: &DescriptorPlant,
    layout: Layout,
    x0: Vec<f64>,
    params: &GsParams,
    rng: &mut R,
    margin: Option<f64>,
) -> Result<GsTrace> {
    let h = PlantObjective::new(plant, layout, Kind::SpecAbs, None);
    stabilize(&h, x0, params, rng, margin, 1, &WallTracker::start())
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::Mat;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quad() -> FnObjective<impl Fn(&[f64]) -> f64 + Sync, impl Fn(&[f64]) -> Vec<f64> + Sync> {
        FnObjective {
            f: |x: &[f64]| 0.5 * dot(x, x),
            g: |x: &[f64]| x.to_vec(),
        }
    }

    fn params2() -> GsParams {
        GsParams { q: 4, ..GsParams::new(2) }
    }

    #[test]
    fn defaults_validate() {
        GsParams::new(8).validate(8).unwrap();
        assert_eq!(GsParams::new(8).q, 10);
        assert!(GsParams { q: 8, ..GsParams::new(8) }.validate(8).is_err());
        assert!(GsParams { gamma: 1.0, ..GsParams::new(1) }.validate(1).is_err());
        assert!(GsParams { eps_opt: 0.2, ..GsParams::new(1) }.validate(1).is_err());
        GsParams { eps_opt: 0.1, nu_opt: 0.1, ..GsParams::new(1) }.validate(1).unwrap();
    }

    #[test]
    fn ball_samples_inside_and_deterministic() {
        let x = [1.0, -2.0, 0.5];
        let a = sample_ball(&x, 0.3, 200, &mut ChaCha8Rng::seed_from_u64(3));
        let b = sample_ball(&x, 0.3, 200, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        for p in &a {
            let d: f64 = p.iter().zip(&x).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
            assert!(d <= 0.3);
        }
    }

    #[test]
    fn tiny_radius_collapses_to_center() {
        let x = [1.0, -2.0];
        for p in sample_ball(&x, 1e-300, 20, &mut ChaCha8Rng::seed_from_u64(0)) {
            assert_eq!(p, x.to_vec());
        }
    }

    #[test]
    fn ball_area_scaling() {
        let pts = sample_ball(&[0.0, 0.0], 1.0, 100_000, &mut ChaCha8Rng::seed_from_u64(11));
        let inner = pts.iter().filter(|p| norm(p) <= 0.5).count() as f64 / 1e5;
        assert!((inner - 0.25).abs() <= 0.01, "{inner}");
    }

    #[test]
    fn branch_terminate() {
        let p = params2();
        let s = gs_step(&[1.0, 2.0], 2.5, &[1e-5, 0.0], &quad(), 1e-4, 1e-3, &p).unwrap();
        assert_eq!(s.branch, Branch::Terminate);
        assert_eq!((s.x, s.f, s.eps, s.nu), (vec![1.0, 2.0], 2.5, 1e-4, 1e-3));
    }

    #[test]
    fn branch_shrink() {
        let p = params2();
        let s = gs_step(&[1.0, 2.0], 2.5, &[1e-2, 0.0], &quad(), 0.1, 0.1, &p).unwrap();
        assert_eq!(s.branch, Branch::Shrink);
        assert_eq!(s.x, vec![1.0, 2.0]);
        assert_eq!((s.eps, s.nu), (0.1 * 0.1, 0.1 * 0.1));
    }

    #[test]
    fn branch_armijo_full_step() {
        let p = params2();
        let s = gs_step(&[1.0, 0.0], 0.5, &[1.0, 0.0], &quad(), 0.1, 0.1, &p).unwrap();
        assert_eq!(s.branch, Branch::LineSearch);
        assert_eq!((s.t, s.ls_evals), (1.0, 1));
        assert_eq!(s.x, vec![0.0, 0.0]);
    }

    #[test]
    fn armijo_backtracks() {
        let p = params2();
        // g = 4 e1 from x = e1 overshoots: f(1-4t) < 0.5 - 1e-4*16t needs t = 0.25
        let s = gs_step(&[1.0, 0.0], 0.5, &[4.0, 0.0], &quad(), 0.1, 0.1, &p).unwrap();
        assert_eq!((s.t, s.ls_evals), (0.25, 3));
    }

    #[test]
    fn infinite_ray_hits_cap() {
        let p = params2();
        let inf = FnObjective {
            f: |_: &[f64]| f64::INFINITY,
            g: |x: &[f64]| x.to_vec(),
        };
        let s = gs_step(&[1.0, 0.0], 0.5, &[1.0, 0.0], &inf, 0.1, 0.1, &p).unwrap();
        assert!(s.ls_failed);
        assert_eq!((s.t, s.x.clone(), s.ls_evals), (0.0, vec![1.0, 0.0], 51));
    }

    #[test]
    fn smooth_quadratic_converges() {
        let obj = FnObjective {
            f: |x: &[f64]| dot(x, x),
            g: |x: &[f64]| x.iter().map(|v| 2.0 * v).collect(),
        };
        let p = GsParams { max_iters: 200, ..params2() };
        let tr = run_gs(&obj, vec![1.0, 1.0], &p, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(norm(tr.final_x()) <= 1e-2);
        assert!(tr.records.len() <= 200);
    }

    #[test]
    fn nonsmooth_abs_sum() {
        let obj = FnObjective {
            f: |x: &[f64]| x[0].abs() + 10.0 * x[1].abs(),
            g: |x: &[f64]| vec![x[0].signum(), 10.0 * x[1].signum()],
        };
        let p = GsParams { max_iters: 500, ..params2() };
        let tr = run_gs(&obj, vec![1.0, 1.0], &p, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!(tr.final_f() <= 1e-2, "{}", tr.final_f());
        if tr.status == GsStatus::Converged {
            let last = tr.records.last().unwrap();
            assert!(last.grad_norm <= p.nu_opt && last.eps <= p.eps_opt);
        }
        for w in tr.records.windows(2) {
            assert!(w[1].f_level <= w[0].f_level);
            assert!(w[1].eps <= w[0].eps && w[1].nu <= w[0].nu);
        }
    }

    #[test]
    fn zero_iterations() {
        let p = GsParams { max_iters: 0, ..params2() };
        let tr = run_gs(&quad(), vec![1.0, 1.0], &p, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(tr.records.is_empty());
        assert_eq!(tr.status, GsStatus::IterCap);
        assert_eq!(tr.final_x(), &[1.0, 1.0]);
    }

    #[test]
    fn infinite_start_rejected() {
        let inf = FnObjective {
            f: |_: &[f64]| f64::INFINITY,
            g: |x: &[f64]| x.to_vec(),
        };
        let err = run_gs(&inf, vec![0.0, 0.0], &params2(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::InfiniteStart));
    }

    fn s(v: f64) -> Mat<f64> {
        Mat::from_fn(1, 1, |_, _| v)
    }

    fn scalar_plant() -> DescriptorPlant {
        DescriptorPlant::new(s(1.0), s(-1.0), s(1.0), s(1.0), s(1.0), s(1.0), s(0.0), s(0.0), s(0.0), s(0.0)).unwrap()
    }

    #[test]
    fn stable_start_needs_no_iterations() {
        let l = Layout::new(1, 1, 1, true);
        let p = GsParams::new(3);
        // Ac = [[-1, 0], [0, -1]] so h = -1
        let tr = stabilize_plant(&scalar_plant(), l, vec![-1.0, 0.0, 0.0], &p, &mut ChaCha8Rng::seed_from_u64(0), None).unwrap();
        assert!(tr.records.is_empty());
        assert_eq!(tr.status, GsStatus::TargetReached);
    }

    #[test]
    fn destabilizing_scalar_controller_is_fixed() {
        let l = Layout::new(1, 1, 1, true);
        let p = GsParams { max_iters: 50, ..GsParams::new(3) };
        // AK = 0.5 decoupled: h = +0.5
        let tr = stabilize_plant(&scalar_plant(), l, vec![0.5, 0.0, 0.0], &p, &mut ChaCha8Rng::seed_from_u64(2), None).unwrap();
        assert_eq!(tr.f0, 0.5);
        assert!(tr.final_f() < 0.0);
        assert!(tr.records.len() <= 50);
    }

    #[test]
    fn zero_margin_boundary_is_not_accepted() {
        let l = Layout::new(1, 1, 1, true);
        let p = GsParams { max_iters: 50, ..GsParams::new(3) };
        let tr = stabilize_plant(&scalar_plant(), l, vec![0.0, 0.0, 0.0], &p, &mut ChaCha8Rng::seed_from_u64(2), Some(0.0)).unwrap();
        assert_eq!(tr.f0, 0.0);
        assert!(!tr.records.is_empty());
        assert!(tr.final_f() < 0.0);
    }

    #[test]
    fn plant_objective_counts_and_caches() {
        let l = Layout::new(1, 1, 1, true);
        let c = Counter::default();
        let plant = scalar_plant();
        let f = PlantObjective::new(&plant, l, Kind::Hinf, Some(&c));
        let x = [-2.0, 0.7, 0.4];
        let v = f.value(&x).unwrap();
        let g1 = f.gradient(&x).unwrap().unwrap();
        assert_eq!(c.get(), (1, 1));
        let fresh = PlantObjective::new(&plant, l, Kind::Hinf, None);
        assert_eq!(fresh.gradient(&x).unwrap().unwrap(), g1);
        assert!(v.is_finite());
        assert_eq!(f.gradient(&[1.0, 0.0, 0.0]).unwrap(), None);
        assert_eq!(f.value(&[1.0, 0.0, 0.0]).unwrap(), f64::INFINITY);
    }
}
