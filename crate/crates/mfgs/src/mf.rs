//! Multi-fidelity drivers: restarted (RMFGS) and approximate (AMFGS)
//! gradient sampling over a model hierarchy, plus the single-fidelity
//! baseline (HFGS) with the same bookkeeping.

use std::sync::atomic::Ordering;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::{hinf_norm_with, NormOptions};
use crate::error::{Error, Result};
use crate::grad::{grad_hinf, ControllerGradient};
use crate::gs::{stabilize, Counter, GsLoop, GsParams, GsTrace, Kind, Objective, PlantObjective, Tracker};
use crate::lti::{assemble_closed_loop, Controller, Layout, ModelHierarchy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hfgs,
    Rmfgs,
    Amfgs,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Hfgs => "hfgs",
            Method::Rmfgs => "rmfgs",
            Method::Amfgs => "amfgs",
        }
    }
}

/// Source of the `wall_seconds` column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Timing {
    #[default]
    Wall,
    /// Deterministic cost model: every objective or gradient evaluation at
    /// level `l` costs `MODEL_UNIT_SECONDS * (n_l + nK)^3`.
    Model,
}

pub const MODEL_UNIT_SECONDS: f64 = 1e-8;

/// Per-level evaluation with counters. A posteriori top-level values used
/// only for reporting are counted separately.
pub struct Evaluator<'a> {
    hier: &'a ModelHierarchy,
    layout: Layout,
    counters: Vec<Counter>,
    posteriori: Counter,
    timing: Timing,
    norm: NormOptions,
    start: Instant,
}

impl<'a> Evaluator<'a> {
    pub fn new(hier: &'a ModelHierarchy, layout: Layout, timing: Timing) -> Self {
        Self {
            hier,
            layout,
            counters: (0..hier.levels()).map(|_| Counter::default()).collect(),
            posteriori: Counter::default(),
            timing,
            norm: NormOptions::default(),
            start: Instant::now(),
        }
    }

    pub fn with_norm(mut self, norm: NormOptions) -> Self {
        self.norm = norm;
        self
    }

    pub fn levels(&self) -> usize {
        self.hier.levels()
    }

    pub fn objective(&self, level: usize, kind: Kind) -> Result<PlantObjective<'_>> {
        let plant = self.hier.plant(level)?;
        Ok(PlantObjective::new(plant, self.layout, kind, Some(&self.counters[level - 1])).with_norm(self.norm))
    }

    fn posteriori_objective(&self) -> PlantObjective<'_> {
        PlantObjective::new(self.hier.top(), self.layout, Kind::Hinf, Some(&self.posteriori)).with_norm(self.norm)
    }

    /// `f^l(x)`; `+inf` for an unstable closed loop.
    pub fn eval_level(&self, level: usize, x: &[f64]) -> Result<f64> {
        self.objective(level, Kind::Hinf)?.value(x)
    }

    pub fn grad_level(&self, level: usize, x: &[f64]) -> Result<ControllerGradient> {
        let plant = self.hier.plant(level)?;
        self.counters[level - 1].geval.fetch_add(1, Ordering::Relaxed);
        let k = Controller::from_slice(self.layout, x)?;
        let nr = hinf_norm_with(&assemble_closed_loop(plant, &k)?, &self.norm)?;
        grad_hinf(plant, &k, &nr)
    }

    /// `(feval, geval)` at a 1-based level.
    pub fn count(&self, level: usize) -> (u64, u64) {
        self.counters[level - 1].get()
    }

    pub fn posteriori_count(&self) -> u64 {
        self.posteriori.get().0
    }
}

impl Tracker for Evaluator<'_> {
    fn seconds(&self) -> f64 {
        match self.timing {
            Timing::Wall => self.start.elapsed().as_secs_f64(),
            Timing::Model => self
                .counters
                .iter()
                .zip(self.hier.plants())
                .map(|(c, p)| {
                    let (f, g) = c.get();
                    let n = (p.dims().n + self.layout.nk) as f64;
                    (f + g) as f64 * MODEL_UNIT_SECONDS * n * n * n
                })
                .sum(),
        }
    }

    fn counts(&self) -> (Vec<u64>, Vec<u64>) {
        self.counters.iter().map(Counter::get).unzip()
    }
}

/// Per-level parameters, level 1 first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSchedule {
    pub levels: Vec<GsParams>,
}

impl LevelSchedule {
    /// Radii and targets start at `10^-l` (floored at 1e-4) with
    /// termination tolerances 1e-4 on every level.
    pub fn rmfgs(levels: usize, n: usize) -> Self {
        Self {
            levels: (1..=levels)
                .map(|l| {
                    let r = decade(l);
                    GsParams { eps0: r, nu0: r, ..GsParams::new(n) }
                })
                .collect(),
        }
    }

    /// As [`LevelSchedule::rmfgs`], but the first two levels stop one
    /// decade below their starting radius.
    pub fn amfgs(levels: usize, n: usize) -> Self {
        let mut s = Self::rmfgs(levels, n);
        for (i, p) in s.levels.iter_mut().enumerate() {
            if i < 2 && i + 1 < levels {
                let tol = decade(i + 2);
                p.eps_opt = tol;
                p.nu_opt = tol;
            }
        }
        s
    }

    pub fn for_method(method: Method, levels: usize, n: usize) -> Self {
        match method {
            Method::Hfgs => Self { levels: vec![GsParams::new(n)] },
            Method::Rmfgs => Self::rmfgs(levels, n),
            Method::Amfgs => Self::amfgs(levels, n),
        }
    }

    pub fn validate(&self, levels: usize, n: usize) -> Result<()> {
        if self.levels.len() != levels {
            return Err(Error::InvalidParameter(format!(
                "schedule has {} entries but the run needs {levels}",
                self.levels.len()
            )));
        }
        self.levels.iter().try_for_each(|p| p.validate(n))
    }
}

fn decade(l: usize) -> f64 {
    match l {
        1 => 0.1,
        2 => 0.01,
        3 => 0.001,
        _ => 1e-4,
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub timing: Timing,
    /// Compute `f^L` at every RMFGS iterate instead of only at level ends.
    pub posteriori_per_iterate: bool,
    /// Parameters of the stabilization phase; the level's own parameters
    /// when absent.
    pub stabilize: Option<GsParams>,
    pub margin: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct LevelOutcome {
    pub level: usize,
    pub stabilization: Option<GsTrace>,
    pub trace: GsTrace,
    /// Line-search objective at the level's final iterate.
    pub f_level: f64,
    /// `f^L` at the level's final iterate.
    pub f_top: f64,
}

#[derive(Clone, Debug)]
pub struct MfResult {
    pub method: Method,
    pub layout: Layout,
    pub x_final: Vec<f64>,
    pub f_final: f64,
    pub levels: Vec<LevelOutcome>,
    pub feval: Vec<u64>,
    pub geval: Vec<u64>,
    pub posteriori_feval: u64,
    pub seconds: f64,
}

impl MfResult {
    pub fn controller(&self) -> Controller {
        Controller::from_slice(self.layout, &self.x_final).expect("layout matches the run")
    }
}

/// Normal random controller; `DK` stays zero when fixed.
pub fn random_controller(layout: Layout, seed: u64) -> Controller {
    let mut rng = ChaCha8Rng::seed_from_u64_stream(seed, 1);
    let x: Vec<f64> = (0..layout.len()).map(|_| rng.sample(StandardNormal)).collect();
    Controller::from_slice(layout, &x).expect("length matches layout")
}

trait SeedStream {
    fn seed_from_u64_stream(seed: u64, stream: u64) -> Self;
}

impl SeedStream for ChaCha8Rng {
    fn seed_from_u64_stream(seed: u64, stream: u64) -> Self {
        use rand::SeedableRng;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        r
    }
}

/// Sampling generator for a run seed, independent of [`random_controller`].
pub fn sampling_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64_stream(seed, 0)
}

struct Driver<'e, 'h> {
    ev: &'e Evaluator<'h>,
    opts: &'e RunOptions,
}

impl Driver<'_, '_> {
    /// Stabilizes on `h^level` when `f0` is infinite.
    fn ensure_finite<R: Rng + ?Sized>(
        &self,
        level: usize,
        f: &dyn Objective,
        x: Vec<f64>,
        f0: f64,
        params: &GsParams,
        rng: &mut R,
    ) -> Result<(Vec<f64>, f64, Option<GsTrace>)> {
        if f0.is_finite() {
            return Ok((x, f0, None));
        }
        let h = self.ev.objective(level, Kind::SpecAbs)?;
        let sp = self.opts.stabilize.as_ref().unwrap_or(params);
        let tr = stabilize(&h, x, sp, rng, self.opts.margin, level, self.ev)?;
        let x = tr.final_x().to_vec();
        let f0 = f.value(&x)?;
        if !f0.is_finite() {
            return Err(Error::InfiniteStart);
        }
        Ok((x, f0, Some(tr)))
    }

    fn finish(&self, method: Method, x: Vec<f64>, f_final: f64, levels: Vec<LevelOutcome>) -> MfResult {
        let (feval, geval) = self.ev.counts();
        MfResult {
            method,
            layout: self.ev.layout,
            x_final: x,
            f_final,
            levels,
            feval,
            geval,
            posteriori_feval: self.ev.posteriori_count(),
            seconds: self.ev.seconds(),
        }
    }
}

/// Gradient sampling on the top level only.
pub fn run_hfgs<R: Rng + ?Sized>(ev: &Evaluator<'_>, k0: &Controller, params: &GsParams, rng: &mut R, opts: &RunOptions) -> Result<MfResult> {
    let d = Driver { ev, opts };
    let top = ev.levels();
    let f = ev.objective(top, Kind::Hinf)?;
    let x0 = k0.to_vec();
    let f0 = f.value(&x0)?;
    let (x, f0, stab) = d.ensure_finite(top, &f, x0, f0, params, rng)?;
    let trace = GsLoop {
        line: &f,
        anchor: &f,
        samples: &f,
        level: top,
        line_is_top: true,
        stop_below: None,
        tracker: ev,
    }
    .run(x, Some(f0), params, rng)?;
    let (x, fl) = (trace.final_x().to_vec(), trace.final_f());
    let out = LevelOutcome {
        level: top,
        stabilization: stab,
        trace,
        f_level: fl,
        f_top: fl,
    };
    Ok(d.finish(Method::Hfgs, x, fl, vec![out]))
}

/// Level-by-level gradient sampling, warm-starting each level at the
/// previous level's final iterate.
pub fn run_rmfgs<R: Rng + ?Sized>(ev: &Evaluator<'_>, k0: &Controller, sched: &LevelSchedule, rng: &mut R, opts: &RunOptions) -> Result<MfResult> {
    let d = Driver { ev, opts };
    let top = ev.levels();
    sched.validate(top, k0.layout().len())?;
    let post = ev.posteriori_objective();
    let mut x = k0.to_vec();
    let mut outs = Vec::with_capacity(top);
    for (idx, params) in sched.levels.iter().enumerate() {
        let level = idx + 1;
        let f = ev.objective(level, Kind::Hinf)?;
        let f0 = f.value(&x)?;
        let (xs, f0, stab) = d.ensure_finite(level, &f, x, f0, params, rng)?;
        let mut trace = GsLoop {
            line: &f,
            anchor: &f,
            samples: &f,
            level,
            line_is_top: level == top,
            stop_below: None,
            tracker: ev,
        }
        .run(xs, Some(f0), params, rng)?;
        if opts.posteriori_per_iterate && level < top {
            for r in &mut trace.records {
                r.f_top = post.value(&r.x)?;
            }
        }
        x = trace.final_x().to_vec();
        let f_level = trace.final_f();
        let f_top = if level == top {
            f_level
        } else {
            match trace.records.last_mut() {
                Some(r) if !r.f_top.is_nan() => r.f_top,
                Some(r) => {
                    // the last record holds the level's final iterate
                    r.f_top = post.value(&x)?;
                    r.f_top
                }
                None => post.value(&x)?,
            }
        };
        outs.push(LevelOutcome {
            level,
            stabilization: stab,
            trace,
            f_level,
            f_top,
        });
    }
    let f_final = outs.last().map_or(f64::NAN, |o| o.f_top);
    Ok(d.finish(Method::Rmfgs, x, f_final, outs))
}

/// Line search and anchor gradient on `f^L` at every level; the sampled
/// gradients come from `f^l`.
pub fn run_amfgs<R: Rng + ?Sized>(ev: &Evaluator<'_>, k0: &Controller, sched: &LevelSchedule, rng: &mut R, opts: &RunOptions) -> Result<MfResult> {
    let d = Driver { ev, opts };
    let top = ev.levels();
    sched.validate(top, k0.layout().len())?;
    let f_top = ev.objective(top, Kind::Hinf)?;
    let x0 = k0.to_vec();
    let f0 = f_top.value(&x0)?;
    let (mut x, mut fx, mut stab) = d.ensure_finite(top, &f_top, x0, f0, &sched.levels[top - 1], rng)?;
    let mut outs = Vec::with_capacity(top);
    for (idx, params) in sched.levels.iter().enumerate() {
        let level = idx + 1;
        let low;
        let samples: &dyn Objective = if level == top {
            &f_top
        } else {
            low = ev.objective(level, Kind::Hinf)?;
            &low
        };
        let trace = GsLoop {
            line: &f_top,
            anchor: &f_top,
            samples,
            level,
            line_is_top: true,
            stop_below: None,
            tracker: ev,
        }
        .run(x, Some(fx), params, rng)?;
        x = trace.final_x().to_vec();
        fx = trace.final_f();
        outs.push(LevelOutcome {
            level,
            stabilization: stab.take(),
            trace,
            f_level: fx,
            f_top: fx,
        });
    }
    Ok(d.finish(Method::Amfgs, x, fx, outs))
}

/// Dispatch on `method`; HFGS uses the last schedule entry.
pub fn run_method<R: Rng + ?Sized>(
    method: Method,
    ev: &Evaluator<'_>,
    k0: &Controller,
    sched: &LevelSchedule,
    rng: &mut R,
    opts: &RunOptions,
) -> Result<MfResult> {
    match method {
        Method::Hfgs => {
            let p = sched.levels.last().ok_or_else(|| Error::InvalidParameter("empty schedule".into()))?;
            run_hfgs(ev, k0, p, rng, opts)
        }
        Method::Rmfgs => run_rmfgs(ev, k0, sched, rng, opts),
        Method::Amfgs => run_amfgs(ev, k0, sched, rng, opts),
    }
}
