//! Experiment configuration, run artifacts (trace, summary, controller) and
//! cross-run comparison.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{spectral_abscissa, NormOptions, SpectralOptions, DEFAULT_CERTIFY_MAX_ORDER, DEFAULT_NORM_TOL};
use crate::bench::{build_heat_hierarchy, HeatSpec};
use crate::error::{Error, Result};
use crate::gs::{GsParams, GsTrace};
use crate::io::{load_hierarchy, save_hierarchy, write_matrix_market};
use crate::lti::{assemble_closed_loop, Controller, Layout, ModelHierarchy};
use crate::mf::{random_controller, run_method, sampling_rng, Evaluator, LevelSchedule, Method, MfResult, RunOptions, Timing};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSource {
    Heat(HeatSpec),
    /// Path relative to the config file.
    Manifest { path: PathBuf },
}

impl ModelSource {
    pub fn build(&self, base: &Path) -> Result<ModelHierarchy> {
        match self {
            ModelSource::Heat(spec) => build_heat_hierarchy(spec),
            ModelSource::Manifest { path } => load_hierarchy(&base.join(path)),
        }
    }
}

/// Per-level overrides of the default schedule.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsOverride {
    pub q: Option<usize>,
    pub eps0: Option<f64>,
    pub nu0: Option<f64>,
    pub eps_opt: Option<f64>,
    pub nu_opt: Option<f64>,
    pub theta_eps: Option<f64>,
    pub theta_nu: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub max_iters: Option<usize>,
    pub max_linesearch_halvings: Option<usize>,
}

impl ParamsOverride {
    pub fn apply(&self, mut p: GsParams) -> GsParams {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { p.$f = v; })* };
        }
        set!(q, eps0, nu0, eps_opt, nu_opt, theta_eps, theta_nu, beta, gamma, max_iters, max_linesearch_halvings);
        p
    }
}

fn default_true() -> bool {
    true
}

fn default_certify() -> usize {
    DEFAULT_CERTIFY_MAX_ORDER
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub model: ModelSource,
    pub nk: usize,
    #[serde(default = "default_true")]
    pub dk_fixed_zero: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub timing: Timing,
    /// One entry per level (a single entry for hfgs); defaults when empty.
    #[serde(default)]
    pub schedule: Vec<ParamsOverride>,
    /// Overrides for the stabilization phase.
    pub stabilize: Option<ParamsOverride>,
    #[serde(default)]
    pub posteriori_per_iterate: bool,
    /// Closed-loop orders above this use the uncertified peak search.
    #[serde(default = "default_certify")]
    pub certify_max_order: usize,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    /// Default schedule for the method with the per-level overrides applied.
    pub fn schedule(&self, levels: usize, n: usize) -> Result<LevelSchedule> {
        let want = if self.method == Method::Hfgs { 1 } else { levels };
        let mut s = LevelSchedule::for_method(self.method, want, n);
        if !self.schedule.is_empty() {
            if self.schedule.len() != want {
                return Err(Error::InvalidParameter(format!(
                    "schedule has {} entries but {} needs {want}",
                    self.schedule.len(),
                    self.method.as_str()
                )));
            }
            for (p, o) in s.levels.iter_mut().zip(&self.schedule) {
                *p = o.apply(p.clone());
            }
        }
        s.validate(want, n)?;
        Ok(s)
    }
}

/// Everything a run needs, validated before any optimization starts.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub hierarchy: ModelHierarchy,
    pub layout: Layout,
    pub schedule: LevelSchedule,
    pub options: RunOptions,
}

pub fn prepare(config: ExperimentConfig, base: &Path) -> Result<Prepared> {
    let hierarchy = config.model.build(base)?;
    let d = hierarchy.top().dims();
    let layout = Layout::new(config.nk, d.m2, d.p2, config.dk_fixed_zero);
    let n = layout.len();
    let schedule = config.schedule(hierarchy.levels(), n)?;
    let stabilize = config.stabilize.as_ref().map(|o| o.apply(GsParams::new(n)));
    if let Some(p) = &stabilize {
        p.validate(n)?;
    }
    let options = RunOptions {
        timing: config.timing,
        posteriori_per_iterate: config.posteriori_per_iterate,
        stabilize,
        margin: None,
    };
    Ok(Prepared {
        config,
        hierarchy,
        layout,
        schedule,
        options,
    })
}

pub fn execute(p: &Prepared) -> Result<MfResult> {
    let k0 = random_controller(p.layout, p.config.seed);
    let ev = Evaluator::new(&p.hierarchy, p.layout, p.options.timing).with_norm(NormOptions {
        tol: DEFAULT_NORM_TOL,
        certify_max_order: p.config.certify_max_order,
    });
    run_method(p.config.method, &ev, &k0, &p.schedule, &mut sampling_rng(p.config.seed), &p.options)
}

/// FNV-1a over the dimensions and matrix bits of every level.
pub fn fingerprint(h: &ModelHierarchy) -> String {
    let mut acc: u64 = 0xcbf29ce484222325;
    let mut eat = |v: u64| {
        for b in v.to_le_bytes() {
            acc ^= b as u64;
            acc = acc.wrapping_mul(0x100000001b3);
        }
    };
    for p in h.plants() {
        for (_, m) in p.matrices() {
            eat(m.nrows() as u64);
            eat(m.ncols() as u64);
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    eat(m[(i, j)].to_bits());
                }
            }
        }
    }
    format!("{acc:016x}")
}

const FIXED_COLUMNS: [&str; 9] = ["wall_seconds", "level", "k", "f_level", "f_L", "grad_norm", "eps", "nu", "step_t"];

/// Comma-separated trace. Stabilization records carry `phase = stabilize`
/// and the spectral abscissa in `f_level`.
pub fn format_trace(r: &MfResult) -> String {
    let levels = r.feval.len();
    let mut s = FIXED_COLUMNS.join(",");
    for l in 1..=levels {
        let _ = write!(s, ",n_feval_level{l}");
    }
    for l in 1..=levels {
        let _ = write!(s, ",n_geval_level{l}");
    }
    s.push_str(",phase,branch,gap\n");
    let mut emit = |tr: &GsTrace, phase: &str| {
        for rec in &tr.records {
            let _ = write!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                rec.wall_seconds, rec.level, rec.k, rec.f_level, rec.f_top, rec.grad_norm, rec.eps, rec.nu, rec.step_t
            );
            for c in rec.feval.iter().chain(&rec.geval) {
                let _ = write!(s, ",{c}");
            }
            let _ = writeln!(s, ",{phase},{},{}", rec.branch.as_str(), rec.gap);
        }
    };
    for o in &r.levels {
        if let Some(st) = &o.stabilization {
            emit(st, "stabilize");
        }
        emit(&o.trace, "optimize");
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub wall_seconds: f64,
    pub level: usize,
    pub k: usize,
    pub f_level: f64,
    pub f_l: f64,
    pub grad_norm: f64,
    pub eps: f64,
    pub nu: f64,
    pub step_t: f64,
    pub feval: Vec<u64>,
    pub geval: Vec<u64>,
    pub phase: String,
    pub branch: String,
    pub gap: f64,
}

pub fn parse_trace(text: &str, path: &Path) -> Result<Vec<TraceRow>> {
    let err = |m: String| Error::parse(path, m);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| err("empty trace".into()))?.split(',').collect();
    if header.len() < FIXED_COLUMNS.len() + 3 || header[..FIXED_COLUMNS.len()] != FIXED_COLUMNS {
        return Err(err("unexpected trace header".into()));
    }
    let levels = (header.len() - FIXED_COLUMNS.len() - 3) / 2;
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        let t: Vec<&str> = line.split(',').collect();
        if t.len() != header.len() {
            return Err(err(format!("row {} has {} fields, expected {}", ln + 2, t.len(), header.len())));
        }
        let f = |i: usize| t[i].parse::<f64>().map_err(|_| err(format!("row {}: bad number {:?}", ln + 2, t[i])));
        let u = |i: usize| t[i].parse::<u64>().map_err(|_| err(format!("row {}: bad count {:?}", ln + 2, t[i])));
        let c0 = FIXED_COLUMNS.len();
        rows.push(TraceRow {
            wall_seconds: f(0)?,
            level: u(1)? as usize,
            k: u(2)? as usize,
            f_level: f(3)?,
            f_l: f(4)?,
            grad_norm: f(5)?,
            eps: f(6)?,
            nu: f(7)?,
            step_t: f(8)?,
            feval: (c0..c0 + levels).map(u).collect::<Result<_>>()?,
            geval: (c0 + levels..c0 + 2 * levels).map(u).collect::<Result<_>>()?,
            phase: t[c0 + 2 * levels].to_string(),
            branch: t[c0 + 2 * levels + 1].to_string(),
            gap: f(c0 + 2 * levels + 2)?,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LevelSummary {
    pub level: usize,
    pub n: usize,
    pub iterations: usize,
    pub status: String,
    pub stabilization_iterations: usize,
    pub f_level: f64,
    pub f_top: f64,
    pub feval: u64,
    pub geval: u64,
}

/// Deterministic given config and seed; wall time lives in `wall.toml`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Summary {
    pub method: Method,
    pub seed: u64,
    pub timing: Timing,
    pub hierarchy: String,
    pub levels: usize,
    pub nk: usize,
    pub dk_fixed_zero: bool,
    pub f_final: f64,
    pub posteriori_feval: u64,
    pub feval: Vec<u64>,
    pub geval: Vec<u64>,
    pub x_final: Vec<f64>,
    #[serde(rename = "level")]
    pub per_level: Vec<LevelSummary>,
}

pub fn summarize(p: &Prepared, r: &MfResult) -> Summary {
    Summary {
        method: r.method,
        seed: p.config.seed,
        timing: p.config.timing,
        hierarchy: fingerprint(&p.hierarchy),
        levels: p.hierarchy.levels(),
        nk: p.layout.nk,
        dk_fixed_zero: p.layout.dk_fixed_zero,
        f_final: r.f_final,
        posteriori_feval: r.posteriori_feval,
        feval: r.feval.clone(),
        geval: r.geval.clone(),
        x_final: r.x_final.clone(),
        per_level: r
            .levels
            .iter()
            .map(|o| LevelSummary {
                level: o.level,
                n: p.hierarchy.plant(o.level).map(|q| q.dims().n).unwrap_or(0),
                iterations: o.trace.records.len(),
                status: o.trace.status.as_str().to_string(),
                stabilization_iterations: o.stabilization.as_ref().map_or(0, |s| s.records.len()),
                f_level: o.f_level,
                f_top: o.f_top,
                feval: r.feval[o.level - 1],
                geval: r.geval[o.level - 1],
            })
            .collect(),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_controller(dir: &Path, k: &Controller) -> Result<()> {
    for (name, m) in [("AK", k.ak()), ("BK", k.bk()), ("CK", k.ck()), ("DK", k.dk())] {
        write_matrix_market(&dir.join(format!("{name}.mtx")), m)?;
    }
    Ok(())
}

/// Runs a prepared experiment and writes `trace.csv`, `summary.toml`,
/// `wall.toml` and the controller matrices into `out`.
pub fn run_to_dir(p: &Prepared, out: &Path) -> Result<(MfResult, Summary)> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let wall = std::time::Instant::now();
    let r = execute(p)?;
    let secs = wall.elapsed().as_secs_f64();
    write(&out.join("trace.csv"), &format_trace(&r))?;
    let summary = summarize(p, &r);
    let text = toml::to_string(&summary).map_err(|e| Error::parse(out.join("summary.toml"), e.to_string()))?;
    write(&out.join("summary.toml"), &text)?;
    write(&out.join("wall.toml"), &format!("wall_seconds = {secs}\n"))?;
    write_controller(out, &r.controller())?;
    Ok((r, summary))
}

#[derive(Clone, Debug)]
pub struct RunData {
    pub dir: PathBuf,
    pub summary: Summary,
    pub trace: Vec<TraceRow>,
}

pub fn read_run(dir: &Path) -> Result<RunData> {
    let sp = dir.join("summary.toml");
    let text = fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let summary: Summary = toml::from_str(&text).map_err(|e| Error::parse(&sp, e.to_string()))?;
    let tp = dir.join("trace.csv");
    let text = fs::read_to_string(&tp).map_err(|e| Error::io(&tp, e))?;
    Ok(RunData {
        dir: dir.to_path_buf(),
        summary,
        trace: parse_trace(&text, &tp)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Speedup {
    pub method: Method,
    pub dir: PathBuf,
    /// Clock reading when `f_L` first reached the reference value.
    pub seconds_to_target: Option<f64>,
    pub top_gradients_to_target: Option<u64>,
    /// Reference time divided by this run's time.
    pub speedup: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub f_min: f64,
    /// Terminal `f_L` of the reference HFGS run, when one is present.
    pub reference: Option<f64>,
    pub table: String,
    pub speedups: Vec<Speedup>,
}

fn first_reach(run: &RunData, target: f64) -> Option<(f64, u64)> {
    let top = run.summary.levels;
    run.trace
        .iter()
        .filter(|r| r.phase == "optimize" && r.f_l.is_finite())
        .find(|r| r.f_l <= target)
        .map(|r| (r.wall_seconds, r.geval[top - 1]))
}

/// Merged relative-error table plus time-to-target against the HFGS run
/// (the one with the first directory name if there are several).
pub fn compare(runs: &[RunData]) -> Result<Comparison> {
    let first = runs.first().ok_or_else(|| Error::InvalidParameter("compare needs at least one run".into()))?;
    for r in runs {
        if r.summary.hierarchy != first.summary.hierarchy {
            return Err(Error::InvalidParameter(format!(
                "runs {} and {} use different model hierarchies",
                first.dir.display(),
                r.dir.display()
            )));
        }
    }
    let f_min = runs.iter().map(|r| r.summary.f_final).fold(f64::INFINITY, f64::min);
    let mut table = String::from("method,run,level,phase,wall_seconds,f_L,rel_err\n");
    for r in runs {
        for row in &r.trace {
            let rel = (row.f_l - f_min) / f_min;
            let _ = writeln!(
                table,
                "{},{},{},{},{},{},{}",
                r.summary.method.as_str(),
                r.dir.display(),
                row.level,
                row.phase,
                row.wall_seconds,
                row.f_l,
                rel
            );
        }
    }
    let reference = runs.iter().filter(|r| r.summary.method == Method::Hfgs).min_by(|a, b| a.dir.cmp(&b.dir));
    let target = reference.map(|r| r.summary.f_final);
    let ref_time = reference.and_then(|r| target.and_then(|t| first_reach(r, t))).map(|(s, _)| s);
    let speedups = runs
        .iter()
        .map(|r| {
            let hit = target.and_then(|t| first_reach(r, t));
            Speedup {
                method: r.summary.method,
                dir: r.dir.clone(),
                seconds_to_target: hit.map(|h| h.0),
                top_gradients_to_target: hit.map(|h| h.1),
                speedup: match (ref_time, hit) {
                    (Some(t0), Some((t, _))) if t > 0.0 => Some(t0 / t),
                    _ => None,
                },
            }
        })
        .collect();
    Ok(Comparison {
        f_min,
        reference: target,
        table,
        speedups,
    })
}

/// Dimension table of a hierarchy with open-loop spectral abscissae.
pub fn describe(h: &ModelHierarchy) -> Result<String> {
    let mut s = String::from("level      n     m1     m2     p1     p2  E        open-loop alpha\n");
    for (i, p) in h.plants().iter().enumerate() {
        let d = p.dims();
        let ol = Controller::zeros(Layout::new(0, d.m2, d.p2, true));
        let alpha = spectral_abscissa(&assemble_closed_loop(p, &ol)?, SpectralOptions { with_vectors: false })?.alpha;
        let e = if p.e_is_identity() { "identity" } else { "general" };
        let _ = writeln!(s, "{:>5} {:>6} {:>6} {:>6} {:>6} {:>6}  {:<8} {:>15.6e}", i + 1, d.n, d.m1, d.m2, d.p1, d.p2, e, alpha);
    }
    Ok(s)
}

pub fn generate(spec: &HeatSpec, dir: &Path) -> Result<PathBuf> {
    save_hierarchy(&build_heat_hierarchy(spec)?, dir)
}
