use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mfgs::bench::HeatSpec;
use mfgs::experiment::{self, ExperimentConfig, ModelSource};
use mfgs::io::load_hierarchy;

#[derive(Parser)]
#[command(name = "mfgs", version, about = "Multi-fidelity gradient sampling for fixed-order H-infinity synthesis")]
struct Cli {
    /// Worker threads for gradient batches; 1 runs everything sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment and write trace.csv, summary.toml and the controller.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge finished runs into a relative-error table and a speedup report.
    Compare {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Directory for compare.csv; printed only when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load a manifest or an experiment config and print its dimension table.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a heat-equation hierarchy as Matrix Market files plus manifest.
    Generate {
        /// Heat spec in TOML; the default three-level rod when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn run(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = ExperimentConfig::read(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = match out.or_else(|| cfg.out.as_ref().map(|o| base_dir(config).join(o))) {
        Some(o) => o,
        None => bail!("no output directory: pass --out or set `out` in the config"),
    };
    let prepared = experiment::prepare(cfg, &base_dir(config))?;
    let (r, _) = experiment::run_to_dir(&prepared, &out)?;
    println!("method {} seed {}", r.method.as_str(), prepared.config.seed);
    for o in &r.levels {
        println!(
            "  level {}: {} iterations ({}), f_level {:.6e}, f_L {:.6e}",
            o.level,
            o.trace.records.len(),
            o.trace.status.as_str(),
            o.f_level,
            o.f_top
        );
    }
    println!("final f_L {:.6e}; outputs in {}", r.f_final, out.display());
    Ok(())
}

fn compare(dirs: &[PathBuf], out: Option<PathBuf>) -> Result<()> {
    let runs = dirs.iter().map(|d| experiment::read_run(d)).collect::<mfgs::Result<Vec<_>>>()?;
    let cmp = experiment::compare(&runs)?;
    match out {
        Some(o) => {
            fs::create_dir_all(&o).with_context(|| format!("creating {}", o.display()))?;
            let path = o.join("compare.csv");
            fs::write(&path, &cmp.table).with_context(|| format!("writing {}", path.display()))?;
        }
        None => print!("{}", cmp.table),
    }
    println!("f_min {:e}", cmp.f_min);
    if let Some(t) = cmp.reference {
        println!("time to reach the HFGS terminal value {t:e}:");
        for s in &cmp.speedups {
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
            println!(
                "  {:<6} {}  seconds {}  top-level gradients {}  speedup {}",
                s.method.as_str(),
                s.dir.display(),
                fmt(s.seconds_to_target),
                s.top_gradients_to_target.map_or("-".to_string(), |g| g.to_string()),
                fmt(s.speedup)
            );
        }
    }
    Ok(())
}

fn validate(config: &Path) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let doc: toml::Table = text.parse().with_context(|| format!("parsing {}", config.display()))?;
    let hier = if doc.contains_key("level") {
        load_hierarchy(config)?
    } else {
        let cfg = ExperimentConfig::read(config)?;
        experiment::prepare(cfg, &base_dir(config))?.hierarchy
    };
    print!("{}", experiment::describe(&hier)?);
    Ok(())
}

fn generate(config: Option<PathBuf>, out: &Path) -> Result<()> {
    let spec = match config {
        Some(p) => {
            let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            match toml::from_str::<ModelSource>(&text) {
                Ok(ModelSource::Heat(s)) => s,
                _ => toml::from_str::<HeatSpec>(&text).with_context(|| format!("parsing heat spec {}", p.display()))?,
            }
        }
        None => HeatSpec::default(),
    };
    let manifest = experiment::generate(&spec, out)?;
    println!("wrote {}", manifest.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.cmd {
        Cmd::Run { config, seed, out } => run(&config, seed, out),
        Cmd::Compare { runs, out } => compare(&runs, out),
        Cmd::Validate { config } => validate(&config),
        Cmd::Generate { config, out } => generate(config, &out),
    }
}
