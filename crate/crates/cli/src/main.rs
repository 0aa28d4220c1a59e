//! Command-line entry point: one subcommand per task, sweeps, activation
//! dumps and the oracle suite.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use nestfield::formats::{parse_config_with, read_config};
use nestfield::harness::{
    dump_activation_traces, run_lr_sweep, run_scale_sweep, run_seed_sweep, ExperimentConfig, Prepared, ResultRecord,
    SweepRow, Task,
};

#[derive(Parser)]
#[command(name = "nestfield", version, about = "Neural fields with nested learnable activations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a 2-D image.
    FitImage(RunArgs),
    /// Fit a 3-D occupancy volume.
    FitOccupancy(RunArgs),
    /// Single-image super-resolution through a box-downsampling operator.
    Sisr(RunArgs),
    /// Multi-image super-resolution from shifted and rotated views.
    Misr(RunArgs),
    /// Denoise an image with Poisson photon noise.
    Denoise(RunArgs),
    /// Reconstruct an image from its sinogram.
    Ct(RunArgs),
    /// Solve the 1-D convection equation as a physics-informed network.
    Pinn(RunArgs),
    /// Best-of-seeds metric for each learning rate.
    SweepLr {
        #[command(flatten)]
        run: RunArgs,
        /// Task when no config file is given.
        #[arg(long)]
        task: Option<String>,
        /// Comma-separated learning rates.
        #[arg(long, value_delimiter = ',', required = true)]
        lrs: Vec<f64>,
    },
    /// Best-of-seeds super-resolution metrics for each downsampling factor.
    SweepScale {
        #[command(flatten)]
        run: RunArgs,
        /// sisr or misr when no config file is given.
        #[arg(long, default_value = "sisr")]
        task: String,
        /// Comma-separated factors.
        #[arg(long, value_delimiter = ',', required = true)]
        factors: Vec<usize>,
    },
    /// Train one seed and write learned-activation tables at epochs 0, E/2
    /// and E.
    DumpActivations {
        #[command(flatten)]
        run: RunArgs,
        /// Task when no config file is given.
        #[arg(long, default_value = "image")]
        task: String,
    },
    /// Run the built-in oracle suite.
    Verify {
        /// Print one JSON object per check.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set train.epochs=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Model kind (sets model.kind).
    #[arg(long)]
    model: Option<String>,
    /// Number of epochs (sets train.epochs).
    #[arg(long)]
    epochs: Option<usize>,
    /// Initial learning rate (sets train.lr).
    #[arg(long)]
    lr: Option<f64>,
    /// Run a single seed (sets seeds).
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seeds (sets seeds).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output root (sets out_dir).
    #[arg(long, env = "NESTFIELD_OUT")]
    out: Option<PathBuf>,
    /// Parallel runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Print records as JSON lines instead of summaries.
    #[arg(long)]
    json: bool,
}

impl RunArgs {
    /// Flags become overrides applied after `--set`, so they win.
    fn overrides(&self) -> Vec<String> {
        let mut o = self.overrides.clone();
        if let Some(m) = &self.model {
            o.push(format!("model.kind={m}"));
        }
        if let Some(e) = self.epochs {
            o.push(format!("train.epochs={e}"));
        }
        if let Some(lr) = self.lr {
            o.push(format!("train.lr={lr:?}"));
        }
        if let Some(s) = self.seed {
            o.push(format!("seeds=[{s}]"));
        }
        if let Some(s) = &self.seeds {
            let list: Vec<String> = s.iter().map(u64::to_string).collect();
            o.push(format!("seeds=[{}]", list.join(",")));
        }
        if let Some(out) = &self.out {
            o.push(format!("out_dir={}", toml_string(&out.to_string_lossy())));
        }
        o
    }

    /// Loads the config; `task` is forced when given, otherwise taken from
    /// the file (or `fallback` without one).
    fn load(&self, task: Option<Task>, fallback: Task) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides();
        if let Some(t) = task {
            overrides.insert(0, format!("task={t}"));
        }
        let cfg = match &self.config {
            Some(path) => read_config(path, &overrides).with_context(|| format!("loading {}", path.display()))?,
            None => {
                let base = format!("task = \"{}\"\n", task.unwrap_or(fallback));
                parse_config_with(&base, &overrides).context("building config")?
            }
        };
        Ok(cfg)
    }
}

fn toml_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn print_record(r: &ResultRecord, json: bool) {
    if json {
        println!("{}", serde_json::to_string(r).expect("record serializes"));
    } else {
        println!(
            "{} {} seed={} {} loss={:.4e} params={} secs={:.1}",
            r.task,
            r.model,
            r.seed,
            r.metrics.summary(),
            r.final_loss,
            r.param_count,
            r.wall_seconds
        );
    }
}

fn run_task(task: Task, args: &RunArgs) -> Result<()> {
    let cfg = args.load(Some(task), task)?;
    let out = run_seed_sweep(&cfg, args.jobs)?;
    for r in &out.records {
        print_record(r, args.json);
    }
    if !args.json && out.records.len() > 1 {
        let b = out.best();
        println!("best: seed={} {}", b.seed, b.metrics.summary());
    }
    if let Some(dir) = out.records.first().map(|r| cfg.out_dir.join(&r.run_dir)) {
        log::info!("artifacts under {}", dir.parent().unwrap_or(&dir).display());
    }
    Ok(())
}

fn print_rows(param: &str, rows: &[SweepRow], json: bool) {
    for r in rows {
        if json {
            let v = serde_json::json!({ param: r.value, "best": r.best });
            println!("{v}");
        } else {
            println!("{param}={} seed={} {}", r.value, r.best.seed, r.best.metrics.summary());
        }
    }
}

fn parse_task(s: &str) -> Result<Task> {
    Ok(s.parse::<Task>()?)
}

fn verify(json: bool) -> Result<bool> {
    let checks = nestfield::verify::run_all();
    let mut ok = true;
    for c in &checks {
        ok &= c.passed;
        if json {
            let v = serde_json::json!({ "check": c.name, "passed": c.passed, "detail": c.detail });
            println!("{v}");
        } else {
            println!("{} {} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
    }
    if !json {
        let passed = checks.iter().filter(|c| c.passed).count();
        println!("{passed}/{} checks passed", checks.len());
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::FitImage(a) => run_task(Task::Image, &a)?,
        Command::FitOccupancy(a) => run_task(Task::Occupancy, &a)?,
        Command::Sisr(a) => run_task(Task::Sisr, &a)?,
        Command::Misr(a) => run_task(Task::Misr, &a)?,
        Command::Denoise(a) => run_task(Task::Denoise, &a)?,
        Command::Ct(a) => run_task(Task::Ct, &a)?,
        Command::Pinn(a) => run_task(Task::PinnConvection, &a)?,
        Command::SweepLr { run, task, lrs } => {
            let task = task.as_deref().map(parse_task).transpose()?;
            let cfg = run.load(task, Task::Image)?;
            print_rows("lr", &run_lr_sweep(&cfg, &lrs, run.jobs)?, run.json);
        }
        Command::SweepScale { run, task, factors } => {
            let forced = run.config.is_none().then(|| parse_task(&task)).transpose()?;
            let cfg = run.load(forced, Task::Sisr)?;
            print_rows("factor", &run_scale_sweep(&cfg, &factors, run.jobs)?, run.json);
        }
        Command::DumpActivations { run, task } => {
            let forced = run.config.is_none().then(|| parse_task(&task)).transpose()?;
            let cfg = run.load(forced, Task::Image)?;
            let seed = cfg.seeds[0];
            let prepared = Prepared::new(&cfg)?;
            let trained = prepared.train(seed)?;
            let dir = cfg.out_dir.join(prepared.config_dir()).join(format!("activations-seed-{seed}"));
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let files = dump_activation_traces(&trained.snapshots, &dir)?;
            if files.is_empty() {
                println!("{} has no learned activations; nothing written", cfg.model.kind);
            }
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Verify { json } => return verify(json),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
