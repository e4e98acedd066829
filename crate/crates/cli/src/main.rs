use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};

mod config;
mod jobs;
mod manifest;

use config::{parse_s_range, Config, ConfigError};
use jobs::{Job, Unconverged};
use manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(name = "ordercone", version, about = "Order-book cone dynamics: kernels, solvers and diagnostics")]
struct Cli {
    /// TOML file overlaid on the built-in defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Monte-Carlo seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override a config value, e.g. --set kernel.beta2=0.2
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate the Green kernel; writes PREFIX.csv and PREFIX.bin
    Green {
        #[arg(long)]
        out: PathBuf,
    },
    /// Propagate a signal through a kernel
    Respond {
        /// Binary kernel from `green` (computed on the fly if omitted)
        #[arg(long)]
        kernel: Option<PathBuf>,
        /// CSV with columns x,phi1,phi2 (config signal if omitted)
        #[arg(long)]
        signal: Option<PathBuf>,
        /// Response times (comma separated)
        #[arg(long, value_delimiter = ',')]
        t: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference solution of the coupled system
    Fd {
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo workload CDF
    Simulate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Autocorrelation or KL distance along the cone
    Metrics {
        #[arg(long)]
        kernel: Option<PathBuf>,
        /// autocorr | kl
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Clearing curves tau_pm(s)
    Clearing {
        /// lo:hi:n
        #[arg(long, allow_hyphen_values = true)]
        s_range: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every figure data set in one directory
    Figures {
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Spectral versus finite-difference comparison
    Crossval {
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Replay a run from its manifest
    Rerun {
        manifest: PathBuf,
        /// Write outputs here instead of the recorded locations
        #[arg(long)]
        outdir: Option<PathBuf>,
    },
}

/// Folds subcommand flags into `--set` style assignments.
fn overrides(cli: &Cli) -> anyhow::Result<Vec<String>> {
    let mut sets = cli.sets.clone();
    if let Some(seed) = cli.seed {
        sets.push(format!("sim.seed={seed}"));
    }
    match &cli.command {
        Command::Respond { t, .. } if !t.is_empty() => {
            let list: Vec<String> = t.iter().map(|v| format!("{v:?}")).collect();
            sets.push(format!("respond.times=[{}]", list.join(",")));
        }
        Command::Metrics { metric: Some(m), .. } => sets.push(format!("metrics.metric={m:?}")),
        Command::Clearing { s_range: Some(r), .. } => {
            let (lo, hi, n) = parse_s_range(r)?;
            sets.push(format!("clearing.s_min={lo:?}"));
            sets.push(format!("clearing.s_max={hi:?}"));
            sets.push(format!("clearing.n={n}"));
        }
        _ => {}
    }
    Ok(sets)
}

fn job_of(command: Command) -> Option<Job> {
    Some(match command {
        Command::Green { out } => Job::Green { out },
        Command::Respond { kernel, signal, out, .. } => Job::Respond { kernel, signal, out },
        Command::Fd { out } => Job::Fd { out },
        Command::Simulate { out } => Job::Simulate { out },
        Command::Metrics { kernel, out, .. } => Job::Metrics { kernel, out },
        Command::Clearing { out, .. } => Job::Clearing { out },
        Command::Figures { outdir } => Job::Figures { outdir },
        Command::Crossval { outdir } => Job::Crossval { outdir },
        Command::Rerun { .. } => return None,
    })
}

fn execute(job: Job, cfg: Config) -> anyhow::Result<()> {
    let start = Instant::now();
    let outcome = job.run(&cfg).with_context(|| format!("{} failed", job.name()))?;
    let manifest_path = job.manifest_path();
    let manifest = RunManifest::new(job, cfg, &outcome, start.elapsed().as_secs_f64());
    manifest.write(&manifest_path)?;
    for p in &outcome.outputs {
        eprintln!("wrote {}", p.display());
    }
    eprintln!("manifest {}", manifest_path.display());
    match outcome.gate_failure {
        Some(msg) => anyhow::bail!("validation gate failed: {msg}"),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError("--threads must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    if let Command::Rerun { manifest, outdir } = &cli.command {
        let m = RunManifest::read(manifest)?;
        let job = match outdir {
            Some(dir) => m.job.redirect(&std::path::absolute(dir)?),
            None => m.job,
        };
        return execute(job, m.config);
    }
    let sets = overrides(&cli)?;
    let cfg = Config::load(cli.config.as_deref(), &sets)?;
    let job = job_of(cli.command).expect("rerun handled above").absolutize()?;
    execute(job, cfg)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use ordercone::Error as E;
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if cause.is::<Unconverged>() {
            return 3;
        }
        if cause.is::<std::io::Error>() {
            return 5;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::NonConvergence { .. } => 3,
                E::Instability { .. } => 4,
                E::Io(_) => 5,
                E::InvalidParameter(_) | E::InvalidConfig(_) | E::InvalidContour(_) | E::RangeContainsPole { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
