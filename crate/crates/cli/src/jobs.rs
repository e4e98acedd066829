use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use ordercone::laplace::{green_kernel, respond, GreenKernel, KernelGrid, SignalWaveform};
use ordercone::metrics::{autocorrelation, cone_slice, kl_distance, MetricKind, MetricSeries};
use ordercone::model::clearing_curves;
use ordercone::pde::fd_solve;
use ordercone::queue::simulate_workload;
use ordercone::{Profile, SpaceTimeField};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Config, ConfigError};

/// A resolved unit of work. Flag overrides are already folded into the
/// accompanying [`Config`]; only file locations live here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Job {
    Green { out: PathBuf },
    Respond { kernel: Option<PathBuf>, signal: Option<PathBuf>, out: PathBuf },
    Fd { out: PathBuf },
    Simulate { out: PathBuf },
    Metrics { kernel: Option<PathBuf>, out: PathBuf },
    Clearing { out: PathBuf },
    Figures { outdir: PathBuf },
    Crossval { outdir: PathBuf },
}

/// Files touched by a job and a machine-readable summary of how it went.
#[derive(Debug, Default)]
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub summary: Value,
    /// Set when a validation gate inside the job failed; outputs are still written.
    pub gate_failure: Option<String>,
}

/// Raised when tabulated kernel nodes failed the node-doubling check.
#[derive(Debug)]
pub struct Unconverged(pub usize);

impl std::fmt::Display for Unconverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} kernel nodes did not converge; refine green.n_nodes or the contour", self.0)
    }
}

impl std::error::Error for Unconverged {}

fn green_prefix(out: &Path) -> PathBuf {
    match out.extension().and_then(|e| e.to_str()) {
        Some("csv") | Some("bin") => out.with_extension(""),
        _ => out.to_path_buf(),
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Green { .. } => "green",
            Job::Respond { .. } => "respond",
            Job::Fd { .. } => "fd",
            Job::Simulate { .. } => "simulate",
            Job::Metrics { .. } => "metrics",
            Job::Clearing { .. } => "clearing",
            Job::Figures { .. } => "figures",
            Job::Crossval { .. } => "crossval",
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        match self {
            Job::Green { out } => with_suffix(&green_prefix(out), ".manifest.json"),
            Job::Respond { out, .. }
            | Job::Fd { out }
            | Job::Simulate { out }
            | Job::Metrics { out, .. }
            | Job::Clearing { out } => out.with_extension("manifest.json"),
            Job::Figures { outdir } | Job::Crossval { outdir } => outdir.join("manifest.json"),
        }
    }

    /// Makes every path absolute so a manifest can be replayed from anywhere.
    pub fn absolutize(self) -> anyhow::Result<Self> {
        let abs = |p: PathBuf| std::path::absolute(&p).with_context(|| format!("resolving {}", p.display()));
        let opt = |p: Option<PathBuf>| p.map(abs).transpose();
        Ok(match self {
            Job::Green { out } => Job::Green { out: abs(out)? },
            Job::Respond { kernel, signal, out } => Job::Respond {
                kernel: opt(kernel)?,
                signal: opt(signal)?,
                out: abs(out)?,
            },
            Job::Fd { out } => Job::Fd { out: abs(out)? },
            Job::Simulate { out } => Job::Simulate { out: abs(out)? },
            Job::Metrics { kernel, out } => Job::Metrics {
                kernel: opt(kernel)?,
                out: abs(out)?,
            },
            Job::Clearing { out } => Job::Clearing { out: abs(out)? },
            Job::Figures { outdir } => Job::Figures { outdir: abs(outdir)? },
            Job::Crossval { outdir } => Job::Crossval { outdir: abs(outdir)? },
        })
    }

    /// Sends outputs to `dir`, keeping file names; inputs are untouched.
    pub fn redirect(self, dir: &Path) -> Self {
        let move_file = |p: PathBuf| dir.join(p.file_name().unwrap_or_default());
        match self {
            Job::Green { out } => Job::Green { out: move_file(out) },
            Job::Respond { kernel, signal, out } => Job::Respond {
                kernel,
                signal,
                out: move_file(out),
            },
            Job::Fd { out } => Job::Fd { out: move_file(out) },
            Job::Simulate { out } => Job::Simulate { out: move_file(out) },
            Job::Metrics { kernel, out } => Job::Metrics { kernel, out: move_file(out) },
            Job::Clearing { out } => Job::Clearing { out: move_file(out) },
            Job::Figures { .. } => Job::Figures { outdir: dir.to_path_buf() },
            Job::Crossval { .. } => Job::Crossval { outdir: dir.to_path_buf() },
        }
    }

    pub fn run(&self, cfg: &Config) -> anyhow::Result<Outcome> {
        match self {
            Job::Green { out } => run_green(cfg, out),
            Job::Respond { kernel, signal, out } => run_respond(cfg, kernel.as_deref(), signal.as_deref(), out),
            Job::Fd { out } => run_fd(cfg, out),
            Job::Simulate { out } => run_simulate(cfg, out),
            Job::Metrics { kernel, out } => run_metrics(cfg, kernel.as_deref(), out),
            Job::Clearing { out } => run_clearing(cfg, out),
            Job::Figures { outdir } => run_figures(cfg, outdir),
            Job::Crossval { outdir } => run_crossval(cfg, outdir),
        }
    }
}

pub fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn compute_kernel(cfg: &Config) -> anyhow::Result<GreenKernel> {
    kernel_on(cfg, cfg.kernel_grid()?)
}

/// Kernel tabulated only up to the latest time a response needs.
fn kernel_until(cfg: &Config, times: &[f64]) -> anyhow::Result<GreenKernel> {
    let g = &cfg.green;
    let t_max = times.iter().cloned().fold(0.0, f64::max).min(g.t_max);
    kernel_on(cfg, KernelGrid::covering(g.x_min, g.x_max, g.dx, t_max.max(g.dt), g.dt)?)
}

fn kernel_on(cfg: &Config, grid: KernelGrid) -> anyhow::Result<GreenKernel> {
    let k = green_kernel(grid, &cfg.params()?, &cfg.spec()?, &cfg.contours()?)?;
    match k.n_unconverged() {
        0 => Ok(k),
        n => Err(Unconverged(n).into()),
    }
}

fn load_kernel(path: &Path) -> anyhow::Result<GreenKernel> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    GreenKernel::read_binary(std::io::BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn kernel_summary(k: &GreenKernel) -> Value {
    json!({
        "nx": k.grid.nx,
        "nt": k.grid.nt,
        "unconverged_nodes": k.n_unconverged(),
        "max_abs_regular": k.max_abs(),
    })
}

fn write_kernel(k: &GreenKernel, prefix: &Path, outcome: &mut Outcome) -> anyhow::Result<()> {
    let csv = with_suffix(prefix, ".csv");
    let bin = with_suffix(prefix, ".bin");
    k.write_csv(create(&csv)?)?;
    k.write_binary(create(&bin)?)?;
    outcome.outputs.extend([csv, bin]);
    Ok(())
}

fn run_green(cfg: &Config, out: &Path) -> anyhow::Result<Outcome> {
    let k = compute_kernel(cfg)?;
    let mut outcome = Outcome {
        summary: kernel_summary(&k),
        ..Outcome::default()
    };
    write_kernel(&k, &green_prefix(out), &mut outcome)?;
    Ok(outcome)
}

fn write_responses(responses: &[(f64, SignalWaveform)], path: &Path) -> anyhow::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "t,x,phi1,phi2")?;
    for (t, r) in responses {
        for i in 0..r.len() {
            writeln!(w, "{},{},{},{}", t, r.x[i], r.phi1[i], r.phi2[i])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn run_respond(cfg: &Config, kernel: Option<&Path>, signal: Option<&Path>, out: &Path) -> anyhow::Result<Outcome> {
    let mut outcome = Outcome::default();
    let k = match kernel {
        Some(p) => {
            outcome.inputs.push(p.to_path_buf());
            load_kernel(p)?
        }
        None => kernel_until(cfg, &cfg.respond.times)?,
    };
    let input = match signal {
        Some(p) => {
            outcome.inputs.push(p.to_path_buf());
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            SignalWaveform::read_csv(f).with_context(|| format!("reading {}", p.display()))?
        }
        None => cfg.signal()?,
    };
    let responses = cfg
        .respond
        .times
        .iter()
        .map(|&t| Ok((t, respond(&input, &k, t)?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    write_responses(&responses, out)?;
    outcome.outputs.push(out.to_path_buf());
    outcome.summary = json!({ "times": cfg.respond.times, "kernel": kernel_summary(&k) });
    Ok(outcome)
}

/// Snapshots at the requested times, or every stored snapshot.
fn select_times(field: &SpaceTimeField, times: &[f64]) -> anyhow::Result<SpaceTimeField> {
    if times.is_empty() {
        return Ok(field.clone());
    }
    let mut components = vec![Vec::new(); field.n_components()];
    for &t in times {
        for (c, comp) in components.iter_mut().enumerate() {
            comp.extend(field.profile_at(c, t)?);
        }
    }
    Ok(SpaceTimeField::new(field.x.clone(), times.to_vec(), components, field.interpretation)?)
}

fn run_fd(cfg: &Config, out: &Path) -> anyhow::Result<Outcome> {
    let solver = cfg.solver()?;
    let field = fd_solve(&cfg.params()?, &cfg.spec()?, &cfg.boundary_conditions()?, &solver)?;
    let selected = select_times(&field, &cfg.solver.output_times)?;
    selected.write_csv(create(out)?)?;
    Ok(Outcome {
        outputs: vec![out.to_path_buf()],
        summary: json!({
            "steps": solver.n_steps(),
            "dt": solver.effective_dt(),
            "cfl": solver.cfl(cfg.params()?.v()),
            "max_abs": field.max_abs(),
        }),
        ..Outcome::default()
    })
}

fn run_simulate(cfg: &Config, out: &Path) -> anyhow::Result<Outcome> {
    let sim = cfg.sim()?;
    let emp = simulate_workload(&sim)?;
    emp.write_csv(create(out)?)?;
    let max_se = emp.stderr.iter().fold(0.0_f64, |m, s| m.max(*s));
    Ok(Outcome {
        outputs: vec![out.to_path_buf()],
        summary: json!({
            "n_paths": emp.n_paths,
            "seed": sim.seed,
            "total_weight": emp.total_weight,
            "max_stderr": max_se,
        }),
        ..Outcome::default()
    })
}

fn metric_series(cfg: &Config, k: &GreenKernel, metric: MetricKind) -> anyhow::Result<MetricSeries> {
    let m = &cfg.metrics;
    let tau = cfg.tau_grid()?;
    let range = (m.x_lo, m.x_hi);
    Ok(match metric {
        MetricKind::Autocorrelation => autocorrelation(k, &tau, m.speed, cfg.component()?, range)?,
        MetricKind::Kl => kl_distance(k, &tau, m.speed, cfg.component()?, range)?,
    })
}

fn series_summary(s: &MetricSeries) -> Value {
    let peak = |i: Option<usize>| i.map(|i| s.tau[i]);
    json!({
        "metric": s.metric.label(),
        "component": format!("{:?}", s.component),
        "speed": s.speed,
        "argmax_tau": peak(s.argmax()),
        "argmax_tau_raw": peak(s.argmax_raw()),
        "floor": s.floor,
    })
}

fn run_metrics(cfg: &Config, kernel: Option<&Path>, out: &Path) -> anyhow::Result<Outcome> {
    let mut outcome = Outcome::default();
    let k = match kernel {
        Some(p) => {
            outcome.inputs.push(p.to_path_buf());
            load_kernel(p)?
        }
        None => compute_kernel(cfg)?,
    };
    let series = metric_series(cfg, &k, cfg.metric()?)?;
    series.write_csv(create(out)?)?;
    outcome.outputs.push(out.to_path_buf());
    outcome.summary = series_summary(&series);
    Ok(outcome)
}

fn write_clearing(cfg: &Config, path: &Path) -> anyhow::Result<Value> {
    let c = &cfg.clearing;
    let (plus, minus) = clearing_curves((c.s_min, c.s_max), c.n, &cfg.params()?, &cfg.spec()?)?;
    let mut w = create(path)?;
    writeln!(w, "s,tau_plus,tau_minus")?;
    for (p, m) in plus.samples.iter().zip(&minus.samples) {
        writeln!(w, "{},{},{}", p.0, p.1, m.1)?;
    }
    w.flush()?;
    Ok(json!({ "samples": c.n, "s_range": [c.s_min, c.s_max] }))
}

fn run_clearing(cfg: &Config, out: &Path) -> anyhow::Result<Outcome> {
    let summary = write_clearing(cfg, out)?;
    Ok(Outcome {
        outputs: vec![out.to_path_buf()],
        summary,
        ..Outcome::default()
    })
}

fn run_figures(cfg: &Config, outdir: &Path) -> anyhow::Result<Outcome> {
    let k = compute_kernel(cfg)?;
    let mut outcome = Outcome::default();
    write_kernel(&k, &outdir.join("kernel"), &mut outcome)?;

    let m = &cfg.metrics;
    let component = cfg.component()?;
    let slices_path = outdir.join("slices.csv");
    let mut w = create(&slices_path)?;
    writeln!(w, "offset,x,value")?;
    for &offset in &m.slice_offsets {
        let slice = cone_slice(&k, offset, m.slice_speed, component)?;
        for i in 0..slice.len() {
            writeln!(w, "{},{},{}", offset, slice.x[i], slice.phi1[i])?;
        }
    }
    w.flush()?;
    outcome.outputs.push(slices_path);

    let autocorr = metric_series(cfg, &k, MetricKind::Autocorrelation)?;
    let path = outdir.join("autocorrelation.csv");
    autocorr.write_csv(create(&path)?)?;
    outcome.outputs.push(path);

    let kl = metric_series(cfg, &k, MetricKind::Kl)?;
    let path = outdir.join("kl.csv");
    kl.write_csv(create(&path)?)?;
    outcome.outputs.push(path);

    let path = outdir.join("clearing.csv");
    let clearing = write_clearing(cfg, &path)?;
    outcome.outputs.push(path);

    outcome.summary = json!({
        "kernel": kernel_summary(&k),
        "autocorrelation": series_summary(&autocorr),
        "kl": series_summary(&kl),
        "clearing": clearing,
    });
    Ok(outcome)
}

/// Relative L2 distance between the spectral and finite-difference paths
/// at each response time, on the signal grid.
fn run_crossval(cfg: &Config, outdir: &Path) -> anyhow::Result<Outcome> {
    let times = &cfg.respond.times;
    if times.is_empty() {
        return Err(ConfigError("crossval needs at least one respond.times entry".into()).into());
    }
    let solver = cfg.solver()?;
    let t_last = times.iter().cloned().fold(f64::MIN, f64::max);
    if t_last > solver.t_end + 1e-12 {
        return Err(ConfigError(format!("respond time {t_last} beyond solver.t_end {}", solver.t_end)).into());
    }
    let k = kernel_until(cfg, times)?;
    let input = cfg.signal()?;
    let field = fd_solve(&cfg.params()?, &cfg.spec()?, &cfg.boundary_conditions()?, &solver)?;

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for &t in times {
        let spectral = respond(&input, &k, t)?;
        let fd: Vec<Profile> = (0..2)
            .map(|c| Ok(Profile::new(field.x.clone(), field.profile_at(c, t)?)?))
            .collect::<anyhow::Result<_>>()?;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..spectral.len() {
            let x = spectral.x[i];
            let (f1, f2) = (fd[0].eval(x), fd[1].eval(x));
            num += (spectral.phi1[i] - f1).powi(2) + (spectral.phi2[i] - f2).powi(2);
            den += spectral.phi1[i].powi(2) + spectral.phi2[i].powi(2);
            rows.push([t, x, spectral.phi1[i], spectral.phi2[i], f1, f2]);
        }
        errors.push((t, if den > 0.0 { (num / den).sqrt() } else { num.sqrt() }));
    }

    let path = outdir.join("crossval.csv");
    let mut w = create(&path)?;
    writeln!(w, "t,x,spectral_buy,spectral_sell,fd_buy,fd_sell")?;
    for r in &rows {
        writeln!(w, "{},{},{},{},{},{}", r[0], r[1], r[2], r[3], r[4], r[5])?;
    }
    w.flush()?;
    let summary_path = outdir.join("crossval_summary.csv");
    let mut w = create(&summary_path)?;
    writeln!(w, "t,rel_l2,pass")?;
    let tol = cfg.crossval.tolerance;
    for (t, e) in &errors {
        writeln!(w, "{},{},{}", t, e, u8::from(*e < tol))?;
    }
    w.flush()?;

    let worst = errors.iter().fold(0.0_f64, |m, (_, e)| m.max(*e));
    let pass = worst < tol;
    Ok(Outcome {
        inputs: Vec::new(),
        outputs: vec![path, summary_path],
        summary: json!({
            "rel_l2": errors.iter().map(|(t, e)| json!({ "t": t, "rel_l2": e })).collect::<Vec<_>>(),
            "tolerance": tol,
            "pass": pass,
            "kernel": kernel_summary(&k),
            "fd_steps": solver.n_steps(),
        }),
        gate_failure: (!pass).then(|| format!("relative L2 {worst} exceeds {tol}")),
    })
}
