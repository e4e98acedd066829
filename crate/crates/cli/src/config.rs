use std::fmt;
use std::path::Path;

use ordercone::laplace::{Component, ContourPair, KernelGrid, SignalWaveform};
use ordercone::metrics::MetricKind;
use ordercone::pde::{ConvolutionMethod, SolverConfig};
use ordercone::queue::{InitialWorkload, SimConfig};
use ordercone::{BoundaryConditions, Interpretation, KernelSpec, ModelParams, Profile};
use serde::{Deserialize, Serialize};

pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

/// Problems with the configuration or command-line values.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelSection,
    pub kernel: KernelSection,
    pub green: GreenSection,
    pub signal: SignalSection,
    pub solver: SolverSection,
    pub respond: RespondSection,
    pub sim: SimSection,
    pub metrics: MetricsSection,
    pub clearing: ClearingSection,
    pub crossval: CrossvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub a: f64,
    pub v_over_c: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Deformed,
    Line,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenSection {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub t_max: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub n_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pulse {
    pub center: f64,
    pub half_width: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waveform {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub pulses: Vec<Pulse>,
}

impl Waveform {
    /// `offset + sum of amplitude * cos^2(pi/2 * (x - center) / half_width)` over each pulse support.
    pub fn eval(&self, x: f64) -> f64 {
        let mut v = self.offset;
        for p in &self.pulses {
            let z = (x - p.center) / p.half_width;
            if z.abs() < 1.0 {
                v += p.amplitude * (0.5 * std::f64::consts::PI * z).cos().powi(2);
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSection {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub buy: Waveform,
    pub sell: Waveform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Recursion,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpretationName {
    Density,
    Cumulative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    /// Time step as a fraction of the CFL limit `dx / v`.
    pub cfl: f64,
    pub t_end: f64,
    pub snapshot_every: usize,
    /// Times written by `fd`; empty writes every stored snapshot.
    pub output_times: Vec<f64>,
    pub method: Method,
    pub interpretation: InterpretationName,
    pub inflow_buy: f64,
    pub inflow_sell: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RespondSection {
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSection {
    Fixed { workload: f64 },
    Mixture { p_busy: f64, rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub n_paths: usize,
    pub t_end: f64,
    pub seed: u64,
    pub v: f64,
    pub a: f64,
    pub lambda: f64,
    pub beta: f64,
    pub x_max: f64,
    pub dx: f64,
    pub initial: InitialSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    pub metric: String,
    pub component: String,
    pub speed: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub tau_step: f64,
    pub slice_speed: f64,
    pub slice_offsets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClearingSection {
    pub s_min: f64,
    pub s_max: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossvalSection {
    pub tolerance: f64,
}

/// Recursively overlays `top` onto `base`; tables merge, everything else
/// replaces. A table carrying a `kind` tag replaces its counterpart whole.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) if !t.contains_key("kind") => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Sets a dotted key such as `kernel.beta2` from `key=value` text. The
/// value is parsed as TOML, falling back to a bare string.
fn set_dotted(table: &mut toml::Table, assignment: &str) -> anyhow::Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| bad(format!("--set expects key=value, got {assignment:?}")))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in path {
        cur = match cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new())) {
            toml::Value::Table(t) => t,
            _ => return Err(bad(format!("{key}: {p} is not a table"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl Config {
    /// Defaults, overlaid by the file at `path` (if any), then by `--set` assignments.
    pub fn load(path: Option<&Path>, sets: &[String]) -> anyhow::Result<Self> {
        let mut table: toml::Table = DEFAULT_CONFIG.parse().expect("shipped default config parses");
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)?;
            let file: toml::Table = text
                .parse()
                .map_err(|e| bad(format!("{}: {e}", path.display())))?;
            merge(&mut table, file);
        }
        for s in sets {
            set_dotted(&mut table, s)?;
        }
        let cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.params()?;
        self.spec()?;
        self.metric()?;
        self.component()?;
        if self.crossval.tolerance <= 0.0 {
            return Err(bad("crossval.tolerance must be positive"));
        }
        Ok(())
    }

    pub fn params(&self) -> anyhow::Result<ModelParams> {
        let m = &self.model;
        Ok(ModelParams::new(m.a, m.v_over_c * m.c, m.c)?)
    }

    pub fn spec(&self) -> anyhow::Result<KernelSpec> {
        let k = &self.kernel;
        Ok(KernelSpec::new(k.lambda, k.beta1, k.beta2)?)
    }

    pub fn kernel_grid(&self) -> anyhow::Result<KernelGrid> {
        let g = &self.green;
        Ok(KernelGrid::covering(g.x_min, g.x_max, g.dx, g.t_max, g.dt)?)
    }

    pub fn contours(&self) -> anyhow::Result<ContourPair> {
        let spec = self.spec()?;
        Ok(match self.green.scheme {
            Scheme::Deformed => ContourPair::deformed(&spec, self.green.n_nodes),
            Scheme::Line => ContourPair::truncated_line(self.green.n_nodes),
        })
    }

    pub fn signal_grid(&self) -> anyhow::Result<Vec<f64>> {
        let s = &self.signal;
        uniform(s.x_min, s.x_max, s.dx).ok_or_else(|| bad("signal grid needs x_min < x_max and dx > 0"))
    }

    pub fn signal(&self) -> anyhow::Result<SignalWaveform> {
        let xs = self.signal_grid()?;
        Ok(SignalWaveform::from_fns(&xs, |x| self.signal.buy.eval(x), |x| self.signal.sell.eval(x))?)
    }

    pub fn solver(&self) -> anyhow::Result<SolverConfig> {
        let s = &self.solver;
        let v = self.params()?.v();
        if !(s.cfl > 0.0 && s.cfl <= 1.0) {
            return Err(bad(format!("solver.cfl must lie in (0, 1], got {}", s.cfl)));
        }
        let mut cfg = SolverConfig::new(s.dx, s.cfl * s.dx / v, s.x_min, s.x_max, s.t_end);
        cfg.snapshot_every = s.snapshot_every;
        cfg.p_max = s.p_max;
        cfg.method = match s.method {
            Method::Recursion => ConvolutionMethod::Recursion,
            Method::Direct => ConvolutionMethod::DirectQuadrature,
        };
        cfg.interpretation = match s.interpretation {
            InterpretationName::Density => Interpretation::Density,
            InterpretationName::Cumulative => Interpretation::Cumulative,
        };
        Ok(cfg)
    }

    /// Initial profiles sampled on the solver grid plus constant inflows.
    pub fn boundary_conditions(&self) -> anyhow::Result<BoundaryConditions> {
        let grid = self.solver()?.x_grid();
        let f1 = Profile::from_fn(&grid, |x| self.signal.buy.eval(x))?;
        let f2 = Profile::from_fn(&grid, |x| self.signal.sell.eval(x))?;
        Ok(BoundaryConditions::new(
            f1,
            f2,
            Profile::constant(self.solver.inflow_buy),
            Profile::constant(self.solver.inflow_sell),
        ))
    }

    pub fn sim(&self) -> anyhow::Result<SimConfig> {
        let s = &self.sim;
        let x_grid = uniform(0.0, s.x_max, s.dx).ok_or_else(|| bad("sim grid needs x_max > 0 and dx > 0"))?;
        let initial = match s.initial {
            InitialSection::Fixed { workload } => InitialWorkload::Fixed(workload),
            InitialSection::Mixture { p_busy, rate } => InitialWorkload::AtomPlusExponential { p_busy, rate },
        };
        let cfg = SimConfig {
            n_paths: s.n_paths,
            t_end: s.t_end,
            seed: s.seed,
            initial,
            v: s.v,
            a: s.a,
            lambda: s.lambda,
            beta: s.beta,
            x_grid,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn metric(&self) -> anyhow::Result<MetricKind> {
        MetricKind::parse(&self.metrics.metric)
            .ok_or_else(|| bad(format!("unknown metric {:?} (autocorr | kl)", self.metrics.metric)))
    }

    pub fn component(&self) -> anyhow::Result<Component> {
        Component::parse(&self.metrics.component)
            .ok_or_else(|| bad(format!("unknown component {:?} (K11 | K12 | K21 | K22)", self.metrics.component)))
    }

    pub fn tau_grid(&self) -> anyhow::Result<Vec<f64>> {
        let m = &self.metrics;
        Ok(ordercone::metrics::tau_grid(m.tau_min, m.tau_max, m.tau_step)?)
    }
}

/// `lo, lo + dx, ..` through `hi`, with `hi` itself included when it is on the lattice.
pub fn uniform(lo: f64, hi: f64, dx: f64) -> Option<Vec<f64>> {
    if !(dx > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) {
        return None;
    }
    let n = ((hi - lo) / dx + 1e-9).floor() as usize;
    Some((0..=n).map(|i| lo + dx * i as f64).collect())
}

/// Parses `lo:hi:n`.
pub fn parse_s_range(text: &str) -> anyhow::Result<(f64, f64, usize)> {
    let parts: Vec<&str> = text.split(':').collect();
    let err = || bad(format!("--s-range expects lo:hi:n, got {text:?}"));
    if parts.len() != 3 {
        return Err(err());
    }
    let lo = parts[0].trim().parse().map_err(|_| err())?;
    let hi = parts[1].trim().parse().map_err(|_| err())?;
    let n = parts[2].trim().parse().map_err(|_| err())?;
    Ok((lo, hi, n))
}
