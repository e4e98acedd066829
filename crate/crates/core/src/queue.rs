//! Monte Carlo simulation of the Takács virtual waiting time with a finite
//! drain velocity.
//!
//! Between arrivals the workload drains at rate `v` and is reflected at
//! zero. Arrivals are Poisson(`a`) and add an exponential(`lambda`) jump.
//! A defective kernel of mass `beta / lambda < 1` is handled by weighting:
//! every arrival multiplies the path weight by `beta / lambda`.

use std::io::{BufWriter, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpaceTimeField;

/// Paths per deterministic work block.
const BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialWorkload {
    Fixed(f64),
    /// Zero with probability `1 - p_busy`, otherwise exponential with `rate`.
    AtomPlusExponential { p_busy: f64, rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub t_end: f64,
    pub seed: u64,
    pub initial: InitialWorkload,
    /// Drain rate.
    pub v: f64,
    /// Arrival rate.
    pub a: f64,
    /// Jump rate; jumps are exponential with mean `1 / lambda`.
    pub lambda: f64,
    /// Kernel amplitude; `beta / lambda` is the per-arrival survival weight.
    pub beta: f64,
    /// Points where the CDF is estimated.
    pub x_grid: Vec<f64>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidParameter("n_paths must be >= 1".into()));
        }
        let ok = self.t_end.is_finite()
            && self.t_end >= 0.0
            && self.v.is_finite()
            && self.v > 0.0
            && self.a.is_finite()
            && self.a >= 0.0
            && self.lambda.is_finite()
            && self.lambda > 0.0
            && self.beta.is_finite()
            && self.beta >= 0.0
            && self.beta <= self.lambda * (1.0 + 1e-12);
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "need t_end >= 0, v > 0, a >= 0, lambda > 0, 0 <= beta <= lambda; got {self:?}"
            )));
        }
        match self.initial {
            InitialWorkload::Fixed(w) if !(w.is_finite() && w >= 0.0) => {
                return Err(Error::InvalidParameter(format!("initial workload must be >= 0, got {w}")))
            }
            InitialWorkload::AtomPlusExponential { p_busy, rate }
                if !((0.0..=1.0).contains(&p_busy) && rate.is_finite() && rate > 0.0) =>
            {
                return Err(Error::InvalidParameter(format!(
                    "bad initial sampler p_busy = {p_busy}, rate = {rate}"
                )))
            }
            _ => {}
        }
        if self.x_grid.is_empty() || self.x_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::GridMismatch("CDF grid must be non-empty and strictly increasing".into()));
        }
        Ok(())
    }
}

/// Weighted empirical CDF of the workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    pub x: Vec<f64>,
    pub cdf: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Mean surviving path weight.
    pub total_weight: f64,
    pub n_paths: usize,
}

impl EmpiricalCdf {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "x,cdf,stderr")?;
        for i in 0..self.x.len() {
            writeln!(w, "{},{},{}", self.x[i], self.cdf[i], self.stderr[i])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn exp_sample(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e / rate
}

/// Final workload and weight of path number `index`.
fn run_path(cfg: &SimConfig, index: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);

    let mut w = match cfg.initial {
        InitialWorkload::Fixed(w) => w,
        InitialWorkload::AtomPlusExponential { p_busy, rate } => {
            let u: f64 = rng.random();
            if u < p_busy {
                exp_sample(&mut rng, rate)
            } else {
                0.0
            }
        }
    };
    let survival = cfg.beta / cfg.lambda;
    let mut weight = 1.0;
    let mut t = 0.0;
    loop {
        let gap = if cfg.a > 0.0 {
            exp_sample(&mut rng, cfg.a)
        } else {
            f64::INFINITY
        };
        if t + gap >= cfg.t_end {
            w = (w - cfg.v * (cfg.t_end - t)).max(0.0);
            return (w, weight);
        }
        t += gap;
        w = (w - cfg.v * gap).max(0.0) + exp_sample(&mut rng, cfg.lambda);
        weight *= survival;
    }
}

struct Tally {
    weight: Vec<f64>,
    weight_sq: Vec<f64>,
    total: f64,
}

impl Tally {
    fn new(n: usize) -> Self {
        Self {
            weight: vec![0.0; n],
            weight_sq: vec![0.0; n],
            total: 0.0,
        }
    }

    fn merge(mut self, other: &Tally) -> Self {
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += b;
        }
        for (a, b) in self.weight_sq.iter_mut().zip(&other.weight_sq) {
            *a += b;
        }
        self.total += other.total;
        self
    }
}

/// Weighted empirical CDF at `t_end` with per-point standard errors.
///
/// Path `i` draws from its own ChaCha stream, and paths are tallied in
/// fixed blocks merged in block order, so the output is bit-identical for
/// any thread count.
pub fn simulate_workload(cfg: &SimConfig) -> Result<EmpiricalCdf> {
    cfg.validate()?;
    let nx = cfg.x_grid.len();
    let n_blocks = cfg.n_paths.div_ceil(BLOCK);
    let blocks: Vec<Tally> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut tally = Tally::new(nx + 1);
            let start = b * BLOCK;
            let end = (start + BLOCK).min(cfg.n_paths);
            for i in start..end {
                let (w, weight) = run_path(cfg, i as u64);
                // First grid index with x >= w; paths beyond the grid land in the overflow bin.
                let bin = cfg.x_grid.partition_point(|&x| x < w);
                tally.weight[bin] += weight;
                tally.weight_sq[bin] += weight * weight;
                tally.total += weight;
            }
            tally
        })
        .collect();
    let tally = blocks.iter().fold(Tally::new(nx + 1), |acc, b| acc.merge(b));

    let n = cfg.n_paths as f64;
    let mut cdf = Vec::with_capacity(nx);
    let mut stderr = Vec::with_capacity(nx);
    let (mut cum, mut cum_sq) = (0.0, 0.0);
    for k in 0..nx {
        cum += tally.weight[k];
        cum_sq += tally.weight_sq[k];
        let mean = cum / n;
        let var = if cfg.n_paths > 1 {
            ((cum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        cdf.push(mean);
        stderr.push((var / n).sqrt());
    }
    Ok(EmpiricalCdf {
        x: cfg.x_grid.clone(),
        cdf,
        stderr,
        total_weight: tally.total / n,
        n_paths: cfg.n_paths,
    })
}

/// Distances between an empirical CDF and one component of a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfComparison {
    /// Grid points of the empirical CDF that lie inside the field's x-range.
    pub x: Vec<f64>,
    pub difference: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub sup_distance: f64,
    pub l2_distance: f64,
    /// Indices (into `x`) with `|z| > 4`.
    pub flagged: Vec<usize>,
}

pub const Z_FLAG: f64 = 4.0;

/// Compares `emp` against `field` (component 0) at time `t`, interpolating
/// the field linearly in `x` and between snapshots in `t`.
pub fn compare_cdf(emp: &EmpiricalCdf, field: &SpaceTimeField, t: f64) -> Result<CdfComparison> {
    let profile = field.profile_at(0, t)?;
    let (lo, hi) = (field.x[0], field.x[field.nx() - 1]);
    let mut x = Vec::new();
    let mut difference = Vec::new();
    let mut z_scores = Vec::new();
    for (i, &xi) in emp.x.iter().enumerate() {
        if xi < lo - 1e-12 || xi > hi + 1e-12 {
            continue;
        }
        let model = interp(&field.x, &profile, xi);
        let d = emp.cdf[i] - model;
        let z = if emp.stderr[i] > 0.0 {
            d / emp.stderr[i]
        } else if d == 0.0 {
            0.0
        } else {
            d.signum() * f64::INFINITY
        };
        x.push(xi);
        difference.push(d);
        z_scores.push(z);
    }
    if x.is_empty() {
        return Err(Error::GridMismatch(format!(
            "empirical grid does not overlap the field range [{lo}, {hi}]"
        )));
    }
    let sup_distance = difference.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    let mut l2 = 0.0;
    for k in 1..x.len() {
        l2 += 0.5 * (x[k] - x[k - 1]) * (difference[k].powi(2) + difference[k - 1].powi(2));
    }
    let flagged = z_scores
        .iter()
        .enumerate()
        .filter(|(_, z)| z.abs() > Z_FLAG)
        .map(|(i, _)| i)
        .collect();
    Ok(CdfComparison {
        x,
        difference,
        z_scores,
        sup_distance,
        l2_distance: l2.sqrt(),
        flagged,
    })
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 1 || x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let hi = xs.partition_point(|&g| g <= x);
    let lo = hi - 1;
    let w = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + w * (ys[hi] - ys[lo])
}
