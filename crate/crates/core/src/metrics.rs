//! Functionals of the Green kernel along lines parallel to the signal front.
//!
//! A cone slice with delay `tau` samples `K(x, x / speed - tau)`.

use std::io::{BufWriter, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplace::{Component, GreenKernel, SignalWaveform};

pub const DEFAULT_RANGE: (f64, f64) = (-10.0, 10.0);

/// Relative floor applied to the clipped reference slice before taking logs.
pub const KL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    Autocorrelation,
    Kl,
}

impl MetricKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "autocorr" | "autocorrelation" => Some(Self::Autocorrelation),
            "kl" => Some(Self::Kl),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Autocorrelation => "autocorr",
            Self::Kl => "kl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub metric: MetricKind,
    pub tau: Vec<f64>,
    pub values: Vec<f64>,
    /// Unclipped, unnormalized KL integrand; equals `values` for autocorrelation.
    pub values_raw: Vec<f64>,
    /// Signed mass of the `tau = 0` slice.
    pub mass_ref: f64,
    /// Signed mass of each slice before clipping.
    pub mass_slice: Vec<f64>,
    /// Absolute floor applied to the normalized reference (KL only).
    pub floor: f64,
    pub speed: f64,
    pub component: Component,
    pub range: (f64, f64),
}

impl MetricSeries {
    /// Index of the largest value; ties resolve to the first.
    pub fn argmax(&self) -> Option<usize> {
        argmax(&self.values)
    }

    pub fn argmax_raw(&self) -> Option<usize> {
        argmax(&self.values_raw)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "tau,value,value_raw,mass_ref,mass_slice")?;
        for i in 0..self.tau.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.tau[i], self.values[i], self.values_raw[i], self.mass_ref, self.mass_slice[i]
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, x) in v.iter().enumerate() {
        if best.is_none_or(|b| *x > v[b]) {
            best = Some(i);
        }
    }
    best
}

fn check_speed(speed: f64) -> Result<()> {
    if speed.is_finite() && speed > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("slice speed must be > 0, got {speed}")))
    }
}

/// Kernel grid nodes inside `[lo, hi]`.
fn x_nodes(k: &GreenKernel, (lo, hi): (f64, f64)) -> Result<Vec<f64>> {
    let g = &k.grid;
    let eps = 1e-9 * g.dx;
    if !(lo < hi) || lo < g.x_min - eps || hi > g.x_max() + eps {
        return Err(Error::OutOfGrid(format!(
            "integration range [{lo}, {hi}] not inside kernel x-range [{}, {}]",
            g.x_min,
            g.x_max()
        )));
    }
    Ok(g.xs().into_iter().filter(|x| *x >= lo - eps && *x <= hi + eps).collect())
}

fn slice_values(k: &GreenKernel, xs: &[f64], offset: f64, speed: f64, c: Component) -> Result<Vec<f64>> {
    xs.iter().map(|&x| k.sample(c, x, x / speed - offset)).collect()
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

fn trapezoid_weights(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { xs[i] - xs[i - 1] } else { 0.0 };
            let right = if i + 1 < n { xs[i + 1] - xs[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

/// `K(x, x / speed - offset)` over the kernel's x-grid. The regular part is
/// sampled; the transported atom is not included.
pub fn cone_slice(k: &GreenKernel, offset: f64, speed: f64, c: Component) -> Result<SignalWaveform> {
    check_speed(speed)?;
    let xs = k.grid.xs();
    let values = slice_values(k, &xs, offset, speed, c)?;
    let zeros = vec![0.0; xs.len()];
    SignalWaveform::new(xs, values, zeros)
}

/// `I(tau) = integral over [lo, hi] of K^2(x, x / speed - tau) dx`.
pub fn autocorrelation(
    k: &GreenKernel,
    tau: &[f64],
    speed: f64,
    c: Component,
    range: (f64, f64),
) -> Result<MetricSeries> {
    check_speed(speed)?;
    let xs = x_nodes(k, range)?;
    let reference = slice_values(k, &xs, 0.0, speed, c)?;
    let rows: Vec<(f64, f64)> = tau
        .par_iter()
        .map(|&t| {
            let s = slice_values(k, &xs, t, speed, c)?;
            let sq: Vec<f64> = s.iter().map(|v| v * v).collect();
            Ok((trapezoid(&xs, &sq), trapezoid(&xs, &s)))
        })
        .collect::<Result<_>>()?;
    let (values, mass_slice): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    Ok(MetricSeries {
        metric: MetricKind::Autocorrelation,
        tau: tau.to_vec(),
        values_raw: values.clone(),
        values,
        mass_ref: trapezoid(&xs, &reference),
        mass_slice,
        floor: 0.0,
        speed,
        component: c,
        range,
    })
}

/// Kullback-Leibler distance of each delayed slice from the `tau = 0` slice.
///
/// `values` clips both slices at zero and normalizes them to unit mass;
/// each pointwise term `p log(p/q) - p + q` is non-negative, so the sum is
/// too. `values_raw` integrates `K_tau log(K_tau / K_0)` over points where
/// both are positive, without normalization.
pub fn kl_distance(k: &GreenKernel, tau: &[f64], speed: f64, c: Component, range: (f64, f64)) -> Result<MetricSeries> {
    check_speed(speed)?;
    let xs = x_nodes(k, range)?;
    let w = trapezoid_weights(&xs);
    let reference = slice_values(k, &xs, 0.0, speed, c)?;
    let mass_ref = trapezoid(&xs, &reference);

    let clipped_ref: Vec<f64> = reference.iter().map(|v| v.max(0.0)).collect();
    let ref_mass: f64 = w.iter().zip(&clipped_ref).map(|(w, v)| w * v).sum();
    if !(ref_mass > 0.0) {
        return Err(Error::DegenerateReference);
    }
    let q: Vec<f64> = clipped_ref.iter().map(|v| v / ref_mass).collect();
    let floor = KL_FLOOR * q.iter().fold(0.0_f64, |m, v| m.max(*v));

    let rows: Vec<(f64, f64, f64)> = tau
        .par_iter()
        .map(|&t| {
            let s = slice_values(k, &xs, t, speed, c)?;
            let mass = trapezoid(&xs, &s);
            let raw: f64 = (0..xs.len())
                .filter(|&i| s[i] > 0.0 && reference[i] > 0.0)
                .map(|i| w[i] * s[i] * (s[i] / reference[i]).ln())
                .sum();
            let clipped: Vec<f64> = s.iter().map(|v| v.max(0.0)).collect();
            let m: f64 = w.iter().zip(&clipped).map(|(w, v)| w * v).sum();
            let value = if m > 0.0 {
                let mut d = 0.0;
                for i in 0..xs.len() {
                    let p = clipped[i] / m;
                    let qi = q[i].max(floor);
                    let term = if p > 0.0 { p * (p / qi).ln() - p + qi } else { q[i] };
                    d += w[i] * term.max(0.0);
                }
                d
            } else {
                f64::NAN
            };
            Ok((value, raw, mass))
        })
        .collect::<Result<_>>()?;

    let mut values = Vec::with_capacity(tau.len());
    let mut values_raw = Vec::with_capacity(tau.len());
    let mut mass_slice = Vec::with_capacity(tau.len());
    for (i, (v, r, m)) in rows.into_iter().enumerate() {
        if v.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "slice at tau = {} has no positive mass",
                tau[i]
            )));
        }
        values.push(v);
        values_raw.push(r);
        mass_slice.push(m);
    }
    Ok(MetricSeries {
        metric: MetricKind::Kl,
        tau: tau.to_vec(),
        values,
        values_raw,
        mass_ref,
        mass_slice,
        floor,
        speed,
        component: c,
        range,
    })
}

/// Evenly spaced delays `lo, lo + step, ..` up to `hi` inclusive.
pub fn tau_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidParameter(format!("bad tau grid {lo}:{hi}:{step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + step * i as f64).collect())
}
