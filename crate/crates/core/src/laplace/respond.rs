use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use serde::{Deserialize, Serialize};

use super::green::GreenKernel;
use crate::error::{Error, Result};

/// A buy/sell waveform `(phi1(x), phi2(x))` sampled on an increasing grid.
/// Treated as zero outside the sampled range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalWaveform {
    pub x: Vec<f64>,
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
}

impl SignalWaveform {
    pub fn new(x: Vec<f64>, phi1: Vec<f64>, phi2: Vec<f64>) -> Result<Self> {
        if x.len() != phi1.len() || x.len() != phi2.len() {
            return Err(Error::GridMismatch(format!(
                "waveform lengths differ: x {}, phi1 {}, phi2 {}",
                x.len(),
                phi1.len(),
                phi2.len()
            )));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::GridMismatch("waveform grid must be strictly increasing".into()));
        }
        if x.iter().chain(&phi1).chain(&phi2).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("waveform samples must be finite".into()));
        }
        Ok(Self { x, phi1, phi2 })
    }

    pub fn from_fns(x: &[f64], f1: impl Fn(f64) -> f64, f2: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            x.to_vec(),
            x.iter().map(|&v| f1(v)).collect(),
            x.iter().map(|&v| f2(v)).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Linear interpolation of both components; zero outside the grid.
    pub fn eval(&self, x: f64) -> [f64; 2] {
        let n = self.x.len();
        if n == 0 || x < self.x[0] || x > self.x[n - 1] {
            return [0.0, 0.0];
        }
        if n == 1 {
            return [self.phi1[0], self.phi2[0]];
        }
        let hi = self.x.partition_point(|&g| g <= x).min(n - 1);
        let lo = hi - 1;
        let w = (x - self.x[lo]) / (self.x[hi] - self.x[lo]);
        [
            self.phi1[lo] + w * (self.phi1[hi] - self.phi1[lo]),
            self.phi2[lo] + w * (self.phi2[hi] - self.phi2[lo]),
        ]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "x,phi1,phi2")?;
        for i in 0..self.x.len() {
            writeln!(w, "{},{},{}", self.x[i], self.phi1[i], self.phi2[i])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `x,phi1,phi2` rows after a header line.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut x = Vec::new();
        let mut phi1 = Vec::new();
        let mut phi2 = Vec::new();
        for (lineno, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if lineno == 0 || line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() < 3 {
                return Err(Error::Format(format!("line {}: expected x,phi1,phi2", lineno + 1)));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {s:?}: {e}", lineno + 1)))
            };
            x.push(parse(fields[0])?);
            phi1.push(parse(fields[1])?);
            phi2.push(parse(fields[2])?);
        }
        Self::new(x, phi1, phi2)
    }
}

fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let left = if i > 0 { x[i] - x[i - 1] } else { 0.0 };
            let right = if i + 1 < n { x[i + 1] - x[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

/// Regular kernel row at time `t`, linearly interpolated between grid rows.
fn kernel_row(k: &GreenKernel, t: f64) -> Result<Vec<[f64; 4]>> {
    let g = &k.grid;
    let ft = (t - g.t_min) / g.dt;
    if ft < -1e-9 || ft > (g.nt - 1) as f64 + 1e-9 {
        return Err(Error::GridMismatch(format!(
            "t = {t} is outside the kernel time range [{}, {}]",
            g.t_min,
            g.t_max()
        )));
    }
    let ft = ft.clamp(0.0, (g.nt - 1) as f64);
    let it = ft.round();
    if (ft - it).abs() < 1e-9 || g.nt == 1 {
        let it = it as usize;
        return Ok((0..g.nx).map(|ix| k.value(it, ix)).collect());
    }
    let lo = ft.floor() as usize;
    let w = ft - lo as f64;
    Ok((0..g.nx)
        .map(|ix| {
            let a = k.value(lo, ix);
            let b = k.value(lo + 1, ix);
            [0, 1, 2, 3].map(|c| a[c] + w * (b[c] - a[c]))
        })
        .collect())
}

/// Response `F(x, t) = integral of K(x - x', t) Phi(x') dx'` on the input grid.
///
/// The transported atom contributes `exp(-a t) Phi(x + v t)`; the regular
/// part is integrated by the trapezoid rule over the input samples.
pub fn respond(input: &SignalWaveform, k: &GreenKernel, t: f64) -> Result<SignalWaveform> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidParameter(format!("response time must be >= 0, got {t}")));
    }
    let row = kernel_row(k, t)?;
    let g = &k.grid;
    let front = k.front_position(t);
    let atom = k.atom_weight(t);
    let weights = trapezoid_weights(&input.x);

    let lookup = |z: f64| -> Result<[f64; 4]> {
        if z < front {
            return Ok([0.0; 4]);
        }
        let f = (z - g.x_min) / g.dx;
        if f < -1e-9 || f > (g.nx - 1) as f64 + 1e-9 {
            return Err(Error::GridMismatch(format!(
                "kernel x-range [{}, {}] does not cover offset {z} needed by the input support",
                g.x_min,
                g.x_max()
            )));
        }
        if g.nx == 1 {
            return Ok(row[0]);
        }
        let f = f.clamp(0.0, (g.nx - 1) as f64);
        let i = (f.floor() as usize).min(g.nx - 2);
        let w = f - i as f64;
        let (a, b) = (row[i], row[i + 1]);
        Ok([0, 1, 2, 3].map(|c| a[c] + w * (b[c] - a[c])))
    };

    let n = input.len();
    let mut out1 = vec![0.0; n];
    let mut out2 = vec![0.0; n];
    for i in 0..n {
        let xi = input.x[i];
        let [a1, a2] = input.eval(xi - front);
        let mut f1 = atom * a1;
        let mut f2 = atom * a2;
        for j in 0..n {
            let (p1, p2) = (input.phi1[j], input.phi2[j]);
            if p1 == 0.0 && p2 == 0.0 {
                continue;
            }
            let kk = lookup(xi - input.x[j])?;
            let w = weights[j];
            f1 += w * (kk[0] * p1 + kk[1] * p2);
            f2 += w * (kk[2] * p1 + kk[3] * p2);
        }
        out1[i] = f1;
        out2[i] = f2;
    }
    SignalWaveform::new(input.x.clone(), out1, out2)
}
