//! Matrix Green kernel `K(x, t)` of the coupled buy/sell line.
//!
//! The time inversion is done by residues (see [`tau_residue_inverse`]), which
//! leaves `exp(t M(s))` with `M(s) = (v s - a) I + a B(s)`. As `|s|` grows this
//! tends to `exp((v s - a) t) I`, the Laplace image of the transported atom
//! `exp(-a t) delta(x + v t) I`: signal that met no node. That atom is carried
//! analytically; the grid holds the regular remainder
//!
//! ```text
//! K_reg(x, t) = (1 / 2 pi i) * integral of exp(s y) exp(-a t) [exp(a t B(s)) - I] ds,   y = x + v t
//! ```
//!
//! which vanishes ahead of the front (`y < 0`) and jumps to
//! `a t exp(-a t) B(0)` just behind it.
//!
//! [`tau_residue_inverse`]: super::transfer::tau_residue_inverse

use std::io::{BufWriter, Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::contour::{bromwich_estimate, ConeSide, ContourScheme, ContourSpec};
use super::transfer::cexpm1;
use crate::error::{Error, Result};
use crate::model::{KernelSpec, ModelParams};

pub const BINARY_MAGIC: &[u8; 4] = b"RGK1";

/// Offset used by the line scheme for nodes sitting exactly on the front,
/// which it evaluates on their post-cone side.
const FRONT_OFFSET: f64 = 1e-9;

/// Uniform `(x, t)` sampling grid, `t >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelGrid {
    pub x_min: f64,
    pub dx: f64,
    pub nx: usize,
    pub t_min: f64,
    pub dt: f64,
    pub nt: usize,
}

impl KernelGrid {
    /// Grid covering `[x_min, x_max] x [0, t_max]` with the given spacings.
    pub fn covering(x_min: f64, x_max: f64, dx: f64, t_max: f64, dt: f64) -> Result<Self> {
        if !(dx > 0.0 && dt > 0.0 && x_max >= x_min && t_max >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bad kernel grid x:[{x_min}, {x_max}]/{dx} t:[0, {t_max}]/{dt}"
            )));
        }
        let nx = ((x_max - x_min) / dx - 1e-9).ceil() as usize + 1;
        let nt = (t_max / dt - 1e-9).ceil() as usize + 1;
        let grid = Self {
            x_min,
            dx,
            nx,
            t_min: 0.0,
            dt,
            nt,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.x_min.is_finite()
            && self.dx.is_finite()
            && self.dx > 0.0
            && self.t_min.is_finite()
            && self.t_min >= 0.0
            && self.dt.is_finite()
            && self.dt > 0.0
            && self.nx >= 1
            && self.nt >= 1;
        if !ok {
            return Err(Error::InvalidParameter(format!("invalid kernel grid {self:?}")));
        }
        Ok(())
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + self.dx * i as f64
    }

    pub fn t(&self, j: usize) -> f64 {
        self.t_min + self.dt * j as f64
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.nx - 1)
    }

    pub fn t_max(&self) -> f64 {
        self.t(self.nt - 1)
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn ts(&self) -> Vec<f64> {
        (0..self.nt).map(|j| self.t(j)).collect()
    }

    pub fn len(&self) -> usize {
        self.nx * self.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Matrix component selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    K11,
    K12,
    K21,
    K22,
}

impl Component {
    pub fn index(self) -> usize {
        match self {
            Component::K11 => 0,
            Component::K12 => 1,
            Component::K21 => 2,
            Component::K22 => 3,
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "K11" => Some(Component::K11),
            "K12" => Some(Component::K12),
            "K21" => Some(Component::K21),
            "K22" => Some(Component::K22),
            _ => None,
        }
    }
}

/// The contours used ahead of and behind the signal front.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourPair {
    pub pre_cone: ContourSpec,
    pub post_cone: ContourSpec,
}

impl ContourPair {
    /// Circles of radius `lambda` through the origin: around the kernel pole
    /// behind the front, away from it ahead of the front.
    pub fn deformed(spec: &KernelSpec, n_nodes: usize) -> Self {
        let r = spec.lambda();
        Self {
            pre_cone: ContourSpec::deformed(0.0, r, n_nodes, ConeSide::PreCone),
            post_cone: ContourSpec::deformed(0.0, r, n_nodes, ConeSide::PostCone),
        }
    }

    pub fn truncated_line(n_nodes: usize) -> Self {
        Self {
            pre_cone: ContourSpec::truncated_line(0.0, n_nodes, ConeSide::PreCone),
            post_cone: ContourSpec::truncated_line(0.0, n_nodes, ConeSide::PostCone),
        }
    }

    pub fn scheme(&self) -> ContourScheme {
        self.post_cone.scheme
    }

    fn validate(&self, spec: &KernelSpec) -> Result<()> {
        let pole = -spec.lambda();
        self.pre_cone.validate_against(pole)?;
        self.post_cone.validate_against(pole)?;
        if self.pre_cone.side != ConeSide::PreCone || self.post_cone.side != ConeSide::PostCone {
            return Err(Error::InvalidContour("contour sides are swapped".into()));
        }
        let post = &self.post_cone;
        if post.scheme == ContourScheme::Deformed && post.abscissa - 2.0 * post.half_width >= pole {
            return Err(Error::InvalidContour(format!(
                "post-cone circle does not enclose the pole at {pole}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenKernel {
    pub grid: KernelGrid,
    pub params: ModelParams,
    pub spec: KernelSpec,
    /// Regular part `[K11, K12, K21, K22]` per node, `t`-major.
    pub values: Vec<[f64; 4]>,
    pub converged: Vec<bool>,
}

impl GreenKernel {
    pub fn index(&self, it: usize, ix: usize) -> usize {
        it * self.grid.nx + ix
    }

    pub fn value(&self, it: usize, ix: usize) -> [f64; 4] {
        self.values[self.index(it, ix)]
    }

    pub fn component(&self, c: Component, it: usize, ix: usize) -> f64 {
        self.value(it, ix)[c.index()]
    }

    /// Weight `exp(-a t)` of the transported diagonal atom at `x = -v t`.
    pub fn atom_weight(&self, t: f64) -> f64 {
        (-self.params.a() * t).exp()
    }

    pub fn front_position(&self, t: f64) -> f64 {
        -self.params.v() * t
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn n_unconverged(&self) -> usize {
        self.converged.iter().filter(|c| !**c).count()
    }

    /// Regular part at an arbitrary point. Exactly zero for `t < 0` or ahead
    /// of the front; bilinear inside the grid; an error elsewhere.
    pub fn sample(&self, c: Component, x: f64, t: f64) -> Result<f64> {
        Ok(self.sample_all(x, t)?[c.index()])
    }

    pub fn sample_all(&self, x: f64, t: f64) -> Result<[f64; 4]> {
        if t <= 0.0 || x + self.params.v() * t < 0.0 {
            return Ok([0.0; 4]);
        }
        let g = &self.grid;
        let fx = (x - g.x_min) / g.dx;
        let ft = (t - g.t_min) / g.dt;
        let eps = 1e-9;
        if fx < -eps || fx > (g.nx - 1) as f64 + eps || ft < -eps || ft > (g.nt - 1) as f64 + eps {
            return Err(Error::OutOfGrid(format!(
                "(x = {x}, t = {t}) outside x:[{}, {}] t:[{}, {}]",
                g.x_min,
                g.x_max(),
                g.t_min,
                g.t_max()
            )));
        }
        let (ix, wx) = cell(fx, g.nx);
        let (it, wt) = cell(ft, g.nt);
        let ix1 = (ix + 1).min(g.nx - 1);
        let it1 = (it + 1).min(g.nt - 1);
        let v00 = self.value(it, ix);
        let v01 = self.value(it, ix1);
        let v10 = self.value(it1, ix);
        let v11 = self.value(it1, ix1);
        let mut out = [0.0; 4];
        for k in 0..4 {
            let lo = v00[k] + wx * (v01[k] - v00[k]);
            let hi = v10[k] + wx * (v11[k] - v10[k]);
            out[k] = lo + wt * (hi - lo);
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "x,t,K11,K12,K21,K22,converged")?;
        for it in 0..self.grid.nt {
            let t = self.grid.t(it);
            for ix in 0..self.grid.nx {
                let k = self.value(it, ix);
                let ok = u8::from(self.converged[self.index(it, ix)]);
                writeln!(w, "{},{},{},{},{},{},{}", self.grid.x(ix), t, k[0], k[1], k[2], k[3], ok)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Binary dump: magic `RGK1`, `u64` nx and nt, then little-endian `f64`
    /// x_min, dx, t_min, dt, a, v, c, lambda, beta1, beta2, the values
    /// row-major (`t`, `x`, component), and one byte per node for the
    /// convergence flag.
    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(self.grid.nx as u64).to_le_bytes())?;
        w.write_all(&(self.grid.nt as u64).to_le_bytes())?;
        let header = [
            self.grid.x_min,
            self.grid.dx,
            self.grid.t_min,
            self.grid.dt,
            self.params.a(),
            self.params.v(),
            self.params.c(),
            self.spec.lambda(),
            self.spec.beta1(),
            self.spec.beta2(),
        ];
        for v in header {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in self.values.iter().flatten() {
            w.write_all(&v.to_le_bytes())?;
        }
        let flags: Vec<u8> = self.converged.iter().map(|&c| u8::from(c)).collect();
        w.write_all(&flags)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected RGK1")));
        }
        let nx = read_u64(&mut r)? as usize;
        let nt = read_u64(&mut r)? as usize;
        let mut header = [0.0; 10];
        for h in header.iter_mut() {
            *h = read_f64(&mut r)?;
        }
        let [x_min, dx, t_min, dt, a, v, c, lambda, beta1, beta2] = header;
        let grid = KernelGrid {
            x_min,
            dx,
            nx,
            t_min,
            dt,
            nt,
        };
        grid.validate()?;
        let n = nx
            .checked_mul(nt)
            .filter(|n| *n < (1 << 32))
            .ok_or_else(|| Error::Format(format!("implausible grid size {nx} x {nt}")))?;
        let params = ModelParams::new(a, v, c)?;
        let spec = KernelSpec::new(lambda, beta1, beta2)?;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let mut k = [0.0; 4];
            for c in k.iter_mut() {
                *c = read_f64(&mut r)?;
            }
            values.push(k);
        }
        let mut flags = vec![0u8; n];
        r.read_exact(&mut flags)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after kernel dump", rest.len())));
        }
        Ok(Self {
            grid,
            params,
            spec,
            values,
            converged: flags.into_iter().map(|b| b != 0).collect(),
        })
    }
}

fn cell(f: f64, n: usize) -> (usize, f64) {
    if n == 1 {
        return (0, 0.0);
    }
    let f = f.clamp(0.0, (n - 1) as f64);
    let i = (f.floor() as usize).min(n - 2);
    (i, f - i as f64)
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Regular part of one symmetric mode with kernel amplitude `amp` at
/// distance `y` behind the front and time `t`.
fn mode_value(y: f64, t: f64, amp: f64, params: &ModelParams, spec: &KernelSpec, contours: &ContourPair) -> Result<(f64, bool)> {
    let a = params.a();
    if t <= 0.0 || a == 0.0 || amp == 0.0 {
        return Ok((0.0, true));
    }
    let (contour, y) = if y < 0.0 {
        (&contours.pre_cone, y)
    } else if y == 0.0 && contours.post_cone.scheme == ContourScheme::TruncatedLine {
        (&contours.post_cone, FRONT_OFFSET)
    } else {
        (&contours.post_cone, y)
    };
    let lambda = spec.lambda();
    let decay = (-a * t).exp();
    let coupling = a * t * amp;
    let image = move |s: Complex64| decay * cexpm1(coupling / (s + lambda));
    let est = bromwich_estimate(image, y, contour, true)?;
    Ok((est.value.re, est.converged))
}

/// Regular part of `K` at a single point.
pub fn green_value(x: f64, t: f64, params: &ModelParams, spec: &KernelSpec, contours: &ContourPair) -> Result<([f64; 4], bool)> {
    let y = x + params.v() * t;
    let (plus, ok_plus) = mode_value(y, t, spec.plus_amplitude(), params, spec, contours)?;
    let (minus, ok_minus) = mode_value(y, t, spec.minus_amplitude(), params, spec, contours)?;
    let diag = 0.5 * (plus + minus);
    let off = 0.5 * (plus - minus);
    Ok(([diag, off, off, diag], ok_plus && ok_minus))
}

/// Tabulates the regular part of the Green kernel on `grid`.
///
/// Nodes are independent; the parallel map preserves order, so the output
/// does not depend on the number of worker threads.
pub fn green_kernel(grid: KernelGrid, params: &ModelParams, spec: &KernelSpec, contours: &ContourPair) -> Result<GreenKernel> {
    grid.validate()?;
    contours.validate(spec)?;
    let rows: Vec<Vec<([f64; 4], bool)>> = (0..grid.nt)
        .into_par_iter()
        .map(|it| {
            let t = grid.t(it);
            (0..grid.nx)
                .map(|ix| green_value(grid.x(ix), t, params, spec, contours))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let (values, converged) = rows.into_iter().flatten().unzip();
    Ok(GreenKernel {
        grid,
        params: *params,
        spec: *spec,
        values,
        converged,
    })
}
