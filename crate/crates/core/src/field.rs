use std::io::{BufWriter, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpretation {
    /// Values are distribution functions `P(W <= x)` (or signed analogues).
    Cumulative,
    Density,
}

/// Snapshots of one or two components on a uniform `x` grid.
///
/// Each component is stored `t`-major: `values[it * nx + ix]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeField {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub interpretation: Interpretation,
}

impl SpaceTimeField {
    pub fn new(x: Vec<f64>, t: Vec<f64>, components: Vec<Vec<f64>>, interpretation: Interpretation) -> Result<Self> {
        if components.is_empty() || components.len() > 2 {
            return Err(Error::InvalidParameter(format!(
                "a field has one or two components, got {}",
                components.len()
            )));
        }
        let n = x.len() * t.len();
        if components.iter().any(|c| c.len() != n) {
            return Err(Error::GridMismatch(format!(
                "component length does not match {} x {} grid",
                t.len(),
                x.len()
            )));
        }
        Ok(Self {
            x,
            t,
            components,
            interpretation,
        })
    }

    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn nt(&self) -> usize {
        self.t.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.components.len() == 1
    }

    pub fn snapshot(&self, component: usize, it: usize) -> &[f64] {
        let nx = self.nx();
        &self.components[component][it * nx..(it + 1) * nx]
    }

    pub fn value(&self, component: usize, it: usize, ix: usize) -> f64 {
        self.components[component][it * self.nx() + ix]
    }

    /// Index of the snapshot at time `t`, if one exists within `tol`.
    pub fn time_index(&self, t: f64, tol: f64) -> Option<usize> {
        self.t.iter().position(|&s| (s - t).abs() <= tol)
    }

    /// Profile of `component` at time `t`: the matching snapshot or a linear
    /// blend of the two neighbouring ones.
    pub fn profile_at(&self, component: usize, t: f64) -> Result<Vec<f64>> {
        let nt = self.nt();
        let (t0, t1) = (self.t[0], self.t[nt - 1]);
        let tol = 1e-9 * (1.0 + t1.abs());
        if t < t0 - tol || t > t1 + tol {
            return Err(Error::OutOfGrid(format!("t = {t} outside snapshot range [{t0}, {t1}]")));
        }
        if let Some(it) = self.time_index(t, tol) {
            return Ok(self.snapshot(component, it).to_vec());
        }
        let hi = self.t.partition_point(|&s| s <= t).min(nt - 1);
        let lo = hi - 1;
        let w = (t - self.t[lo]) / (self.t[hi] - self.t[lo]);
        let a = self.snapshot(component, lo);
        let b = self.snapshot(component, hi);
        Ok(a.iter().zip(b).map(|(a, b)| a + w * (b - a)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Whether every snapshot of `component` is non-decreasing in `x` up to `tol`.
    pub fn is_nondecreasing(&self, component: usize, tol: f64) -> bool {
        (0..self.nt()).all(|it| self.snapshot(component, it).windows(2).all(|w| w[1] >= w[0] - tol))
    }

    /// CSV with columns `t,x,p1,p2`; scalar fields leave `p2` empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "t,x,p1,p2")?;
        for it in 0..self.nt() {
            for ix in 0..self.nx() {
                let p1 = self.value(0, it, ix);
                if self.is_scalar() {
                    writeln!(w, "{},{},{},", self.t[it], self.x[ix], p1)?;
                } else {
                    writeln!(w, "{},{},{},{}", self.t[it], self.x[ix], p1, self.value(1, it, ix))?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Symmetric and antisymmetric modes `q_pm = p1 +- p2` of a two-component field.
///
/// Under symmetric kernels each mode obeys the scalar equation with kernel
/// amplitude `beta1 +- beta2`.
pub fn decouple(field: &SpaceTimeField) -> Result<(SpaceTimeField, SpaceTimeField)> {
    if field.n_components() != 2 {
        return Err(Error::InvalidParameter("decoupling needs a two-component field".into()));
    }
    let (p1, p2) = (&field.components[0], &field.components[1]);
    let plus = p1.iter().zip(p2).map(|(a, b)| a + b).collect();
    let minus = p1.iter().zip(p2).map(|(a, b)| a - b).collect();
    let mk = |values| SpaceTimeField::new(field.x.clone(), field.t.clone(), vec![values], field.interpretation);
    Ok((mk(plus)?, mk(minus)?))
}

/// Inverse of [`decouple`]: `p1 = (q+ + q-)/2`, `p2 = (q+ - q-)/2`.
pub fn recombine(plus: &SpaceTimeField, minus: &SpaceTimeField) -> Result<SpaceTimeField> {
    if !plus.is_scalar() || !minus.is_scalar() {
        return Err(Error::InvalidParameter("recombine takes two scalar fields".into()));
    }
    if plus.x != minus.x || plus.t != minus.t {
        return Err(Error::GridMismatch("mode fields live on different grids".into()));
    }
    let (qp, qm) = (&plus.components[0], &minus.components[0]);
    let p1 = qp.iter().zip(qm).map(|(a, b)| 0.5 * (a + b)).collect();
    let p2 = qp.iter().zip(qm).map(|(a, b)| 0.5 * (a - b)).collect();
    SpaceTimeField::new(plus.x.clone(), plus.t.clone(), vec![p1, p2], plus.interpretation)
}
