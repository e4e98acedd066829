//! Explicit time-domain integration of the coupled Takács system
//!
//! ```text
//! dp_i/dt = v dp_i/dx - a p_i + a sum_k integral_{x_min}^{x} b_ik(x - y) p_k(y) dy
//! ```
//!
//! with `b_ik(x) = beta_ik exp(-lambda x)`. The Stieltjes form
//! `integral B_ik(x - y) d_y p_k(y)` with `B_ik` the defective jump
//! distribution `(beta_ik / lambda)(1 - exp(-lambda x))` reduces to this by
//! parts, the atom of `p_k` at `x_min` included.
//!
//! Characteristics run leftwards, so the advection term is upwinded from the
//! right neighbour and the inflow value is injected at `x_max`. The
//! convolution is first integrated exactly against the piecewise-linear
//! interpolant of `p`, which makes the exponential recursion and the direct
//! quadrature two evaluations of the same discrete operator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Interpretation, SpaceTimeField};
use crate::model::{BoundaryConditions, KernelSpec, ModelParams, Profile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvolutionMethod {
    /// O(1) per node exponential recursion.
    Recursion,
    /// O(N) per node direct sum, for checking the recursion.
    DirectQuadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dx: f64,
    pub dt: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub t_end: f64,
    /// Keep every n-th time step (the first and last are always kept).
    pub snapshot_every: usize,
    pub method: ConvolutionMethod,
    /// Values beyond this magnitude abort the run as a blow-up.
    pub p_max: f64,
    pub interpretation: Interpretation,
}

impl SolverConfig {
    pub fn new(dx: f64, dt: f64, x_min: f64, x_max: f64, t_end: f64) -> Self {
        Self {
            dx,
            dt,
            x_min,
            x_max,
            t_end,
            snapshot_every: 1,
            method: ConvolutionMethod::Recursion,
            p_max: 1e6,
            interpretation: Interpretation::Density,
        }
    }

    pub fn n_cells(&self) -> usize {
        ((self.x_max - self.x_min) / self.dx).round() as usize
    }

    pub fn n_steps(&self) -> usize {
        if self.t_end <= 0.0 {
            0
        } else {
            (self.t_end / self.dt - 1e-9).ceil() as usize
        }
    }

    /// Time step actually used: `t_end / n_steps`, never above `dt`.
    pub fn effective_dt(&self) -> f64 {
        match self.n_steps() {
            0 => self.dt,
            n => self.t_end / n as f64,
        }
    }

    pub fn cfl(&self, v: f64) -> f64 {
        v * self.effective_dt() / self.dx
    }

    pub fn x_grid(&self) -> Vec<f64> {
        (0..=self.n_cells()).map(|i| self.x_min + self.dx * i as f64).collect()
    }

    pub fn validate(&self, v: f64) -> Result<()> {
        let finite = [self.dx, self.dt, self.x_min, self.x_max, self.t_end, self.p_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.dx <= 0.0 || self.dt <= 0.0 || self.t_end < 0.0 || self.p_max <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "need dx, dt, p_max > 0 and t_end >= 0, got {self:?}"
            )));
        }
        if self.n_cells() < 1 {
            return Err(Error::InvalidConfig(format!(
                "domain [{}, {}] holds no cell of width {}",
                self.x_min, self.x_max, self.dx
            )));
        }
        if self.snapshot_every == 0 {
            return Err(Error::InvalidConfig("snapshot_every must be >= 1".into()));
        }
        let cfl = self.cfl(v);
        if cfl > 1.0 + 1e-12 {
            return Err(Error::InvalidConfig(format!("CFL number v dt / dx = {cfl} exceeds 1")));
        }
        Ok(())
    }
}

/// Weights of `integral_0^h exp(-lambda r) f(x_{i+1} - r) dr` for linear `f`:
/// `(weight of f_i, weight of f_{i+1})`.
fn cell_weights(lambda: f64, h: f64) -> (f64, f64) {
    let z = lambda * h;
    let g1 = if z == 0.0 { h } else { -(-z).exp_m1() / lambda };
    // integral_0^h r exp(-lambda r) dr
    let g2 = if z < 1e-3 {
        h * h * (0.5 - z / 3.0 + z * z / 8.0 - z * z * z / 30.0)
    } else {
        (-(-z).exp_m1() - z * (-z).exp()) / (lambda * lambda)
    };
    (g2 / h, g1 - g2 / h)
}

struct Convolver {
    decay: f64,
    w_old: f64,
    w_new: f64,
    lambda: f64,
    dx: f64,
    method: ConvolutionMethod,
}

impl Convolver {
    fn new(lambda: f64, dx: f64, method: ConvolutionMethod) -> Self {
        let (w_old, w_new) = cell_weights(lambda, dx);
        Self {
            decay: (-lambda * dx).exp(),
            w_old,
            w_new,
            lambda,
            dx,
            method,
        }
    }

    /// `out[i] = integral_{x_0}^{x_i} exp(-lambda (x_i - y)) f(y) dy`.
    fn apply(&self, f: &[f64], out: &mut [f64]) {
        let n = f.len();
        out[0] = 0.0;
        match self.method {
            ConvolutionMethod::Recursion => {
                for i in 1..n {
                    out[i] = self.decay * out[i - 1] + self.w_old * f[i - 1] + self.w_new * f[i];
                }
            }
            ConvolutionMethod::DirectQuadrature => {
                for i in 1..n {
                    let mut acc = 0.0;
                    for k in 0..i {
                        let lag = (i - 1 - k) as f64 * self.dx;
                        acc += (-self.lambda * lag).exp() * (self.w_old * f[k] + self.w_new * f[k + 1]);
                    }
                    out[i] = acc;
                }
            }
        }
    }
}

/// Integrates `components.len()` coupled fields whose interaction matrix is
/// `amplitudes[i][k]`.
fn integrate(
    params: &ModelParams,
    lambda: f64,
    amplitudes: &[Vec<f64>],
    initial: &[&Profile],
    inflow: &[&Profile],
    cfg: &SolverConfig,
) -> Result<SpaceTimeField> {
    let v = params.v();
    let a = params.a();
    cfg.validate(v)?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }

    let x = cfg.x_grid();
    let nx = x.len();
    let ncomp = initial.len();
    let n_steps = cfg.n_steps();
    let dt = cfg.effective_dt();
    let courant = v * dt / cfg.dx;
    // Exponential integrator along characteristics: the loss term is exact,
    // the gain is interpolated linearly in time between the foot of the
    // characteristic (old step) and the node (predicted new step).
    let h = a * dt;
    let survive = (-h).exp();
    let feed = -(-h).exp_m1();
    let w_end = if h > 0.0 { 1.0 - feed / h } else { 0.0 };
    let w_foot = feed - w_end;
    let conv = Convolver::new(lambda, cfg.dx, cfg.method);

    let mut u: Vec<Vec<f64>> = initial.iter().map(|p| x.iter().map(|&xi| p.eval(xi)).collect()).collect();
    let mut next = u.clone();
    let mut integrals = vec![vec![0.0; nx]; ncomp];
    let mut advected = vec![vec![0.0; nx]; ncomp];
    let mut foot_gain = vec![vec![0.0; nx]; ncomp];

    let mut times = vec![0.0];
    let mut history: Vec<Vec<f64>> = u.clone();

    let gain_at = |integrals: &[Vec<f64>], c: usize, i: usize| -> f64 {
        let mut g = 0.0;
        for (k, amp) in amplitudes[c].iter().enumerate() {
            if *amp != 0.0 {
                g += amp * integrals[k][i];
            }
        }
        g
    };

    for step in 1..=n_steps {
        let t_new = dt * step as f64;
        for (k, field) in u.iter().enumerate() {
            conv.apply(field, &mut integrals[k]);
        }
        // Predictor.
        for c in 0..ncomp {
            let cur = &u[c];
            let mut g_next = gain_at(&integrals, c, nx - 1);
            for i in (0..nx - 1).rev() {
                let g = gain_at(&integrals, c, i);
                advected[c][i] = survive * (cur[i] + courant * (cur[i + 1] - cur[i]));
                foot_gain[c][i] = g + courant * (g_next - g);
                next[c][i] = advected[c][i] + feed * foot_gain[c][i];
                g_next = g;
            }
            next[c][nx - 1] = inflow[c].eval(t_new);
        }
        // Corrector.
        if w_end > 0.0 {
            for (k, field) in next.iter().enumerate() {
                conv.apply(field, &mut integrals[k]);
            }
            for c in 0..ncomp {
                for i in 0..nx - 1 {
                    next[c][i] = advected[c][i] + w_foot * foot_gain[c][i] + w_end * gain_at(&integrals, c, i);
                }
            }
        }
        let mut max_abs = 0.0_f64;
        for val in next.iter().flatten() {
            let m = val.abs();
            if !(m <= max_abs) {
                max_abs = if m.is_nan() { f64::INFINITY } else { m };
            }
        }
        if !(max_abs <= cfg.p_max) {
            return Err(Error::Instability {
                step,
                t: t_new,
                max_abs,
            });
        }
        std::mem::swap(&mut u, &mut next);
        if step % cfg.snapshot_every == 0 || step == n_steps {
            times.push(t_new);
            for (h, field) in history.iter_mut().zip(&u) {
                h.extend_from_slice(field);
            }
        }
    }

    SpaceTimeField::new(x, times, history, cfg.interpretation)
}

/// Coupled buy/sell solve with symmetric kernels.
pub fn fd_solve(params: &ModelParams, spec: &KernelSpec, bc: &BoundaryConditions, cfg: &SolverConfig) -> Result<SpaceTimeField> {
    let amplitudes = vec![vec![spec.beta1(), spec.beta2()], vec![spec.beta2(), spec.beta1()]];
    integrate(params, spec.lambda(), &amplitudes, &[&bc.f1, &bc.f2], &[&bc.w1, &bc.w2], cfg)
}

/// Single-signal solve with kernel `amplitude * exp(-lambda x)`. The
/// amplitude may be negative (the antisymmetric mode when beta2 > beta1).
pub fn fd_solve_scalar(
    params: &ModelParams,
    lambda: f64,
    amplitude: f64,
    initial: &Profile,
    inflow: &Profile,
    cfg: &SolverConfig,
) -> Result<SpaceTimeField> {
    if !amplitude.is_finite() {
        return Err(Error::InvalidParameter(format!("kernel amplitude must be finite, got {amplitude}")));
    }
    integrate(params, lambda, &[vec![amplitude]], &[initial], &[inflow], cfg)
}
