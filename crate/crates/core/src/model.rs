//! Model parameters, the exponential node-delay kernels and the
//! characteristic determinant of the coupled buy/sell system.
//!
//! Internally everything is nondimensional: time in units of `1/a` and
//! length in units of `c/a`. The Laplace variable `s` is conjugate to
//! space and `tau` to time; the forward operator on a transformed pair
//! `(phi1, phi2)` is
//!
//! ```text
//! | tau - v s + a - a b1(s)      -a b2(s)           |
//! |      -a b2(s)           tau - v s + a - a b1(s) |
//! ```
//!
//! with `b1(s) = beta1 / (s + lambda)` and `b2(s) = beta2 / (s + lambda)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point `s` or `tau` of the Laplace plane.
pub type ComplexPoint = Complex64;

/// Tolerance used when checking kernel masses against one.
const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Units {
    /// `a = 1`, `c = 1`.
    Nondimensional,
    /// Caller-supplied `a` and `c`.
    Physical,
}

/// Arrival intensity, line velocity and the light speed used as the unit of velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    a: f64,
    v: f64,
    c: f64,
    units: Units,
}

impl ModelParams {
    /// Nondimensional parameters: `a = 1`, `c = 1`, `v = v_over_c`.
    pub fn nondimensional(v_over_c: f64) -> Result<Self> {
        Self::validate(1.0, v_over_c, 1.0)?;
        Ok(Self {
            a: 1.0,
            v: v_over_c,
            c: 1.0,
            units: Units::Nondimensional,
        })
    }

    /// General parameters. `a = 0` is accepted as the kernel-free transport limit.
    pub fn new(a: f64, v: f64, c: f64) -> Result<Self> {
        Self::validate(a, v, c)?;
        let units = if a == 1.0 && c == 1.0 {
            Units::Nondimensional
        } else {
            Units::Physical
        };
        Ok(Self { a, v, c, units })
    }

    fn validate(a: f64, v: f64, c: f64) -> Result<()> {
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "arrival intensity a must be finite and >= 0, got {a}"
            )));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "light speed c must be positive, got {c}"
            )));
        }
        if !(v.is_finite() && v > 0.0 && v <= c) {
            return Err(Error::InvalidParameter(format!(
                "line velocity must satisfy 0 < v <= c, got v = {v}, c = {c}"
            )));
        }
        Ok(())
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn units(&self) -> Units {
        self.units
    }
}

/// Which of the two kernel families: same-sign transmission (B11 = B22)
/// or cross-sign cancellation (B12 = B21).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    Same,
    Cross,
}

/// Symmetric exponential node-delay kernels.
///
/// `B(x) = beta * exp(-lambda x)` for `x >= 0`, zero otherwise, with Laplace
/// image `beta / (s + lambda)`. The symmetric structure (B11 = B22,
/// B12 = B21) is built into the type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    lambda: f64,
    beta1: f64,
    beta2: f64,
}

impl KernelSpec {
    pub fn new(lambda: f64, beta1: f64, beta2: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel decay rate lambda must be positive, got {lambda}"
            )));
        }
        for (name, beta) in [("beta1", beta1), ("beta2", beta2)] {
            if !(beta.is_finite() && beta >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and >= 0, got {beta}"
                )));
            }
            if beta / lambda > 1.0 + MASS_TOL {
                return Err(Error::InvalidParameter(format!(
                    "{name}/lambda = {} exceeds unit kernel mass",
                    beta / lambda
                )));
            }
        }
        Ok(Self {
            lambda,
            beta1,
            beta2,
        })
    }

    /// Kernels with no interaction at all.
    pub fn free(lambda: f64) -> Result<Self> {
        Self::new(lambda, 0.0, 0.0)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    pub fn beta2(&self) -> f64 {
        self.beta2
    }

    pub fn amplitude(&self, which: KernelKind) -> f64 {
        match which {
            KernelKind::Same => self.beta1,
            KernelKind::Cross => self.beta2,
        }
    }

    /// Amplitude seen by the symmetric mode `p1 + p2`.
    pub fn plus_amplitude(&self) -> f64 {
        self.beta1 + self.beta2
    }

    /// Amplitude seen by the antisymmetric mode `p1 - p2`.
    pub fn minus_amplitude(&self) -> f64 {
        self.beta1 - self.beta2
    }

    /// Total mass `beta / lambda` of one kernel.
    pub fn mass(&self, which: KernelKind) -> f64 {
        self.amplitude(which) / self.lambda
    }

    /// Combined mass above one: more orders re-emitted than absorbed.
    pub fn mass_warning(&self) -> bool {
        (self.beta1 + self.beta2) / self.lambda > 1.0 + MASS_TOL
    }
}

/// Node-delay kernel density in space.
pub fn kernel_b(x: f64, which: KernelKind, spec: &KernelSpec) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        spec.amplitude(which) * (-spec.lambda * x).exp()
    }
}

fn check_pole(s: ComplexPoint, spec: &KernelSpec) -> Result<Complex64> {
    let shifted = s + spec.lambda;
    if !(s.re.is_finite() && s.im.is_finite()) || shifted.norm() <= 1e-14 * (1.0 + spec.lambda) {
        return Err(Error::Pole { s });
    }
    Ok(shifted)
}

/// Laplace image `beta / (s + lambda)` of [`kernel_b`].
pub fn kernel_beta(s: ComplexPoint, which: KernelKind, spec: &KernelSpec) -> Result<ComplexPoint> {
    let shifted = check_pole(s, spec)?;
    Ok(spec.amplitude(which) / shifted)
}

/// Branch of the clearing set. `Plus` carries `beta1 + beta2`, i.e. the factor
/// `s - tau - a (1 - b1 - b2)`; `Minus` carries `beta1 - beta2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Branch::Plus => "plus",
            Branch::Minus => "minus",
        }
    }
}

/// Root `tau(s)` of one factor of the characteristic determinant:
/// `v s - a + a (beta1 +- beta2) / (s + lambda)`.
pub fn clearing_root(
    s: ComplexPoint,
    branch: Branch,
    params: &ModelParams,
    spec: &KernelSpec,
) -> Result<ComplexPoint> {
    let shifted = check_pole(s, spec)?;
    let amp = spec.beta1 + branch.sign() * spec.beta2;
    Ok(params.v * s - params.a + params.a * amp / shifted)
}

/// One factor `v s - tau - a (1 - b1(s) -+ b2(s))` of the determinant.
pub fn characteristic_factor(
    s: ComplexPoint,
    tau: ComplexPoint,
    branch: Branch,
    params: &ModelParams,
    spec: &KernelSpec,
) -> Result<ComplexPoint> {
    let b1 = kernel_beta(s, KernelKind::Same, spec)?;
    let b2 = kernel_beta(s, KernelKind::Cross, spec)?;
    let a = params.a;
    Ok(params.v * s - tau - a * (1.0 - b1 - branch.sign() * b2))
}

/// Characteristic determinant `P(s, tau)`; its zero set is the market-clearing boundary.
pub fn characteristic_p(
    s: ComplexPoint,
    tau: ComplexPoint,
    params: &ModelParams,
    spec: &KernelSpec,
) -> Result<ComplexPoint> {
    let plus = characteristic_factor(s, tau, Branch::Plus, params, spec)?;
    let minus = characteristic_factor(s, tau, Branch::Minus, params, spec)?;
    Ok(plus * minus)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingCurve {
    pub branch: Branch,
    /// `(s, tau)` pairs on the real axis.
    pub samples: Vec<(f64, f64)>,
}

/// Residual tolerance every emitted clearing sample must meet.
pub const CLEARING_TOL: f64 = 1e-10;

/// Samples both branches `tau_pm(s)` of the clearing set on `[lo, hi]`.
pub fn clearing_curves(
    s_range: (f64, f64),
    n_samples: usize,
    params: &ModelParams,
    spec: &KernelSpec,
) -> Result<(ClearingCurve, ClearingCurve)> {
    let (lo, hi) = s_range;
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(Error::InvalidParameter(format!("bad s-range [{lo}, {hi}]")));
    }
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be >= 1".into()));
    }
    let pole = -spec.lambda;
    if lo <= pole && pole <= hi {
        return Err(Error::RangeContainsPole { lo, hi, pole });
    }

    let s_values: Vec<f64> = if n_samples == 1 {
        vec![lo]
    } else {
        let step = (hi - lo) / (n_samples - 1) as f64;
        (0..n_samples).map(|i| lo + step * i as f64).collect()
    };

    let mut curves = [Branch::Plus, Branch::Minus].map(|branch| ClearingCurve {
        branch,
        samples: Vec::with_capacity(n_samples),
    });
    for curve in curves.iter_mut() {
        for &s in &s_values {
            let sc = Complex64::new(s, 0.0);
            let tau = clearing_root(sc, curve.branch, params, spec)?.re;
            let residual = characteristic_p(sc, Complex64::new(tau, 0.0), params, spec)?.norm();
            if !(residual < CLEARING_TOL) {
                return Err(Error::Residual { s, residual });
            }
            curve.samples.push((s, tau));
        }
    }
    let [plus, minus] = curves;
    Ok((plus, minus))
}

/// A real function known through samples: linear interpolation inside the
/// sampled range, constant extrapolation outside, zero when empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl Profile {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::GridMismatch(format!(
                "profile has {} grid points but {} values",
                grid.len(),
                values.len()
            )));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::GridMismatch("profile grid must be strictly increasing".into()));
        }
        if grid.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("profile samples must be finite".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        Self {
            grid: vec![0.0],
            values: vec![value],
        }
    }

    pub fn from_fn(grid: &[f64], f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.iter().map(|&x| f(x)).collect();
        Self::new(grid.to_vec(), values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.grid.len() {
            0 => 0.0,
            1 => self.values[0],
            n => {
                if x <= self.grid[0] {
                    return self.values[0];
                }
                if x >= self.grid[n - 1] {
                    return self.values[n - 1];
                }
                let hi = self.grid.partition_point(|&g| g <= x);
                let lo = hi - 1;
                let w = (x - self.grid[lo]) / (self.grid[hi] - self.grid[lo]);
                self.values[lo] + w * (self.values[hi] - self.values[lo])
            }
        }
    }

    /// Largest absolute sample.
    pub fn bound(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Initial profiles `p1(x, 0)`, `p2(x, 0)` and inflow series `p1(., t)`, `p2(., t)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub f1: Profile,
    pub f2: Profile,
    pub w1: Profile,
    pub w2: Profile,
}

impl BoundaryConditions {
    pub fn new(f1: Profile, f2: Profile, w1: Profile, w2: Profile) -> Self {
        Self { f1, f2, w1, w2 }
    }

    pub fn initial_only(f1: Profile, f2: Profile) -> Self {
        Self::new(f1, f2, Profile::zero(), Profile::zero())
    }

    pub fn bound(&self) -> f64 {
        [&self.f1, &self.f2, &self.w1, &self.w2]
            .iter()
            .fold(0.0_f64, |m, p| m.max(p.bound()))
    }
}
