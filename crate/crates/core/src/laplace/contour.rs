//! Numerical Bromwich inversion on two contour families.
//!
//! `TruncatedLine` is the vertical line `Re z = sigma` sampled with the
//! trapezoid rule at spacing `pi / |t|`, which turns the integral into an
//! alternating series; the tail is Euler-accelerated (binomial averaging of
//! the last partial sums). `Deformed` closes the line into a circle: on the
//! post-cone side around the singularities (left), on the pre-cone side away
//! from them (right). The trapezoid rule on a circle converges geometrically
//! for integrands analytic in an annulus around it.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discretisation parameter of the line scheme: aliasing error ~ exp(-A).
const EULER_A: f64 = 25.0;
/// Number of partial sums averaged by the Euler step.
const EULER_M: usize = 11;
/// Relative change tolerated between `n` and `2n` nodes.
pub const CONVERGENCE_REL_TOL: f64 = 1e-4;
/// Absolute floor under which changes are ignored.
pub const CONVERGENCE_ABS_FLOOR: f64 = 1e-12;
pub const MIN_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContourScheme {
    TruncatedLine,
    Deformed,
}

/// Which side of the signal front the contour serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeSide {
    /// Ahead of the front: the contour is closed to the right.
    PreCone,
    /// Behind the front: the contour is closed to the left.
    PostCone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    /// Real part where the contour crosses the real axis; must lie right of
    /// every singularity. For the line scheme this is a lower bound on the
    /// line abscissa.
    pub abscissa: f64,
    /// Imaginary half-extent of the deformed contour (its radius). The line
    /// scheme derives its truncation from `n_nodes` and `t` instead.
    pub half_width: f64,
    pub n_nodes: usize,
    pub scheme: ContourScheme,
    pub side: ConeSide,
}

impl ContourSpec {
    pub fn truncated_line(abscissa: f64, n_nodes: usize, side: ConeSide) -> Self {
        Self {
            abscissa,
            half_width: 0.0,
            n_nodes,
            scheme: ContourScheme::TruncatedLine,
            side,
        }
    }

    pub fn deformed(abscissa: f64, radius: f64, n_nodes: usize, side: ConeSide) -> Self {
        Self {
            abscissa,
            half_width: radius,
            n_nodes,
            scheme: ContourScheme::Deformed,
            side,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.abscissa.is_finite() {
            return Err(Error::InvalidContour("abscissa must be finite".into()));
        }
        if self.n_nodes < MIN_NODES {
            return Err(Error::InvalidContour(format!(
                "n_nodes = {} is below the minimum of {MIN_NODES}",
                self.n_nodes
            )));
        }
        if self.scheme == ContourScheme::Deformed && !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(Error::InvalidContour(format!(
                "deformed contour needs a positive radius, got {}",
                self.half_width
            )));
        }
        Ok(())
    }

    /// Checks that the contour passes strictly right of `rightmost_singularity`.
    pub fn validate_against(&self, rightmost_singularity: f64) -> Result<()> {
        self.validate()?;
        if !(self.abscissa > rightmost_singularity) {
            return Err(Error::InvalidContour(format!(
                "abscissa {} is not right of the singularity at {}",
                self.abscissa, rightmost_singularity
            )));
        }
        Ok(())
    }

    /// Centre of the deformed circle.
    pub fn circle_center(&self) -> f64 {
        match self.side {
            ConeSide::PostCone => self.abscissa - self.half_width,
            ConeSide::PreCone => self.abscissa + self.half_width,
        }
    }

    fn with_nodes(&self, n_nodes: usize) -> Self {
        Self { n_nodes, ..*self }
    }
}

/// Result of an inversion together with its node-doubling check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionEstimate {
    pub value: Complex64,
    /// `|f(2n) - f(n)|`.
    pub change: f64,
    pub converged: bool,
}

fn line_sum<F>(f: &F, t: f64, contour: &ContourSpec, real_original: bool) -> Result<Complex64>
where
    F: Fn(Complex64) -> Complex64,
{
    if t == 0.0 {
        return Err(Error::InvalidContour(
            "the line scheme cannot evaluate the original at t = 0".into(),
        ));
    }
    let abs_t = t.abs();
    let sigma = (EULER_A / (2.0 * abs_t)).max(contour.abscissa);
    let step = PI / abs_t;
    let term = |k: usize| -> Complex64 {
        let z = Complex64::new(sigma, step * k as f64);
        if k == 0 {
            f(z)
        } else if real_original {
            Complex64::new(2.0 * f(z).re, 0.0)
        } else {
            f(z) + f(z.conj())
        }
    };

    let n = contour.n_nodes;
    let mut partial = term(0);
    let mut sign = 1.0;
    for k in 1..=n {
        sign = -sign;
        partial += sign * term(k);
    }
    // Euler (binomial) averaging of partial sums n..=n+M.
    let mut sums = Vec::with_capacity(EULER_M + 1);
    sums.push(partial);
    for k in n + 1..=n + EULER_M {
        sign = -sign;
        partial += sign * term(k);
        sums.push(partial);
    }
    let mut binom = 1.0_f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, s) in sums.iter().enumerate() {
        if j > 0 {
            binom *= (EULER_M - j + 1) as f64 / j as f64;
        }
        acc += binom * s;
    }
    acc /= 2f64.powi(EULER_M as i32);

    Ok(acc * ((sigma * t).exp() / (2.0 * abs_t)))
}

fn circle_sum<F>(f: &F, t: f64, contour: &ContourSpec) -> Complex64
where
    F: Fn(Complex64) -> Complex64,
{
    let center = contour.circle_center();
    let radius = contour.half_width;
    let n = contour.n_nodes;
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let theta = 2.0 * PI * (j as f64 + 0.5) / n as f64;
        let offset = Complex64::from_polar(radius, theta);
        let z = center + offset;
        acc += (z * t).exp() * f(z) * offset;
    }
    let orientation = match contour.side {
        ConeSide::PostCone => 1.0,
        ConeSide::PreCone => -1.0,
    };
    acc * (orientation / n as f64)
}

fn single<F>(f: &F, t: f64, contour: &ContourSpec, real_original: bool) -> Result<Complex64>
where
    F: Fn(Complex64) -> Complex64,
{
    match contour.scheme {
        ContourScheme::TruncatedLine => line_sum(f, t, contour, real_original),
        ContourScheme::Deformed => {
            let v = circle_sum(f, t, contour);
            Ok(if real_original { Complex64::new(v.re, 0.0) } else { v })
        }
    }
}

/// Inverts `f` at `t` with `n_nodes` and `2 n_nodes`, reporting the change.
pub fn bromwich_estimate<F>(f: F, t: f64, contour: &ContourSpec, real_original: bool) -> Result<InversionEstimate>
where
    F: Fn(Complex64) -> Complex64,
{
    contour.validate()?;
    if !t.is_finite() {
        return Err(Error::InvalidParameter(format!("inversion point must be finite, got {t}")));
    }
    let coarse = single(&f, t, contour, real_original)?;
    let fine = single(&f, t, &contour.with_nodes(2 * contour.n_nodes), real_original)?;
    let change = (fine - coarse).norm();
    let converged = change <= CONVERGENCE_REL_TOL * fine.norm() + CONVERGENCE_ABS_FLOOR;
    Ok(InversionEstimate {
        value: fine,
        change,
        converged,
    })
}

/// `(1 / 2 pi i) * integral of exp(z t) f(z) dz` for a complex-valued original.
pub fn bromwich_invert_complex<F>(f: F, t: f64, contour: &ContourSpec) -> Result<Complex64>
where
    F: Fn(Complex64) -> Complex64,
{
    let est = bromwich_estimate(f, t, contour, false)?;
    if !est.converged {
        return Err(Error::NonConvergence { t, change: est.change });
    }
    Ok(est.value)
}

/// Real original of the transform `f`, which must satisfy `f(conj z) = conj f(z)`.
pub fn bromwich_invert<F>(f: F, t: f64, contour: &ContourSpec) -> Result<f64>
where
    F: Fn(Complex64) -> Complex64,
{
    let est = bromwich_estimate(f, t, contour, true)?;
    if !est.converged {
        return Err(Error::NonConvergence { t, change: est.change });
    }
    Ok(est.value.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> ContourSpec {
        ContourSpec::truncated_line(0.0, 64, ConeSide::PostCone)
    }

    fn circle() -> ContourSpec {
        ContourSpec::deformed(1.0, 3.0, 64, ConeSide::PostCone)
    }

    #[test]
    fn closed_form_pairs_on_both_schemes() {
        let lam = 1.5;
        for contour in [line(), circle()] {
            let v = bromwich_invert(|s| 1.0 / (s + 1.5), 1.0, &contour).unwrap();
            assert!((v - (-1.5f64).exp()).abs() < 1e-6, "{v}");
            for t in [0.3, 1.0, 2.0] {
                let v = bromwich_invert(|s| 1.0 / s, t, &contour).unwrap();
                assert!((v - 1.0).abs() < 1e-6, "{contour:?} t={t} {v}");
            }
            let v = bromwich_invert(|s| 1.0 / ((s + lam) * (s + lam)), 2.0, &contour).unwrap();
            assert!((v - 2.0 * (-3.0f64).exp()).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn negative_time_is_causal() {
        for contour in [
            ContourSpec::truncated_line(0.0, 64, ConeSide::PreCone),
            ContourSpec::deformed(1.0, 3.0, 64, ConeSide::PreCone),
        ] {
            let v = bromwich_invert(|s| 1.0 / (s + 1.5), -0.7, &contour).unwrap();
            assert!(v.abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn complex_original() {
        // 1/(z - p) inverts to exp(p t) for complex p.
        let p = Complex64::new(-0.4, 0.9);
        let want = (p * 1.3).exp();
        let contour = ContourSpec::deformed(1.0, 2.5, 64, ConeSide::PostCone);
        let got = bromwich_invert_complex(|z| 1.0 / (z - p), 1.3, &contour).unwrap();
        assert!((got - want).norm() < 1e-12);
        let got = bromwich_invert_complex(|z| 1.0 / (z - p), 1.3, &line()).unwrap();
        assert!((got - want).norm() < 1e-8, "{got} vs {want}");
    }

    #[test]
    fn rejects_small_node_counts_and_bad_radius() {
        let mut c = line();
        c.n_nodes = 10;
        assert!(matches!(bromwich_invert(|s| 1.0 / s, 1.0, &c), Err(Error::InvalidContour(_))));
        let c = ContourSpec::deformed(1.0, 0.0, 64, ConeSide::PostCone);
        assert!(c.validate().is_err());
        assert!(circle().validate_against(-1.5).is_ok());
        assert!(circle().validate_against(1.0).is_err());
    }

    #[test]
    fn reports_non_convergence() {
        // The circle passes within 2e-3 of the pole at -5, so the trapezoid
        // rule does not settle between 64 and 128 nodes.
        let c = ContourSpec::deformed(1.0, 3.0 + 1e-3, 64, ConeSide::PostCone);
        let r = bromwich_invert(|s| 1.0 / (s + 5.0), 1.0, &c);
        assert!(matches!(r, Err(Error::NonConvergence { .. })), "{r:?}");
    }

    #[test]
    fn deformed_error_decays_geometrically() {
        let want = 2.0 * (-3.0f64).exp();
        let f = |s: Complex64| 1.0 / ((s + 1.5) * (s + 1.5));
        let errs: Vec<f64> = [8usize, 16, 32]
            .iter()
            .map(|&n| {
                let c = ContourSpec::deformed(1.0, 3.0, n, ConeSide::PostCone);
                (single(&f, 2.0, &c, true).unwrap().re - want).abs()
            })
            .collect();
        assert!(errs[0] / errs[1] > 8.0 && errs[1] / errs[2] > 8.0, "{errs:?}");
    }
}
