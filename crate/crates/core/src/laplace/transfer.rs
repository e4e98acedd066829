use num_complex::Complex64;

use crate::cmat::CMat2;
use crate::error::{Error, Result};
use crate::model::{clearing_root, kernel_beta, Branch, ComplexPoint, KernelKind, KernelSpec, ModelParams};

/// Relative size of `|P|` below which the transfer matrix is treated as singular.
pub const SINGULAR_TOL: f64 = 1e-10;

/// The forward operator of the doubly transformed system.
pub fn forward_matrix(
    s: ComplexPoint,
    tau: ComplexPoint,
    params: &ModelParams,
    spec: &KernelSpec,
) -> Result<CMat2> {
    let a = params.a();
    let b1 = kernel_beta(s, KernelKind::Same, spec)?;
    let b2 = kernel_beta(s, KernelKind::Cross, spec)?;
    let diag = tau - params.v() * s + a - a * b1;
    let off = -a * b2;
    Ok(CMat2::new(diag, off, off, diag))
}

/// Inverse of [`forward_matrix`] as adjugate over determinant.
pub fn transfer_matrix(
    s: ComplexPoint,
    tau: ComplexPoint,
    params: &ModelParams,
    spec: &KernelSpec,
) -> Result<CMat2> {
    let m = forward_matrix(s, tau, params, spec)?;
    let det = m.det();
    let scale = m.max_norm().max(1.0);
    if det.norm() <= SINGULAR_TOL * scale * scale {
        return Err(Error::Singular { residual: det.norm() });
    }
    Ok(m.adjugate().scale(1.0 / det))
}

/// Inverse Laplace transform in `tau` of [`transfer_matrix`], taken by residues.
///
/// The determinant is linear in `tau` in each symmetric mode, so the
/// original is `exp(t * tau_pm(s))` on the modes `(1, 1)` and `(1, -1)`.
pub fn tau_residue_inverse(s: ComplexPoint, t: f64, params: &ModelParams, spec: &KernelSpec) -> Result<CMat2> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidParameter(format!("time must be >= 0, got {t}")));
    }
    let plus = clearing_root(s, Branch::Plus, params, spec)?;
    let minus = clearing_root(s, Branch::Minus, params, spec)?;
    Ok(CMat2::from_symmetric_modes((plus * t).exp(), (minus * t).exp()))
}

/// `exp(z) - 1` without cancellation for small `|z|`.
pub(crate) fn cexpm1(z: Complex64) -> Complex64 {
    if z.norm() < 1e-5 {
        // Three Taylor terms are exact to double precision here.
        z * (1.0 + z * (0.5 + z / 6.0))
    } else {
        let half_sin = (z.im * 0.5).sin();
        let re = z.re.exp_m1() * z.im.cos() - 2.0 * half_sin * half_sin;
        Complex64::new(re, z.re.exp() * z.im.sin())
    }
}
