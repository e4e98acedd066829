//! Transfer-function model of a coupled buy/sell order-flow system with
//! exponentially delayed feedback.
//!
//! Two independent solution paths are provided: a Laplace-domain Green
//! kernel ([`laplace`]) and a finite-difference integro-differential solver
//! ([`pde`]). A Monte Carlo workload simulator ([`queue`]) covers the scalar
//! queueing limit, and [`metrics`] computes functionals along cone slices.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!((a - b).abs() <= tol, "{} = {a} not within {tol} of {b}", stringify!($a));
    }};
}

pub mod cmat;
pub mod error;
pub mod field;
pub mod laplace;
pub mod metrics;
pub mod model;
pub mod pde;
pub mod queue;

pub use error::{Error, Result};
pub use field::{decouple, recombine, Interpretation, SpaceTimeField};
pub use laplace::{green_kernel, respond, Component, ContourPair, GreenKernel, KernelGrid, SignalWaveform};
pub use model::{BoundaryConditions, KernelSpec, ModelParams, Profile};
