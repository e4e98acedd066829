//! Laplace-domain path: transfer matrix, residue inversion in time,
//! contour inversion in space, the Green kernel and its convolution.

pub mod contour;
pub mod green;
pub mod respond;
pub mod transfer;

pub use contour::{
    bromwich_estimate, bromwich_invert, bromwich_invert_complex, ConeSide, ContourScheme, ContourSpec,
    InversionEstimate,
};
pub use green::{green_kernel, green_value, Component, ContourPair, GreenKernel, KernelGrid};
pub use respond::{respond, SignalWaveform};
pub use transfer::{forward_matrix, tau_residue_inverse, transfer_matrix};
