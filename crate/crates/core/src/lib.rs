//! Coupled-channel scattering on the physical energy sheet.
//!
//! The library solves radial momentum-space Lippmann-Schwinger equations for
//! a family of binary-channel model potentials, assembles full and truncated
//! on-shell scattering matrices, and evaluates T-matrix, S-matrix, and
//! resolvent values on any unphysical energy sheet through representations
//! that only ever reference physical-sheet quantities. Zeros of the truncated
//! scattering determinant located on the physical sheet correspond to
//! resonances, virtual states, and bound states of the coupled system.
//!
//! Energy units are fixed so that kinetic energy equals momentum squared.

pub mod continuation;
pub mod error;
pub mod lsolve;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod resonances;
pub mod smatrix;
pub mod verify;

pub use error::{Error, Result};
pub use model::{
    enumerate_sheets, parse_config, parse_model, physical_momentum, ChannelSpec, GridParams,
    ModelSpec, ParsedConfig, PotentialKernel, SheetIndex, SolverParams,
};
pub use quadrature::{build_grid, kernel_value, MomentumGrid};

pub use num_complex::Complex64;
