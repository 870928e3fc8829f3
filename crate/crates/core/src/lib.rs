//! Functional calculus for quaternionic matrices based on the S-spectrum.
//!
//! The crate is organised bottom-up:
//!
//! * [`quat`]: quaternion arithmetic, imaginary units and spheres.
//! * [`qlinalg`]: quaternionic matrices, the complex adjoint, S-spectra and
//!   S-resolvents.
//! * [`slicefn`]: slice functions on axially symmetric sets.
//! * [`contour`]: slice Cauchy domains and their boundary quadrature.
//! * [`calculus`]: the left, right and intrinsic S-functional calculi,
//!   spectral projections and verification checks.

pub mod calculus;
pub mod contour;
pub mod error;
mod par;
pub mod qlinalg;
pub mod quat;
pub mod slicefn;

pub use error::{Error, Result};
pub use par::Execution;
pub use qlinalg::{DiagonalOperator, QMatrix, QVector, SSpectrum};
pub use quat::{ImaginaryUnit, Quaternion, Sphere};
