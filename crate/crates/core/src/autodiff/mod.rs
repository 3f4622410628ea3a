//! Dense tensors, a reverse-mode tape, Adam and a finite-difference
//! gradient checker.

mod adam;
mod csr;
mod error;
mod gradcheck;
mod matrix;
mod params;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use csr::Csr;
pub use error::TensorError;
pub use gradcheck::{grad_check, grad_check_with, GradCheckReport, Stencil};
pub use matrix::Matrix;
pub use params::{ParamStore, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use tape::{Axis, BoundParams, Gradients, Tape, Var};
