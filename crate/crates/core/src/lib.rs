//! Neural-network solvers for variational problems with essential (Dirichlet)
//! boundary conditions.
//!
//! The toolkit trains a scalar residual network to minimize Monte Carlo
//! estimates of a variational energy, with the boundary condition enforced
//! either through an augmented Lagrangian (a second network approximates the
//! multiplier on the boundary), a plain quadratic penalty, or simultaneous
//! gradient descent ascent on the saddle-point form. Three problem families
//! are built in: second-order elliptic equations, the smallest eigenpair of a
//! linear self-adjoint operator, and the Gross-Pitaevskii ground state.
//!
//! Independent finite-difference reference solvers ([`oracle`]) and lattice
//! error metrics ([`metrics`]) make the training results checkable without a
//! second machine-learning framework in the loop.
//!
//! Entry points:
//! - [`training::run`] drives a full experiment from a [`TrainConfig`].
//! - [`problems::builtin`] constructs the benchmark instances.
//! - [`diffengine`] differentiates the losses (values, input gradients, and
//!   parameter gradients of losses that contain input gradients).

// indexed loops over coupled arrays are the clearer idiom in the stencil
// and kernel code
#![allow(clippy::needless_range_loop)]

pub mod checkpoint;
pub mod config;
pub mod diffengine;
pub mod error;
pub mod field;
pub mod metrics;
pub mod network;
pub mod optimizer;
pub mod oracle;
pub mod problems;
pub mod sampling;
pub mod training;

pub use config::{Method, TrainConfig};
pub use error::{Error, Result};
pub use field::ScalarField;
pub use metrics::ErrorReport;
pub use network::{ParamVector, ResNetConfig};
pub use problems::{Family, ProblemSpec};
pub use sampling::{Batch, Grid};
pub use training::TrainResult;
