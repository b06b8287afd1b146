//! Learned finite-difference stencils for the periodic advection-diffusion
//! equation.
//!
//! The crate casts one step of an Adams-Bashforth method paired with a
//! periodic collocation stencil as a five-layer linear network, trains the
//! stencil weights against exact spectral solutions through a recurrent loss,
//! and checks the learned operator with classical linear stability tools.
//!
//! Module map:
//!
//! - [`exact_solution`]: spectral reference solutions, Fourier coefficients,
//!   synthetic training data.
//! - [`stencil`]: collocation weights and the circulant differentiation operator.
//! - [`multistep`]: Adams-Bashforth coefficients, stability regions, critical steps.
//! - [`network`]: the layered forward pass.
//! - [`training`]: recurrent loss, backpropagation and BFGS.
//! - [`experiments`]: parameter sweeps and evaluation on the bump problem.

pub mod error;
pub mod exact_solution;
pub mod experiments;
pub mod multistep;
pub mod network;
pub mod numfmt;
pub mod stencil;
pub mod training;

pub use error::{Error, Result};
pub use exact_solution::{FourierData, PdeProblem, TrainingSet};
pub use multistep::AbScheme;
pub use stencil::{DiffOperator, Grid, StencilWeights};
