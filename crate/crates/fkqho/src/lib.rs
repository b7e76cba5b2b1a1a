//! Solvable Feynman-Kac models of the quantum harmonic oscillator.
//!
//! Linear diffusions `dX = A X dt + B dW` killed at rate `V(x) = ½ x′ S x`:
//! Riccati fixed points and flows, the ground state and its h-process,
//! Gaussian propagation, Hermite spectra in the reversible case and
//! interacting particle samplers checked against the exact flows.

pub mod error;
pub mod flow;
pub mod gaussian;
pub mod ground_state;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod particles;
pub mod quadrature;
pub mod riccati;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use gaussian::GaussianState;
pub use linalg::{Mat, Vector};
pub use model::{ModelParams, ValidationReport};
