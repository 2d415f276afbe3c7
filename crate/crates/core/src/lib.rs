//! Simulation of non-Markovian quantum input-output networks.
//!
//! Nodes `(H_l, L_l, κ_l)` are composed in cascade; the resulting
//! time-nonlocal master equation is integrated with a second-order
//! predictor-corrector scheme, and linear nodes are analyzed exactly in the
//! Laplace domain.

pub mod control;
pub mod error;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod linear;
pub mod models;
pub mod network;
pub mod operators;
pub mod quad;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Operator = operators::Operator<f64>;
pub type StateMatrix = operators::StateMatrix<f64>;
pub type OperatorF32 = operators::Operator<f32>;
pub type StateMatrixF32 = operators::StateMatrix<f32>;
pub use operators::HilbertSpace;
