//! Derivative-free adaptive cubic-regularization solver for smooth
//! optimization on matrix manifolds.
//!
//! The solver minimizes a black-box objective over a Riemannian manifold by
//! repeatedly minimizing a cubic-regularized quadratic model of the pullback
//! in an orthonormal tangent basis. Gradients and Hessians are either
//! supplied analytically or approximated by finite differences whose step
//! size is tied to the previous accepted step, so the whole loop runs on
//! objective values alone.

pub mod error;
pub mod fdapprox;
pub mod manifolds;
pub mod model;
pub mod numkernel;
pub mod problems;
pub mod sampling;
pub mod solver;
pub mod subsolver;

pub use error::{Error, Result};
pub use manifolds::{Manifold, Point, TangentBasis, TangentVector};
