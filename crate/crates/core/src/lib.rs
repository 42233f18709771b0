//! Numerical laboratory for martingale transform constants and even Fourier
//! multiplier norms.
//!
//! The crate is organized around three estimation routes that can be played
//! against each other:
//!
//! * [`martingale`] — dyadic martingale trees and transform-coefficient
//!   optimization, producing achieved-ratio lower bounds for the transform
//!   constant of a coefficient set.
//! * [`bellman`] — grid value iteration for the scalar Burkholder (Bellman)
//!   function of a two-point real coefficient set, producing approximate
//!   admissibility thresholds by bisection.
//! * [`torus`] — lattice-sampled Fourier multipliers applied through the DFT,
//!   with a safeguarded nonlinear power method for `L^p` operator-norm lower
//!   bounds.
//!
//! [`spaces`] provides the finite-dimensional `l^q` machinery shared by the
//! optimizers, [`sets`] the planar convex geometry of coefficient sets, and
//! [`symbols`] the bank of multiplier symbol families.

pub mod bellman;
pub mod martingale;
pub mod sets;
pub mod spaces;
pub mod symbols;
pub mod torus;

pub use spaces::Scalar;
