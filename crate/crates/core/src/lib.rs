//! Numerical laboratory for the fractional Lane-Emden-Fowler problem
//! (−Δ)^s u = u^{p−ε} on model domains, for both the spectral and the
//! restricted fractional Laplacian.
//!
//! The crate provides the operator machinery (eigenbasis transforms,
//! singular-integral collocation), Green-function/Robin-function evaluation,
//! the Aubin-Talenti bubble family and its projections, the s-harmonic
//! extension, a Newton continuation solver, and a blow-up verification
//! harness that fits multi-bubble decompositions and checks the predicted
//! concentration rate λ ~ ε^{1/(N−2s)}.

pub mod blowup_lab;
pub mod bubbles;
pub mod error;
pub mod extension;
pub mod frac_op;
pub mod greens;
pub mod math;
pub mod nonlinear_solver;
pub mod params;
pub mod spectral_basis;
pub mod suite;

pub use error::{Error, Result};
