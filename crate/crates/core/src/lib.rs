//! Bound states of the stationary cubic–quintic nonlinear Schrödinger equation with an attractive
//! point interaction,
//!
//! ```text
//! u'' - k u + eps delta(x) u + 2 u^3 - u^5 = 0,
//! ```
//!
//! on the whole line: exact profiles, the mass–`k` solution curve, a normalized gradient flow
//! solver and the spectral data behind orbital stability.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bifurcation;
pub mod cli;
pub mod closed_form;
pub mod error;
pub mod gradient_flow;
pub mod grid;
pub mod quadrature;
pub mod spectrum;
pub mod tridiag;
pub mod validate;

pub use closed_form::{Branch, ClosedFormProfile, CouplingStrength, SolitonSpec};
pub use error::{Error, Result};
pub use grid::{Grid, GridFunction};
