//! Numerical toolkit for the one-phase free boundary problem
//! `div(|Du|^(p(x)-2) Du) = f` in `{u > 0}`, `|Du| = g` on the free boundary.
//!
//! * [`px`]: lattices, the variable exponent, the operator in both forms and
//!   variable-exponent norms.
//! * [`barriers`]: explicit radial comparison functions and their
//!   certification.
//! * [`solver`]: Dirichlet, shifted, energy and linearized Neumann solvers.
//! * [`viscosity`]: discrete touching tests.
//! * [`flatness`]: slab flatness, Harnack ratios, dichotomy probe, Hölder
//!   fits and the rescaling iteration.

pub mod barriers;
pub mod error;
pub mod flatness;
pub mod px;
pub mod solver;
pub mod viscosity;

pub use error::{Error, Result};
pub use px::{ExponentField, Grid, GridFunction, ScalarField, SmoothField};
