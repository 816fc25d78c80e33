//! Unfitted finite element solver for unsteady Stokes flow coupled to a
//! massless elastic membrane that moves with the fluid.
//!
//! The fluid lives on a fixed structured grid over the unit square while the
//! membrane is a closed Lagrangian polygon cutting freely through elements.
//! Velocity uses continuous biquadratic elements and pressure discontinuous
//! linears, duplicated on cut elements for the two sides of the membrane.
//! Interface and outer-boundary conditions are imposed weakly, with
//! face-jump penalties near the cut keeping the system stable no matter how
//! small a cut fraction becomes. Time stepping is backward Euler with either
//! an explicit or a semi-implicit (unconditionally energy stable) membrane
//! force.

pub mod assembly;
pub mod classify;
pub mod config;
pub mod cutcell;
pub mod diagnostics;
pub mod error;
pub mod exact;
pub mod interface;
pub mod mesh;
pub mod quadrature;
pub mod report;
pub mod solver;
pub mod spaces;
pub mod stepper;

pub use error::{Error, Result};
