//! Surfaces in R⁴, R³,¹ and R²,² from generalized Weierstrass representations,
//! their induced geometry, and their deformations under DSII hierarchy flows.

pub mod diagnostics;
pub mod dirac;
pub mod dsflow;
pub mod error;
pub mod field2d;
pub mod immersion;
pub mod twist;

pub use error::{DiagnosticsError, DiracError, FieldError, FlowError, ImmersionError};
pub use field2d::{Field2D, GridSpec, C64};
pub use twist::{Twist, TwistedField};
