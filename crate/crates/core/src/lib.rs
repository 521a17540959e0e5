//! Disintegrations of densities on `R^d` along observation maps `h: R^d -> R^n`.
//!
//! The disintegration density on the fiber `h^{-1}(y)` is proportional to
//! `dmu/dlambda(x) / sqrt(det(Jh(x) Jh(x)^T))` with respect to the fiber's
//! arc length (or surface) measure. This crate traces fibers, evaluates and
//! normalizes restricted and disintegration densities, finds their modes,
//! evaluates Onsager-Machlup functionals and runs numerical checks of the
//! disintegration identities.

pub mod catalog;
pub mod density;
pub mod error;
pub mod fiber;
pub mod geometry;
pub mod io;
pub mod modes;
pub mod om;
pub mod validate;

pub use density::{AmbientDensity, FiberDensityProfile, ProfileVariant};
pub use error::{Error, Result};
pub use fiber::{FiberTrace, TraceOptions};
pub use geometry::{JacobianDecomposition, ObservationOperator};
pub use modes::{ModeProblem, ModeResult, ModeVariant, SolverOptions};
pub use om::{OmBase, OmFunctional, OmNorm};
pub use validate::{Region, ValidationReport, Verdict};
