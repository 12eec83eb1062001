//! Classical scattering geometry and quantum propagation for perturbed
//! harmonic oscillators, with finite-h wavefront detection.

pub mod classflow;
pub mod error;
pub mod fields;
pub mod phase;
pub mod quantum;
pub mod scattering;
pub mod wavefront;

pub use error::{Error, Result};
pub use fields::CoefficientField;
pub use phase::PhasePoint;
