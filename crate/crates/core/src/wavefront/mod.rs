//! Finite-h wavefront detection by wave-packet transforms and decay fits.
pub mod decay;
pub mod detect;
pub mod fbi;
pub mod rotated;

pub use decay::{decay_exponent, fit_decay, DecayFit, MAGNITUDE_FLOOR};
pub use detect::{wf_detect, Classification, Peak, WfParams, WfReport};
pub use fbi::{fbi_point, fbi_transform, refine_peak, AxisRange, FbiNormalization, PhaseGrid};
pub use rotated::{rotated_symbol_test, RotatedReport};
