//! Grid wavefunctions, exact and numerical propagators, Weyl quantization.

pub mod fft;
pub mod grid;
pub mod harmonic;
pub mod numeric;
pub mod wavefunction;
pub mod weyl;

pub use fft::{czt, fourier_transform, fourier_transform_onto, inverse_fourier_transform};
pub use grid::{GridSpec, SpatialGrid};
pub use harmonic::{propagate_H0_exact, zero_point_phase};
pub use numeric::{propagate_H_numeric, propagate_H_numeric_observed, PropagationReport, PropagatorSpec};
pub use wavefunction::{coherent_state, WaveFunction, BOUNDARY_SHELL};
pub use weyl::{apply_weyl, CompactBump, GaussianSymbol, PhaseSymbol, Polynomial, CUTOFF_TOL};
