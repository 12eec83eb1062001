//! Asymptotic scattering data of the kinetic flow, interaction-picture
//! evolutions, recurrence maps and resonance analysis.

mod maps;
mod nontrapping;
mod pushforward;
mod resonance;

pub use maps::{
    high_energy_limit, inverse_scattering_map, inverse_scattering_map_with, recurrence_map,
    recurrence_map_with, scattering_evolution, scattering_evolution_inverse, scattering_jacobian,
    scattering_map, scattering_map_with, Direction, HighEnergyRow, HighEnergyTable,
    InverseOptions, ScatteringData, ScatteringOptions,
};
pub use nontrapping::{
    circular_orbit_radius, classify_nontrapping, ring_orbit_point, DirectionReport,
    NontrappingReport, TrapStatus,
};
pub use pushforward::{principal_symbol_pushforward, Pushforward};
pub use resonance::{resonance_structure, tilde_gamma, ResonanceStructure, RESONANCE_TOL};
