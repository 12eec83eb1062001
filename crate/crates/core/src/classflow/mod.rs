//! Classical Hamiltonian flows: exact harmonic and free flows, an adaptive
//! numerical integrator, and checks of the momentum-scaling structure.

mod checks;
pub mod dop853;
mod flow;
mod tableau;

pub use checks::{
    check_scaling_identity, escape_bound_scan, symplectic_check, EscapeRow, EscapeScan,
    EscapeViolation, ScalingResidual,
};
pub(crate) use checks::least_squares_slope;
pub use flow::{
    flow_exact_free, flow_exact_harmonic, flow_numeric, FlowSpec, Hamiltonian, Trajectory,
    MAX_TOL, MIN_TOL,
};
pub(crate) use flow::{flow_endpoint, harmonic_unchecked, HamiltonSystem};
