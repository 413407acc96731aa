//! Classical mechanics near a generic extremum: fixed points, closed orbits,
//! actions, frequencies and angle averages.

mod fixed_point;
mod hamiltonian;
pub mod integrator;
mod orbit;

pub(crate) use fixed_point::sym_eigen2 as fixed_point_eigen;
pub use fixed_point::{find_fixed_point, Classification, FixedPointReport};
pub use hamiltonian::{apply_linear_symplectic_symbol, SmoothHamiltonian, SymbolKind};
pub use orbit::{
    action_and_frequency, energy_of_action, orbit_average, trace_orbit, ContourNode, FlowDiagnostics, Frame, Orbit,
    OrbitEngine, OrbitOptions, OrbitSample,
};

#[cfg(test)]
mod tests;
