//! Space-time discretization of divergence-form parabolic equations.

mod assembly;
mod basis;
mod mesh;
mod solve;
mod sparse;

pub use assembly::{Discretization, SlabCoefficients, SlabOperators};
pub use basis::SolutionSpaceBasis;
pub use mesh::{build_mesh, mesh_for_cube, Element, Mesh, MeshPolicy};
pub use solve::{
    energy_and_averages, mass_norm_sq, solve_adjoint, solve_adjoint_with, solve_cauchy_dirichlet,
    solve_cauchy_dirichlet_with, solve_neumann, solve_neumann_with, solve_periodic_with, Boundary,
    DiscreteSolution, ProblemData, Stepper,
};
pub use sparse::{BandLu, Csr};
