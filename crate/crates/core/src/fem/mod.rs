//! P1 finite elements for the scattered potential.

pub mod assembly;
pub mod mesh;
pub mod simulate;
pub mod solver;

pub use assembly::{assemble_stiffness, Coefficient, CsrMatrix, StiffnessMatrix};
pub use mesh::{generate_mesh, load_mesh, parse_mesh, IndexBase, Mesh};
pub use simulate::{four_electrode, interior_source, simulate_bisweep, solve_scatter, BisweepSimulator, InteriorSourceVector};
pub use solver::{solve_projected_cg, SolveStats};
