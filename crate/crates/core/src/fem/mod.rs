//! P1 finite elements on boundary-fitted triangulations.

pub mod assembly;
pub mod expansion;
pub mod io;
pub mod krylov;
pub mod mesh;
pub mod neumann;
pub mod norms;
pub mod solve;
pub mod sparse;

pub use assembly::{assemble_robin, Coefficient, DofMap, RobinProblem, RobinSystem};
pub use expansion::{first_order_expansion, ExpansionOptions};
pub use krylov::KrylovOptions;
pub use mesh::{mesh_domain, BoundaryEdge, TriMesh};
pub use neumann::{duality_check, solve_neumann_aux, DualityCheck, NeumannAux, TestFunction};
pub use norms::{boundary_integral, l2_error, norm, Norm};
pub use solve::{solve, solve_with, FieldOnMesh, SolveOptions, SolveReport};
