//! P1 finite elements: meshes, assembly, constraints and sparse solves.

pub mod assembly;
pub mod field;
pub mod io;
pub mod mesh;
pub mod quadrature;
pub mod sparse;
pub mod system;

pub use field::{FieldOnMesh, Locator};
pub use mesh::{BoundaryEdge, BoundaryTag, MacroMesh, Region, TriMesh};
pub use system::{solve_system, Constraints, ReducedOperator, SolveMethod, SparseSystem};
