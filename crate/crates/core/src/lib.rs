//! Coupled Stokes-Darcy flow on triangular meshes with an
//! embedded-hybridized discontinuous Galerkin discretization.
//!
//! The pipeline is [`mesh`] → [`spaces`] → [`assembly`] → [`solve`], with
//! [`verify`] providing the manufactured solution and error norms and
//! [`cases`] the problem registry.
//!
//! ```
//! use stokes_darcy::{generate_mesh, verify};
//!
//! let mesh = generate_mesh(2).unwrap();
//! let report = verify::solve_manufactured(&mesh, 1, 1.0, 1.0, 10.0, 0.5).unwrap();
//! assert!(report.stokes.divergence < 1e-10);
//! ```

pub mod assembly;
pub mod cases;
pub mod error;
pub mod geometry;
pub mod mesh;
pub mod refelem;
pub mod solve;
pub mod spaces;
pub mod verify;
pub mod vtk;

pub use assembly::{assemble, CsrMatrix, LinearSystem, ProblemConfig};
pub use cases::{run_demo, CaseDefinition, CaseId, DemoResult, FluxReport};
pub use error::{Error, Result};
pub use mesh::{generate_mesh, generate_mesh_with, read_mesh, write_mesh, FacetClass, Mesh, MeshOptions, Point, Region};
pub use refelem::{basis, quad, BasisSet, EntityKind, QuadRule};
pub use solve::{solve, SolutionFields};
pub use spaces::{build_layout, DofLayout, Space};
pub use verify::{compute_errors, convergence_sweep, ConvergenceTable, ErrorReport, ExactSolution, SweepConfig};
