//! Fictitious domain method for the Poisson problem on a polygonal domain,
//! with the Dirichlet condition imposed through a piecewise-constant Lagrange
//! multiplier stabilized by a macro-edge fluctuation penalty.
//!
//! The physical domain ω is embedded in a square box Ω carrying a structured
//! P1 mesh. The boundary γ = ∂ω is cut by the mesh into fine edges which carry
//! the multiplier; consecutive fine edges are grouped into macro edges on
//! which the multiplier's fluctuation is penalized.

pub mod analysis;
pub mod assembly;
pub mod cli;
pub mod geometry;
pub mod output;
pub mod problem;
pub mod quadrature;
pub mod solver;
pub mod spaces;
pub mod sparse;

pub use analysis::{
    run_convergence_study, solve_level, ConvergenceReport, ConvergenceRow, Discretization, Solution,
};
pub use geometry::{BoundingBox, Point2, PolygonBoundary, StructuredMesh};
pub use problem::{HRefMode, ProblemSpec};
pub use spaces::MultiplierSpace;
