//! Explicit multiparametric solutions of constrained linear-quadratic optimal
//! control problems.
//!
//! The continuous-time core works on [`LtiOcProblem`] and is generic over the
//! scalar type; exploration, discrete-time partitions and export run in `f64`.

pub mod arc;
pub mod dt;
pub mod error;
pub mod explore;
pub mod linalg;
pub mod lp;
pub mod problem;
pub mod problem_file;
pub mod scalar;
pub mod shooting;
pub mod structure;

pub use arc::{assemble_arc_system, evaluate_arc, ArcDynamics, PointState};
pub use error::{Error, EscapeSide, Result};
pub use explore::{
    explore_regions, fit_switching_times, refine_boundary_1d, CriticalRegionCT, Exploration,
    ExploreOptions, FittedPolynomial,
};
pub use problem::{integrator_example, two_state_example, ActiveSet, LtiOcProblem};
pub use problem_file::{load_problem, parse_problem, write_problem};
pub use scalar::Real;
pub use shooting::{
    shoot_residuals, solve_fixed_structure, solve_fixed_structure_with, validate_solution,
    ArcStructure, Event, Guess, JunctionForm, ShootingOptions, SolvedTrajectory, ValidationReport,
};
pub use structure::{
    boundary_values, detect_structure, detect_structure_with, BoundaryValues, SearchOptions,
};

pub type Problem = LtiOcProblem<f64>;
pub type Arc = ArcDynamics<f64>;
pub type Point = PointState<f64>;
pub type Trajectory = SolvedTrajectory<f64>;
