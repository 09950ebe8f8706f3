//! Desk-scale numerical laboratory for exact controllability and
//! stabilization of the 1-d wave equation: HUM boundary/internal controls
//! with conjugate gradient on a filtered mode subspace, observability
//! constants measured against their explicit theoretical bounds, and
//! energy-decay experiments for nonlinear damping.

pub mod cli;
pub mod damping;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod hum;
pub mod observability;
pub mod report;
pub mod scenarios;
pub mod semilinear;
pub mod stabilization;

pub use error::{Error, Result};

// The handful of types almost every caller touches.
pub use damping::DampingLaw;
pub use dynamics::{SimulationInput, State, Trajectory};
pub use geometry::{Domain, ObserverPoint, Side};
pub use grid::{build_grid, CoefficientField, Grid1D};
pub use hum::{Control, HUMProblem, HumSolver};

/// Library version string.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
