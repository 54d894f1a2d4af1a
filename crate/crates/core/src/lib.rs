//! One-dimensional Lagrangian solver for a viscous, heat-conducting, reacting
//! gas with Arrhenius kinetics, plus diagnostics that audit the discrete
//! trajectories against the energy, entropy and large-time properties of the
//! continuous system.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod model;
pub mod oracle;
pub mod solver;
pub mod trajectory;
pub mod tridiag;
