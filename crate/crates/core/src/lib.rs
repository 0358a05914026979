//! Simulation and data-driven identification of droop-controlled power systems.
//!
//! The crate is organized as a pipeline:
//!
//! * [`grid`] builds the network and evaluates nodal power injections.
//! * [`dynamics`] assembles the grid-forming inverter and synchronous generator
//!   state models into a ground-truth right-hand side.
//! * [`sim`] integrates that model with fixed-step RK4 under random setpoint
//!   steps and corrupts the outputs with measurement noise.
//! * [`data`] cuts trajectories into history/horizon windows.
//! * [`nn`] is a small double-precision reverse-mode differentiation core with
//!   MLPs, causal dilated convolutions and Adam.
//! * [`anode`] composes the TCN-augmented neural ODE (and the single-instant MLP
//!   baseline), rolls it out and trains it by backpropagating through the solver.
//! * [`hpo`] runs random search with percentile pruning.
//! * [`report`] computes bracketed RMSE and box statistics.
//! * [`config`] and [`cli`] tie the stages together.

pub mod anode;
pub mod cases;
pub mod cli;
pub mod config;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod hpo;
pub mod nn;
pub mod report;
pub mod sim;

pub use error::{Error, Result};
