//! Periodic homogenization workbench for linear elasticity on perforated
//! domains in two dimensions.

pub mod cell;
pub mod cli;
pub mod coefficient;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod solve;
pub mod twoscale;
pub mod verify;

pub use error::{Error, Result};
