//! Relativistic Fokker-Planck solvers in natural units (`c = k_B T = 1`).

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod fp_solver;
pub mod invariance_lab;
pub mod kinematics;
pub mod mean_field;
pub mod phase_grid;
pub mod special;

pub use error::Error;
