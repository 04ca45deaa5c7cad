// Guards like `!(x >= 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod cli;
pub mod config;
pub mod data_driven;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod solver;
pub mod system;

pub use config::ExperimentConfig;
pub use error::{Result, SdbliError};
pub use experiment::Experiment;
pub use forward::{NewtonConfig, StateSolution};
pub use grid::{GridFunction, GridSpec};
