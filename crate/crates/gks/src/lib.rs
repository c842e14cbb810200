//! Model files, benchmark experiments and the command-line front end for
//! `gks-core`.

pub mod config;
pub mod cv;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod model_io;
pub mod models;
pub mod solvers;
pub mod table;

pub use error::BenchError;
