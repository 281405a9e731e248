pub mod asymptotics;
pub mod autodiff;
pub mod error;
pub mod experiment;
pub mod grf;
pub mod grids;
pub mod metrics;
pub mod neuralop;
pub mod solvers;
pub mod training;

pub use error::{Error, Result};
