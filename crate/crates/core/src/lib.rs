//! Sampling, geometry and verification tools for marked Gibbs point
//! processes with unbounded interactions.

pub mod configuration;
pub mod energy;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod io;
pub mod marks;
pub mod numerics;
pub mod sampler;
pub mod tempered;

pub use configuration::{Configuration, Mark, MarkedPoint, ModelParams, Window};
pub use energy::{Energy, EnergyModel};
pub use error::{Error, Result};
