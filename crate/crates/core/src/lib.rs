//! Simulation of mid-air pointing with a torque-actuated arm under receding-horizon optimal control.

pub mod biomech;
pub mod control;
pub mod error;
pub mod harness;
pub mod identify;
pub mod io;
pub mod interaction;
pub mod optim;

pub use error::{Error, Result};
