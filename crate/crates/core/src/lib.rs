//! Detection of devices that stream captured audio to the network.

pub mod burst;
pub mod capture;
pub mod fuzz;
pub mod metrics;
pub mod model;
pub mod probe;
pub mod sim;
pub mod stats;
