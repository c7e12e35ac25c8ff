//! Obstacle-avoidance scenario harness for the robust safe control
//! architecture: pure-pursuit operating controller, randomized scenarios,
//! closed-loop runs, batch statistics and file export.

pub mod config;
pub mod pure_pursuit;
pub mod runner;
pub mod scenario;
pub mod batch;
pub mod cache;
pub mod export;
pub mod verify;
