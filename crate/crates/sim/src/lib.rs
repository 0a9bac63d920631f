//! Operator and experiment front end for the geofence registry: CLI
//! commands, trajectory replay, synthetic datasets and the benchmark harness.

pub mod bench;
pub mod cli;
pub mod config;
pub mod genboxes;
pub mod replay;
pub mod trajectory;
