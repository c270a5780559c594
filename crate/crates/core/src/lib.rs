//! Traffic-signal control laboratory: a deterministic point-queue network simulator,
//! classical controllers (fixed-time, Webster, Max-Pressure) and a FRAP-style deep
//! Q-network controller with multi-head neighbor attention.

pub mod agent;
pub mod controllers;
pub mod error;
pub mod experiment;
pub mod frap;
pub mod metrics;
pub mod network;
pub mod scenarios;
pub mod sim;

pub use error::{Error, Result};
