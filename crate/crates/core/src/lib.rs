//! Continuous double auction simulator with a zoo of automated traders and
//! an LSTM trader trained by behavioral cloning.

pub mod agent;
pub mod commands;
pub mod exchange;
pub mod features;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod neural;
pub mod session;
pub mod traders;
