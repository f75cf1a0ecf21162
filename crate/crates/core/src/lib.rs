//! Decentralized multi-robot frontier exploration with self-organizing teams.

pub mod agents;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod llm;
pub mod mapping;
pub mod planning;
pub mod rng;
pub mod selection;
pub mod teams;
pub mod world;

pub use config::{SimConfig, Strategy};
pub use engine::{RunSummary, Simulation, StepMetrics};
pub use error::{Error, Result};
