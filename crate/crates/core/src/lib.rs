//! Deterministic simulator of device-cloud collaborative LLM inference over
//! a U-shaped model split: speculative decoding with toy n-gram models,
//! EMA state monitoring, prompt chunking and parallel drafting.

pub mod chunking;
pub mod cloudsim;
pub mod error;
pub mod eventlog;
pub mod metrics;
pub mod model;
pub mod monitor;
pub mod scenario;
pub mod simkernel;
pub mod specdec;
pub mod time;
pub mod workload;

pub use error::{Error, Result};
pub use scenario::{Framework, Scenario};
pub use simkernel::{run, run_with_models, RunOutput};
