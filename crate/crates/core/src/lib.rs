//! Searches for inputs on which two versions of a program disagree, using a
//! chat model steered by execution feedback.

pub mod diffdetect;
pub mod emitter;
pub mod engine;
pub mod metrics;
pub mod prompt;
pub mod provider;
pub mod runner;
pub mod subject;
pub mod tokens;

pub use engine::{generate_det, DetResult, DetStatus, EngineConfig, RunRecord};
pub use subject::{ExecutionOutcome, InputOrigin, ProgramPair, RunStatus, TestInput, Value, Version};
