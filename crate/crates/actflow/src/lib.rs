//! File formats, the LM backend, the staged pipeline and the CLI built on
//! `actflow-core`.

pub mod artifacts;
pub mod cache;
pub mod cli;
pub mod config;
pub mod error;
pub mod frames;
pub mod llm;
pub mod manifest;
pub mod overrides;
pub mod pipeline;
pub mod report;
pub mod session;
pub mod synth;

pub use actflow_core as core;
pub use error::{Error, Result};
