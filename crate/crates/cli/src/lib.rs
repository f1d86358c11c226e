//! Batch tooling around `aire-core`: run configuration, corpus loading,
//! deterministic report emission, synthetic fixture generation, and the
//! end-to-end evaluation pipeline.

pub mod config;
pub mod dataset;
pub mod emit;
pub mod pipeline;
pub mod synth;
