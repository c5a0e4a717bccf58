//! Verification harness and table emitter for the q-Brownian toolkit.

pub mod checks;
pub mod config;
pub mod emit;
pub mod report;
pub mod rng;
