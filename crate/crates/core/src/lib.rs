//! In situ and in transit analysis for a small Rayleigh–Bénard solver.
pub mod bridge;
pub mod data;
pub mod harness;
pub mod sinks;
pub mod solver;
pub mod staging;
