//! Benchmark front end for the solver library: experiment configs, seeded
//! multi-trial runs, CSV trace emission, aggregation, and plot scripts.

pub mod aggregate;
pub mod checks;
pub mod config;
pub mod plotgen;
pub mod runner;
pub mod seeding;
