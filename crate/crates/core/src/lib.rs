//! Differential testing of tri-state validation rules.

pub mod corpus;
pub mod difftest;
pub mod exec;
pub mod gen;
pub mod metrics;
pub mod mutation;
pub mod reference;
pub mod rule;
pub mod sim;
pub mod stats;
pub mod testgen;

pub use exec::Execution;
