//! Seeded edge-IoT resource management: behavior profiling, one-class
//! irregularity detection, behavior-based budgets, budget-constrained fair
//! allocation and a decomposed-value reinforcement-learning allocator, all
//! driven by a deterministic discrete-event simulator.

pub mod behavior;
pub mod brdi;
pub mod config;
pub mod detection;
pub mod edrl;
pub mod neural;
pub mod par;
pub mod rfta;
pub mod rng;
pub mod sim;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
