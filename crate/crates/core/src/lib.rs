//! Online drift-plus-penalty resource management for multi-user mobile-edge
//! computing: a slotted simulator, exact per-slot solvers, analytical bounds
//! and brute-force oracles that certify the solvers.

pub mod engine;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod solver;

pub use engine::{run, step, EngineState, Mode, RunOptions, RunResult, SlotRecord};
pub use metrics::{drift_constant_c, RunMetrics};
pub use model::{QueueState, SlotDecision, SlotEnvironment, SlotOutcome, SystemConfig};
pub use solver::{solve_per_slot, BandwidthPolicy, SolverSettings};
