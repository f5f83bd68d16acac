//! Single-server queues whose arrivals and service completions are each
//! driven by a finite Markov chain.
//!
//! The analysis works through relative values: for a chain emitting events
//! at long-run rate λ, `Δ(i)` is the expected excess number of events
//! started from state `i` compared with stationarity. From the arrival and
//! completion relative values the crate computes an explicit term, lower
//! and upper bounds on the mean queue length and the heavy-traffic
//! constant. A discrete-event simulator checks all of it.
//!
//! ```
//! use mams_core::{MamsSystem, MarkedChain};
//!
//! let arrival = MarkedChain::poisson("A", 0.5);
//! let service = MarkedChain::poisson("S", 1.0);
//! let system = MamsSystem::build(arrival, service).unwrap();
//! let b = system.bounds();
//! assert!((b.lower - 1.0).abs() < 1e-12 && (b.upper - 1.0).abs() < 1e-12);
//! ```

pub mod bounds;
pub mod chain;
pub mod cli;
pub mod error;
pub mod relative;
pub mod report;
pub mod simulator;
pub mod spec;
pub mod two_level;

pub use bounds::{bounds, build_system, AnalyzedChain, DriftCheck, MamsSystem, QueueLengthBounds, SystemState};
pub use chain::{ChainAnalysis, MarkedChain, Transition, ValidationReport, Violation};
pub use error::{Error, Result};
pub use relative::{solve_relative, transient_oracle, transient_oracle_all, RelativeValues};
pub use simulator::{simulate, simulate_chains, SimConfig, SimEstimate, SimReport};
pub use spec::{Scenario, SystemSpec};
pub use two_level::{analyze_two_level, e_q_bounds, empty_prob_bounds, TwoLevelAnalysis, TwoLevelParams};
