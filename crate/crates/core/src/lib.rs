//! Specification mining from parametric execution traces.
//!
//! The pipeline slices an interleaved history into sessions ([`slicer`]),
//! infers likely pre-/post-conditions per function ([`invariants`]) and
//! mines an extended finite state machine by counterexample-guided
//! refinement of a predicate abstraction ([`miner`]). [`baselines`] and
//! [`metrics`] compare mined models against ground truth, and [`simgen`]
//! produces synthetic histories from executable reference contracts.

pub mod baselines;
pub mod efsm;
pub mod invariants;
pub mod logic;
pub mod metrics;
pub mod miner;
pub mod simgen;
pub mod slicer;
pub mod trace;
