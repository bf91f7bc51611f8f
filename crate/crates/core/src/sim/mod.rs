//! Deterministic discrete-event simulator for a layered service stack.
//!
//! The stack has an application at the north end, a configurable number
//! of relay layers in between, and a row of CPU cores at the south end.
//! The application runs a duty-cycled main workload against each core;
//! with the pathway enabled, each high-grade core publishes its
//! blueprint through the trusted exchange and the application downclocks
//! it across every idle window via southwise tweaks.
//!
//! Everything the simulator does is reproducible from the scenario
//! config alone: events at equal timestamps process in enqueue order,
//! all state lives in ordered maps, and randomness (key material only)
//! comes from a seeded generator.
//!
//! The relays never open capsules — they forward extended IDs
//! byte-for-byte, and per-component decode counters prove it. Cores can
//! be failed and rotated to spares mid-run without perturbing the main
//! workload's results.

mod engine;
mod event;
mod scenario;
mod topology;

pub use engine::{RunOutput, Simulation};
pub use event::{Message, MessageBody, TraceEvent};
pub use scenario::{
    render_trace_jsonl, run_energy_scenario, run_scenario, CoreFailure, EnergyReport,
    ScenarioConfig,
};
pub use topology::{
    core_blueprint_for, freq_bounds, ColumnIndex, Grade, SlotAddress, StackTopology,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Model(#[from] crate::dvfs::DvfsError),
}
