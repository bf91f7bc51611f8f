//! NSVTP: an out-of-band visibility/transparency pathway for layered
//! service stacks, piggybacked on resource names.
//!
//! A southern component (e.g. a CPU core) publishes a machine-readable
//! blueprint of its tunable behaviour northwise; a northern component
//! (e.g. an application) sends populated tweaks southwise. Both ride as
//! an appendix on ordinary resource identifiers, so the layers in
//! between relay them without understanding them.
//!
//! Modules:
//! - [`capsule`]: the wire codec (extended IDs, TLV envelope, reversible
//!   payload transforms, elision).
//! - [`scheme`]: the blueprint language (parse/print/evaluate/regime
//!   selection) and tweak validation.
//! - [`dvfs`]: the frequency-scaling energy model and eta sweeps.
//! - [`tx`]: the trusted-exchange broker for pathway initiation.
//! - [`sim`]: a deterministic discrete-event simulator for a layered
//!   stack exercising all of the above.

pub mod blueprints;
pub mod capsule;
pub mod dvfs;
pub mod scheme;
pub mod sim;
pub mod tx;

pub use capsule::{
    Capsule, CapsuleFlags, CapsuleHeader, Codec, CodecConfig, CodecError, Direction,
    ElisionContext, ExtendedResourceId, PayloadTransform, ResourceId, SegmentSlot, StatusRecord,
    StatusValue,
};
pub use dvfs::{
    allocate_cores, log_spaced, AllocationResult, CyclePattern, DvfsError, DvfsModelParams,
    EtaGrid, GridPoint,
};
pub use scheme::{
    Blueprint, EvalError, FeasibleSet, Formula, ParamSpec, ParseError, Scheme, Tweak, TweakError,
    ValidatedTweak,
};
pub use sim::{
    core_blueprint_for, freq_bounds, render_trace_jsonl, run_energy_scenario, run_scenario,
    ColumnIndex, CoreFailure, EnergyReport, Grade, Message, MessageBody, RunOutput, ScenarioConfig,
    SimError, Simulation, SlotAddress, StackTopology, TraceEvent,
};
pub use tx::{
    ClaimOutcome, ClaimRequest, Deposit, LayerIndex, LayerOracle, SouthNotification, TxError,
    TxRegistry,
};
