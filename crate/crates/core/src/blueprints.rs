//! Bundled blueprints for a two-grade CPU-core family, used by the
//! simulator and as parser fixtures.
//!
//! Both grades share the `power` and `status` schemes; the high grade
//! adds `dvfs`, whose `latency` parameter is a single-value set
//! advertising the core's frequency-transition delay in seconds.

use crate::scheme::{Blueprint, FeasibleSet};

pub const CPU_CORE_LOW: &str = include_str!("../blueprints/cpu_core_low.scheme");
pub const CPU_CORE_HIGH: &str = include_str!("../blueprints/cpu_core_high.scheme");

/// The low-grade core blueprint (`power` + `status`).
pub fn cpu_core_low() -> Blueprint {
    Blueprint::parse(CPU_CORE_LOW).expect("bundled blueprint parses")
}

/// The high-grade core blueprint (`power` + `status` + `dvfs`).
pub fn cpu_core_high() -> Blueprint {
    Blueprint::parse(CPU_CORE_HIGH).expect("bundled blueprint parses")
}

/// The high-grade blueprint with its advertised transition delay
/// replaced, for scenarios that sweep the delay.
pub fn cpu_core_high_with_latency(latency: f64) -> Blueprint {
    let mut bp = cpu_core_high();
    let scheme = bp
        .schemes
        .iter_mut()
        .find(|s| s.name == "dvfs")
        .expect("bundled blueprint has a dvfs scheme");
    let param = scheme
        .params
        .iter_mut()
        .find(|p| p.name == "latency")
        .expect("dvfs scheme has a latency parameter");
    param.feasible = FeasibleSet::Discrete(vec![latency]);
    bp
}

/// Reads the advertised frequency-transition delay from a blueprint,
/// if it has one.
pub fn advertised_latency(bp: &Blueprint) -> Option<f64> {
    match &bp.scheme("dvfs")?.param("latency")?.feasible {
        FeasibleSet::Discrete(values) if values.len() == 1 => Some(values[0]),
        _ => None,
    }
}
