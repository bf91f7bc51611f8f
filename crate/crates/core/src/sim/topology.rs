//! Stack shape: who sits where, and what blueprint they carry.

use serde::{Deserialize, Serialize};

use crate::capsule::ResourceId;
use crate::dvfs::DvfsModelParams;
use crate::scheme::Blueprint;
use crate::tx::LayerIndex;

/// Horizontal position within a layer. Only the core layer fans out;
/// every other layer has a single column.
pub type ColumnIndex = u32;

/// One slot in the stack. Messages are addressed to slots, not to the
/// components occupying them, which is what makes rotation transparent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotAddress {
    pub layer: LayerIndex,
    pub column: ColumnIndex,
}

impl SlotAddress {
    pub fn new(layer: LayerIndex, column: ColumnIndex) -> Self {
        SlotAddress { layer, column }
    }
}

/// Capability grade of a core. A high-grade core's blueprint extends the
/// low-grade one by a `dvfs` scheme, so a high-grade spare can stand in
/// for a low-grade core but not the other way around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grade {
    High,
    Low,
}

impl Grade {
    pub fn as_str(self) -> &'static str {
        match self {
            Grade::High => "high",
            Grade::Low => "low",
        }
    }
}

impl std::str::FromStr for Grade {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "high" => Ok(Grade::High),
            "low" => Ok(Grade::Low),
            other => Err(format!("unknown grade `{other}` (expected high or low)")),
        }
    }
}

/// Static shape of the stack: layer 0 holds the cores, the top layer
/// holds the application, and `relay_layers` opaque relays sit between.
#[derive(Debug, Clone, PartialEq)]
pub struct StackTopology {
    pub relay_layers: u32,
    pub core_columns: u32,
}

impl StackTopology {
    pub fn layer_count(&self) -> u32 {
        self.relay_layers + 2
    }

    pub fn app_layer(&self) -> LayerIndex {
        self.relay_layers + 1
    }

    /// Hops between the application and a core, in either direction.
    pub fn hops(&self) -> u32 {
        self.relay_layers + 1
    }

    pub fn app_slot(&self) -> SlotAddress {
        SlotAddress::new(self.app_layer(), 0)
    }

    pub fn core_slot(&self, column: ColumnIndex) -> SlotAddress {
        SlotAddress::new(0, column)
    }

    /// The slot a southwise message moves to next, given where it is
    /// now and which core column it is heading for.
    pub fn next_south(&self, from: SlotAddress, column: ColumnIndex) -> Option<SlotAddress> {
        if from.layer == 0 {
            return None;
        }
        let layer = from.layer - 1;
        Some(SlotAddress::new(layer, if layer == 0 { column } else { 0 }))
    }

    /// The slot a northwise message moves to next.
    pub fn next_north(&self, from: SlotAddress) -> Option<SlotAddress> {
        if from.layer >= self.app_layer() {
            return None;
        }
        Some(SlotAddress::new(from.layer + 1, 0))
    }

    pub fn app_id(&self) -> ResourceId {
        ResourceId::new("app.main").expect("static id is valid")
    }

    pub fn relay_id(&self, layer: LayerIndex) -> ResourceId {
        ResourceId::new(format!("relay{layer}.c0")).expect("generated id is valid")
    }

    pub fn core_id(&self, column: ColumnIndex) -> ResourceId {
        ResourceId::new(format!("cpu.core{column}")).expect("generated id is valid")
    }

    pub fn spare_id(&self, index: usize) -> ResourceId {
        ResourceId::new(format!("cpu.spare{index}")).expect("generated id is valid")
    }
}

/// Builds the blueprint a simulated core publishes, straight from the
/// draw-model parameters. High-grade cores add the `dvfs` scheme whose
/// `latency` parameter advertises `latency` as the transition delay and
/// whose `freq_step` set offers exactly the floor and ceiling
/// frequencies. Going through the parser keeps this the same artifact a
/// real component would ship.
pub fn core_blueprint_for(params: &DvfsModelParams, latency: f64, grade: Grade) -> Blueprint {
    let revision = match grade {
        Grade::High => 2,
        Grade::Low => 1,
    };
    let mut text = format!(
        "blueprint \"cpu-core\" revision {revision};\n\
         \n\
         const P0 = {p0};\n\
         const P3 = {p3};\n\
         const f_max = {fmax};\n\
         const l_max = {lmax};\n\
         const n_dvfs = {n};\n\
         \n\
         scheme power {{\n\
         \x20 param f : [{fmin}, {fmax}] [GHz];\n\
         \x20 param l : [0, {lmax}] [GIPS];\n\
         \x20 outcome watts;\n\
         \x20 formula draw : (P0 + P3 * (f / f_max) ^ n_dvfs) * (l / l_max) -> watts;\n\
         }}\n\
         \n\
         scheme status {{\n\
         \x20 param period : [0.1, 60] [s];\n\
         \x20 outcome interval;\n\
         \x20 formula report_every : period -> interval;\n\
         }}\n",
        p0 = params.p_static,
        p3 = params.p_dynamic,
        fmin = params.f_min,
        fmax = params.f_max,
        lmax = params.l_max,
        n = params.dvfs_exponent,
    );
    if grade == Grade::High {
        let steps = if params.f_min == params.f_max {
            format!("{{{}}}", params.f_max)
        } else {
            format!("{{{}, {}}}", params.f_min, params.f_max)
        };
        text.push_str(&format!(
            "\n\
             scheme dvfs {{\n\
             \x20 param freq_step : {steps} [GHz];\n\
             \x20 param latency : {{{latency}}} [s];\n\
             \x20 outcome target_freq;\n\
             \x20 formula set_freq : freq_step -> target_freq;\n\
             }}\n"
        ));
    }
    Blueprint::parse(&text).expect("generated blueprint parses")
}

/// Reads the floor and ceiling frequencies a blueprint's `dvfs` scheme
/// offers, if it has one.
pub fn freq_bounds(bp: &Blueprint) -> Option<(f64, f64)> {
    let param = bp.scheme("dvfs")?.param("freq_step")?;
    match &param.feasible {
        crate::scheme::FeasibleSet::Discrete(values) if !values.is_empty() => {
            let mut lo = values[0];
            let mut hi = values[0];
            for &v in values {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            Some((lo, hi))
        }
        _ => None,
    }
}

pub use crate::blueprints::advertised_latency;
