//! Scenario configuration and the paired-run energy comparison.

use serde::{Deserialize, Serialize};

use crate::dvfs::{CyclePattern, DvfsModelParams};

use super::engine::{RunOutput, Simulation};
use super::event::TraceEvent;
use super::topology::{ColumnIndex, Grade};
use super::SimError;

/// A scheduled core failure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreFailure {
    pub at: f64,
    pub column: ColumnIndex,
}

/// Everything a run needs. Deserializes from config files with every
/// field optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub params: DvfsModelParams,
    /// Compute-window length, seconds.
    pub t_comp: f64,
    /// Compute-to-idle ratio.
    pub rho: f64,
    /// Frequency-transition delay the cores advertise, seconds.
    pub delta: f64,
    /// Whether the pathway is active at all; off means the cores never
    /// leave full draw and no broker traffic happens.
    pub nsvtp_enabled: bool,
    pub relay_layers: u32,
    pub core_columns: u32,
    /// Grade per core column; missing entries default to high.
    pub core_grades: Vec<Grade>,
    /// Spare pool for rotation, in preference order.
    pub spare_cores: Vec<Grade>,
    /// Cycles before the measurement window opens.
    pub warmup_cycles: u32,
    /// Cycles inside the measurement window.
    pub measure_cycles: u32,
    /// Per-hop message delay, seconds.
    pub hop_latency: f64,
    /// Delay between a failure and its rotation, seconds.
    pub rotation_delay: f64,
    /// Seed for session/relay key material (the only randomness).
    pub seed: u64,
    pub failures: Vec<CoreFailure>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            params: DvfsModelParams::default(),
            t_comp: 1.0,
            rho: 1.0,
            delta: 0.02,
            nsvtp_enabled: true,
            relay_layers: 2,
            core_columns: 1,
            core_grades: Vec::new(),
            spare_cores: Vec::new(),
            warmup_cycles: 1,
            measure_cycles: 8,
            hop_latency: 0.0,
            rotation_delay: 0.0,
            seed: 7,
            failures: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn grade_of(&self, column: ColumnIndex) -> Grade {
        self.core_grades
            .get(column as usize)
            .copied()
            .unwrap_or(Grade::High)
    }

    pub fn cycle(&self) -> CyclePattern {
        CyclePattern::new(self.t_comp, self.rho, self.delta)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.params.validate()?;
        if self.core_columns == 0 {
            return Err(SimError::InvalidScenario("need at least one core".into()));
        }
        if self.core_grades.len() > self.core_columns as usize {
            return Err(SimError::InvalidScenario(format!(
                "{} grades listed for {} core columns",
                self.core_grades.len(),
                self.core_columns
            )));
        }
        if self.measure_cycles == 0 {
            return Err(SimError::InvalidScenario(
                "need at least one measured cycle".into(),
            ));
        }
        if !self.hop_latency.is_finite() || self.hop_latency < 0.0 {
            return Err(SimError::InvalidScenario(
                "hop latency must be finite and non-negative".into(),
            ));
        }
        if !self.rotation_delay.is_finite() || self.rotation_delay < 0.0 {
            return Err(SimError::InvalidScenario(
                "rotation delay must be finite and non-negative".into(),
            ));
        }
        for f in &self.failures {
            if f.column >= self.core_columns {
                return Err(SimError::InvalidScenario(format!(
                    "failure targets column {} of {}",
                    f.column, self.core_columns
                )));
            }
            if !f.at.is_finite() || f.at < 0.0 {
                return Err(SimError::InvalidScenario(
                    "failure times must be finite and non-negative".into(),
                ));
            }
        }
        // The cycle pattern must be expressible with or without the
        // pathway; with it, the idle window must fit the transitions.
        self.params.baseline_cycle_energy(&self.cycle())?;
        if self.nsvtp_enabled {
            self.params.eta(&self.cycle())?;
            if self.warmup_cycles == 0 {
                return Err(SimError::InvalidScenario(
                    "pathway establishment needs at least one warmup cycle".into(),
                ));
            }
            // Establishment floats north over every hop, and the first
            // tweak is pre-sent a full stack traversal early.
            let establish_horizon = 2.0 * (self.relay_layers + 1) as f64 * self.hop_latency;
            let warmup = self.warmup_cycles as f64 * (self.t_comp + self.t_comp / self.rho);
            if establish_horizon > warmup {
                return Err(SimError::InvalidScenario(
                    "hop latency leaves no room to establish pathways during warmup".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Runs one configured simulation to its horizon.
pub fn run_scenario(config: ScenarioConfig) -> Result<RunOutput, SimError> {
    Ok(Simulation::new(config)?.run())
}

/// The headline numbers of a paired energy run. Serializes with the
/// exact field names the CLI report promises.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    #[serde(rename = "baseline_J")]
    pub baseline_j: f64,
    #[serde(rename = "nsvtp_J")]
    pub nsvtp_j: f64,
    pub eta_sim: f64,
    pub eta_closed_form: f64,
    pub abs_diff: f64,
}

/// Runs the scenario as configured and once more with the pathway
/// forced off, over the identical cycle grid, and reports the measured
/// energy ratio next to the closed-form prediction. With the pathway
/// already off the two runs are identical and the ratio is exactly 1.
pub fn run_energy_scenario(config: ScenarioConfig) -> Result<(EnergyReport, RunOutput), SimError> {
    let configured = run_scenario(config.clone())?;
    let mut off = config.clone();
    off.nsvtp_enabled = false;
    let baseline = run_scenario(off)?;

    let eta_sim = configured.measured_j / baseline.measured_j;
    let eta_closed_form = if config.nsvtp_enabled {
        config.params.eta(&config.cycle())?
    } else {
        1.0
    };
    let report = EnergyReport {
        baseline_j: baseline.measured_j,
        nsvtp_j: configured.measured_j,
        eta_sim,
        eta_closed_form,
        abs_diff: (eta_sim - eta_closed_form).abs(),
    };
    Ok((report, configured))
}

/// Renders a trace as JSON lines, one event per line, in event order.
pub fn render_trace_jsonl(trace: &[TraceEvent]) -> String {
    let mut out = String::new();
    for event in trace {
        out.push_str(&serde_json::to_string(event).expect("trace events serialize"));
        out.push('\n');
    }
    out
}
