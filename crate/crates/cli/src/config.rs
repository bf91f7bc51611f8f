//! Configuration loading and precedence for the `nsvtp` binary.
//!
//! Every run starts from built-in defaults; a JSON config file (when
//! given) replaces those; individual command-line flags override the
//! file. List-valued flags (grades, spares, failures) replace the whole
//! list rather than appending to it.

use std::path::Path;

use nsvtp_core::{CoreFailure, DvfsModelParams, Grade, ScenarioConfig};

use crate::Failure;

/// Reads a whole file, reporting failures as configuration errors.
pub fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))
}

/// Model parameters from an optional JSON file (absent fields keep
/// their defaults), e.g. `{"f_min": 0.8, "f_max": 2.4}`.
pub fn load_params(path: Option<&Path>) -> Result<DvfsModelParams, Failure> {
    match path {
        None => Ok(DvfsModelParams::default()),
        Some(path) => {
            let text = read_file(path)?;
            serde_json::from_str(&text).map_err(|e| {
                Failure::config(format!("bad model params in {}: {e}", path.display()))
            })
        }
    }
}

/// Scenario from an optional JSON file, same field names as the
/// simulator's config struct; absent fields keep their defaults.
pub fn load_scenario(path: Option<&Path>) -> Result<ScenarioConfig, Failure> {
    match path {
        None => Ok(ScenarioConfig::default()),
        Some(path) => {
            let text = read_file(path)?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::config(format!("bad scenario in {}: {e}", path.display())))
        }
    }
}

/// Flag-level overrides for the model parameters.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ParamOverrides {
    /// Idle draw floor in watts
    #[arg(long)]
    pub p_static: Option<f64>,
    /// Frequency-dependent draw in watts at the ceiling
    #[arg(long)]
    pub p_dynamic: Option<f64>,
    /// Lowest clock the core accepts
    #[arg(long)]
    pub f_min: Option<f64>,
    /// Highest clock the core accepts
    #[arg(long)]
    pub f_max: Option<f64>,
    /// Exponent of the frequency term in the draw model
    #[arg(long)]
    pub dvfs_exponent: Option<f64>,
    /// Load at which the draw model is evaluated
    #[arg(long)]
    pub l_max: Option<f64>,
}

impl ParamOverrides {
    pub fn apply(&self, params: &mut DvfsModelParams) {
        if let Some(v) = self.p_static {
            params.p_static = v;
        }
        if let Some(v) = self.p_dynamic {
            params.p_dynamic = v;
        }
        if let Some(v) = self.f_min {
            params.f_min = v;
        }
        if let Some(v) = self.f_max {
            params.f_max = v;
        }
        if let Some(v) = self.dvfs_exponent {
            params.dvfs_exponent = v;
        }
        if let Some(v) = self.l_max {
            params.l_max = v;
        }
    }
}

/// Flag-level overrides for a simulation scenario.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ScenarioOverrides {
    #[command(flatten)]
    pub params: ParamOverrides,
    /// Compute window length per cycle
    #[arg(long)]
    pub t_comp: Option<f64>,
    /// Compute-to-idle ratio; the idle window lasts t_comp / rho
    #[arg(long)]
    pub rho: Option<f64>,
    /// Advertised frequency-switch latency
    #[arg(long)]
    pub delta: Option<f64>,
    /// Run the stack without the pathway (no tweaks, no downclocking)
    #[arg(long)]
    pub no_nsvtp: bool,
    /// Opaque relay layers between the cores and the application
    #[arg(long)]
    pub relay_layers: Option<u32>,
    /// Independent core columns at the bottom layer
    #[arg(long)]
    pub core_columns: Option<u32>,
    /// Per-column core grade (repeat per column; replaces the file's list)
    #[arg(long = "grade", value_parser = parse_grade)]
    pub grades: Vec<Grade>,
    /// Spare core grades for rotation (repeatable; replaces the file's list)
    #[arg(long = "spare", value_parser = parse_grade)]
    pub spares: Vec<Grade>,
    /// Cycles before measurement starts
    #[arg(long)]
    pub warmup_cycles: Option<u32>,
    /// Cycles inside the measurement window
    #[arg(long)]
    pub measure_cycles: Option<u32>,
    /// One-hop message latency between adjacent layers
    #[arg(long)]
    pub hop_latency: Option<f64>,
    /// Delay between a core failing and its spare taking the slot
    #[arg(long)]
    pub rotation_delay: Option<f64>,
    /// Seed for session-key material
    #[arg(long)]
    pub seed: Option<u64>,
    /// Kill a core column at a given time, as `time:column`
    /// (repeatable; replaces the file's list)
    #[arg(long = "fail", value_parser = parse_failure)]
    pub failures: Vec<CoreFailure>,
}

impl ScenarioOverrides {
    pub fn apply(&self, config: &mut ScenarioConfig) {
        self.params.apply(&mut config.params);
        if let Some(v) = self.t_comp {
            config.t_comp = v;
        }
        if let Some(v) = self.rho {
            config.rho = v;
        }
        if let Some(v) = self.delta {
            config.delta = v;
        }
        if self.no_nsvtp {
            config.nsvtp_enabled = false;
        }
        if let Some(v) = self.relay_layers {
            config.relay_layers = v;
        }
        if let Some(v) = self.core_columns {
            config.core_columns = v;
        }
        if !self.grades.is_empty() {
            config.core_grades = self.grades.clone();
        }
        if !self.spares.is_empty() {
            config.spare_cores = self.spares.clone();
        }
        if let Some(v) = self.warmup_cycles {
            config.warmup_cycles = v;
        }
        if let Some(v) = self.measure_cycles {
            config.measure_cycles = v;
        }
        if let Some(v) = self.hop_latency {
            config.hop_latency = v;
        }
        if let Some(v) = self.rotation_delay {
            config.rotation_delay = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if !self.failures.is_empty() {
            config.failures = self.failures.clone();
        }
    }
}

pub fn parse_grade(s: &str) -> Result<Grade, String> {
    s.parse()
}

/// `time:column`, e.g. `5.5:0`.
pub fn parse_failure(s: &str) -> Result<CoreFailure, String> {
    let (at, column) = s
        .split_once(':')
        .ok_or_else(|| format!("expected time:column, got `{s}`"))?;
    let at: f64 = at
        .parse()
        .map_err(|e| format!("bad failure time `{at}`: {e}"))?;
    let column: u32 = column
        .parse()
        .map_err(|e| format!("bad failure column `{column}`: {e}"))?;
    Ok(CoreFailure { at, column })
}

/// Lowercase hex with an even number of digits.
pub fn parse_hex(s: &str) -> Result<Vec<u8>, String> {
    if !s.len().is_multiple_of(2) {
        return Err("hex key must have an even number of digits".into());
    }
    (0..s.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&s[i..i + 2], 16)
                .map_err(|_| format!("bad hex byte `{}`", &s[i..i + 2]))
        })
        .collect()
}
