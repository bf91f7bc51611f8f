//! Frequency-scaling energy model for a duty-cycled core.
//!
//! A core alternates between a compute window of `t_comp` seconds at
//! full frequency and full load, and an idle window of `t_comp / rho`
//! seconds. Left alone it idles at full draw. With the pathway active,
//! the application downclocks the core for the idle window and restores
//! it before the next compute window; each of the two transitions costs
//! `delta` seconds billed at full draw, during which no work retires.
//! `eta` is the resulting energy divided by the leave-it-alone energy,
//! so lower is better and `eta == 1` means no savings.
//!
//! Draw model: `P(f, l) = (p_static + p_dynamic * (f / f_max)^k) * (l / l_max)`
//! with `k` the frequency exponent. The idle window is billed at
//! `P(f_min, l_max)`: the core still serves its full residual load,
//! only slower.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DvfsError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("invalid cycle pattern: {0}")]
    InvalidPattern(String),
    #[error("idle window of {idle} s cannot fit two frequency transitions totalling {needed} s")]
    InfeasibleTweakWindow { idle: f64, needed: f64 },
    #[error("invalid sweep axis: {0}")]
    InvalidAxis(String),
}

/// Parameters of the draw model. Defaults describe a 1–3 GHz core
/// drawing 250 W at full load and frequency, of which 142.2 W does not
/// scale with frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DvfsModelParams {
    /// Draw that does not scale with frequency, in watts.
    pub p_static: f64,
    /// Additional draw at full frequency, in watts.
    pub p_dynamic: f64,
    /// Lowest frequency the core accepts.
    pub f_min: f64,
    /// Frequency the compute windows run at.
    pub f_max: f64,
    /// Exponent of the frequency term.
    pub dvfs_exponent: f64,
    /// Load at which the draw model reads 100%.
    pub l_max: f64,
}

impl Default for DvfsModelParams {
    fn default() -> Self {
        DvfsModelParams {
            p_static: 142.2,
            p_dynamic: 107.8,
            f_min: 1.0,
            f_max: 3.0,
            dvfs_exponent: 3.0,
            l_max: 3.0,
        }
    }
}

/// One duty cycle, in seconds and ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclePattern {
    /// Length of the compute window.
    pub t_comp: f64,
    /// Compute-to-idle ratio; the idle window lasts `t_comp / rho`.
    pub rho: f64,
    /// Duration of one frequency transition.
    pub delta: f64,
}

impl CyclePattern {
    pub fn new(t_comp: f64, rho: f64, delta: f64) -> Self {
        CyclePattern { t_comp, rho, delta }
    }

    fn validate(&self) -> Result<(), DvfsError> {
        let ok = self.t_comp.is_finite()
            && self.t_comp > 0.0
            && self.rho.is_finite()
            && self.rho > 0.0
            && self.delta.is_finite()
            && self.delta >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(DvfsError::InvalidPattern(format!(
                "need t_comp > 0, rho > 0, delta >= 0; got t_comp={}, rho={}, delta={}",
                self.t_comp, self.rho, self.delta
            )))
        }
    }

    /// Length of the idle window.
    pub fn idle(&self) -> f64 {
        self.t_comp / self.rho
    }
}

impl DvfsModelParams {
    pub fn validate(&self) -> Result<(), DvfsError> {
        let all_finite = self.p_static.is_finite()
            && self.p_dynamic.is_finite()
            && self.f_min.is_finite()
            && self.f_max.is_finite()
            && self.dvfs_exponent.is_finite()
            && self.l_max.is_finite();
        if !all_finite {
            return Err(DvfsError::InvalidParams(
                "all parameters must be finite".into(),
            ));
        }
        if self.p_static < 0.0 || self.p_dynamic < 0.0 || self.p_static + self.p_dynamic <= 0.0 {
            return Err(DvfsError::InvalidParams(
                "draw components must be non-negative and not both zero".into(),
            ));
        }
        if !(0.0 < self.f_min && self.f_min <= self.f_max) {
            return Err(DvfsError::InvalidParams("need 0 < f_min <= f_max".into()));
        }
        if self.dvfs_exponent <= 0.0 {
            return Err(DvfsError::InvalidParams("exponent must be positive".into()));
        }
        if self.l_max <= 0.0 {
            return Err(DvfsError::InvalidParams("l_max must be positive".into()));
        }
        Ok(())
    }

    /// Instantaneous draw at frequency `f` and load `l`.
    pub fn core_power(&self, f: f64, l: f64) -> f64 {
        (self.p_static + self.p_dynamic * (f / self.f_max).powf(self.dvfs_exponent))
            * (l / self.l_max)
    }

    /// Draw during a compute window: full frequency, full load.
    pub fn full_power(&self) -> f64 {
        self.p_static + self.p_dynamic
    }

    /// Downclocked draw divided by full draw. 1.0 exactly when
    /// `f_min == f_max`.
    pub fn low_power_ratio(&self) -> f64 {
        self.core_power(self.f_min, self.l_max) / self.full_power()
    }

    /// Energy of one cycle when the core is never downclocked.
    pub fn baseline_cycle_energy(&self, cycle: &CyclePattern) -> Result<f64, DvfsError> {
        self.validate()?;
        cycle.validate()?;
        Ok(self.full_power() * cycle.t_comp * (1.0 + 1.0 / cycle.rho))
    }

    /// Energy of one cycle when the idle window runs at `f_min`, minus
    /// the two transitions of `delta` seconds each billed at full draw.
    /// Fails when the idle window cannot fit both transitions.
    pub fn nsvtp_cycle_energy(&self, cycle: &CyclePattern) -> Result<f64, DvfsError> {
        self.validate()?;
        cycle.validate()?;
        self.check_window(cycle)?;
        let full = self.full_power();
        let low = self.core_power(self.f_min, self.l_max);
        // Baseline minus what the low window saves; this form makes the
        // f_min == f_max case cancel exactly instead of to rounding.
        Ok(full * cycle.t_comp * (1.0 + 1.0 / cycle.rho)
            - (full - low) * (cycle.idle() - 2.0 * cycle.delta))
    }

    /// Downclocked energy divided by baseline energy for one cycle.
    /// Exactly 1.0 when `f_min == f_max`; otherwise in
    /// `(low_power_ratio, 1]` for any feasible cycle.
    pub fn eta(&self, cycle: &CyclePattern) -> Result<f64, DvfsError> {
        self.validate()?;
        cycle.validate()?;
        self.check_window(cycle)?;
        let r = self.low_power_ratio();
        Ok(1.0
            - (1.0 - r) * (1.0 / cycle.rho - 2.0 * cycle.delta / cycle.t_comp)
                / (1.0 + 1.0 / cycle.rho))
    }

    fn check_window(&self, cycle: &CyclePattern) -> Result<(), DvfsError> {
        let idle = cycle.idle();
        let needed = 2.0 * cycle.delta;
        if needed > idle {
            return Err(DvfsError::InfeasibleTweakWindow { idle, needed });
        }
        Ok(())
    }

    /// Computes `eta` over the cross product of the two axes. Each cell
    /// uses a unit compute window with `delta = t_comp / ratio`, which
    /// loses no generality: `eta` depends only on `rho` and the ratio.
    /// Cells whose idle window cannot fit the transitions are marked
    /// infeasible and carry NaN.
    pub fn sweep_eta(
        &self,
        rho_axis: &[f64],
        tcomp_over_delta_axis: &[f64],
    ) -> Result<EtaGrid, DvfsError> {
        self.validate()?;
        for (name, axis) in [
            ("rho", rho_axis),
            ("tcomp_over_delta", tcomp_over_delta_axis),
        ] {
            if axis.is_empty() {
                return Err(DvfsError::InvalidAxis(format!("{name} axis is empty")));
            }
            if axis.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(DvfsError::InvalidAxis(format!(
                    "{name} axis values must be positive and finite"
                )));
            }
        }
        let mut eta = Vec::with_capacity(rho_axis.len());
        let mut feasible = Vec::with_capacity(rho_axis.len());
        for &rho in rho_axis {
            let mut eta_row = Vec::with_capacity(tcomp_over_delta_axis.len());
            let mut feasible_row = Vec::with_capacity(tcomp_over_delta_axis.len());
            for &ratio in tcomp_over_delta_axis {
                let cycle = CyclePattern::new(1.0, rho, 1.0 / ratio);
                match self.eta(&cycle) {
                    Ok(v) => {
                        eta_row.push(v);
                        feasible_row.push(true);
                    }
                    Err(DvfsError::InfeasibleTweakWindow { .. }) => {
                        eta_row.push(f64::NAN);
                        feasible_row.push(false);
                    }
                    Err(e) => return Err(e),
                }
            }
            eta.push(eta_row);
            feasible.push(feasible_row);
        }
        Ok(EtaGrid {
            rho: rho_axis.to_vec(),
            tcomp_over_delta: tcomp_over_delta_axis.to_vec(),
            eta,
            feasible,
        })
    }
}

/// Result of sizing a pool of cores for a workload with 20% headroom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub cores: u32,
    /// Workload divided by the pool's total capacity.
    pub utilization: f64,
}

/// Fraction of each core's capacity the allocator is willing to plan
/// for; the remainder absorbs bursts.
pub const HEADROOM_FACTOR: f64 = 0.8;

/// Smallest pool that keeps every core at or below [`HEADROOM_FACTOR`],
/// but never fewer than one core.
pub fn allocate_cores(workload: f64, core_capacity: f64) -> Result<AllocationResult, DvfsError> {
    if !workload.is_finite() || workload < 0.0 {
        return Err(DvfsError::InvalidParams(
            "workload must be finite and non-negative".into(),
        ));
    }
    if !core_capacity.is_finite() || core_capacity <= 0.0 {
        return Err(DvfsError::InvalidParams(
            "core capacity must be finite and positive".into(),
        ));
    }
    let cores = ((workload / (HEADROOM_FACTOR * core_capacity)).ceil() as u32).max(1);
    Ok(AllocationResult {
        cores,
        utilization: workload / (cores as f64 * core_capacity),
    })
}

/// `n` logarithmically spaced points from `lo` to `hi`, both included
/// exactly.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, DvfsError> {
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo) {
        return Err(DvfsError::InvalidAxis(
            "need finite bounds with 0 < lo <= hi".into(),
        ));
    }
    if n < 2 {
        return Err(DvfsError::InvalidAxis("need at least two points".into()));
    }
    let (la, lb) = (lo.log10(), hi.log10());
    let mut v: Vec<f64> = (0..n)
        .map(|k| 10f64.powf(la + (k as f64) * (lb - la) / ((n - 1) as f64)))
        .collect();
    v[0] = lo;
    v[n - 1] = hi;
    Ok(v)
}

/// Default sweep axis for the compute-to-idle ratio.
pub fn default_rho_axis() -> Vec<f64> {
    log_spaced(0.01, 10.0, 25).expect("static bounds are valid")
}

/// Default sweep axis for `t_comp / delta`.
pub fn default_tcomp_over_delta_axis() -> Vec<f64> {
    log_spaced(10.0, 1000.0, 25).expect("static bounds are valid")
}

/// `eta` over a grid, row-major: `eta[i][j]` pairs `rho[i]` with
/// `tcomp_over_delta[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaGrid {
    pub rho: Vec<f64>,
    pub tcomp_over_delta: Vec<f64>,
    pub eta: Vec<Vec<f64>>,
    pub feasible: Vec<Vec<bool>>,
}

/// One grid cell, as reported by the min/max scans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub eta: f64,
    pub rho: f64,
    pub tcomp_over_delta: f64,
}

impl EtaGrid {
    fn scan(&self, want_max: bool) -> Option<GridPoint> {
        let mut best: Option<GridPoint> = None;
        for (i, &rho) in self.rho.iter().enumerate() {
            for (j, &ratio) in self.tcomp_over_delta.iter().enumerate() {
                if !self.feasible[i][j] {
                    continue;
                }
                let eta = self.eta[i][j];
                let better = match &best {
                    None => true,
                    Some(b) => {
                        if want_max {
                            eta > b.eta
                        } else {
                            eta < b.eta
                        }
                    }
                };
                if better {
                    best = Some(GridPoint {
                        eta,
                        rho,
                        tcomp_over_delta: ratio,
                    });
                }
            }
        }
        best
    }

    pub fn min_feasible(&self) -> Option<GridPoint> {
        self.scan(false)
    }

    pub fn max_feasible(&self) -> Option<GridPoint> {
        self.scan(true)
    }

    pub fn feasible_count(&self) -> usize {
        self.feasible.iter().flatten().filter(|b| **b).count()
    }

    /// Renders `rho,tcomp_over_delta,eta,feasible` rows, row-major over
    /// (rho outer, ratio inner), floats with 12 significant digits.
    /// Infeasible cells carry `NaN` and `false`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rho,tcomp_over_delta,eta,feasible\n");
        for (i, &rho) in self.rho.iter().enumerate() {
            for (j, &ratio) in self.tcomp_over_delta.iter().enumerate() {
                out.push_str(&format!(
                    "{:.11e},{:.11e},{:.11e},{}\n",
                    rho, ratio, self.eta[i][j], self.feasible[i][j]
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn default_draw_matches_hand_values() {
        let p = DvfsModelParams::default();
        p.validate().unwrap();
        assert!(close(p.full_power(), 250.0, 1e-12));
        // At the floor frequency: 142.2 + 107.8 / 27.
        assert!(close(p.core_power(1.0, 3.0), 146.1925925925926, 1e-12));
        assert!(close(p.low_power_ratio(), 9868.0 / 16875.0, 1e-12));
        assert!(close(p.low_power_ratio(), 0.5847703703703704, 1e-12));
        // Half load halves the draw.
        assert!(close(p.core_power(3.0, 1.5), 125.0, 1e-12));
    }

    #[test]
    fn cycle_energy_oracles() {
        let p = DvfsModelParams::default();
        let cycle = CyclePattern::new(1.0, 1.0, 0.0);
        let base = p.baseline_cycle_energy(&cycle).unwrap();
        let nsvtp = p.nsvtp_cycle_energy(&cycle).unwrap();
        let eta = p.eta(&cycle).unwrap();
        assert!(close(base, 500.0, 1e-12));
        assert!(close(nsvtp, 396.1925925925926, 1e-12));
        assert!(close(eta, 0.7923851851851852, 1e-12));
        assert!(close(eta, nsvtp / base, 1e-12));
    }

    #[test]
    fn eta_equals_energy_ratio_across_shapes() {
        let p = DvfsModelParams::default();
        for t in [0.2, 1.0, 7.5] {
            for rho in [0.01, 0.3, 1.0, 42.0] {
                for frac in [0.0, 0.1, 0.49] {
                    let delta = frac * t / rho;
                    let cycle = CyclePattern::new(t, rho, delta);
                    let eta = p.eta(&cycle).unwrap();
                    let ratio = p.nsvtp_cycle_energy(&cycle).unwrap()
                        / p.baseline_cycle_energy(&cycle).unwrap();
                    assert!(close(eta, ratio, 1e-12), "t={t} rho={rho} frac={frac}");
                }
            }
        }
    }

    #[test]
    fn no_transition_cost_reduces_to_the_simple_ratio() {
        let p = DvfsModelParams::default();
        let r = p.low_power_ratio();
        for rho in [0.01, 0.1, 0.5, 1.0, 10.0, 500.0] {
            let eta = p.eta(&CyclePattern::new(1.0, rho, 0.0)).unwrap();
            assert!(close(eta, (rho + r) / (rho + 1.0), 1e-14), "rho={rho}");
        }
    }

    #[test]
    fn boundary_window_breaks_even_and_beyond_is_infeasible() {
        let p = DvfsModelParams::default();
        for rho in [0.25, 1.0, 3.0] {
            let delta = (1.0 / rho) / 2.0;
            let cycle = CyclePattern::new(1.0, rho, delta);
            assert_eq!(p.eta(&cycle).unwrap(), 1.0);
            let base = p.baseline_cycle_energy(&cycle).unwrap();
            assert_eq!(p.nsvtp_cycle_energy(&cycle).unwrap(), base);
        }
        let too_long = CyclePattern::new(1.0, 1.0, 0.6);
        assert!(matches!(
            p.eta(&too_long),
            Err(DvfsError::InfeasibleTweakWindow { .. })
        ));
        assert!(matches!(
            p.nsvtp_cycle_energy(&too_long),
            Err(DvfsError::InfeasibleTweakWindow { .. })
        ));
    }

    #[test]
    fn equal_frequencies_are_exactly_neutral() {
        let p = DvfsModelParams {
            f_min: 3.0,
            ..DvfsModelParams::default()
        };
        assert_eq!(p.low_power_ratio(), 1.0);
        for (t, rho, frac) in [(1.0, 1.0, 0.0), (0.3, 7.0, 0.5), (20.0, 0.02, 0.25)] {
            let cycle = CyclePattern::new(t, rho, frac * t / rho / 2.0);
            assert_eq!(p.eta(&cycle).unwrap(), 1.0);
            assert_eq!(
                p.nsvtp_cycle_energy(&cycle).unwrap(),
                p.baseline_cycle_energy(&cycle).unwrap()
            );
        }
    }

    #[test]
    fn eta_rises_with_rho_and_with_delta() {
        let p = DvfsModelParams::default();
        let eta = |rho: f64, delta: f64| p.eta(&CyclePattern::new(1.0, rho, delta)).unwrap();
        assert!(eta(0.1, 0.001) < eta(0.2, 0.001));
        assert!(eta(1.0, 0.001) < eta(2.0, 0.001));
        assert!(eta(1.0, 0.01) < eta(1.0, 0.1));
        assert!(eta(0.05, 0.0) < eta(0.05, 1.0));
    }

    #[test]
    fn default_grid_minimum_matches_frozen_scan() {
        let p = DvfsModelParams::default();
        let grid = p
            .sweep_eta(&default_rho_axis(), &default_tcomp_over_delta_axis())
            .unwrap();
        assert_eq!(grid.feasible_count(), 617);
        let min = grid.min_feasible().unwrap();
        assert!(close(min.eta, 0.5888897771910524, 1e-9), "{}", min.eta);
        assert_eq!(min.rho, 0.01);
        assert_eq!(min.tcomp_over_delta, 1000.0);
        let max = grid.max_feasible().unwrap();
        assert!(close(max.eta, 0.997294128438653, 1e-9), "{}", max.eta);

        let r = p.low_power_ratio();
        for (i, row) in grid.eta.iter().enumerate() {
            for (j, &eta) in row.iter().enumerate() {
                if grid.feasible[i][j] {
                    assert!(eta > r && eta <= 1.0 + 1e-12);
                } else {
                    assert!(eta.is_nan());
                }
            }
        }
    }

    #[test]
    fn tighter_rho_floor_cannot_reach_the_default_minimum() {
        // With rho starting at 0.1 the best cell is ~0.6226; the default
        // axis starts at 0.01 precisely so the sweep can reach the high
        // 0.5x range.
        let p = DvfsModelParams::default();
        let grid = p
            .sweep_eta(
                &log_spaced(0.1, 10.0, 25).unwrap(),
                &default_tcomp_over_delta_axis(),
            )
            .unwrap();
        let min = grid.min_feasible().unwrap();
        assert!(close(min.eta, 0.6225940148148148, 1e-9), "{}", min.eta);
        assert!(min.eta > 0.62);
    }

    #[test]
    fn log_axis_hits_endpoints_exactly() {
        let v = log_spaced(0.01, 10.0, 25).unwrap();
        assert_eq!(v.len(), 25);
        assert_eq!(v[0], 0.01);
        assert_eq!(v[24], 10.0);
        assert!((v[8] - 0.1).abs() < 1e-15);
        assert!(v.windows(2).all(|w| w[0] < w[1]));

        assert!(matches!(
            log_spaced(0.0, 1.0, 5),
            Err(DvfsError::InvalidAxis(_))
        ));
        assert!(matches!(
            log_spaced(2.0, 1.0, 5),
            Err(DvfsError::InvalidAxis(_))
        ));
        assert!(matches!(
            log_spaced(1.0, 2.0, 1),
            Err(DvfsError::InvalidAxis(_))
        ));
    }

    #[test]
    fn allocation_rounds_up_and_keeps_headroom() {
        assert_eq!(
            allocate_cores(8.0, 10.0).unwrap(),
            AllocationResult {
                cores: 1,
                utilization: 0.8
            }
        );
        let a = allocate_cores(8.1, 10.0).unwrap();
        assert_eq!(a.cores, 2);
        assert!(close(a.utilization, 0.405, 1e-12));
        assert_eq!(allocate_cores(0.0, 10.0).unwrap().cores, 1);
        assert_eq!(allocate_cores(24.0, 10.0).unwrap().cores, 3);
        assert!(allocate_cores(-1.0, 10.0).is_err());
        assert!(allocate_cores(1.0, 0.0).is_err());
    }

    #[test]
    fn csv_is_row_major_and_carries_infeasible_cells() {
        let p = DvfsModelParams::default();
        let grid = p.sweep_eta(&[0.5, 50.0], &[10.0, 40.0]).unwrap();
        let csv = grid.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "rho,tcomp_over_delta,eta,feasible");
        assert_eq!(lines.len(), 5);

        // (rho=50, ratio=10): 10 < 2*50, infeasible.
        assert!(lines[3].starts_with("5.00000000000e1,1.00000000000e1,NaN,false"));

        // Row-major: rho varies slowest.
        let parse = |line: &str| {
            let f: Vec<&str> = line.split(',').collect();
            (
                f[0].parse::<f64>().unwrap(),
                f[1].parse::<f64>().unwrap(),
                f[2].parse::<f64>().ok(),
                f[3] == "true",
            )
        };
        let (rho0, ratio0, eta0, feas0) = parse(lines[1]);
        let (rho1, ratio1, _, _) = parse(lines[2]);
        assert_eq!((rho0, ratio0), (0.5, 10.0));
        assert_eq!((rho1, ratio1), (0.5, 40.0));
        assert!(feas0);
        assert!(close(
            eta0.unwrap(),
            p.eta(&CyclePattern::new(1.0, 0.5, 0.1)).unwrap(),
            1e-10
        ));
    }
}
