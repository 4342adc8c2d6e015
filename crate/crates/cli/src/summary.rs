//! JSON run report: headline statistics of a trajectory log, the certificate
//! context it was checked under, and an optional constant-gain comparison.

use serde::Serialize;

use dynobs_core::bounds::BoundReport;
use dynobs_core::gain_schedule::ConditionReport;
use dynobs_core::{KfFunction, Scenario, SupNorms, TrajectoryLog};

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub scenario: ScenarioInfo,
    pub run: RunInfo,
    pub clock: ClockInfo,
    pub gain_condition: GainConditionInfo,
    pub estimate: EstimateStats,
    pub norms: NormsInfo,
    pub bound: BoundInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineSummary>,
}

/// The envelope is certified under the declared sup norms; a measured norm
/// escaping its declared counterpart voids the certificate for that run.
#[derive(Debug, Serialize)]
pub struct NormsInfo {
    pub declared: SupNorms,
    pub measured: SupNorms,
    pub declared_hold: bool,
}

impl NormsInfo {
    pub fn new(declared: SupNorms, measured: SupNorms) -> Self {
        // q_m is declared as zero (reporting only) and the disturbance rate
        // is not observable from decimated samples, so neither is compared
        let declared_hold = measured.qd_m <= declared.qd_m && measured.d_m <= declared.d_m;
        Self {
            declared,
            measured,
            declared_hold,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ScenarioInfo {
    pub name: String,
    pub hash: String,
    pub plant: &'static str,
    pub n_dof: usize,
}

#[derive(Debug, Serialize)]
pub struct RunInfo {
    pub horizon: f64,
    pub step: f64,
    pub log_decimation: usize,
    pub samples: usize,
    pub wall_clock_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct ClockInfo {
    pub family: &'static str,
    pub b_lo: f64,
    /// `None` when the clock is unbounded above.
    pub b_hi: Option<f64>,
    pub b_tilde: f64,
    pub analytic_constants: bool,
}

#[derive(Debug, Serialize)]
pub struct GainConditionInfo {
    pub holds: bool,
    pub worst_margin: f64,
    pub witness_s: f64,
    /// Whole-domain closed-form verdict when the family admits one.
    pub closed_form: Option<bool>,
    /// False means the envelope was reported but did not gate the exit code.
    pub enforced: bool,
}

/// Error and estimate statistics of one log.
#[derive(Debug, Serialize)]
pub struct EstimateStats {
    pub err0_norm: f64,
    pub final_error_norm: f64,
    pub max_error_norm: f64,
    /// Mean `||d_hat - d||` over the run's final second.
    pub final_second_mean_error: f64,
    /// Peak `||d_hat||` over the first half second, the startup transient.
    pub startup_peak_estimate_norm: f64,
    pub final_estimate: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct BoundInfo {
    /// True when violations gate the exit code (certified gain condition).
    pub enforced: bool,
    pub violations: usize,
    /// Worst measured/allowed ratio; `None` when it is not finite.
    pub max_ratio: Option<f64>,
    pub samples_checked: usize,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_violation_t: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct BaselineSummary {
    pub gain: f64,
    pub estimate: EstimateStats,
    pub comparison: Comparison,
}

/// Dynamic-gain run versus the constant-gain baseline.
#[derive(Debug, Serialize)]
pub struct Comparison {
    /// dynamic startup peak / baseline startup peak (`None` if the baseline
    /// peak is zero).
    pub startup_peak_ratio: Option<f64>,
    /// |dynamic - baseline| final-second mean error, relative to the larger.
    pub final_second_mean_gap_rel: f64,
}

impl EstimateStats {
    pub fn from_log(log: &TrajectoryLog) -> Self {
        let t0 = log.samples.first().map_or(0.0, |s| s.t);
        let t_end = log.samples.last().map_or(t0, |s| s.t);
        Self {
            err0_norm: log.meta.err0_norm,
            final_error_norm: log.last().map_or(0.0, |s| s.d_tilde_norm),
            max_error_norm: log
                .samples
                .iter()
                .map(|s| s.d_tilde_norm)
                .fold(0.0, f64::max),
            final_second_mean_error: log.window_mean_error((t_end - 1.0).max(t0), t_end),
            startup_peak_estimate_norm: log.window_max_estimate_norm(t0, t0 + 0.5),
            final_estimate: log.last().map_or_else(Vec::new, |s| s.d_hat.clone()),
        }
    }
}

impl Comparison {
    pub fn between(dynamic: &EstimateStats, baseline: &EstimateStats) -> Self {
        let startup_peak_ratio = if baseline.startup_peak_estimate_norm > 0.0 {
            Some(dynamic.startup_peak_estimate_norm / baseline.startup_peak_estimate_norm)
        } else {
            None
        };
        let denom = dynamic
            .final_second_mean_error
            .max(baseline.final_second_mean_error);
        let final_second_mean_gap_rel = if denom > 0.0 {
            (dynamic.final_second_mean_error - baseline.final_second_mean_error).abs() / denom
        } else {
            0.0
        };
        Self {
            startup_peak_ratio,
            final_second_mean_gap_rel,
        }
    }
}

impl ClockInfo {
    pub fn from_kf(family: &'static str, kf: &KfFunction) -> Self {
        let b_hi = kf.b_hi();
        Self {
            family,
            b_lo: kf.b_lo(),
            b_hi: b_hi.is_finite().then_some(b_hi),
            b_tilde: kf.b_tilde(),
            analytic_constants: kf.analytic_constants(),
        }
    }
}

impl GainConditionInfo {
    pub fn from_report(report: &ConditionReport) -> Self {
        Self {
            holds: report.holds,
            worst_margin: report.worst_margin,
            witness_s: report.witness_s,
            closed_form: report.closed_form,
            enforced: report.holds,
        }
    }
}

impl BoundInfo {
    pub fn from_report(report: &BoundReport, enforced: bool) -> Self {
        Self {
            enforced,
            violations: report.violations.len(),
            max_ratio: report.max_ratio.is_finite().then_some(report.max_ratio),
            samples_checked: report.samples_checked,
            tolerance: report.tolerance,
            first_violation_t: report.violations.first().map(|v| v.t),
        }
    }
}

impl ScenarioInfo {
    pub fn new(sc: &Scenario, plant: &'static str) -> Result<Self, dynobs_core::Error> {
        Ok(Self {
            name: sc.name.clone(),
            hash: sc.hash()?,
            plant,
            n_dof: sc.plant.n_dof(),
        })
    }
}

impl RunInfo {
    pub fn from_log(sc: &Scenario, log: &TrajectoryLog) -> Self {
        Self {
            horizon: sc.sim.horizon,
            step: sc.sim.step,
            log_decimation: sc.sim.log_decimation,
            samples: log.samples.len(),
            wall_clock_s: log.meta.wall_clock_s,
            aborted: log.meta.aborted.clone(),
        }
    }
}
