//! `run` verb: simulate a scenario, write its artifacts, and gate the exit
//! code on the certified envelope.
//!
//! Artifacts per run directory:
//!
//! * `scenario.toml`: canonical serialization of the effective scenario
//!   (overrides applied); re-parses to the identical configuration;
//! * `trajectory.csv`: full decimated log;
//! * `plot_error_envelope.csv`: `t, ||d_tilde||, bound, gain` columns;
//! * `summary.json`: headline statistics and certificate context;
//! * `baseline_trajectory.csv`, `plot_baseline_envelope.csv`: present when
//!   a constant-gain comparison ran.
//!
//! The envelope gates the exit code only when the gain condition is
//! certified for the scenario's clock; otherwise the check is advisory,
//! since the envelope's hypothesis is unverified.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use dynobs_core::sim::{simulate, simulate_baseline, SimError};
use dynobs_core::{condition_grid, Scenario, TrajectoryLog};

use crate::summary::{
    BaselineSummary, BoundInfo, ClockInfo, Comparison, EstimateStats, GainConditionInfo, NormsInfo,
    RunInfo, RunSummary, ScenarioInfo,
};
use crate::{
    apply_overrides, clock_family, default_out_root, load_scenario, plant_family, CmdResult,
    Failure, RunArgs, EXIT_ABORT, EXIT_BOUND,
};

pub fn cmd_run(args: &RunArgs) -> CmdResult {
    let mut scenario = load_scenario(&args.scenario)?;
    apply_overrides(&mut scenario, &args.overrides)?;
    if let Some(gain) = args.baseline {
        scenario.sim.baseline_gain = Some(gain);
        scenario.validate()?;
    }
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| default_out_root().join(&scenario.name));
    let summary = execute(&scenario, &out_dir)?;
    let code = exit_code(&summary);
    if !args.quiet {
        print_report(&summary, &out_dir);
    }
    if let Some(reason) = &summary.run.aborted {
        eprintln!("error: run aborted: {reason} (partial artifacts written)");
    }
    Ok(code)
}

/// Exit code a finished run maps to. Aborts win over envelope violations;
/// violations only count when the certificate was enforced.
pub fn exit_code(summary: &RunSummary) -> u8 {
    if summary.run.aborted.is_some() {
        EXIT_ABORT
    } else if summary.bound.enforced && summary.bound.violations > 0 {
        EXIT_BOUND
    } else {
        0
    }
}

/// Simulates `scenario` into `out_dir` and writes every artifact. Also used
/// by `batch`, which owns one directory per scenario.
pub fn execute(scenario: &Scenario, out_dir: &Path) -> Result<RunSummary, Failure> {
    fs::create_dir_all(out_dir).map_err(|e| Failure::io("creating the output directory", e))?;
    // canonical scenario first, so even aborted runs leave a reproducible
    // description of what was attempted
    write_text(out_dir, "scenario.toml", &scenario.canonical_toml()?)?;

    let kf = scenario.kf_function()?;
    let condition = scenario
        .gain
        .verify_condition(kf.b_tilde(), &condition_grid(&kf))?;

    let log = match simulate(scenario) {
        Ok(log) => log,
        Err(SimError::Setup(e)) => return Err(Failure::validation(e)),
        Err(e @ SimError::StepTooCoarse { .. }) => return Err(Failure::abort(e)),
        // the partial log carries the reason in its metadata
        Err(SimError::Aborted { partial, .. }) => *partial,
    };
    write_log(out_dir, "trajectory.csv", "plot_error_envelope.csv", &log)?;

    let cert = scenario.certificate()?;
    let bound_report = cert.check_samples(
        &log.error_norm_series(),
        log.meta.err0_norm,
        scenario.sim.bound_tolerance,
    )?;

    let baseline = match scenario.sim.baseline_gain {
        // a comparison against a partial run would not compare like with like
        Some(gain) if log.meta.aborted.is_none() => Some(run_baseline(scenario, gain, out_dir)?),
        _ => None,
    };

    let norms = NormsInfo::new(scenario.declared_norms(), log.measured_sup_norms());
    if !norms.declared_hold {
        eprintln!(
            "warning: {}: measured sup norms escape the declared ones (qd {:.3e} vs {:.3e}, d {:.3e} vs {:.3e}); the envelope certificate does not cover this run",
            scenario.name,
            norms.measured.qd_m,
            norms.declared.qd_m,
            norms.measured.d_m,
            norms.declared.d_m,
        );
    }

    let dynamic_stats = EstimateStats::from_log(&log);
    let summary = RunSummary {
        scenario: ScenarioInfo::new(scenario, plant_family(scenario))?,
        run: RunInfo::from_log(scenario, &log),
        clock: ClockInfo::from_kf(clock_family(scenario), &kf),
        gain_condition: GainConditionInfo::from_report(&condition),
        norms,
        bound: BoundInfo::from_report(&bound_report, condition.holds),
        baseline: baseline.map(|(gain, stats)| BaselineSummary {
            gain,
            comparison: Comparison::between(&dynamic_stats, &stats),
            estimate: stats,
        }),
        estimate: dynamic_stats,
    };

    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Failure::validation(format!("serializing summary: {e}")))?;
    write_text(out_dir, "summary.json", &format!("{json}\n"))?;
    Ok(summary)
}

fn run_baseline(
    scenario: &Scenario,
    gain: f64,
    out_dir: &Path,
) -> Result<(f64, EstimateStats), Failure> {
    let log = match simulate_baseline(scenario, gain) {
        Ok(log) => log,
        Err(SimError::Setup(e)) => return Err(Failure::validation(e)),
        Err(e @ SimError::StepTooCoarse { .. }) => return Err(Failure::abort(e)),
        Err(e @ SimError::Aborted { .. }) => return Err(Failure::abort(e)),
    };
    write_log(
        out_dir,
        "baseline_trajectory.csv",
        "plot_baseline_envelope.csv",
        &log,
    )?;
    Ok((gain, EstimateStats::from_log(&log)))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    fs::write(dir.join(name), text).map_err(|e| Failure::io(name, e))
}

fn write_log(
    dir: &Path,
    trajectory_name: &str,
    envelope_name: &str,
    log: &TrajectoryLog,
) -> Result<(), Failure> {
    let f =
        fs::File::create(dir.join(trajectory_name)).map_err(|e| Failure::io(trajectory_name, e))?;
    log.write_csv(BufWriter::new(f))
        .map_err(|e| Failure::io(trajectory_name, e))?;
    let f = fs::File::create(dir.join(envelope_name)).map_err(|e| Failure::io(envelope_name, e))?;
    log.write_envelope_csv(BufWriter::new(f))
        .map_err(|e| Failure::io(envelope_name, e))
}

fn print_report(summary: &RunSummary, out_dir: &Path) {
    println!(
        "run {}: {} samples in {:.2} s -> {}",
        summary.scenario.name,
        summary.run.samples,
        summary.run.wall_clock_s,
        out_dir.display()
    );
    println!(
        "  estimate: final ||d_tilde|| {:.3e}, max {:.3e}, startup peak ||d_hat|| {:.3e}",
        summary.estimate.final_error_norm,
        summary.estimate.max_error_norm,
        summary.estimate.startup_peak_estimate_norm,
    );
    let mode = if summary.bound.enforced {
        "certified"
    } else {
        "advisory; gain condition not certified"
    };
    match summary.bound.max_ratio {
        Some(ratio) => println!(
            "  envelope ({mode}): {} violations in {} samples, max ratio {:.3e}",
            summary.bound.violations, summary.bound.samples_checked, ratio
        ),
        None => println!(
            "  envelope ({mode}): {} violations in {} samples (degenerate zero envelope)",
            summary.bound.violations, summary.bound.samples_checked
        ),
    }
    if let Some(b) = &summary.baseline {
        let peak = b
            .comparison
            .startup_peak_ratio
            .map_or("n/a".to_string(), |r| format!("{r:.4}"));
        println!(
            "  baseline L = {}: startup peak ratio {}, final-second mean gap {:.2}%",
            b.gain,
            peak,
            100.0 * b.comparison.final_second_mean_gap_rel
        );
    }
    let status = if summary.run.aborted.is_some() {
        "ABORTED"
    } else if summary.bound.enforced && summary.bound.violations > 0 {
        "ENVELOPE VIOLATED"
    } else {
        "OK"
    };
    println!("run {}: {status}", summary.scenario.name);
}
