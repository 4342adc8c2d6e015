//! `batch` verb: fan several scenarios out across worker threads, each
//! writing into its own subdirectory of the output root. Scenario names must
//! be unique within a batch so no two workers share a directory.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::run::{execute, exit_code};
use crate::{apply_overrides, default_out_root, load_scenario, BatchArgs, CmdResult, Failure};

pub fn cmd_batch(args: &BatchArgs) -> CmdResult {
    let mut scenarios = Vec::with_capacity(args.scenarios.len());
    for source in &args.scenarios {
        let mut sc = load_scenario(source).map_err(|f| Failure {
            code: f.code,
            message: format!("{source}: {}", f.message),
        })?;
        apply_overrides(&mut sc, &args.overrides)?;
        if let Some(gain) = args.baseline {
            sc.sim.baseline_gain = Some(gain);
            sc.validate()?;
        }
        scenarios.push(sc);
    }

    let mut names = BTreeSet::new();
    for sc in &scenarios {
        if !names.insert(sc.name.clone()) {
            return Err(Failure::validation(format!(
                "duplicate scenario name {:?} in batch; output directories must not be shared",
                sc.name
            )));
        }
    }

    let root = args.out.clone().unwrap_or_else(default_out_root);
    let outcomes: Vec<_> = scenarios
        .par_iter()
        .map(|sc| (sc.name.clone(), execute(sc, &root.join(&sc.name))))
        .collect();

    let mut worst = 0u8;
    let mut succeeded = 0usize;
    for (name, outcome) in &outcomes {
        match outcome {
            Ok(summary) => {
                let code = exit_code(summary);
                worst = worst.max(code);
                let status = match code {
                    0 => {
                        succeeded += 1;
                        "ok"
                    }
                    crate::EXIT_ABORT => "aborted",
                    crate::EXIT_BOUND => "envelope violated",
                    _ => "failed",
                };
                println!(
                    "{name}: {status}  final ||d_tilde|| {:.3e}, {} violations, {:.2} s",
                    summary.estimate.final_error_norm,
                    summary.bound.violations,
                    summary.run.wall_clock_s,
                );
            }
            Err(failure) => {
                worst = worst.max(failure.code);
                println!("{name}: failed ({})", failure.message);
            }
        }
    }
    println!(
        "batch: {succeeded}/{} succeeded -> {}",
        outcomes.len(),
        root.display()
    );
    Ok(worst)
}
