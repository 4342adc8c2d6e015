//! `validate` verb: certificate checks without simulation.
//!
//! Hard checks (exit 2 on failure): scenario consistency, clock schedule
//! certification over the run horizon, and randomized spot checks of the
//! plant's declared constants. The gain condition is reported but only warns
//! when it fails: it is sufficient for the envelope, not necessary for a
//! run to behave.

use dynobs_core::plants::{empirical_constants, mass_rate_residual, GeneralizedState};
use dynobs_core::sim::GAIN_STEP_BUDGET;
use dynobs_core::{condition_grid, PlantModel};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{
    apply_overrides, clock_family, gain_family, load_scenario, plant_family, CmdResult, Failure,
    ValidateArgs, EXIT_VALIDATION,
};

const SCHEDULE_GRID: usize = 10_000;
const RESIDUAL_LIMIT: f64 = 1e-6;
const ENCLOSURE_TOL: f64 = 1e-9;

pub fn cmd_validate(args: &ValidateArgs) -> CmdResult {
    let mut scenario = load_scenario(&args.scenario)?;
    apply_overrides(&mut scenario, &args.overrides)?;
    if args.samples == 0 {
        return Err(Failure::validation("--samples must be at least 1"));
    }

    let mut hard_ok = true;
    let pc = scenario.plant.property_constants();
    println!(
        "scenario {} ({} dof {})  sha256 {}",
        scenario.name,
        scenario.plant.n_dof(),
        plant_family(&scenario),
        &scenario.hash()?[..12],
    );
    println!(
        "  constants: k_m_lo {}, k_m_hi {}, k_c {}, k_g {}",
        pc.k_m_lo, pc.k_m_hi, pc.k_c, pc.k_g
    );

    let kf = scenario.kf_function()?;
    println!("clock {} (t0 {})", clock_family(&scenario), kf.t0);
    let schedule_ok = match kf.validate(scenario.sim.horizon, SCHEDULE_GRID) {
        Ok(report) => {
            let b_hi = report.b_hi.map_or("inf".to_string(), |b| b.to_string());
            println!(
                "  b_lo {}, b_hi {}, b_tilde {}",
                report.b_lo, b_hi, report.b_tilde
            );
            println!(
                "  schedule over {} s ({} pts): strictly increasing, max growth ratio {:.6} <= b_tilde: OK{}",
                report.horizon,
                report.grid_points,
                report.max_growth_ratio,
                if report.analytic { "" } else { " (constants measured from the table, not certified)" },
            );
            true
        }
        Err(e) => {
            println!("  schedule: FAIL ({e})");
            hard_ok = false;
            false
        }
    };

    println!(
        "gain {} (sigma {})",
        gain_family(&scenario),
        scenario.gain.sigma
    );
    let condition = scenario
        .gain
        .verify_condition(kf.b_tilde(), &condition_grid(&kf))?;
    if condition.holds {
        let scope = match condition.closed_form {
            Some(true) => "closed form",
            _ => "grid only",
        };
        println!(
            "  condition against b_tilde {}: PASS ({scope}; worst margin {:.3e} at s = {:.6})",
            kf.b_tilde(),
            condition.worst_margin,
            condition.witness_s
        );
    } else {
        println!(
            "  condition against b_tilde {}: WARNING fails (worst margin {:.3e} at s = {:.6}); envelope output is advisory",
            kf.b_tilde(),
            condition.worst_margin,
            condition.witness_s
        );
    }

    println!("spot checks (seed {}, {} states)", args.seed, args.samples);
    let states = random_states(&scenario.plant, args.seed, args.samples);
    let sampled = empirical_constants(&scenario.plant, &states)?;
    if pc.encloses(&sampled, ENCLOSURE_TOL) {
        println!(
            "  declared constants enclose sampled constants (mass eigenvalues [{:.6}, {:.6}], k_c {:.6}, k_g {:.6}): OK",
            sampled.k_m_lo, sampled.k_m_hi, sampled.k_c, sampled.k_g
        );
    } else {
        println!(
            "  declared constants FAIL to enclose sampled constants: {sampled:?} outside {pc:?}"
        );
        hard_ok = false;
    }
    let mut worst_residual = 0.0_f64;
    for state in &states {
        worst_residual = worst_residual.max(mass_rate_residual(&scenario.plant, state, 1e-5)?);
    }
    if worst_residual < RESIDUAL_LIMIT {
        println!("  max ||dM/dt - (C + C^T)|| = {worst_residual:.3e} < {RESIDUAL_LIMIT:e}: OK");
    } else {
        println!(
            "  max ||dM/dt - (C + C^T)|| = {worst_residual:.3e} exceeds {RESIDUAL_LIMIT:e}: FAIL"
        );
        hard_ok = false;
    }

    // advisory pre-flight of the integrator's stiffness guard
    if schedule_ok {
        let gain_end = scenario.gain.eval(kf.eval(kf.t0 + scenario.sim.horizon)?)?;
        let budget = gain_end * scenario.sim.step;
        if budget <= GAIN_STEP_BUDGET {
            println!("step budget: gain(horizon) * step = {budget:.3e} <= {GAIN_STEP_BUDGET}: OK");
        } else {
            println!(
                "step budget: WARNING gain(horizon) * step = {budget:.3e} > {GAIN_STEP_BUDGET}; run would refuse this step (use <= {:.3e})",
                GAIN_STEP_BUDGET / gain_end
            );
        }
    }

    if hard_ok {
        println!("validate {}: PASS", scenario.name);
        Ok(0)
    } else {
        println!("validate {}: FAIL", scenario.name);
        Ok(EXIT_VALIDATION)
    }
}

/// Random states inside the admissible set: uniform configurations, joint
/// velocities inside the `qd_max` ball.
fn random_states(plant: &PlantModel, seed: u64, count: usize) -> Vec<GeneralizedState> {
    let n = plant.n_dof();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let qd_comp = 0.99 * plant.qd_max / (n as f64).sqrt();
    (0..count)
        .map(|_| {
            let q = DVector::from_fn(n, |_, _| {
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
            });
            let qd = DVector::from_fn(n, |_, _| rng.gen_range(-qd_comp..qd_comp));
            GeneralizedState::new(q, qd, 0.0).expect("finite random state")
        })
        .collect()
}
