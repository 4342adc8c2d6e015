//! Fixed-step co-simulation of plant, regulator, and observer.
//!
//! The coupled state is `y = [q, qd, xi]` (or `[q, qd, Dtilde]` for the
//! error-dynamics reference integrator) advanced with classical RK4. The
//! inner loop is allocation free: plant matrices, factorization storage, and
//! every intermediate vector live in a reusable workspace, which keeps runs
//! with millions of steps cheap.
//!
//! Two guards protect the explicit integrator. Before the run starts the
//! step must satisfy `gain * step <= 0.1` at the horizon, where the
//! effective gain is largest; during the run the state must stay finite and
//! the velocity below `1000 x qd_max`. Violations abort with a partial log.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::bounds::BoundCertificate;
use crate::error::{Error, Result};
use crate::gain_schedule::{GainFunction, KfFunction};
use crate::observer::{xi_rate_combine, InitPolicy};
use crate::plants::{GeneralizedState, PdController, PlantMatrices, PlantModel};
use crate::sim::log::{GainMode, LogMeta, Sample, TrajectoryLog};
use crate::sim::scenario::Scenario;
use crate::sim::signal::DisturbanceSignal;

/// Largest allowed `gain * step` product for the explicit integrator.
pub const GAIN_STEP_BUDGET: f64 = 0.1;

/// Velocity blow-up threshold, as a multiple of the plant's `qd_max`.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

/// Failure modes of a run.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("scenario setup: {0}")]
    Setup(#[from] Error),
    #[error(
        "step {step:.3e} is too coarse: the effective gain reaches {gain_end:.3e} at the \
         horizon and gain*step must stay below {GAIN_STEP_BUDGET}; use a step at or below \
         {max_step:.3e} or shorten the horizon"
    )]
    StepTooCoarse {
        gain_end: f64,
        step: f64,
        max_step: f64,
    },
    #[error("run aborted at t = {t}: {reason}")]
    Aborted {
        t: f64,
        reason: String,
        /// Everything recorded up to the abort.
        partial: Box<TrajectoryLog>,
    },
}

/// Scratch vectors for one RK4 step over a state of fixed dimension.
#[derive(Debug, Clone)]
pub struct Rk4Buffers {
    k1: DVector<f64>,
    k2: DVector<f64>,
    k3: DVector<f64>,
    k4: DVector<f64>,
    tmp: DVector<f64>,
}

impl Rk4Buffers {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: DVector::zeros(dim),
            k2: DVector::zeros(dim),
            k3: DVector::zeros(dim),
            k4: DVector::zeros(dim),
            tmp: DVector::zeros(dim),
        }
    }
}

/// One classical RK4 step `y <- y + h/6 (k1 + 2 k2 + 2 k3 + k4)` without
/// allocating. `f(t, y, dy)` writes the derivative into `dy`.
pub fn rk4_step<F>(
    f: &mut F,
    t: f64,
    h: f64,
    y: &mut DVector<f64>,
    bufs: &mut Rk4Buffers,
) -> Result<()>
where
    F: FnMut(f64, &DVector<f64>, &mut DVector<f64>) -> Result<()>,
{
    f(t, y, &mut bufs.k1)?;
    bufs.tmp.copy_from(y);
    bufs.tmp.axpy(0.5 * h, &bufs.k1, 1.0);
    f(t + 0.5 * h, &bufs.tmp, &mut bufs.k2)?;
    bufs.tmp.copy_from(y);
    bufs.tmp.axpy(0.5 * h, &bufs.k2, 1.0);
    f(t + 0.5 * h, &bufs.tmp, &mut bufs.k3)?;
    bufs.tmp.copy_from(y);
    bufs.tmp.axpy(h, &bufs.k3, 1.0);
    f(t + h, &bufs.tmp, &mut bufs.k4)?;
    y.axpy(h / 6.0, &bufs.k1, 1.0);
    y.axpy(h / 3.0, &bufs.k2, 1.0);
    y.axpy(h / 3.0, &bufs.k3, 1.0);
    y.axpy(h / 6.0, &bufs.k4, 1.0);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum GainSource {
    Dynamic,
    Constant(f64),
}

/// What the third state block integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ThirdBlock {
    /// Observer internal state `xi`; the estimate is reconstructed from it.
    Xi,
    /// Mass-scaled estimation error, driven by the exact error dynamics.
    ScaledError,
}

struct StepCtx<'a> {
    plant: &'a PlantModel,
    controller: &'a PdController,
    signal: &'a DisturbanceSignal,
    kf: &'a KfFunction,
    gain: &'a GainFunction,
    source: GainSource,
    third: ThirdBlock,
    feedforward: bool,
    t0: f64,
    n: usize,
}

impl StepCtx<'_> {
    /// `(mu, gain value, gain slope)` at time `t`.
    fn gains(&self, t: f64) -> Result<(f64, f64, f64)> {
        let mu = self.kf.eval(t)?;
        match self.source {
            GainSource::Dynamic => {
                let gval = self.gain.eval(mu)?;
                let grate = self.gain.rate(mu)? * self.kf.rate(t)?;
                Ok((mu, gval, grate))
            }
            GainSource::Constant(l) => Ok((mu, l, 0.0)),
        }
    }
}

/// Reusable storage for derivative evaluations of an `n`-dof plant.
struct SimWorkspace {
    state: GeneralizedState,
    mats: PlantMatrices,
    /// Storage cycled through the Cholesky factorization each evaluation.
    chol_storage: DMatrix<f64>,
    d: DVector<f64>,
    d_dot: DVector<f64>,
    dhat_scaled: DVector<f64>,
    dhat_phys: DVector<f64>,
    u: DVector<f64>,
    known: DVector<f64>,
    w: DVector<f64>,
    v: DVector<f64>,
}

impl SimWorkspace {
    fn new(n: usize) -> Self {
        Self {
            state: GeneralizedState {
                q: DVector::zeros(n),
                qd: DVector::zeros(n),
                t: 0.0,
            },
            mats: PlantMatrices::zeros(n),
            chol_storage: DMatrix::zeros(n, n),
            d: DVector::zeros(n),
            d_dot: DVector::zeros(n),
            dhat_scaled: DVector::zeros(n),
            dhat_phys: DVector::zeros(n),
            u: DVector::zeros(n),
            known: DVector::zeros(n),
            w: DVector::zeros(n),
            v: DVector::zeros(n),
        }
    }

    /// Factors the current mass matrix, reusing this workspace's storage.
    /// `self.chol_storage` is rebuilt from the factor afterwards, so no
    /// allocation survives steady state.
    fn factor_mass(&mut self) -> Result<Cholesky<f64, nalgebra::Dyn>> {
        self.chol_storage.copy_from(&self.mats.m);
        let owned = std::mem::replace(&mut self.chol_storage, DMatrix::zeros(0, 0));
        Cholesky::new(owned)
            .ok_or_else(|| Error::Numeric("mass matrix is not positive definite".into()))
    }

    fn restore_storage(&mut self, chol: Cholesky<f64, nalgebra::Dyn>) {
        self.chol_storage = chol.unpack();
    }
}

/// Writes the coupled derivative into `dy`. Layout of `y` and `dy`:
/// `[q, qd, third]` with each block of length `ctx.n`.
fn eval_derivative(
    ctx: &StepCtx<'_>,
    ws: &mut SimWorkspace,
    t: f64,
    y: &DVector<f64>,
    dy: &mut DVector<f64>,
) -> Result<()> {
    let n = ctx.n;
    ws.state.q.copy_from(&y.rows(0, n));
    ws.state.qd.copy_from(&y.rows(n, n));
    ws.state.t = t;
    ctx.plant.eval_matrices_into(&ws.state, &mut ws.mats)?;
    let (_, gval, grate) = ctx.gains(t)?;
    ctx.signal.eval_into(t - ctx.t0, &mut ws.d);

    let feedforward = match ctx.third {
        ThirdBlock::Xi if ctx.feedforward => {
            for i in 0..n {
                ws.dhat_scaled[i] = y[2 * n + i] + gval * ws.state.qd[i];
            }
            ws.dhat_phys.gemv(1.0, &ws.mats.m, &ws.dhat_scaled, 0.0);
            Some(&ws.dhat_phys)
        }
        ThirdBlock::Xi => {
            for i in 0..n {
                ws.dhat_scaled[i] = y[2 * n + i] + gval * ws.state.qd[i];
            }
            None
        }
        ThirdBlock::ScaledError => None,
    };
    ctx.controller
        .control_into(&ws.state, &ws.mats.g, feedforward, &mut ws.u);

    // known = M^{-1}(u - C qd - G), w = M^{-1} d
    ws.known.copy_from(&ws.u);
    ws.known.gemv(-1.0, &ws.mats.c, &ws.state.qd, 1.0);
    ws.known -= &ws.mats.g;
    let chol = ws.factor_mass()?;
    chol.solve_mut(&mut ws.known);
    ws.w.copy_from(&ws.d);
    chol.solve_mut(&mut ws.w);

    for i in 0..n {
        dy[i] = ws.state.qd[i];
        dy[n + i] = ws.known[i] + ws.w[i];
    }
    match ctx.third {
        ThirdBlock::Xi => {
            xi_rate_combine(
                &mut dy.as_mut_slice()[2 * n..3 * n],
                grate,
                gval,
                ws.state.qd.as_slice(),
                ws.known.as_slice(),
                ws.dhat_scaled.as_slice(),
            );
            ws.restore_storage(chol);
        }
        ThirdBlock::ScaledError => {
            // dDtilde/dt = -gain Dtilde - (M^{-1} ddot - M^{-1}(C + C^T) M^{-1} d)
            ctx.signal.rate_into(t - ctx.t0, &mut ws.d_dot);
            ws.v.gemv(1.0, &ws.mats.c, &ws.w, 0.0);
            ws.v.gemv_tr(1.0, &ws.mats.c, &ws.w, 1.0);
            ws.d_dot -= &ws.v;
            chol.solve_mut(&mut ws.d_dot);
            ws.restore_storage(chol);
            for i in 0..n {
                dy[2 * n + i] = -gval * y[2 * n + i] - ws.d_dot[i];
            }
        }
    }
    Ok(())
}

/// Records a sample at `(t, y)`; also fixes the envelope anchor on the first
/// call.
fn capture(
    ctx: &StepCtx<'_>,
    ws: &mut SimWorkspace,
    cert: &BoundCertificate,
    err0: &mut Option<f64>,
    t: f64,
    y: &DVector<f64>,
) -> Result<Sample> {
    let n = ctx.n;
    ws.state.q.copy_from(&y.rows(0, n));
    ws.state.qd.copy_from(&y.rows(n, n));
    ws.state.t = t;
    ctx.plant.eval_matrices_into(&ws.state, &mut ws.mats)?;
    let (mu, gval, _) = ctx.gains(t)?;
    ctx.signal.eval_into(t - ctx.t0, &mut ws.d);

    for i in 0..n {
        ws.dhat_scaled[i] = y[2 * n + i] + gval * ws.state.qd[i];
    }
    ws.dhat_phys.gemv(1.0, &ws.mats.m, &ws.dhat_scaled, 0.0);
    let feedforward = ctx.feedforward.then_some(&ws.dhat_phys);
    ctx.controller
        .control_into(&ws.state, &ws.mats.g, feedforward, &mut ws.u);

    let chol = ws.factor_mass()?;
    ws.w.copy_from(&ws.d);
    chol.solve_mut(&mut ws.w);
    ws.restore_storage(chol);

    let mut d_tilde_sq = 0.0;
    let mut scaled_sq = 0.0;
    for i in 0..n {
        let dt = ws.dhat_phys[i] - ws.d[i];
        d_tilde_sq += dt * dt;
        let sc = ws.dhat_scaled[i] - ws.w[i];
        scaled_sq += sc * sc;
    }
    let d_tilde_norm = d_tilde_sq.sqrt();
    let anchor = *err0.get_or_insert(d_tilde_norm);
    let bound = match ctx.source {
        GainSource::Dynamic => cert.envelope_with_gain(gval, cert.gain_t0, anchor),
        GainSource::Constant(l) => cert.constant_gain_envelope(l, anchor),
    };

    Ok(Sample {
        t,
        q: ws.state.q.as_slice().to_vec(),
        qd: ws.state.qd.as_slice().to_vec(),
        u: ws.u.as_slice().to_vec(),
        d: ws.d.as_slice().to_vec(),
        d_hat: ws.dhat_phys.as_slice().to_vec(),
        d_tilde_norm,
        scaled_err_norm: scaled_sq.sqrt(),
        mu,
        gain: gval,
        bound,
    })
}

fn health(y: &DVector<f64>, n: usize, qd_max: f64) -> Option<String> {
    if !y.iter().all(|v| v.is_finite()) {
        return Some("state contains non-finite values".into());
    }
    let qd_norm = y.rows(n, n).norm();
    let limit = DIVERGENCE_FACTOR * qd_max;
    if qd_norm > limit {
        return Some(format!(
            "velocity norm {qd_norm:.3e} exceeds {limit:.3e} ({DIVERGENCE_FACTOR} x qd_max); \
             the closed loop has diverged"
        ));
    }
    None
}

/// Runs the scenario with the clock-scheduled gain.
pub fn simulate(scenario: &Scenario) -> std::result::Result<TrajectoryLog, SimError> {
    run(scenario, GainSource::Dynamic)
}

/// Runs the scenario with the observer gain pinned to the constant
/// `baseline_gain`; the init policy is honored with that constant.
pub fn simulate_baseline(
    scenario: &Scenario,
    baseline_gain: f64,
) -> std::result::Result<TrajectoryLog, SimError> {
    if !(baseline_gain > 0.0 && baseline_gain.is_finite()) {
        return Err(SimError::Setup(Error::invalid(format!(
            "baseline gain must be positive and finite, got {baseline_gain}"
        ))));
    }
    run(scenario, GainSource::Constant(baseline_gain))
}

fn run(scenario: &Scenario, source: GainSource) -> std::result::Result<TrajectoryLog, SimError> {
    scenario.validate()?;
    let kf = scenario.kf_function()?;
    let cert = scenario.certificate()?;
    let n = scenario.plant.n_dof();
    let t0 = scenario.initial.t0;
    let h = scenario.sim.step;
    let horizon = scenario.sim.horizon;

    let gain_end = match source {
        GainSource::Dynamic => scenario.gain.eval(kf.eval(t0 + horizon)?)?,
        GainSource::Constant(l) => l,
    };
    if gain_end * h > GAIN_STEP_BUDGET {
        return Err(SimError::StepTooCoarse {
            gain_end,
            step: h,
            max_step: GAIN_STEP_BUDGET / gain_end,
        });
    }

    let state0 = scenario.initial.to_state()?;
    let xi0 = initial_xi(scenario, &state0, source)?;
    let mut y = DVector::zeros(3 * n);
    y.rows_mut(0, n).copy_from(&state0.q);
    y.rows_mut(n, n).copy_from(&state0.qd);
    y.rows_mut(2 * n, n).copy_from(&xi0);

    let ctx = StepCtx {
        plant: &scenario.plant,
        controller: &scenario.controller,
        signal: &scenario.disturbance,
        kf: &kf,
        gain: &scenario.gain,
        source,
        third: ThirdBlock::Xi,
        feedforward: scenario.observer.feedforward,
        t0,
        n,
    };
    let mut ws = SimWorkspace::new(n);
    let mut bufs = Rk4Buffers::new(3 * n);
    let n_steps = (horizon / h).round().max(1.0) as u64;
    let decim = scenario.sim.log_decimation as u64;
    let mut samples = Vec::with_capacity((n_steps / decim + 2) as usize);
    let mut err0: Option<f64> = None;
    let mut aborted: Option<(f64, String)> = None;
    let started = Instant::now();

    for i in 0..=n_steps {
        let t = t0 + i as f64 * h;
        if i % decim == 0 || i == n_steps {
            if let Some(reason) = health(&y, n, scenario.plant.qd_max) {
                aborted = Some((t, reason));
                break;
            }
            match capture(&ctx, &mut ws, &cert, &mut err0, t, &y) {
                Ok(sample) => samples.push(sample),
                Err(e) => {
                    aborted = Some((t, e.to_string()));
                    break;
                }
            }
        }
        if i == n_steps {
            break;
        }
        let mut f = |t: f64, y: &DVector<f64>, dy: &mut DVector<f64>| {
            eval_derivative(&ctx, &mut ws, t, y, dy)
        };
        if let Err(e) = rk4_step(&mut f, t, h, &mut y, &mut bufs) {
            aborted = Some((t, e.to_string()));
            break;
        }
    }

    let log = TrajectoryLog {
        meta: LogMeta {
            scenario_name: scenario.name.clone(),
            scenario_hash: scenario.hash()?,
            gain_mode: match source {
                GainSource::Dynamic => GainMode::Dynamic,
                GainSource::Constant(l) => GainMode::ConstantBaseline { gain: l },
            },
            step: h,
            log_decimation: scenario.sim.log_decimation,
            horizon,
            err0_norm: err0.unwrap_or(0.0),
            wall_clock_s: started.elapsed().as_secs_f64(),
            aborted: aborted.as_ref().map(|(_, reason)| reason.clone()),
        },
        samples,
    };
    match aborted {
        Some((t, reason)) => Err(SimError::Aborted {
            t,
            reason,
            partial: Box::new(log),
        }),
        None => Ok(log),
    }
}

fn initial_xi(
    scenario: &Scenario,
    state0: &GeneralizedState,
    source: GainSource,
) -> Result<DVector<f64>> {
    match source {
        GainSource::Dynamic => scenario.observer()?.init_xi(state0),
        GainSource::Constant(l) => Ok(match scenario.observer.init_policy {
            InitPolicy::Zero => DVector::zeros(state0.n_dof()),
            InitPolicy::CancelVelocityTerm => -l * &state0.qd,
        }),
    }
}

/// Integrates the exact error dynamics `dDtilde/dt = -gain Dtilde - dD/dt`
/// along the same closed-loop trajectory and returns `(t, Dtilde)` at the
/// scenario's sampling instants. Only valid without feedforward, where the
/// plant path does not depend on the observer state.
pub fn simulate_error_oracle(
    scenario: &Scenario,
) -> std::result::Result<Vec<(f64, DVector<f64>)>, SimError> {
    scenario.validate()?;
    if scenario.observer.feedforward {
        return Err(SimError::Setup(Error::invalid(
            "the error-dynamics reference requires feedforward = false: with the estimate \
             fed back, the plant path depends on the observer state",
        )));
    }
    let kf = scenario.kf_function()?;
    let n = scenario.plant.n_dof();
    let t0 = scenario.initial.t0;
    let h = scenario.sim.step;
    let horizon = scenario.sim.horizon;
    let gain_end = scenario.gain.eval(kf.eval(t0 + horizon)?)?;
    if gain_end * h > GAIN_STEP_BUDGET {
        return Err(SimError::StepTooCoarse {
            gain_end,
            step: h,
            max_step: GAIN_STEP_BUDGET / gain_end,
        });
    }

    let state0 = scenario.initial.to_state()?;
    let observer = scenario.observer()?;
    // Dtilde(t0) = Dhat(t0) - M^{-1} d(t0)
    let xi0 = observer.init_xi(&state0)?;
    let dhat0 = observer.scaled_estimate(&xi0, &state0)?;
    let mats0 = scenario.plant.eval_matrices(&state0)?;
    let mut d0 = DVector::zeros(n);
    scenario.disturbance.eval_into(0.0, &mut d0);
    let chol = Cholesky::new(mats0.m)
        .ok_or_else(|| Error::Numeric("mass matrix is not positive definite".into()))?;
    let mut w0 = d0;
    chol.solve_mut(&mut w0);
    let err0 = dhat0 - w0;

    let mut y = DVector::zeros(3 * n);
    y.rows_mut(0, n).copy_from(&state0.q);
    y.rows_mut(n, n).copy_from(&state0.qd);
    y.rows_mut(2 * n, n).copy_from(&err0);

    let ctx = StepCtx {
        plant: &scenario.plant,
        controller: &scenario.controller,
        signal: &scenario.disturbance,
        kf: &kf,
        gain: &scenario.gain,
        source: GainSource::Dynamic,
        third: ThirdBlock::ScaledError,
        feedforward: false,
        t0,
        n,
    };
    let mut ws = SimWorkspace::new(n);
    let mut bufs = Rk4Buffers::new(3 * n);
    let n_steps = (horizon / h).round().max(1.0) as u64;
    let decim = scenario.sim.log_decimation as u64;
    let mut out = Vec::with_capacity((n_steps / decim + 2) as usize);

    for i in 0..=n_steps {
        let t = t0 + i as f64 * h;
        if i % decim == 0 || i == n_steps {
            out.push((t, DVector::from(y.rows(2 * n, n))));
        }
        if i == n_steps {
            break;
        }
        let mut f = |t: f64, y: &DVector<f64>, dy: &mut DVector<f64>| {
            eval_derivative(&ctx, &mut ws, t, y, dy)
        };
        rk4_step(&mut f, t, h, &mut y, &mut bufs).map_err(SimError::Setup)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gain_schedule::{GainKind, KfKind};
    use crate::plants::PlantKind;
    use crate::sim::scenario::{InitialState, ObserverConfig, SimConfig};
    use approx::assert_relative_eq;

    fn trunk_scenario() -> Scenario {
        Scenario {
            name: "runner-trunk".into(),
            description: String::new(),
            plant: PlantModel::new(
                PlantKind::FloatingTrunk {
                    mass: 12.0,
                    inertia: 0.5,
                    gravity: 9.81,
                },
                10.0,
            )
            .unwrap(),
            controller: PdController {
                kp: vec![100.0, 100.0, 20.0],
                kd: vec![40.0, 40.0, 8.0],
                setpoint: vec![0.0, 0.3, 0.0],
                gravity_comp: true,
            },
            initial: InitialState {
                q: vec![0.0, 0.3, 0.0],
                qd: vec![0.0, 0.0, 0.0],
                t0: 0.0,
            },
            disturbance: DisturbanceSignal::Constant {
                level: vec![0.0, -40.0, 0.0],
            },
            clock: KfKind::Logistic {
                k: 400.0,
                lambda: 2.0,
            },
            gain: GainFunction::new(GainKind::Linear { c: 1.0 }, 0.5).unwrap(),
            observer: ObserverConfig::default(),
            sim: SimConfig {
                horizon: 1.0,
                step: 1e-3,
                log_decimation: 10,
                baseline_gain: None,
                bound_tolerance: 1e-3,
            },
        }
    }

    #[test]
    fn rk4_shows_fourth_order_convergence_on_scalar_decay() {
        let integrate = |h: f64| -> f64 {
            let mut y = DVector::from_element(1, 1.0);
            let mut bufs = Rk4Buffers::new(1);
            let mut f = |_t: f64, y: &DVector<f64>, dy: &mut DVector<f64>| -> Result<()> {
                dy[0] = -y[0];
                Ok(())
            };
            let steps = (1.0 / h).round() as usize;
            for i in 0..steps {
                rk4_step(&mut f, i as f64 * h, h, &mut y, &mut bufs).unwrap();
            }
            (y[0] - (-1.0f64).exp()).abs()
        };
        let e1 = integrate(0.02);
        let e2 = integrate(0.01);
        let ratio = e1 / e2;
        assert!(
            (12.0..=20.0).contains(&ratio),
            "expected ~16x error reduction per halving, got {ratio}"
        );
    }

    #[test]
    fn equilibrium_stays_put_and_estimate_tracks_constant_load() {
        let mut sc = trunk_scenario();
        sc.disturbance = DisturbanceSignal::Zero;
        let log = simulate(&sc).unwrap();
        let last = log.last().unwrap();
        // gravity-compensated PD at its setpoint with no disturbance: nothing moves
        assert_relative_eq!(last.q[1], 0.3, max_relative = 1e-12);
        assert!(last.qd.iter().all(|v| v.abs() < 1e-12));
        assert!(last.d_hat.iter().all(|v| v.abs() < 1e-10));
        assert!(log.meta.aborted.is_none());
    }

    #[test]
    fn constant_baseline_converges_at_its_own_rate() {
        let mut sc = trunk_scenario();
        sc.sim.horizon = 0.5;
        let log = simulate_baseline(&sc, 50.0).unwrap();
        assert_eq!(
            log.meta.gain_mode,
            GainMode::ConstantBaseline { gain: 50.0 }
        );
        let last = log.last().unwrap();
        // err ~ err0 * exp(-50 * 0.5) plus a transient from the moving plant
        assert_relative_eq!(last.d_hat[1], -40.0, epsilon = 0.05);
        // the envelope column is flat for a constant gain
        let b0 = log.samples[0].bound;
        assert!(log.samples.iter().all(|s| (s.bound - b0).abs() < 1e-12));
    }

    #[test]
    fn step_guard_rejects_coarse_steps_on_growing_gains() {
        let mut sc = trunk_scenario();
        sc.clock = KfKind::Exponential { k: 1.0 };
        sc.gain = GainFunction::new(GainKind::Linear { c: 4.0 }, 0.5).unwrap();
        sc.sim.horizon = 10.0;
        sc.sim.step = 1e-4;
        match simulate(&sc) {
            Err(SimError::StepTooCoarse {
                gain_end, max_step, ..
            }) => {
                assert_relative_eq!(gain_end, 4.0 * 10f64.exp(), max_relative = 1e-12);
                assert_relative_eq!(max_step, 0.1 / (4.0 * 10f64.exp()), max_relative = 1e-12);
            }
            other => panic!("expected StepTooCoarse, got {other:?}"),
        }
    }

    #[test]
    fn clock_overflow_is_reported_as_setup_error() {
        let mut sc = trunk_scenario();
        sc.clock = KfKind::Exponential { k: 10.0 };
        sc.sim.horizon = 100.0;
        match simulate(&sc) {
            Err(SimError::Setup(e)) => {
                let msg = e.to_string();
                assert!(msg.contains("horizon"), "unexpected message: {msg}");
            }
            other => panic!("expected Setup error, got {other:?}"),
        }
    }

    #[test]
    fn divergence_aborts_with_partial_log() {
        let mut sc = trunk_scenario();
        // positive-feedback "P" term destabilizes the loop
        sc.controller.kp = vec![-4000.0, -4000.0, -800.0];
        sc.controller.kd = vec![-100.0, -100.0, -20.0];
        sc.plant.qd_max = 0.5;
        sc.initial.q = vec![0.1, 0.4, 0.05];
        sc.sim.horizon = 2.0;
        match simulate(&sc) {
            Err(SimError::Aborted { t, reason, partial }) => {
                assert!(reason.contains("diverged") || reason.contains("non-finite"));
                assert!(!partial.samples.is_empty());
                assert!(t > 0.0 && t < 2.0);
                assert_eq!(partial.meta.aborted.as_deref(), Some(reason.as_str()));
            }
            other => panic!("expected Aborted, got {other:?}"),
        }
    }

    #[test]
    fn first_sample_reflects_initial_conditions_and_anchor() {
        let sc = trunk_scenario();
        let log = simulate(&sc).unwrap();
        let first = &log.samples[0];
        assert_eq!(first.t, 0.0);
        assert_eq!(first.q, vec![0.0, 0.3, 0.0]);
        // cancel-velocity policy: the estimate starts at zero, so the anchor
        // is the full disturbance magnitude
        assert!(first.d_hat.iter().all(|v| v.abs() < 1e-12));
        assert_relative_eq!(log.meta.err0_norm, 40.0, max_relative = 1e-12);
        assert!(first.bound >= first.d_tilde_norm);
        // constant disturbance on a rigid plant: the envelope holds everywhere
        let cert = sc.certificate().unwrap();
        let report = cert
            .check_samples(&log.error_norm_series(), log.meta.err0_norm, 1e-3)
            .unwrap();
        assert!(report.holds(), "violations: {:?}", report.violations);
    }

    #[test]
    fn sampling_grid_includes_endpoints_and_respects_decimation() {
        let mut sc = trunk_scenario();
        sc.sim.horizon = 0.1;
        sc.sim.step = 1e-3;
        sc.sim.log_decimation = 7;
        let log = simulate(&sc).unwrap();
        assert_eq!(log.samples[0].t, 0.0);
        assert_relative_eq!(log.last().unwrap().t, 0.1, max_relative = 1e-12);
        // 100 steps / 7 -> 15 decimated samples plus the final step
        assert_eq!(log.samples.len(), 16);
    }

    #[test]
    fn runs_are_bit_deterministic() {
        let sc = trunk_scenario();
        let a = simulate(&sc).unwrap();
        let b = simulate(&sc).unwrap();
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        a.write_csv(&mut csv_a).unwrap();
        b.write_csv(&mut csv_b).unwrap();
        assert_eq!(csv_a, csv_b);
    }

    #[test]
    fn error_oracle_matches_observer_error_series() {
        let mut sc = trunk_scenario();
        sc.disturbance = DisturbanceSignal::Sinusoid {
            amplitude: vec![5.0, -8.0, 2.0],
            omega: 3.0,
            phase: 0.7,
        };
        sc.initial.qd = vec![0.2, -0.1, 0.3];
        let log = simulate(&sc).unwrap();
        let oracle = simulate_error_oracle(&sc).unwrap();
        assert_eq!(log.samples.len(), oracle.len());
        let mut worst = 0.0f64;
        for (s, (t, err)) in log.samples.iter().zip(&oracle) {
            assert_eq!(s.t, *t);
            worst = worst.max((s.scaled_err_norm - err.norm()).abs());
        }
        assert!(
            worst < 1e-8,
            "observer error and reference dynamics disagree by {worst:.3e}"
        );
    }

    #[test]
    fn error_oracle_rejects_feedforward_scenarios() {
        let mut sc = trunk_scenario();
        sc.observer.feedforward = true;
        match simulate_error_oracle(&sc) {
            Err(SimError::Setup(e)) => assert!(e.to_string().contains("feedforward")),
            other => panic!("expected Setup error, got {other:?}"),
        }
    }

    #[test]
    fn feedforward_cancels_steady_state_offset() {
        let mut base = trunk_scenario();
        base.sim.horizon = 4.0;
        base.sim.step = 1e-4;
        let without = simulate(&base).unwrap();
        let mut with = base.clone();
        with.observer.feedforward = true;
        let with = simulate(&with).unwrap();
        // -40 N on the z axis against kp = 100: 0.4 m sag without help
        let sag_without = (without.last().unwrap().q[1] - 0.3).abs();
        let sag_with = (with.last().unwrap().q[1] - 0.3).abs();
        assert_relative_eq!(sag_without, 0.4, max_relative = 0.02);
        assert!(
            sag_with < 0.1 * sag_without,
            "feedforward should remove most of the sag: {sag_with} vs {sag_without}"
        );
    }
}
