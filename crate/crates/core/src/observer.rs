//! Dynamic-gain disturbance observer.
//!
//! The observer estimates a lumped generalized disturbance `d` acting on an
//! Euler-Lagrange plant from measurable quantities only (`q`, `qd`, the
//! applied input `u`, and time). It integrates an internal state `xi` and
//! forms the scaled estimate `Dhat = xi + alpha(mu(t)) qd`; the physical
//! estimate is `dhat = M(q) Dhat`. With an admissible gain schedule the
//! scaled error `Dtilde = Dhat - M^{-1} d` obeys
//! `dDtilde/dt = -alpha(mu(t)) Dtilde - dD/dt`, which is what the envelope
//! certificates bound.

use nalgebra::{Cholesky, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::gain_schedule::{GainFunction, KfFunction};
use crate::plants::{GeneralizedState, PlantMatrices};

/// How the internal state is seeded at start time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// `xi(t0) = 0`; the initial estimate is `alpha(mu(t0)) qd(t0)` scaled by
    /// the mass matrix, nonzero whenever the plant starts in motion.
    Zero,
    /// `xi(t0) = -alpha(mu(t0)) qd(t0)`, which cancels the velocity term so
    /// the estimate starts exactly at zero.
    CancelVelocityTerm,
}

/// Observer output at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverOutput {
    /// Physical disturbance estimate `dhat = M(q) Dhat`.
    pub d_hat: DVector<f64>,
    /// Scaled estimate `Dhat = xi + alpha(mu(t)) qd`.
    pub scaled: DVector<f64>,
}

/// Gain schedule plus init policy; owns no per-run state.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceObserver {
    pub kf: KfFunction,
    pub gain: GainFunction,
    pub policy: InitPolicy,
}

impl DisturbanceObserver {
    pub fn new(kf: KfFunction, gain: GainFunction, policy: InitPolicy) -> Self {
        Self { kf, gain, policy }
    }

    /// Effective gain `alpha(mu(t))`.
    pub fn gain_value(&self, t: f64) -> Result<f64> {
        self.gain.eval(self.kf.eval(t)?)
    }

    /// Effective gain slope `d/dt alpha(mu(t)) = alpha'(mu(t)) mu'(t)`.
    pub fn gain_slope(&self, t: f64) -> Result<f64> {
        Ok(self.gain.rate(self.kf.eval(t)?)? * self.kf.rate(t)?)
    }

    /// Internal state at the start of a run, per the configured policy.
    pub fn init_xi(&self, state0: &GeneralizedState) -> Result<DVector<f64>> {
        match self.policy {
            InitPolicy::Zero => Ok(DVector::zeros(state0.n_dof())),
            InitPolicy::CancelVelocityTerm => Ok(-self.gain_value(state0.t)? * &state0.qd),
        }
    }

    /// Scaled estimate `Dhat = xi + alpha(mu(t)) qd`.
    pub fn scaled_estimate(
        &self,
        xi: &DVector<f64>,
        state: &GeneralizedState,
    ) -> Result<DVector<f64>> {
        self.check_xi(xi, state.n_dof())?;
        Ok(xi + self.gain_value(state.t)? * &state.qd)
    }

    /// Physical and scaled estimates at `state`.
    pub fn output(
        &self,
        xi: &DVector<f64>,
        state: &GeneralizedState,
        mats: &PlantMatrices,
    ) -> Result<ObserverOutput> {
        let scaled = self.scaled_estimate(xi, state)?;
        Ok(ObserverOutput {
            d_hat: &mats.m * &scaled,
            scaled,
        })
    }

    /// Internal-state derivative
    /// `xi' = -alpha'(mu) mu' qd - alpha(mu) M^{-1}(u - C qd - G) - alpha(mu) Dhat`.
    ///
    /// Only measurable quantities enter: the true disturbance never does.
    pub fn xi_rate(
        &self,
        xi: &DVector<f64>,
        state: &GeneralizedState,
        mats: &PlantMatrices,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let n = state.n_dof();
        self.check_xi(xi, n)?;
        if u.len() != n {
            return Err(Error::dim("xi_rate input u", n, u.len()));
        }
        ensure_finite(u.as_slice(), "xi_rate u")?;
        let gval = self.gain_value(state.t)?;
        let grate = self.gain_slope(state.t)?;

        let mut known = u.clone();
        known.gemv(-1.0, &mats.c, &state.qd, 1.0);
        known -= &mats.g;
        let chol = Cholesky::new(mats.m.clone())
            .ok_or_else(|| Error::Numeric("mass matrix is not positive definite".into()))?;
        chol.solve_mut(&mut known);

        let scaled = xi + gval * &state.qd;
        let mut out = DVector::zeros(n);
        xi_rate_combine(
            out.as_mut_slice(),
            grate,
            gval,
            state.qd.as_slice(),
            known.as_slice(),
            scaled.as_slice(),
        );
        Ok(out)
    }

    /// Scaled-error derivative `-alpha(mu(t)) Dtilde - dD/dt`, where
    /// `D = M^{-1} d`. This is an analysis oracle: unlike the observer it
    /// consumes the true disturbance and its rate.
    pub fn error_rate_oracle(
        &self,
        scaled_error: &DVector<f64>,
        state: &GeneralizedState,
        mats: &PlantMatrices,
        d: &DVector<f64>,
        d_dot: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let n = state.n_dof();
        self.check_xi(scaled_error, n)?;
        let gval = self.gain_value(state.t)?;
        let d_rate = scaled_disturbance_rate(state, mats, d, d_dot)?;
        Ok(-gval * scaled_error - d_rate)
    }

    fn check_xi(&self, xi: &DVector<f64>, n: usize) -> Result<()> {
        if xi.len() != n {
            return Err(Error::dim("observer internal state", n, xi.len()));
        }
        ensure_finite(xi.as_slice(), "observer internal state")
    }
}

/// Rate of the scaled disturbance `D = M(q)^{-1} d` along the flow:
/// `dD/dt = -M^{-1} dM/dt M^{-1} d + M^{-1} ddot`, with `dM/dt = C + C^T`.
pub fn scaled_disturbance_rate(
    state: &GeneralizedState,
    mats: &PlantMatrices,
    d: &DVector<f64>,
    d_dot: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = state.n_dof();
    if d.len() != n {
        return Err(Error::dim("disturbance d", n, d.len()));
    }
    if d_dot.len() != n {
        return Err(Error::dim("disturbance rate", n, d_dot.len()));
    }
    ensure_finite(d.as_slice(), "disturbance d")?;
    ensure_finite(d_dot.as_slice(), "disturbance rate")?;
    let chol = Cholesky::new(mats.m.clone())
        .ok_or_else(|| Error::Numeric("mass matrix is not positive definite".into()))?;
    let mut w = d.clone();
    chol.solve_mut(&mut w); // w = M^{-1} d
    let m_rate = &mats.c + mats.c.transpose();
    let mut out = d_dot - m_rate * w;
    chol.solve_mut(&mut out);
    Ok(out)
}

/// Shared combination `out = -grate qd - gval known - gval scaled`, used by
/// both the standalone derivative above and the simulation inner loop.
pub(crate) fn xi_rate_combine(
    out: &mut [f64],
    grate: f64,
    gval: f64,
    qd: &[f64],
    known: &[f64],
    scaled: &[f64],
) {
    for i in 0..out.len() {
        out[i] = -grate * qd[i] - gval * (known[i] + scaled[i]);
    }
}
