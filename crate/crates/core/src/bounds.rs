//! Convergence certificates for the disturbance estimate.
//!
//! A certificate combines plant property constants, a certified clock/gain
//! pair, and sup norms of the signals involved into a pointwise envelope
//!
//! ```text
//! ||dtilde(t)|| <= ( (k_hi/k_lo) alpha(mu(t0)) ||dtilde(t0)||
//!                    + k_hi sigma_tilde^{-1/2} Drate ) / alpha(mu(t))
//! ```
//!
//! where `Drate` bounds the rate of the mass-scaled disturbance `M^{-1} d`.
//! The envelope is checked sample by sample against a simulated trajectory;
//! a certified configuration admits no violations beyond the stated relative
//! tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite_scalar, Error, Result};
use crate::gain_schedule::{GainFunction, KfFunction};
use crate::plants::PropertyConstants;

/// Complement `1 - sigma` of the gain-condition split; must stay in (0, 1).
pub fn sigma_tilde(sigma: f64) -> Result<f64> {
    ensure_finite_scalar(sigma, "sigma")?;
    if sigma <= 0.0 || sigma >= 1.0 {
        return Err(Error::invalid(format!(
            "sigma must lie strictly inside (0, 1), got {sigma}"
        )));
    }
    Ok(1.0 - sigma)
}

/// Sup norms of the trajectory and disturbance signals over the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupNorms {
    /// Position magnitude bound (reported, not used by the envelope).
    pub q_m: f64,
    /// Velocity magnitude bound.
    pub qd_m: f64,
    /// Disturbance magnitude bound.
    pub d_m: f64,
    /// Disturbance rate magnitude bound.
    pub d_dot_m: f64,
}

impl SupNorms {
    pub fn validate(&self) -> Result<()> {
        for (v, name) in [
            (self.q_m, "q_m"),
            (self.qd_m, "qd_m"),
            (self.d_m, "d_m"),
            (self.d_dot_m, "d_dot_m"),
        ] {
            ensure_finite_scalar(v, name)?;
            if v < 0.0 {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Componentwise maximum, for merging measured and declared norms.
    pub fn merged_with(&self, other: &SupNorms) -> SupNorms {
        SupNorms {
            q_m: self.q_m.max(other.q_m),
            qd_m: self.qd_m.max(other.qd_m),
            d_m: self.d_m.max(other.d_m),
            d_dot_m: self.d_dot_m.max(other.d_dot_m),
        }
    }
}

/// Bound on `||d/dt (M^{-1} d)||`:
/// `2 k_lo^{-2} k_c qd_m d_m + k_lo^{-1} d_dot_m`.
///
/// The first term vanishes for plants with configuration-independent mass
/// (k_c = 0); the whole bound vanishes for constant disturbances on them.
pub fn disturbance_rate_bound(pc: &PropertyConstants, norms: &SupNorms) -> Result<f64> {
    pc.validate()?;
    norms.validate()?;
    let k_lo = pc.k_m_lo;
    Ok(2.0 / (k_lo * k_lo) * pc.k_c * norms.qd_m * norms.d_m + norms.d_dot_m / k_lo)
}

/// One sample where the measured error exceeded the certified envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub t: f64,
    pub measured: f64,
    pub allowed: f64,
}

/// Result of checking a trajectory against an envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub violations: Vec<BoundViolation>,
    /// Worst measured/allowed ratio over the samples (0 when both are zero).
    pub max_ratio: f64,
    pub samples_checked: usize,
    pub tolerance: f64,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Frozen inputs of the envelope; built once per scenario, then evaluated
/// pointwise along the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCertificate {
    pub constants: PropertyConstants,
    pub sigma: f64,
    pub sigma_tilde: f64,
    pub d_rate_bound: f64,
    /// Effective gain at the start of the run, `alpha(mu(t0))`.
    pub gain_t0: f64,
    pub kf: KfFunction,
    pub gain: GainFunction,
}

impl BoundCertificate {
    pub fn new(
        constants: PropertyConstants,
        kf: KfFunction,
        gain: GainFunction,
        norms: &SupNorms,
    ) -> Result<Self> {
        constants.validate()?;
        gain.validate()?;
        let sigma = gain.sigma;
        let st = sigma_tilde(sigma)?;
        let d_rate_bound = disturbance_rate_bound(&constants, norms)?;
        let gain_t0 = gain.eval(kf.eval(kf.t0)?)?;
        Ok(Self {
            constants,
            sigma,
            sigma_tilde: st,
            d_rate_bound,
            gain_t0,
            kf,
            gain,
        })
    }

    /// Envelope value at time `t` for a run that started with error norm
    /// `err0_norm`.
    pub fn envelope(&self, err0_norm: f64, t: f64) -> Result<f64> {
        let gain_now = self.gain.eval(self.kf.eval(t)?)?;
        Ok(self.envelope_with_gain(gain_now, self.gain_t0, err0_norm))
    }

    /// Core formula, parameterized on the current and initial effective
    /// gains. Constant-gain baselines reuse it with `gain_now == gain_t0`.
    pub fn envelope_with_gain(&self, gain_now: f64, gain_t0: f64, err0_norm: f64) -> f64 {
        let k_ratio = self.constants.k_m_hi / self.constants.k_m_lo;
        (k_ratio * gain_t0 * err0_norm
            + self.constants.k_m_hi * self.d_rate_bound / self.sigma_tilde.sqrt())
            / gain_now
    }

    /// Time-independent envelope of a constant-gain observer with gain `l`.
    pub fn constant_gain_envelope(&self, l: f64, err0_norm: f64) -> f64 {
        self.envelope_with_gain(l, l, err0_norm)
    }

    /// Checks `(t, ||dtilde(t)||)` samples against the envelope. A sample
    /// violates when `measured > allowed * (1 + rel_tol)`.
    pub fn check_samples(
        &self,
        samples: &[(f64, f64)],
        err0_norm: f64,
        rel_tol: f64,
    ) -> Result<BoundReport> {
        ensure_finite_scalar(err0_norm, "err0_norm")?;
        ensure_finite_scalar(rel_tol, "rel_tol")?;
        if err0_norm < 0.0 || rel_tol < 0.0 {
            return Err(Error::invalid(
                "err0_norm and rel_tol must be nonnegative".to_string(),
            ));
        }
        let mut violations = Vec::new();
        let mut max_ratio: f64 = 0.0;
        for &(t, measured) in samples {
            let allowed = self.envelope(err0_norm, t)?;
            let ratio = if measured == 0.0 && allowed == 0.0 {
                0.0
            } else if allowed == 0.0 {
                f64::INFINITY
            } else {
                measured / allowed
            };
            max_ratio = max_ratio.max(ratio);
            if measured > allowed * (1.0 + rel_tol) {
                violations.push(BoundViolation {
                    t,
                    measured,
                    allowed,
                });
            }
        }
        Ok(BoundReport {
            violations,
            max_ratio,
            samples_checked: samples.len(),
            tolerance: rel_tol,
        })
    }
}
