//! Disturbance signals applied to the plant during co-simulation.
//!
//! Signals are evaluated in run-local time `tau = t - t0` and expose closed
//! forms for their sup norms, which feed the declared side of an envelope
//! certificate.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_finite_scalar, Error, Result};

/// Generalized-force disturbance as a function of run-local time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceSignal {
    /// No disturbance.
    Zero,
    /// Constant generalized force.
    Constant { level: Vec<f64> },
    /// `level * sin(omega tau + phase)` componentwise in `level`.
    Sinusoid {
        amplitude: Vec<f64>,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Smooth ramp `level / (1 + exp(-rate (tau - onset)))`; approaches a
    /// step of height `level` with peak slew `||level|| rate / 4`.
    SmoothStep {
        level: Vec<f64>,
        rate: f64,
        onset: f64,
    },
}

impl DisturbanceSignal {
    pub fn validate(&self, n_dof: usize) -> Result<()> {
        let check_vec = |v: &Vec<f64>, name: &'static str| -> Result<()> {
            if v.len() != n_dof {
                return Err(Error::dim(name, n_dof, v.len()));
            }
            ensure_finite(v, name)
        };
        match self {
            DisturbanceSignal::Zero => Ok(()),
            DisturbanceSignal::Constant { level } => check_vec(level, "disturbance level"),
            DisturbanceSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => {
                check_vec(amplitude, "disturbance amplitude")?;
                ensure_finite_scalar(*omega, "disturbance omega")?;
                ensure_finite_scalar(*phase, "disturbance phase")?;
                if *omega <= 0.0 {
                    return Err(Error::invalid(format!(
                        "sinusoid omega must be > 0, got {omega}"
                    )));
                }
                Ok(())
            }
            DisturbanceSignal::SmoothStep { level, rate, onset } => {
                check_vec(level, "disturbance level")?;
                ensure_finite_scalar(*rate, "disturbance rate")?;
                ensure_finite_scalar(*onset, "disturbance onset")?;
                if *rate <= 0.0 {
                    return Err(Error::invalid(format!(
                        "smooth step rate must be > 0, got {rate}"
                    )));
                }
                if *onset < 0.0 {
                    return Err(Error::invalid(format!(
                        "smooth step onset must be >= 0, got {onset}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Writes `d(tau)` into `out` without allocating.
    pub fn eval_into(&self, tau: f64, out: &mut DVector<f64>) {
        match self {
            DisturbanceSignal::Zero => out.fill(0.0),
            DisturbanceSignal::Constant { level } => {
                out.as_mut_slice().copy_from_slice(level);
            }
            DisturbanceSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => {
                let s = (omega * tau + phase).sin();
                for (o, a) in out.iter_mut().zip(amplitude) {
                    *o = a * s;
                }
            }
            DisturbanceSignal::SmoothStep { level, rate, onset } => {
                let s = sigmoid(rate * (tau - onset));
                for (o, l) in out.iter_mut().zip(level) {
                    *o = l * s;
                }
            }
        }
    }

    /// Writes `d'(tau)` into `out` without allocating.
    pub fn rate_into(&self, tau: f64, out: &mut DVector<f64>) {
        match self {
            DisturbanceSignal::Zero | DisturbanceSignal::Constant { .. } => out.fill(0.0),
            DisturbanceSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => {
                let c = omega * (omega * tau + phase).cos();
                for (o, a) in out.iter_mut().zip(amplitude) {
                    *o = a * c;
                }
            }
            DisturbanceSignal::SmoothStep { level, rate, onset } => {
                let s = sigmoid(rate * (tau - onset));
                let slope = rate * s * (1.0 - s);
                for (o, l) in out.iter_mut().zip(level) {
                    *o = l * slope;
                }
            }
        }
    }

    /// Closed-form `(sup ||d||, sup ||d'||)` over all `tau >= 0`.
    pub fn sup_norms(&self) -> (f64, f64) {
        fn norm(v: &[f64]) -> f64 {
            v.iter().map(|x| x * x).sum::<f64>().sqrt()
        }
        match self {
            DisturbanceSignal::Zero => (0.0, 0.0),
            DisturbanceSignal::Constant { level } => (norm(level), 0.0),
            DisturbanceSignal::Sinusoid {
                amplitude, omega, ..
            } => {
                let a = norm(amplitude);
                (a, a * omega)
            }
            DisturbanceSignal::SmoothStep { level, rate, .. } => {
                let l = norm(level);
                (l, l * rate / 4.0)
            }
        }
    }

    /// Number of components, or `None` when the signal fits any dimension.
    pub fn n_dof(&self) -> Option<usize> {
        match self {
            DisturbanceSignal::Zero => None,
            DisturbanceSignal::Constant { level } => Some(level.len()),
            DisturbanceSignal::Sinusoid { amplitude, .. } => Some(amplitude.len()),
            DisturbanceSignal::SmoothStep { level, .. } => Some(level.len()),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    // evaluate in the stable branch to avoid overflow of exp
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
