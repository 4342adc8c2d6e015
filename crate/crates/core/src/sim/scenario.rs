//! Declarative description of one co-simulation run.
//!
//! A scenario couples a plant, a regulator, a disturbance signal, and an
//! observer configuration. Scenarios serialize to TOML; the canonical
//! serialization (field order fixed by the struct definitions) is hashed so
//! artifacts can be traced back to the exact configuration that produced
//! them.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{BoundCertificate, SupNorms};
use crate::error::{ensure_finite, ensure_finite_scalar, Error, Result};
use crate::gain_schedule::{GainFunction, KfFunction, KfKind};
use crate::observer::{DisturbanceObserver, InitPolicy};
use crate::plants::{GeneralizedState, PdController, PlantModel};
use crate::sim::signal::DisturbanceSignal;

/// Plant state at the start of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    #[serde(default)]
    pub t0: f64,
}

impl InitialState {
    pub fn to_state(&self) -> Result<GeneralizedState> {
        GeneralizedState::new(
            DVector::from_column_slice(&self.q),
            DVector::from_column_slice(&self.qd),
            self.t0,
        )
    }
}

/// Observer wiring: how it is seeded and whether its estimate is fed back
/// into the control input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverConfig {
    #[serde(default = "default_policy")]
    pub init_policy: InitPolicy,
    /// When set, the control input is `u_pd - d_hat`.
    #[serde(default)]
    pub feedforward: bool,
}

fn default_policy() -> InitPolicy {
    InitPolicy::CancelVelocityTerm
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self {
            init_policy: default_policy(),
            feedforward: false,
        }
    }
}

/// Integration and logging parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Run length in seconds, from `t0`.
    pub horizon: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    /// Every `log_decimation`-th step is recorded.
    #[serde(default = "default_decimation")]
    pub log_decimation: usize,
    /// Constant gain of the comparison observer, when one is requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_gain: Option<f64>,
    /// Relative slack allowed when checking the error envelope.
    #[serde(default = "default_bound_tolerance")]
    pub bound_tolerance: f64,
}

fn default_step() -> f64 {
    1e-4
}

fn default_decimation() -> usize {
    10
}

fn default_bound_tolerance() -> f64 {
    1e-3
}

/// Complete, serializable run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub plant: PlantModel,
    pub controller: PdController,
    pub initial: InitialState,
    pub disturbance: DisturbanceSignal,
    /// Internal clock `mu` of the observer gain.
    pub clock: KfKind,
    /// Gain function `alpha` applied to the clock value.
    pub gain: GainFunction,
    #[serde(default)]
    pub observer: ObserverConfig,
    pub sim: SimConfig,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| Error::invalid(format!("scenario parse: {e}")))?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Cross-field consistency checks; every loader calls this.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::invalid("scenario name must not be empty"));
        }
        if !self
            .name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(Error::invalid(format!(
                "scenario name {:?} may only contain [A-Za-z0-9-_]",
                self.name
            )));
        }
        self.plant.validate()?;
        let n = self.plant.n_dof();
        self.controller.validate(n)?;
        if self.initial.q.len() != n {
            return Err(Error::dim("initial.q", n, self.initial.q.len()));
        }
        if self.initial.qd.len() != n {
            return Err(Error::dim("initial.qd", n, self.initial.qd.len()));
        }
        ensure_finite(&self.initial.q, "initial.q")?;
        ensure_finite(&self.initial.qd, "initial.qd")?;
        ensure_finite_scalar(self.initial.t0, "initial.t0")?;
        self.disturbance.validate(n)?;
        self.kf_function()?;
        self.gain.validate()?;

        let sim = &self.sim;
        ensure_finite_scalar(sim.horizon, "sim.horizon")?;
        ensure_finite_scalar(sim.step, "sim.step")?;
        if sim.horizon <= 0.0 {
            return Err(Error::invalid(format!(
                "sim.horizon must be > 0, got {}",
                sim.horizon
            )));
        }
        if !(sim.step > 0.0 && sim.step <= sim.horizon) {
            return Err(Error::invalid(format!(
                "sim.step must lie in (0, horizon], got {}",
                sim.step
            )));
        }
        if sim.log_decimation == 0 {
            return Err(Error::invalid("sim.log_decimation must be >= 1"));
        }
        if let Some(l) = sim.baseline_gain {
            ensure_finite_scalar(l, "sim.baseline_gain")?;
            if l <= 0.0 {
                return Err(Error::invalid(format!(
                    "sim.baseline_gain must be > 0, got {l}"
                )));
            }
        }
        ensure_finite_scalar(sim.bound_tolerance, "sim.bound_tolerance")?;
        if sim.bound_tolerance < 0.0 {
            return Err(Error::invalid("sim.bound_tolerance must be >= 0"));
        }
        Ok(())
    }

    /// The clock anchored at this scenario's start time.
    pub fn kf_function(&self) -> Result<KfFunction> {
        KfFunction::new(self.clock.clone(), self.initial.t0)
    }

    pub fn observer(&self) -> Result<DisturbanceObserver> {
        Ok(DisturbanceObserver::new(
            self.kf_function()?,
            self.gain.clone(),
            self.observer.init_policy,
        ))
    }

    /// Declared sup norms: velocity from the plant's operating envelope,
    /// disturbance magnitudes from the signal's closed forms.
    pub fn declared_norms(&self) -> SupNorms {
        let (d_m, d_dot_m) = self.disturbance.sup_norms();
        SupNorms {
            q_m: 0.0,
            qd_m: self.plant.qd_max,
            d_m,
            d_dot_m,
        }
    }

    /// Envelope certificate induced by the declared norms.
    pub fn certificate(&self) -> Result<BoundCertificate> {
        BoundCertificate::new(
            self.plant.property_constants(),
            self.kf_function()?,
            self.gain.clone(),
            &self.declared_norms(),
        )
    }

    /// Deterministic serialization used for hashing and artifact output.
    pub fn canonical_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("scenario serialize: {e}")))
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let text = self.canonical_toml()?;
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        Ok(hex_string(&hasher.finalize()))
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        use std::fmt::Write;
        let _ = write!(s, "{b:02x}");
    }
    s
}
