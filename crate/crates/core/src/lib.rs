//! Dynamic-gain disturbance observation for Euler-Lagrange systems.
//!
//! The library couples four pieces:
//!
//! * [`plants`]: rigid-body models (a floating trunk and a two-link arm)
//!   with their mass/Coriolis/gravity structure and bound constants;
//! * [`gain_schedule`]: monotone internal clocks `mu(t)` and gain functions
//!   `alpha(s)`, with machine-checkable admissibility certificates;
//! * [`observer`]: the estimator `d_hat = M(q)(xi + alpha(mu(t)) qd)` built
//!   from measurable signals only, plus its exact error dynamics;
//! * [`bounds`] and [`sim`]: pointwise error envelopes, and a fixed-step
//!   co-simulation loop that records trajectories and checks the envelopes
//!   along them.
//!
//! [`presets`] ships ready-made scenarios, both desk-scale demonstrations
//! and certified-envelope configurations.

pub mod bounds;
pub mod error;
pub mod gain_schedule;
pub mod observer;
pub mod plants;
pub mod presets;
pub mod sim;

pub use bounds::{
    disturbance_rate_bound, sigma_tilde, BoundCertificate, BoundReport, BoundViolation, SupNorms,
};
pub use error::{Error, Result};
pub use gain_schedule::{
    condition_grid, min_linear_gain, ConditionReport, GainFunction, GainKind, KfFunction, KfKind,
    ScheduleReport,
};
pub use observer::{scaled_disturbance_rate, DisturbanceObserver, InitPolicy, ObserverOutput};
pub use plants::{
    empirical_constants, mass_rate_residual, GeneralizedState, PdController, PlantKind,
    PlantMatrices, PlantModel, PropertyConstants,
};
pub use sim::{
    simulate, simulate_baseline, simulate_error_oracle, DisturbanceSignal, Scenario, SimError,
    TrajectoryLog,
};
