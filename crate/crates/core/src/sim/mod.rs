//! Closed-loop co-simulation: scenario descriptions, disturbance signals,
//! the fixed-step integrator, and trajectory logs.

pub mod log;
pub mod runner;
pub mod scenario;
pub mod signal;

pub use log::{GainMode, LogMeta, Sample, TrajectoryLog};
pub use runner::{
    rk4_step, simulate, simulate_baseline, simulate_error_oracle, Rk4Buffers, SimError,
    DIVERGENCE_FACTOR, GAIN_STEP_BUDGET,
};
pub use scenario::{InitialState, ObserverConfig, Scenario, SimConfig};
pub use signal::DisturbanceSignal;
