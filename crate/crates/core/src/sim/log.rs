//! Decimated trajectory records produced by the simulation loop.
//!
//! Floats are written with 17 significant digits in scientific notation so
//! every value parses back to the identical bits and CSV output is
//! reproducible across runs of the same configuration.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::bounds::SupNorms;

/// Which gain drove the observer in a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GainMode {
    /// Clock-scheduled gain `alpha(mu(t))`.
    Dynamic,
    /// Fixed gain, used by comparison baselines.
    ConstantBaseline { gain: f64 },
}

/// One decimated record of the closed-loop state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    /// Control input applied at this instant.
    pub u: Vec<f64>,
    /// True disturbance (known to the simulation, not to the observer).
    pub d: Vec<f64>,
    /// Observer estimate `d_hat = M(q) (xi + alpha qd)`.
    pub d_hat: Vec<f64>,
    /// `||d_hat - d||`.
    pub d_tilde_norm: f64,
    /// `||M^{-1}(d_hat - d)||`, the mass-scaled estimation error.
    pub scaled_err_norm: f64,
    pub mu: f64,
    /// Effective gain: `alpha(mu)` or the baseline constant.
    pub gain: f64,
    /// Certified envelope value for `||d_hat - d||` at this instant.
    pub bound: f64,
}

/// Run-level metadata attached to a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub scenario_name: String,
    pub scenario_hash: String,
    pub gain_mode: GainMode,
    pub step: f64,
    pub log_decimation: usize,
    pub horizon: f64,
    /// `||d_hat(t0) - d(t0)||`, the anchor of the envelope.
    pub err0_norm: f64,
    pub wall_clock_s: f64,
    /// Populated when the run stopped before the horizon.
    pub aborted: Option<String>,
}

/// Decimated trajectory plus metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub meta: LogMeta,
    pub samples: Vec<Sample>,
}

impl TrajectoryLog {
    pub fn n_dof(&self) -> usize {
        self.samples.first().map_or(0, |s| s.q.len())
    }

    /// `(t, ||d_hat - d||)` series for envelope checking.
    pub fn error_norm_series(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.d_tilde_norm)).collect()
    }

    /// Sup norms measured from the recorded samples. The disturbance rate is
    /// not observable from decimated samples and is reported as zero; merge
    /// with declared norms before certifying.
    pub fn measured_sup_norms(&self) -> SupNorms {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut out = SupNorms {
            q_m: 0.0,
            qd_m: 0.0,
            d_m: 0.0,
            d_dot_m: 0.0,
        };
        for s in &self.samples {
            out.q_m = out.q_m.max(norm(&s.q));
            out.qd_m = out.qd_m.max(norm(&s.qd));
            out.d_m = out.d_m.max(norm(&s.d));
        }
        out
    }

    /// Largest `||d_hat||` over samples with `t` in `[t_lo, t_hi]`.
    pub fn window_max_estimate_norm(&self, t_lo: f64, t_hi: f64) -> f64 {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.samples
            .iter()
            .filter(|s| s.t >= t_lo && s.t <= t_hi)
            .map(|s| norm(&s.d_hat))
            .fold(0.0, f64::max)
    }

    /// Mean `||d_hat - d||` over samples with `t` in `[t_lo, t_hi]`.
    pub fn window_mean_error(&self, t_lo: f64, t_hi: f64) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for s in &self.samples {
            if s.t >= t_lo && s.t <= t_hi {
                sum += s.d_tilde_norm;
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// Sample closest in time to `t`.
    pub fn sample_nearest(&self, t: f64) -> Option<&Sample> {
        self.samples.iter().min_by(|a, b| {
            (a.t - t)
                .abs()
                .partial_cmp(&(b.t - t).abs())
                .expect("sample times are finite")
        })
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Full trajectory table: one row per sample, vector quantities expanded
    /// per degree of freedom.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.n_dof();
        write!(w, "t")?;
        for prefix in ["q", "qd", "u", "d", "d_hat"] {
            for i in 0..n {
                write!(w, ",{prefix}{i}")?;
            }
        }
        writeln!(w, ",d_tilde_norm,scaled_err_norm,mu,gain,bound")?;
        for s in &self.samples {
            write!(w, "{}", fmt(s.t))?;
            for block in [&s.q, &s.qd, &s.u, &s.d, &s.d_hat] {
                for v in block.iter() {
                    write!(w, ",{}", fmt(*v))?;
                }
            }
            writeln!(
                w,
                ",{},{},{},{},{}",
                fmt(s.d_tilde_norm),
                fmt(s.scaled_err_norm),
                fmt(s.mu),
                fmt(s.gain),
                fmt(s.bound)
            )?;
        }
        Ok(())
    }

    /// Compact table for plotting the error against its envelope:
    /// `t, ||d_hat - d||, bound, gain`.
    pub fn write_envelope_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,d_tilde_norm,bound,gain")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{}",
                fmt(s.t),
                fmt(s.d_tilde_norm),
                fmt(s.bound),
                fmt(s.gain)
            )?;
        }
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    // 17 significant digits: every f64 parses back to the identical bits
    format!("{v:.16e}")
}
