//! Time-varying gain schedules and their convergence certificates.
//!
//! A schedule is the composition `alpha(mu(t))` of a bounded-growth clock
//! `mu` and a monotone gain shape `alpha`. The clock `mu` maps `[t0, inf)`
//! onto `[b_lo, b_hi)`, increases strictly, and obeys the growth budget
//! `dmu/dt <= b_tilde * mu^2`. The shape `alpha` must grow slowly enough that
//! `dalpha/ds <= 1/2 s^-2 b_tilde^-1 sigma alpha(s)^2` for all `s > 0` and
//! some margin factor `0 < sigma < 1`; that inequality is what the
//! disturbance-error envelope certificate rests on.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite_scalar, Error, Result};

/// Acceptance slack for grid evaluations of exact identities.
pub const GRID_RATIO_TOL: f64 = 1e-9;
/// Margins this close to zero still count as satisfying the gain condition.
pub const MARGIN_TOL: f64 = 1e-12;

/// Clock families. All times in a kind are offsets from the schedule's `t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KfKind {
    /// `mu = k1 (t - t0) + k2`, range `[k2, inf)`, growth budget `k1 / k2^2`.
    Linear { k1: f64, k2: f64 },
    /// `mu = exp(k (t - t0))`, range `[1, inf)`, growth budget `k`.
    Exponential { k: f64 },
    /// `mu = k / (1 + k exp(-lambda (t - t0)))`, range `[k/(1+k), k)`,
    /// growth budget `lambda`.
    Logistic { k: f64, lambda: f64 },
    /// User-supplied samples, interpolated linearly. Constants derived from
    /// the table are empirical, not certified.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

/// A clock with its start time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KfFunction {
    pub kind: KfKind,
    pub t0: f64,
}

impl KfFunction {
    pub fn new(kind: KfKind, t0: f64) -> Result<Self> {
        if !t0.is_finite() {
            return Err(Error::non_finite("KfFunction.t0"));
        }
        match &kind {
            KfKind::Linear { k1, k2 } => {
                if !(*k1 > 0.0 && *k2 > 0.0 && k1.is_finite() && k2.is_finite()) {
                    return Err(Error::invalid("linear clock needs k1 > 0 and k2 > 0"));
                }
            }
            KfKind::Exponential { k } => {
                if !(*k > 0.0 && k.is_finite()) {
                    return Err(Error::invalid("exponential clock needs k > 0"));
                }
            }
            KfKind::Logistic { k, lambda } => {
                if !(*k > 0.0 && *lambda > 0.0 && k.is_finite() && lambda.is_finite()) {
                    return Err(Error::invalid("logistic clock needs k > 0 and lambda > 0"));
                }
            }
            KfKind::Tabulated { times, values } => {
                if times.len() != values.len() {
                    return Err(Error::dim("tabulated clock", times.len(), values.len()));
                }
                if times.len() < 2 {
                    return Err(Error::invalid("tabulated clock needs at least two samples"));
                }
                if times[0] != 0.0 {
                    return Err(Error::invalid("tabulated clock must start at offset 0"));
                }
                if !times.windows(2).all(|w| w[1] > w[0]) {
                    return Err(Error::invalid(
                        "tabulated clock times must increase strictly",
                    ));
                }
                crate::error::ensure_finite(times, "tabulated clock times")?;
                crate::error::ensure_finite(values, "tabulated clock values")?;
                if values[0] <= 0.0 {
                    return Err(Error::invalid("tabulated clock must start positive"));
                }
                if values[values.len() - 1] <= values[0] {
                    return Err(Error::invalid(
                        "tabulated clock upper limit must exceed its start value",
                    ));
                }
            }
        }
        Ok(Self { kind, t0 })
    }

    /// Lower range limit; the clock starts exactly here.
    pub fn b_lo(&self) -> f64 {
        match &self.kind {
            KfKind::Linear { k2, .. } => *k2,
            KfKind::Exponential { .. } => 1.0,
            KfKind::Logistic { k, .. } => k / (1.0 + k),
            KfKind::Tabulated { values, .. } => values[0],
        }
    }

    /// Upper range limit, approached but never attained. Infinite for
    /// unbounded clocks.
    pub fn b_hi(&self) -> f64 {
        match &self.kind {
            KfKind::Linear { .. } | KfKind::Exponential { .. } => f64::INFINITY,
            KfKind::Logistic { k, .. } => *k,
            KfKind::Tabulated { values, .. } => values[values.len() - 1],
        }
    }

    /// Growth budget `b_tilde` with `dmu/dt <= b_tilde * mu^2`. Analytic for
    /// the closed-form families, measured from the table otherwise.
    pub fn b_tilde(&self) -> f64 {
        match &self.kind {
            KfKind::Linear { k1, k2 } => k1 / (k2 * k2),
            KfKind::Exponential { k } => *k,
            KfKind::Logistic { lambda, .. } => *lambda,
            KfKind::Tabulated { times, values } => {
                let mut worst = 0.0_f64;
                for w in 0..times.len() - 1 {
                    let slope = (values[w + 1] - values[w]) / (times[w + 1] - times[w]);
                    let v_min = values[w].min(values[w + 1]);
                    if v_min > 0.0 {
                        worst = worst.max(slope / (v_min * v_min));
                    }
                }
                worst
            }
        }
    }

    /// True when the range and growth constants are certified in closed form.
    pub fn analytic_constants(&self) -> bool {
        !matches!(self.kind, KfKind::Tabulated { .. })
    }

    /// Clock value at absolute time `t >= t0`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let tau = self.elapsed(t)?;
        let mu = match &self.kind {
            KfKind::Linear { k1, k2 } => k1 * tau + k2,
            KfKind::Exponential { k } => (k * tau).exp(),
            KfKind::Logistic { k, lambda } => k / (1.0 + k * (-lambda * tau).exp()),
            KfKind::Tabulated { times, values } => {
                let (i, frac) = locate(times, tau)?;
                values[i] + frac * (values[i + 1] - values[i])
            }
        };
        ensure_finite_scalar(mu, "clock value (horizon too long for this family?)")
    }

    /// Analytic time derivative of the clock at `t >= t0`.
    pub fn rate(&self, t: f64) -> Result<f64> {
        let tau = self.elapsed(t)?;
        let rate = match &self.kind {
            KfKind::Linear { k1, .. } => *k1,
            KfKind::Exponential { k } => k * (k * tau).exp(),
            KfKind::Logistic { k, lambda } => {
                // factored form stays positive far into saturation, where
                // lambda * mu * (1 - mu/k) would cancel to zero
                let e = (-lambda * tau).exp();
                lambda * k * k * e / ((1.0 + k * e) * (1.0 + k * e))
            }
            KfKind::Tabulated { times, values } => {
                let (i, _) = locate(times, tau)?;
                (values[i + 1] - values[i]) / (times[i + 1] - times[i])
            }
        };
        ensure_finite_scalar(rate, "clock rate (horizon too long for this family?)")
    }

    fn elapsed(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::non_finite("clock time"));
        }
        if t < self.t0 {
            return Err(Error::invalid(format!(
                "clock evaluated at t = {t} before its start t0 = {}",
                self.t0
            )));
        }
        Ok(t - self.t0)
    }

    /// Grid certification of the clock over `[t0, t0 + horizon]`: starts
    /// exactly at `b_lo`, stays inside `[b_lo, b_hi]`, increases strictly
    /// (up to f64 resolution near saturation), and respects the growth
    /// budget within [`GRID_RATIO_TOL`].
    pub fn validate(&self, horizon: f64, grid_points: usize) -> Result<ScheduleReport> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("validation horizon must be positive"));
        }
        if grid_points < 2 {
            return Err(Error::invalid("validation grid needs at least two points"));
        }
        let b_lo = self.b_lo();
        let b_hi = self.b_hi();
        let b_tilde = self.b_tilde();

        let mu0 = self.eval(self.t0)?;
        if mu0 != b_lo {
            return Err(Error::ValidationFailed {
                clause: format!(
                    "clock must start exactly at its lower limit (got {mu0}, want {b_lo})"
                ),
                witness: self.t0,
            });
        }

        let dt = horizon / (grid_points - 1) as f64;
        let mut prev = mu0;
        let mut max_ratio = 0.0_f64;
        for i in 0..grid_points {
            let t = self.t0 + dt * i as f64;
            let mu = self.eval(t)?;
            let rate = self.rate(t)?;
            if mu < b_lo || mu > b_hi {
                return Err(Error::ValidationFailed {
                    clause: format!("clock value {mu} left its range [{b_lo}, {b_hi})"),
                    witness: t,
                });
            }
            if i > 0 {
                // Strict increase, except where the true increment is no
                // longer representable next to mu (saturation of bounded
                // clocks in f64).
                let resolvable = 8.0 * f64::EPSILON * prev.abs().max(1.0);
                if mu < prev || (mu == prev && !(rate > 0.0 && rate * dt <= resolvable)) {
                    return Err(Error::ValidationFailed {
                        clause: "clock must increase strictly".into(),
                        witness: t,
                    });
                }
            }
            let ratio = rate / (mu * mu);
            if ratio > b_tilde + GRID_RATIO_TOL {
                return Err(Error::ValidationFailed {
                    clause: format!("growth ratio {ratio} exceeds the budget b_tilde = {b_tilde}"),
                    witness: t,
                });
            }
            max_ratio = max_ratio.max(ratio);
            prev = mu;
        }
        Ok(ScheduleReport {
            b_lo,
            b_hi: if b_hi.is_finite() { Some(b_hi) } else { None },
            b_tilde,
            max_growth_ratio: max_ratio,
            mu_t0: mu0,
            mu_horizon: prev,
            analytic: self.analytic_constants(),
            grid_points,
            horizon,
        })
    }
}

/// Locates `tau` in a sorted offset table; returns segment index and the
/// interpolation fraction inside it.
fn locate(times: &[f64], tau: f64) -> Result<(usize, f64)> {
    let last = times.len() - 1;
    if tau > times[last] {
        return Err(Error::invalid(format!(
            "t exceeds the tabulated range (offset {tau} > {})",
            times[last]
        )));
    }
    let i = match times.binary_search_by(|x| x.partial_cmp(&tau).unwrap()) {
        Ok(i) => i.min(last - 1),
        Err(i) => i.saturating_sub(1).min(last - 1),
    };
    Ok((i, (tau - times[i]) / (times[i + 1] - times[i])))
}

/// Certification summary for a clock.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleReport {
    pub b_lo: f64,
    /// `None` means the clock is unbounded above.
    pub b_hi: Option<f64>,
    pub b_tilde: f64,
    pub max_growth_ratio: f64,
    pub mu_t0: f64,
    pub mu_horizon: f64,
    /// False when the constants were measured from a table instead of
    /// derived in closed form.
    pub analytic: bool,
    pub grid_points: usize,
    pub horizon: f64,
}

/// Gain shape families, `alpha: [0, inf) -> [0, inf)`, `alpha(0) = 0`,
/// strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GainKind {
    /// `alpha(s) = c s`
    Linear { c: f64 },
    /// `alpha(s) = k s exp(lambda s)`
    Exp { k: f64, lambda: f64 },
    /// User-supplied samples from `s = 0`, interpolated linearly. Not
    /// certified in closed form.
    Tabulated { s: Vec<f64>, values: Vec<f64> },
}

/// A gain shape with the margin factor `sigma` its admissibility is checked
/// against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainFunction {
    #[serde(flatten)]
    pub kind: GainKind,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

fn default_sigma() -> f64 {
    0.5
}

impl GainFunction {
    pub fn new(kind: GainKind, sigma: f64) -> Result<Self> {
        let gain = Self { kind, sigma };
        gain.validate()?;
        Ok(gain)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::invalid(format!(
                "sigma must lie strictly inside (0, 1), got {}",
                self.sigma
            )));
        }
        match &self.kind {
            GainKind::Linear { c } => {
                if !(c > &0.0 && c.is_finite()) {
                    return Err(Error::invalid("linear gain needs c > 0"));
                }
            }
            GainKind::Exp { k, lambda } => {
                if !(k > &0.0 && lambda > &0.0 && k.is_finite() && lambda.is_finite()) {
                    return Err(Error::invalid("exp gain needs k > 0 and lambda > 0"));
                }
            }
            GainKind::Tabulated { s, values } => {
                if s.len() != values.len() {
                    return Err(Error::dim("tabulated gain", s.len(), values.len()));
                }
                if s.len() < 2 {
                    return Err(Error::invalid("tabulated gain needs at least two samples"));
                }
                if s[0] != 0.0 || values[0] != 0.0 {
                    return Err(Error::invalid("tabulated gain must pass through (0, 0)"));
                }
                if !s.windows(2).all(|w| w[1] > w[0]) || !values.windows(2).all(|w| w[1] > w[0]) {
                    return Err(Error::invalid("tabulated gain must increase strictly"));
                }
                crate::error::ensure_finite(s, "tabulated gain abscissae")?;
                crate::error::ensure_finite(values, "tabulated gain values")?;
            }
        }
        Ok(())
    }

    /// Gain value at clock value `s >= 0`.
    pub fn eval(&self, s: f64) -> Result<f64> {
        check_s(s)?;
        let a = match &self.kind {
            GainKind::Linear { c } => c * s,
            GainKind::Exp { k, lambda } => k * s * (lambda * s).exp(),
            GainKind::Tabulated { s: xs, values } => {
                let (i, frac) = locate(xs, s)?;
                values[i] + frac * (values[i + 1] - values[i])
            }
        };
        ensure_finite_scalar(a, "gain value")
    }

    /// Analytic slope `dalpha/ds` at `s >= 0`.
    pub fn rate(&self, s: f64) -> Result<f64> {
        check_s(s)?;
        let r = match &self.kind {
            GainKind::Linear { c } => *c,
            GainKind::Exp { k, lambda } => k * (lambda * s).exp() * (1.0 + lambda * s),
            GainKind::Tabulated { s: xs, values } => {
                let (i, _) = locate(xs, s)?;
                (values[i + 1] - values[i]) / (xs[i + 1] - xs[i])
            }
        };
        ensure_finite_scalar(r, "gain slope")
    }

    /// Pointwise admissibility margin
    /// `1/2 s^-2 b_tilde^-1 sigma alpha(s)^2 - dalpha/ds`; the gain condition
    /// holds at `s` when this is nonnegative.
    pub fn condition_margin(&self, s: f64, b_tilde: f64) -> Result<f64> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::invalid("margin is defined for finite s > 0"));
        }
        if !(b_tilde > 0.0 && b_tilde.is_finite()) {
            return Err(Error::invalid("b_tilde must be positive"));
        }
        let a = self.eval(s)?;
        let da = self.rate(s)?;
        Ok(0.5 * self.sigma * a * a / (b_tilde * s * s) - da)
    }

    /// Checks the gain condition against a clock growth budget `b_tilde` on a
    /// grid of `s` values. Families with a whole-domain closed-form argument
    /// report it in `closed_form`; for the rest the verdict is grid-only.
    pub fn verify_condition(&self, b_tilde: f64, s_grid: &[f64]) -> Result<ConditionReport> {
        if s_grid.is_empty() {
            return Err(Error::Empty("gain condition grid"));
        }
        let mut worst = f64::INFINITY;
        let mut witness = s_grid[0];
        for &s in s_grid {
            let m = self.condition_margin(s, b_tilde)?;
            if m < worst {
                worst = m;
                witness = s;
            }
        }
        let closed_form = match &self.kind {
            // margin = c (sigma c / (2 b_tilde) - 1), constant in s
            GainKind::Linear { c } => Some(*c >= min_linear_gain(b_tilde, self.sigma)?),
            // for k >= 2 b_tilde / sigma the margin is
            // k e^{lambda s} (e^{lambda s} - 1 - lambda s) >= 0 for all s
            GainKind::Exp { k, .. } => {
                if *k >= min_linear_gain(b_tilde, self.sigma)? {
                    Some(true)
                } else {
                    None
                }
            }
            GainKind::Tabulated { .. } => None,
        };
        let holds = closed_form.unwrap_or(worst >= -MARGIN_TOL);
        Ok(ConditionReport {
            holds,
            worst_margin: worst,
            witness_s: witness,
            closed_form,
            grid_lo: s_grid[0],
            grid_hi: s_grid[s_grid.len() - 1],
            grid_points: s_grid.len(),
        })
    }
}

fn check_s(s: f64) -> Result<()> {
    if !s.is_finite() {
        return Err(Error::non_finite("gain argument"));
    }
    if s < 0.0 {
        return Err(Error::invalid("gain argument must be nonnegative"));
    }
    Ok(())
}

/// Admissibility verdict for a gain shape against a growth budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub holds: bool,
    pub worst_margin: f64,
    pub witness_s: f64,
    /// `Some(verdict)` when the family admits a whole-domain closed-form
    /// check; `None` means the verdict only covers the sampled grid.
    pub closed_form: Option<bool>,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
}

/// Smallest linear-gain slope `c` admissible for a growth budget:
/// `c >= 2 b_tilde / sigma`.
pub fn min_linear_gain(b_tilde: f64, sigma: f64) -> Result<f64> {
    if !(b_tilde > 0.0 && b_tilde.is_finite()) {
        return Err(Error::invalid("b_tilde must be positive"));
    }
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::invalid("sigma must lie strictly inside (0, 1)"));
    }
    Ok(2.0 * b_tilde / sigma)
}

/// Default evaluation grid for the gain condition: log-spaced over the
/// clock's reachable range, capped three decades above its start.
pub fn condition_grid(kf: &KfFunction) -> Vec<f64> {
    const N: usize = 512;
    let lo = kf.b_lo().max(f64::MIN_POSITIVE);
    let hi = kf.b_hi().min(lo * 1e3);
    let ratio = hi / lo;
    (0..N)
        .map(|i| lo * ratio.powf(i as f64 / (N - 1) as f64))
        .collect()
}
