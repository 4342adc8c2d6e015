//! Desk-scale Euler-Lagrange plant models.
//!
//! Every model exposes its configuration-dependent matrices through the same
//! interface: `M(q) qdd + C(q, qd) qd + G(q) = u + d`, with `M` symmetric
//! positive definite, `C` assembled from Christoffel symbols (so that
//! `dM/dt = C + C^T` holds exactly), and `G` the gravity torque. Each model
//! also declares certified bound constants for the admissible state set,
//! which downstream convergence certificates consume.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Position/velocity pair of a mechanical system at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub t: f64,
}

impl GeneralizedState {
    pub fn new(q: DVector<f64>, qd: DVector<f64>, t: f64) -> Result<Self> {
        if q.len() != qd.len() {
            return Err(Error::dim("GeneralizedState", q.len(), qd.len()));
        }
        if q.is_empty() {
            return Err(Error::invalid("state must have at least one coordinate"));
        }
        ensure_finite(q.as_slice(), "GeneralizedState.q")?;
        ensure_finite(qd.as_slice(), "GeneralizedState.qd")?;
        if !t.is_finite() {
            return Err(Error::non_finite("GeneralizedState.t"));
        }
        Ok(Self { q, qd, t })
    }

    pub fn n_dof(&self) -> usize {
        self.q.len()
    }
}

/// Dynamics matrices evaluated at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantMatrices {
    pub m: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub g: DVector<f64>,
}

impl PlantMatrices {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: DMatrix::zeros(n, n),
            c: DMatrix::zeros(n, n),
            g: DVector::zeros(n),
        }
    }

    pub fn n_dof(&self) -> usize {
        self.g.len()
    }
}

/// Certified constants for the admissible state set:
/// `k_m_lo I <= M(q) <= k_m_hi I`, `||C(q, qd)|| <= k_c ||qd||`,
/// `||G(q)|| <= k_g`.
///
/// `k_c` may be zero for plants whose Coriolis matrix vanishes identically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyConstants {
    pub k_m_lo: f64,
    pub k_m_hi: f64,
    pub k_c: f64,
    pub k_g: f64,
}

impl PropertyConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_m_lo > 0.0 && self.k_m_hi >= self.k_m_lo) {
            return Err(Error::invalid(format!(
                "mass eigenvalue bounds must satisfy 0 < k_m_lo <= k_m_hi, got [{}, {}]",
                self.k_m_lo, self.k_m_hi
            )));
        }
        if self.k_c < 0.0 || self.k_g < 0.0 {
            return Err(Error::invalid("k_c and k_g must be nonnegative"));
        }
        ensure_finite(
            &[self.k_m_lo, self.k_m_hi, self.k_c, self.k_g],
            "PropertyConstants",
        )
    }

    /// True when `other` (for example an empirically sampled set) stays inside
    /// these declared bounds, up to `tol`.
    pub fn encloses(&self, other: &PropertyConstants, tol: f64) -> bool {
        other.k_m_lo >= self.k_m_lo - tol
            && other.k_m_hi <= self.k_m_hi + tol
            && other.k_c <= self.k_c + tol
            && other.k_g <= self.k_g + tol
    }
}

/// Model family and physical parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantKind {
    /// Planar rigid trunk with translational x/z coordinates and pitch.
    /// Constant diagonal mass matrix, no Coriolis coupling, gravity on z.
    FloatingTrunk {
        mass: f64,
        inertia: f64,
        #[serde(default = "default_gravity")]
        gravity: f64,
    },
    /// Planar two-revolute-joint arm with point masses at the link tips,
    /// moving in a vertical plane.
    TwoLink {
        m1: f64,
        m2: f64,
        l1: f64,
        l2: f64,
        #[serde(default = "default_gravity")]
        gravity: f64,
    },
}

fn default_gravity() -> f64 {
    9.81
}

/// A plant model plus the velocity bound of its admissible state set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    #[serde(flatten)]
    pub kind: PlantKind,
    /// Velocity norm bound the certified constants are declared for; also
    /// drives the divergence guard during simulation.
    pub qd_max: f64,
}

impl PlantModel {
    pub fn new(kind: PlantKind, qd_max: f64) -> Result<Self> {
        let model = Self { kind, qd_max };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.qd_max > 0.0 && self.qd_max.is_finite()) {
            return Err(Error::invalid("qd_max must be positive and finite"));
        }
        match self.kind {
            PlantKind::FloatingTrunk {
                mass,
                inertia,
                gravity,
            } => {
                if !(mass > 0.0 && inertia > 0.0) {
                    return Err(Error::invalid("trunk mass and inertia must be positive"));
                }
                ensure_finite(&[mass, inertia, gravity], "FloatingTrunk parameters")?;
            }
            PlantKind::TwoLink {
                m1,
                m2,
                l1,
                l2,
                gravity,
            } => {
                if !(m1 > 0.0 && m2 > 0.0 && l1 > 0.0 && l2 > 0.0) {
                    return Err(Error::invalid("link masses and lengths must be positive"));
                }
                ensure_finite(&[m1, m2, l1, l2, gravity], "TwoLink parameters")?;
                let pc = self.property_constants();
                if pc.k_m_lo < 1e-9 {
                    return Err(Error::invalid(
                        "two-link parameters make the mass matrix nearly singular",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn n_dof(&self) -> usize {
        match self.kind {
            PlantKind::FloatingTrunk { .. } => 3,
            PlantKind::TwoLink { .. } => 2,
        }
    }

    /// Declared bound constants, valid for all `q` and for `||qd|| <= qd_max`.
    pub fn property_constants(&self) -> PropertyConstants {
        match self.kind {
            PlantKind::FloatingTrunk {
                mass,
                inertia,
                gravity,
            } => PropertyConstants {
                k_m_lo: mass.min(inertia),
                k_m_hi: mass.max(inertia),
                k_c: 0.0,
                k_g: mass * gravity.abs(),
            },
            PlantKind::TwoLink {
                m1,
                m2,
                l1,
                l2,
                gravity,
            } => {
                // M depends on q2 only, through cos(q2); sweep its closed-form
                // eigenvalues over cos(q2) in [-1, 1].
                let a = (m1 + m2) * l1 * l1 + m2 * l2 * l2;
                let b = m2 * l1 * l2;
                let d = m2 * l2 * l2;
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                const SWEEP: usize = 4096;
                for i in 0..=SWEEP {
                    let c2 = -1.0 + 2.0 * (i as f64) / (SWEEP as f64);
                    let tr = a + 2.0 * b * c2 + d;
                    let det = d * (a - d) - b * b * c2 * c2;
                    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
                    lo = lo.min(0.5 * (tr - disc));
                    hi = hi.max(0.5 * (tr + disc));
                }
                // ||C||_F <= sqrt(3) |m2 l1 l2 sin q2| ||qd||
                let k_c = 3.0_f64.sqrt() * b;
                // componentwise gravity extremes, combined conservatively
                let g1 = gravity.abs() * ((m1 + m2) * l1 + m2 * l2);
                let g2 = gravity.abs() * m2 * l2;
                PropertyConstants {
                    k_m_lo: lo,
                    k_m_hi: hi,
                    k_c,
                    k_g: g1.hypot(g2),
                }
            }
        }
    }

    /// Writes `M`, `C`, `G` at `state` into `out` without allocating.
    pub fn eval_matrices_into(
        &self,
        state: &GeneralizedState,
        out: &mut PlantMatrices,
    ) -> Result<()> {
        let n = self.n_dof();
        if state.n_dof() != n {
            return Err(Error::dim("eval_matrices state", n, state.n_dof()));
        }
        if out.n_dof() != n {
            return Err(Error::dim("eval_matrices output", n, out.n_dof()));
        }
        ensure_finite(state.q.as_slice(), "eval_matrices q")?;
        ensure_finite(state.qd.as_slice(), "eval_matrices qd")?;

        match self.kind {
            PlantKind::FloatingTrunk {
                mass,
                inertia,
                gravity,
            } => {
                out.m.fill(0.0);
                out.m[(0, 0)] = mass;
                out.m[(1, 1)] = mass;
                out.m[(2, 2)] = inertia;
                out.c.fill(0.0);
                out.g[0] = 0.0;
                out.g[1] = mass * gravity;
                out.g[2] = 0.0;
            }
            PlantKind::TwoLink {
                m1,
                m2,
                l1,
                l2,
                gravity,
            } => {
                let (q1, q2) = (state.q[0], state.q[1]);
                let (qd1, qd2) = (state.qd[0], state.qd[1]);
                let (c2, s2) = (q2.cos(), q2.sin());

                out.m[(0, 0)] = (m1 + m2) * l1 * l1 + m2 * l2 * l2 + 2.0 * m2 * l1 * l2 * c2;
                out.m[(0, 1)] = m2 * l2 * l2 + m2 * l1 * l2 * c2;
                out.m[(1, 0)] = out.m[(0, 1)];
                out.m[(1, 1)] = m2 * l2 * l2;

                // Christoffel-symbol Coriolis matrix; dM/dt = C + C^T exactly.
                let h = -m2 * l1 * l2 * s2;
                out.c[(0, 0)] = h * qd2;
                out.c[(0, 1)] = h * (qd1 + qd2);
                out.c[(1, 0)] = -h * qd1;
                out.c[(1, 1)] = 0.0;

                let c1 = q1.cos();
                let c12 = (q1 + q2).cos();
                out.g[0] = (m1 + m2) * gravity * l1 * c1 + m2 * gravity * l2 * c12;
                out.g[1] = m2 * gravity * l2 * c12;
            }
        }
        Ok(())
    }

    /// Allocating convenience wrapper around [`eval_matrices_into`].
    ///
    /// [`eval_matrices_into`]: PlantModel::eval_matrices_into
    pub fn eval_matrices(&self, state: &GeneralizedState) -> Result<PlantMatrices> {
        let mut out = PlantMatrices::zeros(self.n_dof());
        self.eval_matrices_into(state, &mut out)?;
        Ok(out)
    }

    /// Forward dynamics `qdd = M^{-1}(u + d - C qd - G)`, solved through a
    /// Cholesky factorization rather than an explicit inverse.
    pub fn accel(
        &self,
        state: &GeneralizedState,
        u: &DVector<f64>,
        d: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let n = self.n_dof();
        if u.len() != n {
            return Err(Error::dim("accel input u", n, u.len()));
        }
        if d.len() != n {
            return Err(Error::dim("accel disturbance d", n, d.len()));
        }
        ensure_finite(u.as_slice(), "accel u")?;
        ensure_finite(d.as_slice(), "accel d")?;
        let mats = self.eval_matrices(state)?;
        let mut rhs = u + d;
        rhs.gemv(-1.0, &mats.c, &state.qd, 1.0);
        rhs -= &mats.g;
        let chol = nalgebra::Cholesky::new(mats.m)
            .ok_or_else(|| Error::Numeric("mass matrix is not positive definite".into()))?;
        chol.solve_mut(&mut rhs);
        Ok(rhs)
    }
}

/// Finite-difference check that `dM/dt = C + C^T` along the flow at `state`:
/// returns the max-abs entry of `(M(q + e qd) - M(q - e qd)) / (2e) - (C + C^T)`.
pub fn mass_rate_residual(
    model: &PlantModel,
    state: &GeneralizedState,
    fd_step: f64,
) -> Result<f64> {
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(Error::invalid("fd_step must be positive and finite"));
    }
    let mats = model.eval_matrices(state)?;
    let plus = GeneralizedState::new(&state.q + fd_step * &state.qd, state.qd.clone(), state.t)?;
    let minus = GeneralizedState::new(&state.q - fd_step * &state.qd, state.qd.clone(), state.t)?;
    let m_plus = model.eval_matrices(&plus)?.m;
    let m_minus = model.eval_matrices(&minus)?.m;
    let m_rate_fd = (m_plus - m_minus) / (2.0 * fd_step);
    let residual = m_rate_fd - (&mats.c + mats.c.transpose());
    Ok(residual.amax())
}

/// Samples the bound constants over a batch of states: mass eigenvalue
/// extremes, the largest `||C||/||qd||` ratio, and the largest `||G||`.
/// The result should be enclosed by the model's declared constants.
pub fn empirical_constants(
    model: &PlantModel,
    states: &[GeneralizedState],
) -> Result<PropertyConstants> {
    if states.is_empty() {
        return Err(Error::Empty("state sample batch"));
    }
    let mut k_m_lo = f64::INFINITY;
    let mut k_m_hi = f64::NEG_INFINITY;
    let mut k_c = 0.0_f64;
    let mut k_g = 0.0_f64;
    for state in states {
        let mats = model.eval_matrices(state)?;
        let eig = mats.m.clone().symmetric_eigenvalues();
        k_m_lo = k_m_lo.min(eig.min());
        k_m_hi = k_m_hi.max(eig.max());
        let qd_norm = state.qd.norm();
        if qd_norm > 0.0 {
            // spectral norm of C via its singular values
            let sigma_max = mats.c.singular_values().max();
            k_c = k_c.max(sigma_max / qd_norm);
        }
        k_g = k_g.max(mats.g.norm());
    }
    Ok(PropertyConstants {
        k_m_lo,
        k_m_hi,
        k_c,
        k_g,
    })
}

/// Joint-space PD regulator, optionally with gravity cancellation, used to
/// close the loop around every plant during co-simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdController {
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
    pub setpoint: Vec<f64>,
    #[serde(default = "default_true")]
    pub gravity_comp: bool,
}

fn default_true() -> bool {
    true
}

impl PdController {
    pub fn validate(&self, n_dof: usize) -> Result<()> {
        for (name, v) in [
            ("controller.kp", &self.kp),
            ("controller.kd", &self.kd),
            ("controller.setpoint", &self.setpoint),
        ] {
            if v.len() != n_dof {
                return Err(Error::dim("PdController", n_dof, v.len()));
            }
            ensure_finite(v, name)?;
        }
        Ok(())
    }

    /// Writes `u = kp (q_set - q) - kd qd [+ G] [- d_hat]` into `out`.
    pub fn control_into(
        &self,
        state: &GeneralizedState,
        gravity: &DVector<f64>,
        feedforward: Option<&DVector<f64>>,
        out: &mut DVector<f64>,
    ) {
        for i in 0..out.len() {
            let mut u = self.kp[i] * (self.setpoint[i] - state.q[i]) - self.kd[i] * state.qd[i];
            if self.gravity_comp {
                u += gravity[i];
            }
            if let Some(d_hat) = feedforward {
                u -= d_hat[i];
            }
            out[i] = u;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn trunk() -> PlantModel {
        PlantModel::new(
            PlantKind::FloatingTrunk {
                mass: 12.0,
                inertia: 0.5,
                gravity: 9.81,
            },
            10.0,
        )
        .unwrap()
    }

    fn two_link_unit() -> PlantModel {
        PlantModel::new(
            PlantKind::TwoLink {
                m1: 1.0,
                m2: 1.0,
                l1: 1.0,
                l2: 1.0,
                gravity: 9.81,
            },
            5.0,
        )
        .unwrap()
    }

    fn state2(q1: f64, q2: f64, qd1: f64, qd2: f64) -> GeneralizedState {
        GeneralizedState::new(dvector![q1, q2], dvector![qd1, qd2], 0.0).unwrap()
    }

    #[test]
    fn trunk_matrices_are_constant_diagonal() {
        let model = trunk();
        let st =
            GeneralizedState::new(dvector![0.4, -0.2, 0.1], dvector![1.0, -2.0, 0.5], 3.0).unwrap();
        let mats = model.eval_matrices(&st).unwrap();
        assert_eq!(mats.m, DMatrix::from_diagonal(&dvector![12.0, 12.0, 0.5]));
        assert_eq!(mats.c, DMatrix::zeros(3, 3));
        assert_eq!(mats.g, dvector![0.0, 12.0 * 9.81, 0.0]);
    }

    #[test]
    fn two_link_coriolis_vanishes_at_rest() {
        let model = two_link_unit();
        let mats = model.eval_matrices(&state2(0.7, -1.1, 0.0, 0.0)).unwrap();
        assert_eq!(mats.c, DMatrix::zeros(2, 2));
    }

    // Lagrangian-derivation fixtures: M, C, G computed once by independent
    // symbolic differentiation of the kinetic and potential energies. The
    // constants are pasted at full oracle precision.
    #[test]
    #[allow(clippy::excessive_precision)]
    fn two_link_matches_symbolic_fixture() {
        let model = two_link_unit();
        struct Fixture {
            state: (f64, f64, f64, f64),
            m: [f64; 4],
            c: [f64; 4],
            g: [f64; 2],
        }
        let fixtures = [
            Fixture {
                state: (0.3, -0.7, 1.1, -0.5),
                m: [
                    4.529684374568976852512,
                    1.764842187284488426256,
                    1.764842187284488426256,
                    1.0,
                ],
                c: [
                    -0.3221088436188455268363,
                    0.3865306123426146322036,
                    -0.7086394559614601590399,
                    0.0,
                ],
                g: [27.77931026781269276764, 9.035608351168302662254],
            },
            Fixture {
                state: (1.2, 0.4, -0.3, 0.9),
                m: [
                    4.842121988005770165597,
                    1.921060994002885082799,
                    1.921060994002885082799,
                    1.0,
                ],
                c: [
                    -0.3504765080777854424997,
                    -0.2336510053851902949998,
                    -0.1168255026925951474999,
                    0.0,
                ],
                g: [6.823011829056693189186, -0.2864473137756424040786],
            },
            Fixture {
                state: (-0.8, 1.6, 0.7, 0.2),
                m: [
                    2.941600955397422547588,
                    0.9708004776987112737942,
                    0.9708004776987112737942,
                    1.0,
                ],
                c: [
                    -0.1999147206083010328684,
                    -0.8996162427373546479079,
                    0.6997015221290536150395,
                    0.0,
                ],
                g: [20.50407845608707833770, 6.834692818695692779233],
            },
        ];
        for f in &fixtures {
            let (q1, q2, qd1, qd2) = f.state;
            let mats = model.eval_matrices(&state2(q1, q2, qd1, qd2)).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert_relative_eq!(mats.m[(i, j)], f.m[2 * i + j], max_relative = 1e-12);
                    assert_relative_eq!(
                        mats.c[(i, j)],
                        f.c[2 * i + j],
                        max_relative = 1e-12,
                        epsilon = 1e-15
                    );
                }
                assert_relative_eq!(mats.g[i], f.g[i], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn trunk_accel_under_pure_disturbance() {
        let model = trunk();
        let st =
            GeneralizedState::new(dvector![0.0, 0.31, 0.0], dvector![0.0, 0.0, 0.0], 0.0).unwrap();
        let u = dvector![0.0, 0.0, 0.0];
        let d = dvector![12.0, 0.0, 0.0];
        let qdd = model.accel(&st, &u, &d).unwrap();
        assert_relative_eq!(qdd[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(qdd[1], -9.81, max_relative = 1e-14);
        assert_relative_eq!(qdd[2], 0.0);
    }

    #[test]
    fn trunk_accel_balanced_by_gravity_input() {
        let model = trunk();
        let st =
            GeneralizedState::new(dvector![0.1, 0.2, 0.05], dvector![0.0, 0.0, 0.0], 0.0).unwrap();
        let u = dvector![0.0, 12.0 * 9.81, 0.0];
        let d = dvector![0.0, 0.0, 0.0];
        let qdd = model.accel(&st, &u, &d).unwrap();
        assert!(qdd.norm() < 1e-13);
    }

    // Independent check of the Cholesky solve path: plain Gaussian elimination.
    #[test]
    fn two_link_accel_matches_gaussian_elimination_oracle() {
        let model = two_link_unit();
        let st = state2(0.3, -0.7, 1.1, -0.5);
        let u = dvector![2.0, -1.0];
        let d = dvector![0.5, 0.25];
        let qdd = model.accel(&st, &u, &d).unwrap();

        let mats = model.eval_matrices(&st).unwrap();
        let mut rhs = &u + &d - &mats.c * &st.qd - &mats.g;
        // 2x2 elimination with partial pivoting
        let mut a = mats.m.clone();
        if a[(1, 0)].abs() > a[(0, 0)].abs() {
            a.swap_rows(0, 1);
            rhs.swap_rows(0, 1);
        }
        let f = a[(1, 0)] / a[(0, 0)];
        a[(1, 0)] = 0.0;
        a[(1, 1)] -= f * a[(0, 1)];
        rhs[1] -= f * rhs[0];
        let x1 = rhs[1] / a[(1, 1)];
        let x0 = (rhs[0] - a[(0, 1)] * x1) / a[(0, 0)];
        assert_relative_eq!(qdd[0], x0, max_relative = 1e-10);
        assert_relative_eq!(qdd[1], x1, max_relative = 1e-10);
    }

    #[test]
    fn accel_is_linear_in_forcing() {
        let model = two_link_unit();
        let st = state2(1.2, 0.4, -0.3, 0.9);
        let u1 = dvector![1.0, 2.0];
        let u2 = dvector![-0.5, 0.7];
        let d = dvector![0.3, -0.4];
        let zero = dvector![0.0, 0.0];
        let a1 = model.accel(&st, &u1, &d).unwrap();
        let a2 = model.accel(&st, &u2, &zero).unwrap();
        let a_base = model.accel(&st, &zero, &zero).unwrap();
        let a_sum = model.accel(&st, &(&u1 + &u2), &d).unwrap();
        let recomposed = &a1 + &a2 - &a_base;
        assert!((a_sum - recomposed).amax() < 1e-12);
    }

    #[test]
    fn mass_rate_residual_zero_for_trunk() {
        let model = trunk();
        let st =
            GeneralizedState::new(dvector![0.3, -0.1, 0.2], dvector![1.5, -0.4, 2.0], 0.0).unwrap();
        assert_eq!(mass_rate_residual(&model, &st, 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn mass_rate_residual_small_for_two_link() {
        let model = two_link_unit();
        let st = state2(0.3, -0.7, 1.1, -0.5);
        let r = mass_rate_residual(&model, &st, 1e-5).unwrap();
        assert!(r < 1e-6, "residual {r}");
    }

    #[test]
    fn mass_rate_residual_converges_quadratically() {
        let model = two_link_unit();
        let st = state2(1.2, 0.4, -0.3, 0.9);
        let r_coarse = mass_rate_residual(&model, &st, 1e-3).unwrap();
        let r_fine = mass_rate_residual(&model, &st, 5e-4).unwrap();
        let ratio = r_coarse / r_fine;
        assert!(
            (3.5..=4.5).contains(&ratio),
            "expected ~4x residual reduction, got {ratio}"
        );
    }

    #[test]
    fn corrupted_coriolis_term_is_detected() {
        let model = two_link_unit();
        let st = state2(0.9, 0.8, 1.3, -0.7);
        let fd_step = 1e-5;
        let mats = model.eval_matrices(&st).unwrap();
        let plus = GeneralizedState::new(&st.q + fd_step * &st.qd, st.qd.clone(), st.t).unwrap();
        let minus = GeneralizedState::new(&st.q - fd_step * &st.qd, st.qd.clone(), st.t).unwrap();
        let m_rate_fd = (model.eval_matrices(&plus).unwrap().m
            - model.eval_matrices(&minus).unwrap().m)
            / (2.0 * fd_step);
        let mut c_bad = mats.c.clone();
        c_bad[(0, 1)] = 0.0; // drop one Christoffel contribution
        let residual = (m_rate_fd - (&c_bad + c_bad.transpose())).amax();
        assert!(residual > 1e-3, "corruption went unnoticed: {residual}");
    }

    #[test]
    fn trunk_constants_are_exact() {
        let pc = trunk().property_constants();
        assert_eq!(pc.k_m_lo, 0.5);
        assert_eq!(pc.k_m_hi, 12.0);
        assert_eq!(pc.k_c, 0.0);
        assert_relative_eq!(pc.k_g, 117.72, max_relative = 1e-12);
    }

    #[test]
    fn two_link_unit_mass_bounds_match_closed_form() {
        let pc = two_link_unit().property_constants();
        let sqrt8 = 8.0_f64.sqrt();
        assert_relative_eq!(pc.k_m_lo, 3.0 - sqrt8, max_relative = 1e-9);
        assert_relative_eq!(pc.k_m_hi, 3.0 + sqrt8, max_relative = 1e-9);
        assert_relative_eq!(pc.k_c, 3.0_f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(pc.k_g, 9.81 * 10.0_f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn empirical_constants_stay_within_declared() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let model = two_link_unit();
        let states: Vec<GeneralizedState> = (0..10_000)
            .map(|_| {
                let q = dvector![
                    rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                    rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
                ];
                let qd = dvector![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
                GeneralizedState::new(q, qd, 0.0).unwrap()
            })
            .collect();
        let emp = empirical_constants(&model, &states).unwrap();
        let declared = model.property_constants();
        assert!(
            declared.encloses(&emp, 1e-9),
            "declared {declared:?} does not enclose sampled {emp:?}"
        );
        // the sampled extremes should come close to the declared ones
        assert!(emp.k_m_lo < declared.k_m_lo * 1.2);
        assert!(emp.k_m_hi > declared.k_m_hi * 0.9);
    }

    #[test]
    fn empirical_constants_on_trunk_are_exact() {
        let model = trunk();
        let st =
            GeneralizedState::new(dvector![0.0, 0.31, 0.0], dvector![0.0, 0.0, 0.0], 0.0).unwrap();
        let emp = empirical_constants(&model, &[st]).unwrap();
        assert_eq!(emp.k_m_lo, 0.5);
        assert_eq!(emp.k_m_hi, 12.0);
        assert_eq!(emp.k_c, 0.0); // zero velocity sample contributes no ratio
        assert_relative_eq!(emp.k_g, 117.72, max_relative = 1e-12);
    }

    #[test]
    fn empty_sample_batch_is_rejected() {
        assert!(matches!(
            empirical_constants(&trunk(), &[]),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let model = trunk();
        let st = state2(0.0, 0.0, 0.0, 0.0); // 2-dof state against 3-dof plant
        assert!(matches!(
            model.eval_matrices(&st),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_state_is_rejected() {
        assert!(GeneralizedState::new(dvector![f64::NAN], dvector![0.0], 0.0).is_err());
        let model = trunk();
        let mut st =
            GeneralizedState::new(dvector![0.0, 0.0, 0.0], dvector![0.0, 0.0, 0.0], 0.0).unwrap();
        st.q[1] = f64::INFINITY;
        assert!(matches!(
            model.eval_matrices(&st),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn degenerate_two_link_parameters_are_rejected() {
        // massless first link makes M singular at stretched configurations
        let r = PlantModel::new(
            PlantKind::TwoLink {
                m1: 1e-15,
                m2: 1.0,
                l1: 1.0,
                l2: 1.0,
                gravity: 9.81,
            },
            5.0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn pd_controller_tracks_gravity_and_feedforward() {
        let model = trunk();
        let ctrl = PdController {
            kp: vec![100.0; 3],
            kd: vec![20.0; 3],
            setpoint: vec![0.0, 0.31, 0.0],
            gravity_comp: true,
        };
        let st =
            GeneralizedState::new(dvector![0.0, 0.21, 0.0], dvector![0.0, -0.5, 0.0], 0.0).unwrap();
        let mats = model.eval_matrices(&st).unwrap();
        let mut u = DVector::zeros(3);
        ctrl.control_into(&st, &mats.g, None, &mut u);
        assert_relative_eq!(
            u[1],
            100.0 * 0.1 + 20.0 * 0.5 + 117.72,
            max_relative = 1e-12
        );
        let d_hat = dvector![0.0, -40.0, 0.0];
        ctrl.control_into(&st, &mats.g, Some(&d_hat), &mut u);
        assert_relative_eq!(
            u[1],
            100.0 * 0.1 + 20.0 * 0.5 + 117.72 + 40.0,
            max_relative = 1e-12
        );
    }
}
