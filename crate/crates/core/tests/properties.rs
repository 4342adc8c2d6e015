//! Randomized invariants tying analytic formulas to their numerical
//! counterparts: derivatives against central differences, closed-form
//! admissibility thresholds against grid sweeps, declared sup norms against
//! dense samples, and serialization round trips.

use nalgebra::DVector;
use proptest::prelude::*;

use dynobs_core::gain_schedule::{min_linear_gain, GainFunction, GainKind, KfFunction, KfKind};
use dynobs_core::plants::{empirical_constants, GeneralizedState, PlantKind, PlantModel};
use dynobs_core::sim::DisturbanceSignal;

fn closed_form_clock() -> impl Strategy<Value = KfKind> {
    prop_oneof![
        (0.01f64..5.0, 0.1f64..10.0).prop_map(|(k1, k2)| KfKind::Linear { k1, k2 }),
        (0.05f64..3.0).prop_map(|k| KfKind::Exponential { k }),
        (1.0f64..500.0, 0.1f64..4.0).prop_map(|(k, lambda)| KfKind::Logistic { k, lambda }),
    ]
}

fn tabulated_clock() -> impl Strategy<Value = KfKind> {
    (
        0.1f64..5.0,
        prop::collection::vec((0.05f64..1.0, 0.05f64..2.0), 1..6),
    )
        .prop_map(|(v0, steps)| {
            let mut times = vec![0.0];
            let mut values = vec![v0];
            for (dt, dv) in steps {
                times.push(times.last().unwrap() + dt);
                values.push(values.last().unwrap() + dv);
            }
            KfKind::Tabulated { times, values }
        })
}

fn smooth_gain() -> impl Strategy<Value = GainKind> {
    prop_oneof![
        (0.01f64..200.0).prop_map(|c| GainKind::Linear { c }),
        (0.01f64..100.0, 0.01f64..0.5).prop_map(|(k, lambda)| GainKind::Exp { k, lambda }),
    ]
}

fn tabulated_gain() -> impl Strategy<Value = GainKind> {
    prop::collection::vec((0.05f64..1.0, 0.05f64..2.0), 1..6).prop_map(|steps| {
        let mut s = vec![0.0];
        let mut values = vec![0.0];
        for (ds, dv) in steps {
            s.push(s.last().unwrap() + ds);
            values.push(values.last().unwrap() + dv);
        }
        GainKind::Tabulated { s, values }
    })
}

fn two_link_model() -> impl Strategy<Value = PlantModel> {
    (0.2f64..3.0, 0.2f64..3.0, 0.3f64..2.0, 0.3f64..2.0).prop_map(|(m1, m2, l1, l2)| {
        PlantModel::new(
            PlantKind::TwoLink {
                m1,
                m2,
                l1,
                l2,
                gravity: 9.81,
            },
            5.0,
        )
        .unwrap()
    })
}

fn trunk_model() -> impl Strategy<Value = PlantModel> {
    (0.5f64..20.0, 0.1f64..2.0, 0.0f64..15.0).prop_map(|(mass, inertia, gravity)| {
        PlantModel::new(
            PlantKind::FloatingTrunk {
                mass,
                inertia,
                gravity,
            },
            10.0,
        )
        .unwrap()
    })
}

fn two_link_state() -> impl Strategy<Value = GeneralizedState> {
    (
        prop::collection::vec(-3.1f64..3.1, 2),
        prop::collection::vec(-3.0f64..3.0, 2),
    )
        .prop_map(|(q, qd)| {
            GeneralizedState::new(DVector::from_vec(q), DVector::from_vec(qd), 0.0).unwrap()
        })
}

/// A model of either family together with a batch of admissible states,
/// velocities kept inside the model's `qd_max` ball.
fn model_with_states() -> impl Strategy<Value = (PlantModel, Vec<GeneralizedState>)> {
    prop_oneof![two_link_model(), trunk_model()].prop_flat_map(|model| {
        let n = model.n_dof();
        let states = prop::collection::vec(
            (
                prop::collection::vec(-3.1f64..3.1, n),
                prop::collection::vec(-2.5f64..2.5, n),
            ),
            3..12,
        )
        .prop_map(|pairs| {
            pairs
                .into_iter()
                .map(|(q, qd)| {
                    GeneralizedState::new(DVector::from_vec(q), DVector::from_vec(qd), 0.0).unwrap()
                })
                .collect()
        });
        (Just(model), states)
    })
}

fn signal_any(n: usize) -> impl Strategy<Value = DisturbanceSignal> {
    let comp = prop::collection::vec(-10.0f64..10.0, n);
    prop_oneof![
        Just(DisturbanceSignal::Zero),
        comp.clone()
            .prop_map(|level| DisturbanceSignal::Constant { level }),
        (comp.clone(), 0.1f64..50.0, -3.2f64..3.2).prop_map(|(amplitude, omega, phase)| {
            DisturbanceSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            }
        }),
        (comp, 0.1f64..20.0, 0.0f64..2.0).prop_map(|(level, rate, onset)| {
            DisturbanceSignal::SmoothStep { level, rate, onset }
        }),
    ]
}

proptest! {
    #[test]
    fn clock_rate_matches_central_difference(
        kind in closed_form_clock(),
        t0 in -2.0f64..2.0,
        tau in 0.01f64..1.5,
    ) {
        let kf = KfFunction::new(kind, t0).unwrap();
        let t = t0 + tau;
        let h = 1e-5;
        let fd = (kf.eval(t + h).unwrap() - kf.eval(t - h).unwrap()) / (2.0 * h);
        let rate = kf.rate(t).unwrap();
        prop_assert!(
            (fd - rate).abs() <= 1e-6 * rate.abs().max(1.0),
            "fd {} vs analytic {}", fd, rate
        );
    }

    #[test]
    fn gain_slope_matches_central_difference(
        kind in smooth_gain(),
        sigma in 0.05f64..0.95,
        s in 0.01f64..20.0,
    ) {
        let gain = GainFunction::new(kind, sigma).unwrap();
        let h = 1e-6 * s.max(1.0);
        let fd = (gain.eval(s + h).unwrap() - gain.eval(s - h).unwrap()) / (2.0 * h);
        let rate = gain.rate(s).unwrap();
        prop_assert!(
            (fd - rate).abs() <= 1e-5 * rate.abs().max(1.0),
            "fd {} vs analytic {}", fd, rate
        );
    }

    #[test]
    fn forward_dynamics_is_affine_in_applied_forces(
        model in two_link_model(),
        state in two_link_state(),
        u in prop::collection::vec(-20.0f64..20.0, 2),
        d in prop::collection::vec(-20.0f64..20.0, 2),
    ) {
        let u = DVector::from_vec(u);
        let d = DVector::from_vec(d);
        let zero = DVector::zeros(2);
        let full = model.accel(&state, &u, &d).unwrap();
        let from_parts = model.accel(&state, &u, &zero).unwrap()
            + model.accel(&state, &zero, &d).unwrap()
            - model.accel(&state, &zero, &zero).unwrap();
        let scale = full.norm().max(1.0);
        prop_assert!(
            (&full - &from_parts).norm() <= 1e-7 * scale,
            "superposition residual {} at scale {}", (&full - &from_parts).norm(), scale
        );
    }

    /// For linear gains the admissibility margin is constant in `s`, so the
    /// grid sweep must reproduce the sign of `c - 2 b_tilde / sigma` whenever
    /// the slope sits clearly off the threshold.
    #[test]
    fn linear_gain_grid_margin_sign_matches_threshold(
        b_tilde in 0.05f64..20.0,
        sigma in 0.05f64..0.95,
        above in any::<bool>(),
        offset in 0.05f64..0.9,
    ) {
        let threshold = min_linear_gain(b_tilde, sigma).unwrap();
        let factor = if above { 1.0 + offset } else { 1.0 - offset };
        let gain = GainFunction::new(GainKind::Linear { c: factor * threshold }, sigma).unwrap();
        let grid = [0.3, 1.0, 7.5, 42.0];
        let report = gain.verify_condition(b_tilde, &grid).unwrap();
        prop_assert_eq!(report.closed_form, Some(above));
        prop_assert_eq!(report.holds, above);
        if above {
            prop_assert!(report.worst_margin >= 0.0, "margin {}", report.worst_margin);
        } else {
            prop_assert!(report.worst_margin < 0.0, "margin {}", report.worst_margin);
        }
    }

    /// An exponential gain whose linear coefficient already clears the linear
    /// threshold is admissible everywhere; every grid margin must come out
    /// nonnegative up to rounding.
    #[test]
    fn certified_exp_gain_margins_are_nonnegative_on_grids(
        b_tilde in 0.05f64..10.0,
        sigma in 0.05f64..0.95,
        bump in 0.0f64..4.0,
        lambda in 0.01f64..0.5,
    ) {
        let k = (1.0 + bump) * min_linear_gain(b_tilde, sigma).unwrap();
        let gain = GainFunction::new(GainKind::Exp { k, lambda }, sigma).unwrap();
        let grid: Vec<f64> = (1..=200).map(|i| 0.05 * i as f64).collect();
        let report = gain.verify_condition(b_tilde, &grid).unwrap();
        prop_assert_eq!(report.closed_form, Some(true));
        prop_assert!(report.holds);
        prop_assert!(
            report.worst_margin >= -1e-12 * k.max(1.0),
            "margin {} at s = {}", report.worst_margin, report.witness_s
        );
    }

    #[test]
    fn declared_sup_norms_dominate_dense_samples(
        signal in signal_any(3),
        t_span in 0.5f64..20.0,
    ) {
        let (d_m, d_dot_m) = signal.sup_norms();
        let mut d = DVector::zeros(3);
        let mut d_dot = DVector::zeros(3);
        let samples = 600;
        for i in 0..=samples {
            let tau = t_span * i as f64 / samples as f64;
            signal.eval_into(tau, &mut d);
            signal.rate_into(tau, &mut d_dot);
            prop_assert!(
                d.norm() <= d_m * (1.0 + 1e-12) + 1e-12,
                "||d({})|| = {} exceeds declared {}", tau, d.norm(), d_m
            );
            prop_assert!(
                d_dot.norm() <= d_dot_m * (1.0 + 1e-12) + 1e-12,
                "||d'({})|| = {} exceeds declared {}", tau, d_dot.norm(), d_dot_m
            );
        }
    }

    #[test]
    fn mass_matrix_is_symmetric_with_eigenvalues_inside_declared_bounds(
        model in two_link_model(),
        state in two_link_state(),
    ) {
        let mats = model.eval_matrices(&state).unwrap();
        prop_assert_eq!(mats.m[(0, 1)], mats.m[(1, 0)]);
        let pc = model.property_constants();
        let eig = mats.m.symmetric_eigenvalues();
        let tol = 1e-9 * pc.k_m_hi;
        prop_assert!(
            eig.min() >= pc.k_m_lo - tol,
            "eig min {} below declared {}", eig.min(), pc.k_m_lo
        );
        prop_assert!(
            eig.max() <= pc.k_m_hi + tol,
            "eig max {} above declared {}", eig.max(), pc.k_m_hi
        );
    }

    #[test]
    fn sampled_constants_stay_inside_declared_constants(
        (model, states) in model_with_states(),
    ) {
        let declared = model.property_constants();
        let sampled = empirical_constants(&model, &states).unwrap();
        prop_assert!(
            declared.encloses(&sampled, 1e-9),
            "sampled {:?} escapes declared {:?}", sampled, declared
        );
    }

    #[test]
    fn signal_toml_round_trip(signal in signal_any(2)) {
        let text = toml::to_string(&signal).unwrap();
        let back: DisturbanceSignal = toml::from_str(&text).unwrap();
        prop_assert_eq!(back, signal);
    }

    #[test]
    fn clock_toml_round_trip(
        kind in prop_oneof![closed_form_clock(), tabulated_clock()],
        t0 in -5.0f64..5.0,
    ) {
        let kf = KfFunction::new(kind, t0).unwrap();
        let text = toml::to_string(&kf).unwrap();
        let back: KfFunction = toml::from_str(&text).unwrap();
        prop_assert_eq!(back, kf);
    }

    #[test]
    fn gain_toml_round_trip(
        kind in prop_oneof![smooth_gain(), tabulated_gain()],
        sigma in 0.05f64..0.95,
    ) {
        let gain = GainFunction::new(kind, sigma).unwrap();
        let text = toml::to_string(&gain).unwrap();
        let back: GainFunction = toml::from_str(&text).unwrap();
        prop_assert_eq!(back, gain);
    }
}
