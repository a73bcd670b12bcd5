//! Property tests for the single-atom algebra, the detuning quadrature,
//! the wavevector ledger, and schedule validation totality.

use echomem::bloch::{
    apply_control_rotation, apply_optical_rotation, free_evolve, integrate_bloch, AtomState,
    Detuning, PulseArea,
};
use echomem::ensemble::{detuning_weights, LineShape, MediumConfig, SimGrid};
use echomem::phasematch::{echo_k_cdr, echo_k_dr, echo_k_two_pulse, WaveVectorIndex};
use echomem::protocol::{build_schedule, ProtocolKind, ScheduleParams};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

/// A random physical state: a pure superposition, optionally dephased.
fn arb_state() -> impl Strategy<Value = AtomState> {
    (
        0.0..1.0f64,
        0.0..1.0f64,
        0.0..std::f64::consts::TAU,
        0.0..std::f64::consts::TAU,
    )
        .prop_map(|(u, v, ph1, ph2)| {
            // amplitudes on the 3-simplex
            let a1 = u.sqrt();
            let a2 = ((1.0 - u) * v).sqrt();
            let a3 = ((1.0 - u) * (1.0 - v)).sqrt();
            let c1 = C64::from_polar(a1, 0.0);
            let c2 = C64::from_polar(a2, ph1);
            let c3 = C64::from_polar(a3, ph2);
            AtomState {
                pop1: c1.norm_sqr(),
                pop2: c2.norm_sqr(),
                pop3: c3.norm_sqr(),
                coh12: c1 * c2.conj(),
                coh13: c1 * c3.conj(),
                coh32: c3 * c2.conj(),
            }
        })
}

proptest! {
    /// Trace, population bounds, and positivity survive arbitrary pulse
    /// sequences interleaved with free evolution.
    #[test]
    fn rotations_preserve_physicality(
        state in arb_state(),
        seq in proptest::collection::vec((0..2usize, 0.0..13.0f64, -5.0..5.0f64, 0.0..3.0f64), 1..8),
    ) {
        let mut s = state;
        for (which, theta, delta, dt) in seq {
            s = match which {
                0 => apply_optical_rotation(&s, PulseArea(theta)),
                _ => apply_control_rotation(&s, PulseArea(theta)),
            };
            s = free_evolve(&s, Detuning(delta), dt);
            prop_assert!((s.trace() - 1.0).abs() < 1e-9);
            prop_assert!(s.is_physical(1e-9));
        }
    }

    /// Same-transition rotations compose additively in area.
    #[test]
    fn control_rotations_compose(state in arb_state(), t1 in 0.0..7.0f64, t2 in 0.0..7.0f64) {
        let two = apply_control_rotation(&apply_control_rotation(&state, PulseArea(t1)), PulseArea(t2));
        let one = apply_control_rotation(&state, PulseArea(t1 + t2));
        prop_assert!((two.coh12 - one.coh12).norm() < 1e-9);
        prop_assert!((two.coh13 - one.coh13).norm() < 1e-9);
        prop_assert!((two.coh32 - one.coh32).norm() < 1e-9);
        prop_assert!((two.pop2 - one.pop2).abs() < 1e-9);
    }

    /// 4π-periodicity of the control rotation on arbitrary states.
    #[test]
    fn control_rotation_is_4pi_periodic(state in arb_state(), theta in 0.0..7.0f64) {
        let a = apply_control_rotation(&state, PulseArea(theta));
        let b = apply_control_rotation(&state, PulseArea(theta + 4.0 * std::f64::consts::PI));
        prop_assert!((a.coh12 - b.coh12).norm() < 1e-9);
        prop_assert!((a.coh13 - b.coh13).norm() < 1e-9);
        prop_assert!((a.pop3 - b.pop3).abs() < 1e-9);
    }

    /// Free evolution never changes coherence magnitudes or populations.
    #[test]
    fn free_evolution_is_unitary(state in arb_state(), delta in -10.0..10.0f64, dt in 0.0..50.0f64) {
        let r = free_evolve(&state, Detuning(delta), dt);
        prop_assert!((r.coh12.norm() - state.coh12.norm()).abs() < 1e-12);
        prop_assert!((r.coh32.norm() - state.coh32.norm()).abs() < 1e-12);
        prop_assert_eq!(r.coh13, state.coh13);
        prop_assert_eq!(r.pop1, state.pop1);
    }

    /// Mirror symmetry of the wavevector ledger: negating every input
    /// negates every output.
    #[test]
    fn ledger_mirror_symmetry(r1 in -1..=1i32, r2 in -1..=1i32, c1 in -1..=1i32, c2 in -1..=1i32, d in -1..=1i32) {
        let (r1, r2) = (WaveVectorIndex(r1), WaveVectorIndex(r2));
        let (c1, c2, d) = (WaveVectorIndex(c1), WaveVectorIndex(c2), WaveVectorIndex(d));
        let neg = |k: WaveVectorIndex| WaveVectorIndex(-k.0);
        prop_assert_eq!(echo_k_two_pulse(neg(r1), neg(d)).0, -echo_k_two_pulse(r1, d).0);
        prop_assert_eq!(echo_k_dr(neg(r1), neg(r2), neg(d)).0, -echo_k_dr(r1, r2, d).0);
        prop_assert_eq!(echo_k_cdr(neg(c1), neg(c2), neg(d)).0, -echo_k_cdr(c1, c2, d).0);
    }

    /// Quadrature weights are normalized, symmetric, and non-negative for
    /// any valid grid.
    #[test]
    fn weights_normalized(
        n_half in 1..80usize,
        span in 3.0..6.0f64,
        width in 0.1..4.0f64,
        flat in proptest::bool::ANY,
    ) {
        let n_delta = 2 * n_half + 1;
        let grid = SimGrid { n_z: 2, n_delta, delta_span: span, dt: 1e-3, t_end: 1.0, seed: None };
        let medium = MediumConfig {
            alpha: 1.0,
            length: 1.0,
            inhom_width: width,
            t2_optical: None,
            lineshape: if flat { LineShape::FlatWindow } else { LineShape::Gaussian },
        };
        let w = detuning_weights(&grid, &medium);
        let total: f64 = w.iter().map(|(_, w)| w).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|(_, w)| *w >= 0.0));
        for k in 0..w.len() {
            prop_assert!((w[k].1 - w[w.len() - 1 - k].1).abs() < 1e-12);
        }
    }

    /// Schedule validation is total: any input yields Ok or a specific
    /// error, and built schedules always carry predictions consistent
    /// with their own pulses.
    #[test]
    fn schedule_building_is_total(
        kind_sel in 0..4usize,
        t_d in -5.0..20.0f64,
        dt1 in -2.0..30.0f64,
        dt2 in -2.0..40.0f64,
        dt3 in -2.0..40.0f64,
        dt4 in -2.0..40.0f64,
        d_area in 0.0..0.2f64,
        c2_area in 0.0..12.0f64,
        order_sel in proptest::bool::ANY,
        give_c1 in proptest::bool::ANY,
    ) {
        use echomem::protocol::ControlOrder;
        let kind = match kind_sel {
            0 => ProtocolKind::TwoPulseEcho,
            1 => ProtocolKind::DoubleRephasing,
            2 => ProtocolKind::Cdr,
            _ => ProtocolKind::ControlledSingleRephasing,
        };
        let params = ScheduleParams {
            t_d,
            t_r1: Some(t_d + dt1),
            t_r2: (kind_sel == 1 || kind_sel == 2).then_some(t_d + dt1 + dt2),
            t_c1: give_c1.then_some(t_d + dt1 + dt3 * 0.3),
            t_c2: give_c1.then_some(t_d + dt1 + dt3 * 0.3 + dt4),
            d_area: PulseArea(d_area),
            c2_area: PulseArea(c2_area),
            control_order: if order_sel {
                ControlOrder::AfterSecondRephasing
            } else {
                ControlOrder::BetweenRephasings
            },
            ..ScheduleParams::default()
        };
        match build_schedule(kind, params) {
            Ok(s) => {
                let mut prev = f64::MIN;
                for p in s.pulses() {
                    prop_assert!(p.arrival > prev);
                    prev = p.arrival;
                }
                for p in s.predictions() {
                    prop_assert!(p.time.is_finite());
                }
                // the attached final-echo prediction is exactly the oracle's
                let label = match kind {
                    ProtocolKind::TwoPulseEcho => echomem::protocol::EchoLabel::E1,
                    _ => echomem::protocol::EchoLabel::E2,
                };
                let predicted = s.prediction(label).unwrap().time;
                prop_assert_eq!(predicted, echomem::analytic::echo_time(&s).unwrap());
                if let Some(e2) = s.prediction(echomem::protocol::EchoLabel::E2) {
                    prop_assert!(e2.time > s.last_arrival());
                }
            }
            Err(e) => {
                let _ = e.to_string(); // every error renders a diagnostic
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// The integrator agrees with the impulsive rotations for constant
    /// resonant pulses of arbitrary area.
    #[test]
    fn impulsive_matches_integrated(state in arb_state(), theta in 0.0..13.0f64, ctl in proptest::bool::ANY) {
        let eps = 0.25;
        let duration = theta / (2.0 * eps);
        let steps = ((duration / (0.02 / eps)).ceil() as usize).max(1);
        let dt = duration / steps as f64;
        let mut s = state;
        let (el, ej) = if ctl {
            (C64::new(0.0, 0.0), C64::new(eps, 0.0))
        } else {
            (C64::new(eps, 0.0), C64::new(0.0, 0.0))
        };
        for _ in 0..steps {
            s = integrate_bloch(&s, el, ej, Detuning(0.0), dt).unwrap();
        }
        let imp = if ctl {
            apply_control_rotation(&state, PulseArea(theta))
        } else {
            apply_optical_rotation(&state, PulseArea(theta))
        };
        prop_assert!((s.coh12 - imp.coh12).norm() < 1e-5);
        prop_assert!((s.coh13 - imp.coh13).norm() < 1e-5);
        prop_assert!((s.coh32 - imp.coh32).norm() < 1e-5);
        prop_assert!((s.pop1 - imp.pop1).abs() < 1e-5);
        prop_assert!((s.pop2 - imp.pop2).abs() < 1e-5);
    }
}
