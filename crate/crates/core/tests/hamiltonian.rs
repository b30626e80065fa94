use mfg_core::hamiltonian::{discrete_control, eikonal, Control, DiscreteControl, Hamiltonian};
use proptest::prelude::*;

fn vec2() -> impl Strategy<Value = [f64; 2]> {
    [-50.0..50.0f64, -50.0..50.0f64]
}

fn point() -> impl Strategy<Value = [f64; 2]> {
    [0.0..=1.0f64, 0.0..=1.0f64]
}

/// Four compass drifts with position- and time-dependent costs.
fn compass() -> DiscreteControl {
    let dirs = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
    let controls = dirs
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            Control::new(
                move |t, x| [d[0] * (1.0 + x[0]) / 2.0, d[1] * (1.0 - t / 2.0)],
                move |t, x| i as f64 * x[1] + t,
            )
        })
        .collect();
    discrete_control(controls, 1.0, 5).unwrap()
}

fn norm(p: [f64; 2]) -> f64 {
    p[0].hypot(p[1])
}

fn check(h: &dyn Hamiltonian, t: f64, x: [f64; 2], p: [f64; 2], q: [f64; 2]) -> Result<(), TestCaseError> {
    let z = h.select(t, x, p);
    let hp = h.value(t, x, p);
    let hq = h.value(t, x, q);
    let lin = z[0] * (q[0] - p[0]) + z[1] * (q[1] - p[1]);
    prop_assert!(hq >= hp + lin - 1e-12 * (1.0 + hq.abs()), "subgradient: {hq} < {hp} + {lin}");
    let l = h.lipschitz();
    prop_assert!((hp - hq).abs() <= l * norm([p[0] - q[0], p[1] - q[1]]) + 1e-12);
    prop_assert!(norm(z) <= l + 1e-14);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn eikonal_is_convex_and_lipschitz(t in 0.0..1.0f64, x in point(), p in vec2(), q in vec2()) {
        check(&eikonal(), t, x, p, q)?;
    }

    #[test]
    fn discrete_control_is_convex_and_lipschitz(t in 0.0..1.0f64, x in point(), p in vec2(), q in vec2()) {
        check(&compass(), t, x, p, q)?;
    }

    #[test]
    fn eikonal_selector_is_scale_invariant(p in vec2(), s in 1e-3..1e3f64) {
        prop_assume!(norm(p) > 1e-10);
        let h = eikonal();
        let a = h.select(0.0, [0.5; 2], p);
        let b = h.select(0.0, [0.5; 2], [s * p[0], s * p[1]]);
        prop_assert!((a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14);
    }

    #[test]
    fn eikonal_subgradient_at_zero(q in vec2()) {
        let h = eikonal();
        prop_assert_eq!(h.select(0.0, [0.5; 2], [0.0, 0.0]), [0.0, 0.0]);
        prop_assert!(h.value(0.0, [0.5; 2], q) >= 0.0);
    }
}

#[test]
fn compass_lipschitz_constant_is_sampled() {
    assert_eq!(compass().lipschitz(), 1.0);
}
