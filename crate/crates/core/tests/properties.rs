use proptest::prelude::*;

use degenctrl::control::{apply_control_gramian, ControlRegion};
use degenctrl::evolution::solve_forward;
use degenctrl::intervals::IntervalSet;
use degenctrl::model::{build_model, project_modes, synthesize_field, ModeCoeffs, ModelConfig};
use degenctrl::spectral_obs::torus_smallest_gram_eigenvalue;

fn coeffs(m: &degenctrl::model::Model, vals: &[f64]) -> ModeCoeffs {
    let mut c = ModeCoeffs::zeros(m);
    c.data.iter_mut().flatten().zip(vals.iter().cycle()).for_each(|(x, v)| *x = *v);
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gram_eigenvalue_grows_with_interval(c in 0.0..3.0f64, len in 0.2..2.0f64, extra in 0.05..1.0f64, k in 0usize..4) {
        let small = torus_smallest_gram_eigenvalue(k, c, c + len).unwrap().lambda_min;
        let big = torus_smallest_gram_eigenvalue(k, c, c + len + extra).unwrap().lambda_min;
        prop_assert!(big >= small * (1.0 - 1e-10));
    }

    #[test]
    fn gram_eigenvalue_shrinks_with_cap(c in 0.0..3.0f64, len in 0.3..2.0f64, k in 0usize..4) {
        let a = torus_smallest_gram_eigenvalue(k, c, c + len).unwrap().lambda_min;
        let b = torus_smallest_gram_eigenvalue(k + 1, c, c + len).unwrap().lambda_min;
        prop_assert!(b <= a * (1.0 + 1e-10));
    }

    #[test]
    fn roundtrip_and_energy(vals in prop::collection::vec(-1.0..1.0f64, 8..40)) {
        let m = build_model(ModelConfig::new(0.4, 0.5).with_sizes(3, 30, 12)).unwrap();
        let c = coeffs(&m, &vals);
        let back = project_modes(&m, &synthesize_field(&m, &c).unwrap()).unwrap();
        let mut d = back.clone();
        d.axpy(-1.0, &c);
        prop_assert!(d.max_abs() <= 1e-12 * c.max_abs().max(1.0));
        let norms = solve_forward(&m, &c, None).unwrap().l2_norms(&m);
        prop_assert!(norms.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn gramian_is_positive(vals in prop::collection::vec(-1.0..1.0f64, 8..40), a in 0.0..0.5f64, w in 0.1..0.5f64) {
        let m = build_model(ModelConfig::new(0.5, 1.0).with_sizes(2, 30, 16)).unwrap();
        let y = coeffs(&m, &vals);
        let d = ControlRegion::cylinder(a, a + w).unwrap();
        let g = apply_control_gramian(&m, &d, &y).unwrap();
        prop_assert!(m.inner(&g, &y) >= -1e-12 * m.norm(&y).powi(2));
    }

    #[test]
    fn interval_inclusion_exclusion(
        a in prop::collection::vec((0.0..1.0f64, 0.0..0.3f64), 0..6),
        b in prop::collection::vec((0.0..1.0f64, 0.0..0.3f64), 0..6),
    ) {
        let x = IntervalSet::new(a.iter().map(|&(s, l)| (s, s + l)).collect());
        let y = IntervalSet::new(b.iter().map(|&(s, l)| (s, s + l)).collect());
        let both = x.measure() - x.subtract(&y).measure();
        let lhs = x.union(&y).measure() + both;
        prop_assert!((lhs - x.measure() - y.measure()).abs() < 1e-12);
    }
}
