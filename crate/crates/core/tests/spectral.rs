mod common;

use coulomb_core::{ManifoldId, ManifoldPoint, SpectralModel};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn torus2_green_matches_lattice_sum(x in 0.0..1.0f64, y in 0.0..1.0f64, dx in 0.05..0.95f64, dy in 0.0..1.0f64) {
        let sm = SpectralModel::new(ManifoldId::Torus2);
        let a = ManifoldPoint::torus2(x, y);
        let b = ManifoldPoint::torus2(x + dx, y + dy);
        let g = sm.green_value(&a, &b);
        prop_assert!((g - common::torus2_green(dx, dy)).abs() < 1e-10, "{} vs {}", g, common::torus2_green(dx, dy));
    }

    #[test]
    fn torus2_heat_kernel_matches_images(t in 1e-4..2.0f64, dx in 0.0..1.0f64, dy in 0.0..1.0f64) {
        let sm = SpectralModel::new(ManifoldId::Torus2);
        let k = sm.heat_kernel(t, &ManifoldPoint::torus2(0.0, 0.0), &ManifoldPoint::torus2(dx, dy)).unwrap();
        let oracle = common::torus_heat_images(t, &[dx, dy]);
        prop_assert!((k.value - oracle).abs() <= 1e-12 * oracle.max(1.0) + k.truncation_bound);
    }

    #[test]
    fn torus3_heat_kernel_matches_images(t in 1e-3..1.0f64, d in prop::array::uniform3(0.0..1.0f64)) {
        let sm = SpectralModel::new(ManifoldId::Torus3);
        let x = ManifoldPoint::torus3(0.3, 0.6, 0.9);
        let y = ManifoldPoint::torus3(0.3 + d[0], 0.6 + d[1], 0.9 + d[2]);
        let k = sm.heat_kernel(t, &x, &y).unwrap();
        let oracle = common::torus_heat_images(t, &d);
        prop_assert!((k.value - oracle).abs() <= 1e-12 * oracle.max(1.0) + k.truncation_bound);
    }

    #[test]
    fn regularized_green_defect_is_heat_integral(t in 1e-3..0.3f64, dx in 0.05..0.95f64, dy in 0.0..1.0f64) {
        // G - G_t = ∫_0^{2t} (p_s - 1) ds ≥ -2t, by Simpson's rule in u = √s
        // (p_s peaks near s = |d|²/4, which a uniform s-mesh under-resolves)
        let sm = SpectralModel::new(ManifoldId::Torus2);
        let gt = sm.regularized_green(t, &ManifoldPoint::torus2(0.0, 0.0), &ManifoldPoint::torus2(dx, dy)).unwrap().value;
        let g = common::torus2_green(dx, dy);
        let m = 4000;
        let top = (2.0 * t).sqrt();
        let h = top / m as f64;
        let f = |u: f64| if u == 0.0 { 0.0 } else { 2.0 * u * (common::torus_heat_images(u * u, &[dx, dy]) - 1.0) };
        let mut integral = f(0.0) + f(top);
        for i in 1..m {
            integral += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        integral *= h / 3.0;
        prop_assert!((g - gt - integral).abs() < 1e-8, "{} vs {}", g - gt, integral);
        prop_assert!(gt <= g + 2.0 * t + 1e-12);
    }
}

#[test]
fn eigen_table_round_trip() {
    for m in [ManifoldId::Torus2, ManifoldId::Torus3, ManifoldId::Sphere2] {
        let sm = SpectralModel::new(m);
        let mut buf = Vec::new();
        sm.dump_eigen_table(&mut buf).unwrap();
        assert_eq!(&buf[..5], b"SPEC1");
        assert_eq!(buf.len(), 13 + 8 * (sm.eigen_cutoff() + 1));
        let back = SpectralModel::load_eigen_table(&buf[..], None).unwrap();
        assert_eq!(back.manifold(), m);
        assert_eq!(back.eigenvalues(), sm.eigenvalues());
        assert!(SpectralModel::load_eigen_table(&buf[..buf.len() - 3], None).is_err());
    }
}
