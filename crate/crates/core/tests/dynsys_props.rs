use holodyn::dynsys::{postcritical, Chart, ProjectivePoint, RationalMap, DEDUP_TOLERANCE};
use num_complex::Complex64;
use proptest::prelude::*;

const PREC: u32 = 128;

fn battery() -> Vec<RationalMap> {
    vec![
        RationalMap::power(2, PREC).unwrap(),
        RationalMap::unicritical(2, Complex64::new(-1.0, 0.0), PREC).unwrap(),
        RationalMap::unicritical(2, Complex64::new(0.0, 0.1), PREC).unwrap(),
        RationalMap::unicritical(3, Complex64::new(0.3, -0.4), PREC).unwrap(),
        RationalMap::rational(
            &[(-1.0, 0.0), (0.0, 0.0), (1.0, 0.0)],
            &[(1.0, 0.0), (0.0, 0.0), (1.0, 0.0)],
            2,
            PREC,
        )
        .unwrap(),
        RationalMap::rational(
            &[(0.2, 0.1), (1.0, 0.0), (0.0, 0.0), (0.5, 0.0)],
            &[(1.0, 0.0), (0.0, 0.3), (2.0, 0.0)],
            3,
            PREC,
        )
        .unwrap(),
    ]
}

fn point() -> impl Strategy<Value = Complex64> {
    (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(a, b)| Complex64::new(a, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn preimages_have_full_count(z in point(), which in 0usize..6) {
        let f = &battery()[which];
        let a = ProjectivePoint::from_c64(z, PREC);
        let pre = f.preimages(&a).unwrap();
        prop_assert_eq!(pre.len(), f.degree());
        for y in &pre {
            prop_assert!(f.apply(y).distance(&a) < 1e-25);
        }
    }

    #[test]
    fn spherical_derivative_is_chart_independent(z in point(), which in 0usize..6) {
        prop_assume!(z.norm() > 0.05);
        let f = &battery()[which];
        let x = ProjectivePoint::from_c64(z, PREC);
        let a = f.spherical_derivative_in(&x, Chart::Finite).unwrap();
        let b = f.spherical_derivative_in(&x, Chart::Infinite).unwrap();
        prop_assert!((a - b).abs() <= 1e-20 * a.max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn chain_rule_along_orbits(z in point(), which in 0usize..6, n in 1usize..=10) {
        let f = &battery()[which];
        let x = ProjectivePoint::from_c64(z, PREC);
        let whole = f.spherical_derivative_iter(&x, n);
        let mut product = 1.0;
        let mut y = x.clone();
        for _ in 0..n {
            product *= f.spherical_derivative(&y);
            y = f.apply(&y);
        }
        let scale = whole.abs().max(product.abs());
        prop_assume!(scale > 1e-280 && scale < 1e280);
        prop_assert!((whole - product).abs() <= 1e-15 * scale, "{} vs {}", whole, product);
    }
}

#[test]
fn postcritical_sets_grow_monotonically() {
    for f in battery() {
        let mut prev = postcritical(&f, 0).unwrap();
        for m in 1..=6 {
            let next = postcritical(&f, m).unwrap();
            assert!(prev.is_subset_of(&next, DEDUP_TOLERANCE));
            prev = next;
        }
    }
}

#[test]
fn critical_count_is_2d_minus_2() {
    for f in battery() {
        assert_eq!(f.critical_points().unwrap().len(), 2 * f.degree() - 2);
    }
}
