use holodyn::dynsys::{RationalMap, SpherePoint};
use holodyn::equidist::*;
use holodyn::greenmeas::{default_seed, exact_quadrature, ExactKind, MeasureSample, Provenance, DEFAULT_ATOM_CAP};
use holodyn::percyc::{find_periodic, Backend, CycleSet, PeriodicOptions, QChoice};
use num_complex::Complex64;
use proptest::prelude::*;

fn cycles(f: &RationalMap, ns: std::ops::RangeInclusive<usize>) -> Vec<CycleSet> {
    ns.map(|n| find_periodic(f, n, Backend::NewtonSeeded, &PeriodicOptions::default()).unwrap())
        .collect()
}

fn basilica_with_tree() -> (RationalMap, Reference) {
    let f = RationalMap::unicritical(2, Complex64::new(-1.0, 0.0), 128).unwrap();
    let fast = f.to_f64();
    let reference = Reference::tree(&fast, &default_seed(&fast), 20, DEFAULT_ATOM_CAP).unwrap();
    (f, reference)
}

#[test]
fn cubic_power_map_rate_is_one_third() {
    let f = RationalMap::power(3, 128).unwrap();
    let circ = Reference::exact(exact_quadrature(ExactKind::Circle, 1 << 14));
    let sets = cycles(&f, 2..=7);
    for phi in make_test_family(Family::Smooth, 5, 3) {
        let fit = periodic_discrepancy(&sets, &phi, QChoice::All, &circ, &FitOptions::default()).unwrap();
        assert!((fit.xi - 1.0 / 3.0).abs() < 0.05, "{}: {}", phi.id, fit.xi);
        assert!(fit.decays());
    }
}

#[test]
fn basilica_periodic_and_preimage_rates_decay() {
    let (f, reference) = basilica_with_tree();
    let sets = cycles(&f, 2..=9);
    let a = SpherePoint::finite(Complex64::new(0.31, 0.77));
    let ms: Vec<usize> = (2..=14).collect();
    for phi in make_test_family(Family::Smooth, 3, 11) {
        let per = periodic_discrepancy(&sets, &phi, QChoice::All, &reference, &FitOptions::default()).unwrap();
        assert!(per.decays(), "{}: {}", phi.id, per.xi);
        let pre =
            preimage_discrepancy(&f, &a, &ms, &phi, &reference, DEFAULT_ATOM_CAP, &FitOptions::default()).unwrap();
        assert!(pre.decays(), "{}: {}", phi.id, pre.xi);
        assert!(pre.envelope.as_ref().unwrap().passed());
        assert!(pre.truncated.is_empty());
    }
}

// Hölder observables should not decay faster than smooth ones by more than
// the worst-case factor allows: exponent_α ≥ α·exponent_1 / 2.
#[test]
fn holder_rates_respect_the_alpha_degradation_bound() {
    let f = RationalMap::power(2, 128).unwrap();
    let circ = Reference::exact(exact_quadrature(ExactKind::Circle, 1 << 16));
    let sets = cycles(&f, 2..=10);
    let exponent = |kind: Family| {
        let xs: Vec<f64> = make_test_family(kind, 3, 5)
            .iter()
            .map(|phi| {
                let fit = periodic_discrepancy(&sets, phi, QChoice::All, &circ, &FitOptions::default()).unwrap();
                -fit.xi.ln() / 2f64.ln()
            })
            .collect();
        xs.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let smooth = exponent(Family::Smooth);
    assert!((smooth - 1.0).abs() < 0.05, "{smooth}");
    for alpha in [1.0, 0.5, 0.25] {
        let e = exponent(Family::Holder(alpha));
        assert!(e >= alpha * smooth / 2.0, "alpha {alpha}: {e} vs {smooth}");
    }
}

// The fixed-rate prefactor grows as the base point approaches the critical
// value −1. Tested as a monotone trend only.
#[test]
fn preimage_prefactor_grows_near_the_postcritical_set() {
    let (f, reference) = basilica_with_tree();
    let ms: Vec<usize> = (2..=12).collect();
    for phi in make_test_family(Family::Smooth, 2, 1) {
        let mut last = 0.0;
        for delta in [1e-1, 1e-2, 1e-3, 1e-4, 1e-6] {
            let a = SpherePoint::finite(Complex64::new(-1.0 + 0.6 * delta, 0.8 * delta));
            let fit =
                preimage_discrepancy(&f, &a, &ms, &phi, &reference, DEFAULT_ATOM_CAP, &FitOptions::default()).unwrap();
            let c = fit.envelope.unwrap().c_all;
            assert!(c >= last * (1.0 - 1e-9), "{} at {delta:e}: {c} < {last}", phi.id);
            last = c;
        }
    }
    let on_pc = SpherePoint::finite(Complex64::new(-1.0, 0.0));
    let phi = TestFunction::height();
    assert!(preimage_discrepancy(
        &f,
        &on_pc,
        &ms,
        &phi,
        &reference,
        DEFAULT_ATOM_CAP,
        &FitOptions::default()
    )
    .is_err());
}

fn circle_points(n: usize, phase: f64) -> Vec<SpherePoint> {
    (0..n)
        .map(|k| {
            let t = std::f64::consts::TAU * (k as f64 + phase) / n as f64;
            SpherePoint::finite(Complex64::from_polar(1.0, t))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pairing_is_linear_in_the_measure(
        seed in any::<u64>(),
        lam in 0.1f64..3.0,
        mu in 0.1f64..3.0,
        phase in 0.0f64..1.0,
        radius in 0.2f64..5.0,
    ) {
        let a_pts = circle_points(7, phase);
        let b_pts: Vec<SpherePoint> = circle_points(5, 0.0)
            .into_iter()
            .map(|p| SpherePoint::finite(p.affine().unwrap() * radius))
            .collect();
        let a = MeasureSample::uniform(a_pts.clone(), Provenance::ExactCircle).unwrap();
        let b = MeasureSample::uniform(b_pts.clone(), Provenance::ExactCircle).unwrap();
        let zero = MeasureSample::empty(1, Provenance::ExactCircle);
        let mut weights = vec![lam / 7.0; 7];
        weights.extend(vec![mu / 5.0; 5]);
        let combo = MeasureSample::from_atoms(1, [a_pts, b_pts].concat(), weights, Provenance::ExactCircle).unwrap();
        for phi in make_test_family(Family::Trig, 3, seed) {
            let lhs = pair(&combo, &zero, &phi);
            let rhs = lam * pair(&a, &zero, &phi) + mu * pair(&b, &zero, &phi);
            prop_assert!((lhs - rhs).abs() < 1e-12);
            prop_assert!((pair(&a, &b, &phi) + pair(&b, &a, &phi)).abs() < 1e-15);
            prop_assert!(pair(&a, &b, &phi).abs() <= 2.0 * phi.sup + 1e-12);
        }
    }

    #[test]
    fn declared_norms_dominate_sampled_ones(seed in any::<u64>(), which in 0usize..4) {
        let kind = [Family::Smooth, Family::Trig, Family::Bump, Family::Holder(0.5)][which];
        for phi in make_test_family(kind, 2, seed) {
            let (sup, ratio) = phi.sampled_norms(2_000, seed ^ 0x5eed);
            prop_assert!(sup <= phi.sup * (1.0 + 1e-9));
            let bound = if kind.alpha() < 1.0 { phi.holder } else { phi.lipschitz };
            prop_assert!(ratio <= bound * (1.0 + 1e-9), "{}: {} > {}", phi.id, ratio, bound);
        }
    }
}
