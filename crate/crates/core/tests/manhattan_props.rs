use holodyn::dynsys::{postcritical, ProjectivePoint, RationalMap};
use holodyn::manhattan::*;
use holodyn::percyc::{filter_repelling_gamma, find_periodic, Backend, PeriodicOptions};
use num_complex::Complex64;
use proptest::prelude::*;

fn quad(c: Complex64) -> RationalMap {
    RationalMap::unicritical(2, c, 128).unwrap()
}

fn free_cell(atlas: &Atlas, x: &ProjectivePoint, r: f64) -> Cell {
    let (chart, u) = atlas.best_chart(&x.to_sphere());
    Manhattan {
        chart,
        r,
        tau: u,
        street_mass: 0.0,
        street_ci: 0.0,
        good: true,
        centers_off_pc: true,
        candidates_per_axis: 1,
    }
    .cell([0, 0])
}

#[test]
fn basilica_pipeline_is_a_subset_of_the_periodic_set() {
    let f = quad(Complex64::new(-1.0, 0.0));
    let params = PipelineParams {
        atoms: 30_000,
        ..PipelineParams::default()
    };
    let out = certified_repelling_pipeline(&f, 4, &params).unwrap();
    let all = find_periodic(&f, 4, Backend::NewtonSeeded, &PeriodicOptions::default()).unwrap();
    assert!(out.cycles.len() >= 8, "{}", out.cycles.len());
    for p in &out.cycles.points {
        assert!(all
            .points
            .iter()
            .any(|q| q.location[0].distance(&p.location[0]) < 1e-12));
        assert!(p.residual < 1e-20);
    }
    assert_eq!(
        filter_repelling_gamma(&out.cycles, 0.5).unwrap().len(),
        out.cycles.len()
    );
    assert!(out.max_branch_residual <= 1e-20);
    for c in &out.charts {
        assert!(c.street_mass <= 30.0 * c.r + c.street_ci);
    }
    // Cells carrying no sampled mass are never visited.
    assert!(out.cells.iter().all(|c| c.mass > 0.0));
    let csv = out.cells_csv();
    assert_eq!(csv.lines().count(), out.cells.len() + 1);
}

#[test]
fn pipeline_is_deterministic() {
    let f = quad(Complex64::new(0.0, 0.1));
    let params = PipelineParams {
        atoms: 20_000,
        ..PipelineParams::default()
    };
    let a = certified_repelling_pipeline(&f, 3, &params).unwrap();
    let b = certified_repelling_pipeline(&f, 3, &params).unwrap();
    assert_eq!(a.cells_csv(), b.cells_csv());
    assert_eq!(a.charts_csv(), b.charts_csv());
    assert_eq!(a.cycles.to_csv(), b.cycles.to_csv());
}

#[test]
fn diameters_shrink_like_the_square_root() {
    let f = quad(Complex64::new(0.0, 0.1));
    let opts = BranchOptions {
        grid: 5,
        ..BranchOptions::default()
    };
    let (records, counts) = diameter_survey(&f, 5, 2, 1, 0.005, &opts, 3).unwrap();
    assert!(counts.iter().all(|&(m, valid, _)| valid == 1 << m));
    let law = fit_diameter_law(&records, 2, 3).unwrap();
    assert_eq!(law.violations, 0);
    assert!(law.a > 0.0 && law.a < 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn branches_invert_and_are_disjoint(re in -1.2f64..0.3, im in -0.6f64..0.6, pick in 0usize..64, m in 1usize..5) {
        let f = quad(Complex64::new(re, im));
        let atlas = Atlas::build();
        let opts = BranchOptions { grid: 5, ..BranchOptions::default() };
        let fast = f.to_f64();
        let sample = holodyn::greenmeas::sample_backward(&fast, &holodyn::greenmeas::default_seed(&fast), 64, 64, 9);
        let x = sample.points[pick].to_projective(128);
        let cell = free_cell(&atlas, &x, 0.002);
        let pc = postcritical(&f, 0).unwrap();
        let branches = trace_branches(&f, &atlas, &cell, m, &pc, &opts).unwrap();
        prop_assert_eq!(branches.len(), 1 << m);
        let valid: Vec<_> = branches.iter().filter(|b| b.valid).collect();
        for b in &valid {
            prop_assert!(b.max_residual <= 1e-20);
        }
        for (i, a) in valid.iter().enumerate() {
            for b in &valid[i + 1..] {
                let gap = a.images.iter()
                    .flat_map(|p| b.images.iter().map(move |q| p.distance(q)))
                    .fold(f64::INFINITY, f64::min);
                prop_assert!(gap > 2e-20);
            }
        }
    }
}
