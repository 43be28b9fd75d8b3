//! Cell coverings of P¹ and the inverse branches living on them.
//!
//! An [`Atlas`] of six charts covers the sphere; on each chart a [`Manhattan`]
//! tiles the square `Ω_j` by cells of side `2r`, separated by a street
//! network of small measure. Inverse branches of `f^m` are traced over each
//! cell by continuation, and those mapping a cell into its `(1−r)`-shrink are
//! contracted to repelling periodic points.

mod atlas;
mod branch;
mod street;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;

pub use atlas::{Atlas, AtlasChart, CHART_SCALE};
pub use branch::{contract_branch, contract_map, trace_branches, BranchOptions, InverseBranch};
pub use street::{cell_mass, good_translation_search, Cell, Manhattan, MIN_STREET_ATOMS};

use crate::dynsys::{cluster_points, postcritical, PostcriticalSet, RationalMap, DEDUP_TOLERANCE};
use crate::error::{Error, Result};
use crate::greenmeas::{default_seed, sample_backward, MeasureSample};
use crate::par;
use crate::percyc::{CycleSet, PeriodicPoint};

use atlas::max_norm;

/// Largest cell half-side used by the pipeline. The exponent `γ₁` is tiny,
/// so `d^{−γ₁ n}` stays near 1 at any computable `n`.
pub const DEFAULT_MAX_SIDE: f64 = 1.0 / 128.0;

/// Exponents and numerical settings of the certified pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineParams {
    pub gamma: f64,
    pub zeta: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    /// Tube exponent `κ` from the tube-mass configuration.
    pub kappa: f64,
    pub theta0: f64,
    /// Cap on `r`.
    pub max_side: f64,
    /// Extra postcritical depth: `PC_{n + pc_extra}` stands in for `PC_∞`.
    pub pc_extra: usize,
    pub grid: usize,
    pub atoms: usize,
    pub seed: u64,
    pub precision: u32,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams::with_exponents(0.5, 2.0)
    }
}

impl PipelineParams {
    /// `ζ = γ/8`, `γ₀ = ζ/(1600κ)` and `γ₁ = 20γ₀κ`, so that `800γ₀κ < ζ`.
    pub fn with_exponents(gamma: f64, kappa: f64) -> Self {
        let zeta = gamma / 8.0;
        let gamma0 = zeta / (1600.0 * kappa);
        PipelineParams {
            gamma,
            zeta,
            gamma0,
            gamma1: 20.0 * gamma0 * kappa,
            kappa,
            theta0: 0.5,
            max_side: DEFAULT_MAX_SIDE,
            pc_extra: 10,
            grid: 9,
            atoms: 100_000,
            seed: 0x6d61_6e68,
            precision: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = 1.0;
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::param("gamma", format!("0 < γ < 1 fails for γ = {}", self.gamma)));
        }
        if !(self.zeta > 0.0 && self.zeta < self.gamma / 4.0) {
            return Err(Error::param("zeta", format!("0 < ζ < γ/4 fails for ζ = {}", self.zeta)));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::param("kappa", "κ > 0 fails"));
        }
        if !(self.gamma0 > 0.0 && 800.0 * self.gamma0 * self.kappa * k * k < self.zeta) {
            return Err(Error::param(
                "gamma0",
                format!("0 < 800·γ₀·κ·k² < ζ fails for γ₀ = {}", self.gamma0),
            ));
        }
        let want = 20.0 * self.gamma0 * self.kappa * k;
        if (self.gamma1 - want).abs() > 1e-12 * want {
            return Err(Error::param(
                "gamma1",
                format!("γ₁ = 20·γ₀·κ·k fails: {} ≠ {want}", self.gamma1),
            ));
        }
        if !(self.theta0 > 0.0 && self.theta0 <= 1.0) {
            return Err(Error::param("theta0", "0 < ϑ₀ ≤ 1 fails"));
        }
        if !(self.max_side > 0.0 && self.max_side < 0.01) {
            return Err(Error::param("max_side", "0 < r < 1/100 fails"));
        }
        if self.grid < 3 || self.grid % 2 == 0 {
            return Err(Error::param("grid", "must be odd and at least 3"));
        }
        if self.atoms < MIN_STREET_ATOMS {
            return Err(Error::param("atoms", format!("need at least {MIN_STREET_ATOMS}")));
        }
        Ok(())
    }

    /// `r = min(d^{−γ₁ n}, max_side)`.
    pub fn side(&self, d: usize, n: usize) -> f64 {
        (d as f64).powf(-self.gamma1 * n as f64).min(self.max_side)
    }

    fn branch_options(&self) -> BranchOptions {
        BranchOptions {
            precision: self.precision,
            grid: self.grid,
            theta0: self.theta0,
            ..BranchOptions::default()
        }
    }
}

/// Per-chart summary of the Manhattan actually used.
#[derive(Clone, Debug)]
pub struct ChartReport {
    pub chart: usize,
    pub r: f64,
    pub tau: Complex64,
    pub street_mass: f64,
    pub street_ci: f64,
    pub good: bool,
    pub centers_off_pc: bool,
    pub admissible: usize,
    /// Cells with `μ(W) > 0` whose centers sit within `10r` of `PC_{n+10}`.
    pub discarded: usize,
}

/// Branch statistics of one admissible cell.
#[derive(Clone, Debug)]
pub struct CellReport {
    pub chart: usize,
    pub eta: [i64; 2],
    pub mass: f64,
    pub mass_ci: f64,
    /// `μ((1−3r)W)`.
    pub inner_mass: f64,
    /// Lower bound `[μ((1−3r)W) − d^{−2γ₀n}μ(W) − r³](1 − d^{−γ₀n})·dⁿ`.
    pub p_bound: f64,
    /// `[μ((1−3r)W) − d^{−2γ₀n}μ(W) − r³]·d^{⌈(1−ζ)n⌉}`.
    pub q_bound: f64,
    /// Preimages of the center under `fⁿ` inside `W`.
    pub preimages_in_cell: usize,
    pub valid: usize,
    /// Valid branches mapping `W` into `(1−r)W`.
    pub into_shrink: usize,
    pub certified: usize,
    /// Largest identity residual over the certified branches.
    pub max_residual: f64,
}

impl CellReport {
    /// Cells falling short of their `p` bound count toward the unsafe mass.
    pub fn short(&self) -> bool {
        (self.certified as f64) < self.p_bound
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub cycles: CycleSet,
    pub r: f64,
    pub charts: Vec<ChartReport>,
    pub cells: Vec<CellReport>,
    /// μ-mass of admissible cells short of their `p` bound plus discarded
    /// cells, summed over charts (so it can exceed 1).
    pub unsafe_mass: f64,
    /// Largest `f^n∘g` identity residual over every certified branch grid.
    pub max_branch_residual: f64,
}

impl PipelineOutput {
    pub fn cells_csv(&self) -> String {
        let mut out = String::from(
            "chart,eta_re,eta_im,mass,mass_ci,inner_mass,p_bound,q_bound,preimages,valid,into_shrink,certified,max_residual\n",
        );
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{},{},{},{:.3e}",
                c.chart,
                c.eta[0],
                c.eta[1],
                c.mass,
                c.mass_ci,
                c.inner_mass,
                c.p_bound,
                c.q_bound,
                c.preimages_in_cell,
                c.valid,
                c.into_shrink,
                c.certified,
                c.max_residual
            );
        }
        out
    }

    pub fn charts_csv(&self) -> String {
        let mut out =
            String::from("chart,r,tau_re,tau_im,street_mass,street_ci,good,centers_off_pc,admissible,discarded\n");
        for c in &self.charts {
            let _ = writeln!(
                out,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{},{},{}",
                c.chart,
                c.r,
                c.tau.re,
                c.tau.im,
                c.street_mass,
                c.street_ci,
                c.good,
                c.centers_off_pc,
                c.admissible,
                c.discarded
            );
        }
        out
    }
}

#[derive(Default, Clone, Copy)]
struct Bucket {
    mass: f64,
    inner: f64,
    atoms: usize,
}

/// Certifies repelling periodic points of period `n` by contracting inverse
/// branches over the cells of good Manhattans.
pub fn certified_repelling_pipeline(map: &RationalMap, n: usize, params: &PipelineParams) -> Result<PipelineOutput> {
    params.validate()?;
    if n == 0 {
        return Err(Error::param("n", "period must be at least 1"));
    }
    let map = map.with_prec(params.precision)?;
    let d = map.degree();
    let r = params.side(d, n);
    let atlas = Atlas::build();
    let fast = map.to_f64();
    let sample = sample_backward(&fast, &default_seed(&fast), 64, params.atoms, params.seed);
    let pc = postcritical(&map, n + params.pc_extra)?;
    let opts = params.branch_options();

    let df = d as f64;
    let nf = n as f64;
    let drop2 = df.powf(-2.0 * params.gamma0 * nf);
    let m_tail = ((1.0 - params.zeta) * nf).ceil();

    let mut charts = Vec::new();
    let mut cells = Vec::new();
    let mut found: Vec<PeriodicPoint> = Vec::new();
    let mut unsafe_mass = 0.0;
    let mut max_branch_residual: f64 = 0.0;
    for j in 0..atlas.len() {
        let man = good_translation_search(&atlas, j, r, &sample, &pc)?;
        let chart = &atlas.charts[j];
        let mut buckets: BTreeMap<[i64; 2], Bucket> = BTreeMap::new();
        for (u, w) in street::chart_atoms(&atlas, &sample, j) {
            if max_norm(u) >= 0.5 {
                continue;
            }
            let cell = man.cell_of(u);
            if !cell.inside(0.5) {
                continue;
            }
            let b = buckets.entry(cell.eta).or_default();
            b.mass += w;
            b.atoms += 1;
            if cell.shrink(3).contains(u) {
                b.inner += w;
            }
        }
        let pcu: Vec<Complex64> = pc.sphere_points().iter().filter_map(|p| chart.to_chart(p)).collect();
        let mut admissible = Vec::new();
        let mut discarded = 0;
        for (eta, b) in &buckets {
            let cell = man.cell(*eta);
            if pcu.iter().any(|u| (u - cell.center()).norm() <= 10.0 * r) {
                discarded += 1;
                unsafe_mass += b.mass;
            } else {
                admissible.push((cell, *b));
            }
        }
        let results = par::map(&admissible, |(cell, _)| process_cell(&map, &atlas, cell, n, &pc, &opts));
        let n_eff = crate::stats::effective_size(&sample.weights);
        for ((_, b), res) in admissible.iter().zip(results) {
            let (pts, mut report) = res?;
            let base = b.inner - drop2 * b.mass - r.powi(3);
            report.mass = b.mass;
            report.mass_ci = crate::stats::binomial_half_width(b.mass, n_eff);
            report.inner_mass = b.inner;
            report.p_bound = base * (1.0 - df.powf(-params.gamma0 * nf)) * df.powf(nf);
            report.q_bound = base * df.powf(m_tail);
            if report.short() {
                unsafe_mass += b.mass;
            }
            max_branch_residual = max_branch_residual.max(report.max_residual);
            found.extend(pts);
            cells.push(report);
        }
        charts.push(ChartReport {
            chart: j,
            r,
            tau: man.tau,
            street_mass: man.street_mass,
            street_ci: man.street_ci,
            good: man.good,
            centers_off_pc: man.centers_off_pc,
            admissible: admissible.len(),
            discarded,
        });
    }

    let locations: Vec<_> = found.iter().map(|p| p.location[0].clone()).collect();
    let groups = cluster_points(&locations, DEDUP_TOLERANCE);
    let unique: Vec<PeriodicPoint> = groups.iter().map(|g| found[g[0]].clone()).collect();
    Ok(PipelineOutput {
        cycles: CycleSet::from_points(unique, n, d, 1),
        r,
        charts,
        cells,
        unsafe_mass,
        max_branch_residual,
    })
}

/// Traces the order-`n` branches through the center preimages lying in the
/// cell and contracts those mapping it into its `(1−r)`-shrink.
fn process_cell(
    map: &RationalMap,
    atlas: &Atlas,
    cell: &Cell,
    n: usize,
    pc: &PostcriticalSet,
    opts: &BranchOptions,
) -> Result<(Vec<PeriodicPoint>, CellReport)> {
    let chart = &atlas.charts[cell.chart];
    let mut report = CellReport {
        chart: cell.chart,
        eta: cell.eta,
        mass: 0.0,
        mass_ci: 0.0,
        inner_mass: 0.0,
        p_bound: 0.0,
        q_bound: 0.0,
        preimages_in_cell: 0,
        valid: 0,
        into_shrink: 0,
        certified: 0,
        max_residual: 0.0,
    };
    branch::check_clear(atlas, cell, pc, opts)?;
    let (starts, _) = branch::center_preimages(map, atlas, cell, n, opts)?;
    let inside: Vec<_> = starts
        .into_iter()
        .filter(|x| chart.to_chart(&x.to_sphere()).is_some_and(|u| cell.contains(u)))
        .collect();
    report.preimages_in_cell = inside.len();
    let shrink = cell.shrink(1);
    let mut points = Vec::new();
    for s in &inside {
        let b = branch::trace_from(map, atlas, cell, n, s, opts);
        if !b.valid {
            continue;
        }
        report.valid += 1;
        if !b.image_inside(atlas, &shrink) {
            continue;
        }
        report.into_shrink += 1;
        match contract_branch(map, atlas, &b, opts) {
            Ok(p) => {
                report.certified += 1;
                report.max_residual = report.max_residual.max(b.max_residual);
                points.push(p);
            }
            Err(e) if e.is_validation() => return Err(e),
            Err(e) => log::debug!("cell {:?}: {e}", cell.eta),
        }
    }
    Ok((points, report))
}

/// Measured diameter of one valid branch.
#[derive(Clone, Debug, PartialEq)]
pub struct DiameterRecord {
    pub m: usize,
    pub ell: usize,
    pub diameter: f64,
}

/// Traces every branch of order `1..=m_max` over `cells` cells centred at
/// sample points of `μ` whose `ϑ₀`-ball avoids `PC_ℓ`, and records the
/// diameters of the valid ones together with the branch counts per order.
pub fn diameter_survey(
    map: &RationalMap,
    m_max: usize,
    ell: usize,
    cells: usize,
    r: f64,
    opts: &BranchOptions,
    seed: u64,
) -> Result<(Vec<DiameterRecord>, Vec<(usize, usize, usize)>)> {
    let atlas = Atlas::build();
    let fast = map.to_f64();
    let sample = sample_backward(&fast, &default_seed(&fast), 64, 4096, seed);
    let pc = postcritical(map, ell)?;
    let mut chosen = Vec::new();
    for (x, _) in sample.atoms() {
        if chosen.len() >= cells {
            break;
        }
        let (j, u) = atlas.best_chart(&x[0]);
        let man = Manhattan {
            chart: j,
            r,
            tau: u,
            street_mass: 0.0,
            street_ci: 0.0,
            good: true,
            centers_off_pc: true,
            candidates_per_axis: 1,
        };
        let cell = man.cell([0, 0]);
        // Keep a margin of twice the precondition radius.
        let far = std::f64::consts::SQRT_2 * 2.0 * r / opts.theta0;
        let ok = pc
            .sphere_points()
            .iter()
            .filter_map(|p| atlas.charts[j].to_chart(p))
            .all(|p| (p - cell.center()).norm() > far);
        if ok
            && chosen
                .iter()
                .all(|c: &Cell| atlas.charts[c.chart].from_chart(c.center()).distance(&x[0]) > 0.1)
        {
            chosen.push(cell);
        }
    }
    let mut records = Vec::new();
    let mut counts = Vec::new();
    for cell in &chosen {
        for m in 1..=m_max {
            let branches = trace_branches(map, &atlas, cell, m, &pc, opts)?;
            let valid: Vec<_> = branches.iter().filter(|b| b.valid).collect();
            counts.push((m, valid.len(), branches.len()));
            for b in valid {
                records.push(DiameterRecord {
                    m,
                    ell,
                    diameter: b.diameter,
                });
            }
        }
    }
    Ok((records, counts))
}

/// Fit of `diam ≤ A·d^{−(m−ℓ)/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiameterLaw {
    /// Smallest `A` covering every record.
    pub a: f64,
    pub violations: usize,
    /// `A` fitted on `m ≤ split` only.
    pub holdout_a: f64,
    /// Records with `m > split` exceeding the hold-out envelope.
    pub holdout_violations: usize,
    pub holdout_checked: usize,
}

pub fn fit_diameter_law(records: &[DiameterRecord], d: usize, split: usize) -> Result<DiameterLaw> {
    if records.is_empty() {
        return Err(Error::FitRefused("no branch diameters".into()));
    }
    let ratio = |r: &DiameterRecord| r.diameter * (d as f64).powf((r.m as f64 - r.ell as f64) / 2.0);
    let a = records.iter().map(ratio).fold(0.0, f64::max);
    let violations = records.iter().filter(|r| r.diameter > a * scale(d, r)).count();
    let holdout_a = records.iter().filter(|r| r.m <= split).map(ratio).fold(0.0, f64::max);
    let late: Vec<_> = records.iter().filter(|r| r.m > split).collect();
    let holdout_violations = late.iter().filter(|r| r.diameter > holdout_a * scale(d, r)).count();
    Ok(DiameterLaw {
        a,
        violations,
        holdout_a,
        holdout_violations,
        holdout_checked: late.len(),
    })
}

fn scale(d: usize, r: &DiameterRecord) -> f64 {
    (d as f64).powf(-(r.m as f64 - r.ell as f64) / 2.0) * (1.0 + 1e-12)
}

/// Preimage sample of `μ` used by callers that need the pipeline's measure.
pub fn pipeline_sample(map: &RationalMap, params: &PipelineParams) -> MeasureSample {
    let fast = map.to_f64();
    sample_backward(&fast, &default_seed(&fast), 64, params.atoms, params.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::percyc::{filter_repelling_gamma, find_periodic, Backend, PeriodicOptions};

    #[test]
    fn default_exponents_satisfy_constraints() {
        let p = PipelineParams::default();
        p.validate().unwrap();
        assert!((p.zeta - 0.0625).abs() < 1e-15);
        assert_eq!(p.side(2, 4), DEFAULT_MAX_SIDE);
    }

    #[test]
    fn violated_inequality_is_named() {
        let mut p = PipelineParams::default();
        p.gamma0 = p.zeta;
        let e = p.validate().unwrap_err().to_string();
        assert!(e.contains("800"), "{e}");
        let mut p = PipelineParams::default();
        p.zeta = 0.3;
        assert!(p.validate().unwrap_err().to_string().contains("γ/4"));
        let mut p = PipelineParams::default();
        p.gamma1 *= 2.0;
        assert!(p.validate().unwrap_err().to_string().contains("20"));
    }

    #[test]
    fn squaring_pipeline_finds_roots_of_unity() {
        let f = RationalMap::power(2, 128).unwrap();
        let params = PipelineParams {
            atoms: 20_000,
            ..PipelineParams::default()
        };
        let out = certified_repelling_pipeline(&f, 4, &params).unwrap();
        assert!(!out.cycles.is_empty());
        for p in &out.cycles.points {
            let z = p.location[0].affine().unwrap();
            let w = z.powu(15).to_c64();
            assert!((w - 1.0).norm() < 1e-15, "{z}");
        }
        assert!(out.max_branch_residual <= 1e-20);
        assert!(out.charts.iter().all(|c| c.good));
        let all = find_periodic(&f, 4, Backend::NewtonSeeded, &PeriodicOptions::default()).unwrap();
        let gamma = filter_repelling_gamma(&out.cycles, 0.5).unwrap();
        assert_eq!(gamma.len(), out.cycles.len());
        for p in &out.cycles.points {
            assert!(all
                .points
                .iter()
                .any(|q| q.location[0].distance(&p.location[0]) < 1e-12));
        }
    }
}
