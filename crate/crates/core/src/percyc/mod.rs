//! Periodic points: exhaustive solving, multipliers, the `P_{n,γ}` filter and
//! the exceptional counts `A_n`, `B_n`.

mod solve;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::dynsys::{ProductMap, ProjectivePoint, RationalMap, SpherePoint};
use crate::error::{Error, Result};
use crate::greenmeas::{GreenEvaluator, JuliaClass, JuliaOptions, MeasureSample, Provenance};
use crate::mpnum::DEFAULT_PRECISION;
use crate::par;

pub use solve::iterate_polys;

/// `|multiplier_modulus − 1|` at or below which a cycle counts as indifferent.
pub const INDIFFERENCE_BAND: f64 = 1e-8;

/// Largest `d^n + 1` the expansion backend accepts by default.
pub const EXPAND_CAP: usize = 4097;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Backend {
    /// Coefficient expansion of `f^n(z) − z` plus simultaneous root finding.
    Expand,
    /// Newton on the composition-free fixed-point residual from a seed cloud.
    NewtonSeeded,
    /// Run both where expansion fits and fail on any disagreement.
    Checked,
}

impl Backend {
    pub fn tag(self) -> &'static str {
        match self {
            Backend::Expand => "expand",
            Backend::NewtonSeeded => "newton-seeded",
            Backend::Checked => "checked",
        }
    }

    pub fn from_tag(s: &str) -> Result<Self> {
        match s {
            "expand" => Ok(Backend::Expand),
            "newton-seeded" | "newton" => Ok(Backend::NewtonSeeded),
            "checked" => Ok(Backend::Checked),
            other => Err(Error::param("backend", format!("unknown backend `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Classification {
    Repelling,
    Attracting,
    Indifferent,
    /// Product maps only: one factor expands, the other contracts.
    Saddle,
}

impl Classification {
    pub fn from_modulus(m: f64) -> Self {
        if m > 1.0 + INDIFFERENCE_BAND {
            Classification::Repelling
        } else if m < 1.0 - INDIFFERENCE_BAND {
            Classification::Attracting
        } else {
            Classification::Indifferent
        }
    }

    fn combine(a: Self, b: Self) -> Self {
        use Classification::*;
        match (a, b) {
            (Repelling, Repelling) => Repelling,
            (Attracting, Attracting) => Attracting,
            (Repelling, Attracting) | (Attracting, Repelling) => Saddle,
            _ => Indifferent,
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        [
            Classification::Repelling,
            Classification::Attracting,
            Classification::Indifferent,
            Classification::Saddle,
        ]
        .into_iter()
        .find(|c| c.tag() == tag)
        .ok_or_else(|| Error::Parse(format!("unknown classification `{tag}`")))
    }

    pub fn tag(self) -> &'static str {
        match self {
            Classification::Repelling => "repelling",
            Classification::Attracting => "attracting",
            Classification::Indifferent => "indifferent",
            Classification::Saddle => "saddle",
        }
    }
}

#[derive(Clone, Debug)]
pub struct PeriodicOptions {
    pub precision: u32,
    /// Largest `d^n + 1` handed to the expansion backend.
    pub composition_cap: usize,
    pub newton_max_iter: usize,
    /// Seeding rounds (each denser, later ones deflated) before giving up.
    pub seed_rounds: usize,
    /// Spherical residual every returned point must meet.
    pub certification: f64,
    /// Multiset distance allowed between the two backends.
    pub agreement_tolerance: f64,
    /// Seed for the random base point of the preimage-tree seed cloud.
    pub seed: u64,
    pub julia: JuliaOptions,
}

impl Default for PeriodicOptions {
    fn default() -> Self {
        PeriodicOptions {
            precision: DEFAULT_PRECISION,
            composition_cap: EXPAND_CAP,
            newton_max_iter: 120,
            seed_rounds: 6,
            certification: 1e-20,
            agreement_tolerance: 1e-15,
            seed: 0x5eed,
            julia: JuliaOptions::default(),
        }
    }
}

impl PeriodicOptions {
    /// Tree seeds stop at `d^depth ≤ 2^16`; the grid covers the rest.
    pub(crate) fn max_tree_depth(&self, d: usize) -> usize {
        let mut k = 0;
        while (d as u128).pow(k as u32 + 1) <= 1 << 16 {
            k += 1;
        }
        k
    }
}

/// One solution of `f^n(x) = x` (a pair of them for product maps).
#[derive(Clone, Debug)]
pub struct PeriodicPoint {
    pub location: Vec<ProjectivePoint>,
    pub period: usize,
    pub minimal_period: usize,
    /// `|(f^n)'|` at the point, one entry per product factor.
    pub multiplier_modulus: Vec<f64>,
    pub classification: Classification,
    pub in_small_julia: JuliaClass,
    /// Spherical distance between `f^n(x)` and `x` (max over factors).
    pub residual: f64,
    pub multiplicity: usize,
}

impl PeriodicPoint {
    /// `‖Df^n(x)^{-1}‖` in the operator norm (inverse of the smallest modulus).
    pub fn inverse_norm(&self) -> f64 {
        crate::dynsys::inverse_operator_norm(&self.multiplier_modulus)
    }

    pub fn sphere_points(&self) -> Vec<SpherePoint> {
        self.location.iter().map(ProjectivePoint::to_sphere).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CycleCounts {
    pub with_multiplicity: usize,
    pub distinct: usize,
    pub repelling: usize,
    pub attracting: usize,
    pub indifferent: usize,
    pub saddle: usize,
}

#[derive(Clone, Debug)]
pub struct CycleSet {
    pub points: Vec<PeriodicPoint>,
    pub n: usize,
    pub degree: usize,
    /// 1 for maps of P¹, 2 for products.
    pub dim: usize,
    pub counts: CycleCounts,
}

impl CycleSet {
    /// Builds a set from finished points, sorting them canonically.
    pub fn from_points(mut points: Vec<PeriodicPoint>, n: usize, degree: usize, dim: usize) -> Self {
        points.sort_by(|a, b| {
            let ka = sort_key(a);
            let kb = sort_key(b);
            ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut counts = CycleCounts {
            distinct: points.len(),
            ..Default::default()
        };
        for p in &points {
            counts.with_multiplicity += p.multiplicity;
            match p.classification {
                Classification::Repelling => counts.repelling += p.multiplicity,
                Classification::Attracting => counts.attracting += p.multiplicity,
                Classification::Indifferent => counts.indifferent += p.multiplicity,
                Classification::Saddle => counts.saddle += p.multiplicity,
            }
        }
        CycleSet {
            points,
            n,
            degree,
            dim,
            counts,
        }
    }

    /// `(d^{(k+1)n} − 1)/(d^n − 1)` raised to the product dimension: the
    /// number of solutions with multiplicity.
    pub fn expected_count(&self) -> usize {
        let one = self.degree.pow(self.n as u32) + 1;
        one.pow(self.dim as u32)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `d^{-kn} Σ_{a ∈ Q} δ_a` over the points, with or without multiplicity.
    pub fn to_sample(&self, with_multiplicity: bool) -> MeasureSample {
        let norm = (self.degree as f64).powi((self.dim * self.n) as i32);
        let mut pts = Vec::new();
        let mut w = Vec::new();
        for p in &self.points {
            pts.extend(p.sphere_points());
            let m = if with_multiplicity { p.multiplicity } else { 1 };
            w.push(m as f64 / norm);
        }
        if w.is_empty() {
            return MeasureSample::empty(self.dim, Provenance::PeriodicPoints);
        }
        MeasureSample::from_atoms(self.dim, pts, w, Provenance::PeriodicPoints)
            .expect("periodic sample weights are positive")
    }

    /// CSV with one row per distinct point. Coordinates are given in the
    /// point's own chart (`|t| ≤ 1`).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.dim == 1 {
            out.push_str("re,im,chart,");
        } else {
            out.push_str("re,im,chart,re2,im2,chart2,");
        }
        out.push_str("period,minimal_period,multiplier_modulus,class,julia_flag,multiplicity,residual\n");
        for p in &self.points {
            for x in &p.location {
                let t = x.coord().to_c64();
                let _ = write!(out, "{:.17e},{:.17e},{},", t.re, t.im, x.chart().tag());
            }
            let mods: Vec<String> = p.multiplier_modulus.iter().map(|m| format!("{m:.12e}")).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.3e}",
                p.period,
                p.minimal_period,
                mods.join(";"),
                p.classification.tag(),
                p.in_small_julia.tag(),
                p.multiplicity,
                p.residual
            );
        }
        out
    }
}

fn sort_key(p: &PeriodicPoint) -> Vec<f64> {
    p.location
        .iter()
        .flat_map(|x| {
            let t = x.coord().to_c64();
            let c = if x.chart() == crate::dynsys::Chart::Finite {
                0.0
            } else {
                1.0
            };
            [c, t.re, t.im]
        })
        .collect()
}

/// Julia classification of a periodic point from its multiplier: repelling
/// and indifferent cycles lie in J, attracting ones do not. Polynomials first
/// use the Green function to separate the basin of infinity. A star test is
/// unreliable here: at cusp points such as the basilica α fixed point the
/// Green function grows like `r^{log d / log|λ|}` and stays below any usable
/// tolerance at the star radius. Siegel centres would be misfiled.
fn classify_julia(
    green: Option<&GreenEvaluator>,
    x: &ProjectivePoint,
    class: Classification,
    opts: &JuliaOptions,
) -> JuliaClass {
    if let Some(g) = green {
        if !(g.value_big(x).0 <= opts.tolerance) {
            return JuliaClass::Outside;
        }
    }
    match (class, green.is_some()) {
        (Classification::Attracting, true) => JuliaClass::Inside,
        (Classification::Attracting, false) => JuliaClass::Outside,
        _ => JuliaClass::BoundaryBand,
    }
}

/// All solutions of `f^n(x) = x` on P¹ with multiplicities, multipliers,
/// classification, Julia flag and minimal period.
pub fn find_periodic(map: &RationalMap, n: usize, backend: Backend, opts: &PeriodicOptions) -> Result<CycleSet> {
    if n == 0 {
        return Err(Error::param("n", "period must be at least 1"));
    }
    let raw = match backend {
        Backend::Expand => solve::solve_expand(map, n, opts)?,
        Backend::NewtonSeeded => solve::solve_newton(map, n, opts)?,
        Backend::Checked => {
            let b = solve::solve_newton(map, n, opts)?;
            if solve::expected_count(map.degree(), n)? <= opts.composition_cap {
                let a = solve::solve_expand(map, n, opts)?;
                let ma: Vec<_> = a.iter().map(|r| (r.point.clone(), r.multiplicity)).collect();
                let mb: Vec<_> = b.iter().map(|r| (r.point.clone(), r.multiplicity)).collect();
                solve::match_multisets(&ma, &mb, opts.agreement_tolerance).map_err(Error::BackendDisagreement)?;
            }
            b
        }
    };
    let work = map.with_prec(opts.precision)?;
    let green = if work.is_polynomial() {
        Some(GreenEvaluator::new(&work, opts.julia.depth)?)
    } else {
        None
    };
    let points = par::try_map(&raw, |r| -> Result<PeriodicPoint> {
        let x = &r.point;
        let res = solve::residual(&work, x, n);
        if res > opts.certification {
            return Err(Error::Precondition(format!(
                "periodic point {x:?} has residual {res:e} above {:e}",
                opts.certification
            )));
        }
        let modulus = work.multiplier_at(x, n).map_or(0.0, |l| l.abs_f64());
        let class = if r.multiplicity > 1 {
            Classification::Indifferent
        } else {
            Classification::from_modulus(modulus)
        };
        Ok(PeriodicPoint {
            location: vec![x.clone()],
            period: n,
            minimal_period: solve::minimal_period_by_orbit(&work, x, n, opts.certification.max(1e-18)),
            multiplier_modulus: vec![modulus],
            classification: class,
            in_small_julia: classify_julia(green.as_ref(), x, class, &opts.julia),
            residual: res,
            multiplicity: r.multiplicity,
        })
    })?;
    Ok(CycleSet::from_points(points, n, map.degree(), 1))
}

/// Periodic points of a product map: the cartesian product of the factor sets.
pub fn find_periodic_product(pm: &ProductMap, n: usize, backend: Backend, opts: &PeriodicOptions) -> Result<CycleSet> {
    let a = find_periodic(&pm.first, n, backend, opts)?;
    let b = find_periodic(&pm.second, n, backend, opts)?;
    Ok(product_set(&a, &b))
}

/// `P_n(f₁) × P_n(f₂)`.
pub fn product_set(a: &CycleSet, b: &CycleSet) -> CycleSet {
    let mut points = Vec::with_capacity(a.len() * b.len());
    for p in &a.points {
        for q in &b.points {
            points.push(PeriodicPoint {
                location: vec![p.location[0].clone(), q.location[0].clone()],
                period: a.n,
                minimal_period: lcm(p.minimal_period, q.minimal_period),
                multiplier_modulus: vec![p.multiplier_modulus[0], q.multiplier_modulus[0]],
                classification: Classification::combine(p.classification, q.classification),
                in_small_julia: JuliaClass::product(p.in_small_julia, q.in_small_julia),
                residual: p.residual.max(q.residual),
                multiplicity: p.multiplicity * q.multiplicity,
            });
        }
    }
    CycleSet::from_points(points, a.n, a.degree, 2)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Divisor sieve: a point's minimal period is the least proper divisor `p`
/// of `n` whose set contains it (within `tol`), else `n`.
pub fn minimal_periods(cs: &CycleSet, lower: &BTreeMap<usize, CycleSet>, tol: f64) -> Result<CycleSet> {
    let divisors: Vec<usize> = (1..cs.n).filter(|p| cs.n % p == 0).collect();
    for p in &divisors {
        if !lower.contains_key(p) {
            return Err(Error::Precondition(format!(
                "cycle set for divisor {p} of {} missing",
                cs.n
            )));
        }
    }
    let mut out = cs.clone();
    for pt in &mut out.points {
        pt.minimal_period = cs.n;
        for p in &divisors {
            let hit = lower[p]
                .points
                .iter()
                .any(|q| q.location.iter().zip(&pt.location).all(|(a, b)| a.distance(b) <= tol));
            if hit {
                pt.minimal_period = *p;
                break;
            }
        }
    }
    Ok(out)
}

/// `P_{n,γ}`: points on the small Julia set with
/// `‖Df^n(a)^{-1}‖ ≤ d^{-(1−γ)n/2}`.
pub fn filter_repelling_gamma(cs: &CycleSet, gamma: f64) -> Result<CycleSet> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::param("gamma", format!("must satisfy 0 < γ < 1, got {gamma}")));
    }
    let threshold = (cs.degree as f64).powf(-(1.0 - gamma) * cs.n as f64 / 2.0);
    let points = cs
        .points
        .iter()
        .filter(|p| p.in_small_julia.in_julia() && p.inverse_norm() <= threshold)
        .cloned()
        .collect();
    Ok(CycleSet::from_points(points, cs.n, cs.degree, cs.dim))
}

/// The sets `Q_n` with `P_{n,γ} ⊂ Q_n ⊂ P_n` exposed for experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QChoice {
    PnGamma(f64),
    Repelling,
    All,
}

impl QChoice {
    pub fn tag(&self) -> String {
        match self {
            QChoice::PnGamma(g) => format!("P_n_gamma({g})"),
            QChoice::Repelling => "repelling".into(),
            QChoice::All => "all".into(),
        }
    }
}

pub fn select_q(cs: &CycleSet, q: QChoice) -> Result<CycleSet> {
    match q {
        QChoice::PnGamma(g) => filter_repelling_gamma(cs, g),
        QChoice::Repelling => Ok(CycleSet::from_points(
            cs.points
                .iter()
                .filter(|p| p.classification == Classification::Repelling)
                .cloned()
                .collect(),
            cs.n,
            cs.degree,
            cs.dim,
        )),
        QChoice::All => Ok(cs.clone()),
    }
}

/// `(A_n, B_n)`: non-repelling points and points off the small Julia set,
/// both with multiplicity.
pub fn count_exceptional(cs: &CycleSet) -> (usize, usize) {
    let a = cs
        .points
        .iter()
        .filter(|p| p.classification != Classification::Repelling)
        .map(|p| p.multiplicity)
        .sum();
    let b = cs
        .points
        .iter()
        .filter(|p| !p.in_small_julia.in_julia())
        .map(|p| p.multiplicity)
        .sum();
    (a, b)
}

/// Distinct non-repelling cycles among the sets, each counted once at its
/// minimal period (sets for the minimal periods must be present).
pub fn nonrepelling_cycles(sets: &[CycleSet]) -> usize {
    sets.iter()
        .map(|cs| {
            let pts = cs
                .points
                .iter()
                .filter(|p| p.minimal_period == cs.n && p.classification != Classification::Repelling)
                .count();
            pts.div_ceil(cs.n)
        })
        .sum()
}
