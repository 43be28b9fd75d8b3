//! Pairings of discrete measures against test functions and exponential
//! rate fits of the resulting discrepancy series.

mod family;

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use family::{make_test_family, Family, TestFunction};

use crate::dynsys::{postcritical, MapF64, RationalMap, SpherePoint};
use crate::error::{Error, Result};
use crate::greenmeas::{preimage_tree, MeasureSample, Provenance, CI_BATCHES};
use crate::percyc::{select_q, CycleSet, QChoice};
use crate::stats;

/// Fits need at least this many usable entries.
pub const MIN_FIT_POINTS: usize = 4;

/// Default depth of the postcritical proxy for preimage discrepancies.
pub const DEFAULT_N0: usize = 5;

/// `Σ w·φ` over `a` minus the same over `b`.
pub fn pair(a: &MeasureSample, b: &MeasureSample, phi: &TestFunction) -> f64 {
    pair_with_ci(a, b, phi).0
}

/// [`pair`] with a 95% half-width combining both samples.
pub fn pair_with_ci(a: &MeasureSample, b: &MeasureSample, phi: &TestFunction) -> (f64, f64) {
    let (ia, ca) = a.integrate(|x| phi.eval_atom(x));
    let (ib, cb) = b.integrate(|x| phi.eval_atom(x));
    (ia - ib, ca.hypot(cb))
}

/// One entry of a discrepancy series.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesPoint {
    pub n: usize,
    /// Signed pairing.
    pub pairing: f64,
    pub ci: f64,
    /// Entered the fit (`|pairing| > 3·ci`, nonzero).
    pub used: bool,
}

/// `|pairing_m| ≤ C·base^m` with `C` fitted on the first half of the range.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeCheck {
    pub base: f64,
    /// Smallest `C` covering the first half of the series.
    pub c_fit: f64,
    /// Smallest `C` covering the whole series.
    pub c_all: f64,
    /// Second-half entries with `|pairing| − ci > c_fit·base^m`.
    pub violations: usize,
    pub checked: usize,
}

impl EnvelopeCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// `|pairing_n| ≈ A·ξⁿ`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub series: Vec<SeriesPoint>,
    pub a: f64,
    pub xi: f64,
    /// Bootstrap 95% half-width on `ξ` (zero for deterministic references).
    pub xi_ci: f64,
    pub r2: f64,
    pub envelope: Option<EnvelopeCheck>,
    /// Orders dropped because they exceed the atom cap.
    pub truncated: Vec<usize>,
}

impl RateFit {
    /// `ξ + CI < 1`.
    pub fn decays(&self) -> bool {
        self.xi + self.xi_ci < 1.0
    }

    /// Whether `ξ ≤ d^{−1/2} + 0.05`; reported only.
    pub fn within_half_power(&self, d: usize) -> bool {
        self.xi <= (d as f64).powf(-0.5) + 0.05
    }

    /// Rate report rows `map_hash,phi_id,q_choice,n,pairing,ci`.
    pub fn csv_rows(&self, map_hash: &str, phi_id: &str, q: &str) -> String {
        let mut out = String::new();
        for p in &self.series {
            let _ = writeln!(out, "{map_hash},{phi_id},{q},{},{:.17e},{:.17e}", p.n, p.pairing, p.ci);
        }
        out
    }
}

pub const RATE_CSV_HEADER: &str = "map_hash,phi_id,q_choice,n,pairing,ci\n";

/// Weighted least-squares fit of `ln|pairing|` against `n` over entries
/// with `|pairing| > 3·ci`. Weights are inverse squared relative errors,
/// so entries close to the noise floor count less.
pub fn fit_series(entries: &[(usize, f64, f64)]) -> Result<RateFit> {
    let series: Vec<SeriesPoint> = entries
        .iter()
        .map(|&(n, pairing, ci)| SeriesPoint {
            n,
            pairing,
            ci,
            used: pairing.is_finite() && pairing != 0.0 && pairing.abs() > 3.0 * ci,
        })
        .collect();
    let (a, xi, r2) = fit_used(&series)?;
    Ok(RateFit {
        series,
        a,
        xi,
        xi_ci: 0.0,
        r2,
        envelope: None,
        truncated: Vec::new(),
    })
}

fn fit_used(series: &[SeriesPoint]) -> Result<(f64, f64, f64)> {
    let used: Vec<&SeriesPoint> = series.iter().filter(|p| p.used).collect();
    if used.len() < MIN_FIT_POINTS {
        return Err(Error::FitRefused(format!(
            "{} usable entries above the noise floor, need {MIN_FIT_POINTS}",
            used.len()
        )));
    }
    let xs: Vec<f64> = used.iter().map(|p| p.n as f64).collect();
    let ys: Vec<f64> = used
        .iter()
        .map(|p| p.pairing.abs().max(f64::MIN_POSITIVE).ln())
        .collect();
    let ws: Vec<f64> = used
        .iter()
        .map(|p| 1.0 / (1e-6 + (p.ci / p.pairing.abs()).powi(2)))
        .collect();
    let fit = stats::wls_fit(&xs, &ys, &ws);
    Ok((fit.intercept.exp(), fit.slope.exp(), fit.r2))
}

/// Where the reference integral `∫φ dμ_ref` comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceKind {
    /// A closed-form measure or its exact quadrature: no error.
    Exact,
    /// A deep preimage tree: error bounded by its last level differences.
    Tree,
    /// A random sample: batch-means confidence interval.
    Sampled,
}

impl ReferenceKind {
    pub fn tag(self) -> &'static str {
        match self {
            ReferenceKind::Exact => "exact",
            ReferenceKind::Tree => "tree",
            ReferenceKind::Sampled => "sampled",
        }
    }
}

/// The reference measure `μ_ref` of a discrepancy series.
#[derive(Clone, Debug)]
pub struct Reference {
    pub kind: ReferenceKind,
    /// Finest level first; trees keep the two coarser levels as well.
    levels: Vec<MeasureSample>,
}

impl Reference {
    pub fn exact(sample: MeasureSample) -> Self {
        Reference {
            kind: ReferenceKind::Exact,
            levels: vec![sample],
        }
    }

    pub fn sampled(sample: MeasureSample) -> Self {
        let kind = if sample.deterministic {
            ReferenceKind::Exact
        } else {
            ReferenceKind::Sampled
        };
        Reference {
            kind,
            levels: vec![sample],
        }
    }

    /// Preimage trees of `a` at depths `depth`, `depth − 1` and `depth − 2`.
    pub fn tree(map: &MapF64, a: &SpherePoint, depth: usize, cap: usize) -> Result<Self> {
        if depth < 3 {
            return Err(Error::param("depth", "reference trees need depth at least 3"));
        }
        let levels = (0..3)
            .map(|k| preimage_tree(map, a, depth - k, cap))
            .collect::<Result<Vec<_>>>()?;
        Ok(Reference {
            kind: ReferenceKind::Tree,
            levels,
        })
    }

    /// Reassembles a tree reference from levels built elsewhere (finest
    /// first, consecutive depths).
    pub fn from_tree_levels(levels: Vec<MeasureSample>) -> Result<Self> {
        if levels.len() != 3 || levels.iter().any(|s| s.provenance != Provenance::PreimageTree) {
            return Err(Error::Precondition(
                "a tree reference takes three preimage-tree levels".into(),
            ));
        }
        Ok(Reference {
            kind: ReferenceKind::Tree,
            levels,
        })
    }

    pub fn sample(&self) -> &MeasureSample {
        &self.levels[0]
    }

    pub fn dim(&self) -> usize {
        self.levels[0].dim
    }

    /// `∫φ dμ_ref` with its error: the sampling half-width for random
    /// samples, `max(|I_D − I_{D−1}|, |I_{D−1} − I_{D−2}|)` for trees (a
    /// geometric tail bound when consecutive differences shrink by at
    /// least half).
    pub fn integrate(&self, phi: &TestFunction) -> (f64, f64) {
        let vals: Vec<(f64, f64)> = self.levels.iter().map(|s| s.integrate(|x| phi.eval_atom(x))).collect();
        match self.kind {
            ReferenceKind::Tree => {
                let d1 = (vals[0].0 - vals[1].0).abs();
                let d2 = (vals[1].0 - vals[2].0).abs();
                (vals[0].0, d1.max(d2))
            }
            _ => vals[0],
        }
    }
}

/// Per-batch weighted sums of `φ` over a random reference sample.
fn reference_batches(reference: &MeasureSample, phi: &TestFunction) -> Vec<(f64, f64)> {
    let n = reference.len();
    let b = CI_BATCHES.min(n.max(1));
    (0..b)
        .map(|k| {
            let (lo, hi) = (k * n / b, (k + 1) * n / b);
            (lo..hi).fold((0.0, 0.0), |(s, w), i| {
                let wi = reference.weights[i];
                (s + wi * phi.eval_atom(reference.atom(i)), w + wi)
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FitOptions {
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            bootstrap: 200,
            seed: 0xb007,
        }
    }
}

fn refit(fit: &RateFit, nus: &[(usize, f64)], reference_value: f64) -> Option<f64> {
    let mut series = fit.series.clone();
    for (p, &(_, v)) in series.iter_mut().zip(nus) {
        p.pairing = v - reference_value;
    }
    fit_used(&series).ok().map(|(_, xi, _)| xi)
}

/// Builds the series `∫φ dν_n − ∫φ dμ_ref` and its fit. The `ν_n` side is
/// deterministic. For sampled references the `ξ` interval comes from a
/// bootstrap over batches; for trees, from refitting with the reference
/// moved to either end of its error bar.
fn discrepancy_fit(
    nus: &[(usize, f64)],
    reference: &Reference,
    phi: &TestFunction,
    opts: &FitOptions,
) -> Result<RateFit> {
    let (ref_value, ref_ci) = reference.integrate(phi);
    let entries: Vec<(usize, f64, f64)> = nus.iter().map(|&(n, v)| (n, v - ref_value, ref_ci)).collect();
    let mut fit = fit_series(&entries)?;
    match reference.kind {
        ReferenceKind::Exact => {}
        ReferenceKind::Tree => {
            let ends: Vec<f64> = [ref_value - ref_ci, ref_value + ref_ci]
                .iter()
                .filter_map(|&r| refit(&fit, nus, r))
                .collect();
            fit.xi_ci = ends.iter().map(|x| (x - fit.xi).abs()).fold(0.0, f64::max);
        }
        ReferenceKind::Sampled if opts.bootstrap > 0 => {
            let sample = reference.sample();
            let batches = reference_batches(sample, phi);
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut xis = Vec::with_capacity(opts.bootstrap);
            for _ in 0..opts.bootstrap {
                let (mut s, mut w) = (0.0, 0.0);
                for _ in 0..batches.len() {
                    let (bs, bw) = batches[rng.gen_range(0..batches.len())];
                    s += bs;
                    w += bw;
                }
                if let Some(xi) = refit(&fit, nus, s / w * sample.total_mass) {
                    xis.push(xi);
                }
            }
            xis.sort_by(f64::total_cmp);
            if xis.len() >= 2 {
                let lo = stats::quantile_sorted(&xis, 0.025);
                let hi = stats::quantile_sorted(&xis, 0.975);
                fit.xi_ci = (hi - lo) / 2.0;
            }
        }
        ReferenceKind::Sampled => {}
    }
    Ok(fit)
}

/// `|⟨d^{−kn} Σ_{a ∈ Q_n} δ_a − μ_ref, φ⟩|` over the given cycle sets,
/// fitted as `A·ξⁿ`. Atoms carry their multiplicity.
pub fn periodic_discrepancy(
    cycles: &[CycleSet],
    phi: &TestFunction,
    q: QChoice,
    reference: &Reference,
    opts: &FitOptions,
) -> Result<RateFit> {
    if cycles.len() < MIN_FIT_POINTS {
        return Err(Error::FitRefused(format!(
            "{} periods given, need {MIN_FIT_POINTS}",
            cycles.len()
        )));
    }
    let mut nus = Vec::with_capacity(cycles.len());
    for cs in cycles {
        if cs.dim != reference.dim() {
            return Err(Error::Precondition(
                "cycle set and reference differ in dimension".into(),
            ));
        }
        let sample = select_q(cs, q)?.to_sample(true);
        nus.push((cs.n, sample.integrate(|x| phi.eval_atom(x)).0));
    }
    discrepancy_fit(&nus, reference, phi, opts)
}

/// `|⟨d^{−m}(f^m)^*δ_a − μ_ref, φ⟩|` for `m` in `ms`, fitted as `A·ξ^m`,
/// with an envelope check against `C·d^{−m/3}`. Orders whose preimage tree
/// exceeds `cap` atoms are dropped and listed in `truncated`.
pub fn preimage_discrepancy(
    map: &RationalMap,
    a: &SpherePoint,
    ms: &[usize],
    phi: &TestFunction,
    reference: &Reference,
    cap: usize,
    opts: &FitOptions,
) -> Result<RateFit> {
    if ms.len() < 2 {
        return Err(Error::FitRefused("an order range of length 1 has no rate".into()));
    }
    let pc = postcritical(map, DEFAULT_N0)?;
    let gap = pc.distance(a);
    if gap < 1e-12 {
        return Err(Error::Precondition(format!(
            "base point is on PC_{DEFAULT_N0} (distance {gap:e})"
        )));
    }
    let fast = map.to_f64();
    let d = map.degree();
    let mut nus = Vec::new();
    let mut truncated = Vec::new();
    for &m in ms {
        match preimage_tree(&fast, a, m, cap) {
            Ok(tree) => nus.push((m, tree.integrate(|x| phi.eval_atom(x)).0)),
            Err(Error::AtomCap { .. }) => truncated.push(m),
            Err(e) => return Err(e),
        }
    }
    if !truncated.is_empty() {
        log::warn!("orders {truncated:?} exceed the {cap}-atom cap and were dropped");
    }
    let mut fit = discrepancy_fit(&nus, reference, phi, opts)?;
    fit.truncated = truncated;
    fit.envelope = Some(envelope_check(&fit.series, (d as f64).powf(-1.0 / 3.0)));
    Ok(fit)
}

/// Fits `C` on the first half of the series and checks the second half.
pub fn envelope_check(series: &[SeriesPoint], base: f64) -> EnvelopeCheck {
    let c = |p: &SeriesPoint| p.pairing.abs() / base.powi(p.n as i32);
    let half = series.len().div_ceil(2);
    let c_fit = series[..half].iter().map(c).fold(0.0, f64::max);
    let c_all = series.iter().map(c).fold(0.0, f64::max);
    let late = &series[half..];
    let violations = late
        .iter()
        .filter(|p| p.pairing.abs() - p.ci > c_fit * base.powi(p.n as i32) * (1.0 + 1e-9))
        .count();
    EnvelopeCheck {
        base,
        c_fit,
        c_all,
        violations,
        checked: late.len(),
    }
}
