use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynsys::SpherePoint;
use crate::error::{Error, Result};
use crate::par;
use crate::stats;

use super::sample::MeasureSample;

/// `Tub(V; ε)` for a finite set `V` (δ = |V| points, a degree-δ
/// hypersurface of P¹). On P¹ × P¹ the set is the union of the horizontal and
/// vertical fibers through `V`.
#[derive(Clone, Debug)]
pub struct TubeQuery {
    pub targets: Vec<SpherePoint>,
    pub epsilon: f64,
    pub kappa: f64,
}

impl TubeQuery {
    pub fn new(targets: Vec<SpherePoint>, epsilon: f64, kappa: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::param("epsilon", "must be positive"));
        }
        if targets.len() < 2 {
            return Err(Error::param("V", "needs at least two points"));
        }
        Ok(TubeQuery {
            targets,
            epsilon,
            kappa,
        })
    }

    /// Radius `δ^{-κ}` tied to the size of `V`.
    pub fn scaled(targets: Vec<SpherePoint>, kappa: f64) -> Result<Self> {
        let delta = targets.len() as f64;
        TubeQuery::new(targets, delta.powf(-kappa), kappa)
    }

    pub fn degree(&self) -> usize {
        self.targets.len()
    }

    fn near(&self, x: &SpherePoint) -> bool {
        self.targets.iter().any(|v| v.distance(x) < self.epsilon)
    }

    /// Whether an atom (one or two coordinates) lies in the tube.
    pub fn contains(&self, atom: &[SpherePoint]) -> bool {
        atom.iter().any(|x| self.near(x))
    }
}

/// Weighted fraction of atoms inside `Tub(V; ε)` with a 95% binomial
/// half-width based on the effective sample size.
pub fn tube_mass(sample: &MeasureSample, q: &TubeQuery) -> Result<(f64, f64)> {
    if sample.is_empty() {
        return Err(Error::Precondition("tube mass of an empty sample".into()));
    }
    let hit: f64 = sample.atoms().filter(|(x, _)| q.contains(x)).map(|(_, w)| w).sum();
    let p = (hit / sample.total_mass).clamp(0.0, 1.0);
    let half = if sample.deterministic {
        0.0
    } else {
        stats::binomial_half_width(p, stats::effective_size(&sample.weights))
    };
    Ok((p, half))
}

/// Power-law fit `ν(Tub(H; t)) ≤ A·t^β` of the tube masses around a point set
/// `H` over `radii`, the finite-sample form of moderateness.
#[derive(Clone, Debug)]
pub struct ModerateFit {
    pub a: f64,
    pub beta: f64,
    pub masses: Vec<(f64, f64)>,
}

pub fn moderateness_fit(sample: &MeasureSample, h: &[SpherePoint], radii: &[f64]) -> Option<ModerateFit> {
    let mut masses = Vec::new();
    for &t in radii {
        let hit: f64 = sample
            .atoms()
            .filter(|(x, _)| x.iter().any(|p| h.iter().any(|c| c.distance(p) < t)))
            .map(|(_, w)| w)
            .sum();
        masses.push((t, hit / sample.total_mass));
    }
    let pts: Vec<(f64, f64)> = masses
        .iter()
        .filter(|(_, m)| *m > 0.0)
        .map(|&(t, m)| (t.ln(), m.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let beta = stats::ols_fit(&xs, &ys).slope;
    if !(beta > 0.0) {
        return None;
    }
    // Smallest prefactor making the bound hold at every sampled radius.
    let a = masses.iter().map(|&(t, m)| m / t.powf(beta)).fold(0.0, f64::max);
    Some(ModerateFit { a, beta, masses })
}

/// One round of a tube-mass battery.
#[derive(Clone, Debug, PartialEq)]
pub struct TubeTrial {
    pub trial: usize,
    pub delta: usize,
    pub epsilon: f64,
    pub mass: f64,
    pub ci: f64,
}

impl TubeTrial {
    /// The `δ^{−1}` bound of the moderate-measure estimate.
    pub fn bound(&self) -> f64 {
        1.0 / self.delta as f64
    }

    pub fn passed(&self) -> bool {
        self.mass <= self.bound() + self.ci
    }
}

/// `trials` rounds for every `δ` in `deltas`. Each round draws `V` as `δ`
/// atoms of `sample` (first coordinate) from a ChaCha8 stream of `seed` and
/// measures `Tub(V; δ^{−κ})`.
pub fn tube_battery(
    sample: &MeasureSample,
    deltas: &[usize],
    kappa: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<TubeTrial>> {
    if sample.is_empty() {
        return Err(Error::Precondition("tube battery on an empty sample".into()));
    }
    if !(kappa > 0.0) {
        return Err(Error::param("kappa", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queries = Vec::with_capacity(trials * deltas.len());
    for trial in 0..trials {
        for &delta in deltas {
            let v = (0..delta)
                .map(|_| sample.atom(rng.gen_range(0..sample.len()))[0])
                .collect();
            queries.push((trial, TubeQuery::scaled(v, kappa)?));
        }
    }
    par::try_map(&queries, |(trial, q)| {
        let (mass, ci) = tube_mass(sample, q)?;
        Ok(TubeTrial {
            trial: *trial,
            delta: q.degree(),
            epsilon: q.epsilon,
            mass,
            ci,
        })
    })
}
