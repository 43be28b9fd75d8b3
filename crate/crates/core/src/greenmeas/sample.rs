use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynsys::{MapF64, SpherePoint};
use crate::error::{Error, Result};
use crate::par;
use crate::stats;

/// Default ceiling on the number of atoms in a full preimage tree.
pub const DEFAULT_ATOM_CAP: usize = 1 << 20;

/// Number of contiguous batches used for batch-means confidence intervals.
pub const CI_BATCHES: usize = 32;

/// Independent backward chains used by [`sample_backward`].
pub const DEFAULT_CHAINS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    BackwardOrbit,
    PreimageTree,
    PeriodicPoints,
    ExactCircle,
    ExactArcsine,
    Product,
}

impl Provenance {
    pub fn tag(self) -> &'static str {
        match self {
            Provenance::BackwardOrbit => "backward-orbit",
            Provenance::PreimageTree => "preimage-tree",
            Provenance::PeriodicPoints => "periodic-points",
            Provenance::ExactCircle => "exact-circle",
            Provenance::ExactArcsine => "exact-arcsine",
            Provenance::Product => "product",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "backward-orbit" => Provenance::BackwardOrbit,
            "preimage-tree" => Provenance::PreimageTree,
            "periodic-points" => Provenance::PeriodicPoints,
            "exact-circle" => Provenance::ExactCircle,
            "exact-arcsine" => Provenance::ExactArcsine,
            "product" => Provenance::Product,
            other => return Err(Error::Parse(format!("unknown provenance `{other}`"))),
        })
    }
}

/// A finite weighted point cloud on P¹ (`dim = 1`) or P¹ × P¹ (`dim = 2`).
///
/// Atoms are stored flat: atom `i` occupies `points[i*dim .. (i+1)*dim]`.
/// Coordinates are double precision; every sampler here is backward-stable
/// (inverse branches contract on the Julia set), so f64 is the natural
/// resolution for measure estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureSample {
    pub dim: usize,
    pub points: Vec<SpherePoint>,
    pub weights: Vec<f64>,
    pub total_mass: f64,
    pub provenance: Provenance,
    pub rng_seed: Option<u64>,
    /// Independent chains the atoms came from (contiguous blocks), 0 if not random.
    pub chains: usize,
    /// True when the atoms are not random draws, so integrals carry no sampling error.
    pub deterministic: bool,
}

impl MeasureSample {
    /// Builds a sample from explicit atoms. Weights must be positive.
    pub fn from_atoms(dim: usize, points: Vec<SpherePoint>, weights: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if dim == 0 || dim > 2 {
            return Err(Error::param("dim", "must be 1 or 2"));
        }
        if points.len() != weights.len() * dim {
            return Err(Error::Precondition(format!(
                "{} coordinates do not match {} weights at dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::param("weight", format!("must be positive and finite, got {w}")));
        }
        let total_mass = weights.iter().sum();
        Ok(MeasureSample {
            dim,
            points,
            weights,
            total_mass,
            provenance,
            rng_seed: None,
            chains: 0,
            deterministic: true,
        })
    }

    /// Uniform probability measure on `points` (atoms of dimension one).
    pub fn uniform(points: Vec<SpherePoint>, provenance: Provenance) -> Result<Self> {
        let n = points.len();
        MeasureSample::from_atoms(1, points, vec![1.0 / n.max(1) as f64; n], provenance)
    }

    pub fn empty(dim: usize, provenance: Provenance) -> Self {
        MeasureSample {
            dim,
            points: Vec::new(),
            weights: Vec::new(),
            total_mass: 0.0,
            provenance,
            rng_seed: None,
            chains: 0,
            deterministic: true,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[SpherePoint] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[SpherePoint], f64)> + '_ {
        self.points.chunks(self.dim).zip(self.weights.iter().copied())
    }

    /// `∫ φ dν` together with a 95% Monte Carlo half-width (zero for
    /// deterministic samples). Random samples use batch means over the
    /// chain-ordered atoms.
    pub fn integrate<F>(&self, phi: F) -> (f64, f64)
    where
        F: Fn(&[SpherePoint]) -> f64 + Sync,
    {
        let values: Vec<f64> = par::map_range(self.len(), |i| phi(self.atom(i)));
        let total: f64 = values.iter().zip(&self.weights).map(|(v, w)| v * w).sum();
        if self.deterministic || self.is_empty() {
            return (total, 0.0);
        }
        let (mean, half) = stats::batch_mean_ci(&values, &self.weights, CI_BATCHES);
        (mean * self.total_mass, half * self.total_mass)
    }

    /// `f_* ν`: every atom moved by the map (componentwise for products).
    pub fn push_forward(&self, maps: &[&MapF64]) -> Result<MeasureSample> {
        if maps.len() != self.dim {
            return Err(Error::Precondition(format!(
                "{} maps given for a sample of dimension {}",
                maps.len(),
                self.dim
            )));
        }
        let dim = self.dim;
        let points = par::map_range(self.points.len(), |i| maps[i % dim].apply(&self.points[i]));
        Ok(MeasureSample { points, ..self.clone() })
    }

    /// Cartesian product measure `a ⊗ b` of two one-dimensional samples.
    pub fn product(a: &MeasureSample, b: &MeasureSample, cap: usize) -> Result<MeasureSample> {
        if a.dim != 1 || b.dim != 1 {
            return Err(Error::Precondition("product factors must be one-dimensional".into()));
        }
        let n = a.len() as u128 * b.len() as u128;
        if n > cap as u128 {
            return Err(Error::AtomCap { requested: n, cap });
        }
        let mut points = Vec::with_capacity(2 * n as usize);
        let mut weights = Vec::with_capacity(n as usize);
        for (x, wx) in a.atoms() {
            for (y, wy) in b.atoms() {
                points.push(x[0]);
                points.push(y[0]);
                weights.push(wx * wy);
            }
        }
        Ok(MeasureSample {
            dim: 2,
            points,
            total_mass: weights.iter().sum(),
            weights,
            provenance: Provenance::Product,
            rng_seed: a.rng_seed.or(b.rng_seed),
            chains: 0,
            deterministic: a.deterministic && b.deterministic,
        })
    }

    /// Text form: a `#` header with provenance and seed, then one atom per
    /// line as `re im weight` (`re1 im1 re2 im2 weight` for products), with
    /// `inf inf` for the point at infinity.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let seed = self.rng_seed.map_or("none".to_string(), |s| s.to_string());
        let _ = writeln!(
            out,
            "# provenance={} seed={} dim={} atoms={} chains={} deterministic={}",
            self.provenance.tag(),
            seed,
            self.dim,
            self.len(),
            self.chains,
            self.deterministic
        );
        for (x, w) in self.atoms() {
            for p in x {
                match p.affine() {
                    Some(z) => {
                        let _ = write!(out, "{:e} {:e} ", z.re, z.im);
                    }
                    None => out.push_str("inf inf "),
                }
            }
            let _ = writeln!(out, "{w:e}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<MeasureSample> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|l| l.strip_prefix('#'))
            .ok_or_else(|| Error::Parse("missing sample header".into()))?;
        let mut provenance = None;
        let mut seed = None;
        let mut dim = 1;
        let mut chains = 0;
        let mut deterministic = true;
        let mut atoms = None;
        for field in header.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header field `{field}`")))?;
            let bad = |_| Error::Parse(format!("bad value in `{field}`"));
            match k {
                "provenance" => provenance = Some(Provenance::from_tag(v)?),
                "seed" if v == "none" => seed = None,
                "seed" => seed = Some(v.parse::<u64>().map_err(bad)?),
                "dim" => dim = v.parse::<usize>().map_err(bad)?,
                "chains" => chains = v.parse::<usize>().map_err(bad)?,
                "atoms" => atoms = Some(v.parse::<usize>().map_err(bad)?),
                "deterministic" => deterministic = v == "true",
                _ => return Err(Error::Parse(format!("unknown header key `{k}`"))),
            }
        }
        let provenance = provenance.ok_or_else(|| Error::Parse("header lacks provenance".into()))?;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 2 * dim + 1 {
                return Err(Error::Parse(format!("atom line `{line}` has {} fields", tok.len())));
            }
            for c in tok[..2 * dim].chunks(2) {
                points.push(if c[0] == "inf" {
                    SpherePoint::infinity()
                } else {
                    let re = c[0].parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?;
                    let im = c[1].parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?;
                    SpherePoint::finite(Complex64::new(re, im))
                });
            }
            weights.push(tok[2 * dim].parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?);
        }
        if let Some(n) = atoms {
            if n != weights.len() {
                return Err(Error::Parse(format!(
                    "header promises {n} atoms, found {}",
                    weights.len()
                )));
            }
        }
        let mut s = if weights.is_empty() {
            MeasureSample::empty(dim, provenance)
        } else {
            MeasureSample::from_atoms(dim, points, weights, provenance)?
        };
        s.rng_seed = seed;
        s.chains = chains;
        s.deterministic = deterministic;
        Ok(s)
    }
}

/// A seed point far from the Julia set and postcritical set of the test maps:
/// `|z| = 10` for polynomials, a generic point otherwise.
pub fn default_seed(map: &MapF64) -> SpherePoint {
    if map.is_polynomial() {
        SpherePoint::finite(Complex64::new(10.0, 0.0))
    } else {
        SpherePoint::finite(Complex64::new(0.371_8, 0.519_1))
    }
}

/// Random backward orbit split over [`DEFAULT_CHAINS`] independent chains.
pub fn sample_backward(map: &MapF64, seed: &SpherePoint, burn_in: usize, count: usize, rng_seed: u64) -> MeasureSample {
    sample_backward_chains(map, seed, burn_in, count, rng_seed, DEFAULT_CHAINS)
}

/// Random backward orbits: each step picks one of the `d` preimages
/// uniformly (with multiplicity). Chain `c` uses stream `c` of a ChaCha8
/// generator seeded with `rng_seed`, discards `burn_in` steps and then emits
/// its share of `count` atoms, so output does not depend on thread count.
pub fn sample_backward_chains(
    map: &MapF64,
    seed: &SpherePoint,
    burn_in: usize,
    count: usize,
    rng_seed: u64,
    chains: usize,
) -> MeasureSample {
    if count == 0 {
        let mut s = MeasureSample::empty(1, Provenance::BackwardOrbit);
        s.rng_seed = Some(rng_seed);
        s.deterministic = false;
        return s;
    }
    let chains = chains.clamp(1, count);
    let d = map.degree;
    let blocks = par::map_range(chains, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(c as u64);
        let share = count / chains + usize::from(c < count % chains);
        let mut x = *seed;
        let mut out = Vec::with_capacity(share);
        for step in 0..burn_in + share {
            let pre = map.preimages(&x);
            x = pre[rng.gen_range(0..d)];
            if step >= burn_in {
                out.push(x);
            }
        }
        out
    });
    let points: Vec<SpherePoint> = blocks.into_iter().flatten().collect();
    let w = 1.0 / count as f64;
    MeasureSample {
        dim: 1,
        weights: vec![w; points.len()],
        total_mass: w * points.len() as f64,
        points,
        provenance: Provenance::BackwardOrbit,
        rng_seed: Some(rng_seed),
        chains,
        deterministic: false,
    }
}

/// All `d^n` preimages of `a` under `f^n` with multiplicity, weight `d^{-n}`.
pub fn preimage_tree(map: &MapF64, a: &SpherePoint, n: usize, cap: usize) -> Result<MeasureSample> {
    let requested = (map.degree as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if requested > cap as u128 {
        return Err(Error::AtomCap { requested, cap });
    }
    let mut level = vec![*a];
    for _ in 0..n {
        level = par::flat_map(&level, |x| map.preimages(x));
    }
    let w = 1.0 / requested as f64;
    Ok(MeasureSample {
        dim: 1,
        weights: vec![w; level.len()],
        total_mass: 1.0,
        points: level,
        provenance: Provenance::PreimageTree,
        rng_seed: None,
        chains: 0,
        deterministic: true,
    })
}

/// Preimage tree of `(a₁, a₂)` under a product map: the product of the
/// component trees, `d^{2n}` atoms.
pub fn preimage_tree_product(
    maps: (&MapF64, &MapF64),
    a: (&SpherePoint, &SpherePoint),
    n: usize,
    cap: usize,
) -> Result<MeasureSample> {
    let t1 = preimage_tree(maps.0, a.0, n, cap)?;
    let t2 = preimage_tree(maps.1, a.1, n, cap)?;
    let mut s = MeasureSample::product(&t1, &t2, cap)?;
    s.provenance = Provenance::PreimageTree;
    s.total_mass = 1.0;
    Ok(s)
}

/// Closed-form equilibrium measures: Lebesgue on the unit circle (`z^d`) and
/// the arcsine law on `[−2, 2]` (`z² − 2`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExactKind {
    Circle,
    Arcsine,
}

impl ExactKind {
    fn provenance(self) -> Provenance {
        match self {
            ExactKind::Circle => Provenance::ExactCircle,
            ExactKind::Arcsine => Provenance::ExactArcsine,
        }
    }

    fn point(self, u: f64) -> SpherePoint {
        match self {
            ExactKind::Circle => SpherePoint::finite(Complex64::from_polar(1.0, TAU * u)),
            ExactKind::Arcsine => SpherePoint::finite(Complex64::new(2.0 * (PI * u).cos(), 0.0)),
        }
    }
}

/// `count` i.i.d. draws from the exact measure.
pub fn exact_measure(kind: ExactKind, count: usize, rng_seed: u64) -> MeasureSample {
    let mut s = MeasureSample::empty(1, kind.provenance());
    s.rng_seed = Some(rng_seed);
    s.deterministic = false;
    if count == 0 {
        return s;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    s.points = (0..count).map(|_| kind.point(rng.gen::<f64>())).collect();
    s.weights = vec![1.0 / count as f64; count];
    s.total_mass = 1.0;
    s.chains = 1;
    s
}

/// Deterministic quadrature for the exact measure: `count` equispaced circle
/// points (exact on trigonometric polynomials of degree `< count`) or the
/// Gauss–Chebyshev nodes `2cos(π(k+½)/count)` (exact on polynomials of degree
/// `< 2·count` against the arcsine law).
pub fn exact_quadrature(kind: ExactKind, count: usize) -> MeasureSample {
    let mut s = MeasureSample::empty(1, kind.provenance());
    if count == 0 {
        return s;
    }
    let u = |k: usize| match kind {
        ExactKind::Circle => k as f64 / count as f64,
        ExactKind::Arcsine => (k as f64 + 0.5) / count as f64,
    };
    s.points = (0..count).map(|k| kind.point(u(k))).collect();
    s.weights = vec![1.0 / count as f64; count];
    s.total_mass = 1.0;
    s
}
