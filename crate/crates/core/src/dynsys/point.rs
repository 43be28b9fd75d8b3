use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;
use rug::Float;

use crate::error::{Error, Result};
use crate::mpnum::BigComplex;

/// Affine chart of P¹: `Finite` reads `[t : 1]`, `Infinite` reads `[1 : t]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Chart {
    Finite,
    Infinite,
}

impl Chart {
    pub fn other(self) -> Chart {
        match self {
            Chart::Finite => Chart::Infinite,
            Chart::Infinite => Chart::Finite,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Chart::Finite => "finite",
            Chart::Infinite => "infinite",
        }
    }
}

/// A point of P¹ held as a chart coordinate of modulus at most one.
///
/// The homogeneous pair is `[t : 1]` or `[1 : t]`, so `max(|z|, |w|) = 1`
/// always holds and the chart switches at the equator `|z| = 1`.
#[derive(Clone, PartialEq)]
pub struct ProjectivePoint {
    chart: Chart,
    coord: BigComplex,
}

impl ProjectivePoint {
    /// `[z : w]`, rejecting the zero pair.
    pub fn from_homogeneous(z: &BigComplex, w: &BigComplex) -> Result<Self> {
        if z.is_zero() && w.is_zero() {
            return Err(Error::Precondition("[0 : 0] is not a point of P¹".into()));
        }
        Ok(Self::normalize(z, w))
    }

    /// Same as [`from_homogeneous`](Self::from_homogeneous) for pairs known to be nonzero.
    pub(crate) fn normalize(z: &BigComplex, w: &BigComplex) -> Self {
        if w.abs() >= z.abs() {
            ProjectivePoint {
                chart: Chart::Finite,
                coord: z / w,
            }
        } else {
            ProjectivePoint {
                chart: Chart::Infinite,
                coord: w / z,
            }
        }
    }

    /// The affine point `z ∈ C`.
    pub fn finite(z: BigComplex) -> Self {
        let one = BigComplex::one(z.prec());
        Self::normalize(&z, &one)
    }

    pub fn from_c64(z: Complex64, prec: u32) -> Self {
        Self::finite(BigComplex::from_c64(z, prec))
    }

    pub fn infinity(prec: u32) -> Self {
        ProjectivePoint {
            chart: Chart::Infinite,
            coord: BigComplex::zero(prec),
        }
    }

    /// Point given by a coordinate in an explicit chart; renormalized if `|t| > 1`.
    pub fn in_chart(chart: Chart, t: BigComplex) -> Self {
        let one = BigComplex::one(t.prec());
        match chart {
            Chart::Finite => Self::normalize(&t, &one),
            Chart::Infinite => Self::normalize(&one, &t),
        }
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    /// Coordinate in the point's own chart, `|t| ≤ 1`.
    pub fn coord(&self) -> &BigComplex {
        &self.coord
    }

    pub fn prec(&self) -> u32 {
        self.coord.prec()
    }

    pub fn with_prec(&self, prec: u32) -> Self {
        ProjectivePoint {
            chart: self.chart,
            coord: self.coord.with_prec(prec),
        }
    }

    pub fn is_infinity(&self) -> bool {
        self.chart == Chart::Infinite && self.coord.is_zero()
    }

    /// Homogeneous pair with max-norm one.
    pub fn homogeneous(&self) -> (BigComplex, BigComplex) {
        let one = BigComplex::one(self.prec());
        match self.chart {
            Chart::Finite => (self.coord.clone(), one),
            Chart::Infinite => (one, self.coord.clone()),
        }
    }

    /// Coordinate in the requested chart, `None` if the point is that chart's pole.
    pub fn coord_in(&self, chart: Chart) -> Option<BigComplex> {
        if chart == self.chart {
            Some(self.coord.clone())
        } else if self.coord.is_zero() {
            None
        } else {
            Some(self.coord.recip())
        }
    }

    /// `z/w`, or `None` at infinity.
    pub fn affine(&self) -> Option<BigComplex> {
        self.coord_in(Chart::Finite)
    }

    pub fn to_sphere(&self) -> SpherePoint {
        SpherePoint {
            chart: self.chart,
            coord: self.coord.to_c64(),
        }
    }

    /// Chordal distance `2|z₁w₂ − z₂w₁| / (‖v₁‖‖v₂‖)` at working precision.
    pub fn chordal(&self, other: &ProjectivePoint) -> Float {
        let (z1, w1) = self.homogeneous();
        let (z2, w2) = other.homogeneous();
        let cross = (&(&z1 * &w2) - &(&z2 * &w1)).abs();
        let n1 = Float::with_val(cross.prec(), z1.norm_sqr() + w1.norm_sqr()).sqrt();
        let n2 = Float::with_val(cross.prec(), z2.norm_sqr() + w2.norm_sqr()).sqrt();
        cross * 2u32 / n1 / n2
    }

    /// Great-circle distance on the unit Riemann sphere, in `[0, π]`.
    pub fn distance(&self, other: &ProjectivePoint) -> f64 {
        chord_to_angle(self.chordal(other).to_f64())
    }

    /// Serialized as `chart:re,im@prec`.
    pub fn to_decimal(&self) -> String {
        let tag = match self.chart {
            Chart::Finite => "F",
            Chart::Infinite => "I",
        };
        format!("{tag}:{}", self.coord.to_decimal())
    }

    pub fn parse_decimal(text: &str) -> Result<Self> {
        let (tag, body) = text
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("missing chart tag in `{text}`")))?;
        let chart = match tag.trim() {
            "F" => Chart::Finite,
            "I" => Chart::Infinite,
            other => return Err(Error::Parse(format!("unknown chart tag `{other}`"))),
        };
        Ok(Self::in_chart(chart, BigComplex::parse_decimal(body)?))
    }
}

impl fmt::Debug for ProjectivePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.chart {
            Chart::Finite => write!(f, "[{:?} : 1]", self.coord),
            Chart::Infinite => write!(f, "[1 : {:?}]", self.coord),
        }
    }
}

pub(crate) fn chord_to_angle(chord: f64) -> f64 {
    2.0 * (chord / 2.0).clamp(0.0, 1.0).asin()
}

/// Double-precision point of P¹ with the same chart convention as [`ProjectivePoint`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpherePoint {
    pub chart: Chart,
    pub coord: Complex64,
}

impl SpherePoint {
    pub fn finite(z: Complex64) -> Self {
        Self::normalize(z, Complex64::new(1.0, 0.0))
    }

    pub fn infinity() -> Self {
        SpherePoint {
            chart: Chart::Infinite,
            coord: Complex64::new(0.0, 0.0),
        }
    }

    pub fn normalize(z: Complex64, w: Complex64) -> Self {
        if w.norm_sqr() >= z.norm_sqr() {
            SpherePoint {
                chart: Chart::Finite,
                coord: z / w,
            }
        } else {
            SpherePoint {
                chart: Chart::Infinite,
                coord: w / z,
            }
        }
    }

    pub fn in_chart(chart: Chart, t: Complex64) -> Self {
        let one = Complex64::new(1.0, 0.0);
        match chart {
            Chart::Finite => Self::normalize(t, one),
            Chart::Infinite => Self::normalize(one, t),
        }
    }

    pub fn homogeneous(&self) -> (Complex64, Complex64) {
        let one = Complex64::new(1.0, 0.0);
        match self.chart {
            Chart::Finite => (self.coord, one),
            Chart::Infinite => (one, self.coord),
        }
    }

    pub fn is_infinity(&self) -> bool {
        self.chart == Chart::Infinite && self.coord == Complex64::new(0.0, 0.0)
    }

    /// `z/w`, or `None` at infinity.
    pub fn affine(&self) -> Option<Complex64> {
        match self.chart {
            Chart::Finite => Some(self.coord),
            Chart::Infinite if self.coord.norm_sqr() == 0.0 => None,
            Chart::Infinite => Some(self.coord.inv()),
        }
    }

    pub fn coord_in(&self, chart: Chart) -> Option<Complex64> {
        if chart == self.chart {
            Some(self.coord)
        } else if self.coord.norm_sqr() == 0.0 {
            None
        } else {
            Some(self.coord.inv())
        }
    }

    /// Coordinates on the unit sphere, `0 ↦ (0,0,−1)` and `∞ ↦ (0,0,1)`.
    pub fn to_xyz(&self) -> [f64; 3] {
        let t = self.coord;
        let s = 1.0 + t.norm_sqr();
        match self.chart {
            Chart::Finite => [2.0 * t.re / s, 2.0 * t.im / s, (t.norm_sqr() - 1.0) / s],
            Chart::Infinite => [2.0 * t.re / s, -2.0 * t.im / s, (1.0 - t.norm_sqr()) / s],
        }
    }

    pub fn from_xyz(p: [f64; 3]) -> Self {
        let [x, y, z] = p;
        // Stereographic projection from the pole nearest the point.
        if z <= 0.0 {
            SpherePoint::in_chart(Chart::Finite, Complex64::new(x, y) / (1.0 - z))
        } else {
            SpherePoint::in_chart(Chart::Infinite, Complex64::new(x, -y) / (1.0 + z))
        }
    }

    pub fn chordal(&self, other: &SpherePoint) -> f64 {
        let (z1, w1) = self.homogeneous();
        let (z2, w2) = other.homogeneous();
        let cross = (z1 * w2 - z2 * w1).norm();
        2.0 * cross / ((z1.norm_sqr() + w1.norm_sqr()).sqrt() * (z2.norm_sqr() + w2.norm_sqr()).sqrt())
    }

    /// Great-circle distance on the unit Riemann sphere, in `[0, π]`.
    pub fn distance(&self, other: &SpherePoint) -> f64 {
        chord_to_angle(self.chordal(other))
    }

    pub fn to_projective(&self, prec: u32) -> ProjectivePoint {
        ProjectivePoint::in_chart(self.chart, BigComplex::from_c64(self.coord, prec))
    }
}

impl Default for SpherePoint {
    fn default() -> Self {
        SpherePoint::finite(Complex64::new(0.0, 0.0))
    }
}

impl From<&ProjectivePoint> for SpherePoint {
    fn from(p: &ProjectivePoint) -> Self {
        p.to_sphere()
    }
}

impl From<Complex64> for SpherePoint {
    fn from(z: Complex64) -> Self {
        SpherePoint::finite(z)
    }
}

/// Groups points lying within `tol` (spherical distance) of each other,
/// transitively. Each group lists indices in increasing order and groups are
/// ordered by their first index.
pub fn cluster_points(points: &[ProjectivePoint], tol: f64) -> Vec<Vec<usize>> {
    let xyz: Vec<[f64; 3]> = points.iter().map(|p| p.to_sphere().to_xyz()).collect();
    cluster_by(&xyz, tol, |i, j| points[i].distance(&points[j]) <= tol)
}

/// f64 variant of [`cluster_points`].
pub fn cluster_sphere_points(points: &[SpherePoint], tol: f64) -> Vec<Vec<usize>> {
    let xyz: Vec<[f64; 3]> = points.iter().map(SpherePoint::to_xyz).collect();
    cluster_by(&xyz, tol, |i, j| points[i].distance(&points[j]) <= tol)
}

fn cluster_by<F: Fn(usize, usize) -> bool>(xyz: &[[f64; 3]], tol: f64, close: F) -> Vec<Vec<usize>> {
    let n = xyz.len();
    // Cells must be wider than both the tolerance and f64 rounding of xyz.
    let h = (2.0 * tol).max(1e-9);
    let key = |p: &[f64; 3]| {
        (
            (p[0] / h).floor() as i64,
            (p[1] / h).floor() as i64,
            (p[2] / h).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in xyz.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        let (a, b, c) = key(&xyz[i]);
        for da in -1..=1 {
            for db in -1..=1 {
                for dc in -1..=1 {
                    if let Some(bucket) = grid.get(&(a + da, b + db, c + dc)) {
                        for &j in bucket {
                            if j <= i {
                                continue;
                            }
                            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                            if ri != rj && close(i, j) {
                                let (lo, hi) = if ri < rj { (ri, rj) } else { (rj, ri) };
                                parent[hi] = lo;
                            }
                        }
                    }
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        match slot.get(&r) {
            Some(&g) => groups[g].push(i),
            None => {
                slot.insert(r, groups.len());
                groups.push(vec![i]);
            }
        }
    }
    groups
}
