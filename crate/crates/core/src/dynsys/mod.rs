//! Rational maps of P¹, product maps on P¹ × P¹, and their critical data.

mod map;
mod point;
mod spec;

pub use map::{closure_tolerance, inverse_operator_norm, DynMap, Jet, MapF64, Multiplier, ProductMap, RationalMap};
pub use point::{cluster_points, cluster_sphere_points, Chart, ProjectivePoint, SpherePoint};
pub use spec::{Decimal, DecimalComplex, MapSpec, RationalSpec};

use crate::error::Result;

/// Spherical tolerance under which two points of a computed set are one point.
pub const DEDUP_TOLERANCE: f64 = 1e-20;

/// `PC_m = f(C_f) ∪ … ∪ f^m(C_f)`, each point tagged with the first iterate
/// index that produced it.
#[derive(Clone, Debug)]
pub struct PostcriticalSet {
    pub order: usize,
    pub points: Vec<(ProjectivePoint, usize)>,
}

impl PostcriticalSet {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn sphere_points(&self) -> Vec<SpherePoint> {
        self.points.iter().map(|(p, _)| p.to_sphere()).collect()
    }

    /// Spherical distance from `x` to the set (`π` when empty).
    pub fn distance(&self, x: &SpherePoint) -> f64 {
        self.points
            .iter()
            .map(|(p, _)| p.to_sphere().distance(x))
            .fold(std::f64::consts::PI, f64::min)
    }

    /// True when every point of `self` lies within `tol` of `other`.
    pub fn is_subset_of(&self, other: &PostcriticalSet, tol: f64) -> bool {
        self.points
            .iter()
            .all(|(p, _)| other.points.iter().any(|(q, _)| p.distance(q) <= tol))
    }
}

/// Forward orbits of the critical points up to order `m`, deduplicated.
pub fn postcritical(map: &RationalMap, m: usize) -> Result<PostcriticalSet> {
    let mut points: Vec<(ProjectivePoint, usize)> = Vec::new();
    if m == 0 {
        return Ok(PostcriticalSet { order: 0, points });
    }
    let mut crit: Vec<ProjectivePoint> = Vec::new();
    for c in map.critical_points()? {
        if !crit.iter().any(|x| x.distance(&c) <= DEDUP_TOLERANCE) {
            crit.push(c);
        }
    }
    let mut frontier = crit;
    for j in 1..=m {
        frontier = frontier.iter().map(|x| map.apply(x)).collect();
        for x in &frontier {
            if !points.iter().any(|(p, _)| p.distance(x) <= DEDUP_TOLERANCE) {
                points.push((x.clone(), j));
            }
        }
    }
    Ok(PostcriticalSet { order: m, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn postcritical_examples() {
        let sq = RationalMap::power(2, 128).unwrap();
        let pc = postcritical(&sq, 5).unwrap();
        assert_eq!(pc.len(), 2);

        let f = RationalMap::unicritical(2, Complex64::new(-1.0, 0.0), 128).unwrap();
        let pc = postcritical(&f, 2).unwrap();
        assert_eq!(pc.len(), 3);
        for z in [-1.0, 0.0] {
            let p = ProjectivePoint::from_c64(Complex64::new(z, 0.0), 128);
            assert!(pc.points.iter().any(|(q, _)| q.distance(&p) < 1e-30));
        }
        assert!(pc.points.iter().any(|(q, _)| q.is_infinity()));

        assert!(postcritical(&f, 0).unwrap().is_empty());
    }

    #[test]
    fn postcritical_is_monotone() {
        let f = RationalMap::unicritical(2, Complex64::new(-0.12, 0.75), 128).unwrap();
        let mut prev = postcritical(&f, 0).unwrap();
        for m in 1..8 {
            let next = postcritical(&f, m).unwrap();
            assert!(prev.is_subset_of(&next, DEDUP_TOLERANCE));
            assert!(next.points.iter().all(|&(_, j)| (1..=m).contains(&j)));
            prev = next;
        }
    }
}
