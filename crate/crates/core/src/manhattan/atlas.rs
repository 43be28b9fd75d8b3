use num_complex::Complex64;

use crate::dynsys::{ProjectivePoint, SpherePoint};
use crate::mpnum::BigComplex;

/// Stereographic coordinates are divided by this so that the unit square of
/// every chart reaches well past the equator of its axis point.
pub const CHART_SCALE: f64 = 5.0;

/// One chart `π_j = R_j / 5`, where `R_j` is the rotation of the sphere taking
/// an axis point to 0. `Ω_j` is the preimage of the open unit square.
#[derive(Clone, Debug)]
pub struct AtlasChart {
    /// The axis point sent to the chart origin.
    pub axis: SpherePoint,
    /// Homogeneous matrix `[[a, b], [c, d]]` of `R_j`.
    m: [Complex64; 4],
    /// Measured bound on `‖dπ_j‖` and `‖dπ_j^{-1}‖` over `Ω_j`.
    pub a2: f64,
}

impl AtlasChart {
    fn new(axis: SpherePoint, m: [Complex64; 4]) -> Self {
        AtlasChart { axis, m, a2: 0.0 }
    }

    fn inverse(&self) -> [Complex64; 4] {
        let [a, b, c, d] = self.m;
        [d, -b, -c, a]
    }

    /// Chart coordinate of `x`, `None` at the antipode of the axis point.
    pub fn to_chart(&self, x: &SpherePoint) -> Option<Complex64> {
        let (z, w) = x.homogeneous();
        let [a, b, c, d] = self.m;
        let (zz, ww) = (a * z + b * w, c * z + d * w);
        if ww.norm_sqr() == 0.0 {
            return None;
        }
        Some(zz / ww / CHART_SCALE)
    }

    pub fn from_chart(&self, u: Complex64) -> SpherePoint {
        let [a, b, c, d] = self.inverse();
        let s = u * CHART_SCALE;
        let one = Complex64::new(1.0, 0.0);
        SpherePoint::normalize(a * s + b * one, c * s + d * one)
    }

    pub fn to_chart_big(&self, x: &ProjectivePoint) -> Option<BigComplex> {
        let (z, w) = x.homogeneous();
        let prec = x.prec();
        let [a, b, c, d] = self.m.map(|v| BigComplex::from_c64(v, prec));
        let zz = &(&a * &z) + &(&b * &w);
        let ww = &(&c * &z) + &(&d * &w);
        if ww.is_zero() {
            return None;
        }
        Some(&zz / &ww.scale_f64(CHART_SCALE))
    }

    pub fn from_chart_big(&self, u: &BigComplex) -> ProjectivePoint {
        let prec = u.prec();
        let [a, b, c, d] = self.inverse().map(|v| BigComplex::from_c64(v, prec));
        let s = u.scale_f64(CHART_SCALE);
        let zz = &(&a * &s) + &b;
        let ww = &(&c * &s) + &d;
        ProjectivePoint::from_homogeneous(&zz, &ww).expect("chart maps are invertible")
    }

    /// `‖dπ_j‖` at `x` from the spherical (great-circle) metric to the
    /// Euclidean metric of the chart.
    pub fn derivative_norm(&self, u: Complex64) -> f64 {
        let w2 = (u * CHART_SCALE).norm_sqr();
        (1.0 + w2) / (2.0 * CHART_SCALE)
    }

    /// Whether `x` lies in `s·Ω_j`.
    pub fn contains(&self, x: &SpherePoint, s: f64) -> bool {
        self.to_chart(x).is_some_and(|u| u.re.abs() < s && u.im.abs() < s)
    }
}

/// Fixed atlas of six charts centred at `0, ∞, ±1, ±i`.
#[derive(Clone, Debug)]
pub struct Atlas {
    pub charts: Vec<AtlasChart>,
}

impl Atlas {
    pub fn build() -> Self {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let one = c(1.0, 0.0);
        let zero = c(0.0, 0.0);
        let mut charts = vec![
            AtlasChart::new(SpherePoint::finite(zero), [one, zero, zero, one]),
            AtlasChart::new(SpherePoint::infinity(), [zero, one, one, zero]),
        ];
        // z ↦ (z − a)/(ā z + 1) is a rotation taking a on the unit circle to 0.
        for a in [c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0)] {
            charts.push(AtlasChart::new(SpherePoint::finite(a), [one, -a, a.conj(), one]));
        }
        for chart in &mut charts {
            chart.a2 = grid_bound(chart, 101);
        }
        Atlas { charts }
    }

    pub fn len(&self) -> usize {
        self.charts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charts.is_empty()
    }

    /// Largest derivative bound over the charts.
    pub fn a2(&self) -> f64 {
        self.charts.iter().map(|c| c.a2).fold(0.0, f64::max)
    }

    /// The chart in which `x` is most central (smallest max-norm coordinate).
    pub fn best_chart(&self, x: &SpherePoint) -> (usize, Complex64) {
        self.charts
            .iter()
            .enumerate()
            .filter_map(|(j, c)| c.to_chart(x).map(|u| (j, u)))
            .min_by(|a, b| max_norm(a.1).total_cmp(&max_norm(b.1)))
            .expect("some chart contains every point")
    }

    /// Whether some `(1/10)·Ω_j` contains `x`.
    pub fn covers(&self, x: &SpherePoint) -> bool {
        max_norm(self.best_chart(x).1) < 0.1
    }
}

pub(crate) fn max_norm(u: Complex64) -> f64 {
    u.re.abs().max(u.im.abs())
}

/// `max(‖dπ‖, ‖dπ^{-1}‖)` over a `k × k` grid of the closed unit square.
fn grid_bound(chart: &AtlasChart, k: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..k {
        for l in 0..k {
            let u = Complex64::new(
                -1.0 + 2.0 * i as f64 / (k - 1) as f64,
                -1.0 + 2.0 * l as f64 / (k - 1) as f64,
            );
            let n = chart.derivative_norm(u);
            worst = worst.max(n).max(1.0 / n);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng) -> SpherePoint {
        let z: f64 = rng.gen_range(-1.0..1.0);
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let s = (1.0 - z * z).sqrt();
        SpherePoint::from_xyz([s * phi.cos(), s * phi.sin(), z])
    }

    #[test]
    fn tenth_charts_cover_the_sphere() {
        let atlas = Atlas::build();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100_000 {
            assert!(atlas.covers(&random_point(&mut rng)));
        }
    }

    #[test]
    fn derivative_bounds_hold() {
        let atlas = Atlas::build();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for chart in &atlas.charts {
            assert!((chart.a2 - 10.0).abs() < 1e-9);
            for _ in 0..2000 {
                let x = random_point(&mut rng);
                if let Some(u) = chart.to_chart(&x).filter(|u| max_norm(*u) < 1.0) {
                    // Finite-difference check of the analytic norm.
                    let h = 1e-7;
                    let y = chart.from_chart(u + h);
                    let ratio = h / x.distance(&y);
                    assert!((ratio / chart.derivative_norm(u) - 1.0).abs() < 1e-4);
                    assert!(ratio <= chart.a2 && 1.0 / ratio <= chart.a2);
                }
            }
        }
    }

    #[test]
    fn overlaps_are_comparable() {
        let atlas = Atlas::build();
        let a2 = atlas.a2();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5000 {
            let x = random_point(&mut rng);
            let (_, u) = atlas.best_chart(&x);
            let j = atlas.best_chart(&x).0;
            let y = atlas.charts[j].from_chart(u + Complex64::from_polar(1e-6, rng.gen_range(0.0..std::f64::consts::TAU)));
            for c in &atlas.charts {
                if let (Some(a), Some(b)) = (c.to_chart(&x), c.to_chart(&y)) {
                    if max_norm(a) < 1.0 && max_norm(b) < 1.0 {
                        let ratio = (a - b).norm() / 1e-6;
                        assert!(ratio <= a2 * a2 && ratio >= 1.0 / (a2 * a2));
                    }
                }
            }
        }
    }

    #[test]
    fn big_and_f64_charts_agree() {
        let atlas = Atlas::build();
        let x = ProjectivePoint::from_c64(Complex64::new(0.3, -0.7), 128);
        for c in &atlas.charts {
            let u = c.to_chart_big(&x).unwrap();
            assert!((u.to_c64() - c.to_chart(&x.to_sphere()).unwrap()).norm() < 1e-14);
            assert!(c.from_chart_big(&u).distance(&x) < 1e-30);
        }
    }
}
