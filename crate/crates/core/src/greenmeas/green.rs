use num_complex::Complex64;

use crate::dynsys::{Chart, MapF64, ProjectivePoint, RationalMap, SpherePoint};
use crate::error::{Error, Result};
use crate::mpnum::ln_float;

/// Escape-rate evaluator `G_n = d^{-n} log‖F^n‖` with a rigorous truncation bound.
///
/// For polynomial maps the lift `(z, 1)` is used (after scaling `F` so that
/// `Q ≡ 1`), which yields the classical `log⁺` normalization: `G ≥ 0`, zero
/// exactly on the filled Julia set. Rational maps use the max-norm lift.
#[derive(Clone, Debug)]
pub struct GreenEvaluator {
    map: RationalMap,
    fast: MapF64,
    pub depth: usize,
    /// `C` in `|G_n − G| ≤ C d^{-n}`.
    pub error_constant: f64,
    shift: f64,
}

impl GreenEvaluator {
    pub fn new(map: &RationalMap, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::param("depth", "must be at least 1"));
        }
        let fast = map.to_f64();
        let shift = if map.is_polynomial() {
            map.q().coeff(0).ln_abs()
        } else {
            0.0
        };
        let c0 = homogeneous_log_bound(&fast, shift)?;
        let d = map.degree() as f64;
        Ok(GreenEvaluator {
            map: map.clone(),
            fast,
            depth,
            error_constant: c0 / (d - 1.0),
            shift,
        })
    }

    pub fn map(&self) -> &RationalMap {
        &self.map
    }

    pub fn is_polynomial(&self) -> bool {
        self.map.is_polynomial()
    }

    /// `C d^{-depth}`.
    pub fn error_bound(&self) -> f64 {
        self.error_constant * (self.map.degree() as f64).powi(-(self.depth as i32))
    }

    /// Offset between the reported value and the homogeneous potential at the
    /// max-norm lift of `x` (the log-norm of the reporting lift).
    fn lift_offset_f64(&self, x: &SpherePoint) -> f64 {
        if self.is_polynomial() && x.chart == Chart::Infinite {
            -x.coord.norm().ln()
        } else {
            0.0
        }
    }

    /// `(G_depth(x), C d^{-depth})` in double precision.
    pub fn value(&self, x: &SpherePoint) -> (f64, f64) {
        let offset = self.lift_offset_f64(x);
        if offset.is_infinite() {
            return (f64::INFINITY, 0.0);
        }
        let d = self.map.degree() as f64;
        let (mut z, mut w) = x.homogeneous();
        let mut acc = 0.0;
        let mut weight = 1.0;
        for _ in 0..self.depth {
            weight /= d;
            let (a, b) = self.fast.eval_vec(z, w);
            let norm = a.norm().max(b.norm());
            acc += weight * (norm.ln() - self.shift);
            z = a / norm;
            w = b / norm;
        }
        (offset + acc, self.error_bound())
    }

    /// Same as [`value`](Self::value) at the precision of `x`.
    pub fn value_big(&self, x: &ProjectivePoint) -> (f64, f64) {
        if self.is_polynomial() && x.is_infinity() {
            return (f64::INFINITY, 0.0);
        }
        let offset = if self.is_polynomial() && x.chart() == Chart::Infinite {
            -x.coord().ln_abs()
        } else {
            0.0
        };
        let map = if x.prec() > self.map.prec() {
            self.map.with_prec(x.prec()).unwrap_or_else(|_| self.map.clone())
        } else {
            self.map.clone()
        };
        let d = map.degree() as f64;
        let mut y = x.clone();
        let mut acc = 0.0;
        let mut weight = 1.0;
        for _ in 0..self.depth {
            weight /= d;
            let (a, b) = map.eval_lift(&y);
            let na = a.abs();
            let nb = b.abs();
            let norm = if na > nb { na } else { nb };
            acc += weight * (ln_float(&norm) - self.shift);
            y = ProjectivePoint::normalize(&a, &b);
        }
        (offset + acc, self.error_bound())
    }
}

/// `C₀ = max |log‖F(v)‖∞ − shift|` over `‖v‖∞ = 1`: an upper bound from the
/// coefficient sums and a lower bound from a grid minimum with a Lipschitz margin.
fn homogeneous_log_bound(map: &MapF64, shift: f64) -> Result<f64> {
    let probe = |t: Complex64, chart: Chart| {
        let (a, b) = map.eval_lift(&SpherePoint { chart, coord: t });
        a.norm().max(b.norm())
    };
    let (p, q) = map.coefficients();
    let upper = p
        .iter()
        .map(|c| c.norm())
        .sum::<f64>()
        .max(q.iter().map(|c| c.norm()).sum::<f64>());
    let mut lower = f64::INFINITY;
    for chart in [Chart::Finite, Chart::Infinite] {
        let mut found = None;
        for level in 0..4 {
            let steps = 100usize << level;
            let h = 2.0 / steps as f64;
            let lip = |c: &[Complex64]| -> f64 {
                c.iter()
                    .enumerate()
                    .skip(1)
                    .map(|(i, a)| i as f64 * a.norm() * (1.0 + h).powi(i as i32 - 1))
                    .sum()
            };
            let lipschitz = lip(p).max(lip(q));
            let mut min = f64::INFINITY;
            for i in 0..=steps {
                for j in 0..=steps {
                    let t = Complex64::new(-1.0 + i as f64 * h, -1.0 + j as f64 * h);
                    if t.norm() <= 1.0 + h {
                        min = min.min(probe(t, chart));
                    }
                }
            }
            let bound = min - lipschitz * h * std::f64::consts::FRAC_1_SQRT_2;
            if bound > 0.0 {
                found = Some(bound);
                break;
            }
        }
        let bound = found
            .ok_or_else(|| Error::Precondition("could not bound ‖F‖ away from zero on the unit polydisk".into()))?;
        lower = lower.min(bound);
    }
    let c0 = (upper.ln() - shift).abs().max((lower.ln() - shift).abs());
    // Small slack for rounding in the grid evaluation.
    Ok(c0 * (1.0 + 1e-9) + 1e-12)
}

/// Tri-state Julia classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum JuliaClass {
    /// Fatou set of a polynomial with `G = 0` nearby (filled Julia set interior).
    Inside,
    /// Not in the Julia set: `G > tol` for polynomials, Fatou set for rational maps.
    Outside,
    /// On the Julia set up to the numerical band.
    BoundaryBand,
}

impl JuliaClass {
    pub fn in_julia(self) -> bool {
        self == JuliaClass::BoundaryBand
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        [JuliaClass::Inside, JuliaClass::Outside, JuliaClass::BoundaryBand]
            .into_iter()
            .find(|c| c.tag() == tag)
            .ok_or_else(|| Error::Parse(format!("unknown Julia class `{tag}`")))
    }

    pub fn tag(self) -> &'static str {
        match self {
            JuliaClass::Inside => "inside",
            JuliaClass::Outside => "outside",
            JuliaClass::BoundaryBand => "boundary-band",
        }
    }

    /// Product rule: on `J₁ × J₂` only when both components are.
    pub fn product(a: JuliaClass, b: JuliaClass) -> JuliaClass {
        match (a, b) {
            (JuliaClass::BoundaryBand, JuliaClass::BoundaryBand) => JuliaClass::BoundaryBand,
            (JuliaClass::Outside, _) | (_, JuliaClass::Outside) => JuliaClass::Outside,
            _ => JuliaClass::Inside,
        }
    }
}

#[derive(Clone, Debug)]
pub struct JuliaOptions {
    pub depth: usize,
    pub tolerance: f64,
    pub star_radius: f64,
    pub star_points: usize,
    /// Rational maps: minimum Lyapunov exponent along the orbit to count as Julia.
    pub lyapunov_floor: f64,
}

impl Default for JuliaOptions {
    fn default() -> Self {
        JuliaOptions {
            depth: 64,
            tolerance: 1e-10,
            star_radius: 1e-6,
            star_points: 8,
            lyapunov_floor: 1e-3,
        }
    }
}

/// Julia-set classification at the precision of `x`.
///
/// Polynomials compare `G(x)` and `G` on a spherical star of radius
/// `star_radius` against `tolerance`. Rational maps have no escape
/// criterion; there the finite-orbit Lyapunov exponent decides between the
/// Julia set (expanding) and the Fatou set.
pub fn julia_membership(green: &GreenEvaluator, x: &ProjectivePoint, opts: &JuliaOptions) -> JuliaClass {
    let map = green.map();
    if !map.is_polynomial() {
        let rate = map.spherical_derivative_iter(x, opts.depth).ln() / opts.depth as f64;
        return if rate > opts.lyapunov_floor {
            JuliaClass::BoundaryBand
        } else {
            JuliaClass::Outside
        };
    }
    let (g, _) = green.value_big(x);
    if g > opts.tolerance {
        return JuliaClass::Outside;
    }
    let t = x.coord();
    let rho = opts.star_radius * (1.0 + t.to_c64().norm_sqr()) / 2.0;
    for k in 0..opts.star_points {
        let offset = crate::mpnum::BigComplex::from_c64(
            Complex64::from_polar(rho, std::f64::consts::TAU * k as f64 / opts.star_points as f64),
            x.prec(),
        );
        let y = ProjectivePoint::in_chart(x.chart(), t + &offset);
        if green.value_big(&y).0 > opts.tolerance {
            return JuliaClass::BoundaryBand;
        }
    }
    JuliaClass::Inside
}

/// Double-precision variant of [`julia_membership`] for sample atoms.
pub fn julia_membership_f64(green: &GreenEvaluator, x: &SpherePoint, opts: &JuliaOptions) -> JuliaClass {
    julia_membership(green, &x.to_projective(green.map().prec()), opts)
}

/// Empirical Hölder exponent of `G` near the Julia set: slope of
/// `log |G(x) − G(y)|` against `log dist(x, y)` over pairs at geometric scales.
pub fn fit_green_holder(green: &GreenEvaluator, anchors: &[SpherePoint], scales: &[f64]) -> Option<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &eps in scales {
        let mut worst: f64 = 0.0;
        for a in anchors {
            let (ga, _) = green.value(a);
            for k in 0..8 {
                let rho = eps * (1.0 + a.coord.norm_sqr()) / 2.0;
                let t = a.coord + Complex64::from_polar(rho, std::f64::consts::TAU * k as f64 / 8.0);
                let b = SpherePoint::in_chart(a.chart, t);
                let (gb, _) = green.value(&b);
                if ga.is_finite() && gb.is_finite() {
                    worst = worst.max((ga - gb).abs());
                }
            }
        }
        if worst > 0.0 {
            xs.push(eps.ln());
            ys.push(worst.ln());
        }
    }
    if xs.len() < 2 {
        return None;
    }
    Some(crate::stats::ols_fit(&xs, &ys).slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(re: f64, im: f64) -> SpherePoint {
        SpherePoint::finite(Complex64::new(re, im))
    }

    #[test]
    fn green_of_squaring_is_log_plus() {
        let sq = RationalMap::power(2, 128).unwrap();
        for depth in [1, 10, 40] {
            let g = GreenEvaluator::new(&sq, depth).unwrap();
            let (v, _) = g.value(&pt(2.0, 0.0));
            assert_eq!(v, std::f64::consts::LN_2);
            assert_eq!(g.value(&pt(0.5, 0.0)).0, 0.0);
        }
    }

    #[test]
    fn basilica_depth_self_consistency() {
        let f = RationalMap::unicritical(2, Complex64::new(-1.0, 0.0), 128).unwrap();
        let g30 = GreenEvaluator::new(&f, 30).unwrap();
        let g60 = GreenEvaluator::new(&f, 60).unwrap();
        let (a, bound) = g30.value(&pt(3.0, 0.0));
        let (b, _) = g60.value(&pt(3.0, 0.0));
        assert!((a - b).abs() <= bound, "{a} {b} {bound}");
        assert!(g30.error_constant.is_finite() && g30.error_constant > 0.0);
    }

    #[test]
    fn big_and_small_agree() {
        let f = RationalMap::unicritical(2, Complex64::new(0.0, 0.1), 128).unwrap();
        let g = GreenEvaluator::new(&f, 40).unwrap();
        for z in [
            Complex64::new(1.5, 0.2),
            Complex64::new(-4.0, 1.0),
            Complex64::new(0.1, 0.0),
        ] {
            let a = g.value(&SpherePoint::finite(z)).0;
            let b = g.value_big(&ProjectivePoint::from_c64(z, 128)).0;
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn membership_examples() {
        let sq = RationalMap::power(2, 128).unwrap();
        let g = GreenEvaluator::new(&sq, 64).unwrap();
        let opts = JuliaOptions::default();
        let on = ProjectivePoint::from_c64(Complex64::from_polar(1.0, 0.3), 128);
        assert_eq!(julia_membership(&g, &on, &opts), JuliaClass::BoundaryBand);
        let zero = ProjectivePoint::from_c64(Complex64::new(0.0, 0.0), 128);
        assert_eq!(julia_membership(&g, &zero, &opts), JuliaClass::Inside);
        let three = ProjectivePoint::from_c64(Complex64::new(3.0, 0.0), 128);
        assert_eq!(julia_membership(&g, &three, &opts), JuliaClass::Outside);
        assert_eq!(
            julia_membership(&g, &ProjectivePoint::infinity(128), &opts),
            JuliaClass::Outside
        );
    }
}
