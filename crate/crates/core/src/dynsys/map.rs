use num_complex::Complex64;
use rug::Float;

use super::point::{Chart, ProjectivePoint, SpherePoint};
use super::spec::{MapSpec, RationalSpec};
use crate::error::{Error, Result};
use crate::mpnum::{poly_roots, BigComplex, Poly, DEFAULT_PRECISION};

/// Degree-`d` endomorphism of P¹, `[z : w] ↦ [P(z,w) : Q(z,w)]`.
///
/// `P` and `Q` are stored dehomogenized (`P(z,1)`, `Q(z,1)`) together with
/// their reversals `P(1,t)`, `Q(1,t)` so that every evaluation can run in the
/// chart where the coordinate has modulus at most one.
#[derive(Clone, Debug)]
pub struct RationalMap {
    degree: usize,
    p: Poly,
    q: Poly,
    p_rev: Poly,
    q_rev: Poly,
    spec: Option<RationalSpec>,
    prec: u32,
    resultant_nonzero: bool,
    polynomial: bool,
}

impl RationalMap {
    /// Validates `d ≥ 2`, `max(deg P, deg Q) = d` and a nonvanishing resultant.
    pub fn new(p: Poly, q: Poly, degree: usize) -> Result<Self> {
        if degree < 2 {
            return Err(Error::InvalidMap(format!("degree must be at least 2, got {degree}")));
        }
        if p.is_zero() || q.is_zero() {
            return Err(Error::InvalidMap("P and Q must both be nonzero".into()));
        }
        if p.degree() > degree || q.degree() > degree {
            return Err(Error::InvalidMap(format!(
                "coefficient lists exceed the declared degree {degree}"
            )));
        }
        if p.degree() < degree && q.degree() < degree {
            return Err(Error::InvalidMap(
                "P and Q both vanish at infinity (common root)".into(),
            ));
        }
        let prec = p.prec().max(q.prec());
        let resultant_nonzero = resultant_is_nonzero(&p, &q, degree, prec);
        if !resultant_nonzero {
            return Err(Error::InvalidMap("P and Q share a root (resultant vanishes)".into()));
        }
        let polynomial = q.degree() == 0 && p.degree() == degree;
        Ok(RationalMap {
            p_rev: p.reversed(degree),
            q_rev: q.reversed(degree),
            degree,
            p,
            q,
            spec: None,
            prec,
            resultant_nonzero,
            polynomial,
        })
    }

    pub fn from_spec(spec: &RationalSpec, prec: u32) -> Result<Self> {
        let (p, q) = spec.polys(prec)?;
        let mut map = Self::new(p, q, spec.degree)?;
        map.spec = Some(spec.clone());
        map.prec = prec;
        Ok(map)
    }

    /// Polynomial map with the given coefficients, constant term first.
    pub fn polynomial(coeffs: &[(f64, f64)], prec: u32) -> Result<Self> {
        let degree = coeffs.len().saturating_sub(1);
        let spec = RationalSpec::from_f64(degree, coeffs, &[(1.0, 0.0)])?;
        Self::from_spec(&spec, prec)
    }

    /// `z^d + c`.
    pub fn unicritical(d: usize, c: Complex64, prec: u32) -> Result<Self> {
        match MapSpec::unicritical(d, (c.re, c.im))? {
            MapSpec::Single(s) => Self::from_spec(&s, prec),
            MapSpec::Product(..) => unreachable!(),
        }
    }

    /// `z^d`.
    pub fn power(d: usize, prec: u32) -> Result<Self> {
        Self::unicritical(d, Complex64::new(0.0, 0.0), prec)
    }

    pub fn rational(p: &[(f64, f64)], q: &[(f64, f64)], degree: usize, prec: u32) -> Result<Self> {
        Self::from_spec(&RationalSpec::from_f64(degree, p, q)?, prec)
    }

    /// The same map with coefficients re-derived at `prec`.
    pub fn with_prec(&self, prec: u32) -> Result<Self> {
        match &self.spec {
            Some(s) => Self::from_spec(s, prec),
            None => {
                let mut m = Self::new(self.p.with_prec(prec), self.q.with_prec(prec), self.degree)?;
                m.prec = prec;
                Ok(m)
            }
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn p(&self) -> &Poly {
        &self.p
    }

    pub fn q(&self) -> &Poly {
        &self.q
    }

    pub fn spec(&self) -> Option<&RationalSpec> {
        self.spec.as_ref()
    }

    pub fn resultant_nonzero(&self) -> bool {
        self.resultant_nonzero
    }

    /// True when `Q` is a nonzero constant, i.e. `f` is a polynomial with ∞ totally invariant.
    pub fn is_polynomial(&self) -> bool {
        self.polynomial
    }

    /// `(P, Q)` at the chart lift of `x`.
    pub fn eval_lift(&self, x: &ProjectivePoint) -> (BigComplex, BigComplex) {
        let t = x.coord();
        match x.chart() {
            Chart::Finite => (self.p.eval(t), self.q.eval(t)),
            Chart::Infinite => (self.p_rev.eval(t), self.q_rev.eval(t)),
        }
    }

    pub fn apply(&self, x: &ProjectivePoint) -> ProjectivePoint {
        let (a, b) = self.eval_lift(x);
        ProjectivePoint::normalize(&a, &b)
    }

    pub fn iterate(&self, x: &ProjectivePoint, n: usize) -> ProjectivePoint {
        let mut y = x.clone();
        for _ in 0..n {
            y = self.apply(&y);
        }
        y
    }

    /// Image of `x` under `f^n` together with its derivative with respect to
    /// the coordinate of `x` in `chart` (which may exceed one in modulus).
    pub fn jet(&self, chart: Chart, t: &BigComplex, n: usize) -> Jet {
        let one = BigComplex::one(t.prec().max(self.prec));
        let zero = BigComplex::zero(one.prec());
        let (mut z, mut w, mut dz, mut dw) = match chart {
            Chart::Finite => (t.clone(), one.clone(), one.clone(), zero.clone()),
            Chart::Infinite => (one.clone(), t.clone(), zero.clone(), one.clone()),
        };
        let d = BigComplex::from_f64(self.degree as f64, 0.0, one.prec());
        for _ in 0..n {
            let (a, b, da, db);
            if w.abs() >= z.abs() {
                let inv = w.recip();
                let s = &z * &inv;
                let (sz, sw) = (&dz * &inv, &dw * &inv);
                let (pv, pd) = self.p.eval_with_derivative(&s);
                let (qv, qd) = self.q.eval_with_derivative(&s);
                let p_w = &(&d * &pv) - &(&s * &pd);
                let q_w = &(&d * &qv) - &(&s * &qd);
                da = &(&pd * &sz) + &(&p_w * &sw);
                db = &(&qd * &sz) + &(&q_w * &sw);
                a = pv;
                b = qv;
            } else {
                let inv = z.recip();
                let s = &w * &inv;
                let (sz, sw) = (&dz * &inv, &dw * &inv);
                let (pv, pd) = self.p_rev.eval_with_derivative(&s);
                let (qv, qd) = self.q_rev.eval_with_derivative(&s);
                let p_z = &(&d * &pv) - &(&s * &pd);
                let q_z = &(&d * &qv) - &(&s * &qd);
                da = &(&p_z * &sz) + &(&pd * &sw);
                db = &(&q_z * &sz) + &(&qd * &sw);
                a = pv;
                b = qv;
            }
            z = a;
            w = b;
            dz = da;
            dw = db;
        }
        Jet {
            chart,
            t: t.clone(),
            z,
            w,
            dz,
            dw,
        }
    }

    /// Fubini–Study norm of `Df` at `x`: `|f'(x)|(1+|x|²)/(1+|f(x)|²)`.
    pub fn spherical_derivative(&self, x: &ProjectivePoint) -> f64 {
        self.jet(x.chart(), x.coord(), 1).spherical_derivative()
    }

    /// As [`spherical_derivative`](Self::spherical_derivative), computed from
    /// the coordinate of `x` in the given chart.
    pub fn spherical_derivative_in(&self, x: &ProjectivePoint, chart: Chart) -> Option<f64> {
        let t = x.coord_in(chart)?;
        Some(self.jet(chart, &t, 1).spherical_derivative())
    }

    /// Spherical derivative of `f^n` at `x`.
    pub fn spherical_derivative_iter(&self, x: &ProjectivePoint, n: usize) -> f64 {
        self.jet(x.chart(), x.coord(), n).spherical_derivative()
    }

    /// Complex multiplier of `f^n` at a point with `f^n(x) = x`.
    pub fn multiplier_at(&self, x: &ProjectivePoint, n: usize) -> Option<BigComplex> {
        self.jet(x.chart(), x.coord(), n).derivative_in(x.chart())
    }

    /// Multiplier of the cycle `x₀ → x₁ → … → x₀`, checking closure to `tol`.
    pub fn cycle_multiplier_with(&self, cycle: &[ProjectivePoint], tol: f64) -> Result<Multiplier> {
        if cycle.is_empty() {
            return Err(Error::Precondition("empty cycle".into()));
        }
        let k = cycle.len();
        let mut value = BigComplex::one(self.prec);
        let mut worst: f64 = 0.0;
        for i in 0..k {
            let next = &cycle[(i + 1) % k];
            let jet = self.jet(cycle[i].chart(), cycle[i].coord(), 1);
            worst = worst.max(jet.point().distance(next));
            let step = jet
                .derivative_in(next.chart())
                .ok_or_else(|| Error::Precondition("cycle passes through a chart pole".into()))?;
            value = &value * &step;
        }
        if worst > tol {
            return Err(Error::NotACycle {
                closure: worst,
                tolerance: tol,
            });
        }
        Ok(Multiplier {
            modulus: value.abs_f64(),
            value,
        })
    }

    /// [`cycle_multiplier_with`](Self::cycle_multiplier_with) at the default closure tolerance.
    pub fn cycle_multiplier(&self, cycle: &[ProjectivePoint]) -> Result<Multiplier> {
        self.cycle_multiplier_with(cycle, closure_tolerance(self.prec))
    }

    /// The `2d − 2` critical points with multiplicity, as roots of the
    /// Wronskian `P'Q − PQ'` plus the deficit at ∞.
    pub fn critical_points(&self) -> Result<Vec<ProjectivePoint>> {
        let wr = self.p.derivative().mul(&self.q).sub(&self.p.mul(&self.q.derivative()));
        let total = 2 * self.degree - 2;
        let mut out = Vec::with_capacity(total);
        let finite = if wr.is_zero() { 0 } else { wr.degree() };
        if finite > 0 {
            for r in poly_roots(&wr.with_prec(self.prec))?.roots {
                out.push(ProjectivePoint::finite(r));
            }
        }
        while out.len() < total {
            out.push(ProjectivePoint::infinity(self.prec));
        }
        Ok(out)
    }

    /// The `d` preimages of `a` with multiplicity.
    pub fn preimages(&self, a: &ProjectivePoint) -> Result<Vec<ProjectivePoint>> {
        let (alpha, beta) = a.homogeneous();
        let r = self.p.scale(&beta).sub(&self.q.scale(&alpha));
        let mut out = Vec::with_capacity(self.degree);
        if !r.is_zero() && r.degree() > 0 {
            for root in poly_roots(&r)?.roots {
                out.push(ProjectivePoint::finite(root));
            }
        }
        while out.len() < self.degree {
            out.push(ProjectivePoint::infinity(self.prec));
        }
        Ok(out)
    }

    /// Double-precision copy for Monte Carlo work.
    pub fn to_f64(&self) -> MapF64 {
        MapF64::new(self)
    }
}

/// Closure tolerance used by [`RationalMap::cycle_multiplier`]: `1e-25` at the
/// default precision, never tighter than the precision supports.
pub fn closure_tolerance(prec: u32) -> f64 {
    if prec >= DEFAULT_PRECISION {
        1e-25
    } else {
        2f64.powi(-(prec as i32) / 2)
    }
}

/// Multiplier of a cycle; the modulus is the product of spherical derivatives.
#[derive(Clone, Debug)]
pub struct Multiplier {
    pub modulus: f64,
    pub value: BigComplex,
}

/// Homogeneous image `(Z, W)` of a chart point under `f^n` and its derivative
/// `(Z', W')` with respect to the input coordinate.
#[derive(Clone, Debug)]
pub struct Jet {
    pub chart: Chart,
    pub t: BigComplex,
    pub z: BigComplex,
    pub w: BigComplex,
    pub dz: BigComplex,
    pub dw: BigComplex,
}

impl Jet {
    pub fn point(&self) -> ProjectivePoint {
        ProjectivePoint::normalize(&self.z, &self.w)
    }

    /// Derivative of the output coordinate in `chart`, `None` at that chart's pole.
    pub fn derivative_in(&self, chart: Chart) -> Option<BigComplex> {
        let (num, den) = match chart {
            Chart::Finite => (&(&self.dz * &self.w) - &(&self.z * &self.dw), &self.w),
            Chart::Infinite => (&(&self.dw * &self.z) - &(&self.w * &self.dz), &self.z),
        };
        if den.is_zero() {
            None
        } else {
            Some(&num / &den.square())
        }
    }

    /// `|ds/dt|(1+|t|²)/(1+|s|²)` with `s` read in the image's own chart.
    pub fn spherical_derivative(&self) -> f64 {
        let out = self.point();
        let deriv = self
            .derivative_in(out.chart())
            .expect("normalized chart never sits at its pole");
        let prec = deriv.prec();
        let num = Float::with_val(prec, 1 + self.t.norm_sqr());
        let den = Float::with_val(prec, 1 + out.coord().norm_sqr());
        (deriv.abs() * num / den).to_f64()
    }

    /// Residual of the fixed-point equation in the input chart and its derivative:
    /// `Z − W t` (finite chart) or `Z t − W` (chart at infinity).
    pub fn fixed_point_residual(&self) -> (BigComplex, BigComplex) {
        match self.chart {
            Chart::Finite => (
                &self.z - &(&self.w * &self.t),
                &(&self.dz - &(&self.dw * &self.t)) - &self.w,
            ),
            Chart::Infinite => (
                &(&self.z * &self.t) - &self.w,
                &(&(&self.dz * &self.t) + &self.z) - &self.dw,
            ),
        }
    }
}

/// Exactness test for the homogeneous resultant via the Sylvester matrix.
fn resultant_is_nonzero(p: &Poly, q: &Poly, d: usize, prec: u32) -> bool {
    let prec = prec.max(DEFAULT_PRECISION);
    let n = 2 * d;
    let zero = BigComplex::zero(prec);
    let mut m = vec![vec![zero.clone(); n]; n];
    // Rows: shifts of P (d rows) then Q (d rows), coefficients leading first.
    for row in 0..d {
        for i in 0..=d {
            m[row][row + i] = p.coeff(d - i).with_prec(prec);
            m[row + d][row + i] = q.coeff(d - i).with_prec(prec);
        }
    }
    let scale = {
        let np: f64 = p.coeffs().iter().map(BigComplex::abs_f64).fold(0.0, f64::max);
        let nq: f64 = q.coeffs().iter().map(BigComplex::abs_f64).fold(0.0, f64::max);
        (d as f64) * (np.ln() + nq.ln())
    };
    let mut log_det = 0.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        if m[pivot][col].is_zero() {
            return false;
        }
        m.swap(col, pivot);
        log_det += m[col][col].ln_abs();
        let inv = m[col][col].recip();
        for r in (col + 1)..n {
            if m[r][col].is_zero() {
                continue;
            }
            let factor = &m[r][col] * &inv;
            for c in col..n {
                let delta = &factor * &m[col][c];
                m[r][c] -= &delta;
            }
        }
    }
    // Relative to the coefficient scale, anything above the rounding floor counts.
    log_det - scale > -(prec as f64) * 0.5 * std::f64::consts::LN_2
}

/// Product `f × g` acting on P¹ × P¹, both factors of the same degree.
#[derive(Clone, Debug)]
pub struct ProductMap {
    pub first: RationalMap,
    pub second: RationalMap,
}

impl ProductMap {
    pub fn new(first: RationalMap, second: RationalMap) -> Result<Self> {
        if first.degree() != second.degree() {
            return Err(Error::InvalidMap(format!(
                "product factors have degrees {} and {}",
                first.degree(),
                second.degree()
            )));
        }
        Ok(ProductMap { first, second })
    }

    pub fn degree(&self) -> usize {
        self.first.degree()
    }

    pub fn apply(&self, x: &(ProjectivePoint, ProjectivePoint)) -> (ProjectivePoint, ProjectivePoint) {
        (self.first.apply(&x.0), self.second.apply(&x.1))
    }

    pub fn iterate(&self, x: &(ProjectivePoint, ProjectivePoint), n: usize) -> (ProjectivePoint, ProjectivePoint) {
        (self.first.iterate(&x.0, n), self.second.iterate(&x.1, n))
    }

    /// The derivative is diagonal; both component values are returned.
    pub fn spherical_derivative(&self, x: &(ProjectivePoint, ProjectivePoint)) -> (f64, f64) {
        (
            self.first.spherical_derivative(&x.0),
            self.second.spherical_derivative(&x.1),
        )
    }

    /// Component multipliers of a product cycle.
    pub fn cycle_multiplier(&self, cycle: &[(ProjectivePoint, ProjectivePoint)]) -> Result<(Multiplier, Multiplier)> {
        let a: Vec<_> = cycle.iter().map(|x| x.0.clone()).collect();
        let b: Vec<_> = cycle.iter().map(|x| x.1.clone()).collect();
        Ok((self.first.cycle_multiplier(&a)?, self.second.cycle_multiplier(&b)?))
    }
}

/// `‖Df^n(a)^{-1}‖` for a product cycle: one over the smaller component modulus.
pub fn inverse_operator_norm(moduli: &[f64]) -> f64 {
    1.0 / moduli.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Either kind of map a [`MapSpec`] can describe.
#[derive(Clone, Debug)]
pub enum DynMap {
    Single(RationalMap),
    Product(ProductMap),
}

impl DynMap {
    pub fn from_spec(spec: &MapSpec, prec: u32) -> Result<Self> {
        Ok(match spec {
            MapSpec::Single(s) => DynMap::Single(RationalMap::from_spec(s, prec)?),
            MapSpec::Product(a, b) => DynMap::Product(ProductMap::new(
                RationalMap::from_spec(a, prec)?,
                RationalMap::from_spec(b, prec)?,
            )?),
        })
    }

    pub fn degree(&self) -> usize {
        match self {
            DynMap::Single(m) => m.degree(),
            DynMap::Product(m) => m.degree(),
        }
    }

    /// Dimension `k` of the space acted on.
    pub fn dimension(&self) -> usize {
        match self {
            DynMap::Single(_) => 1,
            DynMap::Product(_) => 2,
        }
    }

    pub fn components(&self) -> Vec<&RationalMap> {
        match self {
            DynMap::Single(m) => vec![m],
            DynMap::Product(m) => vec![&m.first, &m.second],
        }
    }
}

/// Double-precision evaluation of a [`RationalMap`].
#[derive(Clone, Debug)]
pub struct MapF64 {
    pub degree: usize,
    p: Vec<Complex64>,
    q: Vec<Complex64>,
    p_rev: Vec<Complex64>,
    q_rev: Vec<Complex64>,
    polynomial: bool,
}

fn horner(c: &[Complex64], t: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * t + a)
}

fn horner_d(c: &[Complex64], t: Complex64) -> (Complex64, Complex64) {
    let zero = Complex64::new(0.0, 0.0);
    c.iter().rev().fold((zero, zero), |(p, dp), &a| (p * t + a, dp * t + p))
}

fn padded(poly: &Poly, d: usize) -> Vec<Complex64> {
    (0..=d).map(|i| poly.coeff(i).to_c64()).collect()
}

impl MapF64 {
    pub fn new(map: &RationalMap) -> Self {
        let d = map.degree;
        let p = padded(&map.p, d);
        let q = padded(&map.q, d);
        let p_rev = p.iter().rev().copied().collect();
        let q_rev = q.iter().rev().copied().collect();
        MapF64 {
            degree: d,
            p,
            q,
            p_rev,
            q_rev,
            polynomial: map.polynomial,
        }
    }

    pub fn is_polynomial(&self) -> bool {
        self.polynomial
    }

    /// Coefficients of `P(z,1)` and `Q(z,1)`, padded to length `d + 1`.
    pub fn coefficients(&self) -> (&[Complex64], &[Complex64]) {
        (&self.p, &self.q)
    }

    /// `(P, Q)` at an arbitrary homogeneous vector, evaluated in its larger coordinate.
    pub fn eval_vec(&self, z: Complex64, w: Complex64) -> (Complex64, Complex64) {
        let d = self.degree as i32;
        if w.norm_sqr() >= z.norm_sqr() {
            let s = z / w;
            let k = w.powi(d);
            (horner(&self.p, s) * k, horner(&self.q, s) * k)
        } else {
            let s = w / z;
            let k = z.powi(d);
            (horner(&self.p_rev, s) * k, horner(&self.q_rev, s) * k)
        }
    }

    /// `(P, Q)` at the chart lift of `x`.
    pub fn eval_lift(&self, x: &SpherePoint) -> (Complex64, Complex64) {
        match x.chart {
            Chart::Finite => (horner(&self.p, x.coord), horner(&self.q, x.coord)),
            Chart::Infinite => (horner(&self.p_rev, x.coord), horner(&self.q_rev, x.coord)),
        }
    }

    pub fn apply(&self, x: &SpherePoint) -> SpherePoint {
        let (a, b) = self.eval_lift(x);
        SpherePoint::normalize(a, b)
    }

    pub fn iterate(&self, x: &SpherePoint, n: usize) -> SpherePoint {
        (0..n).fold(*x, |y, _| self.apply(&y))
    }

    /// Image and derivative of the image coordinate (in the image's own chart)
    /// with respect to the coordinate of `x` in its chart.
    pub fn apply_with_derivative(&self, x: &SpherePoint) -> (SpherePoint, Complex64) {
        let t = x.coord;
        let (a, b, da, db) = match x.chart {
            Chart::Finite => {
                let (pv, pd) = horner_d(&self.p, t);
                let (qv, qd) = horner_d(&self.q, t);
                (pv, qv, pd, qd)
            }
            Chart::Infinite => {
                let (pv, pd) = horner_d(&self.p_rev, t);
                let (qv, qd) = horner_d(&self.q_rev, t);
                (pv, qv, pd, qd)
            }
        };
        let y = SpherePoint::normalize(a, b);
        let deriv = match y.chart {
            Chart::Finite => (da * b - a * db) / (b * b),
            Chart::Infinite => (db * a - b * da) / (a * a),
        };
        (y, deriv)
    }

    pub fn spherical_derivative(&self, x: &SpherePoint) -> f64 {
        let (y, deriv) = self.apply_with_derivative(x);
        deriv.norm() * (1.0 + x.coord.norm_sqr()) / (1.0 + y.coord.norm_sqr())
    }

    /// Double-precision counterpart of [`Jet::fixed_point_residual`]. The
    /// homogeneous jet is rescaled every step, so `(h, h')` is only defined up
    /// to a common factor; the Newton step `h/h'` is unaffected.
    pub fn fixed_point_residual(&self, chart: Chart, t: Complex64, n: usize) -> (Complex64, Complex64) {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let (mut z, mut w, mut dz, mut dw) = match chart {
            Chart::Finite => (t, one, one, zero),
            Chart::Infinite => (one, t, zero, one),
        };
        let d = self.degree as f64;
        for _ in 0..n {
            let (a, b, da, db);
            if w.norm_sqr() >= z.norm_sqr() {
                let inv = w.inv();
                let s = z * inv;
                let (sz, sw) = (dz * inv, dw * inv);
                let (pv, pd) = horner_d(&self.p, s);
                let (qv, qd) = horner_d(&self.q, s);
                da = pd * sz + (pv * d - s * pd) * sw;
                db = qd * sz + (qv * d - s * qd) * sw;
                a = pv;
                b = qv;
            } else {
                let inv = z.inv();
                let s = w * inv;
                let (sz, sw) = (dz * inv, dw * inv);
                let (pv, pd) = horner_d(&self.p_rev, s);
                let (qv, qd) = horner_d(&self.q_rev, s);
                da = (pv * d - s * pd) * sz + pd * sw;
                db = (qv * d - s * qd) * sz + qd * sw;
                a = pv;
                b = qv;
            }
            let scale = a.norm().max(b.norm());
            if !(scale > 0.0 && scale.is_finite()) {
                return (Complex64::new(f64::NAN, 0.0), one);
            }
            z = a / scale;
            w = b / scale;
            dz = da / scale;
            dw = db / scale;
        }
        match chart {
            Chart::Finite => (z - w * t, dz - dw * t - w),
            Chart::Infinite => (z * t - w, dz * t + z - dw),
        }
    }

    /// The `d` preimages of `a` with multiplicity, polished in their own charts.
    pub fn preimages(&self, a: &SpherePoint) -> Vec<SpherePoint> {
        let (alpha, beta) = a.homogeneous();
        let r: Vec<Complex64> = self
            .p
            .iter()
            .zip(&self.q)
            .map(|(&p, &q)| beta * p - alpha * q)
            .collect();
        let r_rev: Vec<Complex64> = r.iter().rev().copied().collect();
        let top = r.iter().rposition(|c| c.norm_sqr() > 0.0);
        let mut out = Vec::with_capacity(self.degree);
        if let Some(deg) = top.filter(|&k| k > 0) {
            for root in roots_f64(&r[..=deg]) {
                let pt = SpherePoint::finite(root);
                out.push(match pt.chart {
                    Chart::Finite => SpherePoint::in_chart(Chart::Finite, polish(&r, pt.coord)),
                    Chart::Infinite => SpherePoint::in_chart(Chart::Infinite, polish(&r_rev, pt.coord)),
                });
            }
        }
        while out.len() < self.degree {
            out.push(SpherePoint::infinity());
        }
        out
    }
}

fn polish(c: &[Complex64], mut t: Complex64) -> Complex64 {
    for _ in 0..3 {
        let (v, dv) = horner_d(c, t);
        if dv.norm_sqr() == 0.0 || v.norm_sqr() == 0.0 {
            break;
        }
        let step = v / dv;
        if !step.is_finite() {
            break;
        }
        t -= step;
    }
    t
}

/// Roots of a small polynomial in double precision: closed form for degree
/// at most two, Aberth iteration otherwise.
pub(crate) fn roots_f64(c: &[Complex64]) -> Vec<Complex64> {
    let n = c.len() - 1;
    match n {
        0 => vec![],
        1 => vec![-c[0] / c[1]],
        2 => {
            let (a, b, cc) = (c[2], c[1], c[0]);
            let disc = (b * b - 4.0 * a * cc).sqrt();
            // Pick the sign that avoids cancellation.
            let qq = if (b.conj() * disc).re >= 0.0 {
                -0.5 * (b + disc)
            } else {
                -0.5 * (b - disc)
            };
            if qq.norm_sqr() == 0.0 {
                vec![Complex64::new(0.0, 0.0); 2]
            } else {
                vec![qq / a, cc / qq]
            }
        }
        _ => aberth_f64(c),
    }
}

fn aberth_f64(c: &[Complex64]) -> Vec<Complex64> {
    let n = c.len() - 1;
    let lead = c[n];
    let radius = c[..n]
        .iter()
        .enumerate()
        .map(|(i, a)| (a.norm() / lead.norm()).powf(1.0 / (n - i) as f64))
        .fold(0.0f64, f64::max)
        .max(1e-3);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(radius, std::f64::consts::TAU * k as f64 / n as f64 + 0.4))
        .collect();
    for _ in 0..200 {
        let mut moved = false;
        for i in 0..n {
            let (v, dv) = horner_d(c, z[i]);
            if v.norm_sqr() == 0.0 {
                continue;
            }
            let w = v / dv;
            let s: Complex64 = (0..n).filter(|&j| j != i).map(|j| (z[i] - z[j]).inv()).sum();
            let step = w / (1.0 - w * s);
            if step.is_finite() {
                z[i] -= step;
                if step.norm() > 1e-15 * z[i].norm().max(1e-300) {
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
    z
}
