use rug::float::Round;
use rug::ops::{AddAssignRound, MulAssignRound};
use rug::Float;

use super::complex::{BigComplex, DEFAULT_PRECISION};
use crate::error::{Error, Result};

/// Default cap on the degree a composition may produce.
pub const DEFAULT_COMPOSITION_CAP: usize = 1 << 16;

/// Univariate polynomial with [`BigComplex`] coefficients, constant term first.
///
/// Trailing zero coefficients are always trimmed, so the zero polynomial has
/// an empty coefficient list.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    coeffs: Vec<BigComplex>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<BigComplex>) -> Self {
        while coeffs.last().is_some_and(BigComplex::is_zero) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn constant(c: BigComplex) -> Self {
        Poly::new(vec![c])
    }

    /// The identity polynomial `z`.
    pub fn identity(prec: u32) -> Self {
        Poly::new(vec![BigComplex::zero(prec), BigComplex::one(prec)])
    }

    /// Builds from `(re, im)` pairs, constant term first.
    pub fn from_f64(coeffs: &[(f64, f64)], prec: u32) -> Self {
        Poly::new(
            coeffs
                .iter()
                .map(|&(re, im)| BigComplex::from_f64(re, im, prec))
                .collect(),
        )
    }

    /// Builds from real coefficients, constant term first.
    pub fn from_real(coeffs: &[f64], prec: u32) -> Self {
        Poly::new(coeffs.iter().map(|&re| BigComplex::from_f64(re, 0.0, prec)).collect())
    }

    pub fn coeffs(&self) -> &[BigComplex] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Index of the last nonzero coefficient; 0 for constants and for zero.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn leading(&self) -> Option<&BigComplex> {
        self.coeffs.last()
    }

    /// Coefficient of `z^i`, zero past the degree.
    pub fn coeff(&self, i: usize) -> BigComplex {
        self.coeffs
            .get(i)
            .cloned()
            .unwrap_or_else(|| BigComplex::zero(self.prec()))
    }

    pub fn prec(&self) -> u32 {
        self.coeffs
            .iter()
            .map(BigComplex::prec)
            .max()
            .unwrap_or(DEFAULT_PRECISION)
    }

    pub fn with_prec(&self, prec: u32) -> Self {
        Poly {
            coeffs: self.coeffs.iter().map(|c| c.with_prec(prec)).collect(),
        }
    }

    /// Horner evaluation at the larger of the coefficient and argument precision.
    pub fn eval(&self, z: &BigComplex) -> BigComplex {
        let prec = self.prec().max(z.prec());
        let mut acc = BigComplex::zero(prec);
        for c in self.coeffs.iter().rev() {
            acc *= z;
            acc += c;
        }
        acc
    }

    /// Value and first derivative in one Horner pass.
    pub fn eval_with_derivative(&self, z: &BigComplex) -> (BigComplex, BigComplex) {
        let prec = self.prec().max(z.prec());
        let mut p = BigComplex::zero(prec);
        let mut dp = BigComplex::zero(prec);
        for c in self.coeffs.iter().rev() {
            dp *= z;
            dp += &p;
            p *= z;
            p += c;
        }
        (p, dp)
    }

    /// Horner evaluation together with an upper bound on its rounding error.
    ///
    /// The bound is `γ(4n+2) · Σ|a_i||z|^i` with unit roundoff `2^-prec`,
    /// the magnitude sum being accumulated with upward rounding.
    pub fn eval_with_bound(&self, z: &BigComplex) -> (BigComplex, Float) {
        let value = self.eval(z);
        let prec = value.prec();
        let magnitude = self.magnitude_at(&z.abs());
        let n = self.coeffs.len() as u32;
        let k = 4 * n + 2;
        // γ_k = k u / (1 - k u), evaluated with a small upward slack.
        let u = Float::with_val(64, Float::i_exp(1, -(prec as i32)));
        let ku = Float::with_val(64, &u * k);
        let one_minus = Float::with_val(64, 1 - &ku);
        let mut gamma = Float::with_val(64, &ku / &one_minus);
        gamma *= 1.0 + 1e-12;
        let mut bound = magnitude;
        bound.mul_assign_round(&gamma, Round::Up);
        (value, bound)
    }

    /// `Σ |a_i| r^i` rounded upward, at 64-bit precision.
    pub fn magnitude_at(&self, r: &Float) -> Float {
        let r = Float::with_val_round(64, r, Round::Up).0;
        let mut acc = Float::new(64);
        for c in self.coeffs.iter().rev() {
            acc.mul_assign_round(&r, Round::Up);
            let a = Float::with_val_round(64, c.inner().abs_ref(), Round::Up).0;
            acc.add_assign_round(&a, Round::Up);
        }
        acc
    }

    pub fn derivative(&self) -> Poly {
        let prec = self.prec();
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c.scale(&Float::with_val(prec, i as u64)))
                .collect(),
        )
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let prec = self.prec().max(other.prec());
        let zero = BigComplex::zero(prec);
        Poly::new(
            (0..n)
                .map(|i| {
                    let a = self.coeffs.get(i).unwrap_or(&zero);
                    let b = other.coeffs.get(i).unwrap_or(&zero);
                    a + b
                })
                .collect(),
        )
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(&BigComplex::from_f64(-1.0, 0.0, other.prec())))
    }

    pub fn scale(&self, k: &BigComplex) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * k).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let prec = self.prec().max(other.prec());
        let mut out = vec![BigComplex::zero(prec); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += &(a * b);
            }
        }
        Poly::new(out)
    }

    /// Multiplies by `z^k`.
    pub fn shift(&self, k: usize) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        let mut coeffs = vec![BigComplex::zero(self.prec()); k];
        coeffs.extend(self.coeffs.iter().cloned());
        Poly::new(coeffs)
    }

    /// Coefficients of `z^d p(1/z)`, i.e. the polynomial read in the chart at infinity.
    pub fn reversed(&self, d: usize) -> Poly {
        let prec = self.prec();
        Poly::new(
            (0..=d)
                .map(|i| {
                    self.coeffs
                        .get(d - i)
                        .cloned()
                        .unwrap_or_else(|| BigComplex::zero(prec))
                })
                .collect(),
        )
    }

    /// `p ∘ q` by Horner's scheme in polynomial arithmetic.
    pub fn compose(&self, q: &Poly, cap: usize) -> Result<Poly> {
        if self.is_zero() || q.is_zero() {
            return Err(Error::Precondition("composition needs nonzero operands".into()));
        }
        let requested = self.degree() * q.degree();
        if requested > cap {
            return Err(Error::CompositionCap { requested, cap });
        }
        let mut acc = Poly::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc.mul(q).add(&Poly::constant(c.clone()));
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> BigComplex {
        BigComplex::from_f64(re, im, 128)
    }

    fn assert_close(a: &BigComplex, b: &BigComplex, tol: f64) {
        let err = (a - b).abs_f64();
        assert!(err <= tol, "{a:?} vs {b:?} (err {err:e})");
    }

    #[test]
    fn eval_examples() {
        let p = Poly::from_real(&[-1.0, 0.0, 1.0], 128);
        assert_close(&p.eval(&c(2.0, 0.0)), &c(3.0, 0.0), 0.0);
        assert!(p.eval(&c(1.0, 0.0)).is_zero());
        // z^3 - z at i: i^3 - i = -2i
        let q = Poly::from_real(&[0.0, -1.0, 0.0, 1.0], 128);
        assert_close(&q.eval(&c(0.0, 1.0)), &c(0.0, -2.0), 0.0);
    }

    #[test]
    fn trimming_and_degree() {
        let p = Poly::from_real(&[1.0, 2.0, 0.0, 0.0], 128);
        assert_eq!(p.degree(), 1);
        assert_eq!(Poly::from_real(&[0.0, 0.0], 128), Poly::zero());
        assert!(Poly::zero().is_zero());
    }

    #[test]
    fn compose_examples() {
        let sq = Poly::from_real(&[0.0, 0.0, 1.0], 128);
        let z4 = sq.compose(&sq, 64).unwrap();
        assert_eq!(z4, Poly::from_real(&[0.0, 0.0, 0.0, 0.0, 1.0], 128));

        let basilica = Poly::from_real(&[-1.0, 0.0, 1.0], 128);
        let twice = basilica.compose(&basilica, 64).unwrap();
        // (z^2 - 1)^2 - 1 = z^4 - 2z^2
        assert_eq!(twice, Poly::from_real(&[0.0, 0.0, -2.0, 0.0, 1.0], 128));

        let id = Poly::identity(128);
        let q = Poly::from_f64(&[(0.5, 1.0), (2.0, 0.0), (0.0, -3.0)], 128);
        assert_eq!(id.compose(&q, 64).unwrap(), q);
    }

    #[test]
    fn compose_respects_cap() {
        let sq = Poly::from_real(&[0.0, 0.0, 1.0], 128);
        let err = sq.compose(&sq, 3).unwrap_err();
        assert!(matches!(err, Error::CompositionCap { requested: 4, cap: 3 }));
    }

    #[test]
    fn derivative_examples() {
        let p = Poly::from_f64(&[(0.25, -1.0), (0.0, 0.0), (1.0, 0.0)], 128);
        assert_eq!(p.derivative(), Poly::from_real(&[0.0, 2.0], 128));
        assert!(Poly::from_real(&[5.0], 128).derivative().is_zero());
        let q = Poly::from_real(&[0.0, 0.0, -2.0, 0.0, 1.0], 128);
        assert_eq!(q.derivative(), Poly::from_real(&[0.0, -4.0, 0.0, 4.0], 128));
    }

    #[test]
    fn derivative_matches_combined_pass() {
        let p = Poly::from_f64(&[(1.0, 2.0), (-3.0, 0.5), (0.0, 1.0), (2.0, 2.0)], 128);
        let z = c(0.3, -0.7);
        let (v, dv) = p.eval_with_derivative(&z);
        assert_close(&v, &p.eval(&z), 1e-35);
        assert_close(&dv, &p.derivative().eval(&z), 1e-35);
    }

    #[test]
    fn reversed_reads_chart_at_infinity() {
        // z^2 - 1 homogenized is z^2 - w^2; at z = 1 it reads 1 - w^2.
        let p = Poly::from_real(&[-1.0, 0.0, 1.0], 128);
        assert_eq!(p.reversed(2), Poly::from_real(&[1.0, 0.0, -1.0], 128));
        // z + 1 seen as a degree-2 form: z w + w^2 -> w + w^2.
        let q = Poly::from_real(&[1.0, 1.0], 128);
        assert_eq!(q.reversed(2), Poly::from_real(&[0.0, 1.0, 1.0], 128));
    }
}
