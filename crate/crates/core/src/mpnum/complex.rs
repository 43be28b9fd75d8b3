use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64;
use rug::{Complex, Float};

use crate::error::{Error, Result};

/// Arbitrary-precision real number.
pub type BigReal = Float;

/// Smallest working precision accepted anywhere in the crate.
pub const MIN_PRECISION: u32 = 64;
/// Precision at which solvers start.
pub const DEFAULT_PRECISION: u32 = 128;
/// Hard ceiling of the doubling policy.
pub const MAX_PRECISION: u32 = 8192;

pub(crate) fn clamp_prec(prec: u32) -> u32 {
    prec.clamp(MIN_PRECISION, MAX_PRECISION * 4)
}

/// Complex number backed by MPFR with an explicit working precision.
///
/// Binary operations are evaluated at the larger precision of the two operands.
#[derive(Clone, PartialEq)]
pub struct BigComplex(Complex);

impl BigComplex {
    pub fn zero(prec: u32) -> Self {
        BigComplex(Complex::new(clamp_prec(prec)))
    }

    pub fn one(prec: u32) -> Self {
        Self::from_f64(1.0, 0.0, prec)
    }

    pub fn from_f64(re: f64, im: f64, prec: u32) -> Self {
        BigComplex(Complex::with_val(clamp_prec(prec), (re, im)))
    }

    pub fn from_c64(z: Complex64, prec: u32) -> Self {
        Self::from_f64(z.re, z.im, prec)
    }

    pub fn from_real(re: &Float, prec: u32) -> Self {
        BigComplex(Complex::with_val(clamp_prec(prec), (re, 0)))
    }

    pub fn from_parts(re: &Float, im: &Float) -> Self {
        let prec = clamp_prec(re.prec().max(im.prec()));
        BigComplex(Complex::with_val(prec, (re, im)))
    }

    /// `exp(2πi k/n)` computed at full precision.
    pub fn root_of_unity(k: i64, n: u64, prec: u32) -> Self {
        let prec = clamp_prec(prec);
        let theta = Float::with_val(prec, rug::float::Constant::Pi) * 2u32 * k / n;
        let (s, c) = theta.sin_cos(Float::new(prec));
        BigComplex(Complex::with_val(prec, (c, s)))
    }

    /// `cos θ + i sin θ` with θ given in units of full turns. The angle is
    /// only as exact as the f64 argument; see [`BigComplex::root_of_unity`].
    pub fn unit(turns: f64, prec: u32) -> Self {
        let prec = clamp_prec(prec);
        let theta = Float::with_val(prec, rug::float::Constant::Pi) * 2u32 * turns;
        let (s, c) = theta.sin_cos(Float::new(prec));
        BigComplex(Complex::with_val(prec, (c, s)))
    }

    pub fn prec(&self) -> u32 {
        let (a, b) = self.0.prec();
        a.max(b)
    }

    pub fn re(&self) -> &Float {
        self.0.real()
    }

    pub fn im(&self) -> &Float {
        self.0.imag()
    }

    pub fn inner(&self) -> &Complex {
        &self.0
    }

    pub fn with_prec(&self, prec: u32) -> Self {
        let mut c = self.0.clone();
        c.set_prec(clamp_prec(prec));
        BigComplex(c)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_finite(&self) -> bool {
        self.re().is_finite() && self.im().is_finite()
    }

    /// Squared modulus.
    pub fn norm_sqr(&self) -> Float {
        Float::with_val(self.prec(), self.0.norm_ref())
    }

    pub fn abs(&self) -> Float {
        Float::with_val(self.prec(), self.0.abs_ref())
    }

    pub fn abs_f64(&self) -> f64 {
        self.abs().to_f64()
    }

    /// Modulus as a natural logarithm, robust to exponents outside f64 range.
    pub fn ln_abs(&self) -> f64 {
        ln_float(&self.abs())
    }

    pub fn to_c64(&self) -> Complex64 {
        Complex64::new(self.re().to_f64(), self.im().to_f64())
    }

    pub fn conj(&self) -> Self {
        BigComplex(Complex::with_val(self.prec(), self.0.conj_ref()))
    }

    pub fn recip(&self) -> Self {
        let one = Complex::with_val(self.prec(), 1);
        BigComplex(quotient(&one, &self.0, self.prec()))
    }

    pub fn sqrt(&self) -> Self {
        BigComplex(Complex::with_val(self.prec(), self.0.sqrt_ref()))
    }

    pub fn square(&self) -> Self {
        BigComplex(Complex::with_val(self.prec(), self.0.square_ref()))
    }

    pub fn scale(&self, k: &Float) -> Self {
        let prec = self.prec().max(k.prec());
        BigComplex(Complex::with_val(prec, &self.0 * k))
    }

    pub fn scale_f64(&self, k: f64) -> Self {
        BigComplex(Complex::with_val(self.prec(), &self.0 * k))
    }

    pub fn powu(&self, n: u32) -> Self {
        let mut acc = BigComplex::one(self.prec());
        let mut base = self.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = base.square();
            }
        }
        acc
    }

    /// Serializes as `re,im@prec` with enough decimal digits to round-trip.
    pub fn to_decimal(&self) -> String {
        format!(
            "{},{}@{}",
            float_to_decimal(self.re()),
            float_to_decimal(self.im()),
            self.prec()
        )
    }

    /// Inverse of [`BigComplex::to_decimal`].
    pub fn parse_decimal(text: &str) -> Result<Self> {
        let (body, prec) = text
            .trim()
            .rsplit_once('@')
            .ok_or_else(|| Error::Parse(format!("missing precision annotation in `{text}`")))?;
        let prec: u32 = prec
            .parse()
            .map_err(|_| Error::Parse(format!("bad precision in `{text}`")))?;
        let (re, im) = body
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("expected `re,im` in `{text}`")))?;
        let re = parse_float(re, prec)?;
        let im = parse_float(im, prec)?;
        Ok(BigComplex(Complex::with_val(clamp_prec(prec), (re, im))))
    }
}

pub(crate) fn float_to_decimal(x: &Float) -> String {
    x.to_string_radix(10, None)
}

/// Parses a decimal real at the given precision.
pub fn parse_float(text: &str, prec: u32) -> Result<Float> {
    let parsed = Float::parse(text.trim()).map_err(|e| Error::Parse(format!("`{text}`: {e}")))?;
    Ok(Float::with_val(clamp_prec(prec), parsed))
}

/// Natural log of a nonnegative big float, returned as f64 even when the
/// value itself is outside the f64 range.
pub fn ln_float(x: &Float) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    if x.is_infinite() {
        return f64::INFINITY;
    }
    let (mant, exp) = x.to_f64_exp();
    mant.abs().ln() + f64::from(exp) * std::f64::consts::LN_2
}

impl fmt::Debug for BigComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let z = self.to_c64();
        write!(f, "({:e}{:+e}i)@{}", z.re, z.im, self.prec())
    }
}

impl fmt::Display for BigComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_decimal())
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&BigComplex> for &BigComplex {
            type Output = BigComplex;
            fn $method(self, rhs: &BigComplex) -> BigComplex {
                let prec = self.prec().max(rhs.prec());
                BigComplex(Complex::with_val(prec, &self.0 $op &rhs.0))
            }
        }
        impl $trait<BigComplex> for BigComplex {
            type Output = BigComplex;
            fn $method(self, rhs: BigComplex) -> BigComplex {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&BigComplex> for BigComplex {
            type Output = BigComplex;
            fn $method(self, rhs: &BigComplex) -> BigComplex {
                (&self).$method(rhs)
            }
        }
        impl $trait<BigComplex> for &BigComplex {
            type Output = BigComplex;
            fn $method(self, rhs: BigComplex) -> BigComplex {
                self.$method(&rhs)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);

// MPC's correctly rounded division raises its working precision with the
// exponent gap between the parts of the quotient, which stalls once an orbit
// coordinate has underflowed to 2^(-10^9). Dividing by the squared norm keeps
// a few-ulp relative error at constant cost.
fn quotient(num: &Complex, den: &Complex, prec: u32) -> Complex {
    let n = Float::with_val(prec, den.norm_ref());
    let conj = Complex::with_val(prec, den.conj_ref());
    let mut q = Complex::with_val(prec, num * &conj);
    *q.mut_real() /= &n;
    *q.mut_imag() /= &n;
    q
}

impl Div<&BigComplex> for &BigComplex {
    type Output = BigComplex;
    fn div(self, rhs: &BigComplex) -> BigComplex {
        BigComplex(quotient(&self.0, &rhs.0, self.prec().max(rhs.prec())))
    }
}

impl Div<BigComplex> for BigComplex {
    type Output = BigComplex;
    fn div(self, rhs: BigComplex) -> BigComplex {
        &self / &rhs
    }
}

impl Div<&BigComplex> for BigComplex {
    type Output = BigComplex;
    fn div(self, rhs: &BigComplex) -> BigComplex {
        &self / rhs
    }
}

impl Div<BigComplex> for &BigComplex {
    type Output = BigComplex;
    fn div(self, rhs: BigComplex) -> BigComplex {
        self / &rhs
    }
}

impl AddAssign<&BigComplex> for BigComplex {
    fn add_assign(&mut self, rhs: &BigComplex) {
        if rhs.prec() > self.prec() {
            self.0.set_prec(rhs.prec());
        }
        self.0 += &rhs.0;
    }
}

impl SubAssign<&BigComplex> for BigComplex {
    fn sub_assign(&mut self, rhs: &BigComplex) {
        if rhs.prec() > self.prec() {
            self.0.set_prec(rhs.prec());
        }
        self.0 -= &rhs.0;
    }
}

impl MulAssign<&BigComplex> for BigComplex {
    fn mul_assign(&mut self, rhs: &BigComplex) {
        if rhs.prec() > self.prec() {
            self.0.set_prec(rhs.prec());
        }
        self.0 *= &rhs.0;
    }
}

impl Neg for &BigComplex {
    type Output = BigComplex;
    fn neg(self) -> BigComplex {
        BigComplex(Complex::with_val(self.prec(), -&self.0))
    }
}

impl Neg for BigComplex {
    type Output = BigComplex;
    fn neg(self) -> BigComplex {
        BigComplex(-self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precision_floor_is_enforced() {
        assert_eq!(BigComplex::zero(8).prec(), MIN_PRECISION);
        assert_eq!(BigComplex::one(256).prec(), 256);
    }

    #[test]
    fn results_take_the_larger_precision() {
        let a = BigComplex::from_f64(1.0, 2.0, 64);
        let b = BigComplex::from_f64(0.5, -1.0, 300);
        assert_eq!((&a * &b).prec(), 300);
        assert_eq!((&b - &a).prec(), 300);
    }

    #[test]
    fn decimal_round_trip_is_exact() {
        let third = BigComplex::from_f64(1.0, 0.0, 200) / BigComplex::from_f64(3.0, 0.0, 200);
        let z = &third + &BigComplex::from_f64(0.0, -7.25, 200);
        let text = z.to_decimal();
        let back = BigComplex::parse_decimal(&text).unwrap();
        assert_eq!(back, z);
        assert_eq!(back.prec(), 200);
    }

    #[test]
    fn parse_rejects_missing_annotation() {
        assert!(BigComplex::parse_decimal("1.0,2.0").is_err());
    }

    #[test]
    fn ln_abs_survives_huge_exponents() {
        let mut z = BigComplex::from_f64(2.0, 0.0, 128);
        for _ in 0..12 {
            z = z.square();
        }
        // 2^4096 overflows f64 but its log does not.
        let expected = 4096.0 * std::f64::consts::LN_2;
        assert!((z.ln_abs() - expected).abs() < 1e-9);
    }

    #[test]
    fn unit_roots_close_up() {
        let w = BigComplex::root_of_unity(1, 7, 192);
        let w7 = w.powu(7);
        let err = (&w7 - &BigComplex::one(192)).abs_f64();
        assert!(err < 1e-50, "{err}");
    }
}
