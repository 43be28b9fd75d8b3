use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::mpnum::{parse_float, BigComplex, Poly};

/// An exact decimal number `digits × 10^exp`, normalized so that equal values
/// have equal representations.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Decimal {
    negative: bool,
    digits: String,
    exp: i64,
}

impl Decimal {
    pub fn zero() -> Self {
        Decimal {
            negative: false,
            digits: String::new(),
            exp: 0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("`{text}` is not a decimal number"));
        let s = text.trim();
        let (negative, s) = match s.as_bytes().first() {
            Some(b'-') => (true, &s[1..]),
            Some(b'+') => (false, &s[1..]),
            _ => (false, s),
        };
        let (mantissa, exp) = match s.find(['e', 'E']) {
            Some(k) => (&s[..k], s[k + 1..].parse::<i64>().map_err(|_| bad())?),
            None => (s, 0),
        };
        let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let all = format!("{int}{frac}");
        let lead = all.bytes().take_while(|&b| b == b'0').count();
        let body = &all[lead..];
        let trail = body.bytes().rev().take_while(|&b| b == b'0').count();
        let digits = body[..body.len() - trail].to_string();
        if digits.is_empty() {
            return Ok(Decimal::zero());
        }
        let exp = exp - frac.len() as i64 + trail as i64;
        Ok(Decimal { negative, digits, exp })
    }

    /// Exact conversion of a finite f64 (every double is a finite decimal).
    pub fn from_f64(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::Parse(format!("non-finite coefficient {x}")));
        }
        // 1100 significant digits exceed the longest exact expansion of a double.
        Decimal::parse(&format!("{x:.1100e}"))
    }

    pub fn to_f64(&self) -> f64 {
        self.to_string().parse().unwrap_or(f64::NAN)
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let sign = if self.negative { "-" } else { "" };
        let n = self.digits.len() as i64;
        if self.exp >= 0 && self.exp <= 6 {
            write!(f, "{sign}{}{}", self.digits, "0".repeat(self.exp as usize))
        } else if self.exp < 0 && -self.exp <= n + 6 {
            let point = n + self.exp;
            if point > 0 {
                let (a, b) = self.digits.split_at(point as usize);
                write!(f, "{sign}{a}.{b}")
            } else {
                write!(f, "{sign}0.{}{}", "0".repeat((-point) as usize), self.digits)
            }
        } else {
            write!(f, "{sign}{}e{}", self.digits, self.exp)
        }
    }
}

/// Exact complex coefficient `re + i·im`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DecimalComplex {
    pub re: Decimal,
    pub im: Decimal,
}

impl DecimalComplex {
    pub fn zero() -> Self {
        DecimalComplex {
            re: Decimal::zero(),
            im: Decimal::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn from_f64(re: f64, im: f64) -> Result<Self> {
        Ok(DecimalComplex {
            re: Decimal::from_f64(re)?,
            im: Decimal::from_f64(im)?,
        })
    }

    /// Accepts `re` or `re:im`.
    pub fn parse(token: &str) -> Result<Self> {
        let (re, im) = token.split_once(':').unwrap_or((token, "0"));
        Ok(DecimalComplex {
            re: Decimal::parse(re)?,
            im: Decimal::parse(im)?,
        })
    }

    pub fn to_big(&self, prec: u32) -> Result<BigComplex> {
        let re = parse_float(&self.re.to_string(), prec)?;
        let im = parse_float(&self.im.to_string(), prec)?;
        Ok(BigComplex::from_parts(&re, &im))
    }
}

impl fmt::Display for DecimalComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            write!(f, "{}", self.re)
        } else {
            write!(f, "{}:{}", self.re, self.im)
        }
    }
}

/// Coefficient lists of one rational map, constant term first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RationalSpec {
    pub degree: usize,
    pub p: Vec<DecimalComplex>,
    pub q: Vec<DecimalComplex>,
}

impl RationalSpec {
    pub fn new(degree: usize, p: Vec<DecimalComplex>, q: Vec<DecimalComplex>) -> Self {
        RationalSpec {
            degree,
            p: trim(p),
            q: trim(q),
        }
    }

    pub fn from_f64(degree: usize, p: &[(f64, f64)], q: &[(f64, f64)]) -> Result<Self> {
        let conv = |v: &[(f64, f64)]| -> Result<Vec<DecimalComplex>> {
            v.iter().map(|&(a, b)| DecimalComplex::from_f64(a, b)).collect()
        };
        Ok(RationalSpec::new(degree, conv(p)?, conv(q)?))
    }

    pub fn polys(&self, prec: u32) -> Result<(Poly, Poly)> {
        let conv = |v: &[DecimalComplex]| -> Result<Poly> {
            Ok(Poly::new(v.iter().map(|c| c.to_big(prec)).collect::<Result<_>>()?))
        };
        Ok((conv(&self.p)?, conv(&self.q)?))
    }
}

fn trim(mut v: Vec<DecimalComplex>) -> Vec<DecimalComplex> {
    while v.last().is_some_and(DecimalComplex::is_zero) {
        v.pop();
    }
    v
}

/// Text description of a map: a single rational map, or a product of two.
///
/// The canonical form is `key=value` lines in fixed order:
///
/// ```text
/// degree=2
/// P=-1 0 1
/// Q=1
/// ```
///
/// with `P2`/`Q2` added for product maps. Coefficients are `re` or `re:im`,
/// constant term first; the parser also takes sparse `k=coef` terms in any order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum MapSpec {
    Single(RationalSpec),
    Product(RationalSpec, RationalSpec),
}

impl MapSpec {
    pub fn degree(&self) -> usize {
        match self {
            MapSpec::Single(s) => s.degree,
            MapSpec::Product(a, _) => a.degree,
        }
    }

    pub fn is_product(&self) -> bool {
        matches!(self, MapSpec::Product(..))
    }

    /// Parses from `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut fields = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{line}`")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        Self::from_fields(&fields)
    }

    /// Builds from already split fields (`degree`, `P`, `Q`, optional `P2`, `Q2`).
    pub fn from_fields(fields: &BTreeMap<String, String>) -> Result<Self> {
        for key in fields.keys() {
            if !matches!(key.as_str(), "degree" | "P" | "Q" | "P2" | "Q2") {
                return Err(Error::Parse(format!("unknown map key `{key}`")));
            }
        }
        let get = |k: &str| {
            fields
                .get(k)
                .ok_or_else(|| Error::Parse(format!("map description lacks `{k}`")))
        };
        let degree: usize = get("degree")?
            .parse()
            .map_err(|_| Error::Parse("degree must be a nonnegative integer".into()))?;
        let first = RationalSpec::new(degree, parse_coeffs(get("P")?)?, parse_coeffs(get("Q")?)?);
        match (fields.get("P2"), fields.get("Q2")) {
            (None, None) => Ok(MapSpec::Single(first)),
            (Some(p2), Some(q2)) => {
                let second = RationalSpec::new(degree, parse_coeffs(p2)?, parse_coeffs(q2)?);
                Ok(MapSpec::Product(first, second))
            }
            _ => Err(Error::Parse("P2 and Q2 must appear together".into())),
        }
    }

    /// Canonical field values in fixed key order.
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[DecimalComplex]| {
            if v.is_empty() {
                "0".to_string()
            } else {
                v.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
            }
        };
        let mut out = vec![("degree", self.degree().to_string())];
        match self {
            MapSpec::Single(s) => {
                out.push(("P", list(&s.p)));
                out.push(("Q", list(&s.q)));
            }
            MapSpec::Product(a, b) => {
                out.push(("P", list(&a.p)));
                out.push(("Q", list(&a.q)));
                out.push(("P2", list(&b.p)));
                out.push(("Q2", list(&b.q)));
            }
        }
        out
    }

    /// The canonical text; equal maps give byte-identical text.
    pub fn canonical_text(&self) -> String {
        self.fields().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// `z^d + c`.
    pub fn unicritical(d: usize, c: (f64, f64)) -> Result<Self> {
        let mut p = vec![(0.0, 0.0); d + 1];
        p[0] = c;
        p[d] = (1.0, 0.0);
        Ok(MapSpec::Single(RationalSpec::from_f64(d, &p, &[(1.0, 0.0)])?))
    }
}

fn parse_coeffs(text: &str) -> Result<Vec<DecimalComplex>> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(Error::Parse("empty coefficient list".into()));
    }
    let sparse = tokens.iter().filter(|t| t.contains('=')).count();
    if sparse == 0 {
        return tokens.iter().map(|t| DecimalComplex::parse(t)).collect();
    }
    if sparse != tokens.len() {
        return Err(Error::Parse(format!("mixed dense and sparse terms in `{text}`")));
    }
    let mut terms: BTreeMap<usize, DecimalComplex> = BTreeMap::new();
    for t in tokens {
        let (k, v) = t.split_once('=').expect("checked above");
        let k: usize = k
            .parse()
            .map_err(|_| Error::Parse(format!("bad exponent in term `{t}`")))?;
        if terms.insert(k, DecimalComplex::parse(v)?).is_some() {
            return Err(Error::Parse(format!("exponent {k} given twice")));
        }
    }
    let top = terms.keys().next_back().copied().unwrap_or(0);
    let mut out = vec![DecimalComplex::zero(); top + 1];
    for (k, v) in terms {
        out[k] = v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_normalization() {
        for (a, b) in [
            ("1", "1.000"),
            ("-0.50", "-5e-1"),
            ("1e3", "1000.0"),
            ("0.0", "-0"),
            ("+12.5e2", "1250"),
        ] {
            assert_eq!(Decimal::parse(a).unwrap(), Decimal::parse(b).unwrap(), "{a} vs {b}");
        }
        assert_eq!(Decimal::parse("0.1").unwrap().to_string(), "0.1");
        assert_eq!(Decimal::parse("-2.50").unwrap().to_string(), "-2.5");
        assert_eq!(Decimal::parse("1e-30").unwrap().to_string(), "1e-30");
        assert_eq!(Decimal::parse("123e10").unwrap().to_string(), "123e10");
        assert!(Decimal::parse("1.2.3").is_err());
        assert!(Decimal::parse("abc").is_err());
    }

    #[test]
    fn f64_expansion_is_exact() {
        let d = Decimal::from_f64(0.1).unwrap();
        assert!(d.to_string().starts_with("0.1000000000000000055511151231257827"));
        assert_eq!(d.to_f64(), 0.1);
        assert_eq!(Decimal::from_f64(-0.75).unwrap().to_string(), "-0.75");
    }

    #[test]
    fn reordered_terms_share_canonical_text() {
        let dense = MapSpec::parse("degree=2\nP=-1 0 1\nQ=1").unwrap();
        let sparse = MapSpec::parse("Q = 1.0\nP = 2=1 0=-1.000\ndegree = 2\n").unwrap();
        assert_eq!(dense.canonical_text(), sparse.canonical_text());
        assert_eq!(dense.canonical_text(), "degree=2\nP=-1 0 1\nQ=1\n");
    }

    #[test]
    fn complex_and_product() {
        let s = MapSpec::parse("degree=2\nP=0:0.1 0 1\nQ=1\nP2=0 0 1\nQ2=1").unwrap();
        assert!(s.is_product());
        let again = MapSpec::parse(&s.canonical_text()).unwrap();
        assert_eq!(s, again);
        assert!(s.canonical_text().contains("P=0:0.1 0 1"));
    }

    #[test]
    fn rejects_malformed() {
        assert!(MapSpec::parse("degree=2\nP=1 0 1").is_err());
        assert!(MapSpec::parse("degree=2\nP=1 2=1\nQ=1").is_err());
        assert!(MapSpec::parse("degree=2\nP=0=1 0=2\nQ=1").is_err());
        assert!(MapSpec::parse("degree=2\nP=1\nQ=1\nR=3").is_err());
    }
}
