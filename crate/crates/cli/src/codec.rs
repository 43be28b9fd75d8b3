//! Bit-exact text forms of the cached artifacts. Floats are written as the
//! hex of their IEEE bits and multiprecision coordinates as exact decimals,
//! so a cache hit returns the very values that were stored.

use std::fmt::Write as _;

use holodyn::dynsys::{Chart, ProjectivePoint, SpherePoint};
use holodyn::greenmeas::{JuliaClass, MeasureSample, Provenance};
use holodyn::percyc::{Classification, CycleSet, PeriodicPoint};
use holodyn::{Error, Result};
use num_complex::Complex64;

/// An artifact the cache can store.
pub trait Artifact: Sized {
    const TAG: &'static str;
    fn encode(&self) -> String;
    fn decode(text: &str) -> Result<Self>;
}

fn bits(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

fn unbits(s: &str) -> Result<f64> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|_| Error::Parse(format!("bad float bits `{s}`")))
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse(format!("bad number `{s}`")))
}

/// `key=value` fields of a header line.
fn header<'a>(line: Option<&'a str>, tag: &str) -> Result<Vec<(&'a str, &'a str)>> {
    let line = line.ok_or_else(|| Error::Parse("empty artifact".into()))?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(tag) {
        return Err(Error::Parse(format!("expected a `{tag}` artifact")));
    }
    parts
        .map(|f| {
            f.split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header field `{f}`")))
        })
        .collect()
}

fn field<'a>(fields: &[(&'a str, &'a str)], key: &str) -> Result<&'a str> {
    fields
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::Parse(format!("header lacks `{key}`")))
}

impl Artifact for CycleSet {
    const TAG: &'static str = "cycleset";

    fn encode(&self) -> String {
        let mut out = format!(
            "cycleset n={} degree={} dim={} points={}\n",
            self.n,
            self.degree,
            self.dim,
            self.points.len()
        );
        for p in &self.points {
            for x in &p.location {
                out.push_str(&x.to_decimal());
                out.push(' ');
            }
            let mods: Vec<String> = p.multiplier_modulus.iter().map(|&m| bits(m)).collect();
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {}",
                p.period,
                p.minimal_period,
                mods.join(";"),
                p.classification.tag(),
                p.in_small_julia.tag(),
                bits(p.residual),
                p.multiplicity
            );
        }
        out
    }

    fn decode(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let h = header(lines.next(), Self::TAG)?;
        let n: usize = parse_num(field(&h, "n")?)?;
        let degree: usize = parse_num(field(&h, "degree")?)?;
        let dim: usize = parse_num(field(&h, "dim")?)?;
        let count: usize = parse_num(field(&h, "points")?)?;
        let mut points = Vec::with_capacity(count);
        for line in lines {
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != dim + 7 {
                return Err(Error::Parse(format!("periodic point line has {} fields", tok.len())));
            }
            let location = tok[..dim]
                .iter()
                .map(|t| ProjectivePoint::parse_decimal(t))
                .collect::<Result<Vec<_>>>()?;
            let rest = &tok[dim..];
            points.push(PeriodicPoint {
                location,
                period: parse_num(rest[0])?,
                minimal_period: parse_num(rest[1])?,
                multiplier_modulus: rest[2].split(';').map(unbits).collect::<Result<_>>()?,
                classification: Classification::from_tag(rest[3])?,
                in_small_julia: JuliaClass::from_tag(rest[4])?,
                residual: unbits(rest[5])?,
                multiplicity: parse_num(rest[6])?,
            });
        }
        if points.len() != count {
            return Err(Error::Parse(format!(
                "header promises {count} points, found {}",
                points.len()
            )));
        }
        Ok(CycleSet::from_points(points, n, degree, dim))
    }
}

fn chart_tag(c: Chart) -> char {
    match c {
        Chart::Finite => 'F',
        Chart::Infinite => 'I',
    }
}

impl Artifact for MeasureSample {
    const TAG: &'static str = "sample";

    fn encode(&self) -> String {
        let seed = self.rng_seed.map_or("none".to_string(), |s| s.to_string());
        let mut out = format!(
            "sample dim={} provenance={} seed={} chains={} deterministic={} total_mass={} atoms={}\n",
            self.dim,
            self.provenance.tag(),
            seed,
            self.chains,
            self.deterministic,
            bits(self.total_mass),
            self.len()
        );
        for (atom, w) in self.atoms() {
            for p in atom {
                let _ = write!(out, "{}{} {} ", chart_tag(p.chart), bits(p.coord.re), bits(p.coord.im));
            }
            out.push_str(&bits(w));
            out.push('\n');
        }
        out
    }

    fn decode(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let h = header(lines.next(), Self::TAG)?;
        let dim: usize = parse_num(field(&h, "dim")?)?;
        let count: usize = parse_num(field(&h, "atoms")?)?;
        let mut points = Vec::with_capacity(count * dim);
        let mut weights = Vec::with_capacity(count);
        for line in lines {
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 2 * dim + 1 {
                return Err(Error::Parse(format!("atom line has {} fields", tok.len())));
            }
            for c in tok[..2 * dim].chunks(2) {
                let chart = match c[0].as_bytes().first() {
                    Some(b'F') => Chart::Finite,
                    Some(b'I') => Chart::Infinite,
                    _ => return Err(Error::Parse(format!("bad chart in `{}`", c[0]))),
                };
                let coord = Complex64::new(unbits(&c[0][1..])?, unbits(c[1])?);
                points.push(SpherePoint { chart, coord });
            }
            weights.push(unbits(tok[2 * dim])?);
        }
        if weights.len() != count {
            return Err(Error::Parse(format!(
                "header promises {count} atoms, found {}",
                weights.len()
            )));
        }
        let seed = field(&h, "seed")?;
        Ok(MeasureSample {
            dim,
            points,
            weights,
            total_mass: unbits(field(&h, "total_mass")?)?,
            provenance: Provenance::from_tag(field(&h, "provenance")?)?,
            rng_seed: if seed == "none" { None } else { Some(parse_num(seed)?) },
            chains: parse_num(field(&h, "chains")?)?,
            deterministic: parse_num(field(&h, "deterministic")?)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use holodyn::dynsys::RationalMap;
    use holodyn::greenmeas::{default_seed, sample_backward};
    use holodyn::percyc::{find_periodic, Backend, PeriodicOptions};

    #[test]
    fn cycle_sets_round_trip_exactly() {
        let f = RationalMap::unicritical(2, Complex64::new(-1.0, 0.0), 128).unwrap();
        let cs = find_periodic(&f, 3, Backend::NewtonSeeded, &PeriodicOptions::default()).unwrap();
        let text = cs.encode();
        let back = CycleSet::decode(&text).unwrap();
        assert_eq!(back.encode(), text);
        assert_eq!(back.to_csv(), cs.to_csv());
        assert_eq!(back.counts, cs.counts);
        assert!(CycleSet::decode(&text.replace("repelling", "sideways")).is_err());
    }

    #[test]
    fn samples_round_trip_exactly() {
        let f = RationalMap::rational(
            &[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)],
            &[(0.5, 0.0), (0.0, 0.0), (0.2, 0.0)],
            2,
            128,
        )
        .unwrap()
        .to_f64();
        let s = sample_backward(&f, &default_seed(&f), 16, 500, 3);
        let back = MeasureSample::decode(&s.encode()).unwrap();
        assert_eq!(back, s);
        let text = s.encode();
        let lines: Vec<&str> = text.lines().take(10).collect();
        assert!(MeasureSample::decode(&lines.join("\n")).is_err());
    }
}
