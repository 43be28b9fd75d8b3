//! Flat `key=value` experiment configuration.
//!
//! Every key is known ahead of time and has a default, so a parsed config
//! can be written back in a canonical form: keys sorted, values normalized,
//! defaults filled in, comments dropped. Parsing the canonical text gives the
//! same text again.
//!
//! Common keys: `kind`, `seed`, `precision`, `out`, `cache` and the map
//! description under `map.` (`map.degree`, `map.P`, `map.Q`, and `map.P2`,
//! `map.Q2` for products). The remaining keys depend on the kind; see
//! [`Kind::schema`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use holodyn::dynsys::{DynMap, MapSpec};
use holodyn::equidist::Family;
use holodyn::manhattan::PipelineParams;
use holodyn::percyc::Backend;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Periodic,
    RatePreimage,
    RatePeriodic,
    Tube,
    Manhattan,
    Certify,
    Counts,
}

impl Kind {
    pub const ALL: [Kind; 7] = [
        Kind::Periodic,
        Kind::RatePreimage,
        Kind::RatePeriodic,
        Kind::Tube,
        Kind::Manhattan,
        Kind::Certify,
        Kind::Counts,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Kind::Periodic => "periodic",
            Kind::RatePreimage => "rate-preimage",
            Kind::RatePeriodic => "rate-periodic",
            Kind::Tube => "tube",
            Kind::Manhattan => "manhattan",
            Kind::Certify => "certify",
            Kind::Counts => "counts",
        }
    }

    pub fn parse(text: &str) -> Option<Kind> {
        match text {
            "preimage-rate" => Some(Kind::RatePreimage),
            "periodic-rate" => Some(Kind::RatePeriodic),
            _ => Kind::ALL.into_iter().find(|k| k.tag() == text),
        }
    }

    /// Kind-specific keys with their types and defaults.
    pub fn schema(self) -> &'static [(&'static str, Ty, &'static str)] {
        use Ty::*;
        match self {
            Kind::Periodic => &[("n_range", Range, "1..4"), ("backend", BackendTag, "newton-seeded")],
            Kind::Counts => &[
                ("n_range", Range, "1..6"),
                ("backend", BackendTag, "newton-seeded"),
                ("gamma", Gamma, "0.5"),
            ],
            Kind::RatePeriodic => &[
                ("n_range", Range, "2..9"),
                ("backend", BackendTag, "newton-seeded"),
                ("gamma", Gamma, "0.5"),
                ("q", QTag, "gamma"),
                ("family", FamilyTag, "smooth"),
                ("functions", Count, "5"),
                ("reference", ReferenceTag, "tree"),
                ("reference_depth", Count, "20"),
                ("reference_atoms", Count, "1000000"),
                ("burn_in", Count, "64"),
            ],
            Kind::RatePreimage => &[
                ("m_range", Range, "2..14"),
                ("base", Point, "0.31:0.77"),
                ("cap", Count, "1048576"),
                ("family", FamilyTag, "smooth"),
                ("functions", Count, "5"),
                ("reference", ReferenceTag, "tree"),
                ("reference_depth", Count, "20"),
                ("reference_atoms", Count, "1000000"),
                ("burn_in", Count, "64"),
            ],
            Kind::Tube => &[
                ("atoms", Count, "200000"),
                ("burn_in", Count, "64"),
                ("deltas", CountList, "4 16 64"),
                ("kappa", Positive, "2"),
                ("trials", Count, "20"),
            ],
            Kind::Manhattan => &[
                ("n", Count, "4"),
                ("gamma", Gamma, "0.5"),
                ("kappa", Positive, "2"),
                ("atoms", Count, "100000"),
                ("grid", Count, "9"),
                ("max_side", Positive, "0.0078125"),
            ],
            Kind::Certify => &[
                ("n", Count, "4"),
                ("gamma", Gamma, "0.5"),
                ("kappa", Positive, "2"),
                ("atoms", Count, "100000"),
                ("grid", Count, "9"),
                ("max_side", Positive, "0.0078125"),
                ("backend", BackendTag, "newton-seeded"),
            ],
        }
    }

    /// Kinds that work on a single map of P¹ only.
    fn single_map_only(self) -> bool {
        !matches!(self, Kind::Periodic | Kind::Counts)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Value types of config keys; each knows its canonical spelling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ty {
    Count,
    Seed,
    Precision,
    Positive,
    Gamma,
    Range,
    CountList,
    Point,
    FamilyTag,
    BackendTag,
    QTag,
    ReferenceTag,
    Text,
}

const COMMON: &[(&str, Ty, &str)] = &[
    ("seed", Ty::Seed, "0"),
    ("precision", Ty::Precision, "128"),
    ("out", Ty::Text, "out"),
    ("cache", Ty::Text, ""),
];

/// Keys that locate files rather than describe the computation; they are
/// left out of the config hash.
const LOCATION_KEYS: [&str; 2] = ["out", "cache"];

fn invalid(key: &str, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("`{key}`: {msg}"))
}

fn parse_usize(key: &str, v: &str) -> Result<usize, CliError> {
    v.parse::<usize>()
        .map_err(|_| invalid(key, format!("expected a nonnegative integer, got `{v}`")))
}

fn parse_f64(key: &str, v: &str) -> Result<f64, CliError> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(invalid(key, format!("expected a finite number, got `{v}`"))),
    }
}

/// Checks a value and returns its canonical spelling.
fn normalize(key: &str, ty: Ty, v: &str) -> Result<String, CliError> {
    let v = v.trim();
    Ok(match ty {
        Ty::Count => {
            let n = parse_usize(key, v)?;
            if n == 0 {
                return Err(invalid(key, "must be at least 1"));
            }
            n.to_string()
        }
        Ty::Seed => v
            .parse::<u64>()
            .map_err(|_| invalid(key, format!("expected an unsigned 64-bit integer, got `{v}`")))?
            .to_string(),
        Ty::Precision => {
            let p = parse_usize(key, v)?;
            if !(64..=8192).contains(&p) {
                return Err(invalid(key, "must lie in 64..=8192 bits"));
            }
            p.to_string()
        }
        Ty::Positive => {
            let x = parse_f64(key, v)?;
            if !(x > 0.0) {
                return Err(invalid(key, "must be positive"));
            }
            x.to_string()
        }
        Ty::Gamma => {
            let x = parse_f64(key, v)?;
            if !(x > 0.0 && x < 1.0) {
                return Err(invalid(key, format!("the exponent must satisfy 0 < γ < 1, got {x}")));
            }
            x.to_string()
        }
        Ty::Range => {
            let (a, b) = v
                .split_once("..")
                .ok_or_else(|| invalid(key, format!("expected `lo..hi`, got `{v}`")))?;
            let (a, b) = (parse_usize(key, a.trim())?, parse_usize(key, b.trim())?);
            if a == 0 || a > b {
                return Err(invalid(key, format!("need 1 ≤ lo ≤ hi, got {a}..{b}")));
            }
            format!("{a}..{b}")
        }
        Ty::CountList => {
            let items: Vec<usize> = v
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| parse_usize(key, s))
                .collect::<Result<_, _>>()?;
            if items.is_empty() || items.iter().any(|&d| d < 2) {
                return Err(invalid(key, "need a nonempty list of integers ≥ 2"));
            }
            items.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
        }
        Ty::Point => {
            let (re, im) = v.split_once(':').unwrap_or((v, "0"));
            let (re, im) = (parse_f64(key, re.trim())?, parse_f64(key, im.trim())?);
            format!("{re}:{im}")
        }
        Ty::FamilyTag => Family::parse(v)
            .ok_or_else(|| invalid(key, format!("unknown test-function family `{v}`")))?
            .tag(),
        Ty::BackendTag => Backend::from_tag(v).map_err(|e| invalid(key, e))?.tag().to_string(),
        Ty::QTag => match v {
            "all" | "repelling" | "gamma" => v.to_string(),
            _ => return Err(invalid(key, "expected one of all, repelling, gamma")),
        },
        Ty::ReferenceTag => match v {
            "tree" | "sampled" | "circle" | "arcsine" => v.to_string(),
            _ => return Err(invalid(key, "expected one of tree, sampled, circle, arcsine")),
        },
        Ty::Text => v.to_string(),
    })
}

/// A validated experiment description.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub map: MapSpec,
    /// Every other key in canonical spelling, defaults included.
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// Parses config text. `kind` may be omitted when `default_kind` is given
    /// (the subcommand); if both are present they must agree.
    pub fn parse(text: &str, default_kind: Option<Kind>) -> Result<Self, CliError> {
        let mut raw: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key=value", lineno + 1)))?;
            let k = k.trim().to_string();
            if raw.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key `{k}`", lineno + 1)));
            }
        }
        Self::from_pairs(raw, default_kind)
    }

    fn from_pairs(mut raw: BTreeMap<String, String>, default_kind: Option<Kind>) -> Result<Self, CliError> {
        let kind = match (raw.remove("kind"), default_kind) {
            (Some(k), want) => {
                let k = Kind::parse(&k).ok_or_else(|| invalid("kind", format!("unknown kind `{k}`")))?;
                if want.is_some_and(|w| w != k) {
                    return Err(invalid(
                        "kind",
                        format!("config says `{k}` but `{}` was requested", want.unwrap()),
                    ));
                }
                k
            }
            (None, Some(k)) => k,
            (None, None) => return Err(invalid("kind", "missing")),
        };
        let mut map_fields = BTreeMap::new();
        let keys: Vec<String> = raw.keys().filter(|k| k.starts_with("map.")).cloned().collect();
        for k in keys {
            let v = raw.remove(&k).expect("key listed above");
            map_fields.insert(k["map.".len()..].to_string(), v);
        }
        if map_fields.is_empty() {
            return Err(invalid("map", "no map.* keys given"));
        }
        let map = MapSpec::from_fields(&map_fields).map_err(|e| invalid("map", e))?;

        let mut values = BTreeMap::new();
        for &(key, ty, default) in COMMON.iter().chain(kind.schema()) {
            let given = raw.remove(key);
            let v = given.as_deref().unwrap_or(default);
            values.insert(key.to_string(), normalize(key, ty, v)?);
        }
        if let Some(k) = raw.keys().next() {
            return Err(invalid(k, format!("unknown key for kind `{kind}`")));
        }
        let cfg = ExperimentConfig { kind, map, values };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-key and module-level constraints, checked before any work.
    fn validate(&self) -> Result<(), CliError> {
        if self.map.degree() < 2 {
            return Err(invalid("map.degree", "maps must have degree at least 2"));
        }
        if self.kind.single_map_only() && self.map.is_product() {
            return Err(invalid(
                "map",
                format!("kind `{}` needs a map of P¹, not a product", self.kind),
            ));
        }
        DynMap::from_spec(&self.map, self.precision()).map_err(|e| invalid("map", e))?;
        let fit_points = holodyn::equidist::MIN_FIT_POINTS;
        match self.kind {
            Kind::RatePeriodic if self.range("n_range").count() < fit_points => {
                return Err(invalid(
                    "n_range",
                    format!("a rate fit needs at least {fit_points} periods"),
                ));
            }
            Kind::RatePreimage if self.range("m_range").count() < fit_points => {
                return Err(invalid(
                    "m_range",
                    format!("a rate fit needs at least {fit_points} orders"),
                ));
            }
            Kind::RatePeriodic | Kind::RatePreimage if self.count("reference_depth") < 3 => {
                return Err(invalid("reference_depth", "must be at least 3"));
            }
            Kind::Manhattan | Kind::Certify => {
                self.pipeline_params()
                    .validate()
                    .map_err(|e| invalid("gamma/kappa", e))?;
                if self.count("grid") < 3 {
                    return Err(invalid("grid", "must be at least 3"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Replaces one value (command-line overrides) and revalidates.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let mut pairs = self.pairs();
        if !pairs.contains_key(key) {
            return Err(invalid(key, format!("unknown key for kind `{}`", self.kind)));
        }
        pairs.insert(key.to_string(), value.to_string());
        *self = Self::from_pairs(pairs, None)?;
        Ok(())
    }

    fn pairs(&self) -> BTreeMap<String, String> {
        let mut all = self.values.clone();
        all.insert("kind".into(), self.kind.tag().into());
        for (k, v) in self.map.fields() {
            all.insert(format!("map.{k}"), v);
        }
        all
    }

    /// Canonical file form: sorted `key=value` lines.
    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// SHA-256 of the canonical text without the location keys.
    pub fn hash(&self) -> String {
        let body: String = self
            .pairs()
            .into_iter()
            .filter(|(k, _)| !LOCATION_KEYS.contains(&k.as_str()))
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        hex::encode(Sha256::digest(body.as_bytes()))
    }

    pub fn value(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("`{key}` is not a key of kind `{}`", self.kind))
    }

    pub fn count(&self, key: &str) -> usize {
        self.value(key).parse().expect("normalized")
    }

    pub fn float(&self, key: &str) -> f64 {
        self.value(key).parse().expect("normalized")
    }

    pub fn range(&self, key: &str) -> std::ops::RangeInclusive<usize> {
        let (a, b) = self.value(key).split_once("..").expect("normalized");
        a.parse().expect("normalized")..=b.parse().expect("normalized")
    }

    pub fn count_list(&self, key: &str) -> Vec<usize> {
        self.value(key)
            .split(' ')
            .map(|s| s.parse().expect("normalized"))
            .collect()
    }

    pub fn point(&self, key: &str) -> (f64, f64) {
        let (re, im) = self.value(key).split_once(':').expect("normalized");
        (re.parse().expect("normalized"), im.parse().expect("normalized"))
    }

    pub fn seed(&self) -> u64 {
        self.value("seed").parse().expect("normalized")
    }

    pub fn precision(&self) -> u32 {
        self.value("precision").parse().expect("normalized")
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.value("out"))
    }

    /// `None` when caching is disabled with `cache=none`.
    pub fn cache_dir(&self) -> Option<PathBuf> {
        match self.value("cache") {
            "none" => None,
            "" => Some(self.out_dir().join("cache")),
            dir => Some(PathBuf::from(dir)),
        }
    }

    pub fn pipeline_params(&self) -> PipelineParams {
        PipelineParams {
            atoms: self.count("atoms"),
            grid: self.count("grid"),
            max_side: self.float("max_side"),
            seed: self.seed(),
            precision: self.precision(),
            ..PipelineParams::with_exponents(self.float("gamma"), self.float("kappa"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: &str = "map.degree=2\nmap.P=0 0 1\nmap.Q=1\n";

    #[test]
    fn canonical_text_round_trips() {
        let text = format!("# comment\n  seed = 7\n{SQUARE}n_range=3..3\nkind=periodic\n");
        let cfg = ExperimentConfig::parse(&text, None).unwrap();
        let canon = cfg.to_text();
        let again = ExperimentConfig::parse(&canon, None).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_text(), canon);
        assert!(canon.starts_with("backend=newton-seeded\ncache=\nkind=periodic\nmap.P="));
    }

    #[test]
    fn values_are_normalized() {
        let a = ExperimentConfig::parse(&format!("{SQUARE}gamma=0.50\nn_range= 1 .. 6"), Some(Kind::Counts)).unwrap();
        let b = ExperimentConfig::parse(&format!("{SQUARE}gamma=.5"), Some(Kind::Counts)).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn location_keys_do_not_change_the_hash() {
        let a = ExperimentConfig::parse(SQUARE, Some(Kind::Periodic)).unwrap();
        let mut b = a.clone();
        b.set("out", "elsewhere").unwrap();
        b.set("cache", "none").unwrap();
        assert_eq!(a.hash(), b.hash());
        b.set("seed", "3").unwrap();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn gamma_outside_the_unit_interval_is_rejected() {
        let err = ExperimentConfig::parse(&format!("{SQUARE}gamma=1.5"), Some(Kind::RatePeriodic)).unwrap_err();
        assert!(err.to_string().contains("0 < γ < 1"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let bad = [
            format!("{SQUARE}bogus=1"),
            format!("{SQUARE}seed=1\nseed=2"),
            format!("{SQUARE}kind=tube"),
            "n_range=1..2".to_string(),
            format!("{SQUARE}n_range=5..2"),
            format!("{SQUARE}precision=8"),
        ];
        for text in &bad {
            assert!(ExperimentConfig::parse(text, Some(Kind::Periodic)).is_err(), "{text}");
        }
        let product = "map.degree=2\nmap.P=0 0 1\nmap.Q=1\nmap.P2=0 0 1\nmap.Q2=1\n";
        assert!(ExperimentConfig::parse(product, Some(Kind::Counts)).is_ok());
        assert!(ExperimentConfig::parse(product, Some(Kind::Tube)).is_err());
        let short = format!("{SQUARE}n_range=2..4");
        assert!(ExperimentConfig::parse(&short, Some(Kind::RatePeriodic)).is_err());
    }
}
