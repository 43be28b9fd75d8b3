use num_complex::Complex64;

use crate::dynsys::PostcriticalSet;
use crate::error::{Error, Result};
use crate::greenmeas::MeasureSample;
use crate::{par, stats};

use super::atlas::{max_norm, Atlas};

/// Open square `q·r·W + τ + 2rη` in the coordinates of chart `chart`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub chart: usize,
    pub r: f64,
    pub eta: [i64; 2],
    pub tau: Complex64,
    /// Shrink factor, one of `1, 1−r, 1−2r, 1−3r, 1−4r` in use.
    pub q: f64,
}

impl Cell {
    pub fn center(&self) -> Complex64 {
        self.tau + 2.0 * self.r * Complex64::new(self.eta[0] as f64, self.eta[1] as f64)
    }

    /// Half the side length.
    pub fn half_side(&self) -> f64 {
        self.q * self.r
    }

    pub fn contains(&self, u: Complex64) -> bool {
        max_norm(u - self.center()) < self.half_side()
    }

    /// The concentric cell `(1 − k r)·W` for `k = 1, 2, 3, 4`.
    pub fn shrink(&self, k: u32) -> Cell {
        Cell {
            q: 1.0 - k as f64 * self.r,
            ..self.clone()
        }
    }

    /// Whether the closed cell lies inside `s·W` (the chart's `s·Ω_j`).
    pub fn inside(&self, s: f64) -> bool {
        max_norm(self.center()) + self.half_side() <= s
    }
}

/// A Manhattan on one chart with its measured street mass.
#[derive(Clone, Debug)]
pub struct Manhattan {
    pub chart: usize,
    pub r: f64,
    pub tau: Complex64,
    /// Measured `μ(4S_r ∩ Ω_j)`.
    pub street_mass: f64,
    pub street_ci: f64,
    /// `street_mass ≤ 30r + CI`.
    pub good: bool,
    /// No cell center within `1e-9·r` of the postcritical proxy.
    pub centers_off_pc: bool,
    /// Offsets scanned per axis.
    pub candidates_per_axis: usize,
}

impl Manhattan {
    pub fn cell(&self, eta: [i64; 2]) -> Cell {
        Cell {
            chart: self.chart,
            r: self.r,
            eta,
            tau: self.tau,
            q: 1.0,
        }
    }

    /// The cell whose closure contains `u`.
    pub fn cell_of(&self, u: Complex64) -> Cell {
        let s = (u - self.tau) / (2.0 * self.r);
        self.cell([s.re.round() as i64, s.im.round() as i64])
    }

    /// All cells whose closure lies in `s·Ω_j`.
    pub fn cells_inside(&self, s: f64) -> Vec<Cell> {
        let k = (s / (2.0 * self.r)).ceil() as i64 + 1;
        let mut out = Vec::new();
        for a in -k..=k {
            for b in -k..=k {
                let c = self.cell([a, b]);
                if c.inside(s) {
                    out.push(c);
                }
            }
        }
        out
    }

    /// Whether `u` lies in the extended street network `q·S_r`.
    pub fn in_street(&self, u: Complex64, q: u32) -> bool {
        in_street(u, self.tau, self.r, q)
    }
}

fn in_street(u: Complex64, tau: Complex64, r: f64, q: u32) -> bool {
    let edge = (1.0 - q as f64 * r) / 2.0;
    let s = (u - tau) / (2.0 * r);
    let off = |x: f64| (x - x.round()).abs();
    off(s.re) >= edge || off(s.im) >= edge
}

/// Minimum number of atoms for a street-mass estimate.
pub const MIN_STREET_ATOMS: usize = 10_000;

/// Scans `τ = τ* + (a₁, a₂)` with `a_l ∈ {0, 9r², …, 9(N−1)r²}`,
/// `N = ⌊1/(10r)⌋ − 1`, and returns the translation with the smallest
/// measured `μ(4S_r ∩ Ω_j)`. `τ*` is a fixed generic offset in `[0, r²]²`,
/// nudged until no cell center of any candidate sits on the postcritical
/// points given.
pub fn good_translation_search(
    atlas: &Atlas,
    chart: usize,
    r: f64,
    sample: &MeasureSample,
    pc: &PostcriticalSet,
) -> Result<Manhattan> {
    if !(r > 0.0 && r < 0.01) {
        return Err(Error::param("r", format!("need 0 < r < 1/100, got {r}")));
    }
    if chart >= atlas.len() {
        return Err(Error::param("chart", format!("atlas has {} charts", atlas.len())));
    }
    if sample.dim != 1 {
        return Err(Error::Precondition("Manhattans are built on P¹ samples".into()));
    }
    if sample.len() < MIN_STREET_ATOMS {
        return Err(Error::Precondition(format!(
            "street mass needs at least {MIN_STREET_ATOMS} atoms, sample has {}",
            sample.len()
        )));
    }
    let c = &atlas.charts[chart];
    let n = ((1.0 / (10.0 * r)).floor() as usize).saturating_sub(1).max(1);
    let step = 9.0 * r * r;

    let pcu: Vec<Complex64> = pc
        .sphere_points()
        .iter()
        .filter_map(|p| c.to_chart(p))
        .filter(|u| max_norm(*u) < 1.0 + 2.0 * r)
        .collect();
    let weyl = [0.754_877_666_246_692_7, 0.569_840_290_998_053_3];
    let mut tau_star = Complex64::new(0.5 * r * r, 0.5 * r * r);
    let mut off_pc = false;
    for t in 1..=64 {
        tau_star = Complex64::new(
            r * r * (t as f64 * weyl[0]).fract(),
            r * r * (t as f64 * weyl[1]).fract(),
        );
        let clear = pcu.iter().all(|u| {
            (0..n).all(|a| {
                (0..n).all(|b| {
                    let tau = tau_star + Complex64::new(a as f64 * step, b as f64 * step);
                    let s = (u - tau) / (2.0 * r);
                    let d = Complex64::new(s.re - s.re.round(), s.im - s.im.round());
                    max_norm(d) * 2.0 * r > 1e-9 * r
                })
            })
        });
        if clear {
            off_pc = true;
            break;
        }
    }

    let atoms: Vec<(Complex64, f64)> = sample
        .atoms()
        .filter_map(|(x, w)| c.to_chart(&x[0]).filter(|u| max_norm(*u) < 1.0).map(|u| (u, w)))
        .collect();
    let total = sample.total_mass;
    let combos: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).collect();
    let masses = par::map(&combos, |&(a, b)| {
        let tau = tau_star + Complex64::new(a as f64 * step, b as f64 * step);
        atoms
            .iter()
            .filter(|(u, _)| in_street(*u, tau, r, 4))
            .map(|(_, w)| w)
            .sum::<f64>()
            / total
    });
    let (best, mass) = masses
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, m)| (i, m.clamp(0.0, 1.0)))
        .expect("at least one candidate");
    let n_eff = stats::effective_size(&sample.weights);
    if n_eff < MIN_STREET_ATOMS as f64 {
        log::warn!("street mass from {n_eff:.0} effective atoms; the interval is wide");
    }
    let ci = if sample.deterministic {
        0.0
    } else {
        stats::binomial_half_width(mass, n_eff)
    };
    let (a, b) = combos[best];
    let bound = 30.0 * r;
    if mass - ci > bound {
        return Err(Error::Precondition(format!(
            "no translation has street mass within 30r = {bound:e}; best is {mass:e} ± {ci:e}"
        )));
    }
    Ok(Manhattan {
        chart,
        r,
        tau: tau_star + Complex64::new(a as f64 * step, b as f64 * step),
        street_mass: mass,
        street_ci: ci,
        good: mass <= bound + ci,
        centers_off_pc: off_pc,
        candidates_per_axis: n,
    })
}

/// μ-mass of a cell read off a sample, with its binomial half-width.
pub fn cell_mass(atlas: &Atlas, sample: &MeasureSample, cell: &Cell) -> (f64, f64) {
    let c = &atlas.charts[cell.chart];
    let hit: f64 = sample
        .atoms()
        .filter(|(x, _)| c.to_chart(&x[0]).is_some_and(|u| cell.contains(u)))
        .map(|(_, w)| w)
        .sum();
    let p = (hit / sample.total_mass).clamp(0.0, 1.0);
    let ci = if sample.deterministic {
        0.0
    } else {
        stats::binomial_half_width(p, stats::effective_size(&sample.weights))
    };
    (p, ci)
}

/// Chart coordinates of sample atoms with their weights, for repeated cell queries.
pub(crate) fn chart_atoms(atlas: &Atlas, sample: &MeasureSample, chart: usize) -> Vec<(Complex64, f64)> {
    let c = &atlas.charts[chart];
    sample
        .atoms()
        .filter_map(|(x, w)| c.to_chart(&x[0]).map(|u| (u, w / sample.total_mass)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::SpherePoint;
    use crate::greenmeas::{exact_measure, ExactKind};

    #[test]
    fn circle_street_mass_is_small() {
        let atlas = Atlas::build();
        let circ = exact_measure(ExactKind::Circle, 200_000, 4);
        let pc = PostcriticalSet {
            order: 0,
            points: Vec::new(),
        };
        // Chart 2 is centred at 1 and contains an arc of the circle.
        let m = good_translation_search(&atlas, 2, 0.005, &circ, &pc).unwrap();
        assert_eq!(m.candidates_per_axis, 19);
        assert!(m.good && m.street_mass <= 0.15, "{}", m.street_mass);
        assert!(m.street_mass > 0.0);
        assert!(m.centers_off_pc);
    }

    #[test]
    fn measure_away_from_chart_has_no_street_mass() {
        let atlas = Atlas::build();
        let circ = exact_measure(ExactKind::Circle, 20_000, 5);
        let shrunk = MeasureSample::from_atoms(
            1,
            circ.points
                .iter()
                .map(|p| SpherePoint::finite(p.affine().unwrap() * 1e-3))
                .collect(),
            circ.weights.clone(),
            circ.provenance,
        )
        .unwrap();
        let pc = PostcriticalSet {
            order: 0,
            points: Vec::new(),
        };
        // Chart 1 is centred at ∞; a tiny circle around 0 is outside Ω_1.
        let m = good_translation_search(&atlas, 1, 0.005, &shrunk, &pc).unwrap();
        assert_eq!(m.street_mass, 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        let atlas = Atlas::build();
        let circ = exact_measure(ExactKind::Circle, 20_000, 5);
        let pc = PostcriticalSet {
            order: 0,
            points: Vec::new(),
        };
        assert!(good_translation_search(&atlas, 0, 0.02, &circ, &pc).is_err());
        let small = exact_measure(ExactKind::Circle, 100, 5);
        assert!(good_translation_search(&atlas, 0, 0.005, &small, &pc).is_err());
    }

    #[test]
    fn cell_geometry() {
        let m = Manhattan {
            chart: 0,
            r: 0.01,
            tau: Complex64::new(0.001, 0.002),
            street_mass: 0.0,
            street_ci: 0.0,
            good: true,
            centers_off_pc: true,
            candidates_per_axis: 9,
        };
        let u = Complex64::new(0.2345, -0.1234);
        let c = m.cell_of(u);
        assert!(c.contains(u));
        assert!((c.center() - (m.tau + 0.02 * Complex64::new(c.eta[0] as f64, c.eta[1] as f64))).norm() < 1e-15);
        assert!(!c.shrink(4).contains(c.center() + Complex64::new(0.0099, 0.0)));
        assert!(m.in_street(c.center() + Complex64::new(0.0099, 0.0), 4));
        assert!(!m.in_street(c.center(), 4));
        let inner = m.cells_inside(0.5);
        assert!(inner.iter().all(|c| c.inside(0.5)));
        assert_eq!(inner.len(), 49 * 49);
    }
}
