use std::f64::consts::TAU;

use rug::Float;

use super::complex::{clamp_prec, BigComplex, DEFAULT_PRECISION, MAX_PRECISION};
use super::poly::Poly;
use crate::error::{Error, Result};

/// Knobs for [`poly_roots_with`] and [`poly_roots_adaptive`].
#[derive(Clone, Debug)]
pub struct RootOptions {
    pub start_precision: u32,
    pub max_precision: u32,
    /// Sweep limit per precision level; `None` scales it with the precision.
    pub max_iterations: Option<usize>,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            start_precision: DEFAULT_PRECISION,
            max_precision: MAX_PRECISION,
            max_iterations: None,
        }
    }
}

impl RootOptions {
    pub fn at_precision(prec: u32) -> Self {
        RootOptions {
            start_precision: prec,
            max_precision: prec.max(MAX_PRECISION),
            ..Self::default()
        }
    }

    fn sweeps(&self, prec: u32) -> usize {
        self.max_iterations.unwrap_or(64 + prec as usize / 4)
    }
}

/// All roots of a polynomial with their certificates.
#[derive(Clone, Debug)]
pub struct RootSet {
    pub roots: Vec<BigComplex>,
    /// `|p(r)|` evaluated at the final precision.
    pub residuals: Vec<f64>,
    /// `|p(r)| / Σ|a_i||r|^i`, the quantity that is certified.
    pub relative_residuals: Vec<f64>,
    /// Groups (of size at least two) of roots closer than the cluster radius.
    pub clusters: Vec<Vec<usize>>,
    pub precision: u32,
    pub iterations: usize,
}

impl RootSet {
    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Relative residual every root had to meet.
    pub fn threshold(&self) -> f64 {
        certification_level(self.precision)
    }

    /// Cluster index of each root, `None` for isolated roots.
    pub fn cluster_of(&self, i: usize) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains(&i))
    }
}

/// Relative residual threshold `2^(-prec/2)`.
pub fn certification_level(prec: u32) -> f64 {
    2f64.powi(-(prec as i32) / 2)
}

/// Radius under which two roots are reported as one cluster, scaled by `max(1, |r|)`.
pub fn cluster_radius(prec: u32) -> Float {
    Float::with_val(64, Float::i_exp(1, -(prec as i32) / 4))
}

/// Roots of `p`, starting at 128 bits and doubling on certification failure.
pub fn poly_roots(p: &Poly) -> Result<RootSet> {
    poly_roots_with(p, &RootOptions::default())
}

pub fn poly_roots_with(p: &Poly, opts: &RootOptions) -> Result<RootSet> {
    poly_roots_adaptive(|_| Ok(p.clone()), opts)
}

/// Adaptive driver: `build(prec)` must return the polynomial computed at that
/// precision, which lets callers recompute rounded coefficients (compositions)
/// whenever the precision is raised.
pub fn poly_roots_adaptive<F>(mut build: F, opts: &RootOptions) -> Result<RootSet>
where
    F: FnMut(u32) -> Result<Poly>,
{
    let max_prec = clamp_prec(opts.max_precision.max(opts.start_precision));
    let mut prec = clamp_prec(opts.start_precision);
    let mut warm: Option<Vec<BigComplex>> = None;
    let mut last_error;
    loop {
        let p = build(prec)?;
        check_solvable(&p)?;
        match solve_at(&p, prec, warm.take(), opts.sweeps(prec)) {
            Ok(set) => return Ok(set),
            Err((err, roots)) => {
                log::debug!("root finder at {prec} bits failed: {err}");
                last_error = err;
                warm = Some(roots);
            }
        }
        if prec >= max_prec {
            break;
        }
        prec = (prec * 2).min(max_prec);
    }
    Err(match last_error {
        Error::NonConvergence { .. } => last_error,
        _ => Error::PrecisionExhausted {
            max_precision: max_prec,
        },
    })
}

fn check_solvable(p: &Poly) -> Result<()> {
    if p.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    if p.degree() == 0 {
        return Err(Error::ConstantPolynomial);
    }
    Ok(())
}

type Failure = (Error, Vec<BigComplex>);

fn solve_at(
    p: &Poly,
    prec: u32,
    warm: Option<Vec<BigComplex>>,
    sweeps: usize,
) -> std::result::Result<RootSet, Failure> {
    let n = p.degree();
    // Exact zero roots are split off before iterating.
    let zeros = p.coeffs().iter().take_while(|c| c.is_zero()).count();
    let q = Poly::new(p.coeffs()[zeros..].to_vec());
    let m = q.degree();

    let mut z: Vec<BigComplex> = match warm {
        Some(w) if w.len() == n => {
            let nonzero: Vec<_> = w.iter().filter(|r| !r.is_zero()).cloned().collect();
            if nonzero.len() == m {
                nonzero.iter().map(|r| r.with_prec(prec)).collect()
            } else {
                initial_guesses(&q, prec)
            }
        }
        _ => initial_guesses(&q, prec),
    };

    let (converged, iterations) = aberth(&q, &mut z, prec, sweeps);
    let mut roots = vec![BigComplex::zero(prec); zeros];
    roots.extend(z);

    if !converged {
        let moving = roots.len();
        return Err((
            Error::NonConvergence {
                iterations,
                unconverged: moving,
            },
            roots,
        ));
    }

    let level = Float::with_val(64, Float::i_exp(1, -(prec as i32) / 2));
    let mut residuals = Vec::with_capacity(n);
    let mut relative = Vec::with_capacity(n);
    let mut certified = true;
    for r in &roots {
        let value = p.eval(&r.with_prec(prec)).abs();
        let scale = p.magnitude_at(&r.abs());
        let rel = if scale.is_zero() {
            Float::new(64)
        } else {
            Float::with_val(64, &value / &scale)
        };
        if rel > level {
            certified = false;
        }
        residuals.push(value.to_f64());
        relative.push(rel.to_f64());
    }
    if !certified {
        return Err((Error::PrecisionExhausted { max_precision: prec }, roots));
    }

    let clusters = find_clusters(&roots, prec);
    Ok(RootSet {
        roots,
        residuals,
        relative_residuals: relative,
        clusters,
        precision: prec,
        iterations,
    })
}

/// Starting points on circles read off the upper Newton polygon of
/// `(i, log|a_i|)`, one circle per hull edge.
pub(crate) fn initial_guesses(p: &Poly, prec: u32) -> Vec<BigComplex> {
    let n = p.degree();
    let pts: Vec<(usize, f64)> = p
        .coeffs()
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .map(|(i, c)| (i, c.ln_abs()))
        .collect();

    let mut hull: Vec<(usize, f64)> = Vec::new();
    for &pt in &pts {
        while hull.len() >= 2 {
            let (i1, y1) = hull[hull.len() - 2];
            let (i2, y2) = hull[hull.len() - 1];
            let cross = (i2 as f64 - i1 as f64) * (pt.1 - y1) - (y2 - y1) * (pt.0 as f64 - i1 as f64);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(pt);
    }

    const SIGMA: f64 = 0.7;
    let mut out = Vec::with_capacity(n);
    for w in hull.windows(2) {
        let (i, yi) = w[0];
        let (j, yj) = w[1];
        let count = j - i;
        let log_radius = (yi - yj) / count as f64;
        let radius = Float::with_val(prec, log_radius).exp();
        for k in 0..count {
            let turns = k as f64 / count as f64 + i as f64 / n as f64 + SIGMA / TAU;
            out.push(BigComplex::unit(turns, prec).scale(&radius));
        }
    }
    out
}

/// Gauss–Seidel Aberth–Ehrlich sweeps. Returns whether every root froze.
fn aberth(p: &Poly, z: &mut [BigComplex], prec: u32, sweeps: usize) -> (bool, usize) {
    let n = z.len();
    if n == 0 {
        return (true, 0);
    }
    let mut frozen = vec![false; n];
    let step_floor = Float::with_val(64, Float::i_exp(1, -(prec as i32 - 4)));
    let gamma = Float::with_val(64, Float::i_exp((4 * p.coeffs().len() + 2) as i32, -(prec as i32)));
    let one = BigComplex::one(prec);

    for sweep in 1..=sweeps {
        let mut moving = 0;
        for i in 0..n {
            if frozen[i] {
                continue;
            }
            let (value, deriv) = p.eval_with_derivative(&z[i]);
            let abs_z = z[i].abs();
            let rounding = Float::with_val(64, p.magnitude_at(&abs_z) * &gamma);
            if value.abs() <= rounding {
                frozen[i] = true;
                continue;
            }
            if deriv.is_zero() {
                // Nudge off a critical point of p.
                let kick = BigComplex::from_f64(1e-3, 7e-4, prec);
                z[i] = &z[i] + &(&kick * &(&one + &z[i]));
                moving += 1;
                continue;
            }
            let w = &value / &deriv;
            let mut s = BigComplex::zero(prec);
            for j in 0..n {
                if j != i {
                    let diff = &z[i] - &z[j];
                    if !diff.is_zero() {
                        s += &diff.recip();
                    }
                }
            }
            let denom = &one - &(&w * &s);
            let step = if denom.is_zero() { w } else { &w / &denom };
            let step_abs = step.abs();
            z[i] -= &step;
            let reference = if abs_z > 1 { abs_z } else { Float::with_val(64, 1) };
            if step_abs <= Float::with_val(64, &reference * &step_floor) {
                frozen[i] = true;
            } else {
                moving += 1;
            }
        }
        if moving == 0 {
            return (true, sweep);
        }
    }
    (false, sweeps)
}

fn find_clusters(roots: &[BigComplex], prec: u32) -> Vec<Vec<usize>> {
    let n = roots.len();
    let radius = cluster_radius(prec);
    let approx: Vec<_> = roots.iter().map(BigComplex::to_c64).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let scale = approx[i].norm().max(1.0);
            if (approx[i] - approx[j]).norm() > 1e-6 * scale {
                continue;
            }
            let dist = (&roots[i] - &roots[j]).abs();
            let big = roots[i].abs();
            let limit = if big > 1 {
                Float::with_val(64, &radius * &big)
            } else {
                radius.clone()
            };
            if dist <= limit {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[b] = a;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().filter(|g| g.len() > 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_c64(set: &RootSet) -> Vec<(f64, f64)> {
        let mut v: Vec<_> = set.roots.iter().map(|r| (r.to_c64().re, r.to_c64().im)).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn quadratic_with_unit_roots() {
        let set = poly_roots(&Poly::from_real(&[-1.0, 0.0, 1.0], 128)).unwrap();
        let r = sorted_c64(&set);
        assert!((r[0].0 + 1.0).abs() < 1e-30 && r[0].1.abs() < 1e-30);
        assert!((r[1].0 - 1.0).abs() < 1e-30 && r[1].1.abs() < 1e-30);
        assert!(set.residuals.iter().all(|&x| x < 1e-35));
        assert!(set.clusters.is_empty());
    }

    #[test]
    fn golden_ratio_matches_quadratic_formula() {
        let set = poly_roots(&Poly::from_real(&[-1.0, -1.0, 1.0], 128)).unwrap();
        let five = Float::with_val(256, 5).sqrt();
        let phi = Float::with_val(256, 1 + &five) / 2;
        let psi = Float::with_val(256, 1 - &five) / 2;
        for target in [phi, psi] {
            let best = set
                .roots
                .iter()
                .map(|r| (r - &BigComplex::from_real(&target, 256)).abs_f64())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-35, "{best:e}");
        }
    }

    #[test]
    fn cube_roots_of_unity() {
        let set = poly_roots(&Poly::from_real(&[-1.0, 0.0, 0.0, 1.0], 128)).unwrap();
        assert_eq!(set.len(), 3);
        for k in 0..3 {
            let w = BigComplex::root_of_unity(k, 3, 128);
            let best = set
                .roots
                .iter()
                .map(|r| (r - &w).abs_f64())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-30);
        }
    }

    #[test]
    fn zero_polynomial_has_its_own_error() {
        assert!(matches!(poly_roots(&Poly::zero()), Err(Error::ZeroPolynomial)));
        assert!(matches!(
            poly_roots(&Poly::from_real(&[3.0], 128)),
            Err(Error::ConstantPolynomial)
        ));
    }

    #[test]
    fn exact_zero_roots_are_deflated_and_clustered() {
        // z^3 (z - 2)
        let set = poly_roots(&Poly::from_real(&[0.0, 0.0, 0.0, -2.0, 1.0], 128)).unwrap();
        assert_eq!(set.roots.iter().filter(|r| r.is_zero()).count(), 3);
        assert_eq!(set.clusters, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn double_root_is_reported_as_cluster() {
        // (z - 1)^2 (z + 3)
        let p = Poly::from_real(&[3.0, -5.0, 1.0, 1.0], 128);
        let set = poly_roots(&p).unwrap();
        assert_eq!(set.clusters.len(), 1);
        assert_eq!(set.clusters[0].len(), 2);
        for &i in &set.clusters[0] {
            assert!((&set.roots[i] - &BigComplex::one(128)).abs_f64() < 1e-15);
        }
    }

    #[test]
    fn wide_dynamic_range() {
        // (z - 1e-30)(z - 1)(z - 1e30)
        let a = Poly::from_real(&[-1e-30, 1.0], 256);
        let b = Poly::from_real(&[-1.0, 1.0], 256);
        let c = Poly::from_real(&[-1e30, 1.0], 256);
        let p = a.mul(&b).mul(&c);
        let set = poly_roots(&p).unwrap();
        let mut mags: Vec<f64> = set.roots.iter().map(|r| r.abs_f64()).collect();
        mags.sort_by(f64::total_cmp);
        assert!((mags[0] / 1e-30 - 1.0).abs() < 1e-12);
        assert!((mags[1] - 1.0).abs() < 1e-12);
        assert!((mags[2] / 1e30 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn initial_guesses_count_matches_degree() {
        let p = Poly::from_real(&[1.0, 0.0, 0.0, 1e-8, 0.0, 3.0, 1.0], 128);
        assert_eq!(initial_guesses(&p, 128).len(), 6);
    }
}
