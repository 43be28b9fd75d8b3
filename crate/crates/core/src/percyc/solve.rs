//! The two periodic-point solvers and their shared Newton machinery.

use num_complex::Complex64;

use crate::dynsys::{
    cluster_points, cluster_sphere_points, Chart, MapF64, ProjectivePoint, RationalMap, SpherePoint, DEDUP_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::greenmeas::{default_seed, preimage_tree, sample_backward_chains, DEFAULT_ATOM_CAP};
use crate::mpnum::{poly_roots_adaptive, BigComplex, Poly, RootOptions, MAX_PRECISION};
use crate::par;

use super::PeriodicOptions;

/// A distinct solution of `f^n(x) = x` with its multiplicity.
#[derive(Clone, Debug)]
pub(crate) struct RawPoint {
    pub point: ProjectivePoint,
    pub multiplicity: usize,
}

/// `|λ − 1|` below which a fixed point of `f^n` may be multiple.
const NEAR_PARABOLIC: f64 = 1e-4;

/// Homogeneous coefficients of `F^n` in the finite chart: `(P_n, Q_n)` with
/// `f^n(z) = P_n(z)/Q_n(z)`, both of formal degree `d^n`.
pub fn iterate_polys(map: &RationalMap, n: usize, prec: u32) -> (Poly, Poly) {
    let d = map.degree();
    let p = map.p().with_prec(prec);
    let q = map.q().with_prec(prec);
    let mut pn = Poly::identity(prec);
    let mut qn = Poly::constant(BigComplex::one(prec));
    for _ in 0..n {
        // Powers P_k^i and Q_k^i for i = 0..=d.
        let mut pp = vec![Poly::constant(BigComplex::one(prec))];
        let mut qp = vec![Poly::constant(BigComplex::one(prec))];
        for i in 1..=d {
            pp.push(pp[i - 1].mul(&pn));
            qp.push(qp[i - 1].mul(&qn));
        }
        let mut np = Poly::zero();
        let mut nq = Poly::zero();
        for i in 0..=d {
            let mono = pp[i].mul(&qp[d - i]);
            let (a, b) = (p.coeff(i), q.coeff(i));
            if !a.is_zero() {
                np = np.add(&mono.scale(&a));
            }
            if !b.is_zero() {
                nq = nq.add(&mono.scale(&b));
            }
        }
        pn = np;
        qn = nq;
    }
    (pn, qn)
}

/// Expansion backend: roots of `P_n(z) − z·Q_n(z)` (degree at most
/// `d^n + 1`, the deficit sitting at ∞), each polished by composition-free
/// Newton. Root clusters are reported once with their size as multiplicity.
///
/// Expanded iterates are badly conditioned, so a backward-stable root can sit
/// far from the true one. Whenever a polished root fails the residual check
/// or two roots polish to the same point, the coefficients are rebuilt at
/// twice the precision.
pub(crate) fn solve_expand(map: &RationalMap, n: usize, opts: &PeriodicOptions) -> Result<Vec<RawPoint>> {
    let expected = expected_count(map.degree(), n)?;
    if expected > opts.composition_cap {
        return Err(Error::BackendCapacity(format!(
            "expansion needs degree {expected}, cap is {}",
            opts.composition_cap
        )));
    }
    let build = |prec: u32| -> Result<Poly> {
        let (pn, qn) = iterate_polys(map, n, prec);
        Ok(pn.sub(&qn.shift(1)))
    };
    let work = map.with_prec(opts.precision)?;
    let mut prec = opts.precision;
    loop {
        match expand_at(&work, n, opts, prec, expected, &build)? {
            Some(out) => return Ok(out),
            None if prec < MAX_PRECISION => {
                log::debug!("expansion at {prec} bits left unpolishable roots; retrying");
                prec = (2 * prec).min(MAX_PRECISION);
            }
            None => return Err(Error::PrecisionExhausted { max_precision: prec }),
        }
    }
}

fn expand_at(
    work: &RationalMap,
    n: usize,
    opts: &PeriodicOptions,
    prec: u32,
    expected: usize,
    build: &dyn Fn(u32) -> Result<Poly>,
) -> Result<Option<Vec<RawPoint>>> {
    let h = build(prec)?;
    let finite = if h.is_zero() { 0 } else { h.degree() };
    let mut out = Vec::new();
    if finite > 0 {
        let roots = poly_roots_adaptive(build, &RootOptions::at_precision(prec))?;
        let mut clustered = vec![false; roots.len()];
        for group in &roots.clusters {
            let mut sum = BigComplex::zero(opts.precision);
            for &i in group {
                clustered[i] = true;
                sum += &roots.roots[i].with_prec(opts.precision);
            }
            let mean = sum.scale_f64(1.0 / group.len() as f64);
            out.push(RawPoint {
                point: ProjectivePoint::finite(mean),
                multiplicity: group.len(),
            });
        }
        let singles: Vec<ProjectivePoint> = (0..roots.len())
            .filter(|&i| !clustered[i])
            .map(|i| ProjectivePoint::finite(roots.roots[i].with_prec(opts.precision)))
            .collect();
        let polished = par::map(&singles, |x| newton(work, x, n, opts, &[]).map(|(p, _)| p));
        let mut simple = Vec::with_capacity(polished.len());
        for p in polished {
            match p {
                Some(p) if residual(work, &p, n) <= opts.certification => simple.push(p),
                _ => return Ok(None),
            }
        }
        if cluster_points(&simple, DEDUP_TOLERANCE).len() < simple.len() {
            return Ok(None);
        }
        out.extend(simple.into_iter().map(|point| RawPoint { point, multiplicity: 1 }));
    }
    if finite < expected {
        out.push(RawPoint {
            point: ProjectivePoint::infinity(opts.precision),
            multiplicity: expected - finite,
        });
    }
    Ok(Some(out))
}

pub(crate) fn expected_count(d: usize, n: usize) -> Result<usize> {
    (d as u128)
        .checked_pow(n as u32)
        .and_then(|x| usize::try_from(x + 1).ok())
        .ok_or_else(|| Error::BackendCapacity(format!("d^n + 1 overflows for d = {d}, n = {n}")))
}

/// Newton iteration for `f^n(x) = x` in the chart of `x`, switching charts
/// when the coordinate leaves the unit disk. `deflate` lists known solutions
/// (with multiplicity) that the iteration is pushed away from. Returns the
/// converged point and the number of steps.
pub(crate) fn newton(
    map: &RationalMap,
    x: &ProjectivePoint,
    n: usize,
    opts: &PeriodicOptions,
    deflate: &[(ProjectivePoint, usize)],
) -> Option<(ProjectivePoint, usize)> {
    let prec = opts.precision;
    let mut chart = x.chart();
    let mut t = x.coord().with_prec(prec);
    let tiny = 2f64.powi(-(prec as i32) + 8);
    let mut last_step = f64::INFINITY;
    let mut mult = 1.0;
    let mut slow = 0;
    // Multiple roots stall near 2^(-prec/m); the smallest step seen is kept
    // and the caller's residual check decides.
    let mut best: Option<(f64, Chart, BigComplex)> = None;
    for it in 0..opts.newton_max_iter {
        let jet = map.jet(chart, &t, n);
        let (h, dh) = jet.fixed_point_residual();
        if h.is_zero() {
            return Some((ProjectivePoint::in_chart(chart, t), it));
        }
        let step = if deflate.is_empty() {
            if dh.is_zero() {
                return None;
            }
            &h / &dh
        } else {
            let mut logd = &dh / &h;
            for (r, m) in deflate {
                if let Some(rc) = r.coord_in(chart) {
                    let diff = &t - &rc;
                    if diff.is_zero() {
                        return None;
                    }
                    logd -= &diff.recip().scale_f64(*m as f64);
                }
            }
            if logd.is_zero() {
                return None;
            }
            logd.recip()
        };
        let size = step.abs_f64();
        if !size.is_finite() {
            return None;
        }
        // Linear convergence signals a multiple root; estimate its order.
        if deflate.is_empty() && size < last_step && size > 0.3 * last_step && size < 1e-3 {
            slow += 1;
            if slow >= 3 {
                let ratio = size / last_step;
                mult = (1.0 / (1.0 - ratio)).round().max(1.0);
            }
        } else {
            slow = 0;
        }
        last_step = size;
        t -= &step.scale_f64(mult);
        if t.abs_f64() > 1.0 {
            t = t.recip();
            chart = chart.other();
        }
        if size <= tiny * t.abs_f64().max(1.0) {
            let p = ProjectivePoint::in_chart(chart, t);
            return Some((p, it + 1));
        }
        if best.as_ref().map_or(true, |b| size < b.0) {
            best = Some((size, chart, t.clone()));
        }
    }
    best.filter(|b| b.0 < 1e-12)
        .map(|(_, c, t)| (ProjectivePoint::in_chart(c, t), opts.newton_max_iter))
}

/// Spherical distance between `f^n(x)` and `x` at working precision.
pub(crate) fn residual(map: &RationalMap, x: &ProjectivePoint, n: usize) -> f64 {
    map.iterate(x, n).distance(x)
}

/// Order of `x` as a zero of the fixed-point residual of `f^n`, from the
/// winding number of the residual around a circle of radius `rho`.
pub(crate) fn winding_multiplicity(map: &RationalMap, x: &ProjectivePoint, n: usize, rho: f64) -> usize {
    const K: usize = 64;
    let chart = x.chart();
    let prec = x.prec();
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for k in 0..=K {
        let off = BigComplex::from_c64(
            Complex64::from_polar(rho, std::f64::consts::TAU * k as f64 / K as f64),
            prec,
        );
        let t = x.coord() + &off;
        let (h, _) = map.jet(chart, &t, n).fixed_point_residual();
        let arg = h.im().to_f64().atan2(h.re().to_f64());
        if let Some(p) = prev {
            let mut d = arg - p;
            while d > std::f64::consts::PI {
                d -= std::f64::consts::TAU;
            }
            while d < -std::f64::consts::PI {
                d += std::f64::consts::TAU;
            }
            total += d;
        }
        prev = Some(arg);
    }
    (total / std::f64::consts::TAU).round().max(1.0) as usize
}

/// Seed cloud: a depth-`n` preimage tree of a point on the Julia set, tails of
/// the critical orbits (which find attracting and parabolic cycles) and a
/// polar grid in both charts.
fn seeds(map: &RationalMap, fast: &MapF64, n: usize, round: usize, opts: &PeriodicOptions) -> Vec<SpherePoint> {
    let mut out = Vec::new();
    // Base point on J: the end of a long backward orbit.
    let base = sample_backward_chains(
        fast,
        &default_seed(fast),
        64 + 7 * round,
        1,
        opts.seed ^ round as u64,
        1,
    );
    let depth = n.min(opts.max_tree_depth(map.degree()));
    if let Some(a) = base.points.first() {
        if let Ok(tree) = preimage_tree(fast, a, depth, DEFAULT_ATOM_CAP) {
            out.extend(tree.points);
        }
    }
    if round == 0 {
        if let Ok(crit) = map.critical_points() {
            for c in crit {
                let mut x = c.to_sphere();
                for j in 0..(400 + n) {
                    if j < n + 1 || j >= 400 {
                        out.push(x);
                    }
                    x = fast.apply(&x);
                }
            }
        }
    }
    let rings = 4 << round;
    let spokes = (16 << round).max(2 * (map.degree().pow(n.min(20) as u32) + 1) / rings);
    for chart in [Chart::Finite, Chart::Infinite] {
        for i in 0..rings {
            let r = (i as f64 + 0.5) / rings as f64;
            for k in 0..spokes {
                let ang = std::f64::consts::TAU * (k as f64 + 0.37 * i as f64) / spokes as f64;
                out.push(SpherePoint::in_chart(chart, Complex64::from_polar(r, ang)));
            }
        }
    }
    out
}

/// Double-precision Newton with optional deflation, used to funnel seeds
/// into basins before the multiprecision polish.
fn newton_f64(
    fast: &MapF64,
    x: &SpherePoint,
    n: usize,
    max_iter: usize,
    deflate: &[SpherePoint],
) -> Option<SpherePoint> {
    let mut chart = x.chart;
    let mut t = x.coord;
    let mut last_step = f64::INFINITY;
    let mut mult = 1.0;
    let mut slow = 0;
    for _ in 0..max_iter {
        let (h, dh) = fast.fixed_point_residual(chart, t, n);
        if h.norm_sqr() == 0.0 {
            return Some(SpherePoint::in_chart(chart, t));
        }
        let mut logd = dh / h;
        for r in deflate {
            if let Some(rc) = r.coord_in(chart) {
                logd -= (t - rc).inv();
            }
        }
        let step = logd.inv();
        let size = step.norm();
        if !size.is_finite() {
            return None;
        }
        if deflate.is_empty() && size < last_step && size > 0.3 * last_step && size < 1e-3 {
            slow += 1;
            if slow >= 3 {
                mult = (1.0 / (1.0 - size / last_step)).round().max(1.0);
            }
        } else {
            slow = 0;
        }
        last_step = size;
        t -= step * mult;
        if t.norm_sqr() > 1.0 {
            t = t.inv();
            chart = chart.other();
        }
        if size <= 1e-13 {
            return Some(SpherePoint::in_chart(chart, t));
        }
    }
    (last_step < 1e-6).then(|| SpherePoint::in_chart(chart, t))
}

/// Newton-seeded backend with deduplication and a completeness check against
/// `d^n + 1`. Seeds are funnelled in double precision, deduplicated and then
/// polished at working precision. Later rounds use denser seeds and deflate
/// by the roots found so far.
pub(crate) fn solve_newton(map: &RationalMap, n: usize, opts: &PeriodicOptions) -> Result<Vec<RawPoint>> {
    let expected = expected_count(map.degree(), n)?;
    let work = map.with_prec(opts.precision)?;
    let fast = work.to_f64();
    let mut found: Vec<RawPoint> = Vec::new();
    for round in 0..opts.seed_rounds {
        let cloud = seeds(&work, &fast, n, round, opts);
        // Deflation cost grows with the number of known roots; keep it for
        // the sparse cases where plain reseeding stalls.
        let known: Vec<SpherePoint> = if round >= 2 && found.len() <= 512 {
            found
                .iter()
                .flat_map(|r| std::iter::repeat(r.point.to_sphere()).take(r.multiplicity))
                .collect()
        } else {
            Vec::new()
        };
        let coarse: Vec<SpherePoint> = par::map(&cloud, |s| newton_f64(&fast, s, n, 60, &known))
            .into_iter()
            .flatten()
            .collect();
        // Polish only basins not already represented in `found`.
        let mut pool: Vec<SpherePoint> = found.iter().map(|r| r.point.to_sphere()).collect();
        let nfound = pool.len();
        pool.extend(coarse);
        let reps: Vec<SpherePoint> = cluster_sphere_points(&pool, 1e-11)
            .into_iter()
            .filter(|g| g.iter().all(|&i| i >= nfound))
            .map(|g| pool[g[0]])
            .collect();
        let hits: Vec<Option<ProjectivePoint>> = par::map(&reps, |s| {
            let x = s.to_projective(opts.precision);
            newton(&work, &x, n, opts, &[]).map(|(p, _)| p)
        });
        let mut all: Vec<ProjectivePoint> = found.iter().map(|r| r.point.clone()).collect();
        all.extend(
            hits.into_iter()
                .flatten()
                .filter(|p| residual(&work, p, n) <= opts.certification),
        );
        all.extend(orbit_images(&work, n, opts, &all));
        found = consolidate(&work, n, all);
        let total: usize = found.iter().map(|r| r.multiplicity).sum();
        log::debug!(
            "newton round {round}: {} distinct, {total} of {expected} with multiplicity",
            found.len()
        );
        if total == expected {
            return Ok(found);
        }
        if total > expected {
            return Err(Error::Incomplete { found: total, expected });
        }
    }
    Err(Error::Incomplete {
        found: found.iter().map(|r| r.multiplicity).sum(),
        expected,
    })
}

/// Periodic points come in cycles: forward images of known solutions that
/// are not yet known themselves, polished at working precision. Repeats
/// until the set is closed under `f`.
fn orbit_images(
    map: &RationalMap,
    n: usize,
    opts: &PeriodicOptions,
    known: &[ProjectivePoint],
) -> Vec<ProjectivePoint> {
    let mut pool: Vec<SpherePoint> = known.iter().map(ProjectivePoint::to_sphere).collect();
    let mut frontier: Vec<ProjectivePoint> = known.to_vec();
    let mut added = Vec::new();
    for _ in 1..n {
        let images: Vec<ProjectivePoint> = par::map(&frontier, |x| map.apply(x));
        let nknown = pool.len();
        pool.extend(images.iter().map(ProjectivePoint::to_sphere));
        let fresh: Vec<ProjectivePoint> = cluster_sphere_points(&pool, 1e-9)
            .into_iter()
            .filter(|g| g.iter().all(|&i| i >= nknown))
            .map(|g| images[g[0] - nknown].clone())
            .collect();
        let polished: Vec<ProjectivePoint> = par::map(&fresh, |x| newton(map, x, n, opts, &[]).map(|(p, _)| p))
            .into_iter()
            .flatten()
            .filter(|p| residual(map, p, n) <= opts.certification)
            .collect();
        if polished.is_empty() {
            break;
        }
        pool.truncate(nknown);
        pool.extend(polished.iter().map(ProjectivePoint::to_sphere));
        added.extend(polished.iter().cloned());
        frontier = polished;
    }
    added
}

/// Merges duplicates and assigns multiplicities: points with a multiplier
/// away from one are simple; near-parabolic ones are merged on a coarser
/// scale and measured by winding number.
fn consolidate(map: &RationalMap, n: usize, points: Vec<ProjectivePoint>) -> Vec<RawPoint> {
    let groups = cluster_points(&points, DEDUP_TOLERANCE);
    let reps: Vec<ProjectivePoint> = groups.iter().map(|g| points[g[0]].clone()).collect();
    let near: Vec<bool> = par::map(&reps, |x| match map.multiplier_at(x, n) {
        Some(l) => (&l - &BigComplex::one(x.prec())).abs_f64() < NEAR_PARABOLIC,
        None => false,
    });
    let mut out: Vec<RawPoint> = Vec::new();
    let mut parabolic: Vec<ProjectivePoint> = Vec::new();
    for (x, is_near) in reps.into_iter().zip(near) {
        if is_near {
            parabolic.push(x);
        } else {
            out.push(RawPoint {
                point: x,
                multiplicity: 1,
            });
        }
    }
    if !parabolic.is_empty() {
        for g in cluster_points(&parabolic, 1e-8) {
            let x = parabolic[g[0]].clone();
            let nearest = out
                .iter()
                .map(|r| r.point.distance(&x))
                .chain(parabolic.iter().map(|p| p.distance(&x)).filter(|&d| d > 1e-8))
                .fold(1.0f64, f64::min);
            let rho = (0.25 * nearest).min(1e-5);
            let m = winding_multiplicity(map, &x, n, rho);
            out.push(RawPoint {
                point: x,
                multiplicity: m,
            });
        }
    }
    out
}

/// Smallest `p | n` with `f^p(x) = x` within `tol`.
pub(crate) fn minimal_period_by_orbit(map: &RationalMap, x: &ProjectivePoint, n: usize, tol: f64) -> usize {
    let mut y = x.clone();
    for p in 1..n {
        y = map.apply(&y);
        if n % p == 0 && y.distance(x) <= tol {
            return p;
        }
    }
    n
}

/// Largest spherical distance in a greedy matching of two multisets, or an
/// error naming the first point without a partner within `tol`.
pub(crate) fn match_multisets(
    a: &[(ProjectivePoint, usize)],
    b: &[(ProjectivePoint, usize)],
    tol: f64,
) -> std::result::Result<f64, String> {
    let expand = |s: &[(ProjectivePoint, usize)]| -> Vec<ProjectivePoint> {
        s.iter()
            .flat_map(|(p, m)| std::iter::repeat(p.clone()).take(*m))
            .collect()
    };
    let ea = expand(a);
    let eb = expand(b);
    if ea.len() != eb.len() {
        return Err(format!("sizes differ: {} vs {}", ea.len(), eb.len()));
    }
    let fb: Vec<SpherePoint> = eb.iter().map(ProjectivePoint::to_sphere).collect();
    let mut used = vec![false; eb.len()];
    let mut worst: f64 = 0.0;
    for p in &ea {
        let sp = p.to_sphere();
        let best = (0..eb.len())
            .filter(|&j| !used[j])
            .min_by(|&i, &j| sp.distance(&fb[i]).total_cmp(&sp.distance(&fb[j])));
        let Some(j) = best else {
            return Err("ran out of partners".into());
        };
        let d = p.distance(&eb[j]);
        if d > tol {
            return Err(format!("{p:?} has no partner within {tol:e} (nearest {d:e})"));
        }
        used[j] = true;
        worst = worst.max(d);
    }
    Ok(worst)
}
