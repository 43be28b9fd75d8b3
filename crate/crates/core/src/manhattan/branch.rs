use std::collections::VecDeque;

use num_complex::Complex64;

use crate::dynsys::{cluster_points, PostcriticalSet, ProjectivePoint, RationalMap, DEDUP_TOLERANCE};
use crate::error::{Error, Result};
use crate::greenmeas::{preimage_tree, JuliaClass, DEFAULT_ATOM_CAP};
use crate::mpnum::BigComplex;
use crate::par;
use crate::percyc::{Classification, PeriodicPoint};

use super::atlas::{max_norm, Atlas};
use super::street::Cell;

#[derive(Clone, Debug)]
pub struct BranchOptions {
    pub precision: u32,
    /// Grid points per side (odd, so the cell center is a node).
    pub grid: usize,
    /// Largest spherical `dist(f^m(g(y)), y)` accepted on the grid.
    pub identity_tolerance: f64,
    /// Edge bisections allowed before a continuation is declared failed.
    pub max_refine: u32,
    /// Shrink of the PC-free ball: the cell must sit in `ϑ₀·B`.
    pub theta0: f64,
}

impl Default for BranchOptions {
    fn default() -> Self {
        BranchOptions {
            precision: 128,
            grid: 9,
            identity_tolerance: 1e-20,
            max_refine: 10,
            theta0: 0.5,
        }
    }
}

/// An inverse branch `g` of `f^m` over a cell, sampled on a grid.
#[derive(Clone, Debug)]
pub struct InverseBranch {
    pub order: usize,
    pub cell: Cell,
    /// `g(center)`.
    pub center_image: ProjectivePoint,
    /// `g` at the grid nodes, row-major, `grid × grid`.
    pub images: Vec<ProjectivePoint>,
    pub grid: usize,
    /// Max pairwise spherical distance of the image grid.
    pub diameter: f64,
    pub max_residual: f64,
    /// Edges that needed bisection.
    pub refinements: usize,
    pub valid: bool,
}

impl InverseBranch {
    /// Chart coordinates (in the cell's chart) of the image grid.
    pub fn image_coords(&self, atlas: &Atlas) -> Vec<Option<Complex64>> {
        let c = &atlas.charts[self.cell.chart];
        self.images.iter().map(|p| c.to_chart(&p.to_sphere())).collect()
    }

    /// Whether the whole image grid lies in `shrink`.
    pub fn image_inside(&self, atlas: &Atlas, shrink: &Cell) -> bool {
        self.image_coords(atlas)
            .iter()
            .all(|u| u.is_some_and(|u| shrink.contains(u)))
    }
}

/// Grid node `(i, l)` of a cell in chart coordinates.
fn node(cell: &Cell, grid: usize, i: usize, l: usize) -> Complex64 {
    let s = |k: usize| -1.0 + 2.0 * k as f64 / (grid - 1) as f64;
    cell.center() + cell.half_side() * Complex64::new(s(i), s(l))
}

/// Newton on `f^m(x) = y` from `x0`, switching charts to keep `|t| ≤ 1`.
/// Returns the solution, the length of the first Newton step and the
/// distance covered by all later steps.
pub(crate) fn solve_target(
    map: &RationalMap,
    x0: &ProjectivePoint,
    y: &ProjectivePoint,
    m: usize,
    prec: u32,
) -> Option<(ProjectivePoint, f64, f64)> {
    let (a, b) = y.with_prec(prec).homogeneous();
    let start = x0.with_prec(prec);
    let mut chart = start.chart();
    let mut t = start.coord().clone();
    let tiny = 2f64.powi(8 - prec as i32);
    let mut first: Option<ProjectivePoint> = None;
    let mut done = false;
    for _ in 0..60 {
        let jet = map.jet(chart, &t, m);
        let h = &(&jet.z * &b) - &(&jet.w * &a);
        if h.is_zero() {
            done = true;
            break;
        }
        let dh = &(&jet.dz * &b) - &(&jet.dw * &a);
        if dh.is_zero() {
            return None;
        }
        let step = &h / &dh;
        let size = step.abs_f64();
        if !size.is_finite() {
            return None;
        }
        t -= &step;
        if t.abs_f64() > 1.0 {
            t = t.recip();
            chart = chart.other();
        }
        if first.is_none() {
            first = Some(ProjectivePoint::in_chart(chart, t.clone()));
        }
        if size <= tiny * t.abs_f64().max(1.0) {
            done = true;
            break;
        }
    }
    let x = ProjectivePoint::in_chart(chart, t);
    if !done && map.iterate(&x, m).distance(y) > 1e-30 {
        return None;
    }
    let first = first.unwrap_or_else(|| x.clone());
    Some((x.clone(), start.distance(&first), first.distance(&x)))
}

/// Continues `g` from `(y0, x0)` to target `y1` in chart coordinates,
/// bisecting whenever the later Newton correction exceeds half the first step.
#[allow(clippy::too_many_arguments)]
fn continue_edge(
    map: &RationalMap,
    atlas: &Atlas,
    cell: &Cell,
    m: usize,
    from: (Complex64, &ProjectivePoint),
    to: Complex64,
    opts: &BranchOptions,
    depth: u32,
    refinements: &mut usize,
) -> Option<ProjectivePoint> {
    let chart = &atlas.charts[cell.chart];
    let target = chart.from_chart_big(&BigComplex::from_c64(to, opts.precision));
    if let Some((x, first, later)) = solve_target(map, from.1, &target, m, opts.precision) {
        if later <= 0.5 * first || first < 1e-25 {
            return Some(x);
        }
    }
    if depth >= opts.max_refine {
        return None;
    }
    *refinements += 1;
    let mid = (from.0 + to) / 2.0;
    let xm = continue_edge(map, atlas, cell, m, from, mid, opts, depth + 1, refinements)?;
    continue_edge(map, atlas, cell, m, (mid, &xm), to, opts, depth + 1, refinements)
}

/// Traces the branch through `start = g(center)` over the cell grid by
/// breadth-first continuation from the center node.
pub(crate) fn trace_from(
    map: &RationalMap,
    atlas: &Atlas,
    cell: &Cell,
    m: usize,
    start: &ProjectivePoint,
    opts: &BranchOptions,
) -> InverseBranch {
    let g = opts.grid;
    let mid = g / 2;
    let chart = &atlas.charts[cell.chart];
    let mut images: Vec<Option<ProjectivePoint>> = vec![None; g * g];
    images[mid * g + mid] = Some(start.with_prec(opts.precision));
    let mut queue = VecDeque::from([(mid, mid)]);
    let mut refinements = 0;
    let mut ok = true;
    while let Some((i, l)) = queue.pop_front() {
        let here = images[i * g + l].clone().expect("queued nodes are solved");
        let u = node(cell, g, i, l);
        let nbrs = [(i.wrapping_sub(1), l), (i + 1, l), (i, l.wrapping_sub(1)), (i, l + 1)];
        for (a, b) in nbrs {
            if a >= g || b >= g || images[a * g + b].is_some() {
                continue;
            }
            match continue_edge(
                map,
                atlas,
                cell,
                m,
                (u, &here),
                node(cell, g, a, b),
                opts,
                0,
                &mut refinements,
            ) {
                Some(x) => {
                    images[a * g + b] = Some(x);
                    queue.push_back((a, b));
                }
                None => ok = false,
            }
        }
        if !ok {
            break;
        }
    }
    let images: Vec<ProjectivePoint> = if ok {
        images.into_iter().map(|x| x.expect("every node reached")).collect()
    } else {
        images.into_iter().flatten().collect()
    };
    let mut max_residual: f64 = 0.0;
    if ok {
        for i in 0..g {
            for l in 0..g {
                let y = chart.from_chart_big(&BigComplex::from_c64(node(cell, g, i, l), opts.precision));
                max_residual = max_residual.max(map.iterate(&images[i * g + l], m).distance(&y));
            }
        }
    }
    let sph: Vec<_> = images.iter().map(ProjectivePoint::to_sphere).collect();
    let mut diameter: f64 = 0.0;
    for (k, a) in sph.iter().enumerate() {
        for b in &sph[k + 1..] {
            diameter = diameter.max(a.distance(b));
        }
    }
    InverseBranch {
        order: m,
        cell: cell.clone(),
        center_image: start.with_prec(opts.precision),
        valid: ok && max_residual <= opts.identity_tolerance,
        images,
        grid: g,
        diameter,
        max_residual,
        refinements,
    }
}

/// Preimages of the cell center under `f^m`, polished at working precision,
/// with the number of seeds that failed or polished onto another preimage.
pub(crate) fn center_preimages(
    map: &RationalMap,
    atlas: &Atlas,
    cell: &Cell,
    m: usize,
    opts: &BranchOptions,
) -> Result<(Vec<ProjectivePoint>, usize)> {
    let chart = &atlas.charts[cell.chart];
    let y = chart.from_chart_big(&BigComplex::from_c64(cell.center(), opts.precision));
    let fast = map.to_f64();
    let tree = preimage_tree(&fast, &y.to_sphere(), m, DEFAULT_ATOM_CAP)?;
    let seeds: Vec<ProjectivePoint> = tree.points.iter().map(|p| p.to_projective(opts.precision)).collect();
    let polished: Vec<Option<ProjectivePoint>> = par::map(&seeds, |s| {
        solve_target(map, s, &y, m, opts.precision).map(|(x, _, _)| x)
    });
    let got: Vec<ProjectivePoint> = polished.into_iter().flatten().collect();
    let groups = cluster_points(&got, 1e-15);
    let reps: Vec<ProjectivePoint> = groups.iter().map(|g| got[g[0]].clone()).collect();
    let lost = seeds.len() - reps.len();
    Ok((reps, lost))
}

/// All inverse branches of `f^m` over `cell` reachable from the preimages of
/// its center. The ball `B` of radius `√2·r/ϑ₀` around the center (so that
/// `ϑ₀·B` contains the cell) must avoid `pc_ell`.
pub fn trace_branches(
    map: &RationalMap,
    atlas: &Atlas,
    cell: &Cell,
    m: usize,
    pc_ell: &PostcriticalSet,
    opts: &BranchOptions,
) -> Result<Vec<InverseBranch>> {
    if opts.grid < 3 || opts.grid % 2 == 0 {
        return Err(Error::param("grid", "must be odd and at least 3"));
    }
    check_clear(atlas, cell, pc_ell, opts)?;
    let (starts, _) = center_preimages(map, atlas, cell, m, opts)?;
    let mut branches: Vec<InverseBranch> = par::map(&starts, |s| trace_from(map, atlas, cell, m, s, opts));
    mark_overlaps(&mut branches);
    Ok(branches)
}

/// Rejects cells whose ball `B` of radius `√2·r/ϑ₀` meets the postcritical set.
pub(crate) fn check_clear(atlas: &Atlas, cell: &Cell, pc: &PostcriticalSet, opts: &BranchOptions) -> Result<()> {
    let chart = &atlas.charts[cell.chart];
    let radius = std::f64::consts::SQRT_2 * cell.half_side() / opts.theta0;
    for p in pc.sphere_points() {
        if chart.to_chart(&p).is_some_and(|u| (u - cell.center()).norm() <= radius) {
            return Err(Error::Precondition(format!(
                "cell around {} meets the postcritical tube",
                cell.center()
            )));
        }
    }
    Ok(())
}

/// Distinct branches over one cell have disjoint images; any two whose grids
/// share a node are both invalid.
fn mark_overlaps(branches: &mut [InverseBranch]) {
    let nodes: Vec<ProjectivePoint> = branches.iter().map(|b| b.center_image.clone()).collect();
    for g in cluster_points(&nodes, DEDUP_TOLERANCE) {
        if g.len() > 1 {
            for i in g {
                branches[i].valid = false;
            }
        }
    }
}

/// Iterates a self-map of a chart region to its attracting fixed point.
/// Returns the fixed point and the number of iterations; fails if an iterate
/// leaves `inside` or the sequence does not settle within `tol`.
pub fn contract_map<G, I>(g: G, start: BigComplex, inside: I, tol: f64) -> Result<(BigComplex, usize)>
where
    G: Fn(&BigComplex) -> Option<BigComplex>,
    I: Fn(&BigComplex) -> bool,
{
    let mut x = start;
    for it in 1..=500 {
        let y = g(&x).ok_or_else(|| Error::Continuation("branch evaluation failed during contraction".into()))?;
        if !inside(&y) {
            return Err(Error::Continuation(format!("iterate {it} left the cell")));
        }
        let step = (&y - &x).abs_f64();
        x = y;
        if step <= tol {
            return Ok((x, it));
        }
    }
    Err(Error::Continuation("contraction did not settle".into()))
}

/// The unique fixed point of an inverse branch mapping its cell into the
/// `(1−r)`-shrink: a repelling periodic point of period `branch.order`.
pub fn contract_branch(
    map: &RationalMap,
    atlas: &Atlas,
    branch: &InverseBranch,
    opts: &BranchOptions,
) -> Result<PeriodicPoint> {
    let cell = &branch.cell;
    if !branch.valid {
        return Err(Error::Precondition("branch is not valid".into()));
    }
    let shrink = cell.shrink(1);
    if !branch.image_inside(atlas, &shrink) {
        return Err(Error::Precondition(
            "branch image is not inside the (1−r)-shrink".into(),
        ));
    }
    let coords: Vec<Complex64> = branch.image_coords(atlas).into_iter().flatten().collect();
    let chart_diam = coords
        .iter()
        .flat_map(|a| coords.iter().map(move |b| max_norm(a - b)))
        .fold(0.0, f64::max);
    if chart_diam >= 2.0 * cell.half_side() {
        return Err(Error::Precondition("branch image is wider than the cell".into()));
    }
    let chart = &atlas.charts[cell.chart];
    let prec = opts.precision;
    let g = branch.grid;
    // g(y): Newton from the image of the nearest grid node.
    let eval = |u: &BigComplex| -> Option<BigComplex> {
        let uc = u.to_c64();
        let s = (uc - cell.center()) / cell.half_side();
        let idx = |v: f64| (((v + 1.0) / 2.0 * (g - 1) as f64).round().clamp(0.0, (g - 1) as f64)) as usize;
        let seed = &branch.images[idx(s.re) * g + idx(s.im)];
        let y = chart.from_chart_big(u);
        let (x, _, _) = solve_target(map, seed, &y, branch.order, prec)?;
        chart.to_chart_big(&x)
    };
    let start = BigComplex::from_c64(cell.center(), prec);
    let (fixed, _) = contract_map(eval, start, |u| shrink.contains(u.to_c64()), 1e-25)?;
    let a = chart.from_chart_big(&fixed);
    let n = branch.order;
    let modulus = map.multiplier_at(&a, n).map_or(0.0, |l| l.abs_f64());
    let class = Classification::from_modulus(modulus);
    if class != Classification::Repelling {
        return Err(Error::Continuation(format!(
            "fixed point has multiplier modulus {modulus}"
        )));
    }
    let residual = map.iterate(&a, n).distance(&a);
    let mut minimal = n;
    let mut y = a.clone();
    for p in 1..n {
        y = map.apply(&y);
        if n % p == 0 && y.distance(&a) <= 1e-18 {
            minimal = p;
            break;
        }
    }
    Ok(PeriodicPoint {
        location: vec![a],
        period: n,
        minimal_period: minimal,
        multiplier_modulus: vec![modulus],
        classification: class,
        in_small_julia: JuliaClass::BoundaryBand,
        residual,
        multiplicity: 1,
    })
}
