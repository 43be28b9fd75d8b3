use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynsys::SpherePoint;

/// Kind of test function. Norms are with respect to the great-circle metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    /// Quadratic polynomials in the ambient coordinates of S² ⊂ R³.
    Smooth,
    /// `cos(k·(π/2)·⟨p, v⟩ + θ)`, analogues of low-order spherical harmonics.
    Trig,
    /// Compactly supported bumps around random centres.
    Bump,
    /// `(dist(p, c)/π)^α`.
    Holder(f64),
}

impl Family {
    pub fn tag(&self) -> String {
        match self {
            Family::Smooth => "smooth".into(),
            Family::Trig => "trig".into(),
            Family::Bump => "bump".into(),
            Family::Holder(a) => format!("holder-{a}"),
        }
    }

    pub fn parse(tag: &str) -> Option<Family> {
        match tag {
            "smooth" => Some(Family::Smooth),
            "trig" => Some(Family::Trig),
            "bump" => Some(Family::Bump),
            _ => tag
                .strip_prefix("holder-")
                .and_then(|a| a.parse().ok())
                .filter(|a: &f64| *a > 0.0 && *a <= 1.0)
                .map(Family::Holder),
        }
    }

    /// The Hölder exponent the norms refer to.
    pub fn alpha(&self) -> f64 {
        match self {
            Family::Holder(a) => *a,
            _ => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Shape {
    Constant(f64),
    Quadratic { a: [f64; 3], b: [[f64; 3]; 3] },
    Wave { axis: [f64; 3], k: f64, phase: f64 },
    Bump { center: [f64; 3], radius: f64 },
    Kernel { center: SpherePoint, alpha: f64 },
}

/// A test function on P¹ with certified upper bounds on its norms.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    pub id: String,
    pub family: Family,
    shape: Shape,
    /// Bound on `sup |φ|`.
    pub sup: f64,
    /// Bound on the Lipschitz constant, `∞` for Hölder kernels.
    pub lipschitz: f64,
    /// Bound on the `α`-Hölder constant.
    pub holder: f64,
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).sqrt();
    [s * phi.cos(), s * phi.sin(), z]
}

/// `exp(1 − 1/(1 − s²))` on `|s| < 1`, peak 1 at 0.
fn bump_profile(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

/// Maximal slope of [`bump_profile`], measured on a fine grid with a margin.
fn bump_slope() -> f64 {
    let k = 100_000;
    let mut worst: f64 = 0.0;
    for i in 1..k {
        let s = i as f64 / k as f64;
        let g = bump_profile(s);
        let slope = g * 2.0 * s / (1.0 - s * s).powi(2);
        worst = worst.max(slope);
    }
    worst * 1.001
}

impl TestFunction {
    pub fn constant(c: f64) -> Self {
        TestFunction {
            id: format!("const-{c}"),
            family: Family::Smooth,
            shape: Shape::Constant(c),
            sup: c.abs(),
            lipschitz: 0.0,
            holder: 0.0,
        }
    }

    /// `|z|²/(|z|² + |w|²) = (1 + X₃)/2`, the height of a point on S².
    pub fn height() -> Self {
        TestFunction {
            id: "height".into(),
            family: Family::Smooth,
            shape: Shape::Quadratic {
                a: [0.0, 0.0, 0.5],
                b: [[0.0; 3]; 3],
            },
            sup: 1.0,
            lipschitz: 0.5,
            holder: 0.5,
        }
        .with_offset(0.5)
    }

    fn with_offset(mut self, c: f64) -> Self {
        if let Shape::Quadratic { b, .. } = &mut self.shape {
            // On the sphere, c = c·|p|², which keeps the shape quadratic.
            for (i, row) in b.iter_mut().enumerate() {
                row[i] += c;
            }
        }
        self
    }

    pub fn eval(&self, x: &SpherePoint) -> f64 {
        match &self.shape {
            Shape::Constant(c) => *c,
            Shape::Quadratic { a, b } => {
                let p = x.to_xyz();
                let mut s = dot(a, &p);
                for i in 0..3 {
                    s += p[i] * dot(&b[i], &p);
                }
                s
            }
            Shape::Wave { axis, k, phase } => (k * FRAC_PI_2 * dot(axis, &x.to_xyz()) + phase).cos(),
            Shape::Bump { center, radius } => {
                let rho = dot(center, &x.to_xyz()).clamp(-1.0, 1.0).acos();
                bump_profile(rho / radius)
            }
            Shape::Kernel { center, alpha } => (center.distance(x) / PI).powf(*alpha),
        }
    }

    /// On products, the mean of the values on the two factors.
    pub fn eval_atom(&self, atom: &[SpherePoint]) -> f64 {
        atom.iter().map(|x| self.eval(x)).sum::<f64>() / atom.len() as f64
    }

    pub fn alpha(&self) -> f64 {
        self.family.alpha()
    }

    /// `‖φ‖_{C¹} = sup|φ| + Lip(φ)`.
    pub fn norm_c1(&self) -> f64 {
        self.sup + self.lipschitz
    }

    /// `‖φ‖_{C^α} = sup|φ| + [φ]_α`.
    pub fn norm_calpha(&self) -> f64 {
        self.sup + self.holder
    }

    /// Samples `sup |φ|` and the worst `|φ(x) − φ(y)|/dist(x, y)^α` over
    /// `pairs` random pairs, half of them at distance below `10⁻²`.
    pub fn sampled_norms(&self, pairs: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha = self.alpha();
        let mut sup: f64 = 0.0;
        let mut ratio: f64 = 0.0;
        for i in 0..pairs {
            let x = SpherePoint::from_xyz(random_unit(&mut rng));
            let y = if i % 2 == 0 {
                SpherePoint::from_xyz(random_unit(&mut rng))
            } else {
                let p = x.to_xyz();
                let q = random_unit(&mut rng);
                let h: f64 = rng.gen_range(1e-6..1e-2);
                SpherePoint::from_xyz([p[0] + h * q[0], p[1] + h * q[1], p[2] + h * q[2]])
            };
            let (fx, fy) = (self.eval(&x), self.eval(&y));
            sup = sup.max(fx.abs()).max(fy.abs());
            let d = x.distance(&y);
            if d > 0.0 {
                ratio = ratio.max((fx - fy).abs() / d.powf(alpha));
            }
        }
        (sup, ratio)
    }
}

/// A reproducible family of `count` test functions.
pub fn make_test_family(kind: Family, count: usize, rng_seed: u64) -> Vec<TestFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let slope = if kind == Family::Bump { bump_slope() } else { 0.0 };
    (0..count)
        .map(|i| {
            let id = format!("{}-{i}", kind.tag());
            match kind {
                Family::Smooth => {
                    let a: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.5f64..0.5));
                    let mut b = [[0.0f64; 3]; 3];
                    for row in &mut b {
                        for v in row.iter_mut() {
                            *v = rng.gen_range(-0.5..0.5);
                        }
                    }
                    let l1 = a.iter().map(|v| v.abs()).sum::<f64>() + b.iter().flatten().map(|v| v.abs()).sum::<f64>();
                    // ∇φ = a + (B + Bᵀ)p on the unit ball.
                    let sym_f: f64 = (0..3)
                        .flat_map(|i| (0..3).map(move |j| (i, j)))
                        .map(|(i, j)| (b[i][j] + b[j][i]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    let lip = dot(&a, &a).sqrt() + sym_f;
                    TestFunction {
                        id,
                        family: kind,
                        shape: Shape::Quadratic { a, b },
                        sup: l1,
                        lipschitz: lip,
                        holder: lip,
                    }
                }
                Family::Trig => {
                    let k = (1 + i % 3) as f64;
                    let lip = k * FRAC_PI_2;
                    TestFunction {
                        id,
                        family: kind,
                        shape: Shape::Wave {
                            axis: random_unit(&mut rng),
                            k,
                            phase: rng.gen_range(0.0..std::f64::consts::TAU),
                        },
                        sup: 1.0,
                        lipschitz: lip,
                        holder: lip,
                    }
                }
                Family::Bump => {
                    let radius = rng.gen_range(0.3..1.0);
                    let lip = slope / radius;
                    TestFunction {
                        id,
                        family: kind,
                        shape: Shape::Bump {
                            center: random_unit(&mut rng),
                            radius,
                        },
                        sup: 1.0,
                        lipschitz: lip,
                        holder: lip,
                    }
                }
                Family::Holder(alpha) => TestFunction {
                    id,
                    family: kind,
                    shape: Shape::Kernel {
                        center: SpherePoint::from_xyz(random_unit(&mut rng)),
                        alpha,
                    },
                    sup: 1.0,
                    lipschitz: f64::INFINITY,
                    // |ρx^α − ρy^α| ≤ |ρx − ρy|^α ≤ dist^α.
                    holder: PI.powf(-alpha),
                },
            }
        })
        .collect()
}
