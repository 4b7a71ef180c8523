//! Analytic closed surfaces with inside/outside classification, closest
//! point projection, outward normals and exact local feature size.
//!
//! The local feature size is the distance to the medial axis, which is known
//! in closed form for the three families:
//!
//! * sphere: the center;
//! * torus with `R ≥ 2r`: the core circle (inside) and the symmetry axis
//!   (outside), so lfs is the constant `r`;
//! * ellipsoid `a ≥ b ≥ c`: the filled planar ellipse `z = 0`,
//!   `x²/A² + y²/B² ≤ 1` with `A = (a²−c²)/a`, `B = (b²−c²)/b` (inside);
//!   the outer medial axis is empty because the body is convex.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Aabb, Tolerance, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurfaceError {
    #[error("invalid surface: {0}")]
    Invalid(String),
    #[error("cannot parse surface `{0}` (expected sphere:R, torus:R,r or ellipsoid:a,b,c)")]
    Parse(String),
    #[error("point {0} is on the medial axis; closest point is not unique")]
    AmbiguousProjection(Vec3),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SurfaceSpec {
    Sphere { radius: f64 },
    Torus { major: f64, minor: f64 },
    Ellipsoid { a: f64, b: f64, c: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Inside,
    On,
    Outside,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub position: Vec3,
    /// Outward unit normal.
    pub normal: Vec3,
    pub lfs: f64,
}

fn positive(name: &str, v: f64) -> Result<(), SurfaceError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SurfaceError::Invalid(format!("{name} must be positive, got {v}")))
    }
}

impl SurfaceSpec {
    pub fn sphere(radius: f64) -> Result<Self, SurfaceError> {
        positive("radius", radius)?;
        Ok(SurfaceSpec::Sphere { radius })
    }

    pub fn torus(major: f64, minor: f64) -> Result<Self, SurfaceError> {
        positive("major radius", major)?;
        positive("minor radius", minor)?;
        if major < 2.0 * minor {
            return Err(SurfaceError::Invalid(format!(
                "torus needs R >= 2r, got R={major}, r={minor}"
            )));
        }
        Ok(SurfaceSpec::Torus { major, minor })
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Result<Self, SurfaceError> {
        positive("a", a)?;
        positive("b", b)?;
        positive("c", c)?;
        if !(a >= b && b >= c) {
            return Err(SurfaceError::Invalid(format!(
                "ellipsoid semi-axes must satisfy a >= b >= c, got {a}, {b}, {c}"
            )));
        }
        Ok(SurfaceSpec::Ellipsoid { a, b, c })
    }

    /// Length scale used for tolerance bands.
    pub fn scale(&self) -> f64 {
        match *self {
            SurfaceSpec::Sphere { radius } => radius,
            SurfaceSpec::Torus { minor, .. } => minor,
            SurfaceSpec::Ellipsoid { c, .. } => c,
        }
    }

    /// Euler characteristic of the surface.
    pub fn euler_characteristic(&self) -> i64 {
        match self {
            SurfaceSpec::Torus { .. } => 0,
            _ => 2,
        }
    }

    pub fn bounding_box(&self) -> Aabb {
        let e = match *self {
            SurfaceSpec::Sphere { radius } => Vec3::splat(radius),
            SurfaceSpec::Torus { major, minor } => Vec3::new(major + minor, major + minor, minor),
            SurfaceSpec::Ellipsoid { a, b, c } => Vec3::new(a, b, c),
        };
        Aabb::new(-e, e)
    }

    pub fn volume(&self) -> f64 {
        match *self {
            SurfaceSpec::Sphere { radius } => 4.0 / 3.0 * PI * radius.powi(3),
            SurfaceSpec::Torus { major, minor } => 2.0 * PI * PI * major * minor * minor,
            SurfaceSpec::Ellipsoid { a, b, c } => 4.0 / 3.0 * PI * a * b * c,
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            SurfaceSpec::Sphere { radius } => 4.0 * PI * radius * radius,
            SurfaceSpec::Torus { major, minor } => 4.0 * PI * PI * major * minor,
            SurfaceSpec::Ellipsoid { a, b, c } => {
                // Area element of the map from the unit sphere, averaged over
                // a dense Fibonacci lattice.
                let n = 40_000;
                let sum: f64 = (0..n)
                    .map(|k| {
                        let s = fibonacci_sphere(k, n);
                        a * b * c * ((s.x / a).powi(2) + (s.y / b).powi(2) + (s.z / c).powi(2)).sqrt()
                    })
                    .sum();
                4.0 * PI * sum / n as f64
            }
        }
    }

    /// Signed distance estimate: exact for sphere and torus, first order
    /// for the ellipsoid (accurate near the surface).
    pub fn signed_distance_estimate(&self, x: Vec3) -> f64 {
        match *self {
            SurfaceSpec::Sphere { radius } => x.norm() - radius,
            SurfaceSpec::Torus { major, minor } => {
                let rho = (x.x * x.x + x.y * x.y).sqrt();
                ((rho - major).powi(2) + x.z * x.z).sqrt() - minor
            }
            SurfaceSpec::Ellipsoid { a, b, c } => {
                let f = (x.x / a).powi(2) + (x.y / b).powi(2) + (x.z / c).powi(2) - 1.0;
                let g = 2.0 * Vec3::new(x.x / (a * a), x.y / (b * b), x.z / (c * c)).norm();
                if g > 0.0 {
                    f / g
                } else {
                    -c
                }
            }
        }
    }

    pub fn signed_side(&self, x: Vec3) -> Side {
        self.signed_side_tol(x, &Tolerance::default())
    }

    pub fn signed_side_tol(&self, x: Vec3, tol: &Tolerance) -> Side {
        let d = self.signed_distance_estimate(x);
        let band = tol.band(self.scale());
        if d < -band {
            Side::Inside
        } else if d > band {
            Side::Outside
        } else {
            Side::On
        }
    }

    /// Distance from `x` to the medial axis.
    pub fn medial_distance(&self, x: Vec3) -> f64 {
        match *self {
            SurfaceSpec::Sphere { .. } => x.norm(),
            SurfaceSpec::Torus { major, .. } => {
                let rho = (x.x * x.x + x.y * x.y).sqrt();
                let core = ((rho - major).powi(2) + x.z * x.z).sqrt();
                core.min(rho)
            }
            SurfaceSpec::Ellipsoid { a, b, c } => {
                let ma = (a * a - c * c) / a;
                let mb = (b * b - c * c) / b;
                let planar = filled_ellipse_distance(ma, mb, x.x, x.y);
                (planar * planar + x.z * x.z).sqrt()
            }
        }
    }

    /// Local feature size at a point of the surface.
    pub fn lfs_at(&self, x: Vec3) -> f64 {
        match *self {
            SurfaceSpec::Sphere { radius } => radius,
            SurfaceSpec::Torus { minor, .. } => minor,
            SurfaceSpec::Ellipsoid { .. } => self.medial_distance(x),
        }
    }

    pub fn lfs(&self, x: &SurfacePoint) -> f64 {
        self.lfs_at(x.position)
    }

    /// Closest point on the surface.
    pub fn project(&self, x: Vec3) -> Result<SurfacePoint, SurfaceError> {
        let tol = Tolerance::default();
        if self.medial_distance(x) <= tol.band(self.scale()) {
            return Err(SurfaceError::AmbiguousProjection(x));
        }
        let (position, normal) = match *self {
            SurfaceSpec::Sphere { radius } => {
                let n = x.normalize();
                (n * radius, n)
            }
            SurfaceSpec::Torus { major, minor } => {
                let rho = (x.x * x.x + x.y * x.y).sqrt();
                let core = Vec3::new(x.x / rho * major, x.y / rho * major, 0.0);
                let n = (x - core).normalize();
                (core + n * minor, n)
            }
            SurfaceSpec::Ellipsoid { a, b, c } => {
                let e = [a, b, c];
                let y = [x.x.abs(), x.y.abs(), x.z.abs()];
                let p = ellipsoid_closest_first_octant(e, y).ok_or(SurfaceError::AmbiguousProjection(x))?;
                let p = Vec3::new(p[0].copysign(x.x), p[1].copysign(x.y), p[2].copysign(x.z));
                (p, self.normal_at(p))
            }
        };
        Ok(SurfacePoint {
            position,
            normal,
            lfs: self.lfs_at(position),
        })
    }

    /// Outward unit normal at a point on (or near) the surface.
    pub fn normal_at(&self, p: Vec3) -> Vec3 {
        match *self {
            SurfaceSpec::Sphere { .. } => p.normalize(),
            SurfaceSpec::Torus { major, .. } => {
                let rho = (p.x * p.x + p.y * p.y).sqrt();
                let core = Vec3::new(p.x / rho * major, p.y / rho * major, 0.0);
                (p - core).normalize()
            }
            SurfaceSpec::Ellipsoid { a, b, c } => Vec3::new(p.x / (a * a), p.y / (b * b), p.z / (c * c)).normalize(),
        }
    }

    fn point_from_unit(&self, s: Vec3) -> SurfacePoint {
        match *self {
            SurfaceSpec::Sphere { radius } => SurfacePoint {
                position: s * radius,
                normal: s,
                lfs: radius,
            },
            SurfaceSpec::Ellipsoid { a, b, c } => {
                let position = Vec3::new(a * s.x, b * s.y, c * s.z);
                SurfacePoint {
                    position,
                    normal: Vec3::new(s.x / a, s.y / b, s.z / c).normalize(),
                    lfs: self.lfs_at(position),
                }
            }
            SurfaceSpec::Torus { .. } => unreachable!("torus is parametrized by angles"),
        }
    }

    fn torus_point(major: f64, minor: f64, u: f64, v: f64) -> SurfacePoint {
        let (su, cu) = u.sin_cos();
        let (sv, cv) = v.sin_cos();
        let normal = Vec3::new(cv * cu, cv * su, sv);
        SurfacePoint {
            position: Vec3::new((major + minor * cv) * cu, (major + minor * cv) * su, minor * sv),
            normal,
            lfs: minor,
        }
    }

    /// A random point distributed uniformly by area.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> SurfacePoint {
        match *self {
            SurfaceSpec::Sphere { .. } => self.point_from_unit(random_unit(rng)),
            SurfaceSpec::Torus { major, minor } => loop {
                let u = rng.gen_range(0.0..TAU);
                let v = rng.gen_range(0.0..TAU);
                let accept = rng.gen_range(0.0..1.0);
                if accept * (major + minor) <= major + minor * v.cos() {
                    return Self::torus_point(major, minor, u, v);
                }
            },
            SurfaceSpec::Ellipsoid { a, b, c } => loop {
                let s = random_unit(rng);
                let g = c * ((s.x / a).powi(2) + (s.y / b).powi(2) + (s.z / c).powi(2)).sqrt();
                if rng.gen_range(0.0..1.0) <= g {
                    return self.point_from_unit(s);
                }
            },
        }
    }

    /// `n` deterministic, evenly spread points from a Fibonacci lattice.
    pub fn quasi_uniform_points(&self, n: usize) -> Vec<SurfacePoint> {
        match *self {
            SurfaceSpec::Torus { major, minor } => {
                let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
                (0..n)
                    .map(|k| {
                        let w = (k as f64 + 0.5) / n as f64;
                        let u = TAU * (k as f64 * inv_phi).fract();
                        let v = torus_inverse_cdf(major, minor, w);
                        Self::torus_point(major, minor, u, v)
                    })
                    .collect()
            }
            _ => (0..n).map(|k| self.point_from_unit(fibonacci_sphere(k, n))).collect(),
        }
    }

    /// Grammar form, e.g. `torus:1,0.3`.
    pub fn to_spec_string(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for SurfaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SurfaceSpec::Sphere { radius } => write!(f, "sphere:{radius}"),
            SurfaceSpec::Torus { major, minor } => write!(f, "torus:{major},{minor}"),
            SurfaceSpec::Ellipsoid { a, b, c } => write!(f, "ellipsoid:{a},{b},{c}"),
        }
    }
}

impl FromStr for SurfaceSpec {
    type Err = SurfaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SurfaceError::Parse(s.to_string());
        let (kind, args) = s.trim().split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        match (kind.trim().to_ascii_lowercase().as_str(), nums.as_slice()) {
            ("sphere", [r]) => SurfaceSpec::sphere(*r),
            ("torus", [big, small]) => SurfaceSpec::torus(*big, *small),
            ("ellipsoid", [a, b, c]) => SurfaceSpec::ellipsoid(*a, *b, *c),
            _ => Err(bad()),
        }
    }
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi = rng.gen_range(0.0..TAU);
    let s = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(s * phi.cos(), s * phi.sin(), z)
}

/// Point `k` of an `n`-point Fibonacci lattice on the unit sphere.
pub fn fibonacci_sphere(k: usize, n: usize) -> Vec3 {
    let golden_angle = PI * (3.0 - 5f64.sqrt());
    let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
    let s = (1.0 - z * z).max(0.0).sqrt();
    let phi = golden_angle * k as f64;
    Vec3::new(s * phi.cos(), s * phi.sin(), z)
}

/// Inverse of the area distribution of the tube angle,
/// `F(v) = (R v + r sin v) / (2πR)`.
fn torus_inverse_cdf(major: f64, minor: f64, w: f64) -> f64 {
    let target = w * TAU * major;
    let (mut lo, mut hi) = (0.0, TAU);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if major * mid + minor * mid.sin() < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Root of the decreasing function `g` on `[lo, hi]` by bisection to
/// machine precision.
fn bisect(mut lo: f64, mut hi: f64, g: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = g(mid);
        if v > 0.0 {
            lo = mid;
        } else if v < 0.0 {
            hi = mid;
        } else {
            return mid;
        }
    }
    0.5 * (lo + hi)
}

/// Closest point on the ellipse with semi-axes `e0 ≥ e1 > 0` to a query in
/// the first quadrant. `None` when the query sits on the ellipse's medial
/// segment (two closest points).
fn ellipse_closest_first_quadrant(e: [f64; 2], y: [f64; 2]) -> Option<[f64; 2]> {
    if y[1] > 0.0 {
        if y[0] > 0.0 {
            let ey = [e[0] * y[0], e[1] * y[1]];
            let g = |t: f64| (ey[0] / (t + e[0] * e[0])).powi(2) + (ey[1] / (t + e[1] * e[1])).powi(2) - 1.0;
            let t = bisect(
                -e[1] * e[1] + ey[1],
                -e[1] * e[1] + (ey[0] * ey[0] + ey[1] * ey[1]).sqrt(),
                g,
            );
            Some([
                e[0] * e[0] * y[0] / (t + e[0] * e[0]),
                e[1] * e[1] * y[1] / (t + e[1] * e[1]),
            ])
        } else {
            Some([0.0, e[1]])
        }
    } else {
        let denom = e[0] * e[0] - e[1] * e[1];
        if e[0] * y[0] < denom {
            None
        } else {
            Some([e[0], 0.0])
        }
    }
}

/// Closest point on the ellipsoid with semi-axes `e0 ≥ e1 ≥ e2 > 0` to a
/// query in the first octant, via the secular equation
/// `Σ (e_i y_i / (t + e_i²))² = 1`.
fn ellipsoid_closest_first_octant(e: [f64; 3], y: [f64; 3]) -> Option<[f64; 3]> {
    if y[2] > 0.0 {
        if y[1] > 0.0 {
            if y[0] > 0.0 {
                let ey = [e[0] * y[0], e[1] * y[1], e[2] * y[2]];
                let g = |t: f64| (0..3).map(|i| (ey[i] / (t + e[i] * e[i])).powi(2)).sum::<f64>() - 1.0;
                let norm = (ey[0] * ey[0] + ey[1] * ey[1] + ey[2] * ey[2]).sqrt();
                let t = bisect(-e[2] * e[2] + ey[2], -e[2] * e[2] + norm, g);
                Some([
                    e[0] * e[0] * y[0] / (t + e[0] * e[0]),
                    e[1] * e[1] * y[1] / (t + e[1] * e[1]),
                    e[2] * e[2] * y[2] / (t + e[2] * e[2]),
                ])
            } else {
                let p = ellipse_closest_first_quadrant([e[1], e[2]], [y[1], y[2]])?;
                Some([0.0, p[0], p[1]])
            }
        } else if y[0] > 0.0 {
            let p = ellipse_closest_first_quadrant([e[0], e[2]], [y[0], y[2]])?;
            Some([p[0], 0.0, p[1]])
        } else {
            Some([0.0, 0.0, e[2]])
        }
    } else {
        let d0 = e[0] * e[0] - e[2] * e[2];
        let d1 = e[1] * e[1] - e[2] * e[2];
        let inside_medial =
            d0 > 0.0 && e[0] * y[0] < d0 && (d1 > 0.0 && e[1] * y[1] < d1 || d1 == 0.0 && y[1] == 0.0) && {
                let q0 = e[0] * y[0] / d0;
                let q1 = if d1 > 0.0 { e[1] * y[1] / d1 } else { 0.0 };
                q0 * q0 + q1 * q1 < 1.0
            };
        if inside_medial {
            return None;
        }
        let p = if e[0] == e[1] && y[0] == 0.0 && y[1] == 0.0 {
            return None;
        } else {
            ellipse_closest_first_quadrant([e[0], e[1]], [y[0], y[1]])?
        };
        Some([p[0], p[1], 0.0])
    }
}

/// Distance in the plane from `(u, v)` to the filled ellipse with semi-axes
/// `a ≥ b ≥ 0` (a segment when `b = 0`, a point when both vanish).
fn filled_ellipse_distance(a: f64, b: f64, u: f64, v: f64) -> f64 {
    let (u, v) = (u.abs(), v.abs());
    if b <= 0.0 {
        let du = (u - a).max(0.0);
        return (du * du + v * v).sqrt();
    }
    if (u / a).powi(2) + (v / b).powi(2) <= 1.0 {
        return 0.0;
    }
    // Outside: the closest point is unique and lies on the boundary curve.
    let p = if v > 0.0 {
        ellipse_closest_first_quadrant([a, b], [u, v]).unwrap_or([a, 0.0])
    } else {
        [a, 0.0]
    };
    ((u - p[0]).powi(2) + (v - p[1]).powi(2)).sqrt()
}
