//! Geometric primitives: vectors, balls, the tolerance policy, and the small
//! closed-form constructions the mesher is built on (triple sphere
//! intersection, circumcircles, power distance, triangle quality).
//!
//! Every classification that compares a distance against a radius goes
//! through [`Tolerance::band`], so degenerate inputs resolve the same way on
//! every call.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub const fn splat(v: f64) -> Self {
        Vec3 { x: v, y: v, z: v }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn distance_squared(self, o: Vec3) -> f64 {
        (self - o).norm_squared()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn try_normalize(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    /// Unit vector in the same direction. Panics on the zero vector.
    pub fn normalize(self) -> Vec3 {
        self.try_normalize().expect("cannot normalize a zero vector")
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn abs(self) -> Vec3 {
        Vec3::new(self.x.abs(), self.y.abs(), self.z.abs())
    }

    pub fn max_element(self) -> f64 {
        self.x.max(self.y).max(self.z)
    }

    pub fn lerp(self, o: Vec3, t: f64) -> Vec3 {
        self + (o - self) * t
    }

    /// Two unit vectors completing `self` (assumed unit) to a right-handed
    /// orthonormal frame.
    pub fn orthonormal_basis(self) -> (Vec3, Vec3) {
        let helper = if self.x.abs() < 0.6 {
            Vec3::X
        } else if self.y.abs() < 0.6 {
            Vec3::Y
        } else {
            Vec3::Z
        };
        let u = self.cross(helper).normalize();
        let v = self.cross(u);
        (u, v)
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn from_array(a: [f64; 3]) -> Vec3 {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    #[inline]
    fn index(&self, axis: usize) -> &f64 {
        match axis {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("axis {axis} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// A closed Euclidean ball. The weight of the corresponding weighted point
/// is `radius²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec3,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec3, radius: f64) -> Self {
        assert!(
            radius > 0.0 && radius.is_finite(),
            "ball radius must be positive and finite, got {radius}"
        );
        Ball { center, radius }
    }

    #[inline]
    pub fn weight(&self) -> f64 {
        self.radius * self.radius
    }
}

/// Tolerance policy: a boundary band of `max(abs_eps, rel_eps * scale)`
/// around every radius comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rel_eps: f64,
    pub abs_eps: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rel_eps: 1e-10,
            abs_eps: 1e-12,
        }
    }
}

impl Tolerance {
    pub fn new(rel_eps: f64, abs_eps: f64) -> Self {
        assert!(rel_eps > 0.0 && abs_eps > 0.0, "tolerances must be positive");
        Tolerance { rel_eps, abs_eps }
    }

    /// Half-width of the boundary band for a quantity of magnitude `scale`.
    #[inline]
    pub fn band(&self, scale: f64) -> f64 {
        self.abs_eps.max(self.rel_eps * scale.abs())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("spheres do not meet in two distinct points")]
    NoIntersection,
    #[error("sphere centers are collinear")]
    DegenerateCenters,
    #[error("triangle vertices are collinear")]
    DegenerateTriangle,
}

/// Power distance between two weighted points: `‖p−q‖² − w_p − w_q`.
#[inline]
pub fn power_distance(p: Vec3, w_p: f64, q: Vec3, w_q: f64) -> f64 {
    p.distance_squared(q) - (w_p + w_q)
}

/// The two points common to three spheres.
///
/// The pair is ordered by signed offset along `(c2−c1)×(c3−c1)`: the first
/// point lies on the negative side of the plane of centers.
pub fn tri_sphere_intersect(b1: &Ball, b2: &Ball, b3: &Ball, tol: &Tolerance) -> Result<[Vec3; 2], GeomError> {
    let d2 = b2.center - b1.center;
    let d3 = b3.center - b1.center;
    let n = d2.cross(d3);
    let n2 = n.norm_squared();
    if n2 <= (tol.rel_eps * d2.norm() * d3.norm()).powi(2) || n2 == 0.0 {
        return Err(GeomError::DegenerateCenters);
    }
    // Radical center in the plane of the centers, relative to c1.
    let r1s = b1.weight();
    let k2 = 0.5 * (d2.norm_squared() - b2.weight() + r1s);
    let k3 = 0.5 * (d3.norm_squared() - b3.weight() + r1s);
    let y = (d3.cross(n) * k2 + n.cross(d2) * k3) / n2;
    let h2 = r1s - y.norm_squared();
    let rmax = b1.radius.max(b2.radius).max(b3.radius);
    let band = tol.band(rmax);
    if h2 <= band * band {
        return Err(GeomError::NoIntersection);
    }
    let offset = n * (h2.sqrt() / n2.sqrt());
    let base = b1.center + y;
    Ok([base - offset, base + offset])
}

/// Circumcenter and circumradius of a triangle.
pub fn circumcenter_radius(a: Vec3, b: Vec3, c: Vec3) -> Result<(Vec3, f64), GeomError> {
    let d2 = b - a;
    let d3 = c - a;
    let n = d2.cross(d3);
    let n2 = n.norm_squared();
    let tol = Tolerance::default();
    if n2 == 0.0 || n2.sqrt() <= tol.rel_eps * d2.norm() * d3.norm() {
        return Err(GeomError::DegenerateTriangle);
    }
    let y = (d3.cross(n) * (0.5 * d2.norm_squared()) + n.cross(d2) * (0.5 * d3.norm_squared())) / n2;
    Ok((a + y, y.norm()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangleQuality {
    /// Smallest interior angle, radians.
    pub min_angle: f64,
    /// Largest interior angle, radians.
    pub max_angle: f64,
    /// Longest over shortest edge length.
    pub edge_ratio: f64,
    /// Altitude onto the longest edge divided by that edge's length.
    pub min_altitude_over_longest_edge: f64,
}

pub fn triangle_quality(a: Vec3, b: Vec3, c: Vec3) -> Result<TriangleQuality, GeomError> {
    let pts = [a, b, c];
    let area2 = (b - a).cross(c - a).norm();
    let lens = [b.distance(c), c.distance(a), a.distance(b)];
    let longest = lens.iter().cloned().fold(0.0, f64::max);
    let shortest = lens.iter().cloned().fold(f64::INFINITY, f64::min);
    if shortest == 0.0 || area2 <= Tolerance::default().rel_eps * longest * longest {
        return Err(GeomError::DegenerateTriangle);
    }
    let mut angles = [0.0; 3];
    for (i, angle) in angles.iter_mut().enumerate() {
        let p = pts[i];
        let u = pts[(i + 1) % 3] - p;
        let v = pts[(i + 2) % 3] - p;
        *angle = u.cross(v).norm().atan2(u.dot(v));
    }
    Ok(TriangleQuality {
        min_angle: angles.iter().cloned().fold(f64::INFINITY, f64::min),
        max_angle: angles.iter().cloned().fold(0.0, f64::max),
        edge_ratio: longest / shortest,
        min_altitude_over_longest_edge: area2 / (longest * longest),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BallSide {
    Inside,
    Boundary,
    Outside,
}

pub fn point_in_ball(x: Vec3, b: &Ball, tol: &Tolerance) -> BallSide {
    let d = x.distance(b.center);
    let band = tol.band(b.radius);
    if d < b.radius - band {
        BallSide::Inside
    } else if d > b.radius + band {
        BallSide::Outside
    } else {
        BallSide::Boundary
    }
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    pub fn empty() -> Self {
        Aabb {
            min: Vec3::splat(f64::INFINITY),
            max: Vec3::splat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Aabb::empty();
        for p in pts {
            b.grow(*p);
        }
        b
    }

    pub fn cube(center: Vec3, half_width: f64) -> Self {
        Aabb::new(center - Vec3::splat(half_width), center + Vec3::splat(half_width))
    }

    #[inline]
    pub fn grow(&mut self, p: Vec3) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb::new(self.min.min(o.min), self.max.max(o.max))
    }

    pub fn inflate(&self, m: f64) -> Aabb {
        Aabb::new(self.min - Vec3::splat(m), self.max + Vec3::splat(m))
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    /// Smallest cube with the same center containing this box.
    pub fn bounding_cube(&self) -> Aabb {
        Aabb::cube(self.center(), 0.5 * self.extent().max_element())
    }

    #[inline]
    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    pub fn intersects(&self, o: &Aabb) -> bool {
        self.min.x <= o.max.x
            && self.max.x >= o.min.x
            && self.min.y <= o.max.y
            && self.max.y >= o.min.y
            && self.min.z <= o.max.z
            && self.max.z >= o.min.z
    }

    /// Squared distance from `p` to the box (zero inside).
    #[inline]
    pub fn distance_squared(&self, p: Vec3) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        let dz = (self.min.z - p.z).max(0.0).max(p.z - self.max.z);
        dx * dx + dy * dy + dz * dz
    }
}
