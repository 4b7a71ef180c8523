//! Outradius, inradius and fatness of convex cells.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::QualityError;
use crate::geom::Vec3;
use crate::voronoi::{MeshCell, VolumeMesh, VoronoiCell};

/// `normal·x ≤ offset` with a unit normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Halfspace {
    pub normal: Vec3,
    pub offset: f64,
}

impl Halfspace {
    pub fn bisector(site: Vec3, other: Vec3) -> Self {
        let normal = (other - site).normalize();
        Halfspace {
            normal,
            offset: normal.dot((site + other) * 0.5),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellShape {
    /// Largest vertex distance to the seed; an upper bound on the outradius.
    pub seed_radius: f64,
    /// Radius of the smallest ball enclosing the vertices.
    pub outradius: f64,
    pub inradius: f64,
    /// `outradius / inradius`.
    pub fatness: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Sphere {
    center: Vec3,
    r2: f64,
}

impl Sphere {
    fn contains(&self, p: Vec3) -> bool {
        p.distance_squared(self.center) <= self.r2 * (1.0 + 1e-12) + 1e-300
    }
}

fn sphere_through(r: &[Vec3]) -> Option<Sphere> {
    match r.len() {
        0 => None,
        1 => Some(Sphere { center: r[0], r2: 0.0 }),
        2 => {
            let center = (r[0] + r[1]) * 0.5;
            Some(Sphere {
                center,
                r2: center.distance_squared(r[0]),
            })
        }
        3 => {
            let (a, b, c) = (r[0], r[1], r[2]);
            let (u, v) = (b - a, c - a);
            let n = u.cross(v);
            let n2 = n.norm_squared();
            if n2 <= 1e-24 * u.norm_squared() * v.norm_squared() {
                return None;
            }
            let y = (v.cross(n) * (0.5 * u.norm_squared()) + n.cross(u) * (0.5 * v.norm_squared())) / n2;
            Some(Sphere {
                center: a + y,
                r2: y.norm_squared(),
            })
        }
        _ => {
            let a = r[0];
            let (u, v, w) = (r[1] - a, r[2] - a, r[3] - a);
            let det = u.dot(v.cross(w));
            if det.abs() <= 1e-12 * u.norm() * v.norm() * w.norm() {
                return None;
            }
            let y = (v.cross(w) * u.norm_squared() + w.cross(u) * v.norm_squared() + u.cross(v) * w.norm_squared())
                / (2.0 * det);
            Some(Sphere {
                center: a + y,
                r2: y.norm_squared(),
            })
        }
    }
}

/// Smallest sphere with every point of `r` on its boundary, falling back
/// to smaller supports when `r` is degenerate.
fn support_sphere(r: &[Vec3]) -> Sphere {
    if let Some(s) = sphere_through(r) {
        return s;
    }
    let mut best: Option<Sphere> = None;
    for skip in 0..r.len() {
        let sub: Vec<Vec3> = r
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != skip)
            .map(|(_, p)| *p)
            .collect();
        let s = support_sphere(&sub);
        if r.iter().all(|&p| s.contains(p)) && best.is_none_or(|b| s.r2 < b.r2) {
            best = Some(s);
        }
    }
    best.unwrap_or(Sphere { center: r[0], r2: 0.0 })
}

fn welzl(p: &[Vec3], r: &mut Vec<Vec3>) -> Sphere {
    if p.is_empty() || r.len() == 4 {
        return if r.is_empty() {
            Sphere {
                center: Vec3::ZERO,
                r2: -1.0,
            }
        } else {
            support_sphere(r)
        };
    }
    let (q, rest) = p.split_last().unwrap();
    let s = welzl(rest, r);
    if s.r2 >= 0.0 && s.contains(*q) {
        return s;
    }
    r.push(*q);
    let s = welzl(rest, r);
    r.pop();
    s
}

/// Center and radius of the smallest ball enclosing `points`.
pub fn min_enclosing_ball(points: &[Vec3]) -> (Vec3, f64) {
    assert!(!points.is_empty(), "no points to enclose");
    // A seeded shuffle keeps the expected linear running time while
    // staying deterministic.
    let mut order = points.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(points.len() as u64));
    let s = welzl(&order, &mut Vec::with_capacity(4));
    (s.center, s.r2.max(0.0).sqrt())
}

/// Largest ball inside the intersection of half-spaces, as the linear
/// program `max t` subject to `n·x + t ≤ d`. Coordinates are shifted to
/// `origin` for conditioning.
pub fn inradius(planes: &[Halfspace], origin: Vec3) -> Result<(Vec3, f64), QualityError> {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let free = (f64::NEG_INFINITY, f64::INFINITY);
    let x = [lp.add_var(0.0, free), lp.add_var(0.0, free), lp.add_var(0.0, free)];
    let t = lp.add_var(1.0, (0.0, f64::INFINITY));
    for h in planes {
        let n = h.normal;
        lp.add_constraint(
            [(x[0], n.x), (x[1], n.y), (x[2], n.z), (t, 1.0)],
            ComparisonOp::Le,
            h.offset - n.dot(origin),
        );
    }
    let sol = lp.solve().map_err(|e| QualityError::Lp(e.to_string()))?;
    let c = origin + Vec3::new(sol[x[0]], sol[x[1]], sol[x[2]]);
    // Recompute the radius exactly at the optimizer's center.
    let r = planes
        .iter()
        .map(|h| h.offset - h.normal.dot(c))
        .fold(f64::INFINITY, f64::min);
    Ok((c, r))
}

pub fn cell_fatness(id: usize, site: Vec3, vertices: &[Vec3], planes: &[Halfspace]) -> Result<CellShape, QualityError> {
    if vertices.len() < 4 || planes.len() < 4 {
        return Err(QualityError::DegenerateCell(id));
    }
    let seed_radius = vertices.iter().map(|v| v.distance(site)).fold(0.0, f64::max);
    let (_, outradius) = min_enclosing_ball(vertices);
    let (_, inradius) = inradius(planes, site)?;
    if inradius <= 0.0 || !inradius.is_finite() {
        return Err(QualityError::DegenerateCell(id));
    }
    Ok(CellShape {
        seed_radius,
        outradius,
        inradius,
        fatness: outradius / inradius,
    })
}

pub fn voronoi_cell_fatness(cell: &VoronoiCell) -> Result<CellShape, QualityError> {
    let planes: Vec<Halfspace> = cell
        .faces
        .iter()
        .map(|f| Halfspace {
            normal: f.normal,
            offset: f.offset,
        })
        .collect();
    cell_fatness(cell.seed_id, cell.site, &cell.vertices, &planes)
}

/// Stores the outradius and inradius on the cell.
pub fn fill_radii(cell: &mut VoronoiCell) -> Result<CellShape, QualityError> {
    let s = voronoi_cell_fatness(cell)?;
    cell.outradius = Some(s.outradius);
    cell.inradius = Some(s.inradius);
    Ok(s)
}

/// Fatness of a welded mesh cell. Face planes are the exact bisectors of
/// the seed positions.
pub fn mesh_cell_fatness(mesh: &VolumeMesh, cell: &MeshCell, seeds: &[Vec3]) -> Result<CellShape, QualityError> {
    let site = seeds[cell.seed_id];
    let mut ids: Vec<usize> = cell
        .faces
        .iter()
        .flat_map(|&f| mesh.faces[f].vertices.iter().copied())
        .collect();
    ids.sort_unstable();
    ids.dedup();
    let vertices: Vec<Vec3> = ids.iter().map(|&v| mesh.vertices[v]).collect();
    let mut planes = Vec::with_capacity(cell.faces.len());
    for &f in &cell.faces {
        let face = &mesh.faces[f];
        let other = if face.seed_a == cell.seed_id {
            face.seed_b
        } else {
            Some(face.seed_a)
        };
        let Some(other) = other else {
            return Err(QualityError::DegenerateCell(cell.seed_id));
        };
        planes.push(Halfspace::bisector(site, seeds[other]));
    }
    cell_fatness(cell.seed_id, site, &vertices, &planes)
}
