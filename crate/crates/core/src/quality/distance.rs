//! Distances between the surface and its reconstruction, normal-line
//! crossings, and containment of the reconstruction in the ball union.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ball_union::BallIndex;
use crate::geom::Vec3;
use crate::spatial::KdTree;
use crate::surface::{SurfacePoint, SurfaceSpec};
use crate::voronoi::ReconSurface;

/// Closest point to `p` on triangle `abc`.
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Segment parameter in `[0, 1]` where `p + t·(q − p)` meets triangle
/// `abc`, or `None` when it misses or runs parallel to the plane.
pub fn segment_triangle(p: Vec3, q: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Option<f64> {
    let d = q - p;
    let e1 = b - a;
    let e2 = c - a;
    let h = d.cross(e2);
    let det = e1.dot(h);
    let scale = e1.norm() * e2.norm() * d.norm();
    if det.abs() <= 1e-12 * scale {
        return None;
    }
    let inv = 1.0 / det;
    let s = p - a;
    let u = s.dot(h) * inv;
    let w = 1e-12;
    if !(-w..=1.0 + w).contains(&u) {
        return None;
    }
    let qv = s.cross(e1);
    let v = d.dot(qv) * inv;
    if v < -w || u + v > 1.0 + w {
        return None;
    }
    let t = e2.dot(qv) * inv;
    (-w..=1.0 + w).contains(&t).then_some(t)
}

/// Nearest-triangle and segment queries over a triangle soup.
pub struct TriangleIndex {
    tris: Vec<[Vec3; 3]>,
    centroids: KdTree,
    /// Largest centroid-to-vertex distance.
    reach: f64,
}

impl TriangleIndex {
    pub fn new(tris: Vec<[Vec3; 3]>) -> Self {
        let cents: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let reach = tris
            .iter()
            .zip(&cents)
            .flat_map(|(t, c)| t.iter().map(move |v| v.distance(*c)))
            .fold(0.0, f64::max);
        TriangleIndex {
            centroids: KdTree::new(&cents),
            tris,
            reach,
        }
    }

    pub fn from_surface(recon: &ReconSurface) -> Self {
        Self::new(
            recon
                .triangles()
                .iter()
                .map(|t| [recon.vertices[t[0]], recon.vertices[t[1]], recon.vertices[t[2]]])
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.tris.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tris.is_empty()
    }

    pub fn distance(&self, x: Vec3) -> f64 {
        let Some((i, _)) = self.centroids.nearest(x) else {
            return f64::INFINITY;
        };
        let t = &self.tris[i];
        let mut best = closest_point_on_triangle(x, t[0], t[1], t[2]).distance(x);
        for (j, _) in self.centroids.within_radius(x, best + self.reach) {
            let t = &self.tris[j];
            best = best.min(closest_point_on_triangle(x, t[0], t[1], t[2]).distance(x));
        }
        best
    }

    /// Distinct crossings of segment `pq`; hits closer than `1e-9` in the
    /// segment parameter are one crossing.
    pub fn crossings(&self, p: Vec3, q: Vec3) -> usize {
        let mid = (p + q) * 0.5;
        let mut ts: Vec<f64> = self
            .centroids
            .within_radius(mid, 0.5 * p.distance(q) + self.reach)
            .into_iter()
            .filter_map(|(j, _)| {
                let t = &self.tris[j];
                segment_triangle(p, q, t[0], t[1], t[2])
            })
            .collect();
        ts.sort_by(|a, b| a.total_cmp(b));
        ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
        ts.len()
    }
}

/// Low-discrepancy points inside a triangle, as barycentric coordinates.
pub fn triangle_probes(k: usize) -> impl Iterator<Item = (f64, f64)> {
    // Additive recurrence on the plastic number, folded into the triangle.
    const A1: f64 = 0.754_877_666_246_692_7;
    const A2: f64 = 0.569_840_290_998_053_3;
    (0..k).map(|j| {
        let u = (0.5 + A1 * (j as f64 + 1.0)).fract();
        let v = (0.5 + A2 * (j as f64 + 1.0)).fract();
        if u + v > 1.0 {
            (1.0 - u, 1.0 - v)
        } else {
            (u, v)
        }
    })
}

/// Facet vertices plus at least `per_facet` interior points of every facet.
pub fn surface_probes(recon: &ReconSurface, per_facet: usize) -> Vec<Vec3> {
    let mut out = recon.vertices.clone();
    for f in &recon.facets {
        let n_tri = f.vertices.len() - 2;
        let per_tri = per_facet.div_ceil(n_tri).max(1);
        let a = recon.vertices[f.vertices[0]];
        for k in 1..=n_tri {
            let b = recon.vertices[f.vertices[k]];
            let c = recon.vertices[f.vertices[k + 1]];
            out.extend(triangle_probes(per_tri).map(|(u, v)| a + (b - a) * u + (c - a) * v));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub surface_probes: usize,
    pub recon_probes: usize,
    /// Max over surface points of distance to the reconstruction over lfs.
    pub max_surface_to_recon: f64,
    /// Max over reconstruction points of distance to the surface over lfs
    /// at the closest surface point.
    pub max_recon_to_surface: f64,
    pub worst_surface_point: Vec3,
    pub worst_recon_point: Vec3,
}

impl DistanceSummary {
    pub fn max(&self) -> f64 {
        self.max_surface_to_recon.max(self.max_recon_to_surface)
    }
}

fn arg_max(v: impl ParallelIterator<Item = (f64, Vec3)>) -> (f64, Vec3) {
    v.reduce(
        || (f64::NEG_INFINITY, Vec3::ZERO),
        |a, b| {
            if b.0 > a.0 || (b.0 == a.0 && b.1.to_array() < a.1.to_array()) {
                b
            } else {
                a
            }
        },
    )
}

/// Relative distances both ways, from `probe_count` surface points and at
/// least `probe_count` reconstruction points.
pub fn two_sided_distance(recon: &ReconSurface, spec: &SurfaceSpec, probe_count: usize) -> DistanceSummary {
    let index = TriangleIndex::from_surface(recon);
    let probes = spec.quasi_uniform_points(probe_count);
    let (m_to_r, wm) = arg_max(
        probes
            .par_iter()
            .map(|x| (index.distance(x.position) / x.lfs, x.position)),
    );
    let per_facet = probe_count.div_ceil(recon.facets.len().max(1));
    let rp = surface_probes(recon, per_facet);
    let (r_to_m, wr) = arg_max(rp.par_iter().map(|&x| match spec.project(x) {
        Ok(p) => (x.distance(p.position) / p.lfs, x),
        Err(_) => (f64::INFINITY, x),
    }));
    DistanceSummary {
        surface_probes: probes.len(),
        recon_probes: rp.len(),
        max_surface_to_recon: m_to_r,
        max_recon_to_surface: r_to_m,
        worst_surface_point: wm,
        worst_recon_point: wr,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub ok: bool,
    pub probes: usize,
    /// Probes whose normal segment crosses more than once.
    pub multi_crossing_count: usize,
    /// Probes whose normal segment misses the reconstruction.
    pub missed_count: usize,
}

/// Crossings of `x ± reach·lfs(x)·n(x)` with the reconstruction.
pub fn normal_line_crossing(index: &TriangleIndex, probes: &[SurfacePoint], reach: f64) -> CrossingReport {
    let counts: Vec<usize> = probes
        .par_iter()
        .map(|x| {
            let h = x.normal * (reach * x.lfs);
            index.crossings(x.position - h, x.position + h)
        })
        .collect();
    let multi = counts.iter().filter(|&&c| c > 1).count();
    let missed = counts.iter().filter(|&&c| c == 0).count();
    CrossingReport {
        ok: multi == 0 && missed == 0,
        probes: probes.len(),
        multi_crossing_count: multi,
        missed_count: missed,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub ok: bool,
    pub points: usize,
    pub outside: usize,
    /// Largest distance by which a tested point lies outside the union.
    pub worst_violation: f64,
}

pub fn verify_sandwich(points: &[Vec3], idx: &BallIndex) -> SandwichReport {
    let depths: Vec<f64> = points.par_iter().map(|&x| idx.union_depth(x)).collect();
    let outside = depths.iter().filter(|&&d| d < 0.0).count();
    let worst = depths.iter().map(|&d| -d).fold(f64::NEG_INFINITY, f64::max);
    SandwichReport {
        ok: outside == 0,
        points: points.len(),
        outside,
        worst_violation: worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Ball;
    use crate::voronoi::{ReconFacet, VertexOrigin};
    use proptest::prelude::*;

    /// Octahedron-subdivided sphere of radius `r` as a reconstruction.
    fn sphere_mesh(r: f64, level: usize, shift: Vec3) -> ReconSurface {
        let mut verts = vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.0, 0.0, -1.0),
        ];
        let mut tris = vec![
            [0, 2, 4],
            [2, 1, 4],
            [1, 3, 4],
            [3, 0, 4],
            [2, 0, 5],
            [1, 2, 5],
            [3, 1, 5],
            [0, 3, 5],
        ];
        for _ in 0..level {
            let mut mid = std::collections::HashMap::new();
            let mut next = Vec::new();
            for t in &tris {
                let mut m = [0; 3];
                for k in 0..3 {
                    let (a, b) = (t[k], t[(k + 1) % 3]);
                    m[k] = *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                        verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                        verts.len() - 1
                    });
                }
                next.push([t[0], m[0], m[2]]);
                next.push([m[0], t[1], m[1]]);
                next.push([m[2], m[1], t[2]]);
                next.push([m[0], m[1], m[2]]);
            }
            tris = next;
        }
        ReconSurface {
            origins: vec![VertexOrigin::Steiner; verts.len()],
            vertices: verts.into_iter().map(|v| v * r + shift).collect(),
            facets: tris
                .into_iter()
                .map(|t| ReconFacet {
                    vertices: t.to_vec(),
                    upper_seed: 0,
                    lower_seed: 0,
                })
                .collect(),
        }
    }

    fn brute_distance(x: Vec3, tris: &[[Vec3; 3]]) -> f64 {
        tris.iter()
            .map(|t| closest_point_on_triangle(x, t[0], t[1], t[2]).distance(x))
            .fold(f64::INFINITY, f64::min)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn closest_point_beats_sampled_points(
            p in prop::array::uniform3(-2.0f64..2.0),
            a in prop::array::uniform3(-1.0f64..1.0),
            b in prop::array::uniform3(-1.0f64..1.0),
            c in prop::array::uniform3(-1.0f64..1.0),
        ) {
            let (p, a, b, c) = (Vec3::from_array(p), Vec3::from_array(a), Vec3::from_array(b), Vec3::from_array(c));
            let q = closest_point_on_triangle(p, a, b, c);
            let d = q.distance(p);
            for (u, v) in triangle_probes(200) {
                let y = a + (b - a) * u + (c - a) * v;
                prop_assert!(d <= y.distance(p) + 1e-12);
            }
            for y in [a, b, c] {
                prop_assert!(d <= y.distance(p) + 1e-12);
            }
        }
    }

    #[test]
    fn indexed_distance_matches_scan() {
        let recon = sphere_mesh(1.0, 3, Vec3::ZERO);
        let index = TriangleIndex::from_surface(&recon);
        let tris: Vec<[Vec3; 3]> = recon
            .triangles()
            .iter()
            .map(|t| [recon.vertices[t[0]], recon.vertices[t[1]], recon.vertices[t[2]]])
            .collect();
        for p in SurfaceSpec::sphere(1.3).unwrap().quasi_uniform_points(300) {
            let x = p.position * (0.5 + (p.position.z + 1.3) / 2.6);
            assert_eq!(index.distance(x), brute_distance(x, &tris));
        }
    }

    #[test]
    fn fine_sphere_is_close_to_itself() {
        let spec = SurfaceSpec::sphere(1.0).unwrap();
        let recon = sphere_mesh(1.0, 6, Vec3::ZERO);
        let d = two_sided_distance(&recon, &spec, 2000);
        // Chord sag of the finest triangles.
        assert!(d.max() < 1e-3, "{d:?}");
        assert!(d.recon_probes >= 2000);
    }

    #[test]
    fn shifted_reconstruction_is_far() {
        let spec = SurfaceSpec::sphere(1.0).unwrap();
        let recon = sphere_mesh(1.0, 5, Vec3::new(0.1, 0.0, 0.0));
        let d = two_sided_distance(&recon, &spec, 2000);
        assert!(d.max() >= 0.1 - 2e-3);
    }

    #[test]
    fn concentric_sphere_is_crossed_once() {
        let spec = SurfaceSpec::sphere(1.0).unwrap();
        let recon = sphere_mesh(1.01, 4, Vec3::ZERO);
        let index = TriangleIndex::from_surface(&recon);
        let r = normal_line_crossing(&index, &spec.quasi_uniform_points(500), 0.05);
        assert!(r.ok, "{r:?}");
        // Too short to reach the reconstruction.
        let r = normal_line_crossing(&index, &spec.quasi_uniform_points(50), 0.001);
        assert_eq!(r.missed_count, 50);
        assert!(!r.ok);
    }

    #[test]
    fn segment_in_facet_plane_does_not_count() {
        let (a, b, c) = (Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0));
        let index = TriangleIndex::new(vec![[a, b, c]]);
        assert_eq!(index.crossings(Vec3::new(-1.0, 0.2, 0.0), Vec3::new(2.0, 0.2, 0.0)), 0);
        assert_eq!(index.crossings(Vec3::new(0.2, 0.2, -1.0), Vec3::new(0.2, 0.2, 1.0)), 1);
        let x = SurfacePoint {
            position: Vec3::new(0.2, 0.2, 0.0),
            normal: Vec3::new(1.0, 0.0, 0.0),
            lfs: 1.0,
        };
        assert!(!normal_line_crossing(&index, &[x], 0.5).ok);
    }

    #[test]
    fn shared_edge_hit_counts_once() {
        let tris = vec![
            [Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            [
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
        ];
        let index = TriangleIndex::new(tris);
        assert_eq!(index.crossings(Vec3::new(0.5, 0.5, -1.0), Vec3::new(0.5, 0.5, 1.0)), 1);
    }

    #[test]
    fn union_membership_predicate() {
        let idx = BallIndex::new(
            vec![Ball::new(Vec3::ZERO, 0.1), Ball::new(Vec3::new(0.15, 0.0, 0.0), 0.1)],
            vec![Vec3::new(0.0, 0.0, 1.0); 2],
        );
        let r = verify_sandwich(&[Vec3::ZERO, Vec3::new(0.2, 0.0, 0.0)], &idx);
        assert!(r.ok && r.worst_violation < 0.0);
        let r = verify_sandwich(&[Vec3::new(0.0, 0.0, 0.2)], &idx);
        assert!(!r.ok);
        assert!((r.worst_violation - 0.1).abs() < 1e-9);
    }
}
