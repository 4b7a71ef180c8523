//! Union of sample balls: neighbor structure, guide pairs, coverage, surface
//! seeds, and the structural checks on each ball's uncovered caps.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{tri_sphere_intersect, Ball, Tolerance, Vec3};
use crate::sampler::SampleSet;
use crate::spatial::{HashGrid, KdTree};
use crate::surface::{Side, SurfaceSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BallUnionError {
    #[error("guide point {point} of triple {triple:?} lies on the surface within tolerance")]
    SideAmbiguous { triple: [usize; 3], point: Vec3 },
}

/// Balls around the samples with their pairwise overlap graph.
#[derive(Clone, Debug)]
pub struct BallIndex {
    pub balls: Vec<Ball>,
    /// Outward surface normal at each sample.
    pub normals: Vec<Vec3>,
    pub tol: Tolerance,
    neighbors: Vec<Vec<usize>>,
    grid: HashGrid,
}

pub fn build_ball_index(s: &SampleSet) -> BallIndex {
    BallIndex::new(
        s.samples.iter().map(|p| p.ball()).collect(),
        s.samples.iter().map(|p| p.normal).collect(),
    )
}

impl BallIndex {
    pub fn new(balls: Vec<Ball>, normals: Vec<Vec3>) -> Self {
        assert_eq!(balls.len(), normals.len());
        let max_r = balls.iter().map(|b| b.radius).fold(0.0, f64::max);
        let mut grid = HashGrid::new(if max_r > 0.0 { 2.0 * max_r } else { 1.0 });
        for (i, b) in balls.iter().enumerate() {
            grid.insert(i, b.center);
        }
        let neighbors = (0..balls.len())
            .into_par_iter()
            .map(|i| {
                let bi = balls[i];
                let mut n = Vec::new();
                grid.for_each_near(bi.center, 1, |j| {
                    if j != i && bi.center.distance(balls[j].center) < bi.radius + balls[j].radius {
                        n.push(j);
                    }
                });
                n.sort_unstable();
                n
            })
            .collect();
        BallIndex {
            balls,
            normals,
            tol: Tolerance::default(),
            neighbors,
            grid,
        }
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    /// Sorted ids of balls overlapping ball `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn are_neighbors(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Smallest id among `candidates` (minus `exclude`) whose ball holds `x`
    /// strictly inside, beyond the tolerance band.
    pub fn strict_cover_among(&self, x: Vec3, candidates: &[usize], exclude: &[usize]) -> Option<usize> {
        candidates.iter().copied().find(|m| {
            if exclude.contains(m) {
                return false;
            }
            let b = &self.balls[*m];
            x.distance(b.center) < b.radius - self.tol.band(b.radius)
        })
    }

    /// True if `x` lies in the closed union, boundary band included.
    pub fn covers(&self, x: Vec3) -> bool {
        self.union_depth(x) >= 0.0
    }

    /// `max_i (r_i + band − ‖x − c_i‖)` over nearby balls; non-negative iff
    /// `x` is in the closed union.
    pub fn union_depth(&self, x: Vec3) -> f64 {
        let mut best = f64::NEG_INFINITY;
        self.grid.for_each_near(x, 1, |m| {
            let b = &self.balls[m];
            best = best.max(b.radius + self.tol.band(b.radius) - x.distance(b.center));
        });
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidePair {
    /// Sorted sample ids.
    pub triple: [usize; 3],
    pub upper: Vec3,
    pub lower: Vec3,
    /// Upper point outside the surface and lower point inside. When false
    /// both points share a side and `upper` is the one farther out.
    pub straddles: bool,
    pub upper_side: Side,
    pub lower_side: Side,
    pub upper_witness: Option<usize>,
    pub lower_witness: Option<usize>,
}

impl GuidePair {
    pub fn upper_covered(&self) -> bool {
        self.upper_witness.is_some()
    }

    pub fn lower_covered(&self) -> bool {
        self.lower_witness.is_some()
    }

    pub fn half_covered(&self) -> bool {
        self.upper_covered() != self.lower_covered()
    }
}

/// All guide pairs, sorted by triple. Coverage is not yet classified.
pub fn enumerate_guides(idx: &BallIndex, spec: &SurfaceSpec) -> Result<Vec<GuidePair>, BallUnionError> {
    let per_ball: Vec<Result<Vec<GuidePair>, BallUnionError>> = (0..idx.len())
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            let ni = idx.neighbors(i);
            for (a, &j) in ni.iter().enumerate() {
                if j < i {
                    continue;
                }
                for &k in &ni[a + 1..] {
                    if !idx.are_neighbors(j, k) {
                        continue;
                    }
                    if let Some(g) = guide_pair(idx, spec, [i, j, k])? {
                        out.push(g);
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for r in per_ball {
        all.extend(r?);
    }
    Ok(all)
}

/// Raw intersection points of a sorted triple, in the canonical order.
fn triple_points(idx: &BallIndex, t: [usize; 3]) -> Option<[Vec3; 2]> {
    let b = &idx.balls;
    tri_sphere_intersect(&b[t[0]], &b[t[1]], &b[t[2]], &idx.tol).ok()
}

fn guide_pair(idx: &BallIndex, spec: &SurfaceSpec, t: [usize; 3]) -> Result<Option<GuidePair>, BallUnionError> {
    let Some([p, q]) = triple_points(idx, t) else {
        return Ok(None);
    };
    let (sp, sq) = (spec.signed_side(p), spec.signed_side(q));
    for (pt, s) in [(p, sp), (q, sq)] {
        if s == Side::On {
            return Err(BallUnionError::SideAmbiguous { triple: t, point: pt });
        }
    }
    let straddles = sp != sq;
    let p_is_upper = if straddles {
        sp == Side::Outside
    } else {
        spec.signed_distance_estimate(p) >= spec.signed_distance_estimate(q)
    };
    let (upper, lower, us, ls) = if p_is_upper { (p, q, sp, sq) } else { (q, p, sq, sp) };
    Ok(Some(GuidePair {
        triple: t,
        upper,
        lower,
        straddles,
        upper_side: us,
        lower_side: ls,
        upper_witness: None,
        lower_witness: None,
    }))
}

/// Marks each guide point covered when it lies strictly inside a ball other
/// than its own three; the witness is the smallest such ball id.
pub fn classify_coverage(guides: &mut [GuidePair], idx: &BallIndex) {
    guides.par_iter_mut().for_each(|g| {
        // A ball containing a point of ∂B_i must overlap B_i.
        let cand = idx.neighbors(g.triple[0]);
        g.upper_witness = idx.strict_cover_among(g.upper, cand, &g.triple);
        g.lower_witness = idx.strict_cover_among(g.lower, cand, &g.triple);
    });
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SeedKind {
    Upper,
    Lower,
    Interior,
}

impl SeedKind {
    pub fn code(self) -> char {
        match self {
            SeedKind::Upper => 'U',
            SeedKind::Lower => 'L',
            SeedKind::Interior => 'I',
        }
    }

    pub fn from_code(c: &str) -> Option<SeedKind> {
        match c {
            "U" => Some(SeedKind::Upper),
            "L" => Some(SeedKind::Lower),
            "I" => Some(SeedKind::Interior),
            _ => None,
        }
    }

    /// Cells of these seeds form the volume mesh.
    pub fn is_volume(self) -> bool {
        self != SeedKind::Upper
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeedOrigin {
    Triple([usize; 3]),
    Leaf(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub id: usize,
    pub position: Vec3,
    pub kind: SeedKind,
    pub origin: SeedOrigin,
}

/// A guide pair with exactly one covered point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliverRecord {
    pub triple: [usize; 3],
    pub upper_covered: bool,
    pub witness: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SurfaceSeeds {
    /// Ids are `0..seeds.len()`, in guide order.
    pub seeds: Vec<Seed>,
    pub slivers: Vec<SliverRecord>,
    /// Uncovered points dropped as numerical duplicates of earlier seeds.
    pub duplicates: usize,
}

impl SurfaceSeeds {
    pub fn upper(&self) -> impl Iterator<Item = &Seed> {
        self.seeds.iter().filter(|s| s.kind == SeedKind::Upper)
    }

    pub fn lower(&self) -> impl Iterator<Item = &Seed> {
        self.seeds.iter().filter(|s| s.kind == SeedKind::Lower)
    }
}

/// Uncovered guide points become seeds. The seed kind follows the point's
/// actual side of the surface.
pub fn place_surface_seeds(guides: &[GuidePair], idx: &BallIndex) -> SurfaceSeeds {
    let max_r = idx.balls.iter().map(|b| b.radius).fold(0.0, f64::max);
    let dedup = 1e-9 * max_r.max(f64::MIN_POSITIVE);
    let mut grid = HashGrid::new(dedup.max(1e-300));
    let mut out = SurfaceSeeds::default();
    for g in guides {
        if g.half_covered() {
            out.slivers.push(SliverRecord {
                triple: g.triple,
                upper_covered: g.upper_covered(),
                witness: g.upper_witness.or(g.lower_witness).expect("half covered"),
            });
        }
        for (p, side, covered) in [
            (g.upper, g.upper_side, g.upper_covered()),
            (g.lower, g.lower_side, g.lower_covered()),
        ] {
            if covered {
                continue;
            }
            let mut dup = false;
            grid.for_each_near(p, 1, |id| {
                dup |= out.seeds[id].position.distance(p) <= dedup;
            });
            if dup {
                out.duplicates += 1;
                continue;
            }
            let id = out.seeds.len();
            grid.insert(id, p);
            out.seeds.push(Seed {
                id,
                position: p,
                kind: if side == Side::Outside {
                    SeedKind::Upper
                } else {
                    SeedKind::Lower
                },
                origin: SeedOrigin::Triple(g.triple),
            });
        }
    }
    out
}

/// Seeds lying on sphere `i` within the tolerance band.
pub fn seeds_on_ball(i: usize, idx: &BallIndex, seed_tree: &KdTree, seeds: &[Seed]) -> Vec<Seed> {
    let b = idx.balls[i];
    let band = 1e-9 * b.radius;
    let mut out: Vec<Seed> = seed_tree
        .within_radius(b.center, b.radius + band)
        .into_iter()
        .filter(|&(_, d2)| (d2.sqrt() - b.radius).abs() <= band)
        .map(|(id, _)| seeds[id])
        .collect();
    out.sort_by_key(|s| s.id);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskCapStatus {
    pub ok: bool,
    pub pole_ok: bool,
    pub upper_cycles: usize,
    pub lower_cycles: usize,
    /// Cycles whose corners lie on both sides of the surface.
    pub mixed_cycles: usize,
    /// Arrangement vertices not of degree two.
    pub irregular: usize,
}

/// Checks that each ball's uncovered boundary is two disks, one per side,
/// each holding its pole.
///
/// The uncovered part of sphere `i` is bounded by arcs of the circles
/// `∂B_i ∩ ∂B_j`. Arc endpoints are guide points of triples containing `i`;
/// the arrangement is rebuilt here from the index alone and each uncovered
/// arc becomes an edge between its two endpoint corners. Each connected
/// component of that graph is a boundary cycle.
pub fn verify_disk_caps(idx: &BallIndex, spec: &SurfaceSpec) -> Vec<DiskCapStatus> {
    (0..idx.len())
        .into_par_iter()
        .map(|i| disk_caps_of(idx, spec, i))
        .collect()
}

fn sorted3(a: usize, b: usize, c: usize) -> [usize; 3] {
    let mut t = [a, b, c];
    t.sort_unstable();
    t
}

/// Both poles of ball `i` lie strictly outside every other ball and on the
/// expected side of the surface.
pub fn pole_ok(idx: &BallIndex, spec: &SurfaceSpec, i: usize) -> bool {
    let b = idx.balls[i];
    let n = idx.normals[i];
    [
        (b.center + n * b.radius, Side::Outside),
        (b.center - n * b.radius, Side::Inside),
    ]
    .iter()
    .all(|&(p, want)| {
        idx.neighbors(i).iter().all(|&m| {
            let o = &idx.balls[m];
            p.distance(o.center) > o.radius + idx.tol.band(o.radius)
        }) && spec.signed_side(p) == want
    })
}

fn disk_caps_of(idx: &BallIndex, spec: &SurfaceSpec, i: usize) -> DiskCapStatus {
    let bi = idx.balls[i];
    let ni = idx.neighbors(i);
    let pole_ok = pole_ok(idx, spec, i);
    if ni.is_empty() {
        return DiskCapStatus {
            ok: pole_ok,
            pole_ok,
            upper_cycles: 0,
            lower_cycles: 0,
            mixed_cycles: 0,
            irregular: 0,
        };
    }

    let mut nodes: HashMap<([usize; 3], u8), usize> = HashMap::new();
    let mut node_pos: Vec<Vec3> = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    // Cycles made of a single circle with no corner.
    let mut loose: Vec<Side> = Vec::new();
    let mut fully_covered = false;

    for &j in ni {
        let bj = idx.balls[j];
        let d = bj.center - bi.center;
        let dist = d.norm();
        let u = d / dist;
        let along = (dist * dist + bi.weight() - bj.weight()) / (2.0 * dist);
        let rho2 = bi.weight() - along * along;
        if rho2 <= 0.0 {
            if along <= -bi.radius {
                // Ball i lies inside ball j.
                fully_covered = true;
            }
            continue;
        }
        let rho = rho2.sqrt();
        let center = bi.center + u * along;
        let (e1, e2) = u.orthonormal_basis();
        let at = |theta: f64| center + (e1 * theta.cos() + e2 * theta.sin()) * rho;

        let others: Vec<usize> = ni.iter().copied().filter(|&m| m != j).collect();
        let mut events: Vec<(f64, Vec3, [usize; 3], u8, bool)> = Vec::new();
        for &k in &others {
            if !idx.are_neighbors(j, k) {
                continue;
            }
            let t = sorted3(i, j, k);
            if let Some(pts) = triple_points(idx, t) {
                for (bit, p) in pts.into_iter().enumerate() {
                    let w = p - center;
                    let theta = w.dot(e2).atan2(w.dot(e1));
                    let covered = idx.strict_cover_among(p, ni, &t).is_some();
                    events.push((theta, p, t, bit as u8, covered));
                }
            }
        }
        let arc_uncovered = |theta: f64| idx.strict_cover_among(at(theta), &others, &[]).is_none();
        if events.is_empty() {
            if arc_uncovered(0.0) {
                loose.push(spec.signed_side(at(0.0)));
            }
            continue;
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)).then(a.3.cmp(&b.3)));
        let m = events.len();
        for a in 0..m {
            let b = (a + 1) % m;
            let (ea, eb) = (&events[a], &events[b]);
            // An uncovered arc has uncovered endpoints.
            if ea.4 || eb.4 {
                continue;
            }
            let mut tb = eb.0;
            if b == 0 {
                tb += std::f64::consts::TAU;
            }
            if tb - ea.0 <= 1e-12 {
                continue;
            }
            if !arc_uncovered(0.5 * (ea.0 + tb)) {
                continue;
            }
            let mut node = |t: [usize; 3], bit: u8, p: Vec3| {
                *nodes.entry((t, bit)).or_insert_with(|| {
                    node_pos.push(p);
                    node_pos.len() - 1
                })
            };
            let na = node(ea.2, ea.3, ea.1);
            let nb = node(eb.2, eb.3, eb.1);
            edges.push((na, nb));
        }
    }

    let count = node_pos.len();
    let mut degree = vec![0usize; count];
    let mut parent: Vec<usize> = (0..count).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(a, b) in &edges {
        degree[a] += 1;
        degree[b] += 1;
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let irregular = degree.iter().filter(|&&d| d != 2).count();
    let mut comp_sides: HashMap<usize, (bool, bool)> = HashMap::new();
    for (v, &pos) in node_pos.iter().enumerate().take(count) {
        let r = find(&mut parent, v);
        let e = comp_sides.entry(r).or_insert((false, false));
        match spec.signed_side(pos) {
            Side::Outside => e.0 = true,
            _ => e.1 = true,
        }
    }
    let (mut upper, mut lower, mut mixed) = (0, 0, 0);
    for (out, inn) in comp_sides.values() {
        match (out, inn) {
            (true, false) => upper += 1,
            (false, true) => lower += 1,
            _ => mixed += 1,
        }
    }
    for s in loose {
        match s {
            Side::Outside => upper += 1,
            _ => lower += 1,
        }
    }
    let ok = pole_ok && !fully_covered && upper == 1 && lower == 1 && mixed == 0 && irregular == 0;
    DiskCapStatus {
        ok,
        pole_ok,
        upper_cycles: upper,
        lower_cycles: lower,
        mixed_cycles: mixed,
        irregular,
    }
}
