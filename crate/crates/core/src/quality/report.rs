//! The full check suite over a finished run.
//!
//! Everything is recomputed from the surface, the samples, the seeds and
//! the welded volume mesh, so a report rebuilt from saved artifacts matches
//! the in-memory one exactly.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bounds::Bounds;
use super::distance::{
    normal_line_crossing, surface_probes, two_sided_distance, verify_sandwich, DistanceSummary, TriangleIndex,
};
use super::shape::mesh_cell_fatness;
use super::topology::{surface_topology, SurfaceTopology};
use crate::ball_union::{
    build_ball_index, classify_coverage, enumerate_guides, seeds_on_ball, verify_disk_caps, BallIndex, Seed, SeedKind,
    SeedOrigin,
};
use crate::geom::{circumcenter_radius, triangle_quality, Vec3};
use crate::octree::{build_octree, root_box, verify_box_balance, SizingField, DEFAULT_DEPTH_CAP};
use crate::sampler::{covering_at, verify_sparsity, SampleSet};
use crate::spatial::KdTree;
use crate::surface::{Side, SurfaceSpec};
use crate::voronoi::{extract_surface, ReconSurface, VolumeMesh, COINCIDENT_REL};

/// Monte Carlo points for the volume integral of `lfs⁻³`.
pub const INTEGRAL_POINTS: usize = 1_000_000;
/// Random points for the octree point band.
pub const BAND_POINTS: usize = 10_000;
/// Interior probes per reconstruction facet for the union containment test.
pub const SANDWICH_PER_FACET: usize = 10;
/// Half-length of the normal probe segments, in units of `ε·lfs`.
pub const CROSSING_REACH: f64 = 0.96;
/// Largest accepted relative half-width of the integral's 95% interval.
pub const INTEGRAL_CI: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// The proven property the check measures.
    pub reference: String,
    pub measured: f64,
    /// `None` when the closed form is vacuous at these parameters.
    pub bound: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
enum Sense {
    AtMost,
    AtLeast,
}

fn finite(x: f64) -> f64 {
    if x.is_nan() {
        f64::MAX
    } else {
        x.clamp(f64::MIN, f64::MAX)
    }
}

impl Check {
    fn compare(name: &str, reference: &str, measured: f64, bound: Option<f64>, sense: Sense) -> Self {
        let measured = finite(measured);
        let pass = match (bound, sense) {
            (None, _) => true,
            (Some(b), Sense::AtMost) => measured <= b,
            (Some(b), Sense::AtLeast) => measured >= b,
        };
        Check {
            name: name.to_string(),
            reference: reference.to_string(),
            measured,
            bound: bound.map(finite),
            pass,
        }
    }

    fn at_most(name: &str, reference: &str, measured: f64, bound: f64) -> Self {
        Self::compare(name, reference, measured, Some(bound), Sense::AtMost)
    }

    fn at_least(name: &str, reference: &str, measured: f64, bound: f64) -> Self {
        Self::compare(name, reference, measured, Some(bound), Sense::AtLeast)
    }

    /// A count that must be zero.
    fn none(name: &str, reference: &str, count: usize) -> Self {
        Self::at_most(name, reference, count as f64, 0.0)
    }

    fn equals(name: &str, reference: &str, measured: f64, target: f64) -> Self {
        let mut c = Self::at_most(name, reference, measured, target);
        c.pass = measured == target;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub surface: String,
    pub eps: f64,
    pub sigma: f64,
    pub delta: f64,
    /// True when `δ ≠ 2ε`.
    pub delta_overridden: bool,
    pub rng_seed: u64,
    pub probes: usize,
    pub allow_seeds_in_union: bool,
    pub skip_interior: bool,
    pub bounds: Bounds,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub samples: usize,
    pub guide_pairs: usize,
    pub guide_triangles: usize,
    pub half_covered_pairs: usize,
    pub upper_seeds: usize,
    pub lower_seeds: usize,
    pub interior_seeds: usize,
    pub octree_leaves: usize,
    pub octree_depth: u32,
    pub mesh_vertices: usize,
    pub mesh_faces: usize,
    pub volume_cells: usize,
    pub recon_vertices: usize,
    pub recon_facets: usize,
    pub steiner_vertices: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub params: ReportParams,
    pub checks: Vec<Check>,
    pub topology: SurfaceTopology,
    pub distance: DistanceSummary,
    pub counts: Counts,
    /// Wall time per check group. Not part of report equality.
    pub timing_ms: BTreeMap<String, f64>,
}

impl QualityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Equal in everything except timing.
    pub fn same_result(&self, other: &QualityReport) -> bool {
        self.params == other.params
            && self.checks == other.checks
            && self.topology == other.topology
            && self.distance == other.distance
            && self.counts == other.counts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalOptions {
    /// Probes per direction for distances, crossings and covering.
    pub probes: usize,
    pub allow_seeds_in_union: bool,
    pub skip_interior: bool,
    pub rng_seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            probes: 100_000,
            allow_seeds_in_union: false,
            skip_interior: false,
            rng_seed: 0,
        }
    }
}

pub struct EvalInput<'a> {
    pub spec: &'a SurfaceSpec,
    pub samples: &'a SampleSet,
    pub seeds: &'a [Seed],
    pub mesh: &'a VolumeMesh,
}

struct Timer {
    times: BTreeMap<String, f64>,
    last: Instant,
}

impl Timer {
    fn lap(&mut self, what: &str) {
        let now = Instant::now();
        self.times
            .insert(what.to_string(), (now - self.last).as_secs_f64() * 1e3);
        self.last = now;
    }
}

fn min_of(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(f64::INFINITY, f64::min)
}

fn max_of(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(f64::NEG_INFINITY, f64::max)
}

pub fn evaluate(input: &EvalInput, opts: &EvalOptions) -> QualityReport {
    let EvalInput {
        spec,
        samples,
        seeds,
        mesh,
    } = *input;
    let b = Bounds::new(samples.eps, samples.sigma, samples.delta);
    let mut t = Timer {
        times: BTreeMap::new(),
        last: Instant::now(),
    };
    let mut checks = Vec::new();
    let mut counts = Counts {
        samples: samples.len(),
        upper_seeds: seeds.iter().filter(|s| s.kind == SeedKind::Upper).count(),
        lower_seeds: seeds.iter().filter(|s| s.kind == SeedKind::Lower).count(),
        interior_seeds: seeds.iter().filter(|s| s.kind == SeedKind::Interior).count(),
        mesh_vertices: mesh.vertices.len(),
        mesh_faces: mesh.faces.len(),
        volume_cells: mesh.cells.len(),
        ..Counts::default()
    };

    sample_checks(spec, samples, opts, &mut checks);
    t.lap("sample");

    let idx = build_ball_index(samples);
    edge_checks(samples, &idx, &b, &mut checks);
    guide_checks(spec, samples, &idx, &b, &mut counts, &mut checks);
    t.lap("guides");

    seed_checks(samples, &idx, seeds, &b, &mut checks);
    let caps = verify_disk_caps(&idx, spec);
    checks.push(Check::none(
        "disk_caps",
        "every ball has two uncovered disk caps holding its poles",
        caps.iter().filter(|c| !c.ok).count(),
    ));
    checks.push(Check::none(
        "poles_uncovered",
        "both poles of every ball lie outside all other balls",
        caps.iter().filter(|c| !c.pole_ok).count(),
    ));
    t.lap("seeds");

    let kinds: Vec<SeedKind> = seeds.iter().map(|s| s.kind).collect();
    let recon = extract_surface(mesh, &kinds, samples);
    counts.recon_vertices = recon.vertices.len();
    counts.recon_facets = recon.facets.len();
    counts.steiner_vertices = recon.steiner_count();
    let topology = surface_topology(&recon);
    topology_checks(spec, samples, &recon, &topology, &mut checks);
    t.lap("topology");

    let distance = two_sided_distance(&recon, spec, opts.probes);
    checks.push(Check::at_most(
        "distance_surface_to_recon",
        "surface points lie within h_t·ε²·lfs of the reconstruction",
        distance.max_surface_to_recon,
        b.distance,
    ));
    checks.push(Check::at_most(
        "distance_recon_to_surface",
        "reconstruction points lie within h_t·ε²·lfs of the surface",
        distance.max_recon_to_surface,
        b.distance,
    ));
    let index = TriangleIndex::from_surface(&recon);
    let crossing = normal_line_crossing(&index, &spec.quasi_uniform_points(opts.probes), CROSSING_REACH * b.eps);
    checks.push(Check::none(
        "normal_line_crossing",
        "each short normal segment crosses the reconstruction exactly once",
        crossing.multi_crossing_count + crossing.missed_count,
    ));
    let sandwich = verify_sandwich(&surface_probes(&recon, SANDWICH_PER_FACET), &idx);
    checks.push(Check::none(
        "recon_in_union",
        "the reconstruction lies inside the union of balls",
        sandwich.outside,
    ));
    t.lap("distance");

    let positions: Vec<Vec3> = seeds.iter().map(|s| s.position).collect();
    volume_checks(spec, mesh, &positions, &b, &mut checks);
    t.lap("cells");

    octree_checks(spec, samples, seeds, mesh, &b, opts, &mut counts, &mut checks);
    t.lap("octree");

    QualityReport {
        params: ReportParams {
            surface: spec.to_string(),
            eps: samples.eps,
            sigma: samples.sigma,
            delta: samples.delta,
            delta_overridden: samples.delta != 2.0 * samples.eps,
            rng_seed: opts.rng_seed,
            probes: opts.probes,
            allow_seeds_in_union: opts.allow_seeds_in_union,
            skip_interior: opts.skip_interior,
            bounds: b,
        },
        checks,
        topology,
        distance,
        counts,
        timing_ms: t.times,
    }
}

fn sample_checks(spec: &SurfaceSpec, samples: &SampleSet, opts: &EvalOptions, checks: &mut Vec<Check>) {
    let probes = spec.quasi_uniform_points(opts.probes.max(10 * samples.len()));
    let cover = covering_at(samples, &probes);
    checks.push(Check::at_most(
        "covering",
        "every surface point has a sample within ε·lfs",
        cover.worst_ratio,
        1.0,
    ));
    let sparse = verify_sparsity(samples);
    checks.push(Check::none(
        "sparsity",
        "samples are σε·lfs apart",
        sparse.violations.len(),
    ));
}

fn edge_checks(samples: &SampleSet, idx: &BallIndex, b: &Bounds, checks: &mut Vec<Check>) {
    let (lo, hi) = (0..idx.len())
        .into_par_iter()
        .map(|i| {
            let p = &samples.samples[i];
            idx.neighbors(i).iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &j| {
                let r = p.position.distance(samples.samples[j].position) / p.lfs;
                (lo.min(r), hi.max(r))
            })
        })
        .reduce(|| (f64::INFINITY, 0.0), |a, c| (a.0.min(c.0), a.1.max(c.1)));
    checks.push(Check::at_least(
        "edge_length_min",
        "overlapping balls have centers at least κ_ε·lfs apart",
        lo,
        b.edge_min,
    ));
    checks.push(Check::at_most(
        "edge_length_max",
        "overlapping balls have centers at most κδ·lfs apart",
        hi,
        b.edge_max,
    ));
}

#[derive(Clone, Copy)]
struct TriangleStats {
    min_angle: f64,
    max_angle: f64,
    edge_ratio: f64,
    altitude: f64,
    circumradius: f64,
    edge_circumradius: f64,
    normal: f64,
    vertex_normals: f64,
    degenerate: bool,
}

fn triangle_stats(samples: &SampleSet, t: [usize; 3]) -> TriangleStats {
    let p = t.map(|i| &samples.samples[i]);
    let (a, bb, c) = (p[0].position, p[1].position, p[2].position);
    let (Ok(q), Ok((_, r))) = (triangle_quality(a, bb, c), circumcenter_radius(a, bb, c)) else {
        return TriangleStats {
            min_angle: 0.0,
            max_angle: std::f64::consts::PI,
            edge_ratio: f64::INFINITY,
            altitude: 0.0,
            circumradius: f64::INFINITY,
            edge_circumradius: f64::INFINITY,
            normal: std::f64::consts::FRAC_PI_2,
            vertex_normals: std::f64::consts::FRAC_PI_2,
            degenerate: true,
        };
    };
    let low = p.iter().min_by(|x, y| x.lfs.total_cmp(&y.lfs)).expect("three vertices");
    let line_angle = |u: Vec3, v: Vec3| u.dot(v).abs().clamp(0.0, 1.0).acos();
    let shortest = min_of([a.distance(bb), bb.distance(c), c.distance(a)].into_iter());
    let n = (bb - a).cross(c - a).normalize();
    TriangleStats {
        min_angle: q.min_angle,
        max_angle: q.max_angle,
        edge_ratio: q.edge_ratio,
        altitude: q.min_altitude_over_longest_edge,
        circumradius: r / (samples.delta * low.lfs),
        edge_circumradius: r / shortest,
        normal: max_of(p.iter().map(|s| line_angle(n, s.normal))),
        vertex_normals: max_of((0..3).map(|k| line_angle(p[k].normal, p[(k + 1) % 3].normal))),
        degenerate: false,
    }
}

/// Guide-triangle shape and normal checks over triples with an uncovered
/// guide, plus the pairing of guide sides.
fn guide_checks(
    spec: &SurfaceSpec,
    samples: &SampleSet,
    idx: &BallIndex,
    b: &Bounds,
    counts: &mut Counts,
    checks: &mut Vec<Check>,
) {
    let mut guides = match enumerate_guides(idx, spec) {
        Ok(g) => g,
        Err(_) => {
            checks.push(Check::none("guide_sides", "guide points lie off the surface", 1));
            return;
        }
    };
    classify_coverage(&mut guides, idx);
    counts.guide_pairs = guides.len();
    counts.half_covered_pairs = guides.iter().filter(|g| g.half_covered()).count();
    let exposed: Vec<[usize; 3]> = guides
        .iter()
        .filter(|g| !(g.upper_covered() && g.lower_covered()))
        .map(|g| g.triple)
        .collect();
    counts.guide_triangles = exposed.len();
    let stats: Vec<TriangleStats> = exposed.par_iter().map(|&t| triangle_stats(samples, t)).collect();

    checks.push(Check::none(
        "same_side_uncovered_pair",
        "at least one guide of a same-side pair is covered",
        guides
            .iter()
            .filter(|g| !g.straddles && !g.upper_covered() && !g.lower_covered())
            .count(),
    ));
    checks.push(Check::none(
        "guide_triangle_degenerate",
        "guide triangles are non-degenerate",
        stats.iter().filter(|s| s.degenerate).count(),
    ));
    checks.push(Check::at_least(
        "guide_triangle_min_angle",
        "guide triangle angles satisfy sin θ ≥ 1/(2ϱ̄_f)",
        min_of(stats.iter().map(|s| s.min_angle)),
        b.min_angle,
    ));
    checks.push(Check::at_most(
        "guide_triangle_max_angle",
        "guide triangle angles satisfy sin θ ≥ 1/(2ϱ̄_f)",
        max_of(stats.iter().map(|s| s.max_angle)),
        std::f64::consts::PI - b.min_angle,
    ));
    checks.push(Check::at_most(
        "guide_triangle_edge_ratio",
        "longest over shortest guide edge is at most κδ/κ_ε",
        max_of(stats.iter().map(|s| s.edge_ratio)),
        b.edge_ratio,
    ));
    checks.push(Check::at_least(
        "guide_triangle_altitude",
        "guide triangle altitudes are at least |e|/(4ϱ̄_f)",
        min_of(stats.iter().map(|s| s.altitude)),
        b.altitude_ratio,
    ));
    checks.push(Check::at_most(
        "guide_triangle_circumradius",
        "guide triangle circumradius is at most ϱ_f·δ·lfs at its smallest-lfs vertex",
        max_of(stats.iter().map(|s| s.circumradius)),
        b.circumradius,
    ));
    checks.push(Check::at_most(
        "guide_triangle_edge_circumradius",
        "guide triangle circumradius is at most ϱ̄_f times its shortest edge",
        max_of(stats.iter().map(|s| s.edge_circumradius)),
        b.edge_circumradius,
    ));
    checks.push(Check::at_most(
        "guide_vertex_normals",
        "normals at the vertices of a guide triangle differ by at most η_s·δ",
        max_of(stats.iter().map(|s| s.vertex_normals)),
        b.sample_normal * b.delta,
    ));
    checks.push(Check::at_most(
        "guide_triangle_normal",
        "guide triangle normals deviate from the surface normal by at most η_t·δ",
        max_of(stats.iter().map(|s| s.normal)),
        b.triangle_normal * b.delta,
    ));
}

fn seed_checks(samples: &SampleSet, idx: &BallIndex, seeds: &[Seed], b: &Bounds, checks: &mut Vec<Check>) {
    let surface: Vec<&Seed> = seeds.iter().filter(|s| s.kind != SeedKind::Interior).collect();

    // Signed angle above the tangent plane, toward the seed's own side.
    let elevation = min_of(
        surface
            .par_iter()
            .map(|s| {
                let SeedOrigin::Triple(t) = s.origin else {
                    return f64::NEG_INFINITY;
                };
                let sign = if s.kind == SeedKind::Upper { 1.0 } else { -1.0 };
                min_of(t.iter().map(|&i| {
                    let v = s.position - samples.samples[i].position;
                    (sign * samples.samples[i].normal.dot(v) / v.norm())
                        .clamp(-1.0, 1.0)
                        .asin()
                }))
            })
            .collect::<Vec<_>>()
            .into_iter(),
    );
    checks.push(Check::at_least(
        "seed_elevation",
        "surface seeds rise above the tangent plane at their samples by at least asin(1/2 − 5ε + 2ε³)",
        elevation,
        b.elevation,
    ));

    let covered = surface
        .par_iter()
        .filter(|s| match s.origin {
            SeedOrigin::Triple(t) => idx.strict_cover_among(s.position, idx.neighbors(t[0]), &[]).is_some(),
            SeedOrigin::Leaf(_) => true,
        })
        .count();
    checks.push(Check::none(
        "surface_seeds_uncovered",
        "surface seeds are corners of the union boundary",
        covered,
    ));

    let tree = KdTree::new(&seeds.iter().map(|s| s.position).collect::<Vec<_>>());
    let per_ball: Vec<usize> = (0..idx.len())
        .into_par_iter()
        .map(|i| {
            let on = seeds_on_ball(i, idx, &tree, seeds);
            let up = on.iter().filter(|s| s.kind == SeedKind::Upper).count();
            let low = on.iter().filter(|s| s.kind == SeedKind::Lower).count();
            up.min(low)
        })
        .collect();
    checks.push(Check::at_least(
        "seeds_per_ball_side",
        "every sphere carries at least three seeds on each side",
        per_ball.iter().copied().min().unwrap_or(0) as f64,
        3.0,
    ));
}

fn topology_checks(
    spec: &SurfaceSpec,
    samples: &SampleSet,
    recon: &ReconSurface,
    topo: &SurfaceTopology,
    checks: &mut Vec<Check>,
) {
    let flag = |ok: bool| if ok { 1.0 } else { 0.0 };
    checks.push(Check::equals(
        "watertight",
        "reconstruction is a closed surface",
        flag(topo.watertight),
        1.0,
    ));
    checks.push(Check::equals(
        "manifold",
        "reconstruction is a 2-manifold",
        flag(topo.manifold),
        1.0,
    ));
    checks.push(Check::equals(
        "oriented",
        "facets are consistently oriented",
        flag(topo.oriented),
        1.0,
    ));
    checks.push(Check::equals(
        "components",
        "reconstruction is connected like the surface",
        topo.components as f64,
        1.0,
    ));
    checks.push(Check::equals(
        "euler_characteristic",
        "reconstruction has the surface's Euler characteristic",
        topo.euler as f64,
        spec.euler_characteristic() as f64,
    ));
    let tree = KdTree::new(&recon.vertices);
    let missing = samples
        .samples
        .par_iter()
        .filter(|s| match tree.nearest(s.position) {
            Some((_, d2)) => d2.sqrt() > COINCIDENT_REL * s.lfs,
            None => true,
        })
        .count();
    checks.push(Check::none(
        "samples_are_vertices",
        "every sample is a vertex of the reconstruction",
        missing,
    ));
}

fn volume_checks(spec: &SurfaceSpec, mesh: &VolumeMesh, positions: &[Vec3], b: &Bounds, checks: &mut Vec<Check>) {
    let shapes: Vec<(SeedKind, Option<f64>)> = mesh
        .cells
        .par_iter()
        .map(|c| (c.kind, mesh_cell_fatness(mesh, c, positions).ok().map(|s| s.fatness)))
        .collect();
    let degenerate = shapes.iter().filter(|s| s.1.is_none()).count();
    checks.push(Check::none(
        "degenerate_cells",
        "volume cells are bounded and fat",
        degenerate,
    ));
    let worst = |k: SeedKind| max_of(shapes.iter().filter(|s| s.0 == k).filter_map(|s| s.1)).max(0.0);
    checks.push(Check::at_most(
        "interior_cell_fatness",
        "interior cells have fatness at most 8√3(1+δ)/(1−3δ)",
        worst(SeedKind::Interior),
        b.interior_fatness,
    ));
    checks.push(Check::compare(
        "boundary_cell_fatness",
        "boundary cells have fatness at most 4(1+δ)/((1−3δ)(1−δ)²ϱ_v)",
        worst(SeedKind::Lower),
        b.boundary_fatness,
        Sense::AtMost,
    ));
    let exact = spec.volume();
    checks.push(Check::at_most(
        "volume_error",
        "volume mesh encloses the solid's volume up to the distance bound",
        (mesh.total_volume() - exact).abs() / exact,
        3.0 * b.distance,
    ));
    checks.push(Check::none(
        "box_faces",
        "volume cells are bounded by seed bisectors only",
        mesh.faces.iter().filter(|f| f.seed_b.is_none()).count(),
    ));
}

#[allow(clippy::too_many_arguments)]
fn octree_checks(
    spec: &SurfaceSpec,
    samples: &SampleSet,
    seeds: &[Seed],
    mesh: &VolumeMesh,
    b: &Bounds,
    opts: &EvalOptions,
    counts: &mut Counts,
    checks: &mut Vec<Check>,
) {
    let kinds: Vec<SeedKind> = seeds.iter().map(|s| s.kind).collect();
    if !opts.allow_seeds_in_union {
        let touching = mesh
            .faces
            .iter()
            .filter(|f| {
                f.seed_b.is_some_and(|o| {
                    let pair = [kinds[f.seed_a], kinds[o]];
                    pair.contains(&SeedKind::Interior) && pair.contains(&SeedKind::Upper)
                })
            })
            .count();
        checks.push(Check::none(
            "interior_upper_faces",
            "interior cells never meet outside cells",
            touching,
        ));
    }
    if opts.skip_interior {
        checks.push(Check::none(
            "interior_seeds_skipped",
            "no interior seeds when interior seeding is off",
            counts.interior_seeds,
        ));
        return;
    }

    let sizing = SizingField::new(samples);
    let octree = match build_octree(&sizing, samples.delta, root_box(samples), DEFAULT_DEPTH_CAP) {
        Ok(o) => o,
        Err(_) => {
            checks.push(Check::none("octree_depth", "octree refinement terminates", 1));
            return;
        }
    };
    counts.octree_leaves = octree.leaf_count();
    counts.octree_depth = octree.max_depth();

    let balance = verify_box_balance(&octree);
    checks.push(Check::at_most(
        "octree_balance",
        "corner-adjacent leaves differ in size by at most a factor two",
        balance.worst_ratio,
        2.0,
    ));

    let leaves: Vec<_> = octree.leaves().collect();
    let ratios: Vec<f64> = leaves.par_iter().map(|l| l.radius() / sizing.value(l.center)).collect();
    checks.push(Check::at_least(
        "leaf_radius_min",
        "leaf circumradius is at least δ/(2+δ)·lfs at its center",
        min_of(ratios.iter().copied()),
        b.leaf_radius_min,
    ));
    checks.push(Check::at_most(
        "leaf_radius_max",
        "leaf circumradius is at most δ·lfs at its center",
        max_of(ratios.iter().copied()),
        b.leaf_radius_max,
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed ^ 0xb0c5);
    let bbox = spec.bounding_box();
    let (lo, ext) = (bbox.min, bbox.max - bbox.min);
    let mut uniform = move || {
        lo + Vec3::new(
            rng.gen::<f64>() * ext.x,
            rng.gen::<f64>() * ext.y,
            rng.gen::<f64>() * ext.z,
        )
    };
    let mut band_pts = Vec::with_capacity(BAND_POINTS);
    while band_pts.len() < BAND_POINTS {
        let p = uniform();
        if spec.signed_side(p) == Side::Inside {
            band_pts.push(p);
        }
    }
    let point_ratios: Vec<f64> = band_pts
        .par_iter()
        .map(|&p| octree.locate(p).map_or(f64::NAN, |l| l.radius() / sizing.value(p)))
        .collect();
    checks.push(Check::at_least(
        "point_radius_min",
        "leaf circumradius is at least δ/(2(1+δ))·lfs at any point of the leaf",
        min_of(
            point_ratios
                .iter()
                .map(|&r| if r.is_nan() { f64::NEG_INFINITY } else { r }),
        ),
        b.point_radius_min,
    ));
    checks.push(Check::at_most(
        "point_radius_max",
        "leaf circumradius is at most δ/(1−δ)·lfs at any point of the leaf",
        max_of(point_ratios.iter().map(|&r| if r.is_nan() { f64::INFINITY } else { r })),
        b.point_radius_max,
    ));

    let outside = mesh.vertices.iter().filter(|&&v| octree.locate(v).is_none()).count();
    checks.push(Check::none(
        "cell_vertices_in_octree",
        "every volume-cell vertex lies in some leaf",
        outside,
    ));

    let interior: Vec<Vec3> = seeds
        .iter()
        .filter(|s| s.kind == SeedKind::Interior)
        .map(|s| s.position)
        .collect();
    let itree = KdTree::new(&interior);
    let separation = min_of(
        interior
            .par_iter()
            .map(|&p| {
                let side = |q: Vec3| octree.locate(q).map_or(0.0, |l| 2.0 * l.half_width);
                let near = itree.k_nearest(p, 2);
                match near.get(1) {
                    Some(&(j, d2)) => d2.sqrt() / side(p).min(side(interior[j])),
                    None => f64::INFINITY,
                }
            })
            .collect::<Vec<_>>()
            .into_iter(),
    );
    checks.push(Check::at_least(
        "interior_seed_separation",
        "interior seeds are at least one box side apart",
        separation,
        1.0 - 1e-9,
    ));

    // ∫_O lfs⁻³ over the solid, by plain Monte Carlo in the bounding box.
    let pts: Vec<Vec3> = (0..INTEGRAL_POINTS).map(|_| uniform()).collect();
    let vals: Vec<f64> = pts
        .par_iter()
        .map(|&p| {
            if spec.signed_side(p) == Side::Inside {
                sizing.value(p).powi(-3)
            } else {
                0.0
            }
        })
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let box_vol = ext.x * ext.y * ext.z;
    let integral = box_vol * mean;
    let half_width = 1.96 * box_vol * (var / n).sqrt();
    checks.push(Check::at_most(
        "size_integral_ci",
        "relative 95% half-width of the Monte Carlo estimate of ∫ lfs⁻³",
        half_width / integral,
        INTEGRAL_CI,
    ));
    checks.push(Check::at_most(
        "interior_seed_count",
        "interior seeds number at most 18√3/π·ε⁻³·∫ lfs⁻³",
        interior.len() as f64,
        b.interior_size_factor * (integral - half_width),
    ));
}
