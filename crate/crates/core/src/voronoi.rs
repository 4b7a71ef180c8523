//! Voronoi cells by half-space clipping, the welded volume mesh, and the
//! surface read off the faces between outside and inside seeds.
//!
//! Each cell starts as the clip box and is cut by bisectors of its nearest
//! seeds in increasing distance. Clipping stops once the next seed is at
//! least twice the cell radius away, since no farther bisector can reach
//! the cell. Cells that stay large (outside seeds near the clip box) are
//! finished by checking that every vertex has the cell's own seed as a
//! nearest seed, which certifies the cell by convexity.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ball_union::{Seed, SeedKind};
use crate::geom::{Aabb, Tolerance, Vec3};
use crate::sampler::SampleSet;
use crate::spatial::{HashGrid, KdTree};

/// Candidates fetched by distance before switching to vertex certificates.
const NEIGHBOR_CAP: usize = 128;
/// Weld distance relative to the clip box diagonal.
const WELD_REL: f64 = 1e-9;
/// Faces narrower than this, relative to the cell radius, are numerical
/// slivers.
const SLIVER_REL: f64 = 1e-6;
/// Sample-to-vertex coincidence, relative to the sample's lfs.
pub const COINCIDENT_REL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoronoiError {
    #[error("cell of seed {0} is empty")]
    EmptyCell(usize),
    #[error("cell of {kind:?} seed {seed} reaches the clip box")]
    UnboundedCell { seed: usize, kind: SeedKind },
    #[error("cell of seed {0} has an inconsistent cut")]
    Degenerate(usize),
    #[error("seeds {0} and {1} coincide")]
    DuplicateSeeds(usize, usize),
    #[error("seed ids must equal their positions in the seed list (found {found} at {at})")]
    SeedIds { at: usize, found: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaceNeighbor {
    Seed(usize),
    Boundary,
}

impl FaceNeighbor {
    pub fn seed(self) -> Option<usize> {
        match self {
            FaceNeighbor::Seed(s) => Some(s),
            FaceNeighbor::Boundary => None,
        }
    }
}

/// Planar face, counter-clockwise seen from outside the cell. Points of
/// the cell satisfy `normal·x ≤ offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFace {
    pub vertices: Vec<usize>,
    pub neighbor: FaceNeighbor,
    pub normal: Vec3,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoronoiCell {
    pub seed_id: usize,
    pub site: Vec3,
    pub vertices: Vec<Vec3>,
    pub faces: Vec<CellFace>,
    pub outradius: Option<f64>,
    pub inradius: Option<f64>,
}

impl VoronoiCell {
    fn boxed(seed_id: usize, site: Vec3, b: &Aabb) -> Self {
        let vertices = (0..8)
            .map(|c| {
                Vec3::new(
                    if c & 1 != 0 { b.max.x } else { b.min.x },
                    if c & 2 != 0 { b.max.y } else { b.min.y },
                    if c & 4 != 0 { b.max.z } else { b.min.z },
                )
            })
            .collect();
        let face = |loop_: [usize; 4], normal: Vec3, offset: f64| CellFace {
            vertices: loop_.to_vec(),
            neighbor: FaceNeighbor::Boundary,
            normal,
            offset,
        };
        let faces = vec![
            face([0, 4, 6, 2], Vec3::new(-1.0, 0.0, 0.0), -b.min.x),
            face([1, 3, 7, 5], Vec3::new(1.0, 0.0, 0.0), b.max.x),
            face([0, 1, 5, 4], Vec3::new(0.0, -1.0, 0.0), -b.min.y),
            face([2, 6, 7, 3], Vec3::new(0.0, 1.0, 0.0), b.max.y),
            face([0, 2, 3, 1], Vec3::new(0.0, 0.0, -1.0), -b.min.z),
            face([4, 5, 7, 6], Vec3::new(0.0, 0.0, 1.0), b.max.z),
        ];
        VoronoiCell {
            seed_id,
            site,
            vertices,
            faces,
            outradius: None,
            inradius: None,
        }
    }

    /// Largest vertex distance to the seed.
    pub fn radius(&self) -> f64 {
        self.vertices
            .iter()
            .map(|v| v.distance_squared(self.site))
            .fold(0.0, f64::max)
            .sqrt()
    }

    pub fn touches_boundary(&self) -> bool {
        self.faces.iter().any(|f| f.neighbor == FaceNeighbor::Boundary)
    }

    pub fn neighbors(&self) -> impl Iterator<Item = usize> + '_ {
        self.faces.iter().filter_map(|f| f.neighbor.seed())
    }

    pub fn volume(&self) -> f64 {
        polyhedron_volume(
            &self.vertices,
            self.faces.iter().map(|f| f.vertices.as_slice()),
            self.site,
        )
    }

    /// `Some(inside)` for points clear of every face plane by `band`, else
    /// `None`.
    pub fn contains(&self, q: Vec3, band: f64) -> Option<bool> {
        let mut on = false;
        for f in &self.faces {
            let s = f.normal.dot(q) - f.offset;
            if s > band {
                return Some(false);
            }
            on |= s >= -band;
        }
        if on {
            None
        } else {
            Some(true)
        }
    }

    /// Cuts away `normal·x > offset` if some vertex lies beyond it by more
    /// than `tol`. Returns whether anything changed.
    ///
    /// Once a cut is made, vertices are split by exact sign so that each
    /// new point is the exit of one face and the entry of another, and the
    /// cap loops always close.
    fn clip(&mut self, normal: Vec3, offset: f64, neighbor: FaceNeighbor, tol: f64) -> Result<bool, VoronoiError> {
        let s: Vec<f64> = self.vertices.iter().map(|v| normal.dot(*v) - offset).collect();
        if s.iter().all(|&x| x <= tol) {
            return Ok(false);
        }
        if s.iter().all(|&x| x >= -tol) {
            return Err(VoronoiError::EmptyCell(self.seed_id));
        }
        let n_old = self.vertices.len();
        let out = |v: usize| s[v] > 0.0;
        let mut cut: HashMap<(usize, usize), usize> = HashMap::new();
        // Cap edges run from a face's entry point back to its exit point.
        let mut next: HashMap<usize, usize> = HashMap::new();
        let mut faces = Vec::with_capacity(self.faces.len() + 1);
        for f in self.faces.drain(..) {
            let m = f.vertices.len();
            let mut kept = Vec::with_capacity(m + 1);
            let mut exits = Vec::with_capacity(m + 1);
            for k in 0..m {
                let (u, v) = (f.vertices[k], f.vertices[(k + 1) % m]);
                if !out(u) {
                    kept.push(u);
                    exits.push(false);
                }
                if out(u) != out(v) {
                    let key = (u.min(v), u.max(v));
                    let id = *cut.entry(key).or_insert_with(|| {
                        let (a, b) = key;
                        let t = s[a] / (s[a] - s[b]);
                        self.vertices.push(self.vertices[a].lerp(self.vertices[b], t));
                        self.vertices.len() - 1
                    });
                    kept.push(id);
                    exits.push(out(v));
                }
            }
            let len = kept.len();
            for k in 0..len {
                if exits[k] {
                    let q = kept[(k + 1) % len];
                    if q < n_old || next.insert(q, kept[k]).is_some() {
                        return Err(VoronoiError::Degenerate(self.seed_id));
                    }
                }
            }
            if len >= 3 {
                faces.push(CellFace { vertices: kept, ..f });
            }
        }
        let mut keys: Vec<usize> = next.keys().copied().collect();
        keys.sort_unstable();
        let mut used = vec![false; self.vertices.len()];
        for start in keys {
            if used[start] {
                continue;
            }
            let mut cap = Vec::new();
            let mut at = start;
            loop {
                if used[at] {
                    return Err(VoronoiError::Degenerate(self.seed_id));
                }
                used[at] = true;
                cap.push(at);
                at = *next.get(&at).ok_or(VoronoiError::Degenerate(self.seed_id))?;
                if at == start {
                    break;
                }
            }
            if cap.len() >= 3 {
                faces.push(CellFace {
                    vertices: cap,
                    neighbor,
                    normal,
                    offset,
                });
            }
        }

        // Compact the vertex list.
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        for f in &mut faces {
            for v in &mut f.vertices {
                if remap[*v] == usize::MAX {
                    remap[*v] = vertices.len();
                    vertices.push(self.vertices[*v]);
                }
                *v = remap[*v];
            }
        }
        self.vertices = vertices;
        self.faces = faces;
        Ok(true)
    }

    fn clip_bisector(&mut self, other: usize, at: Vec3, tol: &Tolerance) -> Result<bool, VoronoiError> {
        let d = at - self.site;
        let len = d.norm();
        let normal = d / len;
        let offset = normal.dot((self.site + at) * 0.5);
        let band = tol.band(self.radius());
        self.clip(normal, offset, FaceNeighbor::Seed(other), band)
    }
}

/// Signed volume of a closed polyhedron with outward faces, by fans from
/// `apex`.
pub fn polyhedron_volume<'a>(vertices: &[Vec3], faces: impl Iterator<Item = &'a [usize]>, apex: Vec3) -> f64 {
    let mut vol = 0.0;
    for f in faces {
        let a = vertices[f[0]] - apex;
        for k in 1..f.len() - 1 {
            let b = vertices[f[k]] - apex;
            let c = vertices[f[k + 1]] - apex;
            vol += a.dot(b.cross(c));
        }
    }
    vol / 6.0
}

/// Frozen seed positions with a nearest-neighbor index. Seed ids are the
/// list positions.
#[derive(Clone, Debug)]
pub struct SeedIndex {
    pub positions: Vec<Vec3>,
    pub kinds: Vec<SeedKind>,
    tree: KdTree,
}

impl SeedIndex {
    pub fn new(seeds: &[Seed]) -> Result<Self, VoronoiError> {
        for (k, s) in seeds.iter().enumerate() {
            if s.id != k {
                return Err(VoronoiError::SeedIds { at: k, found: s.id });
            }
        }
        let positions: Vec<Vec3> = seeds.iter().map(|s| s.position).collect();
        let tree = KdTree::new(&positions);
        let dup = positions.par_iter().enumerate().find_map_first(|(i, &p)| {
            tree.k_nearest(p, 2)
                .into_iter()
                .find(|&(j, d2)| j != i && d2 == 0.0)
                .map(|(j, _)| (i.min(j), i.max(j)))
        });
        if let Some((a, b)) = dup {
            return Err(VoronoiError::DuplicateSeeds(a, b));
        }
        Ok(SeedIndex {
            positions,
            kinds: seeds.iter().map(|s| s.kind).collect(),
            tree,
        })
    }

    pub fn from_points(points: &[Vec3]) -> Result<Self, VoronoiError> {
        let seeds: Vec<Seed> = points
            .iter()
            .enumerate()
            .map(|(id, &position)| Seed {
                id,
                position,
                kind: SeedKind::Interior,
                origin: crate::ball_union::SeedOrigin::Leaf(id),
            })
            .collect();
        Self::new(&seeds)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn nearest(&self, q: Vec3) -> Option<(usize, f64)> {
        self.tree.nearest(q)
    }
}

/// The Voronoi cell of one seed inside `clip_box`.
pub fn compute_cell(seed_id: usize, seeds: &SeedIndex, clip_box: &Aabb) -> Result<VoronoiCell, VoronoiError> {
    let tol = Tolerance::default();
    let site = seeds.positions[seed_id];
    let mut cell = VoronoiCell::boxed(seed_id, site, clip_box);
    let n = seeds.len();
    let mut k = 16usize;
    let mut seen = 0;
    let mut certified = false;
    loop {
        let cand = seeds.tree.k_nearest(site, k.min(n));
        for &(j, d2) in &cand[seen..] {
            if j == seed_id {
                continue;
            }
            let r = cell.radius();
            if d2 >= 4.0 * r * r {
                certified = true;
                break;
            }
            cell.clip_bisector(j, seeds.positions[j], &tol)?;
        }
        seen = cand.len();
        if certified || seen == n || k >= NEIGHBOR_CAP {
            break;
        }
        k *= 2;
    }
    if !certified && seen < n {
        // Every vertex must be at least as close to this seed as to any
        // other, up to the clipping band.
        for _ in 0..n {
            let band = tol.band(cell.radius());
            let mut violators: Vec<usize> = cell
                .vertices
                .iter()
                .filter_map(|&v| {
                    let (j, _) = seeds.tree.nearest(v)?;
                    if j == seed_id {
                        return None;
                    }
                    let p = seeds.positions[j];
                    let d = p - site;
                    let s = (d / d.norm()).dot(v - (site + p) * 0.5);
                    (s > band).then_some(j)
                })
                .collect();
            if violators.is_empty() {
                break;
            }
            violators.sort_unstable();
            violators.dedup();
            let mut changed = false;
            for j in violators {
                changed |= cell.clip_bisector(j, seeds.positions[j], &tol)?;
            }
            if !changed {
                return Err(VoronoiError::Degenerate(seed_id));
            }
        }
    }
    Ok(cell)
}

/// All cells, in seed order.
pub fn compute_cells(seeds: &SeedIndex, clip_box: &Aabb) -> Result<Vec<VoronoiCell>, VoronoiError> {
    (0..seeds.len())
        .into_par_iter()
        .map(|i| compute_cell(i, seeds, clip_box))
        .collect()
}

/// A face stored once, oriented outward from `seed_a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshFace {
    pub vertices: Vec<usize>,
    pub seed_a: usize,
    /// `None` on the clip box.
    pub seed_b: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshCell {
    pub seed_id: usize,
    pub kind: SeedKind,
    pub faces: Vec<usize>,
}

/// Cells of volume seeds over a welded vertex pool.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VolumeMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<MeshFace>,
    pub cells: Vec<MeshCell>,
}

/// Merges points closer than a fixed distance to the first one inserted.
struct Welder {
    grid: HashGrid,
    tol2: f64,
    points: Vec<Vec3>,
}

impl Welder {
    fn new(tol: f64) -> Self {
        Welder {
            grid: HashGrid::new(tol),
            tol2: tol * tol,
            points: Vec::new(),
        }
    }

    fn id(&mut self, p: Vec3) -> usize {
        let mut found: Option<usize> = None;
        let points = &self.points;
        let tol2 = self.tol2;
        self.grid.for_each_near(p, 1, |i| {
            if points[i].distance_squared(p) <= tol2 && found.is_none_or(|f| i < f) {
                found = Some(i);
            }
        });
        found.unwrap_or_else(|| {
            self.points.push(p);
            self.grid.insert(self.points.len() - 1, p);
            self.points.len() - 1
        })
    }
}

fn weld_loop(w: &mut Welder, cell: &VoronoiCell, face: &CellFace) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(face.vertices.len());
    for &v in &face.vertices {
        let id = w.id(cell.vertices[v]);
        if out.last() != Some(&id) {
            out.push(id);
        }
    }
    while out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    drop_straight_vertices(&mut out, &w.points, w.tol2.sqrt());
    out
}

/// Removes loop vertices lying within `tol` of the segment joining their
/// loop neighbors. A vertex of a convex polytope is a corner of every face
/// through it, so such vertices only come from zero-width slivers along
/// degenerate edges.
fn drop_straight_vertices(l: &mut Vec<usize>, points: &[Vec3], tol: f64) {
    let mut k = 0;
    while l.len() >= 3 && k < l.len() {
        let n = l.len();
        let (a, x, b) = (points[l[(k + n - 1) % n]], points[l[k]], points[l[(k + 1) % n]]);
        let ab = b - a;
        let t = (x - a).dot(ab) / ab.norm_squared();
        if t > 0.0 && t < 1.0 && (a + ab * t).distance(x) <= tol {
            l.remove(k);
            k = k.saturating_sub(1);
        } else {
            k += 1;
        }
    }
}

/// Area and diameter of a face loop.
fn face_extent(points: &[Vec3], l: &[usize]) -> (f64, f64) {
    let mut n = Vec3::ZERO;
    let mut diam: f64 = 0.0;
    for k in 0..l.len() {
        n += points[l[k]].cross(points[l[(k + 1) % l.len()]]);
        for &j in &l[k + 1..] {
            diam = diam.max(points[l[k]].distance(points[j]));
        }
    }
    (0.5 * n.norm(), diam)
}

/// A face narrower than `tol` everywhere.
pub fn is_sliver(points: &[Vec3], l: &[usize], tol: f64) -> bool {
    let (area, diam) = face_extent(points, l);
    diam <= tol || area <= tol * diam
}

impl VolumeMesh {
    /// Welds the cells whose seed kind satisfies `keep`. Faces shared by
    /// two kept cells are stored once, from the lower seed id.
    pub fn from_cells(
        cells: &[VoronoiCell],
        kinds: &[SeedKind],
        weld_tol: f64,
        keep: impl Fn(SeedKind) -> bool,
    ) -> Self {
        let mut w = Welder::new(weld_tol);
        let mut mesh = VolumeMesh::default();
        let mut shared: HashMap<(usize, usize), usize> = HashMap::new();
        for cell in cells.iter().filter(|c| keep(kinds[c.seed_id])) {
            let a = cell.seed_id;
            let mut faces = Vec::with_capacity(cell.faces.len());
            for f in &cell.faces {
                let b = f.neighbor.seed();
                let both = b.is_some_and(|b| keep(kinds[b]));
                if let (true, Some(b)) = (both, b) {
                    if b < a {
                        if let Some(&fi) = shared.get(&(b, a)) {
                            faces.push(fi);
                        }
                        continue;
                    }
                }
                let loop_ = weld_loop(&mut w, cell, f);
                if loop_.len() < 3 {
                    continue;
                }
                let fi = mesh.faces.len();
                mesh.faces.push(MeshFace {
                    vertices: loop_,
                    seed_a: a,
                    seed_b: b,
                });
                if both {
                    shared.insert((a, b.unwrap()), fi);
                }
                faces.push(fi);
            }
            mesh.cells.push(MeshCell {
                seed_id: a,
                kind: kinds[a],
                faces,
            });
        }
        mesh.vertices = w.points;
        mesh
    }

    /// Face loop oriented outward from `cell`.
    pub fn oriented_face(&self, cell: &MeshCell, f: usize) -> Vec<usize> {
        let face = &self.faces[f];
        let mut v = face.vertices.clone();
        if face.seed_a != cell.seed_id {
            v.reverse();
        }
        v
    }

    pub fn cell_volume(&self, cell: &MeshCell) -> f64 {
        let loops: Vec<Vec<usize>> = cell.faces.iter().map(|&f| self.oriented_face(cell, f)).collect();
        let apex = self.vertices[loops[0][0]];
        polyhedron_volume(&self.vertices, loops.iter().map(|l| l.as_slice()), apex)
    }

    pub fn total_volume(&self) -> f64 {
        let v: Vec<f64> = self.cells.par_iter().map(|c| self.cell_volume(c)).collect();
        v.iter().sum()
    }
}

/// Face adjacency between computed cells.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingReport {
    /// Seed-to-seed faces over all cells, counted once per side.
    pub internal_faces: usize,
    /// Those whose neighbor lists the face back.
    pub paired: usize,
    /// Faces between an outside-seed cell and an inside-seed cell, counted
    /// once per pair.
    pub upper_lower_pairs: usize,
    /// Zero-width faces along degenerate edges, skipped above.
    pub slivers: usize,
}

impl PairingReport {
    pub fn complete(&self) -> bool {
        self.internal_faces == self.paired
    }
}

/// Faces narrower than a millionth of their cell's radius are left out of
/// the counts.
pub fn pairing(cells: &[VoronoiCell], kinds: &[SeedKind]) -> PairingReport {
    let mut r = PairingReport::default();
    let by_id: HashMap<usize, &VoronoiCell> = cells.iter().map(|c| (c.seed_id, c)).collect();
    for c in cells {
        let tol = SLIVER_REL * c.radius();
        for f in &c.faces {
            let Some(b) = f.neighbor.seed() else { continue };
            if is_sliver(&c.vertices, &f.vertices, tol) {
                r.slivers += 1;
                continue;
            }
            r.internal_faces += 1;
            if by_id.get(&b).is_some_and(|o| o.neighbors().any(|x| x == c.seed_id)) {
                r.paired += 1;
            }
            if kinds[c.seed_id] == SeedKind::Lower && kinds[b] == SeedKind::Upper {
                r.upper_lower_pairs += 1;
            }
        }
    }
    r
}

#[derive(Clone, Debug)]
pub struct VoronoiDiagram {
    pub cells: Vec<VoronoiCell>,
    pub mesh: VolumeMesh,
    pub pairing: PairingReport,
}

pub fn weld_tolerance(clip_box: &Aabb) -> f64 {
    WELD_REL * clip_box.diagonal()
}

/// Every cell, plus the welded mesh of the inside and interior cells,
/// which must not reach the clip box.
pub fn compute_mesh(seeds: &[Seed], clip_box: &Aabb) -> Result<VoronoiDiagram, VoronoiError> {
    let index = SeedIndex::new(seeds)?;
    let cells = compute_cells(&index, clip_box)?;
    for c in &cells {
        let kind = index.kinds[c.seed_id];
        if kind.is_volume() && c.touches_boundary() {
            return Err(VoronoiError::UnboundedCell { seed: c.seed_id, kind });
        }
    }
    let mesh = VolumeMesh::from_cells(&cells, &index.kinds, weld_tolerance(clip_box), SeedKind::is_volume);
    let pairing = pairing(&cells, &index.kinds);
    Ok(VoronoiDiagram { cells, mesh, pairing })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VertexOrigin {
    Sample(usize),
    Steiner,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconFacet {
    /// Oriented from the inside cell toward the outside cell.
    pub vertices: Vec<usize>,
    pub upper_seed: usize,
    pub lower_seed: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReconSurface {
    pub vertices: Vec<Vec3>,
    pub origins: Vec<VertexOrigin>,
    pub facets: Vec<ReconFacet>,
}

impl ReconSurface {
    pub fn steiner_count(&self) -> usize {
        self.origins.iter().filter(|o| **o == VertexOrigin::Steiner).count()
    }

    /// Fan triangulation of every facet.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        self.facets
            .iter()
            .flat_map(|f| (1..f.vertices.len() - 1).map(move |k| [f.vertices[0], f.vertices[k], f.vertices[k + 1]]))
            .collect()
    }
}

/// Mesh faces between an inside cell and an outside cell. Vertices within
/// `1e-8·lfs` of a sample are tagged with it.
pub fn extract_surface(mesh: &VolumeMesh, kinds: &[SeedKind], samples: &SampleSet) -> ReconSurface {
    let tree = KdTree::new(&samples.positions());
    let mut remap: HashMap<usize, usize> = HashMap::new();
    let mut out = ReconSurface::default();
    for f in &mesh.faces {
        let Some(b) = f.seed_b else { continue };
        let (ka, kb) = (kinds[f.seed_a], kinds[b]);
        let (upper, lower, flip) = match (ka, kb) {
            (SeedKind::Lower, SeedKind::Upper) => (b, f.seed_a, false),
            (SeedKind::Upper, SeedKind::Lower) => (f.seed_a, b, true),
            _ => continue,
        };
        let mut vs: Vec<usize> = f
            .vertices
            .iter()
            .map(|&v| {
                *remap.entry(v).or_insert_with(|| {
                    let p = mesh.vertices[v];
                    let origin = match tree.nearest(p) {
                        Some((i, d2)) if d2.sqrt() <= COINCIDENT_REL * samples.samples[i].lfs => {
                            VertexOrigin::Sample(i)
                        }
                        _ => VertexOrigin::Steiner,
                    };
                    out.vertices.push(p);
                    out.origins.push(origin);
                    out.vertices.len() - 1
                })
            })
            .collect();
        if flip {
            vs.reverse();
        }
        out.facets.push(ReconFacet {
            vertices: vs,
            upper_seed: upper,
            lower_seed: lower,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ball_union::{classify_coverage, enumerate_guides, place_surface_seeds, SeedOrigin};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clip_box() -> Aabb {
        Aabb::new(Vec3::splat(-2.0), Vec3::splat(2.0))
    }

    fn check_vertices_equidistant(cell: &VoronoiCell, seeds: &SeedIndex) {
        for (vi, v) in cell.vertices.iter().enumerate() {
            let d0 = v.distance(cell.site);
            let mut planes = 0;
            for f in cell.faces.iter().filter(|f| f.vertices.contains(&vi)) {
                planes += 1;
                match f.neighbor {
                    FaceNeighbor::Seed(j) => assert!((v.distance(seeds.positions[j]) - d0).abs() < 1e-9 * (1.0 + d0)),
                    FaceNeighbor::Boundary => assert!((f.normal.dot(*v) - f.offset).abs() < 1e-9),
                }
            }
            assert!(planes >= 3);
        }
        for f in &cell.faces {
            for &v in &f.vertices {
                assert!((f.normal.dot(cell.vertices[v]) - f.offset).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn two_seeds_split_the_box() {
        let s = SeedIndex::from_points(&[Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)]).unwrap();
        let cells = compute_cells(&s, &clip_box()).unwrap();
        for c in &cells {
            assert_eq!(c.faces.len(), 6);
            assert!((c.volume() - 32.0).abs() < 1e-12);
            let shared: Vec<_> = c
                .faces
                .iter()
                .filter(|f| f.neighbor != FaceNeighbor::Boundary)
                .collect();
            assert_eq!(shared.len(), 1);
            assert!(shared[0].offset.abs() < 1e-15);
            for &v in &shared[0].vertices {
                assert_eq!(c.vertices[v].x, 0.0);
            }
            check_vertices_equidistant(c, &s);
        }
        assert_eq!(cells[0].faces.iter().find_map(|f| f.neighbor.seed()), Some(1));
    }

    #[test]
    fn octant_seeds_meet_at_origin() {
        let pts: Vec<Vec3> = (0..8)
            .map(|c| {
                Vec3::new(
                    if c & 1 != 0 { 1.0 } else { -1.0 },
                    if c & 2 != 0 { 1.0 } else { -1.0 },
                    if c & 4 != 0 { 1.0 } else { -1.0 },
                )
            })
            .collect();
        let s = SeedIndex::from_points(&pts).unwrap();
        let cells = compute_cells(&s, &clip_box()).unwrap();
        for c in &cells {
            assert_eq!(c.vertices.len(), 8);
            assert_eq!(c.faces.len(), 6);
            assert!((c.volume() - 8.0).abs() < 1e-12);
            assert!(c.vertices.iter().any(|v| v.norm() < 1e-15));
            check_vertices_equidistant(c, &s);
        }
        let kinds = vec![SeedKind::Interior; 8];
        let p = pairing(&cells, &kinds);
        assert!(p.complete());
        assert_eq!(p.internal_faces, 24);
        let mesh = VolumeMesh::from_cells(&cells, &kinds, 1e-9, |_| true);
        assert_eq!(mesh.vertices.len(), 27);
        assert_eq!(mesh.faces.len(), 12 + 24);
        assert!((mesh.total_volume() - 64.0).abs() < 1e-12);
    }

    fn random_seeds(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect()
    }

    fn brute_nearest(pts: &[Vec3], q: Vec3) -> (usize, f64, f64) {
        let mut d: Vec<(f64, usize)> = pts.iter().enumerate().map(|(i, p)| (p.distance(q), i)).collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (d[0].1, d[0].0, d[1].0)
    }

    #[test]
    fn random_cells_agree_with_nearest_seed() {
        let pts = random_seeds(200, 7);
        let s = SeedIndex::from_points(&pts).unwrap();
        let cells = compute_cells(&s, &clip_box()).unwrap();
        let total: f64 = cells.iter().map(|c| c.volume()).sum();
        assert!((total - 64.0).abs() < 1e-9);
        for c in &cells {
            check_vertices_equidistant(c, &s);
        }
        let kinds = vec![SeedKind::Interior; pts.len()];
        assert!(pairing(&cells, &kinds).complete());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let band = 1e-9;
        let mut checked = 0;
        for _ in 0..10_000 {
            let q = Vec3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let (best, d0, d1) = brute_nearest(&pts, q);
            if d1 - d0 < 1e-7 {
                continue;
            }
            let holders: Vec<usize> = cells
                .iter()
                .filter(|c| c.contains(q, band) == Some(true))
                .map(|c| c.seed_id)
                .collect();
            assert_eq!(holders, vec![best]);
            checked += 1;
        }
        assert!(checked > 9_900);
    }

    #[test]
    fn welded_mesh_of_random_cells_is_consistent() {
        let pts = random_seeds(300, 9);
        let s = SeedIndex::from_points(&pts).unwrap();
        let cells = compute_cells(&s, &clip_box()).unwrap();
        let kinds = vec![SeedKind::Interior; pts.len()];
        let mesh = VolumeMesh::from_cells(&cells, &kinds, 1e-9, |_| true);
        assert!((mesh.total_volume() - 64.0).abs() < 1e-9);
        // Every undirected edge is used by exactly two faces of each cell,
        // once in each direction.
        for c in &mesh.cells {
            let mut dir: HashMap<(usize, usize), i32> = HashMap::new();
            for &f in &c.faces {
                let l = mesh.oriented_face(c, f);
                for k in 0..l.len() {
                    let (a, b) = (l[k], l[(k + 1) % l.len()]);
                    *dir.entry((a.min(b), a.max(b))).or_default() += if a < b { 1 } else { -1 };
                }
            }
            assert!(dir.values().all(|&v| v == 0));
        }
    }

    #[test]
    fn cells_far_from_dense_cluster_use_the_security_radius() {
        // A dense cluster plus a few outliers: the outlier cells are large
        // and hit the clip box.
        let mut pts = random_seeds(400, 3);
        for p in &mut pts {
            *p = *p * 0.1;
        }
        pts.push(Vec3::new(1.5, 0.0, 0.0));
        pts.push(Vec3::new(-1.5, 1.5, 0.0));
        let s = SeedIndex::from_points(&pts).unwrap();
        let cells = compute_cells(&s, &clip_box()).unwrap();
        let total: f64 = cells.iter().map(|c| c.volume()).sum();
        assert!((total - 64.0).abs() < 1e-9);
        for c in &cells {
            check_vertices_equidistant(c, &s);
        }
    }

    #[test]
    fn duplicate_and_misnumbered_seeds_are_rejected() {
        let p = Vec3::new(0.1, 0.2, 0.3);
        assert_eq!(
            SeedIndex::from_points(&[p, Vec3::ZERO, p]).unwrap_err(),
            VoronoiError::DuplicateSeeds(0, 2)
        );
        let seeds = [Seed {
            id: 4,
            position: p,
            kind: SeedKind::Upper,
            origin: SeedOrigin::Leaf(0),
        }];
        assert!(matches!(
            SeedIndex::new(&seeds),
            Err(VoronoiError::SeedIds { at: 0, found: 4 })
        ));
    }

    #[test]
    fn seed_outside_box_gives_empty_cell() {
        let s = SeedIndex::from_points(&[Vec3::new(5.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(
            compute_cell(0, &s, &clip_box()).unwrap_err(),
            VoronoiError::EmptyCell(0)
        );
    }

    #[test]
    fn interior_cell_must_be_bounded() {
        let seeds: Vec<Seed> = [(-1.0, SeedKind::Upper), (1.0, SeedKind::Lower)]
            .iter()
            .enumerate()
            .map(|(id, &(x, kind))| Seed {
                id,
                position: Vec3::new(x, 0.0, 0.0),
                kind,
                origin: SeedOrigin::Leaf(id),
            })
            .collect();
        assert!(matches!(
            compute_mesh(&seeds, &clip_box()),
            Err(VoronoiError::UnboundedCell {
                seed: 1,
                kind: SeedKind::Lower
            })
        ));
    }

    #[test]
    fn sliver_gives_a_steiner_vertex() {
        let (spec, idx) = crate::ball_union::tests::sliver_fixture();
        let mut g = enumerate_guides(&idx, &spec).unwrap();
        classify_coverage(&mut g, &idx);
        let seeds = place_surface_seeds(&g, &idx).seeds;
        assert_eq!(seeds.len(), 4);
        let index = SeedIndex::new(&seeds).unwrap();
        let b = Aabb::from_points(idx.balls.iter().map(|b| &b.center)).inflate(5.0);
        let cells = compute_cells(&index, &b).unwrap();
        let mesh = VolumeMesh::from_cells(&cells, &index.kinds, weld_tolerance(&b), |_| true);
        let samples = SampleSet::from_points(
            &idx.balls
                .iter()
                .zip(&idx.normals)
                .map(|(b, n)| crate::surface::SurfacePoint {
                    position: b.center,
                    normal: *n,
                    lfs: 100.0,
                })
                .collect::<Vec<_>>(),
            0.01,
            0.75,
            0.01,
            0,
        );
        let recon = extract_surface(&mesh, &index.kinds, &samples);
        assert!(!recon.facets.is_empty());
        let steiner: Vec<Vec3> = recon
            .vertices
            .iter()
            .zip(&recon.origins)
            .filter(|(_, o)| **o == VertexOrigin::Steiner)
            .map(|(v, _)| *v)
            .collect();
        // The circumcenter of the four seeds.
        let center = steiner
            .iter()
            .copied()
            .find(|v| {
                let d: Vec<f64> = seeds.iter().map(|s| v.distance(s.position)).collect();
                d.iter().all(|x| (x - d[0]).abs() < 1e-9 * d[0])
            })
            .expect("no vertex equidistant to all four seeds");
        let d0 = center.distance(seeds[0].position);
        for s in &seeds {
            assert!((center.distance(s.position) - d0).abs() < 1e-10 * d0);
        }
    }

    #[test]
    fn surface_is_empty_without_both_sides() {
        let s = SeedIndex::from_points(&[Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)]).unwrap();
        let cells = compute_cells(&s, &clip_box()).unwrap();
        let kinds = vec![SeedKind::Lower, SeedKind::Lower];
        let mesh = VolumeMesh::from_cells(&cells, &kinds, 1e-9, |_| true);
        let samples = SampleSet::from_points(&[], 0.1, 0.75, 0.2, 0);
        assert!(extract_surface(&mesh, &kinds, &samples).facets.is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn cells_tile_the_box(seed in 0u64..1000, n in 2usize..60) {
            let pts = random_seeds(n, seed);
            let s = SeedIndex::from_points(&pts).unwrap();
            let cells = compute_cells(&s, &clip_box()).unwrap();
            let total: f64 = cells.iter().map(|c| c.volume()).sum();
            prop_assert!((total - 64.0).abs() < 1e-9);
            prop_assert!(pairing(&cells, &vec![SeedKind::Interior; n]).complete());
        }
    }
}
