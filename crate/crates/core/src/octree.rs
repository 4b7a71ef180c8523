//! Graded octree over the enclosed volume and the interior seeds placed at
//! the centers of its empty leaves.
//!
//! Sizing inside the volume uses the 1-Lipschitz extension of the sample
//! lfs values, `min_i (lfs_i + ‖x − p_i‖)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ball_union::{BallIndex, Seed, SeedKind, SeedOrigin};
use crate::geom::{Aabb, Vec3};
use crate::sampler::SampleSet;
use crate::spatial::KdTree;
use crate::surface::{Side, SurfaceSpec};

pub const DEFAULT_DEPTH_CAP: u32 = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OctreeError {
    #[error("octree refinement exceeded depth {cap} near {at}")]
    DepthCapExceeded { cap: u32, at: Vec3 },
}

/// Lipschitz extension of the sample lfs values to all of space.
#[derive(Clone, Debug)]
pub struct SizingField {
    tree: KdTree,
}

impl SizingField {
    pub fn new(s: &SampleSet) -> Self {
        let lfs: Vec<f64> = s.samples.iter().map(|p| p.lfs).collect();
        SizingField {
            tree: KdTree::with_weights(&s.positions(), &lfs),
        }
    }

    pub fn value(&self, x: Vec3) -> f64 {
        self.tree.weighted_nearest(x).map_or(f64::INFINITY, |(_, v)| v)
    }
}

/// One-off evaluation; build a [`SizingField`] for repeated queries.
pub fn lfs_extended(x: Vec3, s: &SampleSet) -> f64 {
    s.samples
        .iter()
        .map(|p| p.lfs + x.distance(p.position))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OctreeBox {
    pub center: Vec3,
    pub half_width: f64,
    pub depth: u32,
    /// Index of the first of eight consecutive children.
    pub children: Option<u32>,
    pub contains_surface_seed: bool,
}

impl OctreeBox {
    /// Circumradius, `half_width·√3`.
    pub fn radius(&self) -> f64 {
        self.half_width * 3f64.sqrt()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::cube(self.center, self.half_width)
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct Octree {
    nodes: Vec<OctreeBox>,
    /// Node indices of the leaves in depth-first child order.
    leaves: Vec<usize>,
}

impl Octree {
    /// Refines a cube while `split(center, half_width, depth)` holds. The
    /// root is always split once.
    pub fn build_with(
        root: Aabb,
        depth_cap: u32,
        split: impl Fn(Vec3, f64, u32) -> bool + Sync,
    ) -> Result<Octree, OctreeError> {
        let cube = root.bounding_cube();
        let mut nodes = vec![OctreeBox {
            center: cube.center(),
            half_width: 0.5 * cube.extent().x,
            depth: 0,
            children: None,
            contains_surface_seed: false,
        }];
        let mut frontier = vec![0usize];
        while !frontier.is_empty() {
            let decisions: Vec<bool> = frontier
                .par_iter()
                .map(|&n| {
                    let b = &nodes[n];
                    b.depth == 0 || split(b.center, b.half_width, b.depth)
                })
                .collect();
            let mut next = Vec::new();
            for (&n, refine) in frontier.iter().zip(decisions) {
                if !refine {
                    continue;
                }
                let b = nodes[n];
                if b.depth >= depth_cap {
                    return Err(OctreeError::DepthCapExceeded {
                        cap: depth_cap,
                        at: b.center,
                    });
                }
                let first = nodes.len();
                nodes[n].children = Some(first as u32);
                let h = 0.5 * b.half_width;
                for c in 0..8 {
                    let off = Vec3::new(
                        if c & 1 != 0 { h } else { -h },
                        if c & 2 != 0 { h } else { -h },
                        if c & 4 != 0 { h } else { -h },
                    );
                    nodes.push(OctreeBox {
                        center: b.center + off,
                        half_width: h,
                        depth: b.depth + 1,
                        children: None,
                        contains_surface_seed: false,
                    });
                    next.push(first + c);
                }
            }
            frontier = next;
        }
        let mut leaves = Vec::new();
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            match nodes[n].children {
                Some(first) => {
                    for c in (0..8).rev() {
                        stack.push(first as usize + c);
                    }
                }
                None => leaves.push(n),
            }
        }
        Ok(Octree { nodes, leaves })
    }

    pub fn root(&self) -> &OctreeBox {
        &self.nodes[0]
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &OctreeBox> + '_ {
        self.leaves.iter().map(move |&n| &self.nodes[n])
    }

    pub fn leaf(&self, k: usize) -> &OctreeBox {
        &self.nodes[self.leaves[k]]
    }

    /// The leaf containing `p`, or `None` outside the root cube.
    pub fn locate(&self, p: Vec3) -> Option<&OctreeBox> {
        if !self.root().bounds().contains(p) {
            return None;
        }
        let mut n = 0;
        while let Some(first) = self.nodes[n].children {
            let c = self.nodes[n].center;
            let k = (p.x >= c.x) as usize | ((p.y >= c.y) as usize) << 1 | ((p.z >= c.z) as usize) << 2;
            n = first as usize + k;
        }
        Some(&self.nodes[n])
    }

    pub fn max_depth(&self) -> u32 {
        self.leaves().map(|l| l.depth).max().unwrap_or(0)
    }
}

/// Cube around the samples, inflated by twice the largest ball radius.
pub fn root_box(s: &SampleSet) -> Aabb {
    let margin = 2.0 * s.samples.iter().map(|p| p.radius).fold(0.0, f64::max);
    Aabb::from_points(s.samples.iter().map(|p| &p.position))
        .inflate(margin)
        .bounding_cube()
}

/// Refines until every leaf diagonal is at most `2 δ` times the sizing
/// value at its center.
pub fn build_octree(sizing: &SizingField, delta: f64, root: Aabb, depth_cap: u32) -> Result<Octree, OctreeError> {
    Octree::build_with(root, depth_cap, |c, h, _| h * 3f64.sqrt() > delta * sizing.value(c))
}

/// Interior seeds at the centers of leaves that hold no surface seed, lie
/// inside the surface, and (unless allowed) lie outside the ball union.
/// Leaves holding a surface seed are flagged.
pub fn place_interior_seeds(
    octree: &mut Octree,
    surface_seeds: &KdTree,
    idx: &BallIndex,
    spec: &SurfaceSpec,
    allow_in_union: bool,
    first_id: usize,
) -> Vec<Seed> {
    let flags: Vec<(bool, bool)> = octree
        .leaves
        .par_iter()
        .map(|&n| {
            let b = &octree.nodes[n];
            let occupied = !surface_seeds.within_box(&b.bounds()).is_empty();
            let eligible =
                !occupied && spec.signed_side(b.center) == Side::Inside && (allow_in_union || !idx.covers(b.center));
            (occupied, eligible)
        })
        .collect();
    let mut seeds = Vec::new();
    for (k, (&n, (occupied, eligible))) in octree.leaves.iter().zip(flags).enumerate() {
        octree.nodes[n].contains_surface_seed = occupied;
        if eligible {
            seeds.push(Seed {
                id: first_id + seeds.len(),
                position: octree.nodes[n].center,
                kind: SeedKind::Interior,
                origin: SeedOrigin::Leaf(k),
            });
        }
    }
    seeds
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub ok: bool,
    /// Largest half-width ratio between leaves sharing a corner.
    pub worst_ratio: f64,
}

/// Half-width ratios of leaves meeting at leaf corners, found by probing
/// just around every corner.
pub fn verify_box_balance(octree: &Octree) -> BalanceReport {
    let worst = octree
        .leaves()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|leaf| {
            let h = leaf.half_width;
            let step = 1e-3 * h;
            let mut worst: f64 = 1.0;
            for c in 0..8 {
                let corner = leaf.center
                    + Vec3::new(
                        if c & 1 != 0 { h } else { -h },
                        if c & 2 != 0 { h } else { -h },
                        if c & 4 != 0 { h } else { -h },
                    );
                for o in 0..8 {
                    let p = corner
                        + Vec3::new(
                            if o & 1 != 0 { step } else { -step },
                            if o & 2 != 0 { step } else { -step },
                            if o & 4 != 0 { step } else { -step },
                        );
                    if let Some(other) = octree.locate(p) {
                        let r = other.half_width / h;
                        worst = worst.max(r.max(1.0 / r));
                    }
                }
            }
            worst
        })
        .reduce(|| 1.0, f64::max);
    BalanceReport {
        ok: worst <= 2.0,
        worst_ratio: worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ball_union::build_ball_index;
    use crate::sampler::generate_sample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_cube() -> Aabb {
        Aabb::new(Vec3::ZERO, Vec3::splat(1.0))
    }

    fn constant(delta: f64) -> impl Fn(Vec3, f64, u32) -> bool + Sync {
        move |_, h, _| h * 3f64.sqrt() > delta
    }

    #[test]
    fn uniform_refinement_depths() {
        let t = Octree::build_with(unit_cube(), DEFAULT_DEPTH_CAP, constant(0.1)).unwrap();
        assert_eq!(t.leaf_count(), 4096);
        assert!(t.leaves().all(|l| l.depth == 4));
        let t = Octree::build_with(unit_cube(), DEFAULT_DEPTH_CAP, constant(0.9)).unwrap();
        assert_eq!(t.leaf_count(), 8);
        assert!(t.leaves().all(|l| l.depth == 1));
        let b = verify_box_balance(&t);
        assert!(b.ok && b.worst_ratio == 1.0);
    }

    #[test]
    fn depth_cap_is_enforced() {
        let r = Octree::build_with(unit_cube(), 5, |_, _, _| true);
        assert!(matches!(r, Err(OctreeError::DepthCapExceeded { cap: 5, .. })));
    }

    #[test]
    fn unbalanced_tree_is_rejected() {
        // One octant refined uniformly to depth 4, the rest left at depth 1.
        let t = Octree::build_with(unit_cube(), 10, |c, _, d| d < 4 && c.max_element() < 0.5).unwrap();
        let b = verify_box_balance(&t);
        assert!(!b.ok && b.worst_ratio >= 4.0);
    }

    #[test]
    fn locate_finds_containing_leaf() {
        let t = Octree::build_with(unit_cube(), 10, |c, h, d| d < 5 && c.norm() < 3.0 * h).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let p = Vec3::new(rng.gen(), rng.gen(), rng.gen());
            assert!(t.locate(p).unwrap().bounds().contains(p));
        }
        assert!(t.locate(Vec3::splat(2.0)).is_none());
    }

    #[test]
    fn sizing_field_examples() {
        let spec = SurfaceSpec::sphere(1.0).unwrap();
        let s = generate_sample(&spec, 0.1, 0.75, 1).unwrap();
        let f = SizingField::new(&s);
        assert_eq!(f.value(s.samples[3].position), s.samples[3].lfs);
        assert!((f.value(Vec3::ZERO) - 2.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let x = Vec3::new(
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
            );
            assert_eq!(f.value(x), lfs_extended(x, &s));
        }
    }

    #[test]
    fn sphere_octree_bands_and_seeds() {
        let spec = SurfaceSpec::sphere(1.0).unwrap();
        let s = generate_sample(&spec, 0.1, 0.75, 5).unwrap();
        let delta = s.delta;
        let f = SizingField::new(&s);
        let mut t = build_octree(&f, delta, root_box(&s), DEFAULT_DEPTH_CAP).unwrap();
        for l in t.leaves() {
            let lfs = f.value(l.center);
            assert!(l.radius() <= delta * lfs);
            assert!(l.radius() >= delta / (2.0 + delta) * lfs);
        }
        assert!(verify_box_balance(&t).ok);

        let idx = build_ball_index(&s);
        let probe = KdTree::new(&[Vec3::new(0.0, 0.0, 0.0)]);
        let seeds = place_interior_seeds(&mut t, &probe, &idx, &spec, false, 100);
        assert!(!seeds.is_empty());
        assert_eq!(seeds[0].id, 100);
        for sd in &seeds {
            assert_eq!(spec.signed_side(sd.position), Side::Inside);
            assert!(!idx.covers(sd.position));
            assert!(!t.locate(sd.position).unwrap().bounds().contains(Vec3::ZERO));
        }
        // The leaf holding the fake surface seed is flagged and seedless.
        let holder = t.locate(Vec3::ZERO).unwrap();
        assert!(holder.contains_surface_seed);
        let n_flagged = t.leaves().filter(|l| l.contains_surface_seed).count();
        assert!(n_flagged >= 1);
        // Distinct leaf centers are separated by at least the smaller side.
        for (a, sa) in seeds.iter().enumerate().step_by(13) {
            let la = t.locate(sa.position).unwrap();
            for sb in &seeds[a + 1..] {
                let lb = t.locate(sb.position).unwrap();
                let side = 2.0 * la.half_width.min(lb.half_width);
                assert!(sa.position.distance(sb.position) >= side - 1e-12);
            }
        }
    }

    #[test]
    fn leaves_outside_surface_get_no_seed() {
        let spec = SurfaceSpec::sphere(1.0).unwrap();
        let s = generate_sample(&spec, 0.1, 0.75, 5).unwrap();
        let f = SizingField::new(&s);
        let mut t = build_octree(&f, s.delta, root_box(&s), DEFAULT_DEPTH_CAP).unwrap();
        let idx = build_ball_index(&s);
        let empty = KdTree::new(&[]);
        let seeds = place_interior_seeds(&mut t, &empty, &idx, &spec, true, 0);
        let inside_leaves = t
            .leaves()
            .filter(|l| spec.signed_side(l.center) == Side::Inside)
            .count();
        assert_eq!(seeds.len(), inside_leaves);
    }
}
