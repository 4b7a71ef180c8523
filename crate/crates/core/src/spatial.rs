//! Static spatial indices: an implicit kd-tree over a frozen point set and a
//! uniform hash grid for incremental insertion.
//!
//! The kd-tree stores each subtree at the median index of its range, so the
//! tree needs no node allocations. Each node also keeps the bounding box and
//! the minimum point weight of its subtree, which lets the same structure
//! answer additively weighted nearest queries `min_i w_i + ‖x − p_i‖`.

use std::collections::HashMap;

use crate::geom::{Aabb, Vec3};

#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Vec3>,
    ids: Vec<usize>,
    weights: Vec<f64>,
    axis: Vec<u8>,
    bbox: Vec<Aabb>,
    min_weight: Vec<f64>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        Self::with_weights(points, &vec![0.0; points.len()])
    }

    pub fn with_weights(points: &[Vec3], weights: &[f64]) -> Self {
        assert_eq!(points.len(), weights.len());
        let n = points.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut axis = vec![0u8; n];
        let mut bbox = vec![Aabb::empty(); n];
        let mut min_weight = vec![0.0; n];
        build(points, weights, &mut perm, 0, &mut axis, &mut bbox, &mut min_weight);
        KdTree {
            points: perm.iter().map(|&i| points[i]).collect(),
            weights: perm.iter().map(|&i| weights[i]).collect(),
            ids: perm,
            axis,
            bbox,
            min_weight,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest point as `(id, squared distance)`; ties go to the smaller id.
    pub fn nearest(&self, q: Vec3) -> Option<(usize, f64)> {
        if self.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(q, 0, self.len(), &mut best);
        Some(best)
    }

    fn nearest_rec(&self, q: Vec3, lo: usize, hi: usize, best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        if self.bbox[mid].distance_squared(q) > best.1 {
            return;
        }
        let d2 = self.points[mid].distance_squared(q);
        let id = self.ids[mid];
        if d2 < best.1 || (d2 == best.1 && id < best.0) {
            *best = (id, d2);
        }
        let ax = self.axis[mid] as usize;
        if q[ax] < self.points[mid][ax] {
            self.nearest_rec(q, lo, mid, best);
            self.nearest_rec(q, mid + 1, hi, best);
        } else {
            self.nearest_rec(q, mid + 1, hi, best);
            self.nearest_rec(q, lo, mid, best);
        }
    }

    /// The `k` nearest points sorted by `(squared distance, id)`.
    pub fn k_nearest(&self, q: Vec3, k: usize) -> Vec<(usize, f64)> {
        let mut heap: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        if k > 0 {
            self.knn_rec(q, k, 0, self.len(), &mut heap);
        }
        heap
    }

    fn knn_rec(&self, q: Vec3, k: usize, lo: usize, hi: usize, out: &mut Vec<(usize, f64)>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let bound = if out.len() == k { out[k - 1].1 } else { f64::INFINITY };
        if self.bbox[mid].distance_squared(q) > bound {
            return;
        }
        let cand = (self.ids[mid], self.points[mid].distance_squared(q));
        let before = |a: &(usize, f64), b: &(usize, f64)| a.1 < b.1 || (a.1 == b.1 && a.0 < b.0);
        if out.len() < k || before(&cand, &out[k - 1]) {
            let pos = out.partition_point(|e| before(e, &cand));
            out.insert(pos, cand);
            out.truncate(k);
        }
        let ax = self.axis[mid] as usize;
        if q[ax] < self.points[mid][ax] {
            self.knn_rec(q, k, lo, mid, out);
            self.knn_rec(q, k, mid + 1, hi, out);
        } else {
            self.knn_rec(q, k, mid + 1, hi, out);
            self.knn_rec(q, k, lo, mid, out);
        }
    }

    /// All points with `‖p − q‖ ≤ r`, as `(id, squared distance)` in
    /// unspecified order.
    pub fn within_radius(&self, q: Vec3, r: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        self.for_each_within(q, r, |id, d2| out.push((id, d2)));
        out
    }

    pub fn for_each_within(&self, q: Vec3, r: f64, mut f: impl FnMut(usize, f64)) {
        let r2 = r * r;
        self.within_rec(q, r2, 0, self.len(), &mut f);
    }

    fn within_rec(&self, q: Vec3, r2: f64, lo: usize, hi: usize, f: &mut impl FnMut(usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        if self.bbox[mid].distance_squared(q) > r2 {
            return;
        }
        let d2 = self.points[mid].distance_squared(q);
        if d2 <= r2 {
            f(self.ids[mid], d2);
        }
        self.within_rec(q, r2, lo, mid, f);
        self.within_rec(q, r2, mid + 1, hi, f);
    }

    /// True if some point satisfies `pred(id, squared distance)` within radius `r`.
    pub fn any_within(&self, q: Vec3, r: f64, mut pred: impl FnMut(usize, f64) -> bool) -> bool {
        self.any_rec(q, r * r, 0, self.len(), &mut pred)
    }

    fn any_rec(&self, q: Vec3, r2: f64, lo: usize, hi: usize, pred: &mut impl FnMut(usize, f64) -> bool) -> bool {
        if lo >= hi {
            return false;
        }
        let mid = (lo + hi) / 2;
        if self.bbox[mid].distance_squared(q) > r2 {
            return false;
        }
        let d2 = self.points[mid].distance_squared(q);
        if d2 <= r2 && pred(self.ids[mid], d2) {
            return true;
        }
        self.any_rec(q, r2, lo, mid, pred) || self.any_rec(q, r2, mid + 1, hi, pred)
    }

    /// Ids of points inside the closed box.
    pub fn within_box(&self, b: &Aabb) -> Vec<usize> {
        let mut out = Vec::new();
        self.box_rec(b, 0, self.len(), &mut out);
        out
    }

    fn box_rec(&self, b: &Aabb, lo: usize, hi: usize, out: &mut Vec<usize>) {
        if lo >= hi || !self.bbox[(lo + hi) / 2].intersects(b) {
            return;
        }
        let mid = (lo + hi) / 2;
        if b.contains(self.points[mid]) {
            out.push(self.ids[mid]);
        }
        self.box_rec(b, lo, mid, out);
        self.box_rec(b, mid + 1, hi, out);
    }

    /// `min_i (w_i + ‖q − p_i‖)` together with the minimizing id.
    pub fn weighted_nearest(&self, q: Vec3) -> Option<(usize, f64)> {
        if self.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.weighted_rec(q, 0, self.len(), &mut best);
        Some(best)
    }

    fn weighted_rec(&self, q: Vec3, lo: usize, hi: usize, best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        if self.bbox[mid].distance_squared(q).sqrt() + self.min_weight[mid] > best.1 {
            return;
        }
        let v = self.weights[mid] + self.points[mid].distance(q);
        let id = self.ids[mid];
        if v < best.1 || (v == best.1 && id < best.0) {
            *best = (id, v);
        }
        let ax = self.axis[mid] as usize;
        if q[ax] < self.points[mid][ax] {
            self.weighted_rec(q, lo, mid, best);
            self.weighted_rec(q, mid + 1, hi, best);
        } else {
            self.weighted_rec(q, mid + 1, hi, best);
            self.weighted_rec(q, lo, mid, best);
        }
    }
}

fn build(
    points: &[Vec3],
    weights: &[f64],
    perm: &mut [usize],
    offset: usize,
    axis: &mut [u8],
    bbox: &mut [Aabb],
    min_weight: &mut [f64],
) {
    if perm.is_empty() {
        return;
    }
    let b = Aabb::from_points(perm.iter().map(|&i| &points[i]));
    let ext = b.extent();
    let ax = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = perm.len() / 2;
    perm.select_nth_unstable_by(mid, |&a, &c| points[a][ax].total_cmp(&points[c][ax]).then(a.cmp(&c)));
    let g = offset + mid;
    axis[g] = ax as u8;
    bbox[g] = b;
    min_weight[g] = perm.iter().map(|&i| weights[i]).fold(f64::INFINITY, f64::min);
    let (left, rest) = perm.split_at_mut(mid);
    build(points, weights, left, offset, axis, bbox, min_weight);
    build(points, weights, &mut rest[1..], g + 1, axis, bbox, min_weight);
}

/// Uniform hash grid mapping cells to the ids inserted into them.
#[derive(Clone, Debug)]
pub struct HashGrid {
    cell: f64,
    map: HashMap<[i64; 3], Vec<usize>>,
}

impl HashGrid {
    pub fn new(cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell size must be positive");
        HashGrid {
            cell,
            map: HashMap::new(),
        }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    #[inline]
    pub fn key(&self, p: Vec3) -> [i64; 3] {
        [
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
            (p.z / self.cell).floor() as i64,
        ]
    }

    pub fn insert(&mut self, id: usize, p: Vec3) {
        self.map.entry(self.key(p)).or_default().push(id);
    }

    /// Visits every id whose cell lies within `rings` cells of `p`'s cell.
    pub fn for_each_near(&self, p: Vec3, rings: i64, mut f: impl FnMut(usize)) {
        let k = self.key(p);
        for dx in -rings..=rings {
            for dy in -rings..=rings {
                for dz in -rings..=rings {
                    if let Some(v) = self.map.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &id in v {
                            f(id);
                        }
                    }
                }
            }
        }
    }

    /// Visits the ids in the shell of cells at Chebyshev ring distance exactly `ring`.
    pub fn for_each_in_ring(&self, p: Vec3, ring: i64, mut f: impl FnMut(usize)) {
        let k = self.key(p);
        for dx in -ring..=ring {
            for dy in -ring..=ring {
                for dz in -ring..=ring {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                        continue;
                    }
                    if let Some(v) = self.map.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &id in v {
                            f(id);
                        }
                    }
                }
            }
        }
    }

    /// Nearest inserted point to `p`, searching outward ring by ring.
    pub fn nearest(&self, p: Vec3, positions: &[Vec3]) -> Option<(usize, f64)> {
        if self.map.is_empty() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        let mut ring = 0;
        loop {
            self.for_each_in_ring(p, ring, |id| {
                let d2 = positions[id].distance_squared(p);
                if best.is_none_or(|(bi, bd)| d2 < bd || (d2 == bd && id < bi)) {
                    best = Some((id, d2));
                }
            });
            // Every point outside the searched rings is at least `ring * cell` away.
            let reach = ring as f64 * self.cell;
            if let Some((_, d2)) = best {
                if d2 <= reach * reach {
                    return best;
                }
            }
            ring += 1;
            if ring > 64 {
                // Sparse grid: fall back to a full scan.
                let mut all = best;
                for v in self.map.values() {
                    for &id in v {
                        let d2 = positions[id].distance_squared(p);
                        if all.is_none_or(|(bi, bd)| d2 < bd || (d2 == bd && id < bi)) {
                            all = Some((id, d2));
                        }
                    }
                }
                return all;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<Vec3> {
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

    #[test]
    fn nearest_matches_brute_force() {
        let pts = cloud(500, 1);
        let tree = KdTree::new(&pts);
        for q in cloud(300, 2) {
            let (id, d2) = tree.nearest(q).unwrap();
            let best = pts.iter().map(|p| p.distance_squared(q)).fold(f64::INFINITY, f64::min);
            assert_eq!(d2, best);
            assert_eq!(pts[id].distance_squared(q), best);
        }
    }

    #[test]
    fn k_nearest_matches_sorted_scan() {
        let pts = cloud(400, 3);
        let tree = KdTree::new(&pts);
        for q in cloud(50, 4) {
            let mut all: Vec<(usize, f64)> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, p.distance_squared(q)))
                .collect();
            all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            assert_eq!(tree.k_nearest(q, 17), all[..17].to_vec());
        }
    }

    #[test]
    fn radius_and_box_queries_match_brute_force() {
        let pts = cloud(600, 5);
        let tree = KdTree::new(&pts);
        for q in cloud(40, 6) {
            let mut got: Vec<usize> = tree.within_radius(q, 0.3).into_iter().map(|x| x.0).collect();
            got.sort_unstable();
            let want: Vec<usize> = (0..pts.len()).filter(|&i| pts[i].distance(q) <= 0.3).collect();
            assert_eq!(got, want);
            let b = Aabb::cube(q, 0.2);
            let mut got = tree.within_box(&b);
            got.sort_unstable();
            let want: Vec<usize> = (0..pts.len()).filter(|&i| b.contains(pts[i])).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn weighted_nearest_matches_brute_force() {
        let pts = cloud(500, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w: Vec<f64> = (0..pts.len()).map(|_| rng.gen_range(0.0..0.5)).collect();
        let tree = KdTree::with_weights(&pts, &w);
        for q in cloud(200, 9) {
            let want = (0..pts.len())
                .map(|i| w[i] + pts[i].distance(q))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(tree.weighted_nearest(q).unwrap().1, want);
        }
    }

    #[test]
    fn grid_nearest_matches_brute_force() {
        let pts = cloud(300, 10);
        let mut grid = HashGrid::new(0.1);
        for (i, p) in pts.iter().enumerate() {
            grid.insert(i, *p);
        }
        for q in cloud(100, 11) {
            let best = pts.iter().map(|p| p.distance_squared(q)).fold(f64::INFINITY, f64::min);
            assert_eq!(grid.nearest(q, &pts).unwrap().1, best);
        }
    }

    #[test]
    fn empty_tree() {
        let tree = KdTree::new(&[]);
        assert!(tree.nearest(Vec3::ZERO).is_none());
        assert!(tree.k_nearest(Vec3::ZERO, 3).is_empty());
    }
}
