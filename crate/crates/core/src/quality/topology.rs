//! Combinatorial checks on a polygonal surface.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::voronoi::ReconSurface;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceTopology {
    pub vertices: usize,
    pub edges: usize,
    pub facets: usize,
    /// Every edge lies on exactly two facets.
    pub watertight: bool,
    /// Every vertex's facets form a single fan closing into one cycle.
    pub manifold: bool,
    /// Each two-facet edge is traversed once in each direction.
    pub oriented: bool,
    pub components: usize,
    pub euler: i64,
    /// `(2 − χ)/2` for a closed oriented manifold with one component.
    pub genus: Option<i64>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub fn surface_topology(recon: &ReconSurface) -> SurfaceTopology {
    let loops: Vec<&[usize]> = recon.facets.iter().map(|f| f.vertices.as_slice()).collect();
    loop_topology(recon.vertices.len(), &loops)
}

/// Topology of facets given as vertex loops over `0..n_vertices`. Only
/// vertices used by some facet are counted.
pub fn loop_topology(n_vertices: usize, loops: &[&[usize]]) -> SurfaceTopology {
    // (count, forward − backward) per undirected edge.
    let mut edges: HashMap<(usize, usize), (usize, i64)> = HashMap::new();
    let mut used = vec![false; n_vertices];
    // Per vertex: the (previous, next) neighbors in each incident facet.
    let mut wedges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_vertices];
    let mut parent: Vec<usize> = (0..n_vertices).collect();
    for l in loops {
        let m = l.len();
        for k in 0..m {
            let (a, b) = (l[k], l[(k + 1) % m]);
            used[a] = true;
            let e = edges.entry((a.min(b), a.max(b))).or_insert((0, 0));
            e.0 += 1;
            e.1 += if a < b { 1 } else { -1 };
            wedges[a].push((l[(k + m - 1) % m], b));
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let watertight = edges.values().all(|&(c, _)| c == 2);
    let oriented = edges.values().all(|&(c, d)| c == 2 && d == 0);
    let manifold = watertight && wedges.iter().all(|w| w.is_empty() || single_cycle(w));
    let vertices = used.iter().filter(|&&u| u).count();
    let components = (0..n_vertices)
        .filter(|&v| used[v] && find(&mut parent, v) == v)
        .count();
    let euler = vertices as i64 - edges.len() as i64 + loops.len() as i64;
    let genus = (watertight && manifold && oriented && components == 1 && euler % 2 == 0).then_some((2 - euler) / 2);
    SurfaceTopology {
        vertices,
        edges: edges.len(),
        facets: loops.len(),
        watertight,
        manifold,
        oriented,
        components,
        euler,
        genus,
    }
}

/// The wedges around a vertex, chained through shared link vertices, form
/// one closed cycle.
fn single_cycle(w: &[(usize, usize)]) -> bool {
    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(p, n) in w {
        adj.entry(p).or_default().push(n);
        adj.entry(n).or_default().push(p);
    }
    if adj.values().any(|v| v.len() != 2) || adj.len() != w.len() {
        return false;
    }
    let start = w[0].0;
    let (mut prev, mut at) = (start, adj[&start][0]);
    let mut steps = 1;
    while at != start {
        let nb = &adj[&at];
        let next = if nb[0] == prev { nb[1] } else { nb[0] };
        prev = at;
        at = next;
        steps += 1;
        if steps > w.len() {
            return false;
        }
    }
    steps == w.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> Vec<Vec<usize>> {
        vec![
            vec![0, 4, 6, 2],
            vec![1, 3, 7, 5],
            vec![0, 1, 5, 4],
            vec![2, 6, 7, 3],
            vec![0, 2, 3, 1],
            vec![4, 5, 7, 6],
        ]
    }

    fn topo(n: usize, l: &[Vec<usize>]) -> SurfaceTopology {
        let loops: Vec<&[usize]> = l.iter().map(|v| v.as_slice()).collect();
        loop_topology(n, &loops)
    }

    #[test]
    fn cube_is_a_sphere() {
        let t = topo(8, &cube());
        assert!(t.watertight && t.manifold && t.oriented);
        assert_eq!((t.vertices, t.edges, t.facets), (8, 12, 6));
        assert_eq!(t.euler, 2);
        assert_eq!(t.genus, Some(0));
        assert_eq!(t.components, 1);
    }

    #[test]
    fn deleting_a_facet_breaks_watertightness() {
        let mut c = cube();
        c.pop();
        let t = topo(8, &c);
        assert!(!t.watertight);
        assert_eq!(t.genus, None);
    }

    #[test]
    fn flipped_facet_is_not_oriented() {
        let mut c = cube();
        c[0].reverse();
        let t = topo(8, &c);
        assert!(t.watertight && !t.oriented);
    }

    fn torus_grid(n: usize, m: usize) -> Vec<Vec<usize>> {
        let id = |i: usize, j: usize| (i % n) * m + (j % m);
        let mut f = Vec::new();
        for i in 0..n {
            for j in 0..m {
                f.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        f
    }

    #[test]
    fn quad_torus_has_genus_one() {
        let t = topo(12, &torus_grid(4, 3));
        assert!(t.watertight && t.manifold && t.oriented);
        assert_eq!(t.euler, 0);
        assert_eq!(t.genus, Some(1));
    }

    #[test]
    fn two_cubes_are_two_components() {
        let mut c = cube();
        c.extend(cube().into_iter().map(|l| l.into_iter().map(|v| v + 8).collect()));
        let t = topo(16, &c);
        assert_eq!(t.components, 2);
        assert_eq!(t.euler, 4);
        assert_eq!(t.genus, None);
    }

    #[test]
    fn cubes_sharing_a_vertex_are_not_manifold() {
        // Second cube glued at vertex 7 only.
        let mut c = cube();
        let map = |v: usize| if v == 0 { 7 } else { v + 8 };
        c.extend(cube().into_iter().map(|l| l.into_iter().map(map).collect()));
        let t = topo(16, &c);
        assert!(t.watertight && !t.manifold);
    }
}
