//! ε-samples with σ-sparsity on analytic surfaces.
//!
//! Generation throws darts uniformly by area and keeps those that respect the
//! sparsity rule, then fills covering gaps at the verifier's own probe
//! points until the verifier passes. The verifiers use a kd-tree, while the
//! generator uses an incremental hash grid.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Ball, Vec3};
use crate::spatial::{HashGrid, KdTree};
use crate::surface::{SurfacePoint, SurfaceSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("invalid sampling parameter: {0}")]
    InvalidParameter(String),
    #[error("sample budget of {cap} points exceeded")]
    BudgetExceeded { cap: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSample {
    pub position: Vec3,
    pub normal: Vec3,
    pub lfs: f64,
    /// Ball radius, `delta * lfs`.
    pub radius: f64,
}

impl SurfaceSample {
    pub fn ball(&self) -> Ball {
        Ball::new(self.position, self.radius)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub samples: Vec<SurfaceSample>,
    pub eps: f64,
    pub sigma: f64,
    pub delta: f64,
    pub rng_seed: u64,
}

impl SampleSet {
    /// Assemble a set from surface points, setting every radius to
    /// `delta * lfs`.
    pub fn from_points(points: &[SurfacePoint], eps: f64, sigma: f64, delta: f64, rng_seed: u64) -> Self {
        SampleSet {
            samples: points
                .iter()
                .map(|p| SurfaceSample {
                    position: p.position,
                    normal: p.normal,
                    lfs: p.lfs,
                    radius: delta * p.lfs,
                })
                .collect(),
            eps,
            sigma,
            delta,
            rng_seed,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.samples.iter().map(|s| s.position).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    /// Generation fails once the set grows past this many samples.
    pub max_samples: usize,
    /// Lower bound on verifier probes.
    pub min_probes: usize,
    /// Darts thrown per unit of `area / (σ ε lfs_min)²`.
    pub dart_factor: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            max_samples: 2_000_000,
            min_probes: 100_000,
            dart_factor: 2.0,
        }
    }
}

/// Probe count used by generation and verification for a set of `n` samples.
pub fn default_probe_count(n: usize, min_probes: usize) -> usize {
    (10 * n).max(min_probes)
}

pub fn check_parameters(eps: f64, sigma: f64) -> Result<(), SampleError> {
    if !(eps > 0.0 && eps <= 0.1) {
        return Err(SampleError::InvalidParameter(format!(
            "eps must lie in (0, 0.1], got {eps}"
        )));
    }
    if !(0.5..=1.0).contains(&sigma) {
        return Err(SampleError::InvalidParameter(format!(
            "sigma must lie in [0.5, 1], got {sigma}"
        )));
    }
    Ok(())
}

pub fn generate_sample(spec: &SurfaceSpec, eps: f64, sigma: f64, rng_seed: u64) -> Result<SampleSet, SampleError> {
    generate_sample_with(spec, eps, sigma, 2.0 * eps, rng_seed, &SamplerConfig::default())
}

pub fn generate_sample_with(
    spec: &SurfaceSpec,
    eps: f64,
    sigma: f64,
    delta: f64,
    rng_seed: u64,
    cfg: &SamplerConfig,
) -> Result<SampleSet, SampleError> {
    check_parameters(eps, sigma)?;
    if !(delta > 0.0 && delta < 1.0 / 3.0) {
        return Err(SampleError::InvalidParameter(format!(
            "delta must lie in (0, 1/3), got {delta}"
        )));
    }
    let mut builder = Builder::new(spec, eps, sigma, cfg.max_samples);

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let spacing = sigma * eps * builder.lfs_min;
    let darts = (cfg.dart_factor * spec.area() / (spacing * spacing)).ceil() as usize;
    for _ in 0..darts {
        let p = spec.random_point(&mut rng);
        if builder.is_sparse_with(&p) {
            builder.push(p)?;
        }
    }

    // One pass with a margin over a denser lattice closes most gaps, so the
    // exact passes below rarely need to repeat with a fresh probe lattice.
    let dense = 2 * default_probe_count(builder.points.len(), cfg.min_probes);
    builder.fill_gaps(&spec.quasi_uniform_points(dense), 0.9 * eps)?;
    // Fill gaps at the verifier's probes until a full pass inserts nothing.
    loop {
        let n_probes = default_probe_count(builder.points.len(), cfg.min_probes);
        if builder.fill_gaps(&spec.quasi_uniform_points(n_probes), eps)? == 0 {
            break;
        }
    }

    Ok(SampleSet::from_points(&builder.points, eps, sigma, delta, rng_seed))
}

struct Builder {
    points: Vec<SurfacePoint>,
    positions: Vec<Vec3>,
    grid: HashGrid,
    sigma_eps: f64,
    lfs_min: f64,
    cap: usize,
}

impl Builder {
    fn new(spec: &SurfaceSpec, eps: f64, sigma: f64, cap: usize) -> Self {
        let lfs_values: Vec<f64> = spec.quasi_uniform_points(20_000).iter().map(|p| p.lfs).collect();
        let lfs_min = lfs_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let lfs_max = lfs_values.iter().cloned().fold(0.0, f64::max);
        Builder {
            points: Vec::new(),
            positions: Vec::new(),
            // Sparsity conflicts lie within σ ε lfs_max < one cell.
            grid: HashGrid::new(eps * lfs_max * 1.05),
            sigma_eps: sigma * eps,
            lfs_min,
            cap,
        }
    }

    fn is_sparse_with(&self, p: &SurfacePoint) -> bool {
        let mut ok = true;
        self.grid.for_each_near(p.position, 1, |id| {
            if ok {
                let q = &self.points[id];
                if q.position.distance(p.position) < self.sigma_eps * q.lfs.min(p.lfs) {
                    ok = false;
                }
            }
        });
        ok
    }

    /// Inserts every probe farther than `reach * lfs` from the current set.
    fn fill_gaps(&mut self, probes: &[SurfacePoint], reach: f64) -> Result<usize, SampleError> {
        let mut inserted = 0;
        for probe in probes {
            let (_, d2) = self
                .grid
                .nearest(probe.position, &self.positions)
                .expect("dart phase leaves at least one sample");
            if d2.sqrt() > reach * probe.lfs && self.is_sparse_with(probe) {
                self.push(*probe)?;
                inserted += 1;
            }
        }
        Ok(inserted)
    }

    fn push(&mut self, p: SurfacePoint) -> Result<(), SampleError> {
        if self.points.len() >= self.cap {
            return Err(SampleError::BudgetExceeded { cap: self.cap });
        }
        self.grid.insert(self.points.len(), p.position);
        self.positions.push(p.position);
        self.points.push(p);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub ok: bool,
    pub worst_ratio: f64,
    pub worst_point: Vec3,
}

/// Covering check at `probe_count` quasi-uniform probes (raised to at least
/// ten per sample).
pub fn verify_covering(s: &SampleSet, spec: &SurfaceSpec, probe_count: usize) -> CoverageReport {
    let probes = spec.quasi_uniform_points(probe_count.max(10 * s.len()));
    covering_at(s, &probes)
}

/// Covering check at explicit probe points.
pub fn covering_at(s: &SampleSet, probes: &[SurfacePoint]) -> CoverageReport {
    if s.is_empty() {
        return CoverageReport {
            ok: probes.is_empty(),
            worst_ratio: f64::INFINITY,
            worst_point: probes.first().map_or(Vec3::ZERO, |p| p.position),
        };
    }
    let tree = KdTree::new(&s.positions());
    let (worst_ratio, idx) = probes
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let (_, d2) = tree.nearest(p.position).expect("non-empty tree");
            (d2.sqrt() / (s.eps * p.lfs), i)
        })
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX),
            |a, b| {
                if a.0 > b.0 || (a.0 == b.0 && a.1 < b.1) {
                    a
                } else {
                    b
                }
            },
        );
    CoverageReport {
        ok: worst_ratio <= 1.0,
        worst_ratio,
        worst_point: probes.get(idx).map_or(Vec3::ZERO, |p| p.position),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub ok: bool,
    /// Violating pairs `(i, j)` with `i < j`, sorted.
    pub violations: Vec<(usize, usize)>,
}

pub fn verify_sparsity(s: &SampleSet) -> SparsityReport {
    let tree = KdTree::new(&s.positions());
    let se = s.sigma * s.eps;
    let mut violations: Vec<(usize, usize)> = s
        .samples
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, a)| {
            let mut local = Vec::new();
            tree.for_each_within(a.position, se * a.lfs, |j, d2| {
                if j > i && d2.sqrt() < se * a.lfs.min(s.samples[j].lfs) {
                    local.push((i, j));
                }
            });
            local
        })
        .collect();
    violations.sort_unstable();
    SparsityReport {
        ok: violations.is_empty(),
        violations,
    }
}
