//! Acceptance run: one PASS/FAIL line per criterion.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vorocrust::ball_union::SeedKind;
use vorocrust::geom::{circumcenter_radius, tri_sphere_intersect, Aabb, Ball, Tolerance};
use vorocrust::io;
use vorocrust::pipeline::{run_pipeline, RunConfig, RunOutput};
use vorocrust::quality::QualityReport;
use vorocrust::spatial::KdTree;
use vorocrust::voronoi::{compute_cell, SeedIndex};
use vorocrust::{SurfaceSpec, Vec3};

struct Outcome {
    failed: usize,
}

impl Outcome {
    fn record(&mut self, id: u32, pass: bool, detail: String) {
        println!("criterion {id:2} {}  {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed += 1;
        }
    }
}

fn timed(cfg: &RunConfig) -> (RunOutput, Duration) {
    let t = Instant::now();
    let run = run_pipeline(cfg).unwrap_or_else(|e| panic!("{} run failed: {e}", cfg.surface));
    (run, t.elapsed())
}

fn pass(r: &QualityReport, names: &[&str]) -> bool {
    names.iter().all(|n| r.check(n).is_some_and(|c| c.pass))
}

fn measured(r: &QualityReport, name: &str) -> f64 {
    r.check(name).map_or(f64::NAN, |c| c.measured)
}

fn bound(r: &QualityReport, name: &str) -> String {
    r.check(name)
        .and_then(|c| c.bound)
        .map_or("vacuous".into(), |b| format!("{b:.4}"))
}

/// Samples farther than `1e-8·lfs` from every reconstruction vertex.
fn unmatched_samples(run: &RunOutput) -> usize {
    let tree = KdTree::new(&run.surface.vertices);
    run.samples
        .samples
        .iter()
        .filter(|s| tree.nearest(s.position).is_none_or(|(_, d2)| d2.sqrt() > 1e-8 * s.lfs))
        .count()
}

fn topology_line(run: &RunOutput) -> String {
    let t = &run.report.topology;
    format!(
        "watertight={} manifold={} components={} euler={}",
        t.watertight, t.manifold, t.components, t.euler
    )
}

/// Random queries in `clip`; the clipped cell of the brute-force nearest
/// seed must contain each query and the runner-up's cell must not. Queries
/// within the tolerance band of a bisector are skipped. Returns
/// (agreeing, tested).
fn oracle_agreement(points: &[Vec3], clip: &Aabb, queries: usize, seed: u64) -> (usize, usize) {
    let index = SeedIndex::from_points(points).expect("distinct seeds");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, ext) = (clip.min, clip.max - clip.min);
    let band = Tolerance::default().band(ext.max_element());
    let (mut agree, mut tested) = (0, 0);
    for _ in 0..queries {
        let q = lo
            + Vec3::new(
                rng.gen::<f64>() * ext.x,
                rng.gen::<f64>() * ext.y,
                rng.gen::<f64>() * ext.z,
            );
        let (mut first, mut second) = ((f64::INFINITY, 0), (f64::INFINITY, 0));
        for (i, p) in points.iter().enumerate() {
            let d = p.distance(q);
            if d < first.0 {
                second = first;
                first = (d, i);
            } else if d < second.0 {
                second = (d, i);
            }
        }
        if second.0 - first.0 <= band {
            continue;
        }
        tested += 1;
        let own = compute_cell(first.1, &index, clip).expect("cell");
        let other = compute_cell(second.1, &index, clip).expect("cell");
        if own.contains(q, band) == Some(true) && other.contains(q, band) == Some(false) {
            agree += 1;
        }
    }
    (agree, tested)
}

fn artifacts(run: &RunOutput) -> [String; 4] {
    [
        io::write_samples(&run.samples),
        io::write_seeds(&run.seeds),
        io::write_mesh(&run.mesh),
        io::write_obj(&run.surface),
    ]
}

fn main() {
    let mut out = Outcome { failed: 0 };
    let sphere = SurfaceSpec::sphere(1.0).unwrap();
    let torus = SurfaceSpec::torus(1.0, 0.3).unwrap();

    let sphere_cfg = RunConfig::new(sphere, 0.05);
    let (s05, s05_time) = timed(&sphere_cfg);
    let mut torus_cfg = RunConfig::new(torus, 0.05);
    torus_cfg.rng_seed = 7;
    let (tor, tor_time) = timed(&torus_cfg);
    let (s02, s02_time) = timed(&RunConfig::new(sphere, 0.02));
    let runs = [("sphere 0.05", &s05), ("torus 0.05", &tor), ("sphere 0.02", &s02)];

    let t = &s05.report.topology;
    out.record(
        1,
        s05_time < Duration::from_secs(120) && t.watertight && t.manifold && t.components == 1 && t.euler == 2,
        format!(
            "sphere eps=0.05 in {:.1}s: {}",
            s05_time.as_secs_f64(),
            topology_line(&s05)
        ),
    );

    let t = &tor.report.topology;
    out.record(
        2,
        t.watertight && t.manifold && t.euler == 0,
        format!(
            "torus eps=0.05 in {:.1}s: {}",
            tor_time.as_secs_f64(),
            topology_line(&tor)
        ),
    );

    let (a, b) = (unmatched_samples(&s05), unmatched_samples(&tor));
    out.record(
        3,
        a == 0
            && b == 0
            && pass(&s05.report, &["samples_are_vertices"])
            && pass(&tor.report, &["samples_are_vertices"]),
        format!(
            "samples off the reconstruction: sphere {a}/{}, torus {b}/{}",
            s05.samples.len(),
            tor.samples.len()
        ),
    );

    let caps = ["disk_caps", "poles_uncovered"];
    out.record(
        4,
        pass(&s05.report, &caps) && pass(&tor.report, &caps),
        format!(
            "balls failing disk caps: sphere {} of {}, torus {} of {}",
            measured(&s05.report, "disk_caps"),
            s05.samples.len(),
            measured(&tor.report, "disk_caps"),
            tor.samples.len()
        ),
    );

    out.record(
        5,
        pass(&s05.report, &["seed_elevation"]) && pass(&tor.report, &["seed_elevation"]),
        format!(
            "min seed elevation {:.2} deg (sphere), {:.2} deg (torus), bound {:.2} deg",
            measured(&s05.report, "seed_elevation").to_degrees(),
            measured(&tor.report, "seed_elevation").to_degrees(),
            s05.report.params.bounds.elevation.to_degrees()
        ),
    );

    let d = &s02.report.distance;
    let limit = 30.52 * 0.02 * 0.02;
    out.record(
        6,
        d.max() <= limit
            && d.surface_probes >= 100_000
            && d.recon_probes >= 100_000
            && s02_time < Duration::from_secs(600),
        format!(
            "sphere eps=0.02 in {:.1}s: surface->recon {:.3e} ({} probes), recon->surface {:.3e} ({} probes), bound {limit:.6}",
            s02_time.as_secs_f64(),
            d.max_surface_to_recon,
            d.surface_probes,
            d.max_recon_to_surface,
            d.recon_probes
        ),
    );

    let outside: Vec<String> = runs
        .iter()
        .map(|(n, r)| format!("{n}: {}", measured(&r.report, "recon_in_union")))
        .collect();
    out.record(
        7,
        runs.iter().all(|(_, r)| pass(&r.report, &["recon_in_union"])),
        format!("points outside the union: {}", outside.join(", ")),
    );

    let fat: Vec<String> = runs
        .iter()
        .map(|(n, r)| {
            format!(
                "{n}: interior {:.3} (bound {}), boundary {:.3} (bound {})",
                measured(&r.report, "interior_cell_fatness"),
                bound(&r.report, "interior_cell_fatness"),
                measured(&r.report, "boundary_cell_fatness"),
                bound(&r.report, "boundary_cell_fatness"),
            )
        })
        .collect();
    out.record(
        8,
        runs.iter().all(|(_, r)| {
            pass(
                &r.report,
                &["interior_cell_fatness", "boundary_cell_fatness", "degenerate_cells"],
            )
        }),
        format!("max fatness {}", fat.join("; ")),
    );

    let size: Vec<String> = runs
        .iter()
        .map(|(n, r)| {
            format!(
                "{n}: {} seeds vs {} (CI {:.2}%)",
                measured(&r.report, "interior_seed_count"),
                bound(&r.report, "interior_seed_count"),
                100.0 * measured(&r.report, "size_integral_ci")
            )
        })
        .collect();
    out.record(
        9,
        runs.iter()
            .all(|(_, r)| pass(&r.report, &["interior_seed_count", "size_integral_ci"])),
        format!("interior seed count {}", size.join("; ")),
    );

    let octree = [
        "octree_balance",
        "leaf_radius_min",
        "leaf_radius_max",
        "point_radius_min",
        "point_radius_max",
    ];
    out.record(
        10,
        runs.iter().all(|(_, r)| pass(&r.report, &octree)),
        format!(
            "worst corner ratio {} / {} / {}; leaf and point bands hold",
            measured(&s05.report, "octree_balance"),
            measured(&tor.report, "octree_balance"),
            measured(&s02.report, "octree_balance"),
        ),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let random: Vec<Vec3> = (0..200)
        .map(|_| {
            Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    let (ra, rt) = oracle_agreement(&random, &Aabb::new(Vec3::splat(-2.0), Vec3::splat(2.0)), 10_000, 12);
    let positions: Vec<Vec3> = s05.seeds.iter().map(|s| s.position).collect();
    let (sa, st) = oracle_agreement(&positions, &vorocrust::octree::root_box(&s05.samples), 10_000, 13);
    out.record(
        11,
        ra == rt && sa == st && rt > 9_900 && st > 9_900,
        format!("cell membership agrees: random {ra}/{rt}, sphere run {sa}/{st}"),
    );

    let rel = measured(&s02.report, "volume_error");
    out.record(
        12,
        rel <= 3.0 * limit,
        format!(
            "sphere eps=0.02 volume relative error {rel:.3e}, bound {:.4}",
            3.0 * limit
        ),
    );

    // Residuals of the primitives, then a second sphere run on two threads.
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..10_000 {
        let p: Vec<Vec3> = (0..3)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        if let Ok((c, r)) = circumcenter_radius(p[0], p[1], p[2]) {
            worst = p.iter().map(|q| (q.distance(c) - r).abs()).fold(worst, f64::max);
            let balls = [
                Ball::new(p[0], 1.1 * r),
                Ball::new(p[1], 1.1 * r),
                Ball::new(p[2], 1.1 * r),
            ];
            if let Ok(pair) = tri_sphere_intersect(&balls[0], &balls[1], &balls[2], &Tolerance::default()) {
                for x in pair {
                    worst = balls
                        .iter()
                        .map(|b| (x.distance(b.center) - b.radius).abs())
                        .fold(worst, f64::max);
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
    let again = pool.install(|| run_pipeline(&sphere_cfg).expect("second sphere run"));
    let same_files = artifacts(&again) == artifacts(&s05);
    let same_report = again.report.same_result(&s05.report);
    let kinds_ok = again.seeds.iter().zip(&s05.seeds).all(|(a, b)| a.kind == b.kind)
        && s05.mesh.cells.iter().all(|c| c.kind != SeedKind::Upper);
    out.record(
        13,
        worst < 1e-10 && same_files && same_report && kinds_ok,
        format!(
            "worst trilateration/circumcenter residual {worst:.2e}; repeat run identical artifacts={same_files} report={same_report}"
        ),
    );

    println!("{} of 13 criteria passed", 13 - out.failed);
    if out.failed > 0 {
        std::process::exit(1);
    }
}
