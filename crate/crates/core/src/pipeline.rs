//! End-to-end run: sample, balls, guides, seeds, octree, Voronoi cells,
//! surface extraction and verification, plus artifact round trips.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::ball_union::{build_ball_index, classify_coverage, enumerate_guides, place_surface_seeds, Seed, SeedKind};
use crate::io::{self, ParseError};
use crate::octree::{build_octree, place_interior_seeds, root_box, SizingField, DEFAULT_DEPTH_CAP};
use crate::quality::{evaluate, EvalInput, EvalOptions, QualityReport};
use crate::sampler::{check_parameters, generate_sample_with, SampleSet, SamplerConfig};
use crate::spatial::KdTree;
use crate::surface::SurfaceSpec;
use crate::voronoi::{compute_mesh, extract_surface, PairingReport, ReconSurface, VolumeMesh};

pub const SURFACE_FILE: &str = "surface.obj";
pub const MESH_FILE: &str = "mesh.vcmesh";
pub const SEED_FILE: &str = "seeds.vcseed";
pub const SAMPLE_FILE: &str = "samples.vcsample";
pub const REPORT_FILE: &str = "report.json";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub surface: SurfaceSpec,
    pub eps: f64,
    pub sigma: f64,
    /// Ball radius factor; `2ε` when unset.
    pub delta: Option<f64>,
    pub rng_seed: u64,
    pub probes: usize,
    pub max_samples: usize,
    pub allow_seeds_in_union: bool,
    pub skip_interior: bool,
}

impl RunConfig {
    pub fn new(surface: SurfaceSpec, eps: f64) -> Self {
        RunConfig {
            surface,
            eps,
            sigma: 0.75,
            delta: None,
            rng_seed: 42,
            probes: 100_000,
            max_samples: SamplerConfig::default().max_samples,
            allow_seeds_in_union: false,
            skip_interior: false,
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(2.0 * self.eps)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        check_parameters(self.eps, self.sigma).map_err(|e| PipelineError::Config(e.to_string()))?;
        let d = self.delta();
        if !(d > 0.0 && d < 1.0 / 3.0) {
            return Err(PipelineError::Config(format!("delta must lie in (0, 1/3), got {d}")));
        }
        if self.probes == 0 {
            return Err(PipelineError::Config("probe count must be positive".into()));
        }
        Ok(())
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            probes: self.probes,
            allow_seeds_in_union: self.allow_seeds_in_union,
            skip_interior: self.skip_interior,
            rng_seed: self.rng_seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Sample,
    Guides,
    Interior,
    Voronoi,
    Extract,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Sample => "sample",
            Stage::Guides => "guides",
            Stage::Interior => "interior",
            Stage::Voronoi => "voronoi",
            Stage::Extract => "extract",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{stage} stage failed: {msg}")]
    Stage { stage: Stage, msg: String },
}

fn stage<E: fmt::Display>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        msg: e.to_string(),
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub config: RunConfig,
    pub samples: SampleSet,
    pub seeds: Vec<Seed>,
    pub mesh: VolumeMesh,
    pub surface: ReconSurface,
    pub pairing: PairingReport,
    pub report: QualityReport,
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let spec = &cfg.surface;
    let mut times = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str| {
        let now = Instant::now();
        times.insert(format!("stage_{name}"), (now - clock).as_secs_f64() * 1e3);
        clock = now;
    };

    let sampler = SamplerConfig {
        max_samples: cfg.max_samples,
        ..SamplerConfig::default()
    };
    let samples = generate_sample_with(spec, cfg.eps, cfg.sigma, cfg.delta(), cfg.rng_seed, &sampler)
        .map_err(stage(Stage::Sample))?;
    lap("sample");

    let idx = build_ball_index(&samples);
    let mut guides = enumerate_guides(&idx, spec).map_err(stage(Stage::Guides))?;
    classify_coverage(&mut guides, &idx);
    let mut seeds = place_surface_seeds(&guides, &idx).seeds;
    drop(guides);
    for kind in [SeedKind::Upper, SeedKind::Lower] {
        if !seeds.iter().any(|s| s.kind == kind) {
            return Err(PipelineError::Stage {
                stage: Stage::Guides,
                msg: format!("no {kind:?} seeds"),
            });
        }
    }
    lap("guides");

    let root = root_box(&samples);
    if !cfg.skip_interior {
        let sizing = SizingField::new(&samples);
        let mut octree =
            build_octree(&sizing, samples.delta, root, DEFAULT_DEPTH_CAP).map_err(stage(Stage::Interior))?;
        let tree = KdTree::new(&seeds.iter().map(|s| s.position).collect::<Vec<_>>());
        let first = seeds.len();
        seeds.extend(place_interior_seeds(
            &mut octree,
            &tree,
            &idx,
            spec,
            cfg.allow_seeds_in_union,
            first,
        ));
    }
    lap("interior");

    let diagram = compute_mesh(&seeds, &root).map_err(stage(Stage::Voronoi))?;
    if !diagram.pairing.complete() {
        let p = diagram.pairing;
        return Err(PipelineError::Stage {
            stage: Stage::Voronoi,
            msg: format!(
                "{} of {} internal faces unmatched",
                p.internal_faces - p.paired,
                p.internal_faces
            ),
        });
    }
    let mesh = diagram.mesh;
    let pairing = diagram.pairing;
    drop(diagram.cells);
    lap("voronoi");

    let kinds: Vec<SeedKind> = seeds.iter().map(|s| s.kind).collect();
    let surface = extract_surface(&mesh, &kinds, &samples);
    if surface.facets.is_empty() {
        return Err(PipelineError::Stage {
            stage: Stage::Extract,
            msg: "empty reconstruction".into(),
        });
    }
    lap("extract");

    let input = EvalInput {
        spec,
        samples: &samples,
        seeds: &seeds,
        mesh: &mesh,
    };
    let mut report = evaluate(&input, &cfg.eval_options());
    lap("verify");
    report.timing_ms.extend(times);

    Ok(RunOutput {
        config: cfg.clone(),
        samples,
        seeds,
        mesh,
        surface,
        pairing,
        report,
    })
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: ParseError },
    #[error("{}: {msg}", path.display())]
    Json { path: PathBuf, msg: String },
    #[error("inconsistent artifacts: {0}")]
    Inconsistent(String),
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<(), ArtifactError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|source| ArtifactError::Io { path, source })
}

fn read_file(dir: &Path, name: &str) -> Result<(PathBuf, String), ArtifactError> {
    let path = dir.join(name);
    match fs::read_to_string(&path) {
        Ok(text) => Ok((path, text)),
        Err(source) => Err(ArtifactError::Io { path, source }),
    }
}

pub fn report_json(report: &QualityReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}

pub fn write_artifacts(dir: &Path, run: &RunOutput) -> Result<(), ArtifactError> {
    fs::create_dir_all(dir).map_err(|source| ArtifactError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_file(dir, SURFACE_FILE, &io::write_obj(&run.surface))?;
    write_file(dir, MESH_FILE, &io::write_mesh(&run.mesh))?;
    write_file(dir, SEED_FILE, &io::write_seeds(&run.seeds))?;
    write_file(dir, SAMPLE_FILE, &io::write_samples(&run.samples))?;
    write_file(dir, REPORT_FILE, &report_json(&run.report))
}

pub fn read_report(dir: &Path) -> Result<QualityReport, ArtifactError> {
    let (path, text) = read_file(dir, REPORT_FILE)?;
    serde_json::from_str(&text).map_err(|e| ArtifactError::Json {
        path,
        msg: e.to_string(),
    })
}

/// Saved artifacts re-parsed, ready for re-evaluation.
pub struct Artifacts {
    pub spec: SurfaceSpec,
    pub samples: SampleSet,
    pub seeds: Vec<Seed>,
    pub mesh: VolumeMesh,
    pub surface_obj: String,
    pub report: QualityReport,
}

pub fn read_artifacts(dir: &Path) -> Result<Artifacts, ArtifactError> {
    fn parsed<T>(dir: &Path, name: &str, f: impl Fn(&str) -> Result<T, ParseError>) -> Result<T, ArtifactError> {
        let (path, text) = read_file(dir, name)?;
        f(&text).map_err(|source| ArtifactError::Parse { path, source })
    }
    let report = read_report(dir)?;
    let samples = parsed(dir, SAMPLE_FILE, io::parse_samples)?;
    let seeds = parsed(dir, SEED_FILE, io::parse_seeds)?;
    let mesh = parsed(dir, MESH_FILE, io::parse_mesh)?;
    let (_, surface_obj) = read_file(dir, SURFACE_FILE)?;
    let spec: SurfaceSpec = report
        .params
        .surface
        .parse()
        .map_err(|e: crate::surface::SurfaceError| ArtifactError::Inconsistent(e.to_string()))?;

    let p = &report.params;
    if (samples.eps, samples.sigma, samples.delta, samples.rng_seed) != (p.eps, p.sigma, p.delta, p.rng_seed) {
        return Err(ArtifactError::Inconsistent(
            "sample parameters differ from the report".into(),
        ));
    }
    let out_of_range = mesh
        .cells
        .iter()
        .map(|c| c.seed_id)
        .chain(mesh.faces.iter().flat_map(|f| [Some(f.seed_a), f.seed_b]).flatten())
        .any(|s| s >= seeds.len());
    if out_of_range {
        return Err(ArtifactError::Inconsistent(
            "mesh refers to a seed not in the seed file".into(),
        ));
    }
    if let Some(c) = mesh.cells.iter().find(|c| seeds[c.seed_id].kind != c.kind) {
        return Err(ArtifactError::Inconsistent(format!(
            "cell {} kind differs from its seed",
            c.seed_id
        )));
    }
    for s in &seeds {
        if let crate::ball_union::SeedOrigin::Triple(t) = s.origin {
            if t.iter().any(|&i| i >= samples.len()) {
                return Err(ArtifactError::Inconsistent(format!(
                    "seed {} refers to a missing sample",
                    s.id
                )));
            }
        }
    }
    Ok(Artifacts {
        spec,
        samples,
        seeds,
        mesh,
        surface_obj,
        report,
    })
}

#[derive(Clone, Debug)]
pub struct VerifyOutcome {
    pub fresh: QualityReport,
    /// Report fields or files that differ from the fresh evaluation.
    pub mismatches: Vec<String>,
}

impl VerifyOutcome {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty() && self.fresh.passed()
    }
}

/// Re-evaluates saved artifacts and compares against the saved report and
/// surface.
pub fn verify_artifacts(dir: &Path) -> Result<VerifyOutcome, ArtifactError> {
    let a = read_artifacts(dir)?;
    let p = &a.report.params;
    let opts = EvalOptions {
        probes: p.probes,
        allow_seeds_in_union: p.allow_seeds_in_union,
        skip_interior: p.skip_interior,
        rng_seed: p.rng_seed,
    };
    let input = EvalInput {
        spec: &a.spec,
        samples: &a.samples,
        seeds: &a.seeds,
        mesh: &a.mesh,
    };
    let fresh = evaluate(&input, &opts);
    let mut mismatches = Vec::new();
    let (old, new) = (&a.report, &fresh);
    if old.params != new.params {
        mismatches.push("params".to_string());
    }
    if old.topology != new.topology {
        mismatches.push("topology".to_string());
    }
    if old.distance != new.distance {
        mismatches.push("distance".to_string());
    }
    if old.counts != new.counts {
        mismatches.push("counts".to_string());
    }
    if old.checks.len() != new.checks.len() {
        mismatches.push("checks".to_string());
    } else {
        mismatches.extend(
            old.checks
                .iter()
                .zip(&new.checks)
                .filter(|(o, n)| o != n)
                .map(|(o, _)| format!("check {}", o.name)),
        );
    }
    let kinds: Vec<SeedKind> = a.seeds.iter().map(|s| s.kind).collect();
    if io::write_obj(&extract_surface(&a.mesh, &kinds, &a.samples)) != a.surface_obj {
        mismatches.push(SURFACE_FILE.to_string());
    }
    Ok(VerifyOutcome { fresh, mismatches })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut c = RunConfig::new(SurfaceSpec::sphere(1.0).unwrap(), 0.1);
        c.probes = 20_000;
        c
    }

    #[test]
    fn config_rejects_bad_parameters() {
        let mut c = small();
        c.eps = 0.5;
        assert!(matches!(c.validate(), Err(PipelineError::Config(_))));
        let mut c = small();
        c.delta = Some(0.4);
        assert!(c.validate().is_err());
        let mut c = small();
        c.sigma = 0.2;
        assert!(run_pipeline(&c).is_err());
    }

    #[test]
    fn sample_budget_names_the_stage() {
        let mut c = small();
        c.max_samples = 10;
        let e = run_pipeline(&c).unwrap_err();
        assert!(matches!(
            e,
            PipelineError::Stage {
                stage: Stage::Sample,
                ..
            }
        ));
        assert!(e.to_string().starts_with("sample stage failed"));
    }

    #[test]
    fn artifacts_round_trip_and_detect_edits() {
        let run = run_pipeline(&small()).unwrap();
        assert!(run.report.passed(), "{:?}", run.report.failures().collect::<Vec<_>>());
        let dir = tempfile::tempdir().unwrap();
        write_artifacts(dir.path(), &run).unwrap();
        for f in [SURFACE_FILE, MESH_FILE, SEED_FILE, SAMPLE_FILE, REPORT_FILE] {
            assert!(dir.path().join(f).exists());
        }
        let v = verify_artifacts(dir.path()).unwrap();
        assert!(v.ok(), "{:?}", v.mismatches);
        assert!(v.fresh.same_result(&run.report));

        // Nudge one mesh vertex.
        let path = dir.path().join(MESH_FILE);
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let xyz: Vec<f64> = lines[2].split(' ').map(|t| t.parse().unwrap()).collect();
        lines[2] = format!("{} {} {}", xyz[0] + 1e-3, xyz[1], xyz[2]);
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        let v = verify_artifacts(dir.path()).unwrap();
        assert!(!v.ok());
        assert!(!v.mismatches.is_empty());

        // Truncate it.
        fs::write(&path, &text[..text.len() / 3]).unwrap();
        assert!(matches!(verify_artifacts(dir.path()), Err(ArtifactError::Parse { .. })));
    }

    #[test]
    fn skip_interior_keeps_lower_cells_only() {
        let mut c = small();
        c.skip_interior = true;
        let run = run_pipeline(&c).unwrap();
        assert!(run.mesh.cells.iter().all(|c| c.kind == SeedKind::Lower));
        assert!(!run.seeds.iter().any(|s| s.kind == SeedKind::Interior));
        assert_eq!(run.report.topology.euler, 2);
    }
}
