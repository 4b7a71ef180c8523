//! `vorocrust` command line: `gen`, `verify` and `report`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vorocrust::pipeline::{self, ArtifactError, PipelineError, RunConfig};
use vorocrust::quality::QualityReport;
use vorocrust::surface::SurfaceSpec;

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "vorocrust",
    version,
    about = "Conforming Voronoi meshes of smooth closed surfaces"
)]
struct Cli {
    /// Worker threads; all cores when unset.
    #[arg(long, global = true, env = "VOROCRUST_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample, mesh and verify a surface, writing all artifacts.
    Gen(GenArgs),
    /// Re-check saved artifacts against their report.
    Verify {
        /// Directory written by `gen`.
        dir: PathBuf,
    },
    /// Print the saved report of a run.
    Report {
        dir: PathBuf,
        /// Print the raw JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct GenArgs {
    /// `sphere:R`, `torus:R,r` or `ellipsoid:a,b,c`.
    #[arg(long)]
    surface: SurfaceSpec,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0.75)]
    sigma: f64,
    /// Ball radius factor, default `2·eps`.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Probe points per direction for the distance and covering checks.
    #[arg(long, default_value_t = 100_000)]
    probes: usize,
    #[arg(long, default_value_t = 2_000_000)]
    max_samples: usize,
    /// Mesh with surface seeds only.
    #[arg(long)]
    skip_interior: bool,
    /// Keep interior seeds that fall inside the ball union.
    #[arg(long)]
    allow_seeds_in_union: bool,
}

impl GenArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            sigma: self.sigma,
            delta: self.delta,
            rng_seed: self.seed,
            probes: self.probes,
            max_samples: self.max_samples,
            allow_seeds_in_union: self.allow_seeds_in_union,
            skip_interior: self.skip_interior,
            ..RunConfig::new(self.surface, self.eps)
        }
    }
}

fn print_summary(r: &QualityReport) {
    let c = &r.counts;
    println!(
        "samples {}  seeds U/L/I {}/{}/{}  volume cells {}  surface {} vertices ({} Steiner), {} facets",
        c.samples,
        c.upper_seeds,
        c.lower_seeds,
        c.interior_seeds,
        c.volume_cells,
        c.recon_vertices,
        c.steiner_vertices,
        c.recon_facets
    );
    let t = &r.topology;
    println!(
        "topology: watertight {} manifold {} components {} euler {}",
        t.watertight, t.manifold, t.components, t.euler
    );
    for ch in &r.checks {
        let bound = ch.bound.map_or("-".to_string(), |b| format!("{b:.6e}"));
        println!(
            "{:4}  {:34} {:>14.6e}  {:>14}",
            if ch.pass { "ok" } else { "FAIL" },
            ch.name,
            ch.measured,
            bound
        );
    }
}

fn report_failures(r: &QualityReport) -> ExitCode {
    let failed: Vec<&str> = r.failures().map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("failed checks: {}", failed.join(", "));
        ExitCode::from(EXIT_FAIL)
    }
}

fn artifact_exit(e: &ArtifactError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        ArtifactError::Inconsistent(_) => ExitCode::from(EXIT_FAIL),
        _ => ExitCode::from(EXIT_IO),
    }
}

fn gen(args: &GenArgs) -> ExitCode {
    let cfg = args.config();
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    let run = match pipeline::run_pipeline(&cfg) {
        Ok(run) => run,
        Err(e @ PipelineError::Config(_)) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAIL);
        }
    };
    if let Err(e) = pipeline::write_artifacts(&args.out_dir, &run) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_IO);
    }
    print_summary(&run.report);
    println!("artifacts written to {}", args.out_dir.display());
    report_failures(&run.report)
}

fn verify(dir: &Path) -> ExitCode {
    let outcome = match pipeline::verify_artifacts(dir) {
        Ok(o) => o,
        Err(e) => return artifact_exit(&e),
    };
    if !outcome.mismatches.is_empty() {
        eprintln!(
            "artifacts disagree with the saved report: {}",
            outcome.mismatches.join(", ")
        );
        return ExitCode::from(EXIT_FAIL);
    }
    println!("artifacts reproduce the saved report");
    report_failures(&outcome.fresh)
}

fn report(dir: &Path, json: bool) -> ExitCode {
    let r = match pipeline::read_report(dir) {
        Ok(r) => r,
        Err(e) => return artifact_exit(&e),
    };
    if json {
        print!("{}", pipeline::report_json(&r));
    } else {
        print_summary(&r);
    }
    report_failures(&r)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set thread count: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match &cli.command {
        Command::Gen(args) => gen(args),
        Command::Verify { dir } => verify(dir),
        Command::Report { dir, json } => report(dir, *json),
    }
}
