use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use balloon_core::constraints::TendonSense;
use balloon_core::oracles::property_suite;
use balloon_core::pipeline::{find_shape, Prepared, Preset, RunConfig, ZPNS_TARGET_VOLUME};
use balloon_core::postprocess::{write_dat, write_facets_csv, write_profiles_csv, write_summary_json};
use balloon_core::shape_finding::{DesignInput, DesignMode};
use balloon_core::solver::InnerSolver;
use balloon_core::Error as CoreError;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

const CONFIG_ERROR: u8 = 2;
const NOT_CONVERGED: u8 = 3;
const ORACLE_VIOLATION: u8 = 4;

#[derive(Parser)]
#[command(name = "balloon", version, about = "Strained equilibrium shapes of scientific balloons")]
struct Cli {
    /// Run directory for all artifacts; overrides the config's `output_dir`.
    #[arg(long, global = true, env = "BALLOON_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the design generator and write the gore pattern.
    Shapefind(ShapefindArgs),
    /// Mesh, solve and report one equilibrium.
    Solve(SolveArgs),
    /// Run the sampled inequality and gradient suites.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct ShapefindArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<DesignMode>,
    /// Bulge radius r_B (m).
    #[arg(long)]
    rb: Option<f64>,
    /// Base pressure p0 (Pa).
    #[arg(long)]
    p0: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args)]
struct SolveArgs {
    /// JSON run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// zpns-open, zpns-closed, pumpkin-bare, pumpkin-tendons or pumpkin-shortened.
    #[arg(long)]
    preset: Option<Preset>,
    /// Constrain the enclosed volume.
    #[arg(long, conflicts_with = "open")]
    closed: bool,
    /// Prescribe the base pressure instead of the volume.
    #[arg(long)]
    open: bool,
    /// Target volume ω0 (m³) of a closed run.
    #[arg(long)]
    volume: Option<f64>,
    /// Base pressure p0 (Pa) of an open run.
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long)]
    tendons: Option<Toggle>,
    /// le, eq or ge.
    #[arg(long)]
    tendon_sense: Option<TendonSense>,
    /// Fraction by which the tendons are shortened.
    #[arg(long)]
    tendon_shorten: Option<f64>,
    /// Film thickness multiplier.
    #[arg(long)]
    thickness_scale: Option<f64>,
    /// newton or lbfgs.
    #[arg(long)]
    inner: Option<InnerSolver>,
    #[arg(long)]
    max_inner: Option<usize>,
    #[arg(long)]
    strips: Option<usize>,
    #[arg(long)]
    tris_per_strip: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// JSON run configuration; only its material is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Draws per sampled suite; scientific notation is accepted.
    #[arg(long, default_value = "1e5", value_parser = parse_count)]
    samples: usize,
    #[arg(long, default_value_t = 20_240_601)]
    seed: u64,
    /// Override the Poisson ratio.
    #[arg(long)]
    poisson: Option<f64>,
}

fn parse_count(s: &str) -> std::result::Result<usize, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 1.0 && v.fract() == 0.0 && v <= 1e12 {
        Ok(v as usize)
    } else {
        Err(format!("expected a positive whole number, got {s}"))
    }
}

/// Error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<CoreError>() {
            Some(CoreError::Config(_) | CoreError::InvalidInput(_)) => CONFIG_ERROR,
            _ => 1,
        };
        Self { code, error }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn config_error(msg: String) -> Failure {
    Failure {
        code: CONFIG_ERROR,
        error: anyhow::anyhow!(msg),
    }
}

fn load_config(path: &Path) -> std::result::Result<RunConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    RunConfig::from_json(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    command: Vec<String>,
    config_sha256: String,
    config: &'a T,
    versions: BTreeMap<&'static str, &'static str>,
    seeds: BTreeMap<&'static str, u64>,
}

fn write_manifest<T: Serialize>(dir: &Path, config: &T, seeds: BTreeMap<&'static str, u64>) -> Result<()> {
    let bytes = serde_json::to_vec(config)?;
    let manifest = Manifest {
        command: std::env::args().collect(),
        config_sha256: hex::encode(Sha256::digest(&bytes)),
        config,
        versions: BTreeMap::from([
            ("balloon-core", balloon_core::VERSION),
            ("balloon-cli", env!("CARGO_PKG_VERSION")),
        ]),
        seeds,
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(create(path)?, value)?;
    Ok(())
}

fn run_dir(cli_dir: Option<PathBuf>, cfg: &mut RunConfig) -> Result<PathBuf> {
    if let Some(d) = cli_dir {
        cfg.output_dir = d;
    }
    fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    Ok(cfg.output_dir.clone())
}

#[derive(Serialize)]
struct ShapeSummary {
    mode: DesignMode,
    n_gores: usize,
    #[serde(flatten)]
    lengths: balloon_core::shape_finding::PatternSummary,
    volume: f64,
    surface_area: f64,
    seam_to_tendon: f64,
}

fn shapefind(out_dir: Option<PathBuf>, a: ShapefindArgs) -> std::result::Result<u8, Failure> {
    let mut cfg = match (&a.config, a.mode) {
        (Some(p), _) => load_config(p)?,
        (None, Some(DesignMode::Pumpkin)) => RunConfig::new(DesignInput::reference_pumpkin()),
        (None, _) => RunConfig::new(DesignInput::reference_zpns()),
    };
    if let Some(m) = a.mode {
        cfg.design.mode = m;
    }
    if let Some(rb) = a.rb {
        cfg.design.bulge_radius = rb;
    }
    if let Some(p0) = a.p0 {
        cfg.design.constant_pressure = p0;
    }
    cfg.design
        .validate()
        .map_err(|e| config_error(format!("design: {e}")))?;
    let dir = run_dir(out_dir, &mut cfg)?;
    write_manifest(&dir, &cfg, BTreeMap::new())?;
    let shape = find_shape(&cfg.design, cfg.shape_tolerance)?;
    shape.generator.write_csv(create(&dir.join("generator.csv"))?)?;
    shape.pattern.write_csv(create(&dir.join("pattern.csv"))?)?;
    let lengths = shape.pattern.summary();
    let summary = ShapeSummary {
        mode: cfg.design.mode,
        n_gores: cfg.design.n_gores,
        volume: shape.generator.enclosed_volume(),
        surface_area: shape.generator.surface_area(),
        seam_to_tendon: lengths.seam_length / lengths.tendon_length,
        lengths,
    };
    write_json(&dir.join("shape.json"), &summary)?;
    println!(
        "{} design: L_d = {:.4} m, L_t = {:.4} m, L_s = {:.4} m (L_s/L_t = {:.5}), theta0 = {:.6} rad, volume = {:.1} m^3",
        cfg.design.mode.as_str(),
        summary.lengths.design_length,
        summary.lengths.tendon_length,
        summary.lengths.seam_length,
        summary.seam_to_tendon,
        summary.lengths.theta0,
        summary.volume
    );
    println!("artifacts in {}", dir.display());
    Ok(0)
}

fn solve_config(a: &SolveArgs) -> std::result::Result<RunConfig, Failure> {
    let mut cfg = match (&a.config, a.preset) {
        (Some(p), _) => load_config(p)?,
        (None, Some(p)) => RunConfig::preset(p),
        (None, None) => return Err(config_error("solve needs --config or --preset".into())),
    };
    if let Some(t) = a.tendons {
        cfg.tendons.enabled = matches!(t, Toggle::On);
    }
    if let Some(s) = a.tendon_sense {
        cfg.tendons.sense = s;
    }
    if let Some(f) = a.tendon_shorten {
        cfg.tendons.shorten = f;
    }
    if let Some(k) = a.thickness_scale {
        cfg.thickness_scale = k;
    }
    if let Some(i) = a.inner {
        cfg.solver.inner = i;
    }
    if let Some(n) = a.max_inner {
        cfg.solver.max_inner = n;
    }
    if let Some(n) = a.strips {
        cfg.mesh.strips = n;
    }
    if let Some(n) = a.tris_per_strip {
        cfg.mesh.tris_per_strip = n;
    }
    if a.open {
        let p0 = a.p0.unwrap_or(cfg.loads().constant_pressure);
        cfg = cfg.open(p0);
    } else if let Some(p0) = a.p0 {
        let mut l = cfg.loads();
        l.constant_pressure = p0;
        cfg.loads = Some(l);
    }
    if a.closed || a.volume.is_some() {
        let omega = a
            .volume
            .or(cfg.loads().target_volume)
            .or((cfg.design.mode == DesignMode::Zpns).then_some(ZPNS_TARGET_VOLUME))
            .ok_or_else(|| config_error("loads.target_volume: a closed run needs --volume".into()))?;
        cfg = cfg.closed(omega);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn solve(out_dir: Option<PathBuf>, a: SolveArgs) -> std::result::Result<u8, Failure> {
    let mut cfg = solve_config(&a)?;
    if let Some(m) = cfg.archimedes_warning() {
        log::warn!("b·ω0 differs from the design lift by {:.2}%", 100.0 * m);
    }
    let dir = run_dir(out_dir, &mut cfg)?;
    write_json(&dir.join("config.json"), &cfg)?;
    write_manifest(&dir, &cfg, BTreeMap::new())?;
    let prepared = Prepared::new(&cfg)?;
    prepared.shape.generator.write_csv(create(&dir.join("generator.csv"))?)?;
    prepared.shape.pattern.write_csv(create(&dir.join("pattern.csv"))?)?;
    let t0 = Instant::now();
    let result = prepared.solve()?;
    let elapsed = t0.elapsed().as_secs_f64();
    let report = prepared.report(&result)?;
    prepared.mesh.write_polygons(&result.state, create(&dir.join("mesh.txt"))?)?;
    result.write_log(create(&dir.join("iterations.log"))?)?;
    write_json(&dir.join("result.json"), &result)?;
    write_profiles_csv(&report.pairs, create(&dir.join("profiles.csv"))?)?;
    write_dat(&report.pairs, create(&dir.join("profiles.dat"))?)?;
    write_facets_csv(&result.responses, create(&dir.join("facets.csv"))?)?;
    write_summary_json(&report, create(&dir.join("summary.json"))?)?;

    println!(
        "converged: {} ({} outer, {} inner iterations, {elapsed:.1} s), KKT residual {:.2e}, max violation {:.2e}",
        result.converged, result.outer_iterations, result.inner_iterations, result.kkt_residual, result.max_violation
    );
    println!(
        "volume {:.3} m^3, max averaged strain {:.4}%, max averaged resultant {:.2} N/m",
        result.volume,
        100.0 * report.max_strain,
        report.max_resultant
    );
    let f = report.fractions;
    println!(
        "region fractions: slack {:.3}, wrinkled {:.3}, tense {:.3}",
        f.slack, f.wrinkled, f.tense
    );
    if let Some(p) = result.multipliers.volume {
        println!("volume multiplier {p:.6} Pa");
    }
    for t in &result.multipliers.tendons {
        println!("tendon {}: strain {:.3e}, force {:.2} N", t.seam, t.strain, t.force);
    }
    println!("artifacts in {}", dir.display());
    if result.converged {
        Ok(0)
    } else {
        eprintln!("solver did not converge; the best iterate was written");
        Ok(NOT_CONVERGED)
    }
}

fn verify(out_dir: Option<PathBuf>, a: VerifyArgs) -> std::result::Result<u8, Failure> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::new(DesignInput::reference_pumpkin()),
    };
    if let Some(nu) = a.poisson {
        cfg.material.poisson = nu;
    }
    let mat = cfg.material();
    mat.validate()
        .map_err(|e| config_error(format!("material: {e}")))?;
    let dir = run_dir(out_dir, &mut cfg)?;
    write_manifest(&dir, &cfg, BTreeMap::from([("verify", a.seed)]))?;
    let report = property_suite(&mat, a.samples, a.seed)?;
    write_json(&dir.join("verify.json"), &report)?;
    for e in &report.entries {
        let tag = if e.passed() { "PASS" } else { "FAIL" };
        println!("{tag} {} ({} checks, {} violations) {}", e.name, e.checks, e.violations, e.detail);
    }
    Ok(if report.passed() { 0 } else { ORACLE_VIOLATION })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Shapefind(a) => shapefind(cli.out_dir, a),
        Command::Solve(a) => solve(cli.out_dir, a),
        Command::Verify(a) => verify(cli.out_dir, a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
