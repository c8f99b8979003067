//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input validation, 3 numeric guard, 4 solver failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::geometry::{
    format_off, generate_dumbbell, generate_icosphere, generate_spheroid, load_off, GeometryError, TriSurface,
};
use crate::odecmp::{compare_boundary, compare_cauchy, Comparison, OdeError, Profile1D};
use crate::report::{diagnose, DiagnoseConfig, DiagnoseError, SurfaceSource};
use crate::spectral::SpectralError;
use crate::sweep::{linear_grid, run_sweep, write_outputs, SweepError, SweepGenerator, SweepSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

pub const THREADS_ENV: &str = "PINCHLAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "pinchlab", version, about = "Eigenvalue-pinching diagnostics on triangulated surfaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a test surface as OFF.
    Gen(GenArgs),
    /// Compute the full diagnostic report for a mesh.
    Diagnose(DiagnoseArgs),
    /// Diagnose a family of generated surfaces and report trends.
    Sweep(SweepArgs),
    /// Compare a sampled profile with a pure sinusoid.
    Ode(OdeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GenKind {
    Icosphere,
    Spheroid,
    Dumbbell,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    pub kind: GenKind,
    #[arg(long, default_value_t = 3)]
    pub subdiv: u32,
    /// Axis ratio of the spheroid.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Waist radius of the dumbbell.
    #[arg(long)]
    pub neck: Option<f64>,
    /// Output path; OFF goes to stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Flags overriding the config file.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// TOML file with diagnose settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub eta_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eigenpairs: Option<usize>,
    #[arg(long)]
    pub residual_pairs: Option<usize>,
    /// Keep the input scale instead of normalizing to K_min = 1.
    #[arg(long)]
    pub no_rescale: bool,
    /// Proceed when the curvature hypothesis fails and flag it in the output.
    #[arg(long)]
    pub force: bool,
}

impl ConfigArgs {
    /// Flags over file over defaults.
    pub fn resolve(&self) -> Result<DiagnoseConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
                toml::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
            }
            None => DiagnoseConfig::default(),
        };
        if let Some(k) = self.k_max {
            cfg.k_max = k;
        }
        if let Some(g) = &self.eta_grid {
            cfg.eta_grid = g.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.eigenpairs {
            cfg.eigenpairs = n;
        }
        if let Some(n) = self.residual_pairs {
            cfg.residual_pairs = n;
        }
        if self.no_rescale {
            cfg.rescale = false;
        }
        if self.force {
            cfg.force = true;
        }
        cfg.validate().map_err(CliError::from)?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    pub mesh: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Report path; JSON goes to stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(value_enum)]
    pub generator: SweepGenerator,
    /// Comma-separated parameter values.
    #[arg(long, value_delimiter = ',', conflicts_with = "range", required_unless_present = "range")]
    pub grid: Option<Vec<f64>>,
    /// `start:stop:step`, stop inclusive.
    #[arg(long)]
    pub range: Option<String>,
    #[arg(long, default_value_t = 3)]
    pub subdiv: u32,
    #[arg(long, default_value_t = 2)]
    pub trend_k: usize,
    #[arg(long, default_value_t = 0.1)]
    pub trend_eta: f64,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(short, long)]
    pub out_dir: PathBuf,
}

impl ValueEnum for SweepGenerator {
    fn value_variants<'a>() -> &'a [Self] {
        &[Self::Spheroid, Self::Dumbbell]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.name()))
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OdeMode {
    Cauchy,
    Boundary,
}

#[derive(Debug, Args)]
pub struct OdeArgs {
    /// Two-column CSV `t,v`.
    pub profile: PathBuf,
    #[arg(long, value_enum)]
    pub mode: OdeMode,
    #[arg(long, allow_hyphen_values = true)]
    pub a: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub b: f64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct OdeVerdict {
    pub mode: OdeMode,
    pub a: f64,
    pub b: f64,
    pub length: f64,
    pub samples: usize,
    pub step: f64,
    #[serde(flatten)]
    pub comparison: Comparison,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self { code: EXIT_VALIDATION, message: message.into() }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        let code = match e {
            GeometryError::DegenerateNeck { .. } => EXIT_NUMERIC,
            _ => EXIT_VALIDATION,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        let code = match e {
            SpectralError::NotConverged { .. } | SpectralError::Factorization(_) => EXIT_SOLVER,
            SpectralError::ZeroEigenfunction { .. } => EXIT_NUMERIC,
            SpectralError::DegenerateFace { .. } | SpectralError::TooManyPairs { .. } => EXIT_VALIDATION,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<DiagnoseError> for CliError {
    fn from(e: DiagnoseError) -> Self {
        match e {
            DiagnoseError::Config(m) => Self::validation(format!("invalid configuration: {m}")),
            DiagnoseError::Geometry(g) => g.into(),
            DiagnoseError::Spectral(s) => s.into(),
        }
    }
}

impl From<OdeError> for CliError {
    fn from(e: OdeError) -> Self {
        let code = match e {
            OdeError::NearConjugate { .. } => EXIT_NUMERIC,
            _ => EXIT_VALIDATION,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Config(d) => d.into(),
            other => Self::validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::validation(e.to_string())
    }
}

fn emit(output: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match output {
        Some(p) => crate::io::write_atomic(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| CliError::validation(format!("--{flag} is required")));
    let (surface, source): (TriSurface, SurfaceSource) = match args.kind {
        GenKind::Icosphere => (
            generate_icosphere(args.subdiv)?,
            SurfaceSource::generator("icosphere", &[("subdivisions", args.subdiv as f64)]),
        ),
        GenKind::Spheroid => {
            let r = need(args.ratio, "ratio")?;
            (
                generate_spheroid(r, args.subdiv)?,
                SurfaceSource::generator("spheroid", &[("ratio", r), ("subdivisions", args.subdiv as f64)]),
            )
        }
        GenKind::Dumbbell => {
            let n = need(args.neck, "neck")?;
            (
                generate_dumbbell(n, args.subdiv)?,
                SurfaceSource::generator("dumbbell", &[("neck", n), ("subdivisions", args.subdiv as f64)]),
            )
        }
    };
    let k = surface.curvature();
    let violated = !(k.k_min > 0.0);
    if violated {
        eprintln!("warning: hypothesis violated: K_min < 0 (K_min = {})", k.k_min);
    }
    emit(args.output.as_deref(), format_off(&surface).as_bytes())?;
    let summary = serde_json::json!({
        "source": source,
        "vertices": surface.num_vertices(),
        "faces": surface.num_faces(),
        "k_min": k.k_min,
        "k_max": k.k_max,
        "hypothesis_violated": violated,
        "output": args.output.as_ref().map(|p| p.display().to_string()),
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    if args.output.is_some() {
        println!("{text}");
    } else {
        eprintln!("{text}");
    }
    Ok(())
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Result<(), CliError> {
    let cfg = args.config.resolve()?;
    let surface = load_off(&args.mesh)?;
    let report = diagnose(&surface, SurfaceSource::file(args.mesh.display().to_string()), &cfg)?;
    if report.surface.hypothesis_violated {
        eprintln!("warning: hypothesis violated (K_min = {}), continuing because of --force", report.surface.k_min_input);
    }
    emit(args.output.as_deref(), report.to_json().as_bytes())
}

fn parse_range(text: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let nums: Result<Vec<f64>, _> = parts.iter().map(|p| p.trim().parse::<f64>()).collect();
    match nums {
        Ok(n) if n.len() == 3 => Ok(linear_grid(n[0], n[1], n[2])),
        _ => Err(CliError::validation(format!("--range expects start:stop:step, got {text:?}"))),
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let cfg = args.config.resolve()?;
    let grid = match (&args.grid, &args.range) {
        (Some(g), _) => g.clone(),
        (None, Some(r)) => parse_range(r)?,
        (None, None) => return Err(CliError::validation("one of --grid or --range is required")),
    };
    let spec = SweepSpec {
        generator: args.generator,
        subdivisions: args.subdiv,
        grid,
        trend_k: args.trend_k,
        trend_eta: args.trend_eta,
    };
    let result = run_sweep(&spec, &cfg)?;
    write_outputs(&result, &cfg, &args.out_dir)?;
    for p in &result.points {
        if let Some(e) = &p.error {
            eprintln!("warning: {} = {}: {e}", result.parameter, p.value);
        }
    }
    println!("{}", serde_json::to_string_pretty(&result.trends).expect("trends serialize"));
    Ok(())
}

fn cmd_ode(args: &OdeArgs) -> Result<(), CliError> {
    let profile = Profile1D::read_csv(&args.profile)?;
    let comparison = match args.mode {
        OdeMode::Cauchy => compare_cauchy(&profile, args.a, args.b),
        OdeMode::Boundary => compare_boundary(&profile, args.a, args.b)?,
    };
    let verdict = OdeVerdict {
        mode: args.mode,
        a: args.a,
        b: args.b,
        length: profile.length(),
        samples: profile.len(),
        step: profile.step(),
        comparison,
    };
    let text = serde_json::to_string_pretty(&verdict).expect("verdict serializes") + "\n";
    emit(args.output.as_deref(), text.as_bytes())
}

pub fn parse_threads(value: Option<&str>) -> Result<Option<usize>, CliError> {
    let Some(v) = value else { return Ok(None) };
    v.trim()
        .parse()
        .ok()
        .filter(|&n: &usize| n > 0)
        .map(Some)
        .ok_or_else(|| CliError::validation(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))
}

/// Reads `PINCHLAB_THREADS` and sizes the global thread pool.
pub fn configure_threads(value: Option<&str>) -> Result<(), CliError> {
    if let Some(n) = parse_threads(value)? {
        // The global pool can only be built once per process; later calls keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let threads = std::env::var(THREADS_ENV).ok();
    let result = configure_threads(threads.as_deref()).and_then(|_| match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Ode(a) => cmd_ode(a),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
