//! The full diagnostic report for one surface.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equator::{petersen_bound_check, sphere_map_report, EquatorOptions, SphereMapReport, DEFAULT_ETA_GRID};
use crate::geometry::{rescale_to_curvature_bound, GeometryError, TriSurface};
use crate::metric::{default_step, MetricMethod, SurfaceMetric};
use crate::pinching::{
    coarea_comparison, cos_profile_defect, extract_frame, li_yau_check, pk_deficiency, project_cos_distance,
    residual_distribution, AntipodalFrame, CoareaFunction, ProjectionReport, ResidualSummary,
};
use crate::rng::derive_seed;
use crate::spectral::{
    argmax_stable, compute_spectrum, eikonal_defect, mean_square, mean_square_target, SolverOptions, SpectralError,
    Spectrum, DEFAULT_MAX_ITERATIONS, DEFAULT_TOL, DIM, MAX_PAIRS,
};

/// Bumped on any change to the report layout.
pub const SCHEMA_VERSION: u32 = 1;
/// Without rescaling, `K_min ≥ 1 − HYPOTHESIS_TOL` counts as `K ≥ 1`.
pub const HYPOTHESIS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub k_max: usize,
    pub eta_grid: Vec<f64>,
    pub seed: u64,
    pub eigenpairs: usize,
    pub residual_pairs: usize,
    pub surjectivity_samples: usize,
    pub distortion_pairs: usize,
    pub convexity_pairs: usize,
    pub antipode_samples: usize,
    pub solver_tol: f64,
    pub max_iterations: usize,
    pub rescale: bool,
    pub force: bool,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            k_max: DIM + 1,
            eta_grid: DEFAULT_ETA_GRID.to_vec(),
            seed: 0,
            eigenpairs: 9,
            residual_pairs: 100,
            surjectivity_samples: 500,
            distortion_pairs: 1000,
            convexity_pairs: 200,
            antipode_samples: 200,
            solver_tol: DEFAULT_TOL,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            rescale: true,
            force: false,
        }
    }
}

impl DiagnoseConfig {
    pub fn validate(&self) -> Result<(), DiagnoseError> {
        let bad = |msg: String| Err(DiagnoseError::Config(msg));
        if !(1..=DIM + 1).contains(&self.k_max) {
            return bad(format!("k_max must be in 1..={}, got {}", DIM + 1, self.k_max));
        }
        if self.eigenpairs <= self.k_max || self.eigenpairs > MAX_PAIRS {
            return bad(format!("eigenpairs must be in {}..={MAX_PAIRS}, got {}", self.k_max + 1, self.eigenpairs));
        }
        if self.eta_grid.is_empty() || self.eta_grid.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return bad(format!("eta_grid must be non-empty and positive, got {:?}", self.eta_grid));
        }
        if self.residual_pairs < 10 {
            return bad(format!("residual_pairs must be at least 10, got {}", self.residual_pairs));
        }
        if self.surjectivity_samples < 100 || self.distortion_pairs < 100 {
            return bad("surjectivity_samples and distortion_pairs must be at least 100".into());
        }
        if self.convexity_pairs == 0 || self.antipode_samples == 0 {
            return bad("convexity_pairs and antipode_samples must be positive".into());
        }
        if !(self.solver_tol > 0.0 && self.solver_tol.is_finite()) || self.max_iterations == 0 {
            return bad("solver_tol must be positive and max_iterations nonzero".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DiagnoseError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Where the surface came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SurfaceSource {
    pub kind: String,
    pub parameters: BTreeMap<String, f64>,
    pub path: Option<String>,
}

impl SurfaceSource {
    pub fn file(path: impl Into<String>) -> Self {
        Self { kind: "off".into(), parameters: BTreeMap::new(), path: Some(path.into()) }
    }

    pub fn generator(kind: &str, parameters: &[(&str, f64)]) -> Self {
        Self {
            kind: kind.into(),
            parameters: parameters.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct MeshTolerance {
    pub mean_edge_length: f64,
    pub max_graph_weight: f64,
    /// How far graph distances up to `π` may undercut the smooth ones.
    pub metric_undercut: f64,
    pub residual_step: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct SurfaceSummary {
    pub source: SurfaceSource,
    pub vertices: usize,
    pub faces: usize,
    pub total_area: f64,
    pub scale_factor: f64,
    pub k_min_input: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub hypothesis_violated: bool,
    pub mesh_tolerance: MeshTolerance,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct SpectrumSummary {
    pub eigenvalues: Vec<f64>,
    pub clusters: Vec<(usize, usize)>,
    pub max_solver_residual: f64,
    pub iterations: usize,
    /// `max_i |mean_square(f_i) − 1/(n+1)|`.
    pub normalization_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct MetricSummary {
    pub method: MetricMethod,
    pub diameter: f64,
    pub radius: f64,
    pub pi_minus_diameter: f64,
    /// Excess at a pair realizing the diameter.
    pub excess: f64,
    pub excess_pair: (usize, usize),
}

/// Diagnostics of one eigenfunction `f_i`.
#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct ModeDiagnostics {
    pub index: usize,
    pub eigenvalue: f64,
    pub sup: f64,
    /// `|max f_i − 1|`.
    pub sup_defect: f64,
    /// `max_v |cos d_{x_i}(v) − f_i(v)|` with `x_i = argmax f_i`.
    pub cos_profile_defect: f64,
    pub li_yau_max_ratio: Option<f64>,
    pub eikonal_defect: f64,
    pub residuals: Option<ResidualSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct KBlock {
    pub k: usize,
    pub eta_star: f64,
    pub frame: AntipodalFrame,
    /// Projections of `cos d_p` with `p` running over the frame points.
    pub projections: Vec<ProjectionReport>,
    pub projection_residual_sup: f64,
    pub projection_coeff_defect: f64,
    pub modes: Vec<ModeDiagnostics>,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct CoareaEntry {
    pub function: CoareaFunction,
    pub base: usize,
    pub defect: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct EquatorBlock {
    pub k: usize,
    pub eta: f64,
    pub petersen_max: f64,
    pub sphere_map: Option<SphereMapReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct Timestamps {
    pub started: String,
    pub finished: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: DiagnoseConfig,
    pub timestamps: Timestamps,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct PinchReport {
    pub schema_version: u32,
    pub surface: SurfaceSummary,
    pub spectrum: SpectrumSummary,
    pub metric: MetricSummary,
    pub pinching: Vec<KBlock>,
    pub coarea: Vec<CoareaEntry>,
    pub equator: Vec<EquatorBlock>,
    /// Reason for every `null` value, keyed by its path in the report.
    pub null_reasons: BTreeMap<String, String>,
    pub provenance: Provenance,
}

impl PinchReport {
    pub fn block(&self, k: usize) -> Option<&KBlock> {
        self.pinching.iter().find(|b| b.k == k)
    }

    pub fn equator_block(&self, k: usize, eta: f64) -> Option<&EquatorBlock> {
        self.equator.iter().find(|b| b.k == k && b.eta == eta)
    }

    pub fn gap(&self, i: usize) -> Option<f64> {
        self.spectrum.eigenvalues.get(i).map(|l| l - DIM as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// JSON schema of [`PinchReport`].
pub fn report_schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(PinchReport)).expect("schema serializes")
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Applies the curvature normalization: rescales to `K_min = 1` unless
/// disabled, and checks `K ≥ 1`. With `force`, violations are flagged instead
/// of rejected and a surface that cannot be rescaled keeps scale 1.
pub fn normalize_surface(surface: &TriSurface, cfg: &DiagnoseConfig) -> Result<(TriSurface, f64, bool), DiagnoseError> {
    let k_min = surface.curvature().k_min;
    let (scaled, factor) = if cfg.rescale {
        match rescale_to_curvature_bound(surface) {
            Ok(r) => r,
            Err(GeometryError::HypothesisViolation { .. }) if cfg.force => (surface.clone(), 1.0),
            Err(e) => return Err(e.into()),
        }
    } else {
        (surface.clone(), 1.0)
    };
    let violated = !(scaled.curvature().k_min >= 1.0 - HYPOTHESIS_TOL);
    if violated && !cfg.force {
        return Err(GeometryError::HypothesisViolation { k_min }.into());
    }
    Ok((scaled, factor, violated))
}

pub fn diagnose(surface: &TriSurface, source: SurfaceSource, cfg: &DiagnoseConfig) -> Result<PinchReport, DiagnoseError> {
    cfg.validate()?;
    let started = now_rfc3339();
    let k_min_input = surface.curvature().k_min;
    let (m, scale_factor, hypothesis_violated) = normalize_surface(surface, cfg)?;
    let curvature = m.curvature();
    let metric = SurfaceMetric::with_chords(&m);
    let solver = SolverOptions { tol: cfg.solver_tol, max_iterations: cfg.max_iterations, seed: derive_seed(cfg.seed, "solver") };
    let spectrum = compute_spectrum(&m, cfg.eigenpairs, &solver)?;
    let mut null_reasons = BTreeMap::new();

    let surface_summary = SurfaceSummary {
        source,
        vertices: m.num_vertices(),
        faces: m.num_faces(),
        total_area: m.total_area(),
        scale_factor,
        k_min_input,
        k_min: curvature.k_min,
        k_max: curvature.k_max,
        hypothesis_violated,
        mesh_tolerance: MeshTolerance {
            mean_edge_length: m.mean_edge_length(),
            max_graph_weight: metric.max_weight(),
            metric_undercut: metric.max_weight().powi(2) / 24.0 * PI,
            residual_step: default_step(&m),
        },
    };
    let spectrum_summary = summarize_spectrum(&spectrum, &m);
    let metric_summary = summarize_metric(&metric);

    let modes: Vec<ModeDiagnostics> = (1..=cfg.k_max)
        .map(|i| {
            let f = spectrum.eigenfunction(i);
            let sup = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let residuals =
                match residual_distribution(&spectrum, i, &m, &metric, cfg.residual_pairs, derive_seed(cfg.seed, &format!("residuals/{i}"))) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        null_reasons.insert(format!("pinching.modes[{}].residuals", i - 1), e.to_string());
                        None
                    }
                };
            let li_yau_max_ratio = match li_yau_check(&spectrum, &m, i) {
                Ok(r) => Some(r.max_ratio),
                Err(e) => {
                    null_reasons.insert(format!("pinching.modes[{}].li_yau_max_ratio", i - 1), e.to_string());
                    None
                }
            };
            ModeDiagnostics {
                index: i,
                eigenvalue: spectrum.eigenvalues[i],
                sup,
                sup_defect: (sup - 1.0).abs(),
                cos_profile_defect: cos_profile_defect(&metric, f, argmax_stable(f)),
                li_yau_max_ratio,
                eikonal_defect: eikonal_defect(&m, f),
                residuals,
            }
        })
        .collect();

    let mut pinching = Vec::new();
    for k in 1..=cfg.k_max {
        let frame = extract_frame(&spectrum, &metric, k).map_err(|e| DiagnoseError::Config(e.to_string()))?;
        let projections: Vec<ProjectionReport> = frame
            .pairs
            .iter()
            .flat_map(|&(x, y)| [x, y])
            .map(|p| project_cos_distance(&spectrum, &m, &metric, p, k))
            .collect();
        pinching.push(KBlock {
            k,
            eta_star: pk_deficiency(&frame),
            projection_residual_sup: projections.iter().map(|p| p.residual_sup).fold(0.0, f64::max),
            projection_coeff_defect: projections.iter().map(|p| p.coeff_norm_defect).fold(0.0, f64::max),
            projections,
            frame,
            modes: modes[..k].to_vec(),
        });
    }

    let base = argmax_stable(spectrum.eigenfunction(1));
    let coarea = CoareaFunction::ALL
        .iter()
        .enumerate()
        .map(|(j, &u)| {
            let defect = match coarea_comparison(&m, &metric, base, u) {
                Ok(d) => Some(d),
                Err(e) => {
                    null_reasons.insert(format!("coarea[{j}].defect"), e.to_string());
                    None
                }
            };
            CoareaEntry { function: u, base, defect }
        })
        .collect();

    let mut equator = Vec::new();
    for k in 1..=cfg.k_max {
        for &eta in &cfg.eta_grid {
            let opts = EquatorOptions {
                surjectivity_samples: cfg.surjectivity_samples,
                pair_samples: cfg.distortion_pairs,
                convexity_samples: cfg.convexity_pairs,
                antipode_samples: cfg.antipode_samples,
                seed: cfg.seed,
            };
            let sphere_map = match sphere_map_report(&spectrum, &m, &metric, k, eta, &opts) {
                Ok(r) => Some(r),
                Err(e) => {
                    null_reasons.insert(format!("equator[{}].sphere_map", equator.len()), e.to_string());
                    None
                }
            };
            equator.push(EquatorBlock { k, eta, petersen_max: petersen_bound_check(&spectrum, k), sphere_map });
        }
    }

    Ok(PinchReport {
        schema_version: SCHEMA_VERSION,
        surface: surface_summary,
        spectrum: spectrum_summary,
        metric: metric_summary,
        pinching,
        coarea,
        equator,
        null_reasons,
        provenance: Provenance {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            config: cfg.clone(),
            timestamps: Timestamps { started, finished: now_rfc3339() },
        },
    })
}

fn summarize_spectrum(spectrum: &Spectrum, surface: &TriSurface) -> SpectrumSummary {
    SpectrumSummary {
        eigenvalues: spectrum.eigenvalues.clone(),
        clusters: spectrum.clusters.clone(),
        max_solver_residual: spectrum.solver_residuals.iter().copied().fold(0.0, f64::max),
        iterations: spectrum.iterations,
        normalization_error: spectrum.eigenfunctions[1..]
            .iter()
            .map(|f| (mean_square(surface, f) - mean_square_target()).abs())
            .fold(0.0, f64::max),
    }
}

fn summarize_metric(metric: &SurfaceMetric) -> MetricSummary {
    let p = argmax_stable(metric.eccentricities());
    let q = argmax_stable(&metric.single_source(p, None).distance);
    let diameter = metric.diameter();
    MetricSummary {
        method: metric.method(),
        diameter,
        radius: metric.radius(),
        pi_minus_diameter: PI - diameter,
        excess: metric.excess(p, q),
        excess_pair: (p, q),
    }
}

/// Drops `provenance.timestamps` so that two reports can be compared byte for byte.
pub fn without_timestamps(json: &str) -> Result<String, serde_json::Error> {
    let mut v: serde_json::Value = serde_json::from_str(json)?;
    if let Some(p) = v.get_mut("provenance").and_then(|p| p.as_object_mut()) {
        p.remove("timestamps");
    }
    serde_json::to_string_pretty(&v)
}
