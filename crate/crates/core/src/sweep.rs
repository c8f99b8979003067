//! Parameter sweeps over generated surfaces, flat CSV export and trend
//! statistics.

use std::f64::consts::PI;
use std::path::Path;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{generate_dumbbell, generate_spheroid, GeometryError, TriSurface};
use crate::report::{diagnose, DiagnoseConfig, DiagnoseError, PinchReport, SurfaceSource};
use crate::stats::spearman;

pub const MIN_GRID_POINTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum SweepGenerator {
    Spheroid,
    Dumbbell,
}

impl SweepGenerator {
    pub fn parameter(self) -> &'static str {
        match self {
            Self::Spheroid => "ratio",
            Self::Dumbbell => "neck",
        }
    }

    pub fn generate(self, value: f64, subdivisions: u32) -> Result<TriSurface, GeometryError> {
        match self {
            Self::Spheroid => generate_spheroid(value, subdivisions),
            Self::Dumbbell => generate_dumbbell(value, subdivisions),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Spheroid => "spheroid",
            Self::Dumbbell => "dumbbell",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct SweepSpec {
    pub generator: SweepGenerator,
    pub subdivisions: u32,
    pub grid: Vec<f64>,
    /// `k` and `eta` used for the trend statistics.
    pub trend_k: usize,
    pub trend_eta: f64,
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep grid needs at least {MIN_GRID_POINTS} points, got {0}")]
    GridTooSmall(usize),
    #[error("sweep grid must be strictly increasing and finite")]
    GridNotMonotone,
    #[error("trend k = {k} exceeds k_max = {k_max}")]
    TrendK { k: usize, k_max: usize },
    #[error("trend eta {0} is not in the eta grid")]
    TrendEta(f64),
    #[error(transparent)]
    Config(#[from] DiagnoseError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SweepSpec {
    pub fn validate(&self, cfg: &DiagnoseConfig) -> Result<(), SweepError> {
        if self.grid.len() < MIN_GRID_POINTS {
            return Err(SweepError::GridTooSmall(self.grid.len()));
        }
        if self.grid.iter().any(|v| !v.is_finite()) || self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SweepError::GridNotMonotone);
        }
        cfg.validate()?;
        if self.trend_k == 0 || self.trend_k > cfg.k_max {
            return Err(SweepError::TrendK { k: self.trend_k, k_max: cfg.k_max });
        }
        if !cfg.eta_grid.contains(&self.trend_eta) {
            return Err(SweepError::TrendEta(self.trend_eta));
        }
        Ok(())
    }
}

/// Grid `start, start + step, …` up to `stop` inclusive (with a small slack
/// for rounding), each value rounded to 12 decimals.
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || !(stop >= start) {
        return vec![start];
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct SweepPoint {
    pub value: f64,
    pub report: Option<PinchReport>,
    pub error: Option<String>,
}

/// Spearman correlations between sweep columns, `None` when undefined.
#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct Trends {
    pub k: usize,
    pub eta: f64,
    pub points: usize,
    /// `ρ(η*_k, λ_k − n)`.
    pub frame_vs_gap: Option<f64>,
    /// `ρ(gh_defect_k, λ_k − n)`.
    pub gh_vs_gap: Option<f64>,
    /// `ρ(π − diam, λ_1 − n)`.
    pub diameter_vs_gap: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct SweepResult {
    pub generator: SweepGenerator,
    pub parameter: String,
    pub subdivisions: u32,
    pub grid: Vec<f64>,
    pub points: Vec<SweepPoint>,
    pub trends: Trends,
}

pub fn run_sweep(spec: &SweepSpec, cfg: &DiagnoseConfig) -> Result<SweepResult, SweepError> {
    spec.validate(cfg)?;
    let points: Vec<SweepPoint> = spec
        .grid
        .iter()
        .map(|&value| {
            let source = SurfaceSource::generator(
                spec.generator.name(),
                &[(spec.generator.parameter(), value), ("subdivisions", spec.subdivisions as f64)],
            );
            let outcome = spec
                .generator
                .generate(value, spec.subdivisions)
                .map_err(DiagnoseError::from)
                .and_then(|s| diagnose(&s, source, cfg));
            match outcome {
                Ok(r) => SweepPoint { value, report: Some(r), error: None },
                Err(e) => SweepPoint { value, report: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    let trends = trends(&points, spec.trend_k, spec.trend_eta);
    Ok(SweepResult {
        generator: spec.generator,
        parameter: spec.generator.parameter().into(),
        subdivisions: spec.subdivisions,
        grid: spec.grid.clone(),
        points,
        trends,
    })
}

pub fn gh_defect_of(report: &PinchReport, k: usize, eta: f64) -> Option<f64> {
    report.equator_block(k, eta)?.sphere_map.as_ref().map(|m| m.gh_defect)
}

pub fn trends(points: &[SweepPoint], k: usize, eta: f64) -> Trends {
    let reports: Vec<&PinchReport> = points.iter().filter_map(|p| p.report.as_ref()).collect();
    let column = |f: &dyn Fn(&PinchReport) -> Option<f64>| -> Option<Vec<f64>> { reports.iter().map(|r| f(r)).collect() };
    let rho = |a: Option<Vec<f64>>, b: Option<Vec<f64>>| match (a, b) {
        (Some(a), Some(b)) if a.len() >= MIN_GRID_POINTS => spearman(&a, &b),
        _ => None,
    };
    let gap_k = column(&|r| r.gap(k));
    Trends {
        k,
        eta,
        points: reports.len(),
        frame_vs_gap: rho(column(&|r| r.block(k).map(|b| b.eta_star)), gap_k.clone()),
        gh_vs_gap: rho(column(&|r| gh_defect_of(r, k, eta)), gap_k),
        diameter_vs_gap: rho(column(&|r| Some(PI - r.metric.diameter)), column(&|r| r.gap(1))),
    }
}

/// Column names of the flat sweep CSV; the same for every row.
pub fn csv_columns(cfg: &DiagnoseConfig, parameter: &str) -> Vec<String> {
    let mut c: Vec<String> = [parameter, "ok", "error", "hypothesis_violated", "vertices", "scale_factor", "k_min"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    c.extend((1..=cfg.k_max).map(|i| format!("lambda_{i}")));
    c.extend(["diameter", "radius", "pi_minus_diameter", "excess"].map(String::from));
    for k in 1..=cfg.k_max {
        c.extend(["eta_star", "projection_residual_sup", "projection_coeff_defect"].map(|n| format!("{n}_k{k}")));
    }
    for i in 1..=cfg.k_max {
        c.extend(
            ["sup_defect", "cos_profile_defect", "li_yau", "eikonal", "residual_median", "residual_p90"]
                .map(|n| format!("{n}_f{i}")),
        );
    }
    for k in 1..=cfg.k_max {
        c.push(format!("petersen_k{k}"));
        for eta in &cfg.eta_grid {
            c.extend(
                [
                    "equator_size",
                    "surjectivity",
                    "distortion_cos",
                    "distortion_angular",
                    "gh_defect",
                    "convexity",
                    "disconnections",
                    "antipode",
                    "gradient_max",
                ]
                .map(|n| format!("{n}_k{k}_eta{eta}")),
            );
        }
    }
    c
}

fn report_cells(r: &PinchReport, cfg: &DiagnoseConfig) -> Vec<(String, String)> {
    let num = |x: f64| x.to_string();
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut cells = vec![
        ("ok".into(), "true".into()),
        ("hypothesis_violated".into(), r.surface.hypothesis_violated.to_string()),
        ("vertices".into(), r.surface.vertices.to_string()),
        ("scale_factor".into(), num(r.surface.scale_factor)),
        ("k_min".into(), num(r.surface.k_min)),
        ("diameter".into(), num(r.metric.diameter)),
        ("radius".into(), num(r.metric.radius)),
        ("pi_minus_diameter".into(), num(r.metric.pi_minus_diameter)),
        ("excess".into(), num(r.metric.excess)),
    ];
    for i in 1..=cfg.k_max {
        cells.push((format!("lambda_{i}"), opt(r.spectrum.eigenvalues.get(i).copied())));
    }
    for b in &r.pinching {
        let k = b.k;
        cells.push((format!("eta_star_k{k}"), num(b.eta_star)));
        cells.push((format!("projection_residual_sup_k{k}"), num(b.projection_residual_sup)));
        cells.push((format!("projection_coeff_defect_k{k}"), num(b.projection_coeff_defect)));
    }
    if let Some(b) = r.pinching.last() {
        for m in &b.modes {
            let i = m.index;
            cells.push((format!("sup_defect_f{i}"), num(m.sup_defect)));
            cells.push((format!("cos_profile_defect_f{i}"), num(m.cos_profile_defect)));
            cells.push((format!("li_yau_f{i}"), opt(m.li_yau_max_ratio)));
            cells.push((format!("eikonal_f{i}"), num(m.eikonal_defect)));
            cells.push((format!("residual_median_f{i}"), opt(m.residuals.as_ref().map(|s| s.median))));
            cells.push((format!("residual_p90_f{i}"), opt(m.residuals.as_ref().map(|s| s.p90))));
        }
    }
    for e in &r.equator {
        let (k, eta) = (e.k, e.eta);
        cells.push((format!("petersen_k{k}"), num(e.petersen_max)));
        if let Some(s) = &e.sphere_map {
            for (n, v) in [
                ("equator_size", s.size as f64),
                ("surjectivity", s.surjectivity_defect),
                ("distortion_cos", s.distortion_cos),
                ("distortion_angular", s.distortion_angular),
                ("gh_defect", s.gh_defect),
                ("convexity", s.convexity_defect),
                ("disconnections", s.disconnections as f64),
                ("antipode", s.antipode_defect),
                ("gradient_max", s.gradient_max),
            ] {
                cells.push((format!("{n}_k{k}_eta{eta}"), num(v)));
            }
        }
    }
    cells
}

pub fn write_csv(result: &SweepResult, cfg: &DiagnoseConfig, out: impl std::io::Write) -> Result<(), SweepError> {
    let columns = csv_columns(cfg, &result.parameter);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&columns)?;
    for p in &result.points {
        let mut cells: Vec<(String, String)> = match &p.report {
            Some(r) => report_cells(r, cfg),
            None => vec![("ok".into(), "false".into())],
        };
        cells.push((result.parameter.clone(), p.value.to_string()));
        cells.push(("error".into(), p.error.clone().unwrap_or_default()));
        let row: Vec<String> = columns
            .iter()
            .map(|c| cells.iter().find(|(n, _)| n == c).map(|(_, v)| v.clone()).unwrap_or_default())
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `sweep.json`, `sweep.csv` and one `point_XX.json` per grid point.
pub fn write_outputs(result: &SweepResult, cfg: &DiagnoseConfig, dir: &Path) -> Result<(), SweepError> {
    std::fs::create_dir_all(dir)?;
    let mut csv_bytes = Vec::new();
    write_csv(result, cfg, &mut csv_bytes)?;
    crate::io::write_atomic(&dir.join("sweep.csv"), &csv_bytes)?;
    for (i, p) in result.points.iter().enumerate() {
        if let Some(r) = &p.report {
            crate::io::write_atomic(&dir.join(format!("point_{i:02}.json")), r.to_json().as_bytes())?;
        }
    }
    let json = serde_json::to_string_pretty(result)? + "\n";
    crate::io::write_atomic(&dir.join("sweep.json"), json.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> DiagnoseConfig {
        DiagnoseConfig {
            k_max: 2,
            eta_grid: vec![0.1],
            residual_pairs: 10,
            distortion_pairs: 100,
            surjectivity_samples: 100,
            convexity_pairs: 20,
            antipode_samples: 20,
            ..Default::default()
        }
    }

    fn spec(grid: Vec<f64>) -> SweepSpec {
        SweepSpec { generator: SweepGenerator::Spheroid, subdivisions: 2, grid, trend_k: 2, trend_eta: 0.1 }
    }

    #[test]
    fn grid_helpers() {
        assert_eq!(linear_grid(0.8, 1.25, 0.05).len(), 10);
        assert_eq!(linear_grid(0.8, 1.25, 0.05)[3], 0.95);
        assert_eq!(linear_grid(1.0, 0.0, 0.1), vec![1.0]);
    }

    #[test]
    fn grid_validation() {
        let cfg = quick();
        assert!(matches!(spec(vec![1.0]).validate(&cfg), Err(SweepError::GridTooSmall(1))));
        assert!(matches!(spec(vec![1.0, 1.1, 1.1]).validate(&cfg), Err(SweepError::GridNotMonotone)));
        assert!(matches!(spec(vec![1.0, 0.9, 1.1]).validate(&cfg), Err(SweepError::GridNotMonotone)));
        let mut s = spec(vec![0.9, 1.0, 1.1]);
        s.trend_eta = 0.2;
        assert!(matches!(s.validate(&cfg), Err(SweepError::TrendEta(_))));
        s.trend_eta = 0.1;
        s.trend_k = 3;
        assert!(matches!(s.validate(&cfg), Err(SweepError::TrendK { .. })));
    }

    #[test]
    fn small_sweep_and_csv() {
        let cfg = quick();
        let r = run_sweep(&spec(vec![0.9, 1.0, 1.2]), &cfg).unwrap();
        assert_eq!(r.points.len(), 3);
        assert!(r.points.iter().all(|p| p.report.is_some()), "{:?}", r.points.iter().map(|p| &p.error).collect::<Vec<_>>());
        for rho in [r.trends.frame_vs_gap, r.trends.gh_vs_gap, r.trends.diameter_vs_gap].into_iter().flatten() {
            assert!((-1.0..=1.0).contains(&rho));
        }
        let mut buf = Vec::new();
        write_csv(&r, &cfg, &mut buf).unwrap();
        let mut rd = csv::Reader::from_reader(buf.as_slice());
        let header = rd.headers().unwrap().clone();
        assert_eq!(header.len(), csv_columns(&cfg, "ratio").len());
        let rows: Vec<_> = rd.records().map(Result::unwrap).collect();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|row| row.len() == header.len()));
        assert!(rows.iter().all(|row| !row[header.iter().position(|h| h == "lambda_2").unwrap()].is_empty()));
    }

    #[test]
    fn failed_points_are_recorded() {
        let cfg = quick();
        let s = SweepSpec { generator: SweepGenerator::Dumbbell, grid: vec![0.3, 0.5, 1.5], ..spec(vec![]) };
        let r = run_sweep(&s, &cfg).unwrap();
        assert!(r.points.iter().all(|p| p.report.is_none() && p.error.is_some()));
        let forced = run_sweep(&SweepSpec { grid: vec![0.3, 0.4, 0.5], ..s }, &DiagnoseConfig { force: true, ..cfg.clone() }).unwrap();
        assert!(forced.points.iter().all(|p| p.report.as_ref().unwrap().surface.hypothesis_violated));
        let mut buf = Vec::new();
        write_csv(&forced, &cfg, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().skip(1).filter(|l| l.contains(",true,")).count(), 3);
    }
}
