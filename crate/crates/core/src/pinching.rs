//! Diagnostics relating eigenfunctions with eigenvalue close to `n` to the
//! metric: antipodal frames and the `P_k(η)` deficiency, Fourier projection
//! of `cos d_p`, the Li–Yau gradient bound, coarea means and the residual of
//! `(f∘γ)'' + f∘γ` along sampled shortest paths.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::TriSurface;
use crate::metric::{default_step, SurfaceMetric};
use crate::spectral::{argmax_stable, argmin_stable, gradient, Spectrum, DIM};

/// Span of the centered second difference used along paths, in samples.
pub const RESIDUAL_STENCIL_SPAN: usize = 6;
/// A base point needs a vertex at distance at least `π − NEAR_ANTIPODE_SLACK`.
pub const NEAR_ANTIPODE_SLACK: f64 = 0.3;
/// Floor applied to the Li–Yau right-hand side.
pub const LI_YAU_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PinchError {
    #[error("k = {k} is invalid: need 1 <= k <= {max}")]
    InvalidK { k: usize, max: usize },
    #[error("eigenvalue index {index} is out of range or has non-positive eigenvalue")]
    InvalidIndex { index: usize },
    #[error("base point {p} has no near-antipode (max distance {max_distance})")]
    NoAntipode { p: usize, max_distance: f64 },
    #[error("path of length {length} too short for the residual stencil (need {required})")]
    PathTooShort { length: f64, required: f64 },
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
}

pub(crate) fn check_k(spectrum: &Spectrum, k: usize) -> Result<(), PinchError> {
    let max = (DIM + 1).min(spectrum.len().saturating_sub(1));
    if k == 0 || k > max {
        return Err(PinchError::InvalidK { k, max });
    }
    Ok(())
}

/// Extremal points of the first `k` nonconstant eigenfunctions with all the
/// distances between them.
#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct AntipodalFrame {
    pub k: usize,
    /// `(x_i, y_i) = (argmax f_i, argmin f_i)`.
    pub pairs: Vec<(usize, usize)>,
    /// `d(x_i, y_i)`.
    pub pair_distance: Vec<f64>,
    /// `d(x_i, x_j)`, `d(x_i, y_j)` and `d(y_i, y_j)` as `k × k` tables.
    pub xx: Vec<Vec<f64>>,
    pub xy: Vec<Vec<f64>>,
    pub yy: Vec<Vec<f64>>,
}

pub fn extract_frame(spectrum: &Spectrum, metric: &SurfaceMetric, k: usize) -> Result<AntipodalFrame, PinchError> {
    check_k(spectrum, k)?;
    let pairs: Vec<(usize, usize)> = spectrum
        .leading(k)
        .iter()
        .map(|f| (argmax_stable(f), argmin_stable(f)))
        .collect();
    Ok(frame_from_pairs(metric, pairs))
}

pub fn frame_from_pairs(metric: &SurfaceMetric, pairs: Vec<(usize, usize)>) -> AntipodalFrame {
    let from_x: Vec<Vec<f64>> = pairs.iter().map(|p| metric.single_source(p.0, None).distance).collect();
    let from_y: Vec<Vec<f64>> = pairs.iter().map(|p| metric.single_source(p.1, None).distance).collect();
    let k = pairs.len();
    let table = |src: &[Vec<f64>], pick: fn(&(usize, usize)) -> usize| -> Vec<Vec<f64>> {
        (0..k).map(|i| (0..k).map(|j| src[i][pick(&pairs[j])]).collect()).collect()
    };
    AntipodalFrame {
        k,
        pair_distance: (0..k).map(|i| from_x[i][pairs[i].1]).collect(),
        xx: table(&from_x, |p| p.0),
        xy: table(&from_x, |p| p.1),
        yy: table(&from_y, |p| p.1),
        pairs,
    }
}

/// Smallest `η*` such that the frame has property `P_k(η)` for all `η > η*`:
/// `max(max_i (π − d(x_i, y_i)), max_{i≠j} |d(x_i, x_j) − π/2|)`.
pub fn pk_deficiency(frame: &AntipodalFrame) -> f64 {
    let mut eta = f64::NEG_INFINITY;
    for i in 0..frame.k {
        eta = eta.max(PI - frame.pair_distance[i]);
        for j in 0..frame.k {
            if i != j {
                eta = eta.max((frame.xx[i][j] - FRAC_PI_2).abs());
            }
        }
    }
    eta
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct ProjectionReport {
    pub base: usize,
    /// `a_i(p) = (n+1)/vol ∫ cos d_p f_i`, `i = 1..=k`.
    pub coefficients: Vec<f64>,
    pub residual_sup: f64,
    pub residual_l2: f64,
    /// `|Σ a_i² − 1|`.
    pub coeff_norm_defect: f64,
}

/// Graph distances from `p` clamped to `[0, π]`, then cosines.
pub fn cos_distance(metric: &SurfaceMetric, p: usize) -> Vec<f64> {
    metric
        .single_source(p, None)
        .distance
        .iter()
        .map(|d| d.clamp(0.0, PI).cos())
        .collect()
}

pub fn project_cos_distance(
    spectrum: &Spectrum,
    surface: &TriSurface,
    metric: &SurfaceMetric,
    p: usize,
    k: usize,
) -> ProjectionReport {
    let k = k.min(spectrum.len().saturating_sub(1));
    let c = cos_distance(metric, p);
    let area = surface.vertex_area();
    let vol = surface.total_area();
    let scale = (DIM as f64 + 1.0) / vol;
    let coefficients: Vec<f64> = spectrum.eigenfunctions[1..=k]
        .iter()
        .map(|f| scale * c.iter().zip(f).zip(area).map(|((x, y), a)| a * x * y).sum::<f64>())
        .collect();
    let mut residual_sup: f64 = 0.0;
    let mut l2 = 0.0;
    for v in 0..c.len() {
        let approx: f64 = coefficients.iter().zip(&spectrum.eigenfunctions[1..=k]).map(|(a, f)| a * f[v]).sum();
        let r = (c[v] - approx).abs();
        residual_sup = residual_sup.max(r);
        l2 += area[v] * r * r;
    }
    let norm_sq: f64 = coefficients.iter().map(|a| a * a).sum();
    ProjectionReport {
        base: p,
        coeff_norm_defect: (norm_sq - 1.0).abs(),
        coefficients,
        residual_sup,
        residual_l2: (l2 / vol).sqrt(),
    }
}

/// `max_v |cos d_x(v) − f(v)|`.
pub fn cos_profile_defect(metric: &SurfaceMetric, f: &[f64], x: usize) -> f64 {
    cos_distance(metric, x).iter().zip(f).map(|(c, y)| (c - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct LiYauReport {
    pub max_ratio: f64,
    pub worst_face: usize,
}

/// Max over faces of `|∇f|² / RHS`, with
/// `RHS = 2λ sup f / (sup f − inf f) · (sup f − f)(f − inf f)` evaluated at
/// the face-centroid value of `f` and floored at [`LI_YAU_FLOOR`].
pub fn li_yau_ratio(surface: &TriSurface, f: &[f64], lambda: f64) -> LiYauReport {
    let sup = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let inf = f.iter().copied().fold(f64::INFINITY, f64::min);
    let coeff = 2.0 * lambda * sup / (sup - inf);
    let grad = gradient(surface, f).face_norm_squared();
    let mut best = LiYauReport { max_ratio: 0.0, worst_face: 0 };
    for (fi, t) in surface.faces().iter().enumerate() {
        let fc = (f[t[0]] + f[t[1]] + f[t[2]]) / 3.0;
        let rhs = (coeff * (sup - fc) * (fc - inf)).max(LI_YAU_FLOOR);
        let ratio = grad[fi] / rhs;
        if ratio > best.max_ratio {
            best = LiYauReport { max_ratio: ratio, worst_face: fi };
        }
    }
    best
}

pub fn li_yau_check(spectrum: &Spectrum, surface: &TriSurface, index: usize) -> Result<LiYauReport, PinchError> {
    match spectrum.eigenvalues.get(index) {
        Some(&lambda) if lambda > 0.0 && index > 0 => Ok(li_yau_ratio(surface, &spectrum.eigenfunctions[index], lambda)),
        _ => Err(PinchError::InvalidIndex { index }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum CoareaFunction {
    Cos,
    CosSquared,
    SinSquared,
}

impl CoareaFunction {
    pub const ALL: [CoareaFunction; 3] = [Self::Cos, Self::CosSquared, Self::SinSquared];

    pub fn eval(self, d: f64) -> f64 {
        match self {
            Self::Cos => d.cos(),
            Self::CosSquared => d.cos().powi(2),
            Self::SinSquared => d.sin().powi(2),
        }
    }

    /// Mean of `u(d_pole)` over the round 2-sphere.
    pub fn sphere_mean(self) -> f64 {
        match self {
            Self::Cos => 0.0,
            Self::CosSquared => 1.0 / 3.0,
            Self::SinSquared => 2.0 / 3.0,
        }
    }
}

/// `|mean_M u(d_p) − mean_{S²} u(d_pole)|`.
pub fn coarea_comparison(
    surface: &TriSurface,
    metric: &SurfaceMetric,
    p: usize,
    u: CoareaFunction,
) -> Result<f64, PinchError> {
    let field = metric.single_source(p, None);
    let max_distance = field.max_finite();
    if max_distance < PI - NEAR_ANTIPODE_SLACK {
        return Err(PinchError::NoAntipode { p, max_distance });
    }
    let area = surface.vertex_area();
    let mean = field
        .distance
        .iter()
        .zip(area)
        .map(|(d, a)| a * u.eval(d.clamp(0.0, PI)))
        .sum::<f64>()
        / surface.total_area();
    Ok((mean - u.sphere_mean()).abs())
}

/// `∫ |v'' + v|² dt` over the interior of a uniformly sampled profile, with
/// `v''` from a centered difference spanning `span` samples on each side.
pub fn profile_residual(values: &[f64], step: f64, span: usize) -> f64 {
    let hh = step * span as f64;
    (span..values.len().saturating_sub(span))
        .map(|j| {
            let z = (values[j + span] - 2.0 * values[j] + values[j - span]) / (hh * hh) + values[j];
            z * z * step
        })
        .sum()
}

/// Residual of `(f∘γ)'' + f∘γ` along the graph shortest path from `a` to `b`.
pub fn geodesic_residual_of(
    f: &[f64],
    surface: &TriSurface,
    metric: &SurfaceMetric,
    a: usize,
    b: usize,
) -> Result<f64, PinchError> {
    let h = default_step(surface);
    let path = metric.geodesic_path(surface, a, b, h);
    let required = 2 * RESIDUAL_STENCIL_SPAN + 1;
    if path.samples.len() < required || a == b {
        return Err(PinchError::PathTooShort { length: path.length(), required: (required - 1) as f64 * h });
    }
    Ok(profile_residual(&path.sample(f), h, RESIDUAL_STENCIL_SPAN))
}

pub fn geodesic_residual(
    spectrum: &Spectrum,
    index: usize,
    surface: &TriSurface,
    metric: &SurfaceMetric,
    a: usize,
    b: usize,
) -> Result<f64, PinchError> {
    let f = spectrum.eigenfunctions.get(index).ok_or(PinchError::InvalidIndex { index })?;
    geodesic_residual_of(f, surface, metric, a, b)
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct ResidualSummary {
    pub count: usize,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

impl ResidualSummary {
    pub fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        let q = |p: f64| values[((values.len() - 1) as f64 * p).round() as usize];
        Self { count: values.len(), median: q(0.5), p90: q(0.9), max: *values.last().unwrap() }
    }
}

/// Geodesic residuals of eigenfunction `index` over `m` seeded random vertex
/// pairs whose paths are long enough for the stencil.
pub fn residual_distribution(
    spectrum: &Spectrum,
    index: usize,
    surface: &TriSurface,
    metric: &SurfaceMetric,
    m: usize,
    seed: u64,
) -> Result<ResidualSummary, PinchError> {
    if m < 10 {
        return Err(PinchError::TooFewSamples { min: 10, got: m });
    }
    let f = spectrum.eigenfunctions.get(index).ok_or(PinchError::InvalidIndex { index })?;
    let mut rng = crate::rng::stream(seed, "residual_distribution");
    let n = surface.num_vertices();
    let min_len = 2.0 * RESIDUAL_STENCIL_SPAN as f64 * default_step(surface);
    let mut pairs = Vec::with_capacity(m);
    let mut attempts = 0;
    while pairs.len() < m && attempts < 100 * m {
        attempts += 1;
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b && metric.distance(a, b) >= 1.5 * min_len {
            pairs.push((a, b));
        }
    }
    let values: Vec<f64> = pairs
        .par_iter()
        .filter_map(|&(a, b)| geodesic_residual_of(f, surface, metric, a, b).ok())
        .collect();
    if values.len() < 10 {
        return Err(PinchError::TooFewSamples { min: 10, got: values.len() });
    }
    Ok(ResidualSummary::from_values(values))
}
