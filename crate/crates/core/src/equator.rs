//! Almost-equators `A_k^η`, the sphere map `Φ = F/|F|` and the defects that
//! make `Φ` an ε-Gromov–Hausdorff approximation onto `S^{k−1}`.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::TriSurface;
use crate::metric::SurfaceMetric;
use crate::pinching::check_k;
use crate::pinching::PinchError;
use crate::spectral::{gradient, Spectrum};

pub const DEFAULT_ETA_GRID: [f64; 3] = [0.05, 0.1, 0.2];
/// The outer set of the convexity check uses `η′ = OUTER_ETA_FACTOR · η`.
pub const OUTER_ETA_FACTOR: f64 = 3.0;

#[derive(Debug, Error)]
pub enum EquatorError {
    #[error("almost-equator is empty (k = {k}, eta = {eta})")]
    EmptyEquator { k: usize, eta: f64 },
    #[error("eta must be positive and finite, got {0}")]
    InvalidEta(f64),
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error(transparent)]
    Pinch(#[from] PinchError),
}

/// `Σ_{i≤k} f_i(v)²` at every vertex.
pub fn sum_of_squares(spectrum: &Spectrum, k: usize) -> Vec<f64> {
    let mut s = vec![0.0; spectrum.eigenfunctions.first().map_or(0, Vec::len)];
    for f in spectrum.leading(k) {
        for (acc, x) in s.iter_mut().zip(f) {
            *acc += x * x;
        }
    }
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlmostEquator {
    pub k: usize,
    pub eta: f64,
    /// Sorted vertex indices with `|Σ f_i² − 1| < eta`.
    pub members: Vec<usize>,
    /// Component label of each member under the edge graph restricted to the set.
    pub component: Vec<usize>,
    pub num_components: usize,
}

impl AlmostEquator {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &v in &self.members {
            m[v] = true;
        }
        m
    }
}

pub fn almost_equator(
    spectrum: &Spectrum,
    surface: &TriSurface,
    k: usize,
    eta: f64,
) -> Result<AlmostEquator, EquatorError> {
    check_k(spectrum, k)?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(EquatorError::InvalidEta(eta));
    }
    let members: Vec<usize> = sum_of_squares(spectrum, k)
        .iter()
        .enumerate()
        .filter(|(_, s)| (*s - 1.0).abs() < eta)
        .map(|(v, _)| v)
        .collect();
    if members.is_empty() {
        return Err(EquatorError::EmptyEquator { k, eta });
    }
    let (component, num_components) = label_components(surface, &members);
    Ok(AlmostEquator { k, eta, members, component, num_components })
}

fn label_components(surface: &TriSurface, members: &[usize]) -> (Vec<usize>, usize) {
    let n = surface.num_vertices();
    let mut slot = vec![usize::MAX; n];
    for (i, &v) in members.iter().enumerate() {
        slot[v] = i;
    }
    let mut parent: Vec<usize> = (0..members.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (a, b) in surface.edges() {
        if slot[a] != usize::MAX && slot[b] != usize::MAX {
            let (ra, rb) = (find(&mut parent, slot[a]), find(&mut parent, slot[b]));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut label = vec![usize::MAX; members.len()];
    let mut next = 0;
    let mut out = Vec::with_capacity(members.len());
    for i in 0..members.len() {
        let r = find(&mut parent, i);
        if label[r] == usize::MAX {
            label[r] = next;
            next += 1;
        }
        out.push(label[r]);
    }
    (out, next)
}

/// `Φ(v) = F(v)/|F(v)|` for each member of the equator.
pub fn sphere_map(spectrum: &Spectrum, equator: &AlmostEquator) -> Vec<Vec<f64>> {
    let funcs = spectrum.leading(equator.k);
    equator
        .members
        .iter()
        .map(|&v| {
            let x: Vec<f64> = funcs.iter().map(|f| f[v]).collect();
            let norm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            x.iter().map(|c| c / norm).collect()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Angular distance on the unit sphere.
pub fn sphere_distance(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b).clamp(-1.0, 1.0).acos()
}

/// Quasi-uniform points of `S^{k−1}`: `{±1}` for `k = 1`, equally spaced
/// angles for `k = 2`, a Fibonacci lattice for `k = 3`, each with a seeded
/// offset.
pub fn sphere_samples(k: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = crate::rng::stream(seed, "sphere_samples");
    match k {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => {
            let u: f64 = rng.gen();
            (0..m)
                .map(|j| {
                    let t = 2.0 * PI * (j as f64 + u) / m as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect()
        }
        _ => {
            let (u, w): (f64, f64) = (rng.gen(), rng.gen());
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..m)
                .map(|j| {
                    let z = 1.0 - 2.0 * (j as f64 + u) / m as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let t = golden * j as f64 + 2.0 * PI * w;
                    vec![r * t.cos(), r * t.sin(), z]
                })
                .collect()
        }
    }
}

/// Largest angular distance from a sample point of `S^{k−1}` to the image of `Φ`.
pub fn surjectivity_defect(phi: &[Vec<f64>], k: usize, m: usize, seed: u64) -> Result<f64, EquatorError> {
    if m < 100 {
        return Err(EquatorError::TooFewSamples { min: 100, got: m });
    }
    if phi.is_empty() {
        return Err(EquatorError::EmptyEquator { k, eta: f64::NAN });
    }
    Ok(sphere_samples(k, m, seed)
        .par_iter()
        .map(|x| phi.iter().map(|p| sphere_distance(x, p)).fold(f64::INFINITY, f64::min))
        .reduce(|| 0.0, f64::max))
}

/// `m` seeded index pairs into `0..len`.
fn sample_pairs(len: usize, m: usize, seed: u64, label: &str) -> Vec<(usize, usize)> {
    let mut rng = crate::rng::stream(seed, label);
    let mut pairs: Vec<(usize, usize)> = (0..m).map(|_| (rng.gen_range(0..len), rng.gen_range(0..len))).collect();
    pairs.sort_unstable();
    pairs
}

/// Runs `eval(x, distances from x, y)` over pairs grouped by their first
/// vertex, with one Dijkstra per distinct source.
fn over_pairs<T: Send>(
    metric: &SurfaceMetric,
    pairs: &[(usize, usize)],
    restriction: Option<&[bool]>,
    eval: impl Fn(usize, &[f64], usize) -> T + Sync,
) -> Vec<T> {
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for &(x, y) in pairs {
        match groups.last_mut() {
            Some((g, ys)) if *g == x => ys.push(y),
            _ => groups.push((x, vec![y])),
        }
    }
    groups
        .par_iter()
        .flat_map_iter(|(x, ys)| {
            let d = metric.single_source(*x, restriction).distance;
            ys.iter().map(|&y| eval(*x, &d, y)).collect::<Vec<_>>()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Distortion {
    /// `max |cos d(x,y) − ⟨F(x),F(y)⟩|`.
    pub cos: f64,
    /// `max |d(x,y) − d_{S^{k−1}}(Φx, Φy)|` with `d` clamped to `[0, π]`.
    pub angular: f64,
}

pub fn metric_distortion(
    spectrum: &Spectrum,
    equator: &AlmostEquator,
    phi: &[Vec<f64>],
    metric: &SurfaceMetric,
    m: usize,
    seed: u64,
) -> Result<Distortion, EquatorError> {
    if m < 100 {
        return Err(EquatorError::TooFewSamples { min: 100, got: m });
    }
    let funcs = spectrum.leading(equator.k);
    let pairs: Vec<(usize, usize)> = sample_pairs(equator.len(), m, seed, "metric_distortion")
        .into_iter()
        .map(|(i, j)| (equator.members[i], equator.members[j]))
        .collect();
    let slot = |v: usize| equator.members.binary_search(&v).unwrap();
    let terms = over_pairs(metric, &pairs, None, |x, d, y| {
        let dxy = d[y].clamp(0.0, PI);
        let fxy: f64 = funcs.iter().map(|f| f[x] * f[y]).sum();
        let cos = (dxy.cos() - fxy).abs();
        let angular = (dxy - sphere_distance(&phi[slot(x)], &phi[slot(y)])).abs();
        (cos, angular)
    });
    Ok(terms.iter().fold(Distortion { cos: 0.0, angular: 0.0 }, |acc, t| Distortion {
        cos: acc.cos.max(t.0),
        angular: acc.angular.max(t.1),
    }))
}

/// ε of the ε-GH approximation `Φ`.
pub fn gh_defect(surjectivity: f64, distortion: &Distortion) -> f64 {
    surjectivity.max(distortion.angular)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConvexityReport {
    /// Max over connected pairs of `d_outer(x, y) − d(x, y)`.
    pub defect: f64,
    /// Pairs with no path inside the outer set.
    pub disconnections: usize,
    pub pairs: usize,
}

pub fn convexity_defect(
    metric: &SurfaceMetric,
    inner: &AlmostEquator,
    outer_mask: &[bool],
    m: usize,
    seed: u64,
) -> ConvexityReport {
    let pairs: Vec<(usize, usize)> = sample_pairs(inner.len(), m, seed, "convexity_defect")
        .into_iter()
        .map(|(i, j)| (inner.members[i], inner.members[j]))
        .collect();
    let ambient = over_pairs(metric, &pairs, None, |_, d, y| d[y]);
    let intrinsic = over_pairs(metric, &pairs, Some(outer_mask), |_, d, y| d[y]);
    let mut report = ConvexityReport { defect: 0.0, disconnections: 0, pairs: pairs.len() };
    for (a, b) in ambient.iter().zip(&intrinsic) {
        if b.is_finite() {
            report.defect = report.defect.max(b - a);
        } else {
            report.disconnections += 1;
        }
    }
    report
}

/// Max over `m` sampled members `x` of `π − max_{y ∈ set} d(x, y)`, floored at 0.
pub fn antipode_defect(metric: &SurfaceMetric, members: &[usize], m: usize, seed: u64) -> f64 {
    let mut rng = crate::rng::stream(seed, "antipode_defect");
    let sample: Vec<usize> = if m >= members.len() {
        members.to_vec()
    } else {
        members.choose_multiple(&mut rng, m).copied().collect()
    };
    sample
        .par_iter()
        .map(|&x| {
            let d = metric.single_source(x, None).distance;
            let far = members.iter().map(|&y| d[y]).fold(0.0, f64::max);
            (PI - far).max(0.0)
        })
        .reduce(|| 0.0, f64::max)
}

/// Vertex gradient norm of `Σ_{i≤k} f_i²`.
pub fn sum_of_squares_gradient(spectrum: &Spectrum, surface: &TriSurface, k: usize) -> Vec<f64> {
    gradient(surface, &sum_of_squares(spectrum, k)).vertex_norm
}

pub fn equator_gradient_check(spectrum: &Spectrum, surface: &TriSurface, equator: &AlmostEquator) -> f64 {
    let g = sum_of_squares_gradient(spectrum, surface, equator.k);
    equator.members.iter().map(|&v| g[v]).fold(0.0, f64::max)
}

/// `max_v Σ_{i≤k} f_i(v)²`.
pub fn petersen_bound_check(spectrum: &Spectrum, k: usize) -> f64 {
    sum_of_squares(spectrum, k).into_iter().fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EquatorOptions {
    pub surjectivity_samples: usize,
    pub pair_samples: usize,
    pub convexity_samples: usize,
    pub antipode_samples: usize,
    pub seed: u64,
}

impl Default for EquatorOptions {
    fn default() -> Self {
        Self { surjectivity_samples: 500, pair_samples: 1000, convexity_samples: 200, antipode_samples: 200, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct SphereMapReport {
    pub k: usize,
    pub eta: f64,
    pub size: usize,
    pub components: usize,
    pub surjectivity_defect: f64,
    pub distortion_cos: f64,
    pub distortion_angular: f64,
    pub gh_defect: f64,
    pub eta_outer: f64,
    pub convexity_defect: f64,
    pub disconnections: usize,
    pub antipode_defect: f64,
    pub gradient_max: f64,
}

/// All equator diagnostics for one `(k, eta)`; the convexity check uses the
/// outer set at `OUTER_ETA_FACTOR · eta`.
pub fn sphere_map_report(
    spectrum: &Spectrum,
    surface: &TriSurface,
    metric: &SurfaceMetric,
    k: usize,
    eta: f64,
    opts: &EquatorOptions,
) -> Result<SphereMapReport, EquatorError> {
    let eq = almost_equator(spectrum, surface, k, eta)?;
    let phi = sphere_map(spectrum, &eq);
    let seed = crate::rng::derive_seed(opts.seed, &format!("equator/{k}/{eta}"));
    let surj = surjectivity_defect(&phi, k, opts.surjectivity_samples, seed)?;
    let dist = metric_distortion(spectrum, &eq, &phi, metric, opts.pair_samples, seed)?;
    let eta_outer = OUTER_ETA_FACTOR * eta;
    let outer = almost_equator(spectrum, surface, k, eta_outer)?;
    let conv = convexity_defect(metric, &eq, &outer.mask(surface.num_vertices()), opts.convexity_samples, seed);
    Ok(SphereMapReport {
        k,
        eta,
        size: eq.len(),
        components: eq.num_components,
        surjectivity_defect: surj,
        distortion_cos: dist.cos,
        distortion_angular: dist.angular,
        gh_defect: gh_defect(surj, &dist),
        eta_outer,
        convexity_defect: conv.defect,
        disconnections: conv.disconnections,
        antipode_defect: antipode_defect(metric, &eq.members, opts.antipode_samples, seed),
        gradient_max: equator_gradient_check(spectrum, surface, &eq),
    })
}
