//! Cotangent Laplace–Beltrami operator, smallest generalized eigenpairs,
//! eigenfunction normalization and per-face gradients.
//!
//! The eigenproblem is `S f = λ M f` with `S` the (positive semidefinite)
//! cotangent stiffness matrix and `M` the lumped vertex-area mass matrix, so
//! the spectrum is `0 = λ₀ < λ₁ ≤ λ₂ ≤ …`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point, TriSurface};
use crate::sparse::{CsrMatrix, SkylineCholesky};

/// Surface dimension `n`; eigenfunctions are normalized to mean square `1/(n+1)`.
pub const DIM: usize = 2;

pub const MAX_PAIRS: usize = 64;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;
/// Consecutive eigenvalues closer than this (relative) form one cluster.
pub const CLUSTER_REL_GAP: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("face {face} is degenerate (non-finite cotangent weight)")]
    DegenerateFace { face: usize },
    #[error("requested {requested} eigenpairs, at most {max} are supported")]
    TooManyPairs { requested: usize, max: usize },
    #[error("eigensolver did not converge after {iterations} iterations (best residual {best_residual:e})")]
    NotConverged { iterations: usize, best_residual: f64 },
    #[error("shifted operator is not positive definite: {0}")]
    Factorization(#[from] crate::sparse::NotPositiveDefinite),
    #[error("eigenfunction {index} vanishes")]
    ZeroEigenfunction { index: usize },
}

/// Mean square of an eigenfunction after [`normalize_paper`].
pub fn mean_square_target() -> f64 {
    1.0 / (DIM as f64 + 1.0)
}

/// Cotangent stiffness matrix and lumped mass diagonal.
pub fn assemble_operators(surface: &TriSurface) -> Result<(CsrMatrix, Vec<f64>), SpectralError> {
    let v = surface.vertices();
    let mut t = Vec::with_capacity(surface.num_faces() * 12);
    for (fi, f) in surface.faces().iter().enumerate() {
        for k in 0..3 {
            let (o, i, j) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
            let w = 0.5 * cot(&v[o], &v[i], &v[j]);
            if !w.is_finite() || surface.face_area()[fi] <= f64::EPSILON * (v[i] - v[j]).norm_squared() {
                return Err(SpectralError::DegenerateFace { face: fi });
            }
            t.extend([(i, i, w), (j, j, w), (i, j, -w), (j, i, -w)]);
        }
    }
    Ok((CsrMatrix::from_triplets(surface.num_vertices(), t), surface.vertex_area().to_vec()))
}

fn cot(o: &Point, a: &Point, b: &Point) -> f64 {
    let u = a - o;
    let w = b - o;
    u.dot(&w) / u.cross(&w).norm()
}

/// Ordered eigenpairs of `S f = λ M f`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenfunctions: Vec<Vec<f64>>,
    /// Whether each eigenfunction has been scaled by [`normalize_paper`].
    pub normalized: bool,
    /// `‖S f − λ M f‖ / ‖M f‖` per pair.
    pub solver_residuals: Vec<f64>,
    /// Index ranges `[start, end)` of eigenvalue clusters.
    pub clusters: Vec<(usize, usize)>,
    pub iterations: usize,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenfunction(&self, i: usize) -> &[f64] {
        &self.eigenfunctions[i]
    }

    /// Eigenfunctions `1..=k` (the constant mode is skipped).
    pub fn leading(&self, k: usize) -> &[Vec<f64>] {
        &self.eigenfunctions[1..=k]
    }

    /// Returns a copy holding only the first `count` pairs.
    pub fn truncated(&self, count: usize) -> Self {
        let count = count.min(self.len());
        Self {
            eigenvalues: self.eigenvalues[..count].to_vec(),
            eigenfunctions: self.eigenfunctions[..count].to_vec(),
            normalized: self.normalized,
            solver_residuals: self.solver_residuals[..count].to_vec(),
            clusters: self
                .clusters
                .iter()
                .filter(|c| c.0 < count)
                .map(|&(a, b)| (a, b.min(count)))
                .collect(),
            iterations: self.iterations,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iterations: DEFAULT_MAX_ITERATIONS, seed: 0x5eed }
    }
}

pub fn solve_smallest(
    stiffness: &CsrMatrix,
    mass: &[f64],
    count: usize,
    tol: f64,
) -> Result<Spectrum, SpectralError> {
    solve_smallest_with(stiffness, mass, count, &SolverOptions { tol, ..Default::default() })
}

fn m_dot(mass: &[f64], a: &[f64], b: &[f64]) -> f64 {
    mass.iter().zip(a).zip(b).map(|((m, x), y)| m * x * y).sum()
}

/// Modified Gram–Schmidt in the `M` inner product, applied twice.
fn m_orthonormalize(mass: &[f64], block: &mut [Vec<f64>]) {
    for j in 0..block.len() {
        for _ in 0..2 {
            for i in 0..j {
                let (head, tail) = block.split_at_mut(j);
                let c = m_dot(mass, &head[i], &tail[0]);
                for (y, x) in tail[0].iter_mut().zip(&head[i]) {
                    *y -= c * x;
                }
            }
        }
        let norm = m_dot(mass, &block[j], &block[j]).sqrt();
        for y in block[j].iter_mut() {
            *y /= norm;
        }
    }
}

fn residual(stiffness: &CsrMatrix, mass: &[f64], lambda: f64, f: &[f64]) -> f64 {
    let sf = stiffness.mul_vec(f);
    let num: f64 = sf
        .iter()
        .zip(mass.iter().zip(f))
        .map(|(s, (m, x))| (s - lambda * m * x).powi(2))
        .sum();
    let den: f64 = mass.iter().zip(f).map(|(m, x)| (m * x).powi(2)).sum();
    (num / den).sqrt()
}

fn clusters_of(values: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        let split = i == values.len() || {
            let (a, b) = (values[i - 1], values[i]);
            (b - a) >= CLUSTER_REL_GAP * b.abs().max(a.abs()).max(1e-8)
        };
        if split {
            out.push((start, i));
            start = i;
        }
    }
    out
}

/// Shift-and-invert block subspace iteration with Rayleigh–Ritz projection.
///
/// The `count` smallest pairs are returned once each relative residual is
/// below `opts.tol`. Eigenvectors inside a cluster are then rotated by
/// [`localize_cluster`].
pub fn solve_smallest_with(
    stiffness: &CsrMatrix,
    mass: &[f64],
    count: usize,
    opts: &SolverOptions,
) -> Result<Spectrum, SpectralError> {
    if count > MAX_PAIRS {
        return Err(SpectralError::TooManyPairs { requested: count, max: MAX_PAIRS });
    }
    let n = stiffness.dim();
    let count = count.min(n);
    if count == 0 {
        return Ok(Spectrum {
            eigenvalues: vec![],
            eigenfunctions: vec![],
            normalized: false,
            solver_residuals: vec![],
            clusters: vec![],
            iterations: 0,
        });
    }
    let block = (count + count.max(8)).min(n);
    // Shift at the scale of λ₁ of a round sphere of the same area.
    let total: f64 = mass.iter().sum();
    let shift = 4.0 * std::f64::consts::PI / total;
    let chol = SkylineCholesky::factor(&stiffness.add_diagonal(shift, mass))?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    m_orthonormalize(mass, &mut x);

    let mut best = f64::INFINITY;
    for iter in 1..=opts.max_iterations {
        let mut y: Vec<Vec<f64>> = x
            .iter()
            .map(|col| {
                let rhs: Vec<f64> = col.iter().zip(mass).map(|(c, m)| c * m).collect();
                chol.solve(&rhs)
            })
            .collect();
        m_orthonormalize(mass, &mut y);
        let sy: Vec<Vec<f64>> = y.iter().map(|c| stiffness.mul_vec(c)).collect();
        let h = DMatrix::from_fn(block, block, |i, j| {
            0.5 * (dot(&y[i], &sy[j]) + dot(&y[j], &sy[i]))
        });
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        x = order
            .iter()
            .map(|&c| {
                let mut v = vec![0.0; n];
                for (r, yr) in y.iter().enumerate() {
                    let q = eig.eigenvectors[(r, c)];
                    for (vi, yi) in v.iter_mut().zip(yr) {
                        *vi += q * yi;
                    }
                }
                v
            })
            .collect();
        let theta: Vec<f64> = order.iter().map(|&c| eig.eigenvalues[c]).collect();

        // Keep whole clusters: extend `count` to the end of its cluster.
        let clusters = clusters_of(&theta);
        let wanted = clusters
            .iter()
            .find(|c| c.0 < count && c.1 >= count)
            .map(|c| c.1)
            .unwrap_or(count)
            .min(block - 1)
            .max(count.min(block));
        let worst = (0..wanted)
            .map(|i| residual(stiffness, mass, theta[i], &x[i]))
            .fold(0.0, f64::max);
        best = best.min(worst);
        if worst <= opts.tol {
            let clusters: Vec<(usize, usize)> = clusters
                .into_iter()
                .filter(|c| c.0 < wanted)
                .map(|(a, b)| (a, b.min(wanted)))
                .collect();
            let mut funcs: Vec<Vec<f64>> = x[..wanted].to_vec();
            for &(a, b) in &clusters {
                if b - a > 1 {
                    localize_cluster(&mut funcs[a..b]);
                }
            }
            let residuals = (0..wanted)
                .map(|i| residual(stiffness, mass, theta[i], &funcs[i]))
                .collect();
            let spectrum = Spectrum {
                eigenvalues: theta[..wanted].to_vec(),
                eigenfunctions: funcs,
                normalized: false,
                solver_residuals: residuals,
                clusters,
                iterations: iter,
            };
            return Ok(spectrum.truncated(count));
        }
    }
    Err(SpectralError::NotConverged { iterations: opts.max_iterations, best_residual: best })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index of the largest value, treating values within `1e-9` (relative) of
/// the maximum as ties and picking the lowest index among them.
pub fn argmax_stable(values: &[f64]) -> usize {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-9 * max.abs().max(f64::MIN_POSITIVE);
    values.iter().position(|&v| v >= max - tol).unwrap_or(0)
}

pub fn argmin_stable(values: &[f64]) -> usize {
    let neg: Vec<f64> = values.iter().map(|v| -v).collect();
    argmax_stable(&neg)
}

/// Rotates an orthonormal basis of a cluster so that basis vector `j` is
/// maximized at a vertex `v_j`, chosen greedily: `v_j` maximizes the norm of
/// the coefficient row after projecting out the directions already used.
pub fn localize_cluster(funcs: &mut [Vec<f64>]) {
    let c = funcs.len();
    let n = funcs[0].len();
    let rows: Vec<nalgebra::DVector<f64>> = (0..n)
        .map(|v| nalgebra::DVector::from_fn(c, |i, _| funcs[i][v]))
        .collect();
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(c);
    for _ in 0..c {
        let project = |r: &nalgebra::DVector<f64>| {
            let mut r = r.clone();
            for u in &basis {
                r -= u * u.dot(&r);
            }
            r
        };
        let norms: Vec<f64> = rows.iter().map(|r| project(r).norm()).collect();
        let v = argmax_stable(&norms);
        let u = project(&rows[v]);
        basis.push(u.normalize());
    }
    let rotated: Vec<Vec<f64>> = basis
        .iter()
        .map(|u| rows.iter().map(|r| r.dot(u)).collect())
        .collect();
    for (f, g) in funcs.iter_mut().zip(rotated) {
        *f = g;
    }
}

/// Scales every eigenfunction to mean square `1/(n+1)` and fixes its sign so
/// that the extremum of largest magnitude (lowest index among ties) is a
/// maximum.
pub fn normalize_paper(spectrum: &Spectrum, surface: &TriSurface) -> Result<Spectrum, SpectralError> {
    let area = surface.vertex_area();
    let vol = surface.total_area();
    let target = mean_square_target();
    let mut out = spectrum.clone();
    for (i, f) in out.eigenfunctions.iter_mut().enumerate() {
        let ms = m_dot(area, f, f) / vol;
        if !(ms > 0.0) || !ms.is_finite() {
            return Err(SpectralError::ZeroEigenfunction { index: i });
        }
        let abs: Vec<f64> = f.iter().map(|x| x.abs()).collect();
        let sign = f[argmax_stable(&abs)].signum();
        let scale = sign * (target / ms).sqrt();
        for x in f.iter_mut() {
            *x *= scale;
        }
    }
    out.normalized = true;
    Ok(out)
}

/// Mean square `(1/vol) Σ area_v f(v)²`.
pub fn mean_square(surface: &TriSurface, f: &[f64]) -> f64 {
    m_dot(surface.vertex_area(), f, f) / surface.total_area()
}

/// Assemble, solve and normalize in one call.
pub fn compute_spectrum(surface: &TriSurface, count: usize, opts: &SolverOptions) -> Result<Spectrum, SpectralError> {
    let (s, m) = assemble_operators(surface)?;
    let spectrum = solve_smallest_with(&s, &m, count, opts)?;
    normalize_paper(&spectrum, surface)
}

/// Gradient of the piecewise-linear interpolant of a vertex function.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub face: Vec<Point>,
    /// Area-weighted average of the incident face gradients.
    pub vertex: Vec<Point>,
    pub vertex_norm: Vec<f64>,
}

impl GradientField {
    pub fn face_norm_squared(&self) -> Vec<f64> {
        self.face.iter().map(|g| g.norm_squared()).collect()
    }
}

pub fn gradient(surface: &TriSurface, f: &[f64]) -> GradientField {
    let v = surface.vertices();
    let mut face = Vec::with_capacity(surface.num_faces());
    let mut acc = vec![Point::zeros(); v.len()];
    let mut weight = vec![0.0; v.len()];
    for (fi, t) in surface.faces().iter().enumerate() {
        let [a, b, c] = *t;
        let area = surface.face_area()[fi];
        let normal = surface.face_normal(fi);
        let g = (normal.cross(&(v[c] - v[b])) * f[a]
            + normal.cross(&(v[a] - v[c])) * f[b]
            + normal.cross(&(v[b] - v[a])) * f[c])
            / (2.0 * area);
        for &i in t {
            acc[i] += g * area;
            weight[i] += area;
        }
        face.push(g);
    }
    let vertex: Vec<Point> = acc.iter().zip(&weight).map(|(g, w)| g / *w).collect();
    let vertex_norm = vertex.iter().map(|g| g.norm()).collect();
    GradientField { face, vertex, vertex_norm }
}

/// `(1/vol) Σ area_v |f² + |∇f|² − 1|`, zero for coordinate functions of the
/// unit sphere.
pub fn eikonal_defect(surface: &TriSurface, f: &[f64]) -> f64 {
    let g = gradient(surface, f);
    let area = surface.vertex_area();
    (0..f.len())
        .map(|v| area[v] * (f[v] * f[v] + g.vertex_norm[v].powi(2) - 1.0).abs())
        .sum::<f64>()
        / surface.total_area()
}
