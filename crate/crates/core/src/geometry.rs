//! Closed triangulated surfaces: validation, generators, angle-defect
//! curvature, curvature rescaling and OFF I/O.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point = Vector3<f64>;

/// Largest subdivision level accepted by the sphere generators.
pub const MAX_SUBDIVISIONS: u32 = 8;

/// Width of the sech² neck used by [`generate_dumbbell`].
pub const DUMBBELL_NECK_WIDTH: f64 = 0.35;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("subdivision level {requested} exceeds the limit of {max}")]
    SubdivisionLimit { requested: u32, max: u32 },
    #[error("axis ratio {0} outside [0.2, 5]")]
    RatioOutOfRange(f64),
    #[error("neck radius {0} outside (0, 1)")]
    NeckOutOfRange(f64),
    #[error("degenerate neck: face {face} folds over after revolution")]
    DegenerateNeck { face: usize },
    #[error("hypothesis violated: K_min = {k_min}")]
    HypothesisViolation { k_min: f64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("surface has no faces")]
    Empty,
    #[error("face {face} references vertex {index} but there are {count} vertices")]
    IndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("face {face} has zero area")]
    DegenerateFace { face: usize },
    #[error("edge ({a}, {b}) is shared by {count} faces")]
    NonManifoldEdge { a: usize, b: usize, count: usize },
    #[error("boundary edge ({a}, {b})")]
    BoundaryEdge { a: usize, b: usize },
    #[error("vertex {0} is not referenced by any face")]
    IsolatedVertex(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Closed, manifold triangle mesh with lumped (barycentric) vertex areas.
#[derive(Debug, Clone, PartialEq)]
pub struct TriSurface {
    vertices: Vec<Point>,
    faces: Vec<[usize; 3]>,
    vertex_area: Vec<f64>,
    face_area: Vec<f64>,
}

impl TriSurface {
    /// Validates connectivity and areas. Every undirected edge must be
    /// shared by exactly two faces and every face must have positive area.
    pub fn new(vertices: Vec<Point>, faces: Vec<[usize; 3]>) -> Result<Self, GeometryError> {
        if faces.is_empty() {
            return Err(GeometryError::Empty);
        }
        let nv = vertices.len();
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i >= nv {
                    return Err(GeometryError::IndexOutOfRange { face: fi, index: i, count: nv });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(GeometryError::DegenerateFace { face: fi });
            }
            for e in 0..3 {
                *edge_count.entry(edge_key(f[e], f[(e + 1) % 3])).or_default() += 1;
            }
        }
        let mut bad: Vec<_> = edge_count.iter().filter(|(_, &c)| c != 2).collect();
        bad.sort();
        if let Some((&(a, b), &count)) = bad.iter().find(|(_, &c)| c > 2) {
            return Err(GeometryError::NonManifoldEdge { a, b, count });
        }
        if let Some((&(a, b), _)) = bad.first() {
            return Err(GeometryError::BoundaryEdge { a, b });
        }

        let mut face_area = Vec::with_capacity(faces.len());
        let mut vertex_area = vec![0.0; nv];
        for (fi, f) in faces.iter().enumerate() {
            let a = triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]);
            if !(a > 0.0) {
                return Err(GeometryError::DegenerateFace { face: fi });
            }
            face_area.push(a);
            for &i in f {
                vertex_area[i] += a / 3.0;
            }
        }
        if let Some(v) = vertex_area.iter().position(|&a| a <= 0.0) {
            return Err(GeometryError::IsolatedVertex(v));
        }
        Ok(Self { vertices, faces, vertex_area, face_area })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_area(&self) -> &[f64] {
        &self.vertex_area
    }

    pub fn face_area(&self) -> &[f64] {
        &self.face_area
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn total_area(&self) -> f64 {
        self.face_area.iter().sum()
    }

    pub fn mean_edge_length(&self) -> f64 {
        let edges = self.edges();
        edges.iter().map(|&(a, b)| (self.vertices[a] - self.vertices[b]).norm()).sum::<f64>()
            / edges.len() as f64
    }

    pub fn max_edge_length(&self) -> f64 {
        self.edges()
            .iter()
            .map(|&(a, b)| (self.vertices[a] - self.vertices[b]).norm())
            .fold(0.0, f64::max)
    }

    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = self
            .faces
            .iter()
            .flat_map(|f| (0..3).map(move |k| edge_key(f[k], f[(k + 1) % 3])))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Applies `map` to every vertex position, keeping connectivity.
    pub fn map_vertices(&self, map: impl Fn(&Point) -> Point) -> Result<Self, GeometryError> {
        Self::new(self.vertices.iter().map(map).collect(), self.faces.clone())
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, GeometryError> {
        self.map_vertices(|p| p * factor)
    }

    pub fn curvature(&self) -> DiscreteCurvature {
        DiscreteCurvature::compute(self)
    }

    /// Outward-oriented unit normal of face `fi` (assuming consistent
    /// counter-clockwise winding).
    pub fn face_normal(&self, fi: usize) -> Point {
        let [a, b, c] = self.faces[fi];
        (self.vertices[b] - self.vertices[a])
            .cross(&(self.vertices[c] - self.vertices[a]))
            .normalize()
    }
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub(crate) fn triangle_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Interior angle at `a` in triangle (a, b, c).
pub(crate) fn corner_angle(a: &Point, b: &Point, c: &Point) -> f64 {
    let u = b - a;
    let v = c - a;
    u.cross(&v).norm().atan2(u.dot(&v))
}

/// Per-vertex Gauss curvature as angle defect over lumped area.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteCurvature {
    pub angle_defect: Vec<f64>,
    pub k: Vec<f64>,
    pub k_min: f64,
    pub k_max: f64,
    pub argmin: usize,
}

impl DiscreteCurvature {
    pub fn compute(surface: &TriSurface) -> Self {
        let v = surface.vertices();
        let mut angle_sum = vec![0.0; v.len()];
        for f in surface.faces() {
            for k in 0..3 {
                let (i, j, l) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
                angle_sum[i] += corner_angle(&v[i], &v[j], &v[l]);
            }
        }
        let angle_defect: Vec<f64> = angle_sum.iter().map(|s| 2.0 * PI - s).collect();
        let k: Vec<f64> = angle_defect
            .iter()
            .zip(surface.vertex_area())
            .map(|(d, a)| d / a)
            .collect();
        let mut argmin = 0;
        for (i, &ki) in k.iter().enumerate() {
            if ki < k[argmin] {
                argmin = i;
            }
        }
        let k_max = k.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { k_min: k[argmin], k_max, argmin, angle_defect, k }
    }

    pub fn total_defect(&self) -> f64 {
        self.angle_defect.iter().sum()
    }
}

/// Icosahedron with vertices at the poles `(0, 0, ±1)`, subdivided
/// `subdivisions` times with midpoints projected back onto the unit sphere.
pub fn generate_icosphere(subdivisions: u32) -> Result<TriSurface, GeometryError> {
    if subdivisions > MAX_SUBDIVISIONS {
        return Err(GeometryError::SubdivisionLimit { requested: subdivisions, max: MAX_SUBDIVISIONS });
    }
    let (mut vertices, mut faces) = icosahedron();
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut m = [0usize; 3];
            for k in 0..3 {
                let key = edge_key(f[k], f[(k + 1) % 3]);
                m[k] = *midpoint.entry(key).or_insert_with(|| {
                    vertices.push(((vertices[key.0] + vertices[key.1]) * 0.5).normalize());
                    vertices.len() - 1
                });
            }
            next.push([f[0], m[0], m[2]]);
            next.push([f[1], m[1], m[0]]);
            next.push([f[2], m[2], m[1]]);
            next.push([m[0], m[1], m[2]]);
        }
        faces = next;
    }
    TriSurface::new(vertices, faces)
}

fn icosahedron() -> (Vec<Point>, Vec<[usize; 3]>) {
    let z = 1.0 / 5f64.sqrt();
    let r = 2.0 / 5f64.sqrt();
    let mut v = vec![Point::new(0.0, 0.0, 1.0)];
    for i in 0..5 {
        let t = 2.0 * PI * i as f64 / 5.0;
        v.push(Point::new(r * t.cos(), r * t.sin(), z));
    }
    for i in 0..5 {
        let t = 2.0 * PI * (i as f64 + 0.5) / 5.0;
        v.push(Point::new(r * t.cos(), r * t.sin(), -z));
    }
    v.push(Point::new(0.0, 0.0, -1.0));
    let mut f = Vec::with_capacity(20);
    for i in 0..5 {
        let (u0, u1) = (1 + i, 1 + (i + 1) % 5);
        let (l0, l1) = (6 + i, 6 + (i + 1) % 5);
        f.push([0, u0, u1]);
        f.push([u0, l0, u1]);
        f.push([u1, l0, l1]);
        f.push([11, l1, l0]);
    }
    (v, f)
}

/// Icosphere stretched by `axis_ratio` along the z axis.
pub fn generate_spheroid(axis_ratio: f64, subdivisions: u32) -> Result<TriSurface, GeometryError> {
    if !(0.2..=5.0).contains(&axis_ratio) {
        return Err(GeometryError::RatioOutOfRange(axis_ratio));
    }
    generate_icosphere(subdivisions)?.map_vertices(|p| Point::new(p.x, p.y, p.z * axis_ratio))
}

/// Radial profile factor of the dumbbell: the unit sphere's parallel at
/// height `z` is shrunk by `1 - (1 - neck) sech²(z / w)`.
pub fn dumbbell_profile_factor(neck_radius: f64, z: f64) -> f64 {
    let s = 1.0 / (z / DUMBBELL_NECK_WIDTH).cosh();
    1.0 - (1.0 - neck_radius) * s * s
}

/// Genus-0 surface of revolution: an icosphere whose parallels are pinched
/// by [`dumbbell_profile_factor`], giving a waist of radius `neck_radius`.
pub fn generate_dumbbell(neck_radius: f64, subdivisions: u32) -> Result<TriSurface, GeometryError> {
    if !(neck_radius > 0.0 && neck_radius < 1.0) {
        return Err(GeometryError::NeckOutOfRange(neck_radius));
    }
    let surface = generate_icosphere(subdivisions)?.map_vertices(|p| {
        let g = dumbbell_profile_factor(neck_radius, p.z);
        Point::new(p.x * g, p.y * g, p.z)
    })?;
    // A folded face has its normal pointing towards the axis.
    for fi in 0..surface.num_faces() {
        let [a, b, c] = surface.faces()[fi];
        let v = surface.vertices();
        let centroid = (v[a] + v[b] + v[c]) / 3.0;
        let radial = Point::new(centroid.x, centroid.y, 0.0);
        let n = surface.face_normal(fi);
        if n.dot(&radial) <= 0.0 {
            return Err(GeometryError::DegenerateNeck { face: fi });
        }
    }
    Ok(surface)
}

/// Scales the surface by `sqrt(K_min)` so that its minimum vertex curvature
/// becomes 1. Returns the rescaled surface and the factor applied.
pub fn rescale_to_curvature_bound(surface: &TriSurface) -> Result<(TriSurface, f64), GeometryError> {
    let k_min = surface.curvature().k_min;
    if !(k_min > 0.0) {
        return Err(GeometryError::HypothesisViolation { k_min });
    }
    let s = k_min.sqrt();
    Ok((surface.scaled(s)?, s))
}

pub fn parse_off(text: &str) -> Result<TriSurface, GeometryError> {
    let mut tokens = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("");
        for tok in content.split_whitespace() {
            tokens.push((i + 1, tok));
        }
    }
    let last_line = text.lines().count().max(1);
    let mut it = tokens.into_iter().peekable();
    match it.next() {
        Some((_, "OFF")) => {}
        Some((line, tok)) => {
            return Err(GeometryError::Parse { line, msg: format!("expected OFF header, found {tok:?}") })
        }
        None => return Err(GeometryError::Parse { line: 1, msg: "empty file".into() }),
    }
    let mut next_num = |what: &str| -> Result<(usize, &str), GeometryError> {
        it.next()
            .ok_or_else(|| GeometryError::Parse { line: last_line, msg: format!("unexpected end of file, expected {what}") })
    };
    fn int(tok: (usize, &str)) -> Result<usize, GeometryError> {
        tok.1
            .parse()
            .map_err(|_| GeometryError::Parse { line: tok.0, msg: format!("invalid integer {:?}", tok.1) })
    }
    fn real(tok: (usize, &str)) -> Result<f64, GeometryError> {
        tok.1
            .parse()
            .map_err(|_| GeometryError::Parse { line: tok.0, msg: format!("invalid number {:?}", tok.1) })
    }
    let nv = int(next_num("vertex count")?)?;
    let nf = int(next_num("face count")?)?;
    let _ne = int(next_num("edge count")?)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let x = real(next_num("x")?)?;
        let y = real(next_num("y")?)?;
        let z = real(next_num("z")?)?;
        vertices.push(Point::new(x, y, z));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let tok = next_num("face size")?;
        let n = int(tok)?;
        if n != 3 {
            return Err(GeometryError::Parse { line: tok.0, msg: format!("only triangles are supported, got {n}-gon") });
        }
        faces.push([int(next_num("index")?)?, int(next_num("index")?)?, int(next_num("index")?)?]);
    }
    TriSurface::new(vertices, faces)
}

pub fn format_off(surface: &TriSurface) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "OFF");
    let _ = writeln!(s, "{} {} 0", surface.num_vertices(), surface.num_faces());
    for p in surface.vertices() {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    for f in surface.faces() {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

pub fn load_off(path: impl AsRef<Path>) -> Result<TriSurface, GeometryError> {
    parse_off(&std::fs::read_to_string(path)?)
}

pub fn save_off(surface: &TriSurface, path: impl AsRef<Path>) -> Result<(), GeometryError> {
    crate::io::write_atomic(path.as_ref(), format_off(surface).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        for (s, v, f) in [(0, 12, 20), (1, 42, 80), (2, 162, 320), (4, 2562, 5120)] {
            let m = generate_icosphere(s).unwrap();
            assert_eq!(m.num_vertices(), v);
            assert_eq!(m.num_faces(), f);
            assert_eq!(m.num_vertices(), 10 * 4usize.pow(s) + 2);
            for p in m.vertices() {
                assert!((p.norm() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn icosphere_s4_area_close_to_4pi() {
        let m = generate_icosphere(4).unwrap();
        let rel = (m.total_area() - 4.0 * PI).abs() / (4.0 * PI);
        assert!(rel < 0.005, "rel area error {rel}");
        let sum: f64 = m.vertex_area().iter().sum();
        assert!((sum - m.total_area()).abs() < 1e-12);
    }

    #[test]
    fn subdivision_limit() {
        assert!(matches!(generate_icosphere(9), Err(GeometryError::SubdivisionLimit { .. })));
    }

    #[test]
    fn icosphere_faces_are_outward() {
        let m = generate_icosphere(2).unwrap();
        for fi in 0..m.num_faces() {
            let [a, b, c] = m.faces()[fi];
            let centroid = (m.vertices()[a] + m.vertices()[b] + m.vertices()[c]) / 3.0;
            assert!(m.face_normal(fi).dot(&centroid) > 0.0);
        }
    }

    #[test]
    fn gauss_bonnet_on_generators() {
        let surfaces = [
            generate_icosphere(3).unwrap(),
            generate_spheroid(0.8, 3).unwrap(),
            generate_spheroid(1.25, 3).unwrap(),
            generate_dumbbell(0.3, 3).unwrap(),
            generate_dumbbell(0.99, 2).unwrap(),
        ];
        for m in &surfaces {
            let total = m.curvature().total_defect();
            assert!((total - 4.0 * PI).abs() < 1e-6, "{total}");
        }
    }

    #[test]
    fn spheroid_ratio_one_is_icosphere() {
        assert_eq!(generate_spheroid(1.0, 2).unwrap(), generate_icosphere(2).unwrap());
        assert!(matches!(generate_spheroid(0.1, 1), Err(GeometryError::RatioOutOfRange(_))));
        assert!(matches!(generate_spheroid(5.5, 1), Err(GeometryError::RatioOutOfRange(_))));
    }

    /// Gauss curvature of the spheroid x²+y²+z²/c² = 1 at height z.
    fn spheroid_k(c: f64, z: f64) -> f64 {
        let c2 = c * c;
        let denom = c2 + z * z * (1.0 - c2) / c2;
        c2 / (denom * denom)
    }

    #[test]
    fn spheroid_k_min_location_matches_analytic() {
        // Prolate: analytic minimum 1/c² on the equator. Oblate: c² at the poles.
        for (ratio, on_equator) in [(1.2, true), (0.8, false)] {
            let m = generate_spheroid(ratio, 3).unwrap();
            let curv = m.curvature();
            let z = m.vertices()[curv.argmin].z / ratio;
            let (k_eq, k_pole) = (spheroid_k(ratio, 0.0), spheroid_k(ratio, ratio));
            if on_equator {
                assert!(k_eq < k_pole);
                assert!(z.abs() < 0.1, "argmin at z = {z}");
            } else {
                assert!(k_pole < k_eq);
                assert!(z.abs() > 0.9, "argmin at z = {z}");
            }
        }
    }

    /// K = -r''/(r (1 + r'²)²) for the profile r(z) = sqrt(1 - z²) g(z).
    fn dumbbell_k_at_waist(neck: f64) -> f64 {
        let h = 1e-4;
        let r = |z: f64| (1.0 - z * z).sqrt() * dumbbell_profile_factor(neck, z);
        let r0 = r(0.0);
        let r2 = (r(h) - 2.0 * r0 + r(-h)) / (h * h);
        -r2 / r0
    }

    #[test]
    fn dumbbell_curvature_sign() {
        assert!(dumbbell_k_at_waist(0.3) < 0.0);
        assert!(dumbbell_k_at_waist(0.99) > 0.0);
        let thin = generate_dumbbell(0.3, 3).unwrap().curvature();
        assert!(thin.k_min < 0.0);
        let fat = generate_dumbbell(0.99, 3).unwrap().curvature();
        let analytic = dumbbell_k_at_waist(0.99);
        assert!(fat.k_min > 0.0);
        assert!((fat.k_min - analytic).abs() < 0.05 * analytic, "{} vs {analytic}", fat.k_min);
        assert!(matches!(generate_dumbbell(1.0, 2), Err(GeometryError::NeckOutOfRange(_))));
        assert!(matches!(generate_dumbbell(0.0, 2), Err(GeometryError::NeckOutOfRange(_))));
    }

    #[test]
    fn rescale_examples() {
        let m = generate_icosphere(4).unwrap();
        let (_, s) = rescale_to_curvature_bound(&m).unwrap();
        assert!((s - 1.0).abs() < 0.01, "{s}");
        let (_, s2) = rescale_to_curvature_bound(&m.scaled(2.0).unwrap()).unwrap();
        assert!((s2 - 0.5).abs() < 0.005, "{s2}");
        let neck = generate_dumbbell(0.3, 3).unwrap();
        assert!(matches!(rescale_to_curvature_bound(&neck), Err(GeometryError::HypothesisViolation { .. })));
    }

    #[test]
    fn rescale_is_idempotent_and_bounds_area() {
        for m in [generate_icosphere(3).unwrap(), generate_spheroid(0.8, 3).unwrap(), generate_spheroid(1.25, 3).unwrap()] {
            let (r, _) = rescale_to_curvature_bound(&m).unwrap();
            assert!((r.curvature().k_min - 1.0).abs() < 1e-12);
            let (_, s) = rescale_to_curvature_bound(&r).unwrap();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(r.total_area() <= 1.05 * 4.0 * PI, "{}", r.total_area());
        }
    }

    #[test]
    fn curvature_invariant_under_rigid_motion() {
        let m = generate_spheroid(1.2, 2).unwrap();
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let t = Point::new(0.5, -2.0, 3.0);
        let moved = m.map_vertices(|p| rot * p + t).unwrap();
        for (a, b) in m.curvature().k.iter().zip(&moved.curvature().k) {
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn off_round_trip_is_exact() {
        let m = generate_icosphere(1).unwrap();
        let back = parse_off(&format_off(&m)).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.faces(), m.faces());
    }

    #[test]
    fn off_validation_errors() {
        let tet = "OFF\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 1 2 3\n3 0 3 2\n";
        assert!(parse_off(tet).is_ok());
        // Fin face glued onto edge (0, 1).
        let fin = "OFF\n5 5 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n1 1 1\n3 0 2 1\n3 0 1 3\n3 1 2 3\n3 0 3 2\n3 0 1 4\n";
        assert!(matches!(parse_off(fin), Err(GeometryError::NonManifoldEdge { a: 0, b: 1, count: 3 })));
        let open = "OFF\n4 3 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 1 2 3\n";
        assert!(matches!(parse_off(open), Err(GeometryError::BoundaryEdge { .. })));
        assert!(matches!(parse_off("OFF\n3 0 0\n0 0 0\n1 0 0\n0 1 0\n"), Err(GeometryError::Empty)));
        match parse_off("OFF\n4 4 0\n0 0 0\n1 0 x\n") {
            Err(GeometryError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }
}
