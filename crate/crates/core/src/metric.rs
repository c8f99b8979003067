//! Graph-geodesic distances on a triangle mesh.
//!
//! Distances are exact shortest paths on the edge graph, optionally
//! augmented with "diamond" chords: for an interior edge `(i, j)` with
//! opposite vertices `k` and `l`, the straight segment `k–l` in the planar
//! unfolding of the two faces, kept only when it crosses the edge `(i, j)`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::OnceLock;

use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::geometry::{corner_angle, edge_key, Point, TriSurface};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum MetricMethod {
    EdgeGraph,
    EdgeGraphWithChords,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistanceField {
    pub source: usize,
    pub distance: Vec<f64>,
    pub method: MetricMethod,
    /// Vertices the paths were allowed to use, if restricted.
    pub restriction: Option<Vec<usize>>,
    #[serde(skip)]
    predecessor: Vec<usize>,
}

impl DistanceField {
    pub fn max_finite(&self) -> f64 {
        self.distance.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max)
    }

    pub fn unreachable(&self) -> usize {
        self.distance.iter().filter(|d| d.is_infinite()).count()
    }

    /// Vertex sequence from the source to `target`, empty if unreachable.
    pub fn path_to(&self, target: usize) -> Vec<usize> {
        if !self.distance[target].is_finite() {
            return vec![];
        }
        let mut path = vec![target];
        let mut v = target;
        while v != self.source {
            v = self.predecessor[v];
            path.push(v);
        }
        path.reverse();
        path
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    vertex: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Min-heap on distance, ties broken by lowest vertex index.
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Weighted adjacency of a surface plus cached all-source eccentricities.
#[derive(Debug)]
pub struct SurfaceMetric {
    adj: Vec<Vec<(usize, f64)>>,
    method: MetricMethod,
    eccentricity: OnceLock<Vec<f64>>,
}

impl SurfaceMetric {
    pub fn new(surface: &TriSurface, method: MetricMethod) -> Self {
        let v = surface.vertices();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); v.len()];
        let mut opposite: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for f in surface.faces() {
            for k in 0..3 {
                let (a, b, c) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
                opposite.entry(edge_key(a, b)).or_default().push(c);
            }
        }
        let mut keys: Vec<_> = opposite.keys().copied().collect();
        keys.sort_unstable();
        for &(i, j) in &keys {
            let w = (v[i] - v[j]).norm();
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        if method == MetricMethod::EdgeGraphWithChords {
            for &(i, j) in &keys {
                let opp = &opposite[&(i, j)];
                if let [k, l] = opp[..] {
                    if let Some(w) = unfolded_chord(&v[i], &v[j], &v[k], &v[l]) {
                        adj[k].push((l, w));
                        adj[l].push((k, w));
                    }
                }
            }
        }
        for list in &mut adj {
            list.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            list.dedup_by_key(|e| e.0);
        }
        Self { adj, method, eccentricity: OnceLock::new() }
    }

    pub fn with_chords(surface: &TriSurface) -> Self {
        Self::new(surface, MetricMethod::EdgeGraphWithChords)
    }

    pub fn method(&self) -> MetricMethod {
        self.method
    }

    pub fn num_vertices(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[v]
    }

    /// Dijkstra from `source`. With a restriction mask, only vertices with
    /// `mask[v]` are traversed and every other vertex stays at `+∞`.
    pub fn single_source(&self, source: usize, restriction: Option<&[bool]>) -> DistanceField {
        let n = self.adj.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![usize::MAX; n];
        let allowed = |v: usize| restriction.map_or(true, |m| m[v]);
        if allowed(source) {
            dist[source] = 0.0;
            pred[source] = source;
            let mut heap = BinaryHeap::from([Entry { dist: 0.0, vertex: source }]);
            while let Some(Entry { dist: d, vertex: u }) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for &(w, len) in &self.adj[u] {
                    if !allowed(w) {
                        continue;
                    }
                    let nd = d + len;
                    if nd < dist[w] {
                        dist[w] = nd;
                        pred[w] = u;
                        heap.push(Entry { dist: nd, vertex: w });
                    }
                }
            }
        }
        DistanceField {
            source,
            distance: dist,
            method: self.method,
            restriction: restriction.map(|m| (0..n).filter(|&v| m[v]).collect()),
            predecessor: pred,
        }
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.single_source(a, None).distance[b]
    }

    /// Largest distance from each vertex, computed once and cached.
    pub fn eccentricities(&self) -> &[f64] {
        self.eccentricity.get_or_init(|| {
            (0..self.adj.len())
                .into_par_iter()
                .map(|s| self.single_source(s, None).max_finite())
                .collect()
        })
    }

    pub fn diameter(&self) -> f64 {
        self.eccentricities().iter().copied().fold(0.0, f64::max)
    }

    /// Smallest radius of a vertex-centered ball covering every vertex.
    pub fn radius(&self) -> f64 {
        self.eccentricities().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `max_x d(p,x) + d(q,x) − d(p,q)`.
    pub fn excess(&self, p: usize, q: usize) -> f64 {
        let dp = self.single_source(p, None);
        let dq = self.single_source(q, None);
        let dpq = dp.distance[q];
        dp.distance
            .iter()
            .zip(&dq.distance)
            .map(|(a, b)| a + b - dpq)
            .fold(0.0, f64::max)
    }

    /// Shortest path from `a` to `b` resampled at uniform arclength `step`.
    pub fn geodesic_path(&self, surface: &TriSurface, a: usize, b: usize, step: f64) -> GeodesicPath {
        let field = self.single_source(a, None);
        let vertices = field.path_to(b);
        let arclength = vertices.iter().map(|&v| field.distance[v]).collect();
        GeodesicPath::new(surface, vertices, arclength, step)
    }

    /// Longest edge or chord in the graph.
    pub fn max_weight(&self) -> f64 {
        self.adj.iter().flatten().map(|e| e.1).fold(0.0, f64::max)
    }

    /// Shortest-path distance using only vertices of `subset`.
    pub fn intrinsic_distance_in(&self, subset: &[bool], a: usize, b: usize) -> f64 {
        self.single_source(a, Some(subset)).distance[b]
    }
}

/// Length of the chord `k–l` across edge `(i, j)` after unfolding the two
/// incident faces into the plane, or `None` if the chord leaves the quad.
fn unfolded_chord(i: &Point, j: &Point, k: &Point, l: &Point) -> Option<f64> {
    let at_i = corner_angle(i, j, k) + corner_angle(i, j, l);
    let at_j = corner_angle(j, i, k) + corner_angle(j, i, l);
    if at_i >= std::f64::consts::PI || at_j >= std::f64::consts::PI {
        return None;
    }
    let (a, b) = ((k - i).norm(), (l - i).norm());
    Some((a * a + b * b - 2.0 * a * b * at_i.cos()).max(0.0).sqrt())
}

/// Mean edge length divided by two: the default resampling step.
pub fn default_step(surface: &TriSurface) -> f64 {
    0.5 * surface.mean_edge_length()
}

/// A graph shortest path with its cumulative arclength and uniform resampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeodesicPath {
    pub vertices: Vec<usize>,
    /// Cumulative arclength at each path vertex.
    pub arclength: Vec<f64>,
    pub step: f64,
    /// Uniform sample parameters `0, h, 2h, … ≤ l`.
    pub samples: Vec<f64>,
    pub positions: Vec<Point>,
}

impl GeodesicPath {
    /// `arclength[j]` is the cumulative length at `vertices[j]`.
    pub fn new(surface: &TriSurface, vertices: Vec<usize>, arclength: Vec<f64>, step: f64) -> Self {
        assert!(step > 0.0, "resampling step must be positive");
        assert_eq!(vertices.len(), arclength.len());
        if vertices.len() < 2 {
            return Self {
                vertices,
                arclength: vec![0.0],
                step,
                samples: vec![],
                positions: vec![],
            };
        }
        let p = surface.vertices();
        let length = *arclength.last().unwrap();
        let count = (length / step).floor() as usize + 1;
        let samples: Vec<f64> = (0..count).map(|j| j as f64 * step).collect();
        let mut path = Self { vertices, arclength, step, samples, positions: vec![] };
        let pos: Vec<Point> = path.vertices.iter().map(|&v| p[v]).collect();
        path.positions = path.interpolate(&pos);
        path
    }

    pub fn length(&self) -> f64 {
        *self.arclength.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Values of a vertex function at the resample points (linear in arclength
    /// between consecutive path vertices).
    pub fn sample(&self, f: &[f64]) -> Vec<f64> {
        let vals: Vec<f64> = self.vertices.iter().map(|&v| f[v]).collect();
        self.interpolate(&vals)
    }

    fn interpolate<T>(&self, vals: &[T]) -> Vec<T>
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let mut seg = 0;
        self.samples
            .iter()
            .map(|&t| {
                while seg + 2 < self.arclength.len() && self.arclength[seg + 1] < t {
                    seg += 1;
                }
                let (t0, t1) = (self.arclength[seg], self.arclength[seg + 1]);
                let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
                vals[seg] * (1.0 - w) + vals[seg + 1] * w
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_icosphere, generate_spheroid, rescale_to_curvature_bound};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn great_circle(a: &Point, b: &Point) -> f64 {
        a.normalize().dot(&b.normalize()).clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn pole_to_pole_is_close_to_pi() {
        let m = generate_icosphere(4).unwrap();
        let g = SurfaceMetric::with_chords(&m);
        let field = g.single_source(0, None);
        assert_eq!(field.distance[0], 0.0);
        assert!((field.max_finite() - PI).abs() < 0.05, "{}", field.max_finite());
    }

    #[test]
    fn graph_metric_dominates_great_circles() {
        let m = generate_icosphere(4).unwrap();
        let g = SurfaceMetric::with_chords(&m);
        // Inscribed polyhedral paths can undercut arcs by the chord/arc ratio.
        let e = g.max_weight();
        let undercut = e * e / 24.0;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let a = rng.gen_range(0..m.num_vertices());
            let b = rng.gen_range(0..m.num_vertices());
            let exact = great_circle(&m.vertices()[a], &m.vertices()[b]);
            let d = g.distance(a, b);
            assert!(d - exact >= -undercut * exact - 1e-12, "{d} < {exact}");
            assert!(d - exact <= 0.07 * exact + 0.02, "{d} vs {exact}");
            worst = worst.max((d - exact) / exact.max(1e-9));
        }
        assert!(worst > 0.0);
    }

    #[test]
    fn chords_reduce_overestimation() {
        let m = generate_icosphere(3).unwrap();
        let plain = SurfaceMetric::new(&m, MetricMethod::EdgeGraph);
        let chords = SurfaceMetric::with_chords(&m);
        let a = plain.single_source(5, None);
        let b = chords.single_source(5, None);
        assert!(a.distance.iter().zip(&b.distance).all(|(x, y)| y <= x));
        assert!(b.distance.iter().sum::<f64>() < a.distance.iter().sum::<f64>());
    }

    #[test]
    fn symmetry_and_triangle_inequality() {
        let m = generate_spheroid(1.2, 3).unwrap();
        let g = SurfaceMetric::with_chords(&m);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (a, b, c) = (
                rng.gen_range(0..m.num_vertices()),
                rng.gen_range(0..m.num_vertices()),
                rng.gen_range(0..m.num_vertices()),
            );
            let da = g.single_source(a, None);
            let db = g.single_source(b, None);
            assert!((da.distance[b] - db.distance[a]).abs() < 1e-9);
            assert!(da.distance[c] <= da.distance[b] + db.distance[c] + 1e-9);
        }
    }

    #[test]
    fn diameter_and_radius_of_round_sphere() {
        let m = generate_icosphere(4).unwrap();
        let g = SurfaceMetric::with_chords(&m);
        let (d, r) = (g.diameter(), g.radius());
        assert!(d >= PI - 0.02 && d <= PI + 0.07, "diameter {d}");
        assert!(r >= PI - 0.02 && r <= PI + 0.07, "radius {r}");
        assert!(r <= d);
    }

    #[test]
    fn prolate_diameter_below_pi() {
        let (m, _) = rescale_to_curvature_bound(&generate_spheroid(1.2, 3).unwrap()).unwrap();
        let g = SurfaceMetric::with_chords(&m);
        assert!(g.diameter() < PI, "{}", g.diameter());
    }

    #[test]
    fn excess_examples() {
        let m = generate_icosphere(4).unwrap();
        let g = SurfaceMetric::with_chords(&m);
        assert_eq!(m.vertices()[11].z, -1.0);
        assert!(g.excess(0, 11) <= 0.15, "{}", g.excess(0, 11));
        let (nb, _) = g.neighbors(0)[0];
        assert!(g.excess(0, nb) > 1.5 * PI, "{}", g.excess(0, nb));

        let s = generate_spheroid(1.2, 3).unwrap();
        let gs = SurfaceMetric::with_chords(&s);
        let poles = gs.excess(0, 11);
        let generic = gs.excess(40, 300);
        assert!(poles <= generic, "{poles} vs {generic}");
    }

    #[test]
    fn restricted_distances() {
        let m = generate_icosphere(3).unwrap();
        let g = SurfaceMetric::with_chords(&m);
        let all = vec![true; m.num_vertices()];
        let free = g.single_source(7, None);
        let same = g.single_source(7, Some(&all));
        assert_eq!(free.distance, same.distance);

        // Southern hemisphere, source on the rim.
        let south: Vec<bool> = m.vertices().iter().map(|p| p.z <= 1e-12).collect();
        let rim = (0..m.num_vertices()).find(|&v| m.vertices()[v].z.abs() < 1e-12).unwrap();
        let r = g.single_source(rim, Some(&south));
        let u = g.single_source(rim, None);
        for v in 0..m.num_vertices() {
            if south[v] {
                assert!(r.distance[v] >= u.distance[v] - 1e-12);
            } else {
                assert!(r.distance[v].is_infinite());
            }
        }
    }

    #[test]
    fn equatorial_band_distance() {
        let m = generate_icosphere(4).unwrap();
        let g = SurfaceMetric::with_chords(&m);
        let band: Vec<bool> = m.vertices().iter().map(|p| p.z.abs() < 0.1).collect();
        let a = (0..m.num_vertices()).find(|&v| band[v]).unwrap();
        let pa = m.vertices()[a];
        let b = (0..m.num_vertices())
            .filter(|&v| band[v])
            .min_by(|&x, &y| (m.vertices()[x] + pa).norm().total_cmp(&(m.vertices()[y] + pa).norm()))
            .unwrap();
        let d = g.intrinsic_distance_in(&band, a, b);
        assert!(d.is_finite());
        assert!((d - PI).abs() < 0.25, "{d}");
        assert!(d >= g.distance(a, b) - 1e-12);

        // Removing the band disconnects the hemispheres.
        let no_band: Vec<bool> = band.iter().map(|x| !x).collect();
        assert!(g.intrinsic_distance_in(&no_band, 0, 11).is_infinite());
    }

    #[test]
    fn geodesic_path_properties() {
        let m = generate_icosphere(4).unwrap();
        let g = SurfaceMetric::with_chords(&m);
        let h = default_step(&m);
        let empty = g.geodesic_path(&m, 3, 3, h);
        assert!(empty.is_empty());
        assert_eq!(empty.length(), 0.0);

        let path = g.geodesic_path(&m, 0, 11, h);
        assert!((path.length() - g.distance(0, 11)).abs() < 1e-12);
        assert!(path.samples.windows(2).all(|w| w[1] > w[0]));
        assert!(*path.samples.last().unwrap() <= path.length());
        assert_eq!(path.samples.len(), path.positions.len());
        let z: Vec<f64> = m.vertices().iter().map(|p| p.z).collect();
        let zs = path.sample(&z);
        assert_eq!(zs[0], 1.0);
    }
}
