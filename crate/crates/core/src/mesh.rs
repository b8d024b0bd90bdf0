//! Bulk triangulation, closed boundary loop and trace map.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::numeric::Real;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid resolution {0}: need n >= 2")]
    InvalidResolution(usize),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("triangle {0} has non-positive signed area")]
    InvertedTriangle(usize),
    #[error("non-manifold boundary at node {0}")]
    NonManifoldBoundary(usize),
    #[error("boundary has {0} loops, expected exactly one")]
    MultipleLoops(usize),
    #[error("mesh has no boundary")]
    NoBoundary,
    #[error("triangle {triangle} references node {node} out of range")]
    IndexOutOfRange { triangle: usize, node: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Triangulated polygon with its boundary loop.
///
/// Invariants: triangles are counterclockwise with positive area; `surface_nodes` traces the
/// boundary once counterclockwise starting at the boundary node nearest the origin;
/// `arc_lengths[i]` is the arc length from surface node 0 to the end of boundary edge `i`
/// (edge `i` joins surface nodes `i` and `i + 1` cyclically), so the last entry is the perimeter.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T> {
    pub bulk_nodes: Vec<[T; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub surface_nodes: Vec<usize>,
    pub arc_lengths: Vec<T>,
    bulk_to_surface: Vec<Option<usize>>,
}

impl<T: Real> Mesh<T> {
    /// Builds a mesh and recomputes the boundary loop from triangle adjacency.
    pub fn new(bulk_nodes: Vec<[T; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= bulk_nodes.len() {
                    return Err(MeshError::IndexOutOfRange { triangle: t, node: v });
                }
            }
            if signed_area(&bulk_nodes, tri) <= T::zero() {
                return Err(MeshError::InvertedTriangle(t));
            }
        }
        let surface_nodes = boundary_loop(&bulk_nodes, &triangles)?;
        let mut arc_lengths = Vec::with_capacity(surface_nodes.len());
        let mut acc = T::zero();
        for i in 0..surface_nodes.len() {
            let a = bulk_nodes[surface_nodes[i]];
            let b = bulk_nodes[surface_nodes[(i + 1) % surface_nodes.len()]];
            acc += distance(a, b);
            arc_lengths.push(acc);
        }
        let mut bulk_to_surface = vec![None; bulk_nodes.len()];
        for (s, &b) in surface_nodes.iter().enumerate() {
            bulk_to_surface[b] = Some(s);
        }
        Ok(Self { bulk_nodes, triangles, surface_nodes, arc_lengths, bulk_to_surface })
    }

    pub fn n_bulk(&self) -> usize {
        self.bulk_nodes.len()
    }

    pub fn n_surface(&self) -> usize {
        self.surface_nodes.len()
    }

    /// Bulk node carrying surface node `s`.
    pub fn trace_map(&self, s: usize) -> usize {
        self.surface_nodes[s]
    }

    /// Surface index of bulk node `b`, if it lies on the boundary.
    pub fn surface_index(&self, b: usize) -> Option<usize> {
        self.bulk_to_surface[b]
    }

    pub fn perimeter(&self) -> T {
        *self.arc_lengths.last().expect("non-empty boundary")
    }

    /// Arc-length coordinate of surface node `s`.
    pub fn surface_coordinate(&self, s: usize) -> T {
        if s == 0 {
            T::zero()
        } else {
            self.arc_lengths[s - 1]
        }
    }

    /// Length of boundary edge `e` (surface nodes `e`, `e + 1`).
    pub fn edge_length(&self, e: usize) -> T {
        let prev = if e == 0 { T::zero() } else { self.arc_lengths[e - 1] };
        self.arc_lengths[e] - prev
    }

    /// Surface node indices of boundary edge `e`.
    pub fn surface_edge(&self, e: usize) -> [usize; 2] {
        [e, (e + 1) % self.n_surface()]
    }

    pub fn triangle_area(&self, t: usize) -> T {
        signed_area(&self.bulk_nodes, &self.triangles[t])
    }

    pub fn area(&self) -> T {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Shoelace area of the boundary polygon.
    pub fn shoelace_area(&self) -> T {
        let n = self.n_surface();
        let mut acc = T::zero();
        for i in 0..n {
            let a = self.bulk_nodes[self.surface_nodes[i]];
            let b = self.bulk_nodes[self.surface_nodes[(i + 1) % n]];
            acc += a[0] * b[1] - b[0] * a[1];
        }
        acc / (T::one() + T::one())
    }

    /// Number of undirected edges.
    pub fn n_edges(&self) -> usize {
        edge_counts(&self.triangles).len()
    }

    pub fn is_boundary_node(&self, b: usize) -> bool {
        self.bulk_to_surface[b].is_some()
    }
}

fn distance<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub(crate) fn signed_area<T: Real>(nodes: &[[T; 2]], tri: &[usize; 3]) -> T {
    let [a, b, c] = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
    ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])) / (T::one() + T::one())
}

fn edge_counts(triangles: &[[usize; 3]]) -> HashMap<(usize, usize), usize> {
    let mut counts = HashMap::new();
    for tri in triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    counts
}

fn boundary_loop<T: Real>(nodes: &[[T; 2]], triangles: &[[usize; 3]]) -> Result<Vec<usize>, MeshError> {
    let counts = edge_counts(triangles);
    if let Some((&(a, _), _)) = counts.iter().find(|(_, &c)| c > 2) {
        return Err(MeshError::NonManifoldBoundary(a));
    }
    // Boundary edges keep the orientation of their triangle, so the domain lies to their left.
    let mut next: HashMap<usize, usize> = HashMap::new();
    let mut n_boundary_edges = 0;
    for tri in triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if counts[&(a.min(b), a.max(b))] == 1 {
                n_boundary_edges += 1;
                if next.insert(a, b).is_some() {
                    return Err(MeshError::NonManifoldBoundary(a));
                }
            }
        }
    }
    if n_boundary_edges == 0 {
        return Err(MeshError::NoBoundary);
    }
    let mut incoming: HashMap<usize, usize> = HashMap::new();
    for &b in next.values() {
        *incoming.entry(b).or_insert(0) += 1;
    }
    if let Some((&v, _)) = incoming.iter().find(|(_, &c)| c != 1) {
        return Err(MeshError::NonManifoldBoundary(v));
    }
    if let Some(&v) = next.keys().find(|v| !incoming.contains_key(v)) {
        return Err(MeshError::NonManifoldBoundary(v));
    }

    let norm2 = |p: [T; 2]| p[0] * p[0] + p[1] * p[1];
    let start = next
        .keys()
        .copied()
        .min_by(|&a, &b| {
            norm2(nodes[a])
                .partial_cmp(&norm2(nodes[b]))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        })
        .expect("non-empty boundary");

    let mut loop_nodes = vec![start];
    let mut v = next[&start];
    while v != start {
        loop_nodes.push(v);
        v = next[&v];
        if loop_nodes.len() > n_boundary_edges {
            return Err(MeshError::NonManifoldBoundary(v));
        }
    }
    if loop_nodes.len() != n_boundary_edges {
        let mut seen: std::collections::HashSet<usize> = loop_nodes.iter().copied().collect();
        let mut loops = 1;
        for &s in next.keys() {
            if seen.contains(&s) {
                continue;
            }
            loops += 1;
            let mut w = s;
            while seen.insert(w) {
                w = next[&w];
            }
        }
        return Err(MeshError::MultipleLoops(loops));
    }
    Ok(loop_nodes)
}

/// Structured triangulation of `[0,1]²`; each cell is split along its bottom-left to top-right diagonal.
pub fn generate_unit_square<T: Real>(n: usize) -> Result<Mesh<T>, MeshError> {
    if n < 2 {
        return Err(MeshError::InvalidResolution(n));
    }
    let h = T::one() / T::from_usize_lossy(n);
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = if i == n { T::one() } else { T::from_usize_lossy(i) * h };
            let y = if j == n { T::one() } else { T::from_usize_lossy(j) * h };
            nodes.push([x, y]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Mesh::new(nodes, triangles)
}

pub fn mesh_to_string<T: Real>(mesh: &Mesh<T>) -> String {
    let mut out = String::new();
    out.push_str("bsmesh 1\n");
    let _ = writeln!(out, "{} {}", mesh.n_bulk(), mesh.triangles.len());
    for p in &mesh.bulk_nodes {
        let _ = writeln!(out, "{} {}", p[0], p[1]);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
    }
    out
}

pub fn save_mesh<T: Real>(mesh: &Mesh<T>, path: &Path) -> Result<(), MeshError> {
    std::fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

pub fn load_mesh<T: Real>(path: &Path) -> Result<Mesh<T>, MeshError> {
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text)
}

struct Tokens<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| {
                let t = l.trim();
                !t.is_empty() && !t.starts_with('#')
            })
            .collect();
        Self { lines, pos: 0 }
    }

    fn next_line(&mut self, what: &str) -> Result<(usize, &'a str), MeshError> {
        let line = self.lines.get(self.pos).copied().ok_or_else(|| MeshError::Parse {
            line: self.lines.last().map_or(1, |l| l.0 + 1),
            column: 1,
            message: format!("unexpected end of file, expected {what}"),
        })?;
        self.pos += 1;
        Ok(line)
    }
}

fn fields<'a>(line_no: usize, line: &'a str, expected: usize, what: &str) -> Result<Vec<(usize, &'a str)>, MeshError> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s + 1, &line[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    if out.len() != expected {
        let column = out.get(expected).map_or(line.len() + 1, |f| f.0);
        return Err(MeshError::Parse {
            line: line_no,
            column,
            message: format!("expected {expected} fields ({what}), found {}", out.len()),
        });
    }
    Ok(out)
}

fn parse_field<V: std::str::FromStr>(line: usize, (column, text): (usize, &str), what: &str) -> Result<V, MeshError> {
    text.parse().map_err(|_| MeshError::Parse { line, column, message: format!("invalid {what} `{text}`") })
}

pub fn parse_mesh<T: Real>(text: &str) -> Result<Mesh<T>, MeshError> {
    let mut tokens = Tokens::new(text);
    let (ln, header) = tokens.next_line("header")?;
    if header.trim() != "bsmesh 1" {
        return Err(MeshError::Parse { line: ln, column: 1, message: "expected header `bsmesh 1`".into() });
    }
    let (ln, counts) = tokens.next_line("counts")?;
    let f = fields(ln, counts, 2, "node and triangle counts")?;
    let n_nodes: usize = parse_field(ln, f[0], "node count")?;
    let n_tris: usize = parse_field(ln, f[1], "triangle count")?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let (ln, line) = tokens.next_line("node coordinates")?;
        let f = fields(ln, line, 2, "x y")?;
        let x: T = parse_field(ln, f[0], "coordinate")?;
        let y: T = parse_field(ln, f[1], "coordinate")?;
        if !x.is_finite() || !y.is_finite() {
            return Err(MeshError::Parse { line: ln, column: 1, message: "non-finite coordinate".into() });
        }
        nodes.push([x, y]);
    }
    let mut tris = Vec::with_capacity(n_tris);
    for _ in 0..n_tris {
        let (ln, line) = tokens.next_line("triangle indices")?;
        let f = fields(ln, line, 3, "i j k")?;
        let mut t = [0usize; 3];
        for k in 0..3 {
            t[k] = parse_field(ln, f[k], "node index")?;
            if t[k] >= n_nodes {
                return Err(MeshError::Parse {
                    line: ln,
                    column: f[k].0,
                    message: format!("node index {} out of range", t[k]),
                });
            }
        }
        tris.push(t);
    }
    if let Some(&(ln, _)) = tokens.lines.get(tokens.pos) {
        return Err(MeshError::Parse { line: ln, column: 1, message: "trailing content".into() });
    }
    Mesh::new(nodes, tris)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n2_counts() {
        let m = generate_unit_square::<f64>(2).unwrap();
        assert_eq!(m.n_bulk(), 9);
        assert_eq!(m.triangles.len(), 8);
        assert_eq!(m.n_surface(), 8);
        assert_eq!(m.perimeter(), 4.0);
        assert_eq!(m.area(), 1.0);
    }

    #[test]
    fn rejects_coarse_resolution() {
        assert!(matches!(generate_unit_square::<f64>(1), Err(MeshError::InvalidResolution(1))));
    }

    #[test]
    fn loop_starts_at_origin_and_runs_counterclockwise() {
        let m = generate_unit_square::<f64>(3).unwrap();
        assert_eq!(m.bulk_nodes[m.surface_nodes[0]], [0.0, 0.0]);
        let p1 = m.bulk_nodes[m.surface_nodes[1]];
        assert!(p1[1] == 0.0 && p1[0] > 0.0);
        assert!(m.shoelace_area() > 0.0);
    }

    #[test]
    fn euler_characteristic_is_one() {
        for n in 2..7 {
            let m = generate_unit_square::<f64>(n).unwrap();
            let chi = m.n_bulk() as i64 - m.n_edges() as i64 + m.triangles.len() as i64;
            assert_eq!(chi, 1);
        }
    }

    #[test]
    fn trace_map_is_inverse_of_surface_index() {
        let m = generate_unit_square::<f64>(4).unwrap();
        for s in 0..m.n_surface() {
            assert_eq!(m.surface_index(m.trace_map(s)), Some(s));
        }
        let boundary = (0..m.n_bulk()).filter(|&b| m.is_boundary_node(b)).count();
        assert_eq!(boundary, m.n_surface());
    }

    #[test]
    fn clockwise_triangle_is_rejected() {
        let text = "bsmesh 1\n3 1\n0 0\n1 0\n0 1\n0 2 1\n";
        assert!(matches!(parse_mesh::<f64>(text), Err(MeshError::InvertedTriangle(0))));
    }

    #[test]
    fn parse_error_reports_position() {
        let text = "bsmesh 1\n# comment\n3 1\n0 0\n1 zz\n0 1\n0 1 2\n";
        match parse_mesh::<f64>(text) {
            Err(MeshError::Parse { line, column, .. }) => assert_eq!((line, column), (5, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn f32_mesh_builds() {
        let m = generate_unit_square::<f32>(4).unwrap();
        assert!((m.perimeter() - 4.0).abs() < 1e-6);
    }
}
