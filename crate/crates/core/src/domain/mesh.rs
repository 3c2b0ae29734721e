//! Ring-structured P1 triangulations of disks and annuli.
//!
//! Vertices sit on concentric circles. Every radius in `breaks` is a circle of
//! the mesh, so radial regions whose radii are breaks are resolved exactly by
//! centroid masks.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMarker {
    Outer,
    Inner,
}

impl BoundaryMarker {
    fn as_str(self) -> &'static str {
        match self {
            BoundaryMarker::Outer => "outer",
            BoundaryMarker::Inner => "inner",
        }
    }
}

/// Boundary edge oriented with the domain on its left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub marker: BoundaryMarker,
}

/// Per-cell data cached at construction.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub area: f64,
    pub centroid: [f64; 2],
    /// Gradients of the three barycentric basis functions.
    pub grads: [[f64; 2]; 3],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub cells: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Longest edge.
    pub h: f64,
    /// Shortest edge.
    pub h_min: f64,
    pub is_boundary: Vec<bool>,
    pub geometry: Vec<CellGeometry>,
    /// Radii of the circles the mesh is built on, innermost first.
    pub rings: Vec<f64>,
}

/// Local mesh size as a function of radius.
pub trait SizeField {
    fn size(&self, r: f64) -> f64;
}

impl<F: Fn(f64) -> f64> SizeField for F {
    fn size(&self, r: f64) -> f64 {
        self(r)
    }
}

/// Ring radii between `r0` and `r1` whose spacing follows `size`, including both ends.
fn ring_radii(r0: f64, r1: f64, size: &dyn SizeField) -> Vec<f64> {
    const SAMPLES: usize = 2048;
    let spacing = |r: f64| size.size(r) * 0.5 * 3f64.sqrt();
    let dr = (r1 - r0) / SAMPLES as f64;
    let mut cumulative = vec![0.0; SAMPLES + 1];
    for i in 0..SAMPLES {
        let mid = r0 + (i as f64 + 0.5) * dr;
        cumulative[i + 1] = cumulative[i] + dr / spacing(mid);
    }
    let total = cumulative[SAMPLES];
    let k = (total.ceil() as usize).max(1);
    let mut out = Vec::with_capacity(k + 1);
    out.push(r0);
    let mut seg = 0;
    for j in 1..k {
        let target = total * j as f64 / k as f64;
        while cumulative[seg + 1] < target {
            seg += 1;
        }
        let frac = (target - cumulative[seg]) / (cumulative[seg + 1] - cumulative[seg]);
        out.push(r0 + (seg as f64 + frac) * dr);
    }
    out.push(r1);
    out
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

struct Ring {
    radius: f64,
    ids: Vec<usize>,
    angles: Vec<f64>,
}

fn push_ring(vertices: &mut Vec<[f64; 2]>, radius: f64, size: f64, offset_index: usize) -> Ring {
    let n = ((2.0 * PI * radius / size).ceil() as usize).max(6);
    let shift = if offset_index % 2 == 1 { PI / n as f64 } else { 0.0 };
    let mut ids = Vec::with_capacity(n);
    let mut angles = Vec::with_capacity(n);
    for k in 0..n {
        let th = shift + 2.0 * PI * k as f64 / n as f64;
        ids.push(vertices.len());
        angles.push(th);
        vertices.push([radius * th.cos(), radius * th.sin()]);
    }
    Ring { radius, ids, angles }
}

/// Triangulate the strip between two rings by merging them in angle order.
fn stitch(inner: &Ring, outer: &Ring, cells: &mut Vec<[usize; 3]>) {
    let two_pi = 2.0 * PI;
    let base = inner.angles[0];
    let phase = |t: f64| (t - base).rem_euclid(two_pi);
    let mut order: Vec<usize> = (0..outer.ids.len()).collect();
    order.sort_by(|&a, &b| phase(outer.angles[a]).total_cmp(&phase(outer.angles[b])));
    let b_phase: Vec<f64> = order.iter().map(|&k| phase(outer.angles[k])).collect();
    let b_ids: Vec<usize> = order.iter().map(|&k| outer.ids[k]).collect();
    let (na, nb) = (inner.ids.len(), b_ids.len());
    let next_a = |i: usize| if i + 1 < na { phase(inner.angles[i + 1]) } else { two_pi };
    let next_b = |j: usize| if j + 1 < nb { b_phase[j + 1] } else { b_phase[0] + two_pi };
    let (mut i, mut j) = (0, 0);
    while i < na || j < nb {
        if j == nb || (i < na && next_a(i) <= next_b(j)) {
            cells.push([inner.ids[i], inner.ids[(i + 1) % na], b_ids[j % nb]]);
            i += 1;
        } else {
            cells.push([inner.ids[i % na], b_ids[(j + 1) % nb], b_ids[j % nb]]);
            j += 1;
        }
    }
}

impl Mesh {
    /// Mesh of the disk (`inner = None`) or annulus `inner < |x| < outer`. Every radius in
    /// `breaks` strictly between the two becomes a mesh circle.
    pub fn rings(inner: Option<f64>, outer: f64, breaks: &[f64], size: &dyn SizeField) -> Result<Mesh> {
        let start = inner.unwrap_or(0.0);
        if !(outer > start) || start < 0.0 {
            return Err(Error::invalid(format!("mesh radii must satisfy 0 <= inner < outer, got {start}, {outer}")));
        }
        let mut stops: Vec<f64> = breaks.iter().copied().filter(|&b| b > start && b < outer).collect();
        stops.sort_by(f64::total_cmp);
        stops.dedup();
        stops.push(outer);

        let mut radii: Vec<f64> = Vec::new();
        let mut lo = start;
        for &hi in &stops {
            let seg = ring_radii(lo, hi, size);
            let skip = usize::from(!radii.is_empty());
            radii.extend_from_slice(&seg[skip..]);
            lo = hi;
        }
        if inner.is_none() {
            radii.remove(0);
        }

        let mut vertices = Vec::new();
        let mut cells = Vec::new();
        let mut rings: Vec<Ring> = Vec::with_capacity(radii.len());
        if inner.is_none() {
            vertices.push([0.0, 0.0]);
        }
        for (k, &r) in radii.iter().enumerate() {
            rings.push(push_ring(&mut vertices, r, size.size(r), k));
        }
        if inner.is_none() {
            let first = &rings[0];
            let n = first.ids.len();
            for k in 0..n {
                cells.push([0, first.ids[k], first.ids[(k + 1) % n]]);
            }
        }
        for pair in rings.windows(2) {
            stitch(&pair[0], &pair[1], &mut cells);
        }
        for c in cells.iter_mut() {
            if signed_area(vertices[c[0]], vertices[c[1]], vertices[c[2]]) < 0.0 {
                c.swap(1, 2);
            }
        }

        let mut boundary_edges = Vec::new();
        let last = rings.last().expect("at least one ring");
        let n = last.ids.len();
        for k in 0..n {
            boundary_edges.push(BoundaryEdge { vertices: [last.ids[k], last.ids[(k + 1) % n]], marker: BoundaryMarker::Outer });
        }
        if inner.is_some() {
            let first = &rings[0];
            let n = first.ids.len();
            for k in 0..n {
                boundary_edges.push(BoundaryEdge {
                    vertices: [first.ids[(k + 1) % n], first.ids[k]],
                    marker: BoundaryMarker::Inner,
                });
            }
        }
        let ring_radii: Vec<f64> = rings.iter().map(|r| r.radius).collect();
        Mesh::from_parts(vertices, cells, boundary_edges, ring_radii)
    }

    /// Assemble a mesh from raw arrays, validating orientation.
    pub fn from_parts(
        vertices: Vec<[f64; 2]>,
        cells: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        rings: Vec<f64>,
    ) -> Result<Mesh> {
        let mut geometry = Vec::with_capacity(cells.len());
        let mut h = 0.0f64;
        let mut h_min = f64::INFINITY;
        for (idx, c) in cells.iter().enumerate() {
            if c.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::invalid(format!("cell {idx} references a missing vertex")));
            }
            let [a, b, d] = [vertices[c[0]], vertices[c[1]], vertices[c[2]]];
            let area = signed_area(a, b, d);
            if !(area > 0.0) {
                return Err(Error::invalid(format!("cell {idx} has non-positive signed area {area:e}")));
            }
            let inv = 1.0 / (2.0 * area);
            let grads = [
                [(b[1] - d[1]) * inv, (d[0] - b[0]) * inv],
                [(d[1] - a[1]) * inv, (a[0] - d[0]) * inv],
                [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv],
            ];
            let centroid = [(a[0] + b[0] + d[0]) / 3.0, (a[1] + b[1] + d[1]) / 3.0];
            for (p, q) in [(a, b), (b, d), (d, a)] {
                let len = (p[0] - q[0]).hypot(p[1] - q[1]);
                h = h.max(len);
                h_min = h_min.min(len);
            }
            geometry.push(CellGeometry { area, centroid, grads });
        }
        let mut is_boundary = vec![false; vertices.len()];
        for e in &boundary_edges {
            for &v in &e.vertices {
                if v >= vertices.len() {
                    return Err(Error::invalid("boundary edge references a missing vertex"));
                }
                is_boundary[v] = true;
            }
        }
        Ok(Mesh { vertices, cells, boundary_edges, h, h_min, is_boundary, geometry, rings })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn total_area(&self) -> f64 {
        self.geometry.iter().map(|g| g.area).sum()
    }

    /// Unit outward normal and length of a boundary edge.
    pub fn edge_normal(&self, edge: &BoundaryEdge) -> ([f64; 2], f64) {
        let p = self.vertices[edge.vertices[0]];
        let q = self.vertices[edge.vertices[1]];
        let (tx, ty) = (q[0] - p[0], q[1] - p[1]);
        let len = tx.hypot(ty);
        ([ty / len, -tx / len], len)
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&v| self.is_boundary[v]).collect()
    }

    /// Number of vertices strictly inside the ball of radius `r`.
    pub fn vertices_inside(&self, r: f64) -> usize {
        self.vertices.iter().filter(|p| p[0].hypot(p[1]) < r).count()
    }

    /// Evaluate a function at the vertices.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.vertices.iter().map(|&p| f(p)).collect()
    }

    /// Like `interpolate`, but boundary values are set to zero.
    pub fn interpolate_zero_trace(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.vertices
            .iter()
            .zip(&self.is_boundary)
            .map(|(&p, &b)| if b { 0.0 } else { f(p) })
            .collect()
    }

    /// Plain-text export: `vertices n` then `x y` lines, `cells m` then `i j k` lines,
    /// `boundary_edges k` then `i j marker` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "vertices {}", self.vertices.len());
        for p in &self.vertices {
            let _ = writeln!(s, "{:?} {:?}", p[0], p[1]);
        }
        let _ = writeln!(s, "cells {}", self.cells.len());
        for c in &self.cells {
            let _ = writeln!(s, "{} {} {}", c[0], c[1], c[2]);
        }
        let _ = writeln!(s, "boundary_edges {}", self.boundary_edges.len());
        for e in &self.boundary_edges {
            let _ = writeln!(s, "{} {} {}", e.vertices[0], e.vertices[1], e.marker.as_str());
        }
        s
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Mesh> {
        let bad = |message: String| Error::Parse { path: path.to_path_buf(), message };
        let mut all = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let count = |line: Option<&str>, name: &str| -> Result<usize> {
            let line = line.ok_or_else(|| bad(format!("missing `{name}` header")))?;
            let mut it = line.split_whitespace();
            if it.next() != Some(name) {
                return Err(bad(format!("expected `{name}` header, got `{line}`")));
            }
            it.next().and_then(|n| n.parse().ok()).ok_or_else(|| bad(format!("bad count in `{line}`")))
        };
        let nv = count(all.next(), "vertices")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = all.next().ok_or_else(|| bad("truncated vertex list".into()))?;
            let v: Vec<f64> = line.split_whitespace().map(|t| t.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|e| bad(format!("{e} in `{line}`")))?;
            if v.len() != 2 {
                return Err(bad(format!("vertex line needs 2 numbers: `{line}`")));
            }
            vertices.push([v[0], v[1]]);
        }
        let nc = count(all.next(), "cells")?;
        let mut cells = Vec::with_capacity(nc);
        for _ in 0..nc {
            let line = all.next().ok_or_else(|| bad("truncated cell list".into()))?;
            let v: Vec<usize> = line.split_whitespace().map(|t| t.parse::<usize>()).collect::<std::result::Result<_, _>>().map_err(|e| bad(format!("{e} in `{line}`")))?;
            if v.len() != 3 {
                return Err(bad(format!("cell line needs 3 indices: `{line}`")));
            }
            cells.push([v[0], v[1], v[2]]);
        }
        let ne = count(all.next(), "boundary_edges")?;
        let mut edges = Vec::with_capacity(ne);
        for _ in 0..ne {
            let line = all.next().ok_or_else(|| bad("truncated boundary edge list".into()))?;
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(bad(format!("boundary edge line needs `i j marker`: `{line}`")));
            }
            let marker = match t[2] {
                "outer" => BoundaryMarker::Outer,
                "inner" => BoundaryMarker::Inner,
                other => return Err(bad(format!("unknown boundary marker `{other}`"))),
            };
            let i = t[0].parse().map_err(|e| bad(format!("{e} in `{line}`")))?;
            let j = t[1].parse().map_err(|e| bad(format!("{e} in `{line}`")))?;
            edges.push(BoundaryEdge { vertices: [i, j], marker });
        }
        let mut rings: Vec<f64> = vertices.iter().map(|p| p[0].hypot(p[1])).filter(|r| *r > 0.0).collect();
        rings.sort_by(f64::total_cmp);
        rings.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
        Mesh::from_parts(vertices, cells, edges, rings)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Mesh> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Mesh::from_text(&text, path)
    }
}
