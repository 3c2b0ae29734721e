//! Circle averages of a discrete solution, tabulated once per solution.
//!
//! For every time node and every radius on a Chebyshev-Lobatto grid inside the
//! radial segments of the mesh, the circle integrals of `u^2`, `|grad u|^2`,
//! `u d_r u`, `(d_r u)^2` and `g^2` are sampled. Segment ends are the ring radii and
//! the radii `r_i cos(pi / n_i)` where circles stop crossing the chords of ring `i`,
//! so each tabulated function is smooth on a segment. Circles in the outermost strip
//! are pulled onto the boundary polygon before point location.

use super::balance::{FIELDS, GRAD2, RAD2, SRC2, U2, URAD};
use crate::domain::{GeometrySpec, Mesh, PointLocator, TimeGrid};
use crate::error::{Error, Result};
use crate::solver::{BoundaryFlux, DiscreteSolution, ScalarSource};
use crate::weights::WeightKind;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Interpolation nodes per radial segment.
pub(crate) const NODES: usize = 5;

struct Sample {
    cell: u32,
    bary: [f64; 3],
    dir: [f64; 2],
    measure: f64,
}

/// Tabulated circle integrals of one discrete solution.
pub struct PreparedSolution {
    pub geometry: GeometrySpec,
    pub weight: WeightKind,
    pub grid: TimeGrid,
    /// Mesh circles, innermost first.
    pub rings: Vec<f64>,
    pub has_source: bool,
    pub has_flux: bool,
    pub(crate) breaks: Vec<f64>,
    table: Vec<f64>,
    segmax: Vec<f64>,
    /// Positive and negative parts of `int (d_nu u)^2 (x . nu) dS` per time node.
    flux: Vec<[f64; 2]>,
}

/// Chebyshev-Lobatto points `cos(pi j / 4)` and their barycentric weights.
fn lobatto() -> ([f64; NODES], [f64; NODES]) {
    let mut x = [0.0; NODES];
    let mut w = [0.0; NODES];
    for j in 0..NODES {
        x[j] = (PI * j as f64 / (NODES - 1) as f64).cos();
        let end = if j == 0 || j == NODES - 1 { 0.5 } else { 1.0 };
        w[j] = if j % 2 == 0 { end } else { -end };
    }
    (x, w)
}

fn vertex_counts(mesh: &Mesh) -> Vec<usize> {
    let mut counts = vec![0usize; mesh.rings.len()];
    for p in &mesh.vertices {
        let r = p[0].hypot(p[1]);
        let i = mesh.rings.partition_point(|&q| q < r);
        for j in [i.wrapping_sub(1), i] {
            if j < counts.len() && (mesh.rings[j] - r).abs() <= 1e-9 * mesh.rings[j].max(1.0) {
                counts[j] += 1;
            }
        }
    }
    counts
}

/// Radius of the boundary polygon along each direction.
struct BoundaryPolygon {
    angles: Vec<f64>,
    points: Vec<[f64; 2]>,
}

impl BoundaryPolygon {
    fn new(mesh: &Mesh, radius: f64) -> Self {
        let mut pts: Vec<(f64, [f64; 2])> = mesh
            .vertices
            .iter()
            .filter(|p| (p[0].hypot(p[1]) - radius).abs() <= 1e-9 * radius)
            .map(|&p| (p[1].atan2(p[0]).rem_euclid(2.0 * PI), p))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { angles: pts.iter().map(|p| p.0).collect(), points: pts.iter().map(|p| p.1).collect() }
    }

    fn radius(&self, dir: [f64; 2], angle: f64) -> f64 {
        let n = self.points.len();
        let k = (self.angles.partition_point(|&a| a <= angle) + n - 1) % n;
        let a = self.points[k];
        let b = self.points[(k + 1) % n];
        let cross = |u: [f64; 2], v: [f64; 2]| u[0] * v[1] - u[1] * v[0];
        cross(a, b) / cross(dir, [b[0] - a[0], b[1] - a[1]])
    }
}

/// Tabulate the circle integrals of `solution` (and of `source^2`) and the signed
/// boundary flux integrals. `flux` rows must be the physical time nodes of the solution.
pub fn prepare(
    mesh: &Mesh,
    solution: &DiscreteSolution,
    flux: Option<&BoundaryFlux>,
    source: Option<&ScalarSource>,
    geometry: GeometrySpec,
) -> Result<PreparedSolution> {
    geometry.validate()?;
    let nodes_t = solution.grid.nodes();
    if solution.values.len() != nodes_t || solution.values.iter().any(|v| v.len() != mesh.num_vertices()) {
        return Err(Error::invalid("solution does not match the mesh and its time grid"));
    }
    if mesh.rings.is_empty() || mesh.boundary_edges.iter().any(|e| e.marker != crate::domain::BoundaryMarker::Outer) {
        return Err(Error::invalid("circle averages need a ring-structured disk mesh"));
    }
    let outer = *mesh.rings.last().expect("nonempty");
    if (outer - geometry.outer_radius).abs() > 1e-9 * outer {
        return Err(Error::invalid(format!("mesh radius {outer} differs from L = {}", geometry.outer_radius)));
    }
    let counts = vertex_counts(mesh);
    let mut breaks = vec![0.0];
    for (i, &r) in mesh.rings.iter().enumerate() {
        if i + 1 < mesh.rings.len() && counts[i] >= 3 {
            breaks.push(r * (PI / counts[i] as f64).cos());
        }
        breaks.push(r);
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    let nseg = breaks.len() - 1;

    let polygon = BoundaryPolygon::new(mesh, outer);
    let strip_inner = if mesh.rings.len() >= 2 { mesh.rings[mesh.rings.len() - 2] } else { 0.0 };
    let locator = PointLocator::new(mesh);
    let (lx, _) = lobatto();
    let mut samples: Vec<Vec<Sample>> = Vec::with_capacity(nseg * NODES);
    for s in 0..nseg {
        let (lo, hi) = (breaks[s], breaks[s + 1]);
        for &x in &lx {
            let r = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x;
            let r = if x == 1.0 { hi } else if x == -1.0 { lo } else { r };
            samples.push(circle_samples(mesh, &locator, &polygon, &counts, strip_inner, outer, r));
        }
    }

    let ncells = mesh.num_cells();
    let grid = solution.grid.clone();
    let per_node: Vec<Vec<f64>> = (0..nodes_t)
        .into_par_iter()
        .map(|n| {
            let u = &solution.values[n];
            let t = grid.time(n);
            let grads: Vec<[f64; 2]> = (0..ncells).map(|c| mesh.cell_gradient(u, c)).collect();
            let mut out = vec![0.0; samples.len() * FIELDS];
            for (k, pts) in samples.iter().enumerate() {
                let mut acc = [0.0; FIELDS];
                for p in pts {
                    let c = mesh.cells[p.cell as usize];
                    let v = p.bary[0] * u[c[0]] + p.bary[1] * u[c[1]] + p.bary[2] * u[c[2]];
                    let g = grads[p.cell as usize];
                    let dr = g[0] * p.dir[0] + g[1] * p.dir[1];
                    acc[U2] += p.measure * v * v;
                    acc[GRAD2] += p.measure * (g[0] * g[0] + g[1] * g[1]);
                    acc[URAD] += p.measure * v * dr;
                    acc[RAD2] += p.measure * dr * dr;
                    if let Some(f) = source {
                        let vx = mesh.vertices[c[0]];
                        let vy = mesh.vertices[c[1]];
                        let vz = mesh.vertices[c[2]];
                        let x = [
                            p.bary[0] * vx[0] + p.bary[1] * vy[0] + p.bary[2] * vz[0],
                            p.bary[0] * vx[1] + p.bary[1] * vy[1] + p.bary[2] * vz[1],
                        ];
                        let gv = f(x, t);
                        acc[SRC2] += p.measure * gv * gv;
                    }
                }
                out[k * FIELDS..(k + 1) * FIELDS].copy_from_slice(&acc);
            }
            out
        })
        .collect();
    for (n, row) in per_node.iter().enumerate() {
        if let Some(bad) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("circle integral {bad} at time node {n}")));
        }
    }
    let table: Vec<f64> = per_node.into_iter().flatten().collect();
    let mut segmax = vec![0.0; nodes_t * nseg * FIELDS];
    for n in 0..nodes_t {
        for s in 0..nseg {
            for f in 0..FIELDS {
                let mut m = 0.0f64;
                for i in 0..NODES {
                    m = m.max(table[((n * nseg + s) * NODES + i) * FIELDS + f].abs());
                }
                segmax[(n * nseg + s) * FIELDS + f] = m;
            }
        }
    }

    let flux_table = match flux {
        None => Vec::new(),
        Some(fl) => {
            if fl.normal_derivative.len() != nodes_t {
                return Err(Error::invalid("boundary flux rows do not match the time grid"));
            }
            let mut column = vec![usize::MAX; mesh.num_vertices()];
            for (j, &v) in fl.nodes.iter().enumerate() {
                column[v] = j;
            }
            let mut rows = Vec::with_capacity(nodes_t);
            for row in &fl.normal_derivative {
                let mut acc = [0.0f64; 2];
                for e in &mesh.boundary_edges {
                    let [i0, i1] = e.vertices;
                    if column[i0] == usize::MAX || column[i1] == usize::MAX {
                        return Err(Error::invalid("boundary flux misses a boundary vertex"));
                    }
                    let (a, b) = (row[column[i0]], row[column[i1]]);
                    let (nu, len) = mesh.edge_normal(e);
                    let p = mesh.vertices[i0];
                    let xn = p[0] * nu[0] + p[1] * nu[1];
                    let v = (a * a + a * b + b * b) / 3.0 * len * xn;
                    if v >= 0.0 {
                        acc[0] += v;
                    } else {
                        acc[1] -= v;
                    }
                }
                rows.push(acc);
            }
            rows
        }
    };

    Ok(PreparedSolution {
        geometry,
        weight: solution.weight,
        grid,
        rings: mesh.rings.clone(),
        has_source: source.is_some(),
        has_flux: flux.is_some(),
        breaks,
        table,
        segmax,
        flux: flux_table,
    })
}

fn circle_samples(
    mesh: &Mesh,
    locator: &PointLocator,
    polygon: &BoundaryPolygon,
    counts: &[usize],
    strip_inner: f64,
    outer: f64,
    r: f64,
) -> Vec<Sample> {
    if r <= 0.0 {
        return Vec::new();
    }
    let ring = mesh.rings.partition_point(|&q| q < r * (1.0 - 1e-12)).min(mesh.rings.len() - 1);
    let n = (4 * counts[ring]).max(16);
    let measure = 2.0 * PI * r / n as f64;
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let angle = 2.0 * PI * (j as f64 + 0.5) / n as f64;
        let dir = [angle.cos(), angle.sin()];
        let rr = if r > strip_inner {
            let rho = polygon.radius(dir, angle);
            strip_inner + (r - strip_inner) * (rho - strip_inner) / (outer - strip_inner)
        } else {
            r
        };
        if let Some((cell, bary)) = locator.locate([rr * dir[0], rr * dir[1]]) {
            out.push(Sample { cell: cell as u32, bary, dir, measure });
        }
    }
    out
}

impl PreparedSolution {
    pub fn segments(&self) -> usize {
        self.breaks.len() - 1
    }

    pub(crate) fn segment_bounds(&self, s: usize) -> (f64, f64) {
        (self.breaks[s], self.breaks[s + 1])
    }

    /// Number of mesh circles with radius in `[lo, hi]`.
    pub fn rings_in(&self, lo: f64, hi: f64) -> usize {
        let tol = 1e-12 * hi.max(1.0);
        self.rings.iter().filter(|&&r| r >= lo - tol && r <= hi + tol).count()
    }

    /// Time interval `[t_n, t_{n+1}]` containing `t` and the fraction inside it.
    #[cfg(test)]
    pub(crate) fn time_slot(&self, t: f64) -> (usize, f64) {
        let dt = self.grid.dt();
        let n = ((t / dt).floor() as usize).min(self.grid.steps - 1);
        (n, ((t - self.grid.time(n)) / dt).clamp(0.0, 1.0))
    }

    fn node_values(&self, n: usize, s: usize, i: usize) -> &[f64] {
        let k = ((n * self.segments() + s) * NODES + i) * FIELDS;
        &self.table[k..k + FIELDS]
    }

    /// Circle integrals at radius `r` in segment `s`, interpolated between time nodes `n`, `n+1`.
    pub(crate) fn eval(&self, s: usize, r: f64, n: usize, frac: f64) -> [f64; FIELDS] {
        let (lo, hi) = self.segment_bounds(s);
        let x = if hi > lo { (2.0 * r - lo - hi) / (hi - lo) } else { 0.0 };
        let (lx, lw) = lobatto();
        let mut coef = [0.0; NODES];
        let mut exact = None;
        let mut denom = 0.0;
        for j in 0..NODES {
            let d = x - lx[j];
            if d == 0.0 {
                exact = Some(j);
                break;
            }
            coef[j] = lw[j] / d;
            denom += coef[j];
        }
        let mut out = [0.0; FIELDS];
        for (slot, weight) in [(n, 1.0 - frac), (n + 1, frac)] {
            if weight == 0.0 {
                continue;
            }
            match exact {
                Some(j) => {
                    let v = self.node_values(slot, s, j);
                    for f in 0..FIELDS {
                        out[f] += weight * v[f];
                    }
                }
                None => {
                    for (j, c) in coef.iter().enumerate() {
                        let v = self.node_values(slot, s, j);
                        for f in 0..FIELDS {
                            out[f] += weight * c / denom * v[f];
                        }
                    }
                }
            }
        }
        out
    }

    /// Upper bound of `|G_f|` on segment `s` over time nodes `n` and `n+1`.
    pub(crate) fn segment_max(&self, s: usize, n: usize) -> [f64; FIELDS] {
        let mut out = [0.0f64; FIELDS];
        for slot in [n, n + 1] {
            let k = (slot * self.segments() + s) * FIELDS;
            for f in 0..FIELDS {
                out[f] = out[f].max(self.segmax[k + f]);
            }
        }
        out
    }

    /// Signed flux integrals at time `t`, linear between nodes.
    pub(crate) fn flux_at(&self, n: usize, frac: f64) -> [f64; 2] {
        let a = self.flux[n];
        let b = self.flux[n + 1];
        [(1.0 - frac) * a[0] + frac * b[0], (1.0 - frac) * a[1] + frac * b[1]]
    }

    /// Space-time integral of `u^2 c(r)` over `lo < |x| < hi` and the whole horizon, with
    /// Gauss rules on the tabulated circle integrals; a reference for the weighted quadratures.
    pub fn plain_integral(&self, lo: f64, hi: f64, field: usize, c: impl Fn(f64) -> f64) -> f64 {
        let rule = super::quadrature::gauss_legendre_rule(8);
        let mut total = 0.0;
        for n in 0..self.grid.steps {
            let mut slab = 0.0;
            for s in 0..self.segments() {
                let (a, b) = self.segment_bounds(s);
                let (a, b) = (a.max(lo), b.min(hi));
                if b <= a {
                    continue;
                }
                for &(z, w) in rule {
                    let r = 0.5 * (a + b) + 0.5 * (b - a) * z;
                    let v = 0.5 * (self.eval(s, r, n, 0.0)[field] + self.eval(s, r, n, 1.0)[field]);
                    slab += 0.5 * (b - a) * w * c(r) * v;
                }
            }
            total += slab * self.grid.dt();
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_disk_mesh, Region, TimeWindow};
    use crate::solver::{solve, ParabolicProblem};
    use crate::spaces::Bump;

    fn fixture(h: f64) -> (Mesh, DiscreteSolution) {
        let mesh = build_disk_mesh(GeometrySpec::default(), h).unwrap();
        let b = Bump::new([4.5, 0.5], 2.0, 1.0);
        let data = mesh.interpolate_zero_trace(|x| b.value(x));
        let p = ParabolicProblem::backward(WeightKind::exact(1.0), 1.0, data);
        let s = solve(&p, &mesh, 8, 1.0).unwrap();
        (mesh, s)
    }

    #[test]
    fn circle_integrals_reproduce_cell_quadrature() {
        let (mesh, sol) = fixture(0.5);
        let prep = prepare(&mesh, &sol, None, None, GeometrySpec::default()).unwrap();
        for (lo, hi) in [(3.0, 6.0), (0.0, 9.0), (1.0, 4.0)] {
            let region = Region::annulus(lo, hi);
            let direct = sol
                .grid
                .integrate(TimeWindow::full(1.0), |n| mesh.integrate(&region, |q| {
                    let v = crate::domain::field_at(&mesh, &sol.values[n], q.cell, q.bary);
                    v * v
                }))
                .unwrap();
            let circles = prep.plain_integral(lo, hi, U2, |_| 1.0);
            assert!((circles / direct - 1.0).abs() < 0.02, "{lo}-{hi}: {circles} vs {direct}");
        }
    }

    #[test]
    fn gradient_tables_match_cellwise_energy() {
        let (mesh, sol) = fixture(0.35);
        let prep = prepare(&mesh, &sol, None, None, GeometrySpec::default()).unwrap();
        let direct = sol
            .grid
            .integrate(TimeWindow::full(1.0), |n| {
                (0..mesh.num_cells())
                    .map(|c| {
                        let g = mesh.cell_gradient(&sol.values[n], c);
                        mesh.geometry[c].area * (g[0] * g[0] + g[1] * g[1])
                    })
                    .sum::<f64>()
            })
            .unwrap();
        let circles = prep.plain_integral(0.0, 9.0, GRAD2, |_| 1.0);
        assert!((circles / direct - 1.0).abs() < 0.03, "{circles} vs {direct}");
        // (d_r u)^2 never exceeds |grad u|^2
        let radial = prep.plain_integral(0.0, 9.0, RAD2, |_| 1.0);
        assert!(radial <= circles * (1.0 + 1e-12));
    }

    #[test]
    fn boundary_polygon_radius() {
        let mesh = build_disk_mesh(GeometrySpec::default(), 0.8).unwrap();
        let poly = BoundaryPolygon::new(&mesh, 9.0);
        let n = poly.points.len() as f64;
        for k in 0..200 {
            let a = k as f64 * 0.0314159;
            let rho = poly.radius([a.cos(), a.sin()], a);
            assert!(rho <= 9.0 + 1e-12 && rho >= 9.0 * (PI / n).cos() - 1e-12, "{rho}");
        }
    }
}
