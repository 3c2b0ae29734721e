//! Cell quadrature (degree-2 exact triangle rule) and trapezoidal time integration.

use super::{Mesh, Region};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Three-point rule at barycentric `(2/3, 1/6, 1/6)` and permutations, weights `1/3`.
pub const TRIANGLE_RULE: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

/// A quadrature point of a cell.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub cell: usize,
    pub x: [f64; 2],
    pub bary: [f64; 3],
}

/// P1 field value at barycentric coordinates of a cell.
#[inline]
pub fn field_at(mesh: &Mesh, values: &[f64], cell: usize, bary: [f64; 3]) -> f64 {
    let c = mesh.cells[cell];
    bary[0] * values[c[0]] + bary[1] * values[c[1]] + bary[2] * values[c[2]]
}

impl Mesh {
    /// Quadrature points of a cell.
    #[inline]
    pub fn quad_points(&self, cell: usize) -> [QuadPoint; 3] {
        let c = self.cells[cell];
        let [a, b, d] = [self.vertices[c[0]], self.vertices[c[1]], self.vertices[c[2]]];
        TRIANGLE_RULE.map(|l| QuadPoint {
            cell,
            x: [l[0] * a[0] + l[1] * b[0] + l[2] * d[0], l[0] * a[1] + l[1] * b[1] + l[2] * d[1]],
            bary: l,
        })
    }

    /// `int_region f` with `f` evaluated at the cell quadrature points.
    pub fn integrate(&self, region: &Region, f: impl Fn(&QuadPoint) -> f64) -> f64 {
        let mut total = 0.0;
        for (cell, g) in self.geometry.iter().enumerate() {
            if !region.contains(g.centroid) {
                continue;
            }
            let mut s = 0.0;
            for q in self.quad_points(cell) {
                s += f(&q);
            }
            total += s * g.area / 3.0;
        }
        total
    }

    /// `int_region u w` for a P1 field `u`.
    pub fn integrate_field(&self, values: &[f64], region: &Region, weight: impl Fn([f64; 2]) -> f64) -> f64 {
        self.integrate(region, |q| field_at(self, values, q.cell, q.bary) * weight(q.x))
    }

    /// Per-cell sum `sum_cells mask * f(cell)` for cell-constant integrands (already multiplied by area).
    pub fn sum_cells(&self, region: &Region, f: impl Fn(usize) -> f64) -> f64 {
        self.geometry
            .iter()
            .enumerate()
            .filter(|(_, g)| region.contains(g.centroid))
            .map(|(c, _)| f(c))
            .sum()
    }

    /// Constant gradient of a P1 field on a cell.
    #[inline]
    pub fn cell_gradient(&self, values: &[f64], cell: usize) -> [f64; 2] {
        let c = self.cells[cell];
        let g = &self.geometry[cell].grads;
        [
            values[c[0]] * g[0][0] + values[c[1]] * g[1][0] + values[c[2]] * g[2][0],
            values[c[0]] * g[0][1] + values[c[1]] * g[1][1] + values[c[2]] * g[2][1],
        ]
    }

    /// Per-cell quadrature of a spatial function, `sum_q f(x_q) / 3`, i.e. its cell average.
    #[inline]
    pub fn cell_average(&self, cell: usize, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.quad_points(cell).iter().map(|q| f(q.x)).sum::<f64>() / 3.0
    }
}

/// Uniform time grid `t_n = n T / M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

/// Closed time interval `[start, end]`, snapped to grid nodes when integrating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
}

impl TimeWindow {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    /// `(T/4, 3T/4)`.
    pub fn middle_half(horizon: f64) -> Self {
        Self { start: 0.25 * horizon, end: 0.75 * horizon }
    }

    pub fn full(horizon: f64) -> Self {
        Self { start: 0.0, end: horizon }
    }
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps < 2 {
            return Err(Error::invalid(format!("need at least 2 time steps, got {steps}")));
        }
        Ok(Self { horizon, steps })
    }

    /// Grid with `dt` close to `target_dt`, with an even step count so `T/2` is a node.
    pub fn with_step(horizon: f64, target_dt: f64, max_steps: usize) -> Result<Self> {
        let mut m = ((horizon / target_dt).round() as usize).max(2);
        m += m % 2;
        Self::new(horizon, m.min(max_steps - max_steps % 2))
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    #[inline]
    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.horizon
        } else {
            self.horizon * n as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    /// Node range `[i0, i1]` nearest to the window ends.
    pub fn snap(&self, window: TimeWindow) -> Result<(usize, usize)> {
        let tol = 1e-12 * self.horizon;
        if window.start < -tol || window.end > self.horizon + tol || window.end < window.start {
            return Err(Error::invalid(format!(
                "time window [{}, {}] is not inside [0, {}]",
                window.start, window.end, self.horizon
            )));
        }
        let dt = self.dt();
        let i0 = (window.start / dt).round() as usize;
        let i1 = ((window.end / dt).round() as usize).min(self.steps);
        Ok((i0.min(i1), i1))
    }

    /// Trapezoidal rule over the snapped window for per-node values.
    pub fn integrate(&self, window: TimeWindow, per_node: impl Fn(usize) -> f64) -> Result<f64> {
        let (i0, i1) = self.snap(window)?;
        if i0 == i1 {
            return Ok(0.0);
        }
        let dt = self.dt();
        let mut s = 0.5 * (per_node(i0) + per_node(i1));
        for n in i0 + 1..i1 {
            s += per_node(n);
        }
        Ok(s * dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_disk_mesh, GeometrySpec};
    use std::f64::consts::PI;

    #[test]
    fn reproduces_quadratics_per_cell() {
        let mesh = build_disk_mesh(GeometrySpec::default(), 0.9).unwrap();
        for cell in [0, 17, mesh.num_cells() - 1] {
            let c = mesh.cells[cell];
            let [a, b, d] = [mesh.vertices[c[0]], mesh.vertices[c[1]], mesh.vertices[c[2]]];
            let area = mesh.geometry[cell].area;
            // oracle: exact integral of x^2 over a triangle via edge midpoints (exact for quadratics)
            let mids = [
                [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0],
                [(b[0] + d[0]) / 2.0, (b[1] + d[1]) / 2.0],
                [(d[0] + a[0]) / 2.0, (d[1] + a[1]) / 2.0],
            ];
            let f = |p: [f64; 2]| 1.0 + 2.0 * p[0] - p[1] + p[0] * p[0] - 3.0 * p[0] * p[1] + 0.5 * p[1] * p[1];
            let exact: f64 = mids.iter().map(|&m| f(m)).sum::<f64>() * area / 3.0;
            let rule = mesh.cell_average(cell, f) * area;
            assert!((rule - exact).abs() < 1e-12 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn area_and_polar_integrals() {
        let mesh = build_disk_mesh(GeometrySpec::default(), 0.25).unwrap();
        let area = mesh.integrate(&Region::Whole, |_| 1.0);
        assert!((area - 81.0 * PI).abs() / (81.0 * PI) < 1e-3);
        assert_eq!(mesh.integrate(&Region::Whole, |_| 0.0), 0.0);

        let v = mesh.integrate(&Region::ball(1.0), |q| {
            let r = q.x[0].hypot(q.x[1]);
            r * r * r
        });
        assert!((v - 2.0 * PI / 5.0).abs() / (2.0 * PI / 5.0) < 0.01, "{v}");
    }

    #[test]
    fn area_converges_at_second_order() {
        let errs: Vec<f64> = [0.8, 0.4, 0.2]
            .iter()
            .map(|&h| {
                let m = build_disk_mesh(GeometrySpec::default(), h).unwrap();
                (81.0 * PI - m.integrate(&Region::Whole, |_| 1.0)).abs()
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.9, "{errs:?}");
        }
    }

    #[test]
    fn trapezoid_windows() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let v = grid.integrate(TimeWindow::full(1.0), |n| grid.time(n)).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        let w = grid.integrate(TimeWindow::middle_half(1.0), |_| 1.0).unwrap();
        assert!((w - 0.5).abs() < 1e-15);
        assert!(grid.integrate(TimeWindow::new(-0.1, 0.5), |_| 1.0).is_err());
        assert!(grid.integrate(TimeWindow::new(0.5, 1.2), |_| 1.0).is_err());
    }

    #[test]
    fn region_additivity() {
        let mesh = build_disk_mesh(GeometrySpec::default(), 0.5).unwrap();
        let f = |q: &QuadPoint| (q.x[0] * 0.3).sin() + q.x[1] * q.x[1];
        let whole = mesh.integrate(&Region::Whole, f);
        let parts = mesh.integrate(&Region::ball(3.0), f) + mesh.integrate(&Region::complement(3.0), f);
        assert!((whole - parts).abs() < 1e-10 * whole.abs());
    }
}
