//! Energy bookkeeping and variational boundary-flux recovery for solved trajectories.

use super::assembly::{assemble_load, boundary_mass};
use super::sparse::conjugate_gradient;
use super::{DiscreteSolution, Operators, ParabolicProblem};
use crate::domain::{Mesh, TimeWindow};
use crate::error::{Error, Result};
use crate::spaces::domain_m;
use serde::{Deserialize, Serialize};

/// Both sides of the energy estimates for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `max_n ||phi(t_n)||^2`.
    pub sup_l2_sq: f64,
    /// `sum_n dt a(u^theta, u^theta)`, the scheme's `int int |grad phi|^2 w`.
    pub gradient_energy: f64,
    /// Trapezoidal `int int |grad phi|^2 w` over the nodal values.
    pub gradient_energy_trapezoid: f64,
    /// `max_n (||u^n||^2 + sum_{k<n} dt a(u^theta, u^theta))` in solve order.
    pub running_energy: f64,
    /// `||phi_0||^2` (the data of the forward equation).
    pub data_sq: f64,
    /// `||g||^2_{L2(Q; 1/w)}`.
    pub source_sq: f64,
    /// `sum_j ||f_j||^2_{L2(Q; 1/w)}`.
    pub divergence_source_sq: f64,
    /// `data_sq + source_sq + divergence_source_sq`.
    pub rhs: f64,
    /// `(sup_l2_sq + gradient_energy) / rhs`.
    pub constant_sup_form: f64,
    /// `running_energy / rhs`.
    pub constant_running_form: f64,
    /// `max{2m/(N+alpha-2), 1}`.
    pub energy_constant: f64,
    /// `data_sq + 2m/(N+alpha-2) source_sq`, the bound on `running_energy` for scalar sources.
    pub running_bound: f64,
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    }
}

pub fn energy_report(mesh: &Mesh, problem: &ParabolicProblem, solution: &DiscreteSolution) -> Result<EnergyReport> {
    let grid = &solution.grid;
    let sup_l2_sq = solution.l2_norms.iter().fold(0.0f64, |m, v| m.max(v * v));
    let gradient_energy: f64 = solution.dissipation.iter().sum();
    let gradient_energy_trapezoid = grid.integrate(TimeWindow::full(grid.horizon), |n| solution.gradient_energy[n])?;
    let mut running = 0.0f64;
    let mut acc = 0.0;
    for k in 0..=grid.steps {
        let norm = solution.l2_norms[solution.physical_index(k)];
        running = running.max(norm * norm + acc);
        if k < grid.steps {
            acc += solution.dissipation[k];
        }
    }
    let data = solution.l2_norms[solution.physical_index(0)];
    let weight = problem.weight;
    let inverse_weighted = |f: &dyn Fn([f64; 2]) -> f64| -> f64 {
        let mut total = 0.0;
        for cell in 0..mesh.num_cells() {
            let s: f64 = mesh.quad_points(cell).iter().map(|q| f(q.x) / weight.at(q.x)).sum();
            total += s * mesh.geometry[cell].area / 3.0;
        }
        total
    };
    let full = TimeWindow::full(grid.horizon);
    let source_sq = match &problem.source {
        Some(g) => grid.integrate(full, |n| {
            let t = grid.time(n);
            inverse_weighted(&|x| g(x, t).powi(2))
        })?,
        None => 0.0,
    };
    let divergence_source_sq = match &problem.divergence_source {
        Some(f) => grid.integrate(full, |n| {
            let t = grid.time(n);
            inverse_weighted(&|x| {
                let v = f(x, t);
                v[0] * v[0] + v[1] * v[1]
            })
        })?,
        None => 0.0,
    };
    if !(source_sq.is_finite() && divergence_source_sq.is_finite()) {
        return Err(Error::NonFinite("source norm weighted by 1/w".into()));
    }
    let rhs = data * data + source_sq + divergence_source_sq;
    let alpha = weight.alpha().unwrap_or(0.0);
    let poincare = 2.0 * domain_m(mesh) / (2.0 + alpha - 2.0);
    Ok(EnergyReport {
        sup_l2_sq,
        gradient_energy,
        gradient_energy_trapezoid,
        running_energy: running,
        data_sq: data * data,
        source_sq,
        divergence_source_sq,
        rhs,
        constant_sup_form: ratio(sup_l2_sq + gradient_energy, rhs),
        constant_running_form: ratio(running, rhs),
        energy_constant: poincare.max(1.0),
        running_bound: data * data + poincare * source_sq,
    })
}

/// `||phi_h - exact||_{L2(Q)}`: three-point rule per cell, trapezoid in time.
pub fn space_time_l2_error(mesh: &Mesh, solution: &DiscreteSolution, exact: impl Fn([f64; 2], f64) -> f64) -> Result<f64> {
    let grid = &solution.grid;
    let sq = grid.integrate(TimeWindow::full(grid.horizon), |n| {
        let t = grid.time(n);
        let values = &solution.values[n];
        mesh.integrate(&crate::domain::Region::Whole, |q| {
            let e = crate::domain::field_at(mesh, values, q.cell, q.bary) - exact(q.x, t);
            e * e
        })
    })?;
    Ok(sq.sqrt())
}

/// Recovered boundary flux; rows are physical time nodes, columns follow `nodes`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryFlux {
    pub nodes: Vec<usize>,
    /// `w d phi / d nu`.
    pub conormal: Vec<Vec<f64>>,
    /// `d phi / d nu`.
    pub normal_derivative: Vec<Vec<f64>>,
}

impl BoundaryFlux {
    /// `||d_nu phi - other||^2_{L2(dQ)}` with the boundary mass matrix and trapezoid in time;
    /// `other(node, n)` gives the comparison value at boundary vertex `node` and time node `n`.
    pub fn l2_distance_sq(&self, mesh: &Mesh, dt: f64, other: impl Fn(usize, usize) -> f64) -> f64 {
        let mb = boundary_mass(mesh, &self.nodes);
        let last = self.normal_derivative.len() - 1;
        let mut total = 0.0;
        for (n, row) in self.normal_derivative.iter().enumerate() {
            let diff: Vec<f64> = row.iter().zip(&self.nodes).map(|(v, &node)| v - other(node, n)).collect();
            let w = if n == 0 || n == last { 0.5 } else { 1.0 };
            total += w * mb.form(&diff, &diff);
        }
        total * dt
    }
}

/// Flux from the weak-form residual on boundary test functions:
/// `<w d_nu phi, psi> = (d_t phi, psi) + a(phi, psi) - (f, psi)`, solved with the boundary mass matrix.
pub fn boundary_flux(mesh: &Mesh, problem: &ParabolicProblem, solution: &DiscreteSolution) -> Result<BoundaryFlux> {
    let ops = Operators::new(mesh, &problem.weight)?;
    boundary_flux_with(mesh, problem, solution, &ops)
}

pub fn boundary_flux_with(
    mesh: &Mesh,
    problem: &ParabolicProblem,
    solution: &DiscreteSolution,
    ops: &Operators,
) -> Result<BoundaryFlux> {
    let nodes = mesh.boundary_vertices();
    let mb = boundary_mass(mesh, &nodes);
    let grid = &solution.grid;
    let dt = grid.dt();
    let (source, divergence) = problem.solve_order_sources();
    let has_source = source.is_some() || divergence.is_some();
    let load = |k: usize| assemble_load(mesh, source.as_ref(), divergence.as_ref(), grid.time(k));
    let n = mesh.num_vertices();
    let steps = grid.steps;
    let mut conormal = vec![Vec::new(); steps + 1];
    let loads: Vec<Vec<f64>> = if has_source { (0..=steps).map(load).collect() } else { Vec::new() };
    let recover = |residual: Vec<f64>| -> Result<Vec<f64>> {
        let rb: Vec<f64> = nodes.iter().map(|&v| residual[v]).collect();
        let mut q = vec![0.0; nodes.len()];
        conjugate_gradient(&mb, &rb, &mut q, 1e-12, 10 * nodes.len().max(10))?;
        Ok(q)
    };
    let u = |k: usize| solution.solve_order(k);
    for k in 0..=steps {
        // second-order difference in time: one-sided at the ends, central inside
        let rate: Vec<f64> = if k == 0 {
            (0..n).map(|i| (-3.0 * u(0)[i] + 4.0 * u(1)[i] - u(2)[i]) / (2.0 * dt)).collect()
        } else if k == steps {
            (0..n).map(|i| (3.0 * u(k)[i] - 4.0 * u(k - 1)[i] + u(k - 2)[i]) / (2.0 * dt)).collect()
        } else {
            (0..n).map(|i| (u(k + 1)[i] - u(k - 1)[i]) / (2.0 * dt)).collect()
        };
        let mut residual = ops.mass.mul(&rate);
        let stiff = ops.stiffness.mul(u(k));
        for i in 0..n {
            residual[i] += stiff[i];
        }
        if has_source {
            for i in 0..n {
                residual[i] -= loads[k][i];
            }
        }
        conormal[solution.physical_index(k)] = recover(residual)?;
    }
    let weights: Vec<f64> = nodes.iter().map(|&v| problem.weight.at(mesh.vertices[v])).collect();
    let normal_derivative = conormal
        .iter()
        .map(|row| row.iter().zip(&weights).map(|(q, w)| q / w).collect())
        .collect();
    Ok(BoundaryFlux { nodes, conormal, normal_derivative })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_annulus_mesh, build_disk_mesh, GeometrySpec};
    use crate::solver::{manufactured_source, solve, ManufacturedTarget, Profile};
    use crate::spaces::Bump;
    use crate::weights::WeightKind;
    use std::sync::Arc;

    #[test]
    fn zero_solution_has_zero_flux_and_energy() {
        let mesh = build_disk_mesh(GeometrySpec::default(), 0.8).unwrap();
        let p = ParabolicProblem::forward(WeightKind::exact(1.0), 1.0, vec![0.0; mesh.num_vertices()]);
        let s = solve(&p, &mesh, 4, 1.0).unwrap();
        let flux = boundary_flux(&mesh, &p, &s).unwrap();
        assert!(flux.conormal.iter().flatten().all(|&v| v == 0.0));
        let e = energy_report(&mesh, &p, &s).unwrap();
        assert_eq!(e.rhs, 0.0);
        assert_eq!(e.constant_sup_form, 0.0);
        assert_eq!(e.constant_running_form, 0.0);
    }

    #[test]
    fn source_free_running_constant_at_most_one() {
        let mesh = build_disk_mesh(GeometrySpec::default(), 0.8).unwrap();
        let data = mesh.interpolate_zero_trace(|x| Bump::new([1.0, 1.0], 3.0, 1.0).value(x));
        for theta in [1.0, 0.5] {
            let p = ParabolicProblem::forward(WeightKind::exact(1.0), 1.0, data.clone());
            let s = solve(&p, &mesh, 8, theta).unwrap();
            let e = energy_report(&mesh, &p, &s).unwrap();
            assert!(e.constant_running_form <= 1.0 + 1e-8, "{e:?}");
            assert!(e.constant_running_form > 0.5);
            assert!(e.running_energy <= e.running_bound * (1.0 + 1e-8));
        }
    }

    #[test]
    fn steady_radial_flux_is_constant_on_each_circle() {
        // steady state u = (r - a)(b - r) with -Lap u = 4 - (a + b)/r
        let (a, b) = (4.0, 9.0);
        let mesh = build_annulus_mesh(a, b, 0.125).unwrap();
        let source: crate::solver::ScalarSource = Arc::new(move |x, _| {
            let r = x[0].hypot(x[1]);
            4.0 - (a + b) / r
        });
        let data = mesh.interpolate(|x| {
            let r = x[0].hypot(x[1]);
            (r - a) * (b - r)
        });
        let p = ParabolicProblem::forward(WeightKind::Unweighted, 1.0, data).with_source(source);
        let s = solve(&p, &mesh, 4, 1.0).unwrap();
        let flux = boundary_flux(&mesh, &p, &s).unwrap();
        let last = &flux.normal_derivative[4];
        for (radius, exact) in [(a, -(b - a)), (b, -(b - a))] {
            let vals: Vec<f64> = flux
                .nodes
                .iter()
                .zip(last)
                .filter(|(&v, _)| (mesh.vertices[v][0].hypot(mesh.vertices[v][1]) - radius).abs() < 1e-9)
                .map(|(_, &q)| q)
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let spread = vals.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
            assert!(spread <= 0.02 * mean.abs(), "{radius}: {spread} vs {mean}");
            assert!((mean - exact).abs() <= 0.02 * exact.abs(), "{radius}: {mean} vs {exact}");
        }
    }

    #[test]
    fn manufactured_flux_converges() {
        let eps = 0.5;
        let w = WeightKind::regularized(eps, 1.0).unwrap();
        let target = ManufacturedTarget::new(Profile::Dome { outer_radius: 9.0 }, 1.0);
        let f = manufactured_source(target, w).unwrap();
        let mut errs = Vec::new();
        for (k, h) in [0.8, 0.4].iter().enumerate() {
            let mesh = crate::domain::build_disk_mesh_resolving(GeometrySpec::default(), *h, eps).unwrap();
            let data = mesh.interpolate_zero_trace(|x| target.value(x, 0.0));
            let p = ParabolicProblem::forward(w, 1.0, data).with_source(f.clone());
            let steps = 4 << k;
            let s = solve(&p, &mesh, steps, 0.5).unwrap();
            let flux = boundary_flux(&mesh, &p, &s).unwrap();
            let dt = s.grid.dt();
            let err = flux
                .l2_distance_sq(&mesh, dt, |v, n| target.radial_derivative(mesh.vertices[v], s.grid.time(n)))
                .sqrt();
            errs.push(err);
        }
        assert!((errs[0] / errs[1]).log2() >= 1.0, "{errs:?}");
    }
}
