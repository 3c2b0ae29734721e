//! P1 / theta-scheme solver for the forward problem `phi_t - div(w grad phi) = f` with
//! homogeneous Dirichlet data, and the backward problem `phi_t + div(w grad phi) = g`
//! through the substitution `u(tau) = phi(T - tau)`.

mod assembly;
mod diagnostics;
mod manufactured;
pub mod sparse;

pub use assembly::{assemble_load, assemble_mass, assemble_stiffness, cell_weights, stiffness_on, ScalarSource, VectorSource};
pub use diagnostics::{boundary_flux, boundary_flux_with, energy_report, space_time_l2_error, BoundaryFlux, EnergyReport};
pub use manufactured::{manufactured_source, ManufacturedTarget, Profile};

use crate::domain::{Mesh, TimeGrid};
use crate::error::{Error, Result};
use crate::weights::WeightKind;
use serde::{Deserialize, Serialize};
use sparse::{conjugate_gradient, CsrMatrix, Pattern};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

pub const CG_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Initial data at `t = 0`, equation `phi_t - div(w grad phi) = f`.
    Forward,
    /// Terminal data at `t = T`, equation `phi_t + div(w grad phi) = g`.
    Backward,
}

/// Coefficients, data and sources of one parabolic problem on a fixed mesh.
#[derive(Clone)]
pub struct ParabolicProblem {
    pub weight: WeightKind,
    pub direction: Direction,
    pub horizon: f64,
    /// Nodal data: `phi(0)` for forward problems, `phi(T)` for backward ones.
    pub data: Vec<f64>,
    pub source: Option<ScalarSource>,
    /// Components `f_i` of a divergence source `sum_i d f_i / dx_i` on the right-hand side.
    pub divergence_source: Option<VectorSource>,
}

impl fmt::Debug for ParabolicProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParabolicProblem")
            .field("weight", &self.weight)
            .field("direction", &self.direction)
            .field("horizon", &self.horizon)
            .field("dofs", &self.data.len())
            .field("source", &self.source.is_some())
            .field("divergence_source", &self.divergence_source.is_some())
            .finish()
    }
}

impl ParabolicProblem {
    pub fn forward(weight: WeightKind, horizon: f64, data: Vec<f64>) -> Self {
        Self { weight, direction: Direction::Forward, horizon, data, source: None, divergence_source: None }
    }

    pub fn backward(weight: WeightKind, horizon: f64, data: Vec<f64>) -> Self {
        Self { weight, direction: Direction::Backward, horizon, data, source: None, divergence_source: None }
    }

    pub fn with_source(mut self, source: ScalarSource) -> Self {
        self.source = Some(source);
        self
    }

    pub fn with_divergence_source(mut self, source: VectorSource) -> Self {
        self.divergence_source = Some(source);
        self
    }

    /// Sources of the forward equation for `u(tau)`: unchanged for forward problems,
    /// `-g(x, T - tau)` for backward ones.
    pub(crate) fn solve_order_sources(&self) -> (Option<ScalarSource>, Option<VectorSource>) {
        match self.direction {
            Direction::Forward => (self.source.clone(), self.divergence_source.clone()),
            Direction::Backward => {
                let t_end = self.horizon;
                let s = self.source.clone().map(|g| -> ScalarSource { Arc::new(move |x, tau| -g(x, t_end - tau)) });
                let d = self.divergence_source.clone().map(|g| -> VectorSource {
                    Arc::new(move |x, tau| {
                        let v = g(x, t_end - tau);
                        [-v[0], -v[1]]
                    })
                });
                (s, d)
            }
        }
    }
}

/// Solved trajectory; `values[n]` is the field at physical time `t_n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteSolution {
    pub grid: TimeGrid,
    pub direction: Direction,
    pub theta: f64,
    pub weight: WeightKind,
    pub values: Vec<Vec<f64>>,
    /// `||phi(t_n)||_{L2}` per physical time node.
    pub l2_norms: Vec<f64>,
    /// `int |grad phi(t_n)|^2 w` per physical time node.
    pub gradient_energy: Vec<f64>,
    /// `dt a(u^theta, u^theta)` per step, in solve order.
    pub dissipation: Vec<f64>,
    /// Relative residual of each step's linear system, recomputed after CG.
    pub residuals: Vec<f64>,
    pub cg_iterations: Vec<usize>,
}

impl DiscreteSolution {
    /// Physical time node of solve-order node `k`.
    #[inline]
    pub fn physical_index(&self, k: usize) -> usize {
        match self.direction {
            Direction::Forward => k,
            Direction::Backward => self.grid.steps - k,
        }
    }

    /// Field at solve-order node `k` (the node `u(tau_k)` of the forward equation).
    pub fn solve_order(&self, k: usize) -> &[f64] {
        &self.values[self.physical_index(k)]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| v.iter_mut().for_each(|x| *x *= factor));
        out.l2_norms.iter_mut().for_each(|x| *x *= factor.abs());
        let f2 = factor * factor;
        out.gradient_energy.iter_mut().for_each(|x| *x *= f2);
        out.dissipation.iter_mut().for_each(|x| *x *= f2);
        out
    }

    /// One line per time node with the nodal values, plus a JSON sidecar next to it.
    pub fn write(&self, path: &Path, mesh_file: &str) -> Result<()> {
        use std::fmt::Write as _;
        let mut text = String::new();
        for v in &self.values {
            let line: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
            let _ = writeln!(text, "{}", line.join(" "));
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
        let sidecar = SolutionSidecar {
            mesh: mesh_file.to_string(),
            horizon: self.grid.horizon,
            steps: self.grid.steps,
            theta: self.theta,
            direction: self.direction,
            weight: self.weight,
        };
        let side_path = path.with_extension("json");
        let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Json { path: side_path.clone(), source: e })?;
        std::fs::write(&side_path, json).map_err(|e| Error::io(&side_path, e))
    }

    /// Read a trajectory written by [`DiscreteSolution::write`]; diagnostics are left empty.
    pub fn read_values(path: &Path) -> Result<(SolutionSidecar, Vec<Vec<f64>>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let row: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            values.push(row.map_err(|e| Error::Parse { path: path.into(), message: format!("line {}: {e}", i + 1) })?);
        }
        let side_path = path.with_extension("json");
        let side = std::fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
        let sidecar = serde_json::from_str(&side).map_err(|e| Error::Json { path: side_path, source: e })?;
        Ok((sidecar, values))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSidecar {
    pub mesh: String,
    pub horizon: f64,
    pub steps: usize,
    pub theta: f64,
    pub direction: Direction,
    pub weight: WeightKind,
}

/// Matrices of one (mesh, weight) pair, reusable across solves.
pub struct Operators {
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub cell_weights: Vec<f64>,
}

impl Operators {
    pub fn new(mesh: &Mesh, weight: &WeightKind) -> Result<Self> {
        let pattern = Pattern::from_mesh(mesh);
        let cell_weights = cell_weights(mesh, weight)?;
        Ok(Self {
            mass: assembly::mass_on(&pattern, mesh),
            stiffness: assembly::stiffness_on(&pattern, mesh, &cell_weights),
            cell_weights,
        })
    }
}

pub fn solve(problem: &ParabolicProblem, mesh: &Mesh, steps: usize, theta: f64) -> Result<DiscreteSolution> {
    let ops = Operators::new(mesh, &problem.weight)?;
    solve_with(problem, mesh, &ops, steps, theta)
}

/// `solve` with pre-assembled operators for `problem.weight`.
pub fn solve_with(
    problem: &ParabolicProblem,
    mesh: &Mesh,
    ops: &Operators,
    steps: usize,
    theta: f64,
) -> Result<DiscreteSolution> {
    if !(0.5..=1.0).contains(&theta) {
        return Err(Error::invalid(format!("theta must lie in [1/2, 1], got {theta}")));
    }
    let grid = TimeGrid::new(problem.horizon, steps)?;
    let n = mesh.num_vertices();
    if problem.data.len() != n {
        return Err(Error::invalid(format!("data has {} values for a mesh with {n} vertices", problem.data.len())));
    }
    if problem.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("problem data".into()));
    }
    let dt = grid.dt();
    let fixed = &mesh.is_boundary;
    let mut system = ops.mass.combine(1.0, &ops.stiffness, theta * dt);
    system.constrain(fixed);
    let explicit = ops.mass.combine(1.0, &ops.stiffness, -(1.0 - theta) * dt);
    let (source, divergence) = problem.solve_order_sources();
    let has_source = source.is_some() || divergence.is_some();
    let load = |k: usize| assemble_load(mesh, source.as_ref(), divergence.as_ref(), grid.time(k));

    let mut u: Vec<f64> = problem.data.iter().zip(fixed).map(|(&v, &b)| if b { 0.0 } else { v }).collect();
    let mut trajectory = Vec::with_capacity(steps + 1);
    let mut dissipation = Vec::with_capacity(steps);
    let mut residuals = Vec::with_capacity(steps);
    let mut iterations = Vec::with_capacity(steps);
    let mut load_prev = if has_source { load(0) } else { Vec::new() };
    let mut rhs = vec![0.0; n];
    let mut check = vec![0.0; n];
    trajectory.push(u.clone());
    for k in 0..steps {
        explicit.matvec(&u, &mut rhs);
        if has_source {
            let load_next = load(k + 1);
            for i in 0..n {
                rhs[i] += dt * (theta * load_next[i] + (1.0 - theta) * load_prev[i]);
            }
            load_prev = load_next;
        }
        for i in 0..n {
            if fixed[i] {
                rhs[i] = 0.0;
            }
        }
        let mut next = u.clone();
        let stats = conjugate_gradient(&system, &rhs, &mut next, CG_TOLERANCE, 10 * n)?;
        system.matvec(&next, &mut check);
        let rn = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let res = check.iter().zip(&rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        residuals.push(if rn > 0.0 { res / rn } else { res });
        iterations.push(stats.iterations);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("solution at step {}", k + 1)));
        }
        let mid: Vec<f64> = next.iter().zip(&u).map(|(a, b)| theta * a + (1.0 - theta) * b).collect();
        dissipation.push(dt * ops.stiffness.form(&mid, &mid));
        u = next;
        trajectory.push(u.clone());
    }
    if problem.direction == Direction::Backward {
        trajectory.reverse();
    }
    let l2_norms = trajectory.iter().map(|v| ops.mass.form(v, v).max(0.0).sqrt()).collect();
    let gradient_energy = trajectory.iter().map(|v| ops.stiffness.form(v, v)).collect();
    Ok(DiscreteSolution {
        grid,
        direction: problem.direction,
        theta,
        weight: problem.weight,
        values: trajectory,
        l2_norms,
        gradient_energy,
        dissipation,
        residuals,
        cg_iterations: iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_disk_mesh, GeometrySpec};
    use crate::spaces::Bump;

    fn mesh() -> Mesh {
        build_disk_mesh(GeometrySpec::default(), 0.8).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let mesh = mesh();
        let p = ParabolicProblem::forward(WeightKind::exact(1.0), 1.0, vec![0.0; mesh.num_vertices()]);
        let s = solve(&p, &mesh, 4, 1.0).unwrap();
        assert!(s.values.iter().all(|v| v.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn l2_norm_non_increasing_and_boundary_zero() {
        let mesh = mesh();
        let data = mesh.interpolate(|x| Bump::new([1.0, 0.5], 3.0, 1.0).value(x) + 0.3);
        for weight in [WeightKind::exact(1.5), WeightKind::regularized(0.25, 0.5).unwrap()] {
            let p = ParabolicProblem::forward(weight, 1.0, data.clone());
            let s = solve(&p, &mesh, 10, 1.0).unwrap();
            for w in s.l2_norms.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
            for v in &s.values {
                assert!(mesh.boundary_vertices().iter().all(|&b| v[b] == 0.0));
            }
            assert!(s.residuals.iter().all(|&r| r <= 10.0 * CG_TOLERANCE), "{:?}", s.residuals);
        }
    }

    #[test]
    fn backward_is_reversed_forward() {
        let mesh = mesh();
        let data = mesh.interpolate_zero_trace(|x| Bump::new([-2.0, 1.0], 1.5, 1.0).value(x));
        let w = WeightKind::exact(1.0);
        let f = solve(&ParabolicProblem::forward(w, 1.0, data.clone()), &mesh, 6, 1.0).unwrap();
        let b = solve(&ParabolicProblem::backward(w, 1.0, data), &mesh, 6, 1.0).unwrap();
        for n in 0..=6 {
            assert_eq!(f.values[n], b.values[6 - n]);
        }
        assert_eq!(b.solve_order(0), &b.values[6][..]);
    }

    #[test]
    fn rejects_bad_parameters() {
        let mesh = mesh();
        let p = ParabolicProblem::forward(WeightKind::exact(1.0), 1.0, vec![0.0; mesh.num_vertices()]);
        assert!(solve(&p, &mesh, 4, 0.3).is_err());
        assert!(solve(&p, &mesh, 1, 1.0).is_err());
        let short = ParabolicProblem::forward(WeightKind::exact(1.0), 1.0, vec![0.0; 3]);
        assert!(solve(&short, &mesh, 4, 1.0).is_err());
    }

    #[test]
    fn export_round_trip() {
        let mesh = mesh();
        let data = mesh.interpolate_zero_trace(|x| Bump::new([0.0, 0.0], 2.0, 1.0).value(x));
        let s = solve(&ParabolicProblem::forward(WeightKind::exact(1.0), 0.5, data), &mesh, 3, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sol.txt");
        s.write(&path, "mesh.txt").unwrap();
        let (side, values) = DiscreteSolution::read_values(&path).unwrap();
        assert_eq!(side.steps, 3);
        assert_eq!(side.mesh, "mesh.txt");
        assert_eq!(values, s.values);
    }
}
