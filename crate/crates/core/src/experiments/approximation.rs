//! Convergence of regularized solutions to the solution with `|x|^alpha` as `eps = 1/k -> 0`.

use super::report::{int, num, PlotSeries, StudyReport, Table};
use super::{sample_rng, ExperimentConfig, Stream};
use crate::domain::{build_disk_mesh_resolving, Mesh};
use crate::error::Result;
use crate::solver::sparse::{conjugate_gradient, Pattern};
use crate::solver::{
    boundary_flux_with, solve_with, stiffness_on, BoundaryFlux, Direction, DiscreteSolution, Operators, ParabolicProblem,
    CG_TOLERANCE,
};
use crate::spaces::sample_field;
use crate::weights::WeightKind;

/// Absolute differences and the matching norms of the exact-weight solution.
#[derive(Debug, Clone, Copy)]
struct Differences {
    space_time: [f64; 2],
    terminal: [f64; 2],
    gradient_far: [f64; 2],
    flux: [f64; 2],
}

impl Differences {
    fn relative(&self) -> [f64; 4] {
        let rel = |p: [f64; 2]| if p[1] > 0.0 { p[0] / p[1] } else { p[0] };
        [rel(self.space_time), rel(self.terminal), rel(self.gradient_far), rel(self.flux)]
    }
}

const METRICS: [&str; 4] = ["l2_space_time", "terminal", "gradient_far", "flux"];

fn trapezoid(per_node: impl Fn(usize) -> f64, steps: usize, dt: f64) -> f64 {
    (0..=steps).map(|n| if n == 0 || n == steps { 0.5 } else { 1.0 } * per_node(n)).sum::<f64>() * dt
}

/// Trajectory of `d = phi_k - phi_0` from its own scheme,
/// `M d' + K_k d = -(K_k - K_0) phi_0`, `d(0) = 0`, with the same theta steps as the two
/// solves. Equal to the difference of the discrete solutions, but computed relative to `d`
/// instead of by cancellation.
fn difference_trajectory(
    mesh: &Mesh,
    reg: &Operators,
    exact: &Operators,
    phi0: &DiscreteSolution,
    theta: f64,
) -> Result<DiscreteSolution> {
    let n = mesh.num_vertices();
    let steps = phi0.grid.steps;
    let dt = phi0.grid.dt();
    let dw: Vec<f64> = reg.cell_weights.iter().zip(&exact.cell_weights).map(|(a, b)| a - b).collect();
    let coupling = stiffness_on(&Pattern::from_mesh(mesh), mesh, &dw);
    let fixed = &mesh.is_boundary;
    let mut system = reg.mass.combine(1.0, &reg.stiffness, theta * dt);
    system.constrain(fixed);
    let explicit = reg.mass.combine(1.0, &reg.stiffness, -(1.0 - theta) * dt);
    let mut d = vec![0.0; n];
    let mut values = vec![d.clone()];
    let mut residuals = Vec::with_capacity(steps);
    let mut iterations = Vec::with_capacity(steps);
    let mut rhs = vec![0.0; n];
    let mut forcing_prev = coupling.mul(&phi0.values[0]);
    for k in 0..steps {
        let forcing_next = coupling.mul(&phi0.values[k + 1]);
        explicit.matvec(&d, &mut rhs);
        for i in 0..n {
            rhs[i] = if fixed[i] { 0.0 } else { rhs[i] - dt * (theta * forcing_next[i] + (1.0 - theta) * forcing_prev[i]) };
        }
        let stats = conjugate_gradient(&system, &rhs, &mut d, CG_TOLERANCE, 10 * n)?;
        residuals.push(stats.relative_residual);
        iterations.push(stats.iterations);
        values.push(d.clone());
        forcing_prev = forcing_next;
    }
    let l2_norms = values.iter().map(|v| reg.mass.form(v, v).max(0.0).sqrt()).collect();
    let gradient_energy = values.iter().map(|v| reg.stiffness.form(v, v)).collect();
    Ok(DiscreteSolution {
        grid: phi0.grid.clone(),
        direction: Direction::Forward,
        theta,
        weight: phi0.weight,
        values,
        l2_norms,
        gradient_energy,
        dissipation: Vec::new(),
        residuals,
        cg_iterations: iterations,
    })
}

/// Differences from the trajectory `diff` of `phi_k - phi_0` and its recovered flux, with
/// norms of `phi_0` for the relative values.
fn compare(
    mesh: &Mesh,
    far: f64,
    diff: &DiscreteSolution,
    exact: &DiscreteSolution,
    flux: [&BoundaryFlux; 2],
    ops: &Operators,
) -> Differences {
    let steps = exact.grid.steps;
    let dt = exact.grid.dt();
    let mass_sq = |v: &[f64]| ops.mass.form(v, v);
    let far_cells: Vec<usize> = (0..mesh.num_cells())
        .filter(|&c| {
            let x = mesh.geometry[c].centroid;
            x[0].hypot(x[1]) > far
        })
        .collect();
    let grad_sq = |v: &[f64]| -> f64 {
        far_cells
            .iter()
            .map(|&c| {
                let g = mesh.cell_gradient(v, c);
                mesh.geometry[c].area * (g[0] * g[0] + g[1] * g[1])
            })
            .sum()
    };
    let space_time = [
        trapezoid(|n| mass_sq(&diff.values[n]), steps, dt).sqrt(),
        trapezoid(|n| mass_sq(&exact.values[n]), steps, dt).sqrt(),
    ];
    let terminal = [mass_sq(&diff.values[steps]).sqrt(), exact.l2_norms[steps]];
    let gradient_far = [
        trapezoid(|n| grad_sq(&diff.values[n]), steps, dt).sqrt(),
        trapezoid(|n| grad_sq(&exact.values[n]), steps, dt).sqrt(),
    ];
    let [fd, fe] = flux;
    let flux = [fd.l2_distance_sq(mesh, dt, |_, _| 0.0).sqrt(), fe.l2_distance_sq(mesh, dt, |_, _| 0.0).sqrt()];
    Differences { space_time, terminal, gradient_far, flux }
}

/// Forward problems from the `approximation.family` data, regularized weight against
/// `|x|^alpha` on the same graded mesh per `k`. Metrics are maxima over samples.
pub fn run_approximation_study(cfg: &ExperimentConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let a = &cfg.approximation;
    let spec = cfg.geometry_spec();
    let far = 2.0 * spec.base_length;
    let steps = cfg.time.steps(cfg.horizon, a.h);
    let mut report = StudyReport::new("converge", &cfg.digest(), cfg.seed);
    let mut cases = Table::new(
        "cases",
        &["k", "epsilon", "sample", "vertices", "l2_space_time", "l2_space_time_rel", "terminal", "terminal_rel", "gradient_far", "gradient_far_rel", "flux", "flux_rel"],
    );
    let mut levels = Table::new("levels", &["k", "l2_space_time_rel", "terminal_rel", "gradient_far_rel", "flux_rel"]);
    let fields: Vec<_> = (0..a.samples)
        .map(|s| sample_field(a.family, spec.base_length, spec.outer_radius, &mut sample_rng(cfg.seed, Stream::Approximation, a.family, s)))
        .collect();
    let mut per_level: Vec<(u32, [f64; 4])> = Vec::new();
    for &k in &a.k_levels {
        let eps = 1.0 / k as f64;
        let mesh = build_disk_mesh_resolving(spec, a.h, eps)?;
        if mesh.vertices_inside(eps) < 8 {
            report.warnings.push(format!("k = {k}: fewer than 8 vertices inside B_eps, level skipped"));
            continue;
        }
        let exact_w = WeightKind::exact(cfg.alpha);
        let reg_w = WeightKind::regularized(eps, cfg.alpha)?;
        let exact_ops = Operators::new(&mesh, &exact_w)?;
        let reg_ops = Operators::new(&mesh, &reg_w)?;
        let mut worst = [0.0f64; 4];
        for (s, field) in fields.iter().enumerate() {
            let data = field.to_nodal(&mesh);
            let pe = ParabolicProblem::forward(exact_w, cfg.horizon, data);
            let se = solve_with(&pe, &mesh, &exact_ops, steps, cfg.time.theta)?;
            let sd = difference_trajectory(&mesh, &reg_ops, &exact_ops, &se, cfg.time.theta)?;
            // the coupling term vanishes on boundary rows, so the flux of d is the flux difference
            let pd = ParabolicProblem::forward(reg_w, cfg.horizon, sd.values[0].clone());
            let fd = boundary_flux_with(&mesh, &pd, &sd, &reg_ops)?;
            let fe = boundary_flux_with(&mesh, &pe, &se, &exact_ops)?;
            let d = compare(&mesh, far, &sd, &se, [&fd, &fe], &exact_ops);
            let rel = d.relative();
            for i in 0..4 {
                worst[i] = worst[i].max(rel[i]);
            }
            cases.push(vec![
                int(k as usize),
                num(eps),
                int(s),
                int(mesh.num_vertices()),
                num(d.space_time[0]),
                num(rel[0]),
                num(d.terminal[0]),
                num(rel[1]),
                num(d.gradient_far[0]),
                num(rel[2]),
                num(d.flux[0]),
                num(rel[3]),
            ]);
        }
        levels.push(vec![int(k as usize), num(worst[0]), num(worst[1]), num(worst[2]), num(worst[3])]);
        per_level.push((k, worst));
    }
    report.tables.push(cases);
    report.tables.push(levels);

    if per_level.len() < 2 {
        report.check("levels", false, format!("{} usable k levels, need at least 2", per_level.len()));
        return Ok(report);
    }
    let first = per_level[0].1;
    let last = per_level[per_level.len() - 1].1;
    let drop = first[0] / last[0];
    report.summary.insert("l2_space_time_drop".into(), num(drop));
    report.summary.insert("l2_space_time_final".into(), num(last[0]));
    report.check("l2_drop", drop >= 2.0, format!("relative L2(Q) difference drops by {drop:.3} from k = {} to k = {}", per_level[0].0, per_level[per_level.len() - 1].0));
    report.check("l2_final", last[0] <= 1e-3, format!("relative L2(Q) difference {:e} at the finest k", last[0]));
    for (i, metric) in METRICS.iter().enumerate() {
        // monotone up to 10% noise
        let bad = per_level.windows(2).find(|w| w[1].1[i] > 1.1 * w[0].1[i]);
        let detail = match bad {
            Some(w) => format!("{metric}: {:e} at k = {} after {:e} at k = {}", w[1].1[i], w[1].0, w[0].1[i], w[0].0),
            None => format!("{metric}: non-increasing within 10%"),
        };
        report.check(&format!("{metric}_monotone"), bad.is_none(), detail);
    }
    report.plots.push(PlotSeries {
        name: "converge_l2_space_time".into(),
        x_label: "k".into(),
        y_label: "relative_l2_space_time".into(),
        points: per_level.iter().map(|(k, m)| (*k as f64, m[0])).collect(),
    });
    Ok(report)
}
