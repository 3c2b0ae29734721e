//! Observability ratios `LHS / RHS` over sampled terminal data, the violation detector,
//! and the initial-energy chain of the unique-continuation argument.

use super::report::{int, num, text, PlotSeries, StudyReport, Table};
use super::{ratio, relative_drift, sample_rng, ExperimentConfig, Stream};
use crate::domain::{build_disk_mesh, field_at, Mesh, Region, TimeWindow};
use crate::error::Result;
use crate::solver::{solve_with, DiscreteSolution, Operators, ParabolicProblem};
use crate::spaces::{sample_field, FieldFamily};
use crate::weights::WeightKind;
use rayon::prelude::*;

/// Cell data shared by every sample on one mesh.
struct Integrator {
    /// `|x_q|^(2 - alpha) * area / 3` per cell and quadrature point.
    zero_order: Vec<[f64; 3]>,
    /// `area * mean(|x|^alpha)` per cell.
    gradient: Vec<f64>,
    /// Membership: `B_4R`, `B_4R \ B_R`, `Omega \ B_5R`, `omega = A_{3R,6R}`.
    core: Vec<bool>,
    core_band: Vec<bool>,
    far: Vec<bool>,
    observed: Vec<bool>,
}

impl Integrator {
    fn new(mesh: &Mesh, alpha: f64, base: f64) -> Self {
        let n = mesh.num_cells();
        let mask = |region: Region| mesh.region_mask(&region);
        Self {
            zero_order: (0..n)
                .map(|c| {
                    let a = mesh.geometry[c].area / 3.0;
                    mesh.quad_points(c).map(|q| a * q.x[0].hypot(q.x[1]).powf(2.0 - alpha))
                })
                .collect(),
            gradient: (0..n).map(|c| mesh.geometry[c].area * mesh.cell_average(c, |x| x[0].hypot(x[1]).powf(alpha))).collect(),
            core: mask(Region::ball(4.0 * base)),
            core_band: mask(Region::annulus(base, 4.0 * base)),
            far: mask(Region::complement(5.0 * base)),
            observed: mask(Region::annulus(3.0 * base, 6.0 * base)),
        }
    }

    /// Spatial integrals at one time node: `[whole, core, far, observed]` with the weights
    /// of each inequality.
    fn at_node(&self, mesh: &Mesh, values: &[f64]) -> [f64; 4] {
        let mut acc = [0.0; 4];
        for (c, w) in self.zero_order.iter().enumerate() {
            let q = mesh.quad_points(c);
            let mut weighted = 0.0;
            let mut plain = 0.0;
            for i in 0..3 {
                let v = field_at(mesh, values, c, q[i].bary);
                weighted += w[i] * v * v;
                plain += v * v;
            }
            acc[0] += weighted;
            if self.core[c] {
                acc[1] += weighted;
            }
            let grad = || {
                let g = mesh.cell_gradient(values, c);
                self.gradient[c] * (g[0] * g[0] + g[1] * g[1])
            };
            if self.core_band[c] {
                acc[1] += grad();
            }
            if self.far[c] {
                acc[2] += weighted + grad();
            }
            if self.observed[c] {
                acc[3] += plain * mesh.geometry[c].area / 3.0;
            }
        }
        acc
    }
}

#[derive(Debug, Clone, Copy)]
struct Integrals {
    lhs: f64,
    lhs_core: f64,
    lhs_far: f64,
    rhs: f64,
    /// `int_{T/4}^{3T/4} ||phi||^2`.
    window: f64,
    /// `||phi(0)||^2`.
    initial: f64,
}

fn integrals(mesh: &Mesh, integ: &Integrator, sol: &DiscreteSolution) -> Result<Integrals> {
    let grid = &sol.grid;
    let per_node: Vec<[f64; 4]> = sol.values.iter().map(|v| integ.at_node(mesh, v)).collect();
    let middle = TimeWindow::middle_half(grid.horizon);
    Ok(Integrals {
        lhs: grid.integrate(middle, |n| per_node[n][0])?,
        lhs_core: grid.integrate(middle, |n| per_node[n][1])?,
        lhs_far: grid.integrate(middle, |n| per_node[n][2])?,
        rhs: grid.integrate(TimeWindow::full(grid.horizon), |n| per_node[n][3])?,
        window: grid.integrate(middle, |n| sol.l2_norms[n] * sol.l2_norms[n])?,
        initial: sol.l2_norms[0] * sol.l2_norms[0],
    })
}

#[derive(Debug, Clone)]
struct Record {
    h: f64,
    family: FieldFamily,
    sample: usize,
    integrals: Integrals,
    /// `|ratio(10 phi) / ratio(phi) - 1|`, largest over the four ratios.
    scaling_deviation: f64,
    injected: bool,
}

impl Record {
    fn ratios(&self) -> [f64; 4] {
        let i = &self.integrals;
        [ratio(i.lhs, i.rhs), ratio(i.lhs_core, i.rhs), ratio(i.lhs_far, i.rhs), ratio(i.window, i.rhs)]
    }

    fn is_violation(&self, cfg: &ExperimentConfig) -> bool {
        let o = &cfg.observability;
        self.integrals.rhs < o.rhs_floor && self.integrals.lhs > o.lhs_floor
    }

    /// `((2/T) window - initial) / initial`, `0` for vanishing data.
    fn chain_slack(&self, horizon: f64) -> f64 {
        let i = &self.integrals;
        let bound = 2.0 / horizon * i.window;
        if i.initial == 0.0 {
            if bound >= 0.0 { 0.0 } else { -1.0 }
        } else {
            (bound - i.initial) / i.initial
        }
    }
}

fn run_level(cfg: &ExperimentConfig, h: f64) -> Result<Vec<Record>> {
    let spec = cfg.geometry_spec();
    let mesh = build_disk_mesh(spec, h)?;
    let weight = WeightKind::exact(cfg.alpha);
    let ops = Operators::new(&mesh, &weight)?;
    let integ = Integrator::new(&mesh, cfg.alpha, spec.base_length);
    let steps = cfg.time.steps(cfg.horizon, h);
    let o = &cfg.observability;
    let jobs: Vec<(FieldFamily, usize)> =
        o.families.iter().flat_map(|&f| (0..o.samples).map(move |s| (f, s))).collect();
    let mut records: Vec<Record> = jobs
        .par_iter()
        .map(|&(family, sample)| -> Result<Record> {
            let mut rng = sample_rng(cfg.seed, Stream::Observability, family, sample);
            let field = sample_field(family, spec.base_length, spec.outer_radius, &mut rng);
            let problem = ParabolicProblem::backward(weight, cfg.horizon, field.to_nodal(&mesh));
            let sol = solve_with(&problem, &mesh, &ops, steps, cfg.time.theta)?;
            let base = integrals(&mesh, &integ, &sol)?;
            let scaled = integrals(&mesh, &integ, &sol.scaled(10.0))?;
            let r0 = Record { h, family, sample, integrals: base, scaling_deviation: 0.0, injected: false };
            let r1 = Record { integrals: scaled, ..r0.clone() };
            let scaling_deviation = r0
                .ratios()
                .iter()
                .zip(r1.ratios())
                .map(|(a, b)| relative_drift(*a, b))
                .fold(0.0, f64::max);
            Ok(Record { scaling_deviation, ..r0 })
        })
        .collect::<Result<_>>()?;
    if o.inject_violation {
        records.push(Record {
            h,
            family: FieldFamily::CoreBumps,
            sample: usize::MAX,
            integrals: Integrals { lhs: 1.0, lhs_core: 1.0, lhs_far: 0.0, rhs: 0.0, window: 1.0, initial: 0.0 },
            scaling_deviation: 0.0,
            injected: true,
        });
    }
    Ok(records)
}

fn run_all_levels(cfg: &ExperimentConfig) -> Result<Vec<Vec<Record>>> {
    cfg.validate()?;
    cfg.mesh_levels.iter().map(|&h| run_level(cfg, h)).collect()
}

fn family_max(records: &[Record], family: FieldFamily, which: usize) -> f64 {
    records.iter().filter(|r| r.family == family && !r.injected).map(|r| r.ratios()[which]).fold(0.0, f64::max)
}

fn observability_report(cfg: &ExperimentConfig, levels: &[Vec<Record>]) -> StudyReport {
    let mut report = StudyReport::new("observe", &cfg.digest(), cfg.seed);
    let mut cases = Table::new(
        "cases",
        &["h", "family", "sample", "lhs", "lhs_core", "lhs_far", "rhs", "ratio", "ratio_core", "ratio_far", "violation"],
    );
    let mut violations = Vec::new();
    let mut all_finite = true;
    let mut worst_scaling = 0.0f64;
    for r in levels.iter().flatten() {
        let i = &r.integrals;
        let rs = r.ratios();
        let violation = r.is_violation(cfg);
        if violation {
            violations.push(format!("h = {}, family {}, sample {}", r.h, r.family.name(), if r.injected { "injected".into() } else { r.sample.to_string() }));
        } else {
            all_finite &= rs.iter().all(|v| v.is_finite() && *v >= 0.0);
        }
        worst_scaling = worst_scaling.max(r.scaling_deviation);
        cases.push(vec![
            num(r.h),
            text(r.family.name()),
            if r.injected { text("injected") } else { int(r.sample) },
            num(i.lhs),
            num(i.lhs_core),
            num(i.lhs_far),
            num(i.rhs),
            num(rs[0]),
            num(rs[1]),
            num(rs[2]),
            serde_json::Value::Bool(violation),
        ]);
    }
    report.tables.push(cases);

    let mut fam = Table::new("family_max", &["family", "h", "ratio", "ratio_core", "ratio_far", "drift"]);
    let mut worst_drift = 0.0f64;
    let n = levels.len();
    for &family in &cfg.observability.families {
        let mut prev: Option<f64> = None;
        for (lvl, recs) in levels.iter().enumerate() {
            let m = family_max(recs, family, 0);
            let drift = prev.map(|p| relative_drift(p, m));
            if lvl + 1 == n && n >= 2 {
                worst_drift = worst_drift.max(drift.unwrap_or(0.0));
            }
            fam.push(vec![
                text(family.name()),
                num(cfg.mesh_levels[lvl]),
                num(m),
                num(family_max(recs, family, 1)),
                num(family_max(recs, family, 2)),
                drift.map_or(serde_json::Value::Null, num),
            ]);
            prev = Some(m);
        }
    }
    report.tables.push(fam);
    report.summary.insert("worst_family_drift".into(), num(worst_drift));
    report.summary.insert("worst_scaling_deviation".into(), num(worst_scaling));
    report.check("no_violation", violations.is_empty(), if violations.is_empty() { "no record with vanishing RHS and non-vanishing LHS".to_string() } else { format!("violation candidates: {}", violations.join("; ")) });
    report.check("ratios_finite", all_finite, "every LHS/RHS ratio is finite and nonnegative");
    report.check("scaling_invariance", worst_scaling <= 1e-10, format!("largest ratio change under 10x data: {worst_scaling:e}"));
    if n >= 2 {
        report.check("family_drift", worst_drift < 0.5, format!("largest family-max drift between h = {} and h = {}: {worst_drift:.4}", cfg.mesh_levels[n - 2], cfg.mesh_levels[n - 1]));
    } else {
        report.warnings.push("one mesh level: refinement drift not assessed".into());
    }
    for &family in &cfg.observability.families {
        report.plots.push(PlotSeries {
            name: format!("observe_{}", family.name()),
            x_label: "h".into(),
            y_label: "max_ratio".into(),
            points: levels.iter().zip(&cfg.mesh_levels).map(|(r, &h)| (h, family_max(r, family, 0))).collect(),
        });
    }
    report
}

fn ucp_report(cfg: &ExperimentConfig, levels: &[Vec<Record>]) -> StudyReport {
    let mut report = StudyReport::new("ucp", &cfg.digest(), cfg.seed);
    let t = cfg.horizon;
    let mut cases = Table::new("cases", &["h", "family", "sample", "initial", "window_bound", "chain_slack", "composite_bound"]);
    let mut worst_chain = f64::INFINITY;
    let mut composite_ok = true;
    let mut constants = Table::new("constants", &["h", "plain_constant"]);
    for (recs, &h) in levels.iter().zip(&cfg.mesh_levels) {
        // observability constant for the plain window integral, from this level's samples
        let c = recs.iter().filter(|r| !r.injected).map(|r| r.ratios()[3]).fold(0.0, f64::max);
        constants.push(vec![num(h), num(c)]);
        for r in recs.iter().filter(|r| !r.injected) {
            let i = &r.integrals;
            let slack = r.chain_slack(t);
            worst_chain = worst_chain.min(slack);
            let composite = 2.0 * c / t * i.rhs;
            composite_ok &= i.initial <= composite * (1.0 + 1e-8) || i.initial == 0.0;
            cases.push(vec![num(h), text(r.family.name()), int(r.sample), num(i.initial), num(2.0 / t * i.window), num(slack), num(composite)]);
        }
    }
    report.tables.push(cases);
    report.tables.push(constants);
    report.summary.insert("worst_chain_slack".into(), num(worst_chain));
    report.check("chain", worst_chain >= -1e-8, format!("smallest relative slack of ||phi(0)||^2 <= (2/T) window: {worst_chain:e}"));
    report.check("composite", composite_ok, "||phi(0)||^2 <= (2C/T) RHS with C the largest plain-window ratio");
    report
}

pub fn run_observability_study(cfg: &ExperimentConfig) -> Result<StudyReport> {
    Ok(observability_report(cfg, &run_all_levels(cfg)?))
}

pub fn run_ucp_check(cfg: &ExperimentConfig) -> Result<StudyReport> {
    Ok(ucp_report(cfg, &run_all_levels(cfg)?))
}

/// Both reports from one set of solves.
pub fn run_observability_and_ucp(cfg: &ExperimentConfig) -> Result<(StudyReport, StudyReport)> {
    let levels = run_all_levels(cfg)?;
    Ok((observability_report(cfg, &levels), ucp_report(cfg, &levels)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.mesh_levels = vec![1.0, 0.8];
        cfg.observability.samples = 2;
        cfg
    }

    #[test]
    fn integrator_matches_region_quadrature() {
        let cfg = ExperimentConfig::default();
        let mesh = build_disk_mesh(cfg.geometry_spec(), 0.8).unwrap();
        let integ = Integrator::new(&mesh, 1.0, 1.0);
        let v = mesh.interpolate_zero_trace(|x| (x[0] - 1.0).cos() + 0.1 * x[1]);
        let acc = integ.at_node(&mesh, &v);
        let sq = |q: &crate::domain::QuadPoint| field_at(&mesh, &v, q.cell, q.bary).powi(2);
        let whole = mesh.integrate(&Region::Whole, |q| sq(q) * q.x[0].hypot(q.x[1]));
        let obs = mesh.integrate(&Region::annulus(3.0, 6.0), sq);
        assert!((acc[0] - whole).abs() < 1e-10 * whole);
        assert!((acc[3] - obs).abs() < 1e-10 * obs);
        assert!(acc[1] > 0.0 && acc[2] > 0.0);
    }

    #[test]
    fn zero_data_gives_zero_ratio_and_chain() {
        let r = Record {
            h: 1.0,
            family: FieldFamily::UniformBumps,
            sample: 0,
            integrals: Integrals { lhs: 0.0, lhs_core: 0.0, lhs_far: 0.0, rhs: 0.0, window: 0.0, initial: 0.0 },
            scaling_deviation: 0.0,
            injected: false,
        };
        assert_eq!(r.ratios(), [0.0; 4]);
        assert_eq!(r.chain_slack(1.0), 0.0);
        assert!(!r.is_violation(&ExperimentConfig::default()));
    }

    #[test]
    fn small_study_passes_and_injection_fails() {
        let cfg = small();
        let (obs, ucp) = run_observability_and_ucp(&cfg).unwrap();
        assert!(ucp.passed(), "{:?}", ucp.failed_checks());
        assert!(obs.check_named("no_violation").unwrap().passed);
        assert!(obs.check_named("ratios_finite").unwrap().passed);
        assert!(obs.check_named("scaling_invariance").unwrap().passed);
        let rows = obs.table("cases").unwrap().rows.len();
        assert_eq!(rows, cfg.mesh_levels.len() * cfg.observability.families.len() * cfg.observability.samples);

        let mut bad = cfg.clone();
        bad.observability.inject_violation = true;
        let obs = run_observability_study(&bad).unwrap();
        assert!(!obs.check_named("no_violation").unwrap().passed);
    }
}
