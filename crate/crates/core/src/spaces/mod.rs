//! Weighted norms on P1 fields and the ratio checks for the Hardy, Poincaré and
//! weighted Sobolev inequalities.

mod fields;

pub use fields::{sample_field, Bump, FieldFamily, Mode, SampledField};

use crate::domain::{field_at, Mesh, TRIANGLE_RULE};
use crate::error::{Error, Result};
use crate::weights::WeightKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    L2,
    H1Semi,
    H1Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedNormSpec {
    pub weight: WeightKind,
    pub kind: NormKind,
}

/// `(int u^2 w)^(1/2)` with the three-point cell rule.
pub fn weighted_l2_norm(mesh: &Mesh, field: &[f64], weight: &WeightKind) -> f64 {
    weighted_lq_norm(mesh, field, weight, 2.0)
}

/// `(int |u|^q w)^(1/q)`.
pub fn weighted_lq_norm(mesh: &Mesh, field: &[f64], weight: &WeightKind, q: f64) -> f64 {
    let mut total = 0.0;
    for (cell, g) in mesh.geometry.iter().enumerate() {
        let s: f64 = mesh
            .quad_points(cell)
            .iter()
            .map(|qp| field_at(mesh, field, cell, qp.bary).abs().powf(q) * weight.at(qp.x))
            .sum();
        total += s * g.area / 3.0;
    }
    total.powf(1.0 / q)
}

/// `(int |grad u|^2 w)^(1/2)` with the cell-constant P1 gradient.
pub fn weighted_h1_seminorm(mesh: &Mesh, field: &[f64], weight: &WeightKind) -> f64 {
    gradient_energy(mesh, field, weight).sqrt()
}

/// `int |grad u|^2 w`.
pub fn gradient_energy(mesh: &Mesh, field: &[f64], weight: &WeightKind) -> f64 {
    let mut total = 0.0;
    for cell in 0..mesh.num_cells() {
        let g = mesh.cell_gradient(field, cell);
        let w = mesh.cell_average(cell, |x| weight.at(x));
        total += (g[0] * g[0] + g[1] * g[1]) * w * mesh.geometry[cell].area;
    }
    total
}

pub fn weighted_norm(mesh: &Mesh, field: &[f64], spec: &WeightedNormSpec) -> f64 {
    match spec.kind {
        NormKind::L2 => weighted_l2_norm(mesh, field, &spec.weight),
        NormKind::H1Semi => weighted_h1_seminorm(mesh, field, &spec.weight),
        NormKind::H1Full => {
            weighted_l2_norm(mesh, field, &spec.weight).hypot(weighted_h1_seminorm(mesh, field, &spec.weight))
        }
    }
}

fn touches_origin(p: &[[f64; 2]; 3], tiny: f64) -> bool {
    if p.iter().any(|v| v[0].hypot(v[1]) <= tiny) {
        return true;
    }
    let cross = |a: [f64; 2], b: [f64; 2]| a[0] * b[1] - a[1] * b[0];
    let s = [cross(p[0], p[1]), cross(p[1], p[2]), cross(p[2], p[0])];
    s.iter().all(|&v| v >= 0.0) || s.iter().all(|&v| v <= 0.0)
}

/// Three-point rule on a triangle; with `tiny` set, pieces touching the origin use the centroid.
fn triangle_rule(p: &[[f64; 2]; 3], u: [f64; 3], f: &impl Fn([f64; 2], f64) -> f64, tiny: Option<f64>) -> f64 {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs();
    if tiny.is_some_and(|t| touches_origin(p, t)) {
        let c = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
        return area * f(c, (u[0] + u[1] + u[2]) / 3.0);
    }
    let mut s = 0.0;
    for l in TRIANGLE_RULE {
        let x = [
            l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
            l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
        ];
        s += f(x, l[0] * u[0] + l[1] * u[1] + l[2] * u[2]);
    }
    s * area / 3.0
}

/// `int f(x, u(x)) dx` for integrands singular at the origin: cells with a vertex in
/// `B_{2h}` are split once into four, and pieces touching the origin use the centroid rule.
pub fn integrate_singular(mesh: &Mesh, field: &[f64], f: impl Fn([f64; 2], f64) -> f64) -> f64 {
    let refine = 2.0 * mesh.h;
    let tiny = 1e-12 * mesh.h_min;
    let mid = |a: [f64; 2], b: [f64; 2]| [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    let mut total = 0.0;
    for c in &mesh.cells {
        let p = [mesh.vertices[c[0]], mesh.vertices[c[1]], mesh.vertices[c[2]]];
        let u = [field[c[0]], field[c[1]], field[c[2]]];
        let near = p.iter().any(|v| v[0] * v[0] + v[1] * v[1] < refine * refine);
        if !near {
            total += triangle_rule(&p, u, &f, None);
            continue;
        }
        let (m01, m12, m20) = (mid(p[0], p[1]), mid(p[1], p[2]), mid(p[2], p[0]));
        let (u01, u12, u20) = ((u[0] + u[1]) / 2.0, (u[1] + u[2]) / 2.0, (u[2] + u[0]) / 2.0);
        total += triangle_rule(&[p[0], m01, m20], [u[0], u01, u20], &f, Some(tiny));
        total += triangle_rule(&[m01, p[1], m12], [u01, u[1], u12], &f, Some(tiny));
        total += triangle_rule(&[m20, m12, p[2]], [u20, u12, u[2]], &f, Some(tiny));
        total += triangle_rule(&[m01, m12, m20], [u01, u12, u20], &f, Some(tiny));
    }
    total
}

/// `m = sup |x| + 1` over the mesh.
pub fn domain_m(mesh: &Mesh) -> f64 {
    mesh.vertices.iter().fold(0.0f64, |m, p| m.max(p[0].hypot(p[1]))) + 1.0
}

fn require_zero_trace(mesh: &Mesh, field: &[f64]) -> Result<()> {
    let scale = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = mesh
        .boundary_vertices()
        .into_iter()
        .fold(0.0f64, |m, v| m.max(field[v].abs()));
    if worst > 1e-12 * scale {
        return Err(Error::invalid(format!(
            "field has boundary trace {worst:e}; the inequality applies to fields vanishing on the boundary"
        )));
    }
    Ok(())
}

fn require_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::invalid(format!("alpha must lie in (0,2), got {alpha}")));
    }
    Ok(())
}

fn ratio(numerator: f64, denominator: f64) -> Result<f64> {
    if numerator == 0.0 {
        return Ok(0.0);
    }
    let r = numerator / denominator;
    if !r.is_finite() {
        return Err(Error::NonFinite(format!("ratio {numerator} / {denominator}")));
    }
    Ok(r)
}

/// `(N-2+alpha) || |x|^(alpha/2-1) u ||_2 / (2 ||grad u||_{L2(w)})` with `w = |x|^alpha`, `N = 2`.
pub fn hardy_ratio(mesh: &Mesh, field: &[f64], alpha: f64) -> Result<f64> {
    require_alpha(alpha)?;
    require_zero_trace(mesh, field)?;
    let lhs = integrate_singular(mesh, field, |x, u| (x[0] * x[0] + x[1] * x[1]).powf(alpha / 2.0 - 1.0) * u * u).sqrt();
    let rhs = weighted_h1_seminorm(mesh, field, &WeightKind::exact(alpha));
    ratio(alpha * lhs, 2.0 * rhs)
}

/// LHS/RHS of the four Poincaré-type inequalities with their explicit constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareRatios {
    /// `(N-2+a)/(2m) ||u||_{L2(w)} <= ||grad u||_{L2(w)}`.
    pub r22: f64,
    /// `(N-2+a)/(2m^(1-a/2)) ||u||_2 <= ||grad u||_{L2(w)}`.
    pub r23: f64,
    /// As `r22` with `w_eps`.
    pub r36: f64,
    /// As `r23` with `w_eps`.
    pub r37: f64,
}

impl PoincareRatios {
    pub fn max(&self) -> f64 {
        self.r22.max(self.r23).max(self.r36).max(self.r37)
    }
}

pub fn poincare_ratios(mesh: &Mesh, field: &[f64], alpha: f64, epsilon: f64) -> Result<PoincareRatios> {
    require_alpha(alpha)?;
    require_zero_trace(mesh, field)?;
    let m = domain_m(mesh);
    let reg = WeightKind::regularized(epsilon, alpha)?;
    let c_w = alpha / (2.0 * m);
    let c_plain = alpha / (2.0 * m.powf(1.0 - alpha / 2.0));
    // one pass: both weights agree outside B_eps, so each point needs one power
    let (mut l2, mut l2_exact, mut l2_reg, mut grad_exact, mut grad_reg) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (cell, g) in mesh.geometry.iter().enumerate() {
        let (mut s, mut se, mut sr, mut we, mut wr) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for qp in mesh.quad_points(cell) {
            let u = field_at(mesh, field, cell, qp.bary);
            let r = qp.x[0].hypot(qp.x[1]);
            let w_exact = r.powf(alpha);
            let w_reg = if r >= epsilon { w_exact } else { reg.radial(r) };
            s += u * u;
            se += u * u * w_exact;
            sr += u * u * w_reg;
            we += w_exact;
            wr += w_reg;
        }
        l2 += s * g.area / 3.0;
        l2_exact += se * g.area / 3.0;
        l2_reg += sr * g.area / 3.0;
        let d = mesh.cell_gradient(field, cell);
        let d2 = d[0] * d[0] + d[1] * d[1];
        grad_exact += d2 * (we / 3.0) * g.area;
        grad_reg += d2 * (wr / 3.0) * g.area;
    }
    let (grad_w, grad_reg) = (grad_exact.sqrt(), grad_reg.sqrt());
    Ok(PoincareRatios {
        r22: ratio(c_w * l2_exact.sqrt(), grad_w)?,
        r23: ratio(c_plain * l2.sqrt(), grad_w)?,
        r36: ratio(c_w * l2_reg.sqrt(), grad_reg)?,
        r37: ratio(c_plain * l2.sqrt(), grad_reg)?,
    })
}

/// `||u||_{L^{kp}(w)} / ||grad u||_{L^p(w)}` for `p = 2`, `k in {1, N/(N-1)}`.
pub fn sobolev_embedding_ratio(mesh: &Mesh, field: &[f64], k: f64, p: f64, weight: &WeightKind) -> Result<f64> {
    if p != 2.0 || !(k == 1.0 || k == 2.0) {
        return Err(Error::invalid(format!("unsupported exponents k = {k}, p = {p}; need p = 2, k in {{1, 2}}")));
    }
    require_zero_trace(mesh, field)?;
    ratio(weighted_lq_norm(mesh, field, weight, k * p), weighted_h1_seminorm(mesh, field, weight))
}
