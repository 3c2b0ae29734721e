//! P1 mass, weighted stiffness and load vectors.

use super::sparse::{CsrMatrix, Pattern};
use crate::domain::Mesh;
use crate::error::{Error, Result};
use crate::weights::WeightKind;

/// Space-time scalar source `f(x, t)`.
pub type ScalarSource = std::sync::Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;
/// Space-time vector source `(f_1, f_2)(x, t)` of a divergence term `sum_i d f_i / dx_i`.
pub type VectorSource = std::sync::Arc<dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync>;

fn check_cells(mesh: &Mesh) -> Result<()> {
    let tiny = 1e-14 * mesh.h * mesh.h;
    if let Some((c, g)) = mesh.geometry.iter().enumerate().find(|(_, g)| !(g.area > tiny)) {
        return Err(Error::invalid(format!("degenerate cell {c} with area {:e}", g.area)));
    }
    Ok(())
}

/// Consistent mass matrix `M_ij = int phi_i phi_j`.
pub fn assemble_mass(mesh: &Mesh) -> Result<CsrMatrix> {
    check_cells(mesh)?;
    let pattern = Pattern::from_mesh(mesh);
    Ok(mass_on(&pattern, mesh))
}

pub(crate) fn mass_on(pattern: &Pattern, mesh: &Mesh) -> CsrMatrix {
    pattern.assemble(|c| {
        let a = mesh.geometry[c].area / 12.0;
        [2.0 * a, a, a, a, 2.0 * a, a, a, a, 2.0 * a]
    })
}

/// Per-cell quadrature average of the weight; errors on a negative or non-finite value.
pub fn cell_weights(mesh: &Mesh, weight: &WeightKind) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(mesh.num_cells());
    for cell in 0..mesh.num_cells() {
        let mut s = 0.0;
        for q in mesh.quad_points(cell) {
            let w = weight.at(q.x);
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("weight {w} at quadrature point {:?} of cell {cell}", q.x)));
            }
            s += w;
        }
        out.push(s / 3.0);
    }
    Ok(out)
}

/// Weighted stiffness `A_ij = sum_cells (grad phi_i . grad phi_j) |K| avg_K w`.
pub fn assemble_stiffness(mesh: &Mesh, weight: &WeightKind) -> Result<CsrMatrix> {
    check_cells(mesh)?;
    let pattern = Pattern::from_mesh(mesh);
    let w = cell_weights(mesh, weight)?;
    Ok(stiffness_on(&pattern, mesh, &w))
}

/// Stiffness on a given sparsity pattern from per-cell weight averages.
pub fn stiffness_on(pattern: &Pattern, mesh: &Mesh, cell_weight: &[f64]) -> CsrMatrix {
    pattern.assemble(|c| {
        let g = &mesh.geometry[c];
        let s = g.area * cell_weight[c];
        let mut out = [0.0; 9];
        for a in 0..3 {
            for b in 0..3 {
                out[3 * a + b] = s * (g.grads[a][0] * g.grads[b][0] + g.grads[a][1] * g.grads[b][1]);
            }
        }
        out
    })
}

/// Load vector `F_i = (f, phi_i) - sum_k (f_k, d phi_i / dx_k)` at time `t`.
pub fn assemble_load(mesh: &Mesh, source: Option<&ScalarSource>, divergence: Option<&VectorSource>, t: f64) -> Vec<f64> {
    let mut load = vec![0.0; mesh.num_vertices()];
    if source.is_none() && divergence.is_none() {
        return load;
    }
    for cell in 0..mesh.num_cells() {
        let c = mesh.cells[cell];
        let g = &mesh.geometry[cell];
        let scale = g.area / 3.0;
        for q in mesh.quad_points(cell) {
            if let Some(f) = source {
                let v = f(q.x, t) * scale;
                for a in 0..3 {
                    load[c[a]] += v * q.bary[a];
                }
            }
            if let Some(fv) = divergence {
                let v = fv(q.x, t);
                for a in 0..3 {
                    load[c[a]] -= (v[0] * g.grads[a][0] + v[1] * g.grads[a][1]) * scale;
                }
            }
        }
    }
    load
}

/// One-dimensional P1 mass matrix on the boundary edges, indexed by position in `nodes`.
pub(crate) fn boundary_mass(mesh: &Mesh, nodes: &[usize]) -> CsrMatrix {
    let mut index = vec![usize::MAX; mesh.num_vertices()];
    for (k, &v) in nodes.iter().enumerate() {
        index[v] = k;
    }
    let n = nodes.len();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in &mesh.boundary_edges {
        let (_, len) = mesh.edge_normal(e);
        let [i, j] = [index[e.vertices[0]], index[e.vertices[1]]];
        rows[i].push((i, len / 3.0));
        rows[j].push((j, len / 3.0));
        rows[i].push((j, len / 6.0));
        rows[j].push((i, len / 6.0));
    }
    let mut row_ptr = vec![0];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    for row in rows.iter_mut() {
        row.sort_by_key(|e| e.0);
        let mut k = 0;
        while k < row.len() {
            let col = row[k].0;
            let mut s = 0.0;
            while k < row.len() && row[k].0 == col {
                s += row[k].1;
                k += 1;
            }
            col_idx.push(col);
            values.push(s);
        }
        row_ptr.push(col_idx.len());
    }
    CsrMatrix { n, row_ptr, col_idx, values }
}
