//! CSR matrices on the P1 sparsity pattern and Jacobi-preconditioned conjugate gradients.

use crate::domain::Mesh;
use crate::error::{Error, Result};

/// Square sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

/// Vertex-adjacency pattern of a mesh plus, for each cell, the nine slots of its local matrix.
#[derive(Debug, Clone)]
pub struct Pattern {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub cell_slots: Vec<[usize; 9]>,
}

impl Pattern {
    pub fn from_mesh(mesh: &Mesh) -> Self {
        let n = mesh.num_vertices();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for c in &mesh.cells {
            for &a in c {
                rows[a].extend_from_slice(c);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let slot = |i: usize, j: usize| -> usize {
            let s = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            row_ptr[i] + s.binary_search(&j).expect("pattern contains every cell pair")
        };
        let cell_slots = mesh
            .cells
            .iter()
            .map(|c| {
                let mut out = [0; 9];
                for a in 0..3 {
                    for b in 0..3 {
                        out[3 * a + b] = slot(c[a], c[b]);
                    }
                }
                out
            })
            .collect();
        Pattern { n, row_ptr, col_idx, cell_slots }
    }

    /// Matrix with the given local 3x3 blocks summed in cell order.
    pub fn assemble(&self, local: impl Fn(usize) -> [f64; 9]) -> CsrMatrix {
        let mut values = vec![0.0; self.col_idx.len()];
        for (cell, slots) in self.cell_slots.iter().enumerate() {
            let block = local(cell);
            for k in 0..9 {
                values[slots[k]] += block[k];
            }
        }
        CsrMatrix { n: self.n, row_ptr: self.row_ptr.clone(), col_idx: self.col_idx.clone(), values }
    }
}

impl CsrMatrix {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// `x^T A y`.
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            let mut row = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.values[k] * y[self.col_idx[k]];
            }
            s += x[i] * row;
        }
        s
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let s = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        s.binary_search(&j).map(|k| self.values[self.row_ptr[i] + k]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `a self + b other` on an identical pattern.
    pub fn combine(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        debug_assert_eq!(self.col_idx, other.col_idx);
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        CsrMatrix { n: self.n, row_ptr: self.row_ptr.clone(), col_idx: self.col_idx.clone(), values }
    }

    /// Replace rows and columns of `fixed` dofs by the identity.
    pub fn constrain(&mut self, fixed: &[bool]) {
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                if fixed[i] || fixed[j] {
                    self.values[k] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).all(|k| self.values[k] == self.get(self.col_idx[k], i))
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[i][self.col_idx[k]] = self.values[k];
            }
        }
        d
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome of a CG solve.
#[derive(Debug, Clone, Copy)]
pub struct CgStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned CG for SPD `a`, starting from `x`. Stops at `||r|| <= tol ||b||`.
pub fn conjugate_gradient(a: &CsrMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<CgStats> {
    let n = a.n;
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats { iterations: 0, relative_residual: 0.0 });
    }
    let diag = a.diagonal();
    let inv: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = dot(&r, &r).sqrt() / b_norm;
    let mut it = 0;
    while res > tol {
        if it >= max_iter {
            let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &d| (l.min(d), h.max(d)));
            return Err(Error::NoConvergence { iterations: it, residual: res, diag_ratio: hi / lo });
        }
        a.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        if !res.is_finite() {
            return Err(Error::NonFinite("conjugate gradient residual".into()));
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
    }
    Ok(CgStats { iterations: it, relative_residual: res })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> CsrMatrix {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(1)..(i + 2).min(n) {
                col_idx.push(j);
                values.push(if i == j { 2.5 } else { -1.0 });
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    #[test]
    fn cg_solves_tridiagonal() {
        let a = tridiag(50);
        let truth: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul(&truth);
        let mut x = vec![0.0; 50];
        let stats = conjugate_gradient(&a, &b, &mut x, 1e-12, 500).unwrap();
        assert!(stats.relative_residual <= 1e-12);
        assert!(x.iter().zip(&truth).all(|(p, q)| (p - q).abs() < 1e-10));
    }

    #[test]
    fn cg_reports_non_convergence() {
        let a = tridiag(50);
        let b = vec![1.0; 50];
        let mut x = vec![0.0; 50];
        assert!(matches!(conjugate_gradient(&a, &b, &mut x, 1e-14, 2), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = tridiag(5);
        let mut x = vec![1.0; 5];
        conjugate_gradient(&a, &[0.0; 5], &mut x, 1e-10, 10).unwrap();
        assert_eq!(x, vec![0.0; 5]);
    }
}
