//! Point location on a triangulation through a uniform bucket grid.

use super::Mesh;

/// Bucket grid over the bounding box of a mesh; each bucket lists the cells whose
/// bounding boxes overlap it.
pub struct PointLocator<'a> {
    mesh: &'a Mesh,
    origin: [f64; 2],
    size: f64,
    dims: [usize; 2],
    buckets: Vec<Vec<u32>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &mesh.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
        // about two cells per bucket on average
        let target = (mesh.num_cells() as f64 / 2.0).sqrt().ceil().max(1.0);
        let size = extent / target;
        let dims = [
            (((hi[0] - lo[0]) / size).floor() as usize + 1).max(1),
            (((hi[1] - lo[1]) / size).floor() as usize + 1).max(1),
        ];
        let mut buckets = vec![Vec::new(); dims[0] * dims[1]];
        for (idx, c) in mesh.cells.iter().enumerate() {
            let mut blo = [f64::INFINITY; 2];
            let mut bhi = [f64::NEG_INFINITY; 2];
            for &v in c {
                for d in 0..2 {
                    blo[d] = blo[d].min(mesh.vertices[v][d]);
                    bhi[d] = bhi[d].max(mesh.vertices[v][d]);
                }
            }
            let i0 = ((blo[0] - lo[0]) / size).floor() as usize;
            let i1 = (((bhi[0] - lo[0]) / size).floor() as usize).min(dims[0] - 1);
            let j0 = ((blo[1] - lo[1]) / size).floor() as usize;
            let j1 = (((bhi[1] - lo[1]) / size).floor() as usize).min(dims[1] - 1);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    buckets[j * dims[0] + i].push(idx as u32);
                }
            }
        }
        Self { mesh, origin: lo, size, dims, buckets }
    }

    /// Cell containing `x` and the barycentric coordinates of `x` in it.
    pub fn locate(&self, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let fi = ((x[0] - self.origin[0]) / self.size).floor();
        let fj = ((x[1] - self.origin[1]) / self.size).floor();
        if fi < 0.0 || fj < 0.0 || fi >= self.dims[0] as f64 || fj >= self.dims[1] as f64 {
            return None;
        }
        let bucket = &self.buckets[fj as usize * self.dims[0] + fi as usize];
        let tol = -1e-12;
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &c in bucket {
            let c = c as usize;
            let l = self.barycentric(c, x);
            let worst = l[0].min(l[1]).min(l[2]);
            if worst >= 0.0 {
                return Some((c, l));
            }
            if worst >= tol && best.is_none_or(|b| worst > b.2) {
                best = Some((c, l, worst));
            }
        }
        best.map(|(c, l, _)| {
            let clamped = l.map(|v| v.max(0.0));
            let s: f64 = clamped.iter().sum();
            (c, clamped.map(|v| v / s))
        })
    }

    fn barycentric(&self, cell: usize, x: [f64; 2]) -> [f64; 3] {
        let c = self.mesh.cells[cell];
        let g = &self.mesh.geometry[cell].grads;
        let p0 = self.mesh.vertices[c[0]];
        // lambda_i is affine with gradient g[i] and equals 1 at vertex i
        let l1 = g[1][0] * (x[0] - p0[0]) + g[1][1] * (x[1] - p0[1]);
        let l2 = g[2][0] * (x[0] - p0[0]) + g[2][1] * (x[1] - p0[1]);
        [1.0 - l1 - l2, l1, l2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_disk_mesh, field_at, GeometrySpec};

    #[test]
    fn locates_points_and_reproduces_linear_fields() {
        let mesh = build_disk_mesh(GeometrySpec::default(), 0.7).unwrap();
        let loc = PointLocator::new(&mesh);
        let lin = mesh.interpolate(|p| 2.0 * p[0] - 3.0 * p[1] + 1.0);
        for k in 0..500 {
            let th = k as f64 * 0.731;
            let r = 8.7 * ((k * 37 % 101) as f64 / 100.0);
            let x = [r * th.cos(), r * th.sin()];
            let (cell, bary) = loc.locate(x).expect("inside the mesh");
            let v = field_at(&mesh, &lin, cell, bary);
            assert!((v - (2.0 * x[0] - 3.0 * x[1] + 1.0)).abs() < 1e-10);
        }
        assert!(loc.locate([9.5, 0.0]).is_none());
        assert!(loc.locate([-20.0, 3.0]).is_none());
    }
}
