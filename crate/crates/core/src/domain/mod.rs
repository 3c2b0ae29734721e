//! Geometry: the disk `Omega = B_L` around the degeneracy, the observation
//! annulus `omega = A_{3R,6R}`, meshes, radial regions and quadrature.

mod locate;
mod mesh;
mod quadrature;

pub use locate::PointLocator;
pub use mesh::{BoundaryEdge, BoundaryMarker, CellGeometry, Mesh, SizeField};
pub use quadrature::{field_at, QuadPoint, TimeGrid, TimeWindow, TRIANGLE_RULE};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Base length `R` and disk radius `L`; the plane is the only runtime dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub base_length: f64,
    pub outer_radius: f64,
    pub dim: usize,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        Self { base_length: 1.0, outer_radius: 9.0, dim: 2 }
    }
}

impl GeometrySpec {
    pub fn new(base_length: f64, outer_radius: f64) -> Result<Self> {
        let g = Self { base_length, outer_radius, dim: 2 };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_length > 0.0 && self.base_length.is_finite()) {
            return Err(Error::invalid(format!("R must be positive, got {}", self.base_length)));
        }
        if !(self.outer_radius > 8.0 * self.base_length) {
            return Err(Error::invalid(format!(
                "L must exceed 8R so that B_8R lies inside the disk; got L = {}, R = {}",
                self.outer_radius, self.base_length
            )));
        }
        if self.dim != 2 {
            return Err(Error::invalid(format!("only N = 2 is supported at runtime, got {}", self.dim)));
        }
        Ok(())
    }

    /// `m = sup |x| + 1` over the disk.
    pub fn m(&self) -> f64 {
        self.outer_radius + 1.0
    }

    /// The observation annulus `A_{3R,6R}`.
    pub fn observation(&self) -> Region {
        Region::annulus(3.0 * self.base_length, 6.0 * self.base_length)
    }

    /// Mesh circles placed at every integer multiple of `R` below `L`.
    pub fn breaks(&self) -> Vec<f64> {
        let r = self.base_length;
        (1..).map(|k| k as f64 * r).take_while(|&b| b < self.outer_radius).collect()
    }
}

/// Radial region of the disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// `|x| < radius`.
    Ball { radius: f64 },
    /// `inner < |x| < outer`.
    Annulus { inner: f64, outer: f64 },
    /// `|x| >= radius`.
    Complement { radius: f64 },
    Whole,
}

impl Region {
    pub fn ball(radius: f64) -> Self {
        Region::Ball { radius }
    }

    pub fn annulus(inner: f64, outer: f64) -> Self {
        Region::Annulus { inner, outer }
    }

    pub fn complement(radius: f64) -> Self {
        Region::Complement { radius }
    }

    #[inline]
    pub fn contains_radius(&self, r: f64) -> bool {
        match *self {
            Region::Ball { radius } => r < radius,
            Region::Annulus { inner, outer } => inner < r && r < outer,
            Region::Complement { radius } => r >= radius,
            Region::Whole => true,
        }
    }

    #[inline]
    pub fn contains(&self, x: [f64; 2]) -> bool {
        self.contains_radius(x[0].hypot(x[1]))
    }

    pub fn validate(&self, outer_radius: f64) -> Result<()> {
        let ok = match *self {
            Region::Ball { radius } | Region::Complement { radius } => (0.0..=outer_radius).contains(&radius),
            Region::Annulus { inner, outer } => 0.0 <= inner && inner <= outer && outer <= outer_radius,
            Region::Whole => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("region {self:?} is not inside the disk of radius {outer_radius}")))
        }
    }
}

/// Coarsening rule of the disk meshes: `h/2` inside `B_2R`, growing to `h` at `3R`,
/// and geometric grading `core + 0.3|x|` towards the origin.
fn disk_size(spec: GeometrySpec, h: f64, core: f64) -> impl Fn(f64) -> f64 {
    let r0 = spec.base_length;
    move |r: f64| {
        let blend = ((r - 2.0 * r0) / r0).clamp(0.0, 1.0);
        let outer = h * (0.5 + 0.5 * blend);
        outer.min(core + 0.3 * r)
    }
}

/// Graded triangulation of `B_L` with target size `h` and core size `h/4` at the origin.
pub fn build_disk_mesh(spec: GeometrySpec, h: f64) -> Result<Mesh> {
    build_disk_mesh_with_core(spec, h, h / 4.0, &[])
}

/// Graded triangulation resolving the regularization ball: core size `min(h, eps)/4`
/// and a mesh circle at `|x| = eps`.
pub fn build_disk_mesh_resolving(spec: GeometrySpec, h: f64, epsilon: f64) -> Result<Mesh> {
    build_disk_mesh_with_core(spec, h, (h.min(epsilon)) / 4.0, &[epsilon])
}

pub fn build_disk_mesh_with_core(spec: GeometrySpec, h: f64, core: f64, extra_breaks: &[f64]) -> Result<Mesh> {
    spec.validate()?;
    let r = spec.base_length;
    if !(h > 0.0) {
        return Err(Error::invalid(format!("mesh size must be positive, got {h}")));
    }
    if h > r {
        return Err(Error::invalid(format!(
            "h = {h} leaves fewer than 3 element layers across the observation annulus of width {}",
            3.0 * r
        )));
    }
    if !(core > 0.0) {
        return Err(Error::invalid("core mesh size must be positive"));
    }
    let mut breaks = spec.breaks();
    breaks.extend_from_slice(extra_breaks);
    Mesh::rings(None, spec.outer_radius, &breaks, &disk_size(spec, h, core))
}

/// Quasi-uniform triangulation of the annulus `r_in < |x| < r_out`; both circles are
/// marked (`inner`, `outer`) and normals point out of the annulus.
pub fn build_annulus_mesh(r_in: f64, r_out: f64, h: f64) -> Result<Mesh> {
    if !(r_in > 0.0 && r_out > r_in) {
        return Err(Error::invalid(format!("annulus needs 0 < r_in < r_out, got {r_in}, {r_out}")));
    }
    if !(h > 0.0 && h < (r_out - r_in) / 3.0) {
        return Err(Error::invalid(format!(
            "h = {h} leaves fewer than 3 element layers across the annulus of width {}",
            r_out - r_in
        )));
    }
    let breaks: Vec<f64> = (1..).map(|k| k as f64).take_while(|&b| b < r_out).collect();
    Mesh::rings(Some(r_in), r_out, &breaks, &move |_r: f64| h)
}

impl Mesh {
    /// Cells whose centroid lies in the region.
    pub fn region_mask(&self, region: &Region) -> Vec<bool> {
        self.geometry.iter().map(|g| region.contains(g.centroid)).collect()
    }

    /// Vertices lying in the region.
    pub fn vertex_mask(&self, region: &Region) -> Vec<bool> {
        self.vertices.iter().map(|&p| region.contains(p)).collect()
    }

    pub fn region_area(&self, region: &Region) -> f64 {
        self.geometry.iter().filter(|g| region.contains(g.centroid)).map(|g| g.area).sum()
    }
}
