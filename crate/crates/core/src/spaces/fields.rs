//! Closed-form test fields: compactly supported polynomial bumps and random
//! families of fields vanishing on the outer circle.

use crate::domain::Mesh;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `amplitude ((radius^2 - |x - center|^2)_+)^2 / radius^4`, a C^1 bump of height `amplitude`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: [f64; 2],
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn new(center: [f64; 2], radius: f64, amplitude: f64) -> Self {
        Self { center, radius, amplitude }
    }

    #[inline]
    fn offset(&self, x: [f64; 2]) -> ([f64; 2], f64, f64) {
        let d = [x[0] - self.center[0], x[1] - self.center[1]];
        let s = d[0] * d[0] + d[1] * d[1];
        let rho2 = self.radius * self.radius;
        (d, s, rho2 - s)
    }

    #[inline]
    pub fn value(&self, x: [f64; 2]) -> f64 {
        let (_, _, gap) = self.offset(x);
        if gap <= 0.0 {
            return 0.0;
        }
        self.amplitude * gap * gap / self.radius.powi(4)
    }

    pub fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let (d, _, gap) = self.offset(x);
        if gap <= 0.0 {
            return [0.0, 0.0];
        }
        let c = -4.0 * self.amplitude * gap / self.radius.powi(4);
        [c * d[0], c * d[1]]
    }

    /// Planar Laplacian `(8 s - 8 gap) / radius^4` inside the support.
    pub fn laplacian(&self, x: [f64; 2]) -> f64 {
        let (_, s, gap) = self.offset(x);
        if gap <= 0.0 {
            return 0.0;
        }
        self.amplitude * (8.0 * s - 8.0 * gap) / self.radius.powi(4)
    }

    /// Smallest and largest `|x|` over the support.
    pub fn radial_extent(&self) -> (f64, f64) {
        let c = self.center[0].hypot(self.center[1]);
        ((c - self.radius).max(0.0), c + self.radius)
    }
}

/// One low-frequency mode `a cos(kx pi x / L + p) cos(ky pi y / L + q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub wave: [f64; 2],
    pub phase: [f64; 2],
    pub amplitude: f64,
}

/// A sampled field: a sum of bumps plus low-frequency modes multiplied by `1 - |x|^2/L^2`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SampledField {
    pub bumps: Vec<Bump>,
    pub modes: Vec<Mode>,
    pub outer_radius: f64,
}

impl SampledField {
    pub fn value(&self, x: [f64; 2]) -> f64 {
        let mut v: f64 = self.bumps.iter().map(|b| b.value(x)).sum();
        if !self.modes.is_empty() {
            let l = self.outer_radius;
            let envelope = (1.0 - (x[0] * x[0] + x[1] * x[1]) / (l * l)).max(0.0);
            let s: f64 = self
                .modes
                .iter()
                .map(|m| {
                    m.amplitude
                        * (m.wave[0] * PI * x[0] / l + m.phase[0]).cos()
                        * (m.wave[1] * PI * x[1] / l + m.phase[1]).cos()
                })
                .sum();
            v += envelope * s;
        }
        v
    }

    /// Nodal interpolant with zero boundary values.
    pub fn to_nodal(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.interpolate_zero_trace(|x| self.value(x))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.bumps.iter_mut().for_each(|b| b.amplitude *= factor);
        out.modes.iter_mut().for_each(|m| m.amplitude *= factor);
        out
    }
}

/// Random field families on `B_L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldFamily {
    /// One bump of radius `R/2` at a uniformly random center, support inside the disk.
    UniformBumps,
    /// One bump of radius `R/2` supported in `B_2R`.
    CoreBumps,
    /// One bump of radius `R/2` supported in the annulus `A_{2R,7R}`.
    AnnulusBumps,
    /// Low-frequency modes times the envelope `1 - |x|^2/L^2`.
    LowFrequency,
    /// Up to three bumps of random radius plus low-frequency modes.
    Mixed,
}

impl FieldFamily {
    pub const OBSERVABILITY: [FieldFamily; 3] =
        [FieldFamily::UniformBumps, FieldFamily::CoreBumps, FieldFamily::LowFrequency];

    pub fn name(&self) -> &'static str {
        match self {
            FieldFamily::UniformBumps => "uniform_bumps",
            FieldFamily::CoreBumps => "core_bumps",
            FieldFamily::AnnulusBumps => "annulus_bumps",
            FieldFamily::LowFrequency => "low_frequency",
            FieldFamily::Mixed => "mixed",
        }
    }
}

fn point_in_annulus<R: Rng>(rng: &mut R, inner: f64, outer: f64) -> [f64; 2] {
    // area-uniform radius
    let r = (inner * inner + rng.gen::<f64>() * (outer * outer - inner * inner)).sqrt();
    let th = rng.gen::<f64>() * 2.0 * PI;
    [r * th.cos(), r * th.sin()]
}

fn random_modes<R: Rng>(rng: &mut R, count: usize) -> Vec<Mode> {
    (0..count)
        .map(|_| {
            let wave = [rng.gen_range(0..4) as f64, rng.gen_range(0..4) as f64];
            Mode {
                wave,
                phase: [rng.gen::<f64>() * 2.0 * PI, rng.gen::<f64>() * 2.0 * PI],
                amplitude: rng.gen_range(-1.0..1.0) / (1.0 + wave[0] + wave[1]),
            }
        })
        .collect()
}

/// Draw one field of the family on `B_L` with length unit `R`.
pub fn sample_field<R: Rng>(family: FieldFamily, base_length: f64, outer_radius: f64, rng: &mut R) -> SampledField {
    let rho = 0.5 * base_length;
    let single = |c: [f64; 2], rng: &mut R| {
        let amp = if rng.gen::<bool>() { 1.0 } else { -1.0 } * rng.gen_range(0.5..1.0);
        vec![Bump::new(c, rho, amp)]
    };
    let (bumps, modes) = match family {
        FieldFamily::UniformBumps => {
            let c = point_in_annulus(rng, 0.0, outer_radius - rho);
            (single(c, rng), Vec::new())
        }
        FieldFamily::CoreBumps => {
            let c = point_in_annulus(rng, 0.0, 2.0 * base_length - rho);
            (single(c, rng), Vec::new())
        }
        FieldFamily::AnnulusBumps => {
            let c = point_in_annulus(rng, 2.0 * base_length + rho, 7.0 * base_length - rho);
            (single(c, rng), Vec::new())
        }
        FieldFamily::LowFrequency => {
            let n = rng.gen_range(3..7);
            (Vec::new(), random_modes(rng, n))
        }
        FieldFamily::Mixed => {
            let n = rng.gen_range(1..4);
            let bumps = (0..n)
                .map(|_| {
                    let radius = rng.gen_range(0.5..3.0) * base_length;
                    let c = point_in_annulus(rng, 0.0, outer_radius - radius);
                    Bump::new(c, radius, rng.gen_range(-1.0..1.0))
                })
                .collect();
            let m = rng.gen_range(1..4);
            (bumps, random_modes(rng, m))
        }
    };
    SampledField { bumps, modes, outer_radius }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bump_closed_forms_match_finite_differences() {
        let b = Bump::new([0.3, -0.2], 0.7, 1.3);
        let x = [0.5, 0.1];
        let h = 1e-4;
        let f = |p: [f64; 2]| b.value(p);
        let g = b.gradient(x);
        let gx = (f([x[0] + h, x[1]]) - f([x[0] - h, x[1]])) / (2.0 * h);
        let gy = (f([x[0], x[1] + h]) - f([x[0], x[1] - h])) / (2.0 * h);
        assert!((g[0] - gx).abs() < 1e-7 && (g[1] - gy).abs() < 1e-7);
        let lap = (f([x[0] + h, x[1]]) + f([x[0] - h, x[1]]) + f([x[0], x[1] + h]) + f([x[0], x[1] - h])
            - 4.0 * f(x))
            / (h * h);
        assert!((lap - b.laplacian(x)).abs() < 1e-5);
        assert_eq!(b.value([0.3, 0.0 + 0.6]), 0.0);
        assert!((b.value(b.center) - 1.3).abs() < 1e-15);
    }

    #[test]
    fn families_respect_their_supports() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let f = sample_field(FieldFamily::CoreBumps, 1.0, 9.0, &mut rng);
            assert!(f.bumps[0].radial_extent().1 <= 2.0 + 1e-12);
            let f = sample_field(FieldFamily::AnnulusBumps, 1.0, 9.0, &mut rng);
            let (lo, hi) = f.bumps[0].radial_extent();
            assert!(lo >= 2.0 - 1e-12 && hi <= 7.0 + 1e-12);
            let f = sample_field(FieldFamily::Mixed, 1.0, 9.0, &mut rng);
            assert!(f.value([9.0, 0.0]).abs() < 1e-12);
            assert!(f.value([0.0, -9.0]).abs() < 1e-12);
        }
    }
}
