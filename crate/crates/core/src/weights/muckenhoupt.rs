//! Cube-family estimates of the Muckenhoupt A_p constant
//! `sup_K (avg_K w) (avg_K w^{-1/(p-1)})^{p-1}` in the plane.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const GAUSS6_NODES: [f64; 6] = [
    -0.932_469_514_203_152_1,
    -0.661_209_386_466_264_5,
    -0.238_619_186_083_196_9,
    0.238_619_186_083_196_9,
    0.661_209_386_466_264_5,
    0.932_469_514_203_152_1,
];
const GAUSS6_WEIGHTS: [f64; 6] = [
    0.171_324_492_379_170_3,
    0.360_761_573_048_138_6,
    0.467_913_934_572_691_0,
    0.467_913_934_572_691_0,
    0.360_761_573_048_138_6,
    0.171_324_492_379_170_3,
];

/// Subdivisions per axis for cubes meeting the refinement ball.
const NEAR_SUBDIVISION: usize = 4;

/// Axis-aligned square `center +- half_side`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cube {
    pub center: [f64; 2],
    pub half_side: f64,
}

impl Cube {
    fn distance_to_origin(&self) -> f64 {
        let dx = (self.center[0].abs() - self.half_side).max(0.0);
        let dy = (self.center[1].abs() - self.half_side).max(0.0);
        dx.hypot(dy)
    }

    /// Intersection with the box `[-b, b]^2`, as a rectangle `(lo, hi)`.
    fn clip(&self, b: f64) -> Option<([f64; 2], [f64; 2])> {
        let lo = [(self.center[0] - self.half_side).max(-b), (self.center[1] - self.half_side).max(-b)];
        let hi = [(self.center[0] + self.half_side).min(b), (self.center[1] + self.half_side).min(b)];
        (hi[0] > lo[0] && hi[1] > lo[1]).then_some((lo, hi))
    }
}

/// The cubes over which the supremum is taken, clipped to `[-half_width, half_width]^2`.
#[derive(Debug, Clone, Serialize)]
pub struct CubeFamily {
    pub half_width: f64,
    pub cubes: Vec<Cube>,
}

impl CubeFamily {
    /// Dyadic grid cubes for `levels` levels, `random_per_level` random cubes per level
    /// clustered around the origin with log-uniform sizes down to `2^-8` of the level size,
    /// and origin-centred cubes halving down to `min_half_side`.
    pub fn dyadic(half_width: f64, levels: usize, random_per_level: usize, min_half_side: f64, seed: u64) -> Self {
        let mut cubes = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for level in 0..levels {
            let n = 1usize << level;
            let half = half_width / n as f64;
            for i in 0..n {
                for j in 0..n {
                    cubes.push(Cube {
                        center: [-half_width + (2 * i + 1) as f64 * half, -half_width + (2 * j + 1) as f64 * half],
                        half_side: half,
                    });
                }
            }
            for _ in 0..random_per_level {
                let size = half * 2f64.powf(-8.0 * rng.gen::<f64>());
                let spread = 2.0 * size;
                let center = [rng.gen_range(-spread..spread), rng.gen_range(-spread..spread)];
                cubes.push(Cube { center, half_side: size });
            }
        }
        let mut half = half_width;
        while half >= min_half_side {
            cubes.push(Cube { center: [0.0, 0.0], half_side: half });
            half *= 0.5;
        }
        Self { half_width, cubes }
    }

    /// Only the given cubes.
    pub fn from_cubes(half_width: f64, cubes: Vec<Cube>) -> Self {
        Self { half_width, cubes }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ApEstimate {
    pub value: f64,
    pub worst_cube: Cube,
    pub cubes_evaluated: usize,
}

/// `(avg w, avg w^{-1/(p-1)})` over a rectangle by tensor Gauss quadrature.
fn averages(weight: &dyn Fn([f64; 2]) -> f64, p: f64, lo: [f64; 2], hi: [f64; 2], subdiv: usize) -> (f64, f64) {
    let expo = -1.0 / (p - 1.0);
    let (mut sw, mut sd, mut total) = (0.0, 0.0, 0.0);
    let hx = (hi[0] - lo[0]) / subdiv as f64;
    let hy = (hi[1] - lo[1]) / subdiv as f64;
    for a in 0..subdiv {
        for b in 0..subdiv {
            let cx = lo[0] + (a as f64 + 0.5) * hx;
            let cy = lo[1] + (b as f64 + 0.5) * hy;
            for (i, xi) in GAUSS6_NODES.iter().enumerate() {
                for (j, yj) in GAUSS6_NODES.iter().enumerate() {
                    let q = GAUSS6_WEIGHTS[i] * GAUSS6_WEIGHTS[j];
                    let w = weight([cx + 0.5 * hx * xi, cy + 0.5 * hy * yj]);
                    sw += q * w;
                    sd += q * w.powf(expo);
                    total += q;
                }
            }
        }
    }
    (sw / total, sd / total)
}

/// Estimate of the A_p constant over the cube family. Cubes within `refine_radius`
/// of the origin are averaged on a 4x4 subdivision.
pub fn ap_constant_estimate(
    weight: &dyn Fn([f64; 2]) -> f64,
    p: f64,
    cubes: &CubeFamily,
    refine_radius: Option<f64>,
) -> Result<ApEstimate> {
    if !(p > 1.0) {
        return Err(Error::invalid(format!("A_p needs p > 1, got {p}")));
    }
    let mut best: Option<(f64, Cube)> = None;
    let mut evaluated = 0;
    for cube in &cubes.cubes {
        let Some((lo, hi)) = cube.clip(cubes.half_width) else { continue };
        let subdiv = match refine_radius {
            Some(rad) if cube.distance_to_origin() <= rad => NEAR_SUBDIVISION,
            _ => 1,
        };
        let (aw, ad) = averages(weight, p, lo, hi, subdiv);
        let value = aw * ad.powf(p - 1.0);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!(
                "A_p average on cube centred at {:?} with half side {} is {value}; weight blow-up is under-resolved",
                cube.center, cube.half_side
            )));
        }
        evaluated += 1;
        if best.is_none_or(|(v, _)| value > v) {
            best = Some((value, *cube));
        }
    }
    let (value, worst_cube) = best.ok_or_else(|| Error::invalid("cube family has no cube inside the evaluation box"))?;
    Ok(ApEstimate { value, worst_cube, cubes_evaluated: evaluated })
}
