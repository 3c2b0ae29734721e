//! Closed-form targets `phi*(x, t) = exp(-decay t) p(x)` and their exact sources.

use super::assembly::ScalarSource;
use crate::error::{Error, Result};
use crate::spaces::Bump;
use crate::weights::WeightKind;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Spatial profile of a manufactured target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Zero,
    Bump(Bump),
    /// `(1 - |x|^2 / L^2)^2`, vanishing with its normal derivative on `|x| = L`.
    Envelope { outer_radius: f64 },
    /// `1 - |x|^2 / L^2`, with normal derivative `-2/L` on `|x| = L`.
    Dome { outer_radius: f64 },
}

impl Profile {
    pub fn value(&self, x: [f64; 2]) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Bump(b) => b.value(x),
            Profile::Envelope { outer_radius } => {
                let s = 1.0 - (x[0] * x[0] + x[1] * x[1]) / (outer_radius * outer_radius);
                s * s
            }
            Profile::Dome { outer_radius } => 1.0 - (x[0] * x[0] + x[1] * x[1]) / (outer_radius * outer_radius),
        }
    }

    pub fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        match self {
            Profile::Zero => [0.0, 0.0],
            Profile::Bump(b) => b.gradient(x),
            Profile::Envelope { outer_radius } => {
                let l2 = outer_radius * outer_radius;
                let s = 1.0 - (x[0] * x[0] + x[1] * x[1]) / l2;
                let c = -4.0 * s / l2;
                [c * x[0], c * x[1]]
            }
            Profile::Dome { outer_radius } => {
                let c = -2.0 / (outer_radius * outer_radius);
                [c * x[0], c * x[1]]
            }
        }
    }

    pub fn laplacian(&self, x: [f64; 2]) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Bump(b) => b.laplacian(x),
            Profile::Envelope { outer_radius } => {
                let l2 = outer_radius * outer_radius;
                let r2 = x[0] * x[0] + x[1] * x[1];
                // d_i (-4 s x_i / L^2) summed over two coordinates
                8.0 * r2 / (l2 * l2) - 8.0 * (1.0 - r2 / l2) / l2
            }
            Profile::Dome { outer_radius } => -4.0 / (outer_radius * outer_radius),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedTarget {
    pub profile: Profile,
    pub decay: f64,
}

impl ManufacturedTarget {
    pub fn new(profile: Profile, decay: f64) -> Self {
        Self { profile, decay }
    }

    pub fn value(&self, x: [f64; 2], t: f64) -> f64 {
        (-self.decay * t).exp() * self.profile.value(x)
    }

    pub fn gradient(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let e = (-self.decay * t).exp();
        let g = self.profile.gradient(x);
        [e * g[0], e * g[1]]
    }

    /// Normal derivative on the circle through `x`, outward from the origin.
    pub fn radial_derivative(&self, x: [f64; 2], t: f64) -> f64 {
        let g = self.gradient(x, t);
        let r = x[0].hypot(x[1]);
        (g[0] * x[0] + g[1] * x[1]) / r
    }
}

/// `f = d_t phi* - div(w grad phi*)` by the exact chain rule.
pub fn manufactured_source(target: ManufacturedTarget, weight: WeightKind) -> Result<ScalarSource> {
    if let WeightKind::Exact { alpha } = weight {
        let g0 = target.profile.gradient([0.0, 0.0]);
        if alpha < 1.0 && g0[0].hypot(g0[1]) > 0.0 {
            return Err(Error::invalid(format!(
                "target has nonzero gradient at the origin; with |x|^{alpha} the source is not square integrable against 1/w"
            )));
        }
    }
    Ok(Arc::new(move |x, t| {
        let p = &target.profile;
        let g = p.gradient(x);
        let cross = if x[0] == 0.0 && x[1] == 0.0 {
            0.0
        } else {
            let gw = weight.gradient_at(x).unwrap_or([0.0, 0.0]);
            gw[0] * g[0] + gw[1] * g[1]
        };
        let e = (-target.decay * t).exp();
        e * (-target.decay * p.value(x) - cross - weight.at(x) * p.laplacian(x))
    }))
}
