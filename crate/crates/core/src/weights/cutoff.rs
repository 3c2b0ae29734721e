//! Radial cutoffs built from the quintic smoothstep `6t^5 - 15t^4 + 10t^3`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffKind {
    /// 1 on `B_inner`, 0 outside `B_outer`.
    OneInside,
    /// 0 on `B_inner`, 1 outside `B_outer`.
    OneOutside,
    /// 0 on `B_r0`, 1 on the annulus `r1 <= |x| <= r2`, 0 outside `B_r3`.
    Band,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub kind: CutoffKind,
    /// Transition radii, increasing. Two are used for the one-sided kinds, four for `Band`.
    pub radii: [f64; 4],
    /// Length unit the reported constants refer to.
    pub base_length: f64,
}

impl CutoffSpec {
    pub fn one_inside(inner: f64, outer: f64, base_length: f64) -> Self {
        Self { kind: CutoffKind::OneInside, radii: [inner, outer, 0.0, 0.0], base_length }
    }

    pub fn one_outside(inner: f64, outer: f64, base_length: f64) -> Self {
        Self { kind: CutoffKind::OneOutside, radii: [inner, outer, 0.0, 0.0], base_length }
    }

    pub fn band(r0: f64, r1: f64, r2: f64, r3: f64, base_length: f64) -> Self {
        Self { kind: CutoffKind::Band, radii: [r0, r1, r2, r3], base_length }
    }
}

/// A radial cutoff with its reported derivative constants:
/// `|grad c| <= grad_constant / R` and `|d^2 c / dx_i dx_j| <= hessian_constant / R^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffFunction {
    pub spec: CutoffSpec,
    pub grad_constant: f64,
    pub hessian_constant: f64,
}

const SMOOTHSTEP_D1_MAX: f64 = 1.875;

fn smoothstep(t: f64) -> [f64; 3] {
    if t <= 0.0 {
        [0.0, 0.0, 0.0]
    } else if t >= 1.0 {
        [1.0, 0.0, 0.0]
    } else {
        let t2 = t * t;
        [
            (t2 * t * (10.0 - 15.0 * t + 6.0 * t2)).clamp(0.0, 1.0),
            30.0 * t2 * (1.0 - t) * (1.0 - t),
            60.0 * t * (1.0 - t) * (1.0 - 2.0 * t),
        ]
    }
}

pub fn build_cutoff(spec: CutoffSpec) -> Result<CutoffFunction> {
    let used = match spec.kind {
        CutoffKind::OneInside | CutoffKind::OneOutside => &spec.radii[..2],
        CutoffKind::Band => &spec.radii[..],
    };
    if used[0] <= 0.0 || used.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(format!("cutoff radii must be positive and strictly increasing: {used:?}")));
    }
    if !(spec.base_length > 0.0) {
        return Err(Error::invalid("cutoff base length must be positive"));
    }
    // Smoothstep second derivative peaks at t = (3 - sqrt 3)/6 with value 10/sqrt 3.
    let d2_max = 10.0 / 3f64.sqrt();
    let bands: Vec<(f64, f64)> = match spec.kind {
        CutoffKind::OneInside | CutoffKind::OneOutside => vec![(used[0], used[1])],
        CutoffKind::Band => vec![(used[0], used[1]), (used[2], used[3])],
    };
    let r = spec.base_length;
    let mut grad = 0.0f64;
    let mut hess = 0.0f64;
    for (a, b) in bands {
        let width = b - a;
        grad = grad.max(SMOOTHSTEP_D1_MAX / width * r);
        // radial eigenvalue c'' and tangential eigenvalue c'/|x|
        hess = hess.max(d2_max / (width * width) * r * r).max(SMOOTHSTEP_D1_MAX / (width * a) * r * r);
    }
    Ok(CutoffFunction { spec, grad_constant: grad, hessian_constant: hess })
}

impl CutoffFunction {
    /// Value and first two radial derivatives at radius `r`.
    pub fn radial(&self, r: f64) -> [f64; 3] {
        let rd = self.spec.radii;
        let rising = |a: f64, b: f64| {
            let s = smoothstep((r - a) / (b - a));
            let w = b - a;
            [s[0], s[1] / w, s[2] / (w * w)]
        };
        match self.spec.kind {
            CutoffKind::OneOutside => rising(rd[0], rd[1]),
            CutoffKind::OneInside => {
                let s = rising(rd[0], rd[1]);
                [1.0 - s[0], -s[1], -s[2]]
            }
            CutoffKind::Band => {
                if r <= rd[1] {
                    rising(rd[0], rd[1])
                } else {
                    let s = rising(rd[2], rd[3]);
                    [1.0 - s[0], -s[1], -s[2]]
                }
            }
        }
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.radial(x[0].hypot(x[1]))[0]
    }

    pub fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return [0.0, 0.0];
        }
        let d = self.radial(r)[1];
        [d * x[0] / r, d * x[1] / r]
    }

    /// Row-major 2x2 Hessian.
    pub fn hessian(&self, x: [f64; 2]) -> [f64; 4] {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return [0.0; 4];
        }
        let [_, d1, d2] = self.radial(r);
        let (u, v) = (x[0] / r, x[1] / r);
        let t = d1 / r;
        [
            d2 * u * u + t * (1.0 - u * u),
            (d2 - t) * u * v,
            (d2 - t) * u * v,
            d2 * v * v + t * (1.0 - v * v),
        ]
    }

    /// Laplacian in the plane: `c'' + c'/r`.
    pub fn laplacian(&self, x: [f64; 2]) -> f64 {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return 0.0;
        }
        let [_, d1, d2] = self.radial(r);
        d2 + d1 / r
    }
}
