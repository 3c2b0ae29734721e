//! Degenerate weight |x|^alpha, its C^{2,1} regularization psi_eps^alpha, and
//! the radial calculus used by the solver and the Carleman weights.
//!
//! `psi_eps(r)` replaces `|x|` inside the ball of radius `eps` by the quartic
//! `3eps/8 + 3r^2/(4eps) - r^4/(8eps^3)` and equals `r` outside it.

mod cutoff;
mod muckenhoupt;

pub use cutoff::{build_cutoff, CutoffFunction, CutoffKind, CutoffSpec};
pub use muckenhoupt::{ap_constant_estimate, ApEstimate, Cube, CubeFamily};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// The regularized profile `psi_eps` and weight `w_eps = psi_eps^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizedWeight {
    /// Regularization radius.
    pub epsilon: f64,
    /// Degeneracy exponent, in (0, 2).
    pub alpha: f64,
    /// Space dimension N.
    pub dim: usize,
}

/// Gradient, Hessian and Laplacian of `psi_eps` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiDerivatives {
    pub gradient: Vec<f64>,
    /// Row-major N x N.
    pub hessian: Vec<f64>,
    pub laplacian: f64,
}

/// Residuals of the three closed-form identities that hold on the ball of
/// radius `eps`, rescaled to `eps = 1` units so they are comparable across `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityResiduals {
    /// `psi (3/(2e) - |x|^2/(2e^3)) - |grad psi|^2 - 3/(16e^6) (e^2-|x|^2)^2 (3e^2-|x|^2)`
    pub r1: f64,
    /// `(3/(2e) - |x|^2/(2e^3))^2 - psi/e^3 - 3/(8e^6) (e^2-|x|^2)(5e^2-|x|^2)`, times `e^2`
    pub r2: f64,
    /// `psi - x . grad psi - 3/(8e^3) (e^2-|x|^2)^2`, divided by `e`
    pub r3: f64,
}

impl IdentityResiduals {
    pub fn max_abs(&self) -> f64 {
        self.r1.abs().max(self.r2.abs()).max(self.r3.abs())
    }
}

/// Which spatial weight a norm, form or problem uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind {
    /// `|x|^alpha`.
    Exact { alpha: f64 },
    /// `psi_eps(|x|)^alpha`.
    Regularized(RegularizedWeight),
    /// `w = 1`.
    Unweighted,
}

impl WeightKind {
    pub fn exact(alpha: f64) -> Self {
        WeightKind::Exact { alpha }
    }

    pub fn regularized(epsilon: f64, alpha: f64) -> Result<Self> {
        Ok(WeightKind::Regularized(RegularizedWeight::new(epsilon, alpha, 2)?))
    }

    /// Weight as a function of `r = |x|`.
    #[inline]
    pub fn radial(&self, r: f64) -> f64 {
        match self {
            WeightKind::Exact { alpha } => r.powf(*alpha),
            WeightKind::Regularized(w) => w.radial_weight(r),
            WeightKind::Unweighted => 1.0,
        }
    }

    /// Radial derivative `dw/dr`. Infinite at `r = 0` for the exact weight with `alpha < 1`.
    #[inline]
    pub fn radial_derivative(&self, r: f64) -> f64 {
        match self {
            WeightKind::Exact { alpha } => {
                if r == 0.0 {
                    if *alpha > 1.0 {
                        0.0
                    } else if *alpha == 1.0 {
                        1.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    alpha * r.powf(alpha - 1.0)
                }
            }
            WeightKind::Regularized(w) => w.radial_weight_derivative(r),
            WeightKind::Unweighted => 0.0,
        }
    }

    #[inline]
    pub fn at(&self, x: [f64; 2]) -> f64 {
        self.radial(x[0].hypot(x[1]))
    }

    /// Gradient of the weight in the plane.
    pub fn gradient_at(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return match self {
                WeightKind::Exact { alpha } if *alpha <= 1.0 => Err(Error::invalid(format!(
                    "gradient of |x|^{alpha} is singular at the origin"
                ))),
                _ => Ok([0.0, 0.0]),
            };
        }
        let d = self.radial_derivative(r);
        Ok([d * x[0] / r, d * x[1] / r])
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            WeightKind::Exact { alpha } => Some(*alpha),
            WeightKind::Regularized(w) => Some(w.alpha),
            WeightKind::Unweighted => None,
        }
    }

    /// Radius inside which the weight differs from `|x|^alpha`, if any.
    pub fn regularization_radius(&self) -> Option<f64> {
        match self {
            WeightKind::Regularized(w) => Some(w.epsilon),
            _ => None,
        }
    }
}

/// `|x|^alpha` at a point of any dimension.
pub fn exact_weight(alpha: f64, x: &[f64]) -> f64 {
    norm(x).powf(alpha)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl RegularizedWeight {
    pub fn new(epsilon: f64, alpha: f64, dim: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::invalid(format!("alpha must lie in (0,2), got {alpha}")));
        }
        if dim < 2 {
            return Err(Error::invalid(format!("dimension must be at least 2, got {dim}")));
        }
        Ok(Self { epsilon, alpha, dim })
    }

    /// `psi_eps(r)`; rejects negative `r`.
    pub fn psi(&self, r: f64) -> Result<f64> {
        if r < 0.0 || r.is_nan() {
            return Err(Error::invalid(format!("psi needs r >= 0, got {r}")));
        }
        Ok(self.psi_radial(r))
    }

    #[inline]
    pub fn psi_radial(&self, r: f64) -> f64 {
        let e = self.epsilon;
        if r >= e {
            r
        } else {
            let q = r * r;
            3.0 * e / 8.0 + 3.0 * q / (4.0 * e) - q * q / (8.0 * e * e * e)
        }
    }

    /// First radial derivative of `psi_eps`.
    #[inline]
    pub fn psi_prime(&self, r: f64) -> f64 {
        let e = self.epsilon;
        if r >= e {
            1.0
        } else {
            3.0 * r / (2.0 * e) - r * r * r / (2.0 * e * e * e)
        }
    }

    /// Second radial derivative of `psi_eps`.
    #[inline]
    pub fn psi_second(&self, r: f64) -> f64 {
        let e = self.epsilon;
        if r >= e {
            0.0
        } else {
            3.0 / (2.0 * e) - 3.0 * r * r / (2.0 * e * e * e)
        }
    }

    /// Third radial derivative of `psi_eps` (one-sided at `r = eps`).
    #[inline]
    pub fn psi_third(&self, r: f64) -> f64 {
        let e = self.epsilon;
        if r >= e {
            0.0
        } else {
            -3.0 * r / (e * e * e)
        }
    }

    /// Values of the inner polynomial branch and its first two derivatives,
    /// evaluated at `r` regardless of which side of `eps` it lies.
    pub fn inner_branch(&self, r: f64) -> [f64; 3] {
        let e = self.epsilon;
        let q = r * r;
        [
            3.0 * e / 8.0 + 3.0 * q / (4.0 * e) - q * q / (8.0 * e * e * e),
            3.0 * r / (2.0 * e) - r * q / (2.0 * e * e * e),
            3.0 / (2.0 * e) - 3.0 * q / (2.0 * e * e * e),
        ]
    }

    /// Jumps of value, first and second derivative between the two branches at `r = eps`.
    pub fn matching_jumps(&self) -> [f64; 3] {
        let e = self.epsilon;
        let inner = self.inner_branch(e);
        let outer = [e, 1.0, 0.0];
        [
            (inner[0] - outer[0]).abs() / e,
            (inner[1] - outer[1]).abs(),
            (inner[2] - outer[2]).abs() * e,
        ]
    }

    /// `w_eps` as a function of `r`.
    #[inline]
    pub fn radial_weight(&self, r: f64) -> f64 {
        if r >= self.epsilon {
            r.powf(self.alpha)
        } else {
            self.psi_radial(r).powf(self.alpha)
        }
    }

    /// `d w_eps / dr = alpha psi^(alpha-1) psi'`.
    #[inline]
    pub fn radial_weight_derivative(&self, r: f64) -> f64 {
        let p = self.psi_radial(r);
        self.alpha * p.powf(self.alpha - 1.0) * self.psi_prime(r)
    }

    pub fn weight_value(&self, x: &[f64]) -> f64 {
        self.radial_weight(norm(x))
    }

    /// `grad w_eps = alpha psi^(alpha-1) grad psi`.
    pub fn weight_gradient(&self, x: &[f64]) -> Vec<f64> {
        let r = norm(x);
        let p = self.psi_radial(r);
        let scale = self.alpha * p.powf(self.alpha - 1.0);
        self.psi_gradient(x).into_iter().map(|g| scale * g).collect()
    }

    /// `grad psi_eps`; zero at the origin.
    pub fn psi_gradient(&self, x: &[f64]) -> Vec<f64> {
        let r = norm(x);
        let e = self.epsilon;
        let factor = if r >= e {
            1.0 / r
        } else {
            3.0 / (2.0 * e) - r * r / (2.0 * e * e * e)
        };
        x.iter().map(|v| factor * v).collect()
    }

    /// Closed-form gradient, Hessian and Laplacian of `psi_eps`.
    pub fn psi_derivatives(&self, x: &[f64]) -> Result<PsiDerivatives> {
        let n = x.len();
        if n != self.dim {
            return Err(Error::invalid(format!(
                "point has dimension {n}, weight has dimension {}",
                self.dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("point must be finite"));
        }
        let r = norm(x);
        let e = self.epsilon;
        let mut hessian = vec![0.0; n * n];
        let (gradient, laplacian) = if r < e {
            let e3 = e * e * e;
            let diag = 3.0 / (2.0 * e) - r * r / (2.0 * e3);
            for i in 0..n {
                for j in 0..n {
                    let delta = if i == j { diag } else { 0.0 };
                    hessian[i * n + j] = delta - x[i] * x[j] / e3;
                }
            }
            let g: Vec<f64> = x.iter().map(|v| diag * v).collect();
            (g, n as f64 * diag - r * r / e3)
        } else {
            let r3 = r * r * r;
            for i in 0..n {
                for j in 0..n {
                    let delta = if i == j { 1.0 / r } else { 0.0 };
                    hessian[i * n + j] = delta - x[i] * x[j] / r3;
                }
            }
            let g: Vec<f64> = x.iter().map(|v| v / r).collect();
            (g, (n as f64 - 1.0) / r)
        };
        Ok(PsiDerivatives { gradient, hessian, laplacian })
    }

    /// Residuals of the three identities on the ball of radius `eps`.
    pub fn identity_residuals(&self, x: &[f64]) -> Result<IdentityResiduals> {
        let e = self.epsilon;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2.sqrt() > e * (1.0 + 1e-14) {
            return Err(Error::invalid(format!(
                "identities hold only for |x| <= eps; |x| = {}, eps = {e}",
                r2.sqrt()
            )));
        }
        let psi = self.psi_radial(r2.sqrt());
        let grad = self.psi_gradient(x);
        let grad2: f64 = grad.iter().map(|g| g * g).sum();
        let x_dot_grad: f64 = x.iter().zip(&grad).map(|(a, b)| a * b).sum();
        let e2 = e * e;
        let e3 = e2 * e;
        let e6 = e3 * e3;
        let lin = 3.0 / (2.0 * e) - r2 / (2.0 * e3);
        let d = e2 - r2;

        let r1 = psi * lin - grad2 - 3.0 / (16.0 * e6) * d * d * (3.0 * e2 - r2);
        let r2v = lin * lin - psi / e3 - 3.0 / (8.0 * e6) * d * (5.0 * e2 - r2);
        let r3 = psi - x_dot_grad - 3.0 / (8.0 * e3) * d * d;
        Ok(IdentityResiduals { r1, r2: r2v * e2, r3: r3 / e })
    }

    /// Factor `Xi` with `2 D^2psi grad psi + lap psi grad psi + psi grad(lap psi) = Xi grad psi`
    /// on the ball of radius `eps`. It satisfies `-3/eps <= Xi <= 5(N+2)/(4 eps)`.
    pub fn cross_term_factor(&self, x: &[f64]) -> f64 {
        let e = self.epsilon;
        let n = self.dim as f64;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let e2 = e * e;
        3.0 / (4.0 * e2 * e * (3.0 * e2 - r2))
            * (10.0 * e2 * e2 + 5.0 * n * e2 * e2 - 24.0 * e2 * r2 - 6.0 * n * e2 * r2
                + 6.0 * r2 * r2
                + n * r2 * r2)
    }

    /// Gradient of `lap psi_eps` inside the ball (zero-order term of the cross factor).
    pub fn laplacian_gradient(&self, x: &[f64]) -> Vec<f64> {
        let e = self.epsilon;
        let r = norm(x);
        if r >= e {
            // lap psi = (N-1)/r
            let n = self.dim as f64;
            return x.iter().map(|v| -(n - 1.0) * v / (r * r * r)).collect();
        }
        let n = self.dim as f64;
        let e3 = e * e * e;
        x.iter().map(|v| -(n + 2.0) * v / e3).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(eps: f64) -> RegularizedWeight {
        RegularizedWeight::new(eps, 1.0, 2).unwrap()
    }

    #[test]
    fn psi_reference_values() {
        // oracle: direct evaluation of 3e/8 + 3r^2/(4e) - r^4/(8e^3)
        let oracle = |e: f64, r: f64| 3.0 * e / 8.0 + 3.0 * r * r / (4.0 * e) - r.powi(4) / (8.0 * e.powi(3));
        assert!((oracle(0.1, 0.0) - 0.0375).abs() < 1e-15);
        assert!((oracle(0.1, 0.05) - 0.05546875).abs() < 1e-15);

        let g = w(0.1);
        assert!((g.psi(0.0).unwrap() - 0.0375).abs() < 1e-17);
        assert!((g.psi(0.05).unwrap() - 0.05546875).abs() < 1e-16);
        assert!((g.psi(0.1).unwrap() - 0.1).abs() < 1e-16);
        assert_eq!(g.psi(0.7).unwrap(), 0.7);
        assert!(g.psi(-1e-3).is_err());
    }

    #[test]
    fn derivative_sup_bounds() {
        for &e in &[1.0, 0.25, 0.01] {
            let g = w(e);
            let (mut d1, mut d2, mut d3) = (0.0f64, 0.0f64, 0.0f64);
            for i in 0..=20_000 {
                let r = 2.0 * e * i as f64 / 20_000.0;
                d1 = d1.max(g.psi_prime(r).abs());
                d2 = d2.max(g.psi_second(r).abs());
                d3 = d3.max(g.psi_third(r).abs());
            }
            assert!((d1 - 1.0).abs() < 1e-12);
            assert!((d2 - 1.5 / e).abs() < 1e-9 / e);
            assert!(d3 <= 3.0 / (e * e) * (1.0 + 1e-12));
            assert!(d3 > 0.99 * 3.0 / (e * e));
        }
    }

    #[test]
    fn matching_at_the_regularization_radius() {
        for &e in &[1.0, 0.5, 1.0 / 64.0, 1e-3] {
            let j = w(e).matching_jumps();
            assert!(j.iter().all(|v| *v < 1e-12), "{e}: {j:?}");
        }
    }

    #[test]
    fn derivative_examples() {
        let g = w(0.2);
        let at = |x: [f64; 2]| g.psi_derivatives(&x).unwrap();
        // both branches give x/eps on the circle
        let x = [0.12, 0.16];
        let inner = {
            let e = 0.2;
            let diag = 3.0 / (2.0 * e) - 0.04 / (2.0 * e * e * e);
            [diag * x[0], diag * x[1]]
        };
        let outer = at(x).gradient;
        assert!((inner[0] - outer[0]).abs() < 1e-14 && (inner[1] - outer[1]).abs() < 1e-14);
        assert!((outer[0] - 0.6).abs() < 1e-14);

        let d = at([0.4 * 0.6, 0.4 * 0.8]);
        assert!((d.laplacian - 1.0 / 0.4).abs() < 1e-13);

        let d0 = at([0.0, 0.0]);
        assert_eq!(d0.gradient, vec![0.0, 0.0]);
        assert_eq!(d0.hessian, vec![7.5, 0.0, 0.0, 7.5]);
    }

    #[test]
    fn laplacian_is_hessian_trace() {
        let g = w(0.3);
        for x in [[0.1, -0.05], [0.29, 0.01], [0.5, 2.0]] {
            let d = g.psi_derivatives(&x).unwrap();
            assert!((d.laplacian - (d.hessian[0] + d.hessian[3])).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_examples() {
        let g = w(0.1);
        assert!((g.weight_value(&[0.3, 0.4]) - 0.5).abs() < 1e-15);
        assert!((g.weight_value(&[0.0, 0.0]) - 0.0375).abs() < 1e-17);
        assert_eq!(exact_weight(1.0, &[0.0, 0.0]), 0.0);
        let grad = g.weight_gradient(&[0.3, 0.4]);
        assert!((grad[0] - 0.6).abs() < 1e-15 && (grad[1] - 0.8).abs() < 1e-15);
        assert_eq!(g.weight_gradient(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert!(WeightKind::exact(0.5).gradient_at([0.0, 0.0]).is_err());
    }

    #[test]
    fn identities_at_special_points() {
        let g = w(0.7);
        let lhs = g.psi_radial(0.0) * (3.0 / (2.0 * 0.7));
        assert!((lhs - 9.0 / 16.0).abs() < 1e-15);
        let res = g.identity_residuals(&[0.0, 0.0]).unwrap();
        assert!(res.max_abs() < 1e-15);
        let res = g.identity_residuals(&[0.7, 0.0]).unwrap();
        assert!(res.max_abs() < 1e-15);
        assert!(g.identity_residuals(&[0.8, 0.0]).is_err());
    }

    #[test]
    fn cross_factor_matches_vector_identity() {
        let g = w(0.5);
        for x in [[0.1, 0.2], [0.3, -0.35], [0.01, 0.0]] {
            let d = g.psi_derivatives(&x).unwrap();
            let gl = g.laplacian_gradient(&x);
            let psi = g.psi_radial(x[0].hypot(x[1]));
            let xi = g.cross_term_factor(&x);
            for i in 0..2 {
                let hg = d.hessian[i * 2] * d.gradient[0] + d.hessian[i * 2 + 1] * d.gradient[1];
                let lhs = 2.0 * hg + d.laplacian * d.gradient[i] + psi * gl[i];
                assert!((lhs - xi * d.gradient[i]).abs() < 1e-12, "{lhs} vs {}", xi * d.gradient[i]);
            }
            assert!((-3.0 / 0.5 - 1e-12..=5.0 * 4.0 / (4.0 * 0.5) + 1e-12).contains(&xi));
        }
    }

    proptest! {
        #[test]
        fn psi_bounds(e in 1e-3f64..2.0, u in 0.0f64..3.0) {
            let g = w(e);
            let r = u * e;
            let p = g.psi_radial(r);
            prop_assert!(p >= 3.0 * e / 8.0 * (1.0 - 1e-15));
            prop_assert!(p >= r * (1.0 - 1e-15));
            if r <= e {
                prop_assert!(p <= 2.0 * e);
            } else {
                prop_assert_eq!(p, r);
            }
        }

        #[test]
        fn regularized_dominates_exact(e in 1e-3f64..1.0, a in 0.05f64..1.95, x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let g = RegularizedWeight::new(e, a, 2).unwrap();
            prop_assert!(g.weight_value(&[x, y]) >= exact_weight(a, &[x, y]) * (1.0 - 1e-14));
        }

        #[test]
        fn identity_residuals_vanish(e in 1e-3f64..2.0, u in 0.0f64..1.0, th in 0.0f64..6.3) {
            let g = w(e);
            let x = [u * e * th.cos(), u * e * th.sin()];
            prop_assert!(g.identity_residuals(&x).unwrap().max_abs() < 1e-12);
        }
    }
}
