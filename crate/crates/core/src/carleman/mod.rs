//! Carleman weights and the two sides of the weighted energy inequalities.
//!
//! Time factor `Theta(t) = [t(T - t)]^-4`; spatial profiles
//! `eta = gamma(-2m^{2-alpha} + psi^{2-alpha})` with `psi = psi_eps` or `|x|`, and the
//! annulus weight `eta_bar` with `xi_bar = Theta e^{lambda(8 + eta_bar)}`,
//! `sigma_bar = Theta e^{10 lambda} - xi_bar` (normalized so `max eta_bar = 1`).

mod balance;
mod prepare;
pub mod quadrature;

pub use balance::{carleman_balance, BalanceVariant, CarlemanBalance, Side, TermValue};
pub use prepare::{prepare, PreparedSolution};

use crate::domain::GeometrySpec;
use crate::error::{Error, Result};
use crate::weights::RegularizedWeight;
use serde::{Deserialize, Serialize};

/// Largest `Theta` kept in time quadratures.
pub const THETA_CUTOFF: f64 = 1e16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlemanParams {
    pub s: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub horizon: f64,
    /// `sup |x| + 1` over the disk.
    pub m: f64,
    pub alpha: f64,
    pub base_length: f64,
    pub outer_radius: f64,
    /// Exponent `k` of `(L - r)^k` in `eta_bar`.
    pub eta_bar_exponent: u32,
    /// Power of `s` on the two small-ball remainders of the regularized estimate.
    pub remainder_power: u32,
}

impl Default for CarlemanParams {
    fn default() -> Self {
        Self::for_geometry(GeometrySpec::default(), 1.0, 1.0)
    }
}

impl CarlemanParams {
    pub fn for_geometry(geometry: GeometrySpec, alpha: f64, horizon: f64) -> Self {
        Self {
            s: 4.0,
            gamma: 4.0,
            lambda: 4.0,
            horizon,
            m: geometry.m(),
            alpha,
            base_length: geometry.base_length,
            outer_radius: geometry.outer_radius,
            eta_bar_exponent: 8,
            remainder_power: 2,
        }
    }

    pub fn with_sgl(mut self, s: f64, gamma: f64, lambda: f64) -> Self {
        self.s = s;
        self.gamma = gamma;
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [("s", self.s), ("gamma", self.gamma), ("lambda", self.lambda)] {
            if !(v >= 1.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be a finite number >= 1, got {v}")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::config("alpha", format!("must lie in (0,2), got {}", self.alpha)));
        }
        if !(self.base_length > 0.0 && self.outer_radius > 5.0 * self.base_length) {
            return Err(Error::config("outer_radius", "need L > 5R > 0"));
        }
        if !(self.m > self.outer_radius) {
            return Err(Error::config("m", format!("must exceed L = {}, got {}", self.outer_radius, self.m)));
        }
        // keeps the excluded end bands strictly inside (0, T)
        if !(self.horizon > 0.03 && self.horizon.is_finite()) {
            return Err(Error::config("horizon", format!("must exceed 0.03, got {}", self.horizon)));
        }
        if self.eta_bar_exponent == 0 {
            return Err(Error::config("eta_bar_exponent", "must be at least 1"));
        }
        if !(1..=2).contains(&self.remainder_power) {
            return Err(Error::config("remainder_power", format!("must be 1 or 2, got {}", self.remainder_power)));
        }
        Ok(())
    }

    /// `Theta` at `T/2`, its smallest value.
    pub fn theta_min(&self) -> f64 {
        (0.25 * self.horizon * self.horizon).powi(-4)
    }

    /// Times `(t_lo, T - t_lo)` outside which `Theta > THETA_CUTOFF`.
    pub fn kept_band(&self) -> (f64, f64) {
        let tl = self.horizon;
        let p = THETA_CUTOFF.powf(-0.25);
        let lo = 2.0 * p / (tl + (tl * tl - 4.0 * p).sqrt());
        (lo, tl - lo)
    }
}

fn check_time(t: f64, horizon: f64) -> Result<()> {
    if !(t > 0.0 && t < horizon) {
        return Err(Error::invalid(format!("Theta has poles at 0 and T; need 0 < t < {horizon}, got {t}")));
    }
    Ok(())
}

/// `Theta(t) = [t(T - t)]^-4`.
pub fn theta(t: f64, horizon: f64) -> Result<f64> {
    check_time(t, horizon)?;
    Ok((t * (horizon - t)).powi(-4))
}

/// `Theta`, `Theta'` and `Theta''` at `t`.
pub fn theta_derivatives(t: f64, horizon: f64) -> Result<[f64; 3]> {
    check_time(t, horizon)?;
    let p = t * (horizon - t);
    let q = 2.0 * t - horizon;
    Ok([p.powi(-4), 4.0 * q * p.powi(-5), 8.0 * p.powi(-5) + 20.0 * q * q * p.powi(-6)])
}

/// Empirical constants of `|Theta' Theta| <= c1 Theta^{9/4}` and `|Theta''| <= c2 Theta^{3/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaBoundCheck {
    pub horizon: f64,
    pub samples: usize,
    /// Sampled sup of `|Theta' Theta| / Theta^{9/4}`.
    pub c1: f64,
    /// Sampled sup of `|Theta''| / Theta^{3/2}`.
    pub c2: f64,
    /// Closed form `4T` of the first sup.
    pub c1_exact: f64,
    /// Closed form `20 T^2` of the second sup.
    pub c2_exact: f64,
    /// `c1 <= 12 T`.
    pub c1_within_12t: bool,
    /// `c2 <= 60 T + 8 T^2`; holds exactly when `T <= 5`.
    pub c2_within_quoted: bool,
}

/// Dense sampling of the two ratios on a grid clustered geometrically at both ends.
pub fn theta_bound_check(horizon: f64, samples: usize) -> Result<ThetaBoundCheck> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    if samples < 16 {
        return Err(Error::invalid(format!("need at least 16 samples, got {samples}")));
    }
    let half = samples / 2;
    let mut c1 = 0.0f64;
    let mut c2 = 0.0f64;
    // geometric from 1e-9 T to T/2 on the left half, mirrored on the right
    let ratio = (0.5f64 / 1e-9).ln() / (half - 1) as f64;
    for i in 0..half {
        let a = horizon * 1e-9 * (ratio * i as f64).exp();
        for t in [a, horizon - a] {
            if !(t > 0.0 && t < horizon) {
                continue;
            }
            let [th, d1, d2] = theta_derivatives(t, horizon)?;
            c1 = c1.max((d1 / th.powf(1.25)).abs());
            c2 = c2.max((d2 / th.powf(1.5)).abs());
        }
    }
    Ok(ThetaBoundCheck {
        horizon,
        samples: 2 * half,
        c1,
        c2,
        c1_exact: 4.0 * horizon,
        c2_exact: 20.0 * horizon * horizon,
        c1_within_12t: c1 <= 12.0 * horizon,
        c2_within_quoted: c2 <= 60.0 * horizon + 8.0 * horizon * horizon,
    })
}

/// Spatial profile `psi` entering `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// `psi = |x|`.
    Exact,
    /// `psi = psi_eps`.
    Regularized { epsilon: f64 },
}

impl Profile {
    fn weight(&self, alpha: f64) -> Result<Option<RegularizedWeight>> {
        match *self {
            Profile::Exact => Ok(None),
            Profile::Regularized { epsilon } => Ok(Some(RegularizedWeight::new(epsilon, alpha, 2)?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaXi {
    pub eta: f64,
    pub xi: f64,
}

/// `eta = gamma(-2m^{2-alpha} + psi^{2-alpha})` and `xi = Theta eta` at `(x, t)`.
pub fn eta_xi(x: [f64; 2], t: f64, params: &CarlemanParams, profile: Profile) -> Result<EtaXi> {
    let th = theta(t, params.horizon)?;
    let r = x[0].hypot(x[1]);
    let psi = match profile.weight(params.alpha)? {
        Some(w) => w.psi_radial(r),
        None => r,
    };
    let a2 = 2.0 - params.alpha;
    let eta = params.gamma * (-2.0 * params.m.powf(a2) + psi.powf(a2));
    Ok(EtaXi { eta, xi: th * eta })
}

/// Radial `eta_bar(r) = c (r - a)(L - r)^k` on `a <= r <= L`, zero elsewhere, with `a = 4R`
/// and `c` chosen so the maximum is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FursikovWeight {
    pub inner: f64,
    pub outer: f64,
    pub exponent: u32,
    /// Unique critical radius `(L + k a)/(k + 1)`.
    pub critical_radius: f64,
    pub scale: f64,
}

impl FursikovWeight {
    /// Rejects constructions whose critical radius is not inside `B_{5R}`.
    pub fn new(base_length: f64, outer_radius: f64, exponent: u32) -> Result<Self> {
        let inner = 4.0 * base_length;
        if !(outer_radius > inner && base_length > 0.0) {
            return Err(Error::invalid(format!("eta_bar needs 4R < L, got R = {base_length}, L = {outer_radius}")));
        }
        if exponent == 0 {
            return Err(Error::invalid("eta_bar exponent must be at least 1"));
        }
        let k = exponent as f64;
        let critical_radius = (outer_radius + k * inner) / (k + 1.0);
        if critical_radius >= 5.0 * base_length {
            return Err(Error::invalid(format!(
                "critical radius {critical_radius} of eta_bar is not inside B_5R; the gradient would vanish outside it (raise the exponent)"
            )));
        }
        let scale = 1.0 / ((critical_radius - inner) * (outer_radius - critical_radius).powi(exponent as i32));
        Ok(Self { inner, outer: outer_radius, exponent, critical_radius, scale })
    }

    pub fn value(&self, r: f64) -> f64 {
        if r <= self.inner || r >= self.outer {
            0.0
        } else {
            self.scale * (r - self.inner) * (self.outer - r).powi(self.exponent as i32)
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        if r <= self.inner || r >= self.outer {
            0.0
        } else {
            let k = self.exponent as f64;
            self.scale * (k + 1.0) * (self.outer - r).powi(self.exponent as i32 - 1) * (self.critical_radius - r)
        }
    }

    /// `1 - eta_bar(r*+offset)` and its derivative in the offset, without cancellation:
    /// `c (k+1) int_0^{|d|} (L - r* -/+ s)^{k-1} s ds`.
    pub fn deficit(&self, offset: f64) -> (f64, f64) {
        let r = self.critical_radius + offset;
        if r <= self.inner || r >= self.outer {
            return (1.0, 0.0);
        }
        let k = self.exponent as i32;
        let c = self.scale * (k as f64 + 1.0);
        let gap = self.outer - self.critical_radius;
        let sign = if offset > 0.0 { -1.0 } else { 1.0 };
        let d = offset.abs();
        let nodes = quadrature::gauss_legendre_rule(k as usize / 2 + 1);
        let mut acc = 0.0;
        for &(z, w) in nodes {
            let s = 0.5 * d * (z + 1.0);
            acc += w * (gap + sign * s).powi(k - 1) * s;
        }
        let value = (c * 0.5 * d * acc).min(1.0);
        let slope = c * (gap + sign * d).powi(k - 1) * offset;
        (value, slope)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XiSigmaBar {
    pub xi_bar: f64,
    pub sigma_bar: f64,
}

/// `xi_bar = Theta e^{lambda(8 + eta_bar)}` and `sigma_bar = Theta e^{10 lambda}(1 - e^{lambda(eta_bar - 2)})`.
pub fn xi_sigma_bar(x: [f64; 2], t: f64, params: &CarlemanParams, eta_bar: &FursikovWeight) -> Result<XiSigmaBar> {
    let th = theta(t, params.horizon)?;
    let e = eta_bar.value(x[0].hypot(x[1]));
    let l = params.lambda;
    Ok(XiSigmaBar { xi_bar: th * (l * (8.0 + e)).exp(), sigma_bar: th * (10.0 * l).exp() * -(l * (e - 2.0)).exp_m1() })
}

/// All weights of one parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarlemanWeightSet {
    pub params: CarlemanParams,
    pub profile: Profile,
    pub eta_bar: FursikovWeight,
}

impl CarlemanWeightSet {
    pub fn new(params: CarlemanParams, profile: Profile) -> Result<Self> {
        params.validate()?;
        profile.weight(params.alpha)?;
        let eta_bar = FursikovWeight::new(params.base_length, params.outer_radius, params.eta_bar_exponent)?;
        Ok(Self { params, profile, eta_bar })
    }

    pub fn theta(&self, t: f64) -> Result<f64> {
        theta(t, self.params.horizon)
    }

    pub fn eta_xi(&self, x: [f64; 2], t: f64) -> Result<EtaXi> {
        eta_xi(x, t, &self.params, self.profile)
    }

    /// `xi_0 = Theta gamma(-2m^{2-alpha} + |x|^{2-alpha})`.
    pub fn xi0(&self, x: [f64; 2], t: f64) -> Result<f64> {
        Ok(eta_xi(x, t, &self.params, Profile::Exact)?.xi)
    }

    pub fn eta_bar(&self, x: [f64; 2]) -> f64 {
        self.eta_bar.value(x[0].hypot(x[1]))
    }

    pub fn xi_sigma_bar(&self, x: [f64; 2], t: f64) -> Result<XiSigmaBar> {
        xi_sigma_bar(x, t, &self.params, &self.eta_bar)
    }
}

/// Which exponential weight `Theta^3 e^{-Theta K(r)}` is bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowWeight {
    /// `Theta^3 e^{2 s xi_0}`.
    Xi0,
    /// `Theta^3 e^{-2 s sigma_bar}`.
    SigmaBar,
}

/// Certified and sampled bounds of `ln(Theta^3 e^{-Theta K(r)})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowBounds {
    /// Infimum over the disk times `(T/4, 3T/4)`.
    pub ln_inf: f64,
    /// Supremum over the disk times `(0, T)`.
    pub ln_sup: f64,
    /// `(r, t)` where the infimum is attained.
    pub inf_at: [f64; 2],
    pub sup_at: [f64; 2],
    pub sampled_ln_inf: f64,
    pub sampled_ln_sup: f64,
}

fn window_rate(set: &CarlemanWeightSet, weight: WindowWeight, r: f64) -> f64 {
    let p = &set.params;
    match weight {
        WindowWeight::Xi0 => {
            let a2 = 2.0 - p.alpha;
            2.0 * p.s * p.gamma * (2.0 * p.m.powf(a2) - r.powf(a2))
        }
        WindowWeight::SigmaBar => {
            let e = set.eta_bar.value(r);
            2.0 * p.s * (10.0 * p.lambda).exp() * -(p.lambda * (e - 2.0)).exp_m1()
        }
    }
}

/// Time in `(0, T/2]` where `Theta` takes the value `th >= Theta_min`.
fn time_of_theta(th: f64, horizon: f64) -> f64 {
    let p = th.powf(-0.25);
    2.0 * p / (horizon + (horizon * horizon - 4.0 * p).max(0.0).sqrt())
}

/// Infimum over the window from the extreme rate and the window ends of `Theta`
/// (the log is concave in `Theta`), supremum from the smallest rate at
/// `Theta* = max(Theta_min, 3/K)`; both cross-checked by sampling.
pub fn weight_window_bounds(set: &CarlemanWeightSet, weight: WindowWeight, samples: usize) -> Result<WindowBounds> {
    let p = &set.params;
    let n = samples.max(8);
    let rs: Vec<f64> = (0..=n).map(|i| p.outer_radius * i as f64 / n as f64).collect();
    let mut extra = vec![set.eta_bar.critical_radius, set.eta_bar.inner];
    extra.retain(|&r| r < p.outer_radius);
    let radii: Vec<f64> = rs.iter().copied().chain(extra).collect();
    let rates: Vec<f64> = radii.iter().map(|&r| window_rate(set, weight, r)).collect();
    let (mut k_max, mut r_max, mut k_min, mut r_min) = (f64::NEG_INFINITY, 0.0, f64::INFINITY, 0.0);
    for (&r, &k) in radii.iter().zip(&rates) {
        if k > k_max {
            k_max = k;
            r_max = r;
        }
        if k < k_min {
            k_min = k;
            r_min = r;
        }
    }
    let th_min = p.theta_min();
    let th_quarter = theta(0.25 * p.horizon, p.horizon)?;
    let ln_f = |th: f64, k: f64| 3.0 * th.ln() - th * k;
    let (ln_inf, t_inf) = {
        let a = ln_f(th_min, k_max);
        let b = ln_f(th_quarter, k_max);
        if b <= a {
            (b, 0.25 * p.horizon)
        } else {
            (a, 0.5 * p.horizon)
        }
    };
    let th_star = th_min.max(3.0 / k_min);
    let ln_sup = ln_f(th_star, k_min);
    let t_sup = time_of_theta(th_star, p.horizon);

    let mut s_inf = f64::INFINITY;
    let mut s_sup = f64::NEG_INFINITY;
    for i in 1..n {
        let t = p.horizon * i as f64 / n as f64;
        let th = theta(t, p.horizon)?;
        for &k in &rates {
            let v = ln_f(th, k);
            s_sup = s_sup.max(v);
            if t >= 0.25 * p.horizon && t <= 0.75 * p.horizon {
                s_inf = s_inf.min(v);
            }
        }
    }
    Ok(WindowBounds {
        ln_inf,
        ln_sup,
        inf_at: [r_max, t_inf],
        sup_at: [r_min, t_sup],
        sampled_ln_inf: s_inf,
        sampled_ln_sup: s_sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn theta_values_and_poles() {
        assert_eq!(theta(0.5, 1.0).unwrap(), 256.0);
        assert!(theta(0.0, 1.0).is_err());
        assert!(theta(1.0, 1.0).is_err());
        let p = CarlemanParams::default();
        assert_eq!(p.theta_min(), 256.0);
        let (lo, hi) = p.kept_band();
        assert!((theta(lo, 1.0).unwrap() / THETA_CUTOFF - 1.0).abs() < 1e-8);
        assert!((lo + hi - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn theta_is_symmetric(t in 0.001f64..0.999, horizon in 0.5f64..3.0) {
            let t = t * horizon;
            let a = theta(t, horizon).unwrap();
            let b = theta(horizon - t, horizon).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }

        #[test]
        fn theta_derivatives_match_differences(t in 0.05f64..0.95) {
            let h = 1e-6;
            let [_, d1, d2] = theta_derivatives(t, 1.0).unwrap();
            let f = |x: f64| theta(x, 1.0).unwrap();
            let fd1 = (f(t + h) - f(t - h)) / (2.0 * h);
            prop_assert!((fd1 - d1).abs() <= 1e-6 * (d1.abs() + f(t)));
            let dd = |x: f64| theta_derivatives(x, 1.0).unwrap()[1];
            let fd2 = (dd(t + h) - dd(t - h)) / (2.0 * h);
            prop_assert!((fd2 - d2).abs() <= 1e-6 * (d2.abs() + f(t)));
        }

        #[test]
        fn xi_negative_and_factor_in_unit_interval(
            r in 0.0f64..9.0, th in 0.0f64..std::f64::consts::TAU, t in 0.01f64..0.99, s in 1.0f64..20.0, gamma in 1.0f64..8.0, eps in 0.01f64..0.5
        ) {
            let params = CarlemanParams { s, gamma, ..CarlemanParams::default() };
            let x = [r * th.cos(), r * th.sin()];
            for profile in [Profile::Exact, Profile::Regularized { epsilon: eps }] {
                let v = eta_xi(x, t, &params, profile).unwrap();
                let m1 = params.m;
                prop_assert!(v.eta >= -2.0 * gamma * m1 - 1e-12 && v.eta <= -gamma * m1);
                prop_assert!(v.xi < 0.0);
                let f = (2.0 * s * v.xi).exp();
                prop_assert!((0.0..1.0).contains(&f));
            }
        }

        #[test]
        fn sigma_bar_positive(r in 0.0f64..9.0, t in 0.01f64..0.99, lambda in 1.0f64..20.0) {
            let params = CarlemanParams { lambda, ..CarlemanParams::default() };
            let eb = FursikovWeight::new(1.0, 9.0, 8).unwrap();
            let v = xi_sigma_bar([r, 0.0], t, &params, &eb).unwrap();
            prop_assert!(v.sigma_bar > 0.0);
            prop_assert!((-2.0 * params.s * v.sigma_bar).exp() < 1.0);
        }

        #[test]
        fn deficit_matches_closed_form(r in 4.0f64..9.0) {
            let eb = FursikovWeight::new(1.0, 9.0, 8).unwrap();
            let (d, slope) = eb.deficit(r - eb.critical_radius);
            prop_assert!((d - (1.0 - eb.value(r))).abs() < 1e-12);
            prop_assert!((slope + eb.derivative(r)).abs() < 1e-10);
        }
    }

    #[test]
    fn eta_example() {
        // gamma = 1, alpha = 1, m = 10, psi = 4: eta = -20 + 4
        let params = CarlemanParams { gamma: 1.0, ..CarlemanParams::default() };
        let v = eta_xi([4.0, 0.0], 0.5, &params, Profile::Exact).unwrap();
        assert!((v.eta + 16.0).abs() < 1e-12);
        assert!((v.xi + 16.0 * 256.0).abs() < 1e-9);
    }

    #[test]
    fn bound_constants() {
        for horizon in [0.5, 1.0, 2.0] {
            let c = theta_bound_check(horizon, 4000).unwrap();
            assert!((c.c1 - 4.0 * horizon).abs() <= 1e-6 * horizon, "{c:?}");
            assert!(c.c1_within_12t);
            assert!((c.c2 - 20.0 * horizon * horizon).abs() <= 1e-6 * horizon * horizon, "{c:?}");
            assert!(c.c2_within_quoted);
        }
        // 20 T^2 > 60 T + 8 T^2 once T > 5
        assert!(!theta_bound_check(6.0, 4000).unwrap().c2_within_quoted);
    }

    #[test]
    fn eta_bar_zeros_critical_radius_and_rejection() {
        let eb = FursikovWeight::new(1.0, 9.0, 8).unwrap();
        assert_eq!(eb.value(4.0), 0.0);
        assert_eq!(eb.value(9.0), 0.0);
        assert!((eb.critical_radius - 41.0 / 9.0).abs() < 1e-15);
        assert!((eb.value(eb.critical_radius) - 1.0).abs() < 1e-14);
        assert!(eb.value(6.0) > 0.0);
        for r in [5.0, 6.0, 7.5, 8.99] {
            assert!(eb.derivative(r) < 0.0);
        }
        assert!(FursikovWeight::new(1.0, 9.0, 1).is_err());
        assert!(FursikovWeight::new(1.0, 9.0, 4).is_err());
        assert!(FursikovWeight::new(1.0, 9.0, 5).is_ok());
        assert!(FursikovWeight::new(1.0, 3.5, 8).is_err());
    }

    #[test]
    fn xi_bar_example() {
        let params = CarlemanParams::default();
        let eb = FursikovWeight::new(1.0, 9.0, 8).unwrap();
        let v = xi_sigma_bar([eb.critical_radius, 0.0], 0.5, &params, &eb).unwrap();
        let l = params.lambda;
        assert!((v.xi_bar / (256.0 * (9.0 * l).exp()) - 1.0).abs() < 1e-12);
        let exact = 256.0 * ((10.0 * l).exp() - (9.0 * l).exp());
        assert!((v.sigma_bar / exact - 1.0).abs() < 1e-12);
    }

    #[test]
    fn window_infimum_at_quarter_times() {
        let set = CarlemanWeightSet::new(CarlemanParams::default(), Profile::Exact).unwrap();
        for weight in [WindowWeight::Xi0, WindowWeight::SigmaBar] {
            let b = weight_window_bounds(&set, weight, 64).unwrap();
            assert_eq!(b.inf_at[1], 0.25);
            assert!(b.ln_inf.is_finite() && b.ln_sup.is_finite());
            assert!(b.sampled_ln_inf >= b.ln_inf - 1e-9 * b.ln_inf.abs());
            assert!(b.sampled_ln_sup <= b.ln_sup + 1e-9 * b.ln_sup.abs());
        }
        // along a fixed radius, t -> ln(Theta^3 e^{2 s xi_0}) decreases away from T/2
        let mut last = f64::INFINITY;
        for i in 0..=50 {
            let t = 0.5 - 0.25 * i as f64 / 50.0;
            let v = 3.0 * set.theta(t).unwrap().ln() + 2.0 * set.params.s * set.xi0([2.0, 0.0], t).unwrap();
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn doubling_s_lowers_the_supremum() {
        let mut prev = f64::INFINITY;
        for s in [1.0, 2.0, 4.0, 8.0, 16.0] {
            let set = CarlemanWeightSet::new(CarlemanParams::default().with_sgl(s, 4.0, 4.0), Profile::Exact).unwrap();
            let b = weight_window_bounds(&set, WindowWeight::Xi0, 64).unwrap();
            assert!(b.ln_sup < prev);
            prev = b.ln_sup;
        }
    }

    #[test]
    fn params_validation() {
        assert!(CarlemanParams::default().validate().is_ok());
        assert!(CarlemanParams { s: 0.5, ..CarlemanParams::default() }.validate().is_err());
        assert!(CarlemanParams { m: 9.0, ..CarlemanParams::default() }.validate().is_err());
        assert!(CarlemanParams { remainder_power: 3, ..CarlemanParams::default() }.validate().is_err());
    }
}
