//! Log-domain accumulation and exponentially fitted Gauss rules for integrands
//! `exp(-gap(x)) f(x)` whose exponent varies by thousands across one interval.

use std::sync::OnceLock;

/// Nonnegative number stored as its natural logarithm; `-inf` is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSum {
    max: f64,
    scaled: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self::zero()
    }
}

impl LogSum {
    pub fn zero() -> Self {
        Self { max: f64::NEG_INFINITY, scaled: 0.0 }
    }

    /// Add `exp(log)`.
    #[inline]
    pub fn add_log(&mut self, log: f64) {
        if log == f64::NEG_INFINITY || log.is_nan() {
            return;
        }
        if log <= self.max {
            self.scaled += (log - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - log).exp() + 1.0;
            self.max = log;
        }
    }

    pub fn add(&mut self, other: LogSum) {
        if other.scaled > 0.0 {
            self.add_log(other.ln());
        }
    }

    pub fn ln(&self) -> f64 {
        if self.scaled > 0.0 {
            self.max + self.scaled.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn is_zero(&self) -> bool {
        !(self.scaled > 0.0)
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

const CACHED_RULES: usize = 32;

/// Cached `n`-point Gauss-Legendre rule on `[-1, 1]`, `1 <= n <= 32`.
pub fn gauss_legendre_rule(n: usize) -> &'static [(f64, f64)] {
    static RULES: [OnceLock<Vec<(f64, f64)>>; CACHED_RULES] = [const { OnceLock::new() }; CACHED_RULES];
    assert!((1..=CACHED_RULES).contains(&n), "Gauss-Legendre rule size {n} out of range");
    RULES[n - 1].get_or_init(|| if n == 1 { vec![(0.0, 2.0)] } else { gauss_legendre(n) })
}

fn gl8() -> &'static [(f64, f64)] {
    gauss_legendre_rule(8)
}

fn panel() -> &'static [(f64, f64)] {
    gauss_legendre_rule(8)
}

/// Breakpoints of the composite rule in `v = sqrt(gap - gap_min)`.
const V_BREAKS: [f64; 6] = [0.0, 1.0, 2.0, 3.0, 4.5, 8.0];

/// Gap spread below which the plain Gauss rule in `x` is used.
const PLAIN_SPREAD: f64 = 1.0;

/// Solve `gap(x) = target` on the monotone side of `x0` (where `gap = low`), for
/// `x = x0 + dir d` with `0 < d <= width`. Newton runs on `ln(gap - low)` against `ln d`,
/// which is nearly linear when the gap grows like a power of the distance, so roots
/// many orders of magnitude closer to `x0` than `width` are found in a few steps.
fn invert(x0: f64, dir: f64, width: f64, spread: f64, gap: &dyn Fn(f64) -> (f64, f64), low: f64, target: f64) -> f64 {
    let ln_t = (target - low).ln();
    let (mut lo, mut hi) = (width.ln() - 745.0, width.ln());
    let mut y = (hi + ln_t - spread.ln()).clamp(lo, hi);
    let mut x = x0 + dir * y.exp();
    let mut last = f64::INFINITY;
    for _ in 0..200 {
        let d = y.exp();
        x = x0 + dir * d;
        let (g, dg) = gap(x);
        let excess = g - low;
        if !(excess > 0.0) {
            lo = y;
            y = 0.5 * (lo + hi);
            continue;
        }
        let phi = excess.ln() - ln_t;
        // stop at 1e-14 or once rounding in `gap - low` stalls the iteration
        if phi.abs() < 1e-14 || (phi.abs() < 1e-8 && phi.abs() > 0.5 * last) {
            return x;
        }
        last = phi.abs();
        if phi > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let slope = d * dg.abs() / excess;
        let newton = y - phi / slope;
        y = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 {
            break;
        }
    }
    x
}

/// Nodes and log-weights of a rule for `int_a^b exp(-gap(x)) f(x) dx` where `gap`
/// (returned with its derivative) is monotone on `[a, b]`. The integral is
/// `sum_i exp(logw_i) f(x_i)`.
pub fn fitted_rule(a: f64, b: f64, gap: &dyn Fn(f64) -> (f64, f64)) -> Vec<(f64, f64)> {
    if !(b > a) {
        return Vec::new();
    }
    let (ga, _) = gap(a);
    let (gb, _) = gap(b);
    let low = ga.min(gb);
    let spread = (ga - gb).abs();
    let half = 0.5 * (b - a);
    if !(spread >= PLAIN_SPREAD) {
        return gl8()
            .iter()
            .map(|&(z, w)| {
                let x = a + half * (z + 1.0);
                (x, (w * half).ln() - gap(x).0)
            })
            .collect();
    }
    let (x0, dir) = if gb > ga { (a, 1.0) } else { (b, -1.0) };
    let v_max = spread.sqrt().min(V_BREAKS[V_BREAKS.len() - 1]);
    let mut out = Vec::with_capacity(40);
    for win in V_BREAKS.windows(2) {
        let (v0, v1) = (win[0], win[1].min(v_max));
        if v1 <= v0 {
            break;
        }
        let hv = 0.5 * (v1 - v0);
        for &(z, w) in panel() {
            let v = v0 + hv * (z + 1.0);
            let x = invert(x0, dir, b - a, spread, gap, low, low + v * v);
            let dg = gap(x).1.abs();
            if !(dg > 0.0) || !dg.is_finite() {
                continue;
            }
            out.push((x, (w * hv * 2.0 * v / dg).ln() - low - v * v));
        }
    }
    out
}

/// `ln int_a^b exp(-gap) f` for nonnegative `f`.
pub fn fitted_integral(a: f64, b: f64, gap: &dyn Fn(f64) -> (f64, f64), f: &dyn Fn(f64) -> f64) -> f64 {
    let mut acc = LogSum::zero();
    for (x, lw) in fitted_rule(a, b, gap) {
        let v = f(x);
        if v > 0.0 {
            acc.add_log(lw + v.ln());
        }
    }
    acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_matches_direct_sum() {
        let mut s = LogSum::zero();
        assert!(s.is_zero());
        for v in [3.0f64, 0.5, 7.25, 1e-3] {
            s.add_log(v.ln());
        }
        assert!((s.ln().exp() - 10.751).abs() < 1e-12);
        let mut big = LogSum::zero();
        big.add_log(-1e6);
        big.add_log(-1e6 + 2f64.ln());
        assert!((big.ln() - (-1e6 + 3f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let s: f64 = gl8().iter().map(|&(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
        let s: f64 = panel().iter().map(|&(_, w)| w).sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn steep_linear_exponent() {
        // int_0^1 exp(-c x) (1 + x) dx = (1 - e^{-c})/c + (1 - e^{-c}(1 + c))/c^2
        for c in [0.3f64, 5.0, 40.0, 1e4, 1e9] {
            let exact = (-(-c).exp_m1()) / c + (1.0 - (-c).exp() * (1.0 + c)) / (c * c);
            let got = fitted_integral(0.0, 1.0, &|x| (c * x, c), &|x| 1.0 + x).exp();
            assert!(((got - exact) / exact).abs() < 1e-9, "c = {c}: {got} vs {exact}");
        }
    }

    #[test]
    fn quadratic_peak_at_the_end() {
        // int_0^1 exp(-c x^2) dx = sqrt(pi/c)/2 erf(sqrt c), erf(sqrt c) = 1 for c >= 100
        for c in [100.0, 1e6, 1e12, 1e90] {
            let exact = 0.5 * (std::f64::consts::PI / c).sqrt();
            let got = fitted_integral(0.0, 1.0, &|x| (c * x * x, 2.0 * c * x), &|_| 1.0).exp();
            assert!(((got - exact) / exact).abs() < 1e-9, "c = {c}: {got} vs {exact}");
        }
    }

    #[test]
    fn decreasing_gap_and_vanishing_factor() {
        // gap = c (1 - x) peaks at x = 1 where f = (1 - x)^3 vanishes: integral = 6 / c^4
        let c = 5e3;
        let got = fitted_integral(0.0, 1.0, &|x| (c * (1.0 - x), -c), &|x| (1.0 - x).powi(3));
        assert!((got - (6.0f64.ln() - 4.0 * c.ln())).abs() < 1e-9, "{got} vs {}", 6.0f64.ln() - 4.0 * c.ln());
    }
}
