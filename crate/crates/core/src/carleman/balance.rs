//! Both sides of each weighted inequality for one tabulated solution.
//!
//! Every integrand is `exp(-Theta K(r) + j ln Theta + l(r)) a(r) G(r, t)` where `G` is a
//! circle integral of the solution. All terms of one inequality share the reference
//! exponent `-Theta_min K_min`, the value of `-Theta K` at `t = T/2` and the radius where
//! `K` is smallest, so terms are returned as logarithms relative to it.
//! With `Theta = Theta_min + (Theta - Theta_min)` and `K = K_min + Kgap(r)` the relative
//! exponent is `-(Theta - Theta_min) K_min - Theta Kgap(r) + j ln Theta + l(r)`, which is
//! integrated with the fitted rules of [`quadrature`](super::quadrature) in offsets from
//! `T/2` and from the critical radius, where the integrands concentrate.

use super::quadrature::{fitted_rule, gauss_legendre_rule, LogSum};
use super::{CarlemanParams, FursikovWeight, PreparedSolution};
use crate::error::{Error, Result};
use crate::weights::{build_cutoff, CutoffFunction, CutoffSpec, RegularizedWeight, WeightKind};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_10;

pub(crate) const FIELDS: usize = 5;
pub(crate) const U2: usize = 0;
pub(crate) const GRAD2: usize = 1;
pub(crate) const URAD: usize = 2;
pub(crate) const RAD2: usize = 3;
pub(crate) const SRC2: usize = 4;

/// Pieces whose upper bound is this far (in natural log) below the running total are skipped.
const SKIP_MARGIN: f64 = 60.0;

/// The inequalities whose two sides are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BalanceVariant {
    /// `e^{2 s xi}` estimate for the regularized weight, with boundary flux and the two
    /// remainders on the regularization ball.
    Regularized,
    /// `e^{2 s xi_0}` estimate for `|x|^alpha`, gradient term outside `B_R`, boundary flux.
    Limit,
    /// Unweighted bound of the cut-off solution on `B_4R` over `(T/4, 3T/4)` by its mass on `omega`.
    Interior,
    /// The `e^{2 s xi_0}` form of the interior bound, with `(1 + Theta^{5/4})` on the right.
    CutoffWeighted,
    /// Unweighted bound outside `B_5R` over `(T/4, 3T/4)` by the mass on `omega`.
    Exterior,
    /// `e^{-2 s sigma_bar}` estimate on `Omega \ B_R` for the exterior cut-off.
    Annulus,
    /// Gradient on `A_{4R,5R}` by the `(1 + Theta^{5/4})`-weighted mass on `A_{3R,6R}`.
    Caccioppoli,
}

impl BalanceVariant {
    pub const ALL: [BalanceVariant; 7] = [
        BalanceVariant::Regularized,
        BalanceVariant::Limit,
        BalanceVariant::Interior,
        BalanceVariant::CutoffWeighted,
        BalanceVariant::Exterior,
        BalanceVariant::Annulus,
        BalanceVariant::Caccioppoli,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BalanceVariant::Regularized => "regularized",
            BalanceVariant::Limit => "limit",
            BalanceVariant::Interior => "interior",
            BalanceVariant::CutoffWeighted => "cutoff-weighted",
            BalanceVariant::Exterior => "exterior",
            BalanceVariant::Annulus => "annulus",
            BalanceVariant::Caccioppoli => "caccioppoli",
        }
    }

    pub fn needs_flux(&self) -> bool {
        matches!(self, BalanceVariant::Regularized | BalanceVariant::Limit)
    }

    pub fn needs_regularized_weight(&self) -> bool {
        matches!(self, BalanceVariant::Regularized)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lhs,
    Rhs,
}

/// One integral, as `log10` of its magnitude relative to the balance's `log10_scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermValue {
    pub name: String,
    pub side: Side,
    /// `None` when the integral is zero.
    pub log10: Option<f64>,
    pub negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlemanBalance {
    pub variant: BalanceVariant,
    pub params: CarlemanParams,
    pub lhs_terms: Vec<TermValue>,
    pub rhs_terms: Vec<TermValue>,
    /// `log10` of the common factor `e^{-Theta_min K_min}` all terms are relative to.
    pub log10_scale: f64,
    pub log10_lhs: Option<f64>,
    pub log10_rhs: Option<f64>,
    /// `None` when the left side is zero or the right side is not positive.
    pub log10_implied_c: Option<f64>,
    /// `lhs / rhs`: `0` for a zero left side, `None` when infinite or beyond `f64`.
    pub implied_c: Option<f64>,
    /// Times `[t_lo, T - t_lo]` kept by the weighted quadratures (`Theta <= 1e16`).
    pub excluded_band: Option<[f64; 2]>,
}

impl CarlemanBalance {
    /// Zero left side, or a finite ratio.
    pub fn is_finite(&self) -> bool {
        self.log10_lhs.is_none() || self.log10_implied_c.is_some_and(f64::is_finite)
    }
}

/// Exponential weight of a term.
#[derive(Debug, Clone, Copy)]
enum Family {
    None,
    /// `e^{2 s xi}` with `psi = psi_eps` (`Some`) or `|x|`.
    Xi(Option<RegularizedWeight>),
    SigmaBar(FursikovWeight),
}

/// Rate `K(r) = K_min + Kgap(r)` of `e^{-Theta K}` in offsets from the critical radius.
#[derive(Debug, Clone, Copy)]
struct Weighting {
    family: Family,
    anchor: f64,
    k_min: f64,
    coef: f64,
    a2: f64,
    lambda: f64,
}

impl Weighting {
    fn new(family: Family, p: &CarlemanParams) -> Self {
        let a2 = 2.0 - p.alpha;
        let l = p.outer_radius;
        match family {
            Family::None => Self { family, anchor: 0.0, k_min: 0.0, coef: 0.0, a2, lambda: p.lambda },
            Family::Xi(_) => {
                let coef = 2.0 * p.s * p.gamma;
                Self {
                    family,
                    anchor: l,
                    k_min: coef * (2.0 * p.m.powf(a2) - l.powf(a2)),
                    coef,
                    a2,
                    lambda: p.lambda,
                }
            }
            Family::SigmaBar(eb) => Self {
                family,
                anchor: eb.critical_radius,
                k_min: 2.0 * p.s * (10.0 * p.lambda).exp() * -(-p.lambda).exp_m1(),
                coef: 2.0 * p.s * (9.0 * p.lambda).exp(),
                a2,
                lambda: p.lambda,
            },
        }
    }

    fn weighted(&self) -> bool {
        !matches!(self.family, Family::None)
    }

    /// `Kgap` and its derivative at `r = anchor + offset`.
    fn kgap(&self, offset: f64) -> (f64, f64) {
        match self.family {
            Family::None => (0.0, 0.0),
            Family::Xi(reg) => {
                let l = self.anchor;
                let r = l + offset;
                match reg {
                    Some(w) if r < w.epsilon => {
                        let psi = w.psi_radial(r);
                        (
                            self.coef * (l.powf(self.a2) - psi.powf(self.a2)),
                            -self.coef * self.a2 * psi.powf(self.a2 - 1.0) * w.psi_prime(r),
                        )
                    }
                    _ => (
                        -self.coef * l.powf(self.a2) * (self.a2 * (offset / l).ln_1p()).exp_m1(),
                        -self.coef * self.a2 * r.max(0.0).powf(self.a2 - 1.0),
                    ),
                }
            }
            Family::SigmaBar(eb) => {
                let (d, slope) = eb.deficit(offset);
                let e = (-self.lambda * d).exp();
                (self.coef * -(-self.lambda * d).exp_m1(), self.coef * self.lambda * e * slope)
            }
        }
    }

    /// `ln xi_bar^power - power ln Theta = power lambda (9 - (1 - eta_bar))`.
    fn ell(&self, offset: f64, power: f64) -> f64 {
        match self.family {
            Family::SigmaBar(eb) if power != 0.0 => power * self.lambda * (9.0 - eb.deficit(offset).0),
            _ => 0.0,
        }
    }
}

/// `Theta(T/2 + tau)` helpers in the offset from `T/2`.
#[derive(Debug, Clone, Copy)]
struct Clock {
    half: f64,
    p_min: f64,
    th_min: f64,
}

impl Clock {
    fn new(horizon: f64) -> Self {
        let half = 0.5 * horizon;
        let p_min = half * half;
        Self { half, p_min, th_min: p_min.powi(-4) }
    }

    fn p(&self, tau: f64) -> f64 {
        self.p_min - tau * tau
    }

    fn theta(&self, tau: f64) -> f64 {
        self.p(tau).powi(-4)
    }

    /// `Theta - Theta_min` without cancellation.
    fn excess(&self, tau: f64) -> f64 {
        let p = self.p(tau);
        let pm = self.p_min;
        tau * tau * (pm + p) * (pm * pm + p * p) / (p.powi(4) * pm.powi(4))
    }

    /// `ln(Theta / Theta_min)`.
    fn log_ratio(&self, tau: f64) -> f64 {
        -4.0 * (-(tau * tau) / self.p_min).ln_1p()
    }

    /// Offset where `Theta = th`, for `th >= Theta_min`.
    fn offset_of(&self, th: f64) -> f64 {
        (self.p_min - th.powf(-0.25)).max(0.0).sqrt()
    }

    /// Outer gap `(Theta - Theta_min) rate - j ln(Theta / Theta_min)` and its derivative.
    fn gap(&self, tau: f64, rate: f64, j: f64) -> (f64, f64) {
        let p = self.p(tau);
        let value = self.excess(tau) * rate - j * self.log_ratio(tau);
        let slope = 8.0 * tau * p.powi(-5) * rate - j * 8.0 * tau / p;
        (value, slope)
    }
}

type Coefficients = Box<dyn Fn(f64) -> [f64; FIELDS] + Sync>;

enum TermKind {
    Volume(Coefficients),
    /// `Theta^j e^{-Theta K(L)} int (d_nu u)^2 (x . nu) dS` on the outer circle.
    Flux,
}

struct Term {
    name: &'static str,
    side: Side,
    band: (f64, f64),
    window: (f64, f64),
    theta_power: f64,
    xi_bar_power: f64,
    log_const: f64,
    kind: TermKind,
}

/// Signed integral, as logs of its positive and negative parts.
#[derive(Debug, Clone, Copy, Default)]
struct Signed {
    pos: LogSum,
    neg: LogSum,
}

impl Signed {
    fn value(&self) -> (Option<f64>, bool) {
        match (self.pos.is_zero(), self.neg.is_zero()) {
            (true, true) => (None, false),
            (false, true) => (Some(self.pos.ln()), false),
            (true, false) => (Some(self.neg.ln()), true),
            (false, false) => {
                let (a, b) = (self.pos.ln(), self.neg.ln());
                if a == b {
                    (None, false)
                } else if a > b {
                    (Some(a + (-(b - a).exp()).ln_1p()), false)
                } else {
                    (Some(b + (-(a - b).exp()).ln_1p()), true)
                }
            }
        }
    }
}

struct Evaluator<'a> {
    prep: &'a PreparedSolution,
    params: CarlemanParams,
    clock: Clock,
    weighting: Weighting,
}

impl Evaluator<'_> {
    fn term(&self, term: &Term) -> Result<Signed> {
        match &term.kind {
            TermKind::Volume(c) if !self.weighting.weighted() && term.theta_power == 0.0 => {
                Ok(self.unweighted_volume(term, c))
            }
            TermKind::Volume(c) => Ok(self.weighted_volume(term, c)),
            TermKind::Flux => self.flux(term),
        }
    }

    /// Radial pieces of the band: segment intersections, split at the anchor.
    fn radial_pieces(&self, band: (f64, f64)) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        let anchor = self.weighting.anchor;
        for s in 0..self.prep.segments() {
            let (lo, hi) = self.prep.segment_bounds(s);
            let (a, b) = (lo.max(band.0), hi.min(band.1));
            if b <= a {
                continue;
            }
            if self.weighting.weighted() && a < anchor && anchor < b {
                out.push((s, a, anchor));
                out.push((s, anchor, b));
            } else {
                out.push((s, a, b));
            }
        }
        out
    }

    /// Time window clipped to the kept band for weighted terms.
    fn window(&self, term: &Term) -> (f64, f64) {
        let (mut t0, mut t1) = term.window;
        if self.weighting.weighted() || term.theta_power != 0.0 {
            let (lo, hi) = self.params.kept_band();
            t0 = t0.max(lo);
            t1 = t1.min(hi);
        }
        (t0, t1)
    }

    fn integrand(&self, c: &Coefficients, s: usize, r: f64, n: usize, frac: f64) -> f64 {
        let g = self.prep.eval(s, r, n, frac);
        let k = c(r);
        let mut v = 0.0;
        for f in 0..FIELDS {
            if k[f] != 0.0 {
                v += k[f] * g[f];
            }
        }
        v.max(0.0)
    }

    /// Gauss in radius on each segment, exact in time for the piecewise linear interpolant.
    fn unweighted_volume(&self, term: &Term, c: &Coefficients) -> Signed {
        let grid = &self.prep.grid;
        let (t0, t1) = self.window(term);
        let rule = gauss_legendre_rule(8);
        let radial = |n: usize, frac: f64| -> f64 {
            let mut acc = 0.0;
            for &(s, a, b) in &self.radial_pieces(term.band) {
                let half = 0.5 * (b - a);
                for &(z, w) in rule {
                    let r = a + half * (z + 1.0);
                    acc += half * w * self.integrand(c, s, r, n, frac);
                }
            }
            acc
        };
        let mut total = 0.0;
        for n in 0..grid.steps {
            let (ta, tb) = (grid.time(n).max(t0), grid.time(n + 1).min(t1));
            if tb <= ta {
                continue;
            }
            let dt = grid.dt();
            let mid = (0.5 * (ta + tb) - grid.time(n)) / dt;
            total += (tb - ta) * radial(n, mid.clamp(0.0, 1.0));
        }
        let mut out = Signed::default();
        if total > 0.0 {
            out.pos.add_log(total.ln() + term.log_const);
        }
        out
    }

    /// Time pieces in offsets from `T/2`: grid intervals in the window, split at `T/2` and
    /// at the turning points `Theta = j / rate`.
    fn time_pieces(&self, term: &Term, rate: f64) -> Vec<(usize, f64, f64)> {
        let grid = &self.prep.grid;
        let (t0, t1) = self.window(term);
        let half = self.clock.half;
        let mut cuts = vec![0.0];
        if term.theta_power > 0.0 {
            let th_c = term.theta_power / rate;
            if th_c > self.clock.th_min {
                let tc = self.clock.offset_of(th_c);
                cuts.push(tc);
                cuts.push(-tc);
            }
        }
        let mut out = Vec::new();
        for n in 0..grid.steps {
            let (ta, tb) = (grid.time(n).max(t0), grid.time(n + 1).min(t1));
            if tb <= ta {
                continue;
            }
            let (a, b) = (ta - half, tb - half);
            let mut pts = vec![a];
            pts.extend(cuts.iter().copied().filter(|&c| c > a && c < b));
            pts.push(b);
            pts.sort_by(f64::total_cmp);
            for w in pts.windows(2) {
                out.push((n, w[0], w[1]));
            }
        }
        out
    }

    fn slot(&self, n: usize, tau: f64) -> f64 {
        let t = self.clock.half + tau;
        ((t - self.prep.grid.time(n)) / self.prep.grid.dt()).clamp(0.0, 1.0)
    }

    fn weighted_volume(&self, term: &Term, c: &Coefficients) -> Signed {
        let wt = &self.weighting;
        let j = term.theta_power;
        let ln_th_min = self.clock.th_min.ln();
        struct Candidate {
            bound: f64,
            seg: usize,
            da: f64,
            db: f64,
            kg: f64,
            n: usize,
            ta: f64,
            tb: f64,
        }
        let mut candidates = Vec::new();
        for (s, a, b) in self.radial_pieces(term.band) {
            let (da, db) = (a - wt.anchor, b - wt.anchor);
            let kg = wt.kgap(da).0.min(wt.kgap(db).0).max(0.0);
            let mut cmax = [0.0f64; FIELDS];
            for i in 0..=4 {
                let k = c(a + (b - a) * i as f64 / 4.0);
                for f in 0..FIELDS {
                    cmax[f] = cmax[f].max(k[f].abs());
                }
            }
            let ell_max = wt.ell(da, term.xi_bar_power).max(wt.ell(db, term.xi_bar_power));
            let rate = wt.k_min + kg;
            let base = -self.clock.th_min * kg + j * ln_th_min + ell_max + (b - a).ln() + 4f64.ln();
            for (n, ta, tb) in self.time_pieces(term, rate) {
                let gm = self.prep.segment_max(s, n);
                let vmax: f64 = (0..FIELDS).map(|f| cmax[f] * gm[f]).sum();
                if !(vmax > 0.0) {
                    continue;
                }
                let go_min = self.clock.gap(ta, rate, j).0.min(self.clock.gap(tb, rate, j).0);
                let bound = base + (tb - ta).ln() - go_min + vmax.ln();
                candidates.push(Candidate { bound, seg: s, da, db, kg, n, ta, tb });
            }
        }
        candidates.sort_by(|x, y| y.bound.total_cmp(&x.bound));
        let mut total = LogSum::zero();
        for cand in &candidates {
            if !total.is_zero() && cand.bound < total.ln() - SKIP_MARGIN {
                break;
            }
            let rate = wt.k_min + cand.kg;
            let outer = fitted_rule(cand.ta, cand.tb, &|tau| self.clock.gap(tau, rate, j));
            let mut piece = LogSum::zero();
            for (tau, lw) in outer {
                let th = self.clock.theta(tau);
                let frac = self.slot(cand.n, tau);
                let kg = cand.kg;
                let inner_gap = |d: f64| {
                    let (v, dv) = wt.kgap(d);
                    (th * (v - kg), th * dv)
                };
                let mut inner = LogSum::zero();
                for (d, lwr) in fitted_rule(cand.da, cand.db, &inner_gap) {
                    let v = self.integrand(c, cand.seg, wt.anchor + d, cand.n, frac);
                    if v > 0.0 {
                        inner.add_log(lwr + wt.ell(d, term.xi_bar_power) + v.ln());
                    }
                }
                if !inner.is_zero() {
                    piece.add_log(lw + inner.ln());
                }
            }
            if !piece.is_zero() {
                total.add_log(piece.ln() - self.clock.th_min * cand.kg + j * ln_th_min);
            }
        }
        let mut out = Signed::default();
        if !total.is_zero() {
            out.pos.add_log(total.ln() + term.log_const);
        }
        out
    }

    fn flux(&self, term: &Term) -> Result<Signed> {
        if !self.prep.has_flux {
            return Err(Error::invalid("this inequality needs the boundary flux of the solution"));
        }
        let wt = &self.weighting;
        let j = term.theta_power;
        let ln_th_min = self.clock.th_min.ln();
        let kg = wt.kgap(self.params.outer_radius - wt.anchor).0.max(0.0);
        let rate = wt.k_min + kg;
        let mut out = Signed::default();
        for (n, ta, tb) in self.time_pieces(term, rate) {
            let rule = fitted_rule(ta, tb, &|tau| self.clock.gap(tau, rate, j));
            for (tau, lw) in rule {
                let [pos, neg] = self.prep.flux_at(n, self.slot(n, tau));
                let shift = lw - self.clock.th_min * kg + j * ln_th_min + term.log_const;
                if pos > 0.0 {
                    out.pos.add_log(shift + pos.ln());
                }
                if neg > 0.0 {
                    out.neg.add_log(shift + neg.ln());
                }
            }
        }
        Ok(out)
    }
}

/// `[value, d1, d2]` of the radial cutoff.
fn cutoff(spec: CutoffSpec) -> Result<CutoffFunction> {
    build_cutoff(spec)
}

/// `|grad (c u)|^2 = c^2 |grad u|^2 + 2 c c' u d_r u + c'^2 u^2` as field coefficients.
fn cut_gradient(c: [f64; 3], scale: f64) -> [f64; FIELDS] {
    let mut k = [0.0; FIELDS];
    k[GRAD2] = scale * c[0] * c[0];
    k[URAD] = scale * 2.0 * c[0] * c[1];
    k[U2] = scale * c[1] * c[1];
    k
}

fn mass(scale: f64) -> [f64; FIELDS] {
    let mut k = [0.0; FIELDS];
    k[U2] = scale;
    k
}

fn build_terms(variant: BalanceVariant, p: &CarlemanParams, weight: WeightKind) -> Result<(Family, Vec<Term>)> {
    let rr = p.base_length;
    let l = p.outer_radius;
    let horizon = p.horizon;
    let alpha = p.alpha;
    let full = (0.0, horizon);
    let window = (0.25 * horizon, 0.75 * horizon);
    let ln_s = p.s.ln();
    let ln_l = p.lambda.ln();
    let zeta = cutoff(CutoffSpec::one_inside(4.0 * rr, 5.0 * rr, rr))?;
    let kappa = cutoff(CutoffSpec::one_outside(4.0 * rr, 5.0 * rr, rr))?;
    let vol = |name, side, band, window, theta_power, log_const, c: Coefficients| Term {
        name,
        side,
        band,
        window,
        theta_power,
        xi_bar_power: 0.0,
        log_const,
        kind: TermKind::Volume(c),
    };
    let flux = |log_const| Term {
        name: "boundary",
        side: Side::Rhs,
        band: (l, l),
        window: full,
        theta_power: 1.0,
        xi_bar_power: 0.0,
        log_const,
        kind: TermKind::Flux,
    };
    let source = |window| {
        vol(
            "source",
            Side::Rhs,
            (0.0, l),
            window,
            0.0,
            0.0,
            Box::new(|_| {
                let mut k = [0.0; FIELDS];
                k[SRC2] = 1.0;
                k
            }),
        )
    };
    let out = match variant {
        BalanceVariant::Regularized => {
            let w = match weight {
                WeightKind::Regularized(w) => w,
                _ => return Err(Error::invalid("the regularized inequality needs a solution computed with psi_eps^alpha")),
            };
            let eps = w.epsilon;
            let pw = p.remainder_power as f64;
            let grad = move |r: f64| {
                let (psi, d) = (w.psi_radial(r), w.psi_prime(r));
                let mut k = [0.0; FIELDS];
                k[GRAD2] = psi.powf(alpha) * d * d;
                k
            };
            let zero = move |r: f64| {
                let (psi, d) = (w.psi_radial(r), w.psi_prime(r));
                mass(psi.powf(2.0 - alpha) * d.powi(4))
            };
            (
                Family::Xi(Some(w)),
                vec![
                    vol("gradient", Side::Lhs, (0.0, l), full, 1.0, ln_s, Box::new(grad)),
                    vol("zero_order", Side::Lhs, (0.0, l), full, 3.0, 3.0 * ln_s, Box::new(zero)),
                    source(full),
                    flux(ln_s + alpha * l.ln()),
                    vol("ball_cubic", Side::Rhs, (0.0, eps), full, 3.0, pw * ln_s, Box::new(|_| mass(1.0))),
                    vol(
                        "ball_linear",
                        Side::Rhs,
                        (0.0, eps),
                        full,
                        1.0,
                        (alpha - 2.0) * eps.ln() + pw * ln_s,
                        Box::new(|_| mass(1.0)),
                    ),
                ],
            )
        }
        BalanceVariant::Limit => (
            Family::Xi(None),
            vec![
                vol(
                    "gradient",
                    Side::Lhs,
                    (rr, l),
                    full,
                    1.0,
                    ln_s,
                    Box::new(move |r: f64| {
                        let mut k = [0.0; FIELDS];
                        k[GRAD2] = r.powf(alpha);
                        k
                    }),
                ),
                vol("zero_order", Side::Lhs, (0.0, l), full, 3.0, 3.0 * ln_s, Box::new(move |r: f64| mass(r.powf(2.0 - alpha)))),
                source(full),
                flux(ln_s + alpha * l.ln()),
            ],
        ),
        BalanceVariant::Interior | BalanceVariant::CutoffWeighted => {
            let weighted = variant == BalanceVariant::CutoffWeighted;
            let (family, lhs_window, j1, j3) =
                if weighted { (Family::Xi(None), full, 1.0, 3.0) } else { (Family::None, window, 0.0, 0.0) };
            let mut terms = vec![
                vol(
                    "gradient",
                    Side::Lhs,
                    (rr, 4.0 * rr),
                    lhs_window,
                    j1,
                    0.0,
                    Box::new(move |r: f64| cut_gradient(zeta.radial(r), r.powf(alpha))),
                ),
                vol(
                    "zero_order",
                    Side::Lhs,
                    (0.0, 4.0 * rr),
                    lhs_window,
                    j3,
                    0.0,
                    Box::new(move |r: f64| mass(r.powf(2.0 - alpha) * zeta.radial(r)[0].powi(2))),
                ),
            ];
            let cut_mass = move |r: f64| mass(zeta.radial(r)[0].powi(2));
            if weighted {
                terms.push(vol("band", Side::Rhs, (3.0 * rr, 6.0 * rr), full, 0.0, 0.0, Box::new(cut_mass)));
                terms.push(vol("band_theta", Side::Rhs, (3.0 * rr, 6.0 * rr), full, 1.25, 0.0, Box::new(cut_mass)));
            } else {
                terms.push(vol("observation", Side::Rhs, (3.0 * rr, 6.0 * rr), full, 0.0, 0.0, Box::new(cut_mass)));
            }
            (family, terms)
        }
        BalanceVariant::Exterior => (
            Family::None,
            vec![
                vol(
                    "gradient",
                    Side::Lhs,
                    (5.0 * rr, l),
                    window,
                    0.0,
                    0.0,
                    Box::new(move |r: f64| {
                        let mut k = [0.0; FIELDS];
                        k[GRAD2] = r.powf(alpha);
                        k
                    }),
                ),
                vol("zero_order", Side::Lhs, (5.0 * rr, l), window, 0.0, 0.0, Box::new(move |r: f64| mass(r.powf(2.0 - alpha)))),
                vol("observation", Side::Rhs, (3.0 * rr, 6.0 * rr), full, 0.0, 0.0, Box::new(|_| mass(1.0))),
            ],
        ),
        BalanceVariant::Annulus => {
            let eb = FursikovWeight::new(rr, l, p.eta_bar_exponent)?;
            let cube = 3.0 * ln_s + 4.0 * ln_l;
            let mut terms = vec![
                Term {
                    xi_bar_power: 1.0,
                    ..vol(
                        "gradient",
                        Side::Lhs,
                        (rr, l),
                        full,
                        1.0,
                        ln_s + 2.0 * ln_l,
                        Box::new(move |r: f64| cut_gradient(kappa.radial(r), 1.0)),
                    )
                },
                Term {
                    xi_bar_power: 3.0,
                    ..vol("zero_order", Side::Lhs, (rr, l), full, 3.0, cube, Box::new(move |r: f64| mass(kappa.radial(r)[0].powi(2))))
                },
            ];
            // g = 2 w kappa' d_r u + u (w' kappa' + w (kappa'' + kappa' / r))
            terms.push(vol(
                "source",
                Side::Rhs,
                (rr, l),
                full,
                0.0,
                0.0,
                Box::new(move |r: f64| {
                    let [_, k1, k2] = kappa.radial(r);
                    let w = weight.radial(r);
                    let a = 2.0 * w * k1;
                    let b = weight.radial_derivative(r) * k1 + w * (k2 + k1 / r);
                    let mut k = [0.0; FIELDS];
                    k[RAD2] = a * a;
                    k[URAD] = 2.0 * a * b;
                    k[U2] = b * b;
                    k
                }),
            ));
            terms.push(Term {
                xi_bar_power: 3.0,
                ..vol(
                    "observation",
                    Side::Rhs,
                    (3.0 * rr, 6.0 * rr),
                    full,
                    3.0,
                    cube,
                    Box::new(move |r: f64| mass(kappa.radial(r)[0].powi(2))),
                )
            });
            (Family::SigmaBar(eb), terms)
        }
        BalanceVariant::Caccioppoli => (
            Family::Xi(None),
            vec![
                vol(
                    "gradient",
                    Side::Lhs,
                    (4.0 * rr, 5.0 * rr),
                    full,
                    0.0,
                    0.0,
                    Box::new(|_| {
                        let mut k = [0.0; FIELDS];
                        k[GRAD2] = 1.0;
                        k
                    }),
                ),
                vol("band", Side::Rhs, (3.0 * rr, 6.0 * rr), full, 0.0, 0.0, Box::new(|_| mass(1.0))),
                vol("band_theta", Side::Rhs, (3.0 * rr, 6.0 * rr), full, 1.25, 0.0, Box::new(|_| mass(1.0))),
            ],
        ),
    };
    Ok(out)
}

fn to_log10(ln: Option<f64>) -> Option<f64> {
    ln.map(|v| v / LN_10)
}

/// Evaluate both sides of `variant` for a tabulated solution.
pub fn carleman_balance(prep: &PreparedSolution, params: &CarlemanParams, variant: BalanceVariant) -> Result<CarlemanBalance> {
    params.validate()?;
    let geo = prep.geometry;
    if (geo.outer_radius - params.outer_radius).abs() > 1e-12 * geo.outer_radius
        || (geo.base_length - params.base_length).abs() > 1e-12 * geo.base_length
    {
        return Err(Error::invalid("parameters and solution use different geometries"));
    }
    if (prep.grid.horizon - params.horizon).abs() > 1e-12 * params.horizon {
        return Err(Error::invalid("parameters and solution use different horizons"));
    }
    if let Some(a) = prep.weight.alpha() {
        if (a - params.alpha).abs() > 1e-12 {
            return Err(Error::invalid(format!("solution weight has alpha = {a}, parameters alpha = {}", params.alpha)));
        }
    }
    if variant.needs_flux() && !prep.has_flux {
        return Err(Error::invalid(format!("the {} inequality needs the boundary flux", variant.name())));
    }
    let (family, terms) = build_terms(variant, params, prep.weight)?;
    for t in &terms {
        if let TermKind::Volume(_) = t.kind {
            let rings = prep.rings_in(t.band.0, t.band.1);
            if rings < 3 {
                return Err(Error::Unresolved(format!(
                    "band {:.4}..{:.4} of term `{}` contains {rings} mesh circles, need 3",
                    t.band.0,
                    t.band.1,
                    t.name
                )));
            }
        }
    }
    let weighting = Weighting::new(family, params);
    let clock = Clock::new(params.horizon);
    let eval = Evaluator { prep, params: *params, clock, weighting };
    let mut lhs_terms = Vec::new();
    let mut rhs_terms = Vec::new();
    let mut lhs = LogSum::zero();
    let mut rhs = Signed::default();
    let mut banded = false;
    for t in &terms {
        let v = eval.term(t)?;
        banded |= weighting.weighted() || t.theta_power != 0.0;
        let (ln, negative) = v.value();
        let record = TermValue { name: t.name.to_string(), side: t.side, log10: to_log10(ln), negative };
        match t.side {
            Side::Lhs => {
                lhs.add(v.pos);
                lhs_terms.push(record);
            }
            Side::Rhs => {
                rhs.pos.add(v.pos);
                rhs.neg.add(v.neg);
                rhs_terms.push(record);
            }
        }
    }
    let log_scale = -clock.th_min * weighting.k_min;
    let lhs_ln = if lhs.is_zero() { None } else { Some(lhs.ln()) };
    let (rhs_ln, rhs_negative) = rhs.value();
    let rhs_positive = rhs_ln.filter(|_| !rhs_negative);
    let log10_implied_c = match (lhs_ln, rhs_positive) {
        (Some(a), Some(b)) => Some((a - b) / LN_10),
        _ => None,
    };
    let implied_c = match (lhs_ln, log10_implied_c) {
        (None, _) => Some(0.0),
        (Some(_), Some(l)) => Some(10f64.powf(l)).filter(|v| v.is_finite()),
        _ => None,
    };
    let (lo, hi) = params.kept_band();
    Ok(CarlemanBalance {
        variant,
        params: *params,
        lhs_terms,
        rhs_terms,
        log10_scale: log_scale / LN_10,
        log10_lhs: to_log10(lhs_ln),
        log10_rhs: to_log10(rhs_ln).map(|v| if rhs_negative { f64::NAN } else { v }).filter(|v| v.is_finite()),
        log10_implied_c,
        implied_c,
        excluded_band: banded.then_some([lo, hi]),
    })
}
