//! Active set-invariance filters for scalar controls.
//!
//! Every program solved here has one scalar decision variable, one constraint
//! of degree at most two and box bounds, so the minimal-norm projection is
//! computed in closed form. A uniform grid search is kept as a fallback for
//! numerically degenerate inputs and as the reference the tests compare to.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::barrier::{self, BarrierSpec, SdeModel, DEFAULT_BOUNDARY_EPS};
use crate::common::StrengtheningFn;
use crate::error::Error;

pub const DEFAULT_GRID_RESOLUTION: usize = 10_000;

/// `slope * u + intercept >= 0`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineConstraint {
    pub slope: f64,
    pub intercept: f64,
}

impl AffineConstraint {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        self.slope * u + self.intercept
    }
}

/// `a2 * u^2 + a1 * u + a0 >= 0`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticConstraint {
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
}

impl QuadraticConstraint {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        (self.a2 * u + self.a1) * u + self.a0
    }

    pub fn is_affine(&self) -> bool {
        self.a2 == 0.0
    }

    pub fn as_affine(&self) -> Option<AffineConstraint> {
        self.is_affine().then_some(AffineConstraint { slope: self.a1, intercept: self.a0 })
    }
}

impl From<AffineConstraint> for QuadraticConstraint {
    fn from(c: AffineConstraint) -> Self {
        QuadraticConstraint { a2: 0.0, a1: c.slope, a0: c.intercept }
    }
}

/// Closed interval; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const ALL: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, u: f64) -> bool {
        self.lo <= u && u <= self.hi
    }

    #[inline]
    pub fn clamp(&self, u: f64) -> f64 {
        u.max(self.lo).min(self.hi)
    }

    fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }
}

/// Feasible set of a scalar constraint of degree at most two: empty, one
/// interval, or two disjoint intervals (convex quadratics).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FeasibleSet {
    Empty,
    One(Interval),
    Two(Interval, Interval),
}

impl FeasibleSet {
    pub fn is_empty(&self) -> bool {
        matches!(self, FeasibleSet::Empty)
    }

    pub fn contains(&self, u: f64) -> bool {
        match self {
            FeasibleSet::Empty => false,
            FeasibleSet::One(a) => a.contains(u),
            FeasibleSet::Two(a, b) => a.contains(u) || b.contains(u),
        }
    }

    pub fn intersect(&self, bounds: &Interval) -> FeasibleSet {
        match self {
            FeasibleSet::Empty => FeasibleSet::Empty,
            FeasibleSet::One(a) => a.intersect(bounds).map_or(FeasibleSet::Empty, FeasibleSet::One),
            FeasibleSet::Two(a, b) => match (a.intersect(bounds), b.intersect(bounds)) {
                (Some(a), Some(b)) => FeasibleSet::Two(a, b),
                (Some(a), None) | (None, Some(a)) => FeasibleSet::One(a),
                (None, None) => FeasibleSet::Empty,
            },
        }
    }

    /// Nearest point to `u`; `None` when empty.
    pub fn project(&self, u: f64) -> Option<f64> {
        match self {
            FeasibleSet::Empty => None,
            FeasibleSet::One(a) => Some(a.clamp(u)),
            FeasibleSet::Two(a, b) => {
                let (pa, pb) = (a.clamp(u), b.clamp(u));
                Some(if (pa - u).abs() <= (pb - u).abs() { pa } else { pb })
            }
        }
    }
}

/// Real roots in ascending order, computed without cancellation.
fn quadratic_roots(a2: f64, a1: f64, a0: f64) -> Option<(f64, f64)> {
    let disc = a1 * a1 - 4.0 * a2 * a0;
    if disc < 0.0 || disc.is_nan() {
        return None;
    }
    let q = -0.5 * (a1 + a1.signum() * disc.sqrt());
    if q == 0.0 {
        // a1 == 0 and a0 == 0: double root at the origin
        return Some((0.0, 0.0));
    }
    let (r1, r2) = (q / a2, a0 / q);
    Some(if r1 <= r2 { (r1, r2) } else { (r2, r1) })
}

/// Set of `u` satisfying `q(u) >= 0`, before intersecting with bounds.
pub fn feasible_interval(q: &QuadraticConstraint) -> FeasibleSet {
    if q.a2 == 0.0 {
        let (slope, intercept) = (q.a1, q.a0);
        return if slope > 0.0 {
            FeasibleSet::One(Interval::new(-intercept / slope, f64::INFINITY))
        } else if slope < 0.0 {
            FeasibleSet::One(Interval::new(f64::NEG_INFINITY, -intercept / slope))
        } else if intercept >= 0.0 {
            FeasibleSet::One(Interval::ALL)
        } else {
            FeasibleSet::Empty
        };
    }
    match quadratic_roots(q.a2, q.a1, q.a0) {
        None if q.a2 < 0.0 => FeasibleSet::Empty,
        None => FeasibleSet::One(Interval::ALL),
        Some((lo, hi)) if q.a2 < 0.0 => FeasibleSet::One(Interval::new(lo, hi)),
        Some((lo, hi)) => {
            FeasibleSet::Two(Interval::new(f64::NEG_INFINITY, lo), Interval::new(hi, f64::INFINITY))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStatus {
    Ok,
    ClampedToBounds,
    InfeasibleBestEffort,
    BoundaryError,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub u_des: f64,
    pub u_act: f64,
    pub intervened: bool,
    pub margin_at_u_act: f64,
    /// Wall time of the call, milliseconds.
    pub solve_ms: f64,
    pub status: FilterStatus,
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Maximiser of `q` over `bounds`; used when nothing is feasible.
fn best_effort(q: &QuadraticConstraint, bounds: &Interval, u_des: f64) -> f64 {
    let mut cands = [bounds.lo, bounds.hi, bounds.clamp(u_des)];
    if q.a2 < 0.0 {
        cands[2] = bounds.clamp(-q.a1 / (2.0 * q.a2));
    }
    let mut best = bounds.clamp(u_des);
    let mut best_val = q.eval(best);
    for &u in cands.iter().filter(|u| u.is_finite()) {
        let v = q.eval(u);
        if v > best_val {
            best = u;
            best_val = v;
        }
    }
    best
}

/// Untimed core shared by both filters.
fn project(u_des: f64, q: &QuadraticConstraint, bounds: &Interval, grid_resolution: usize) -> FilterOutcome {
    let set = feasible_interval(q).intersect(bounds);
    let (u_act, status) = match set.project(u_des) {
        Some(u) if u.is_finite() => {
            let clamped = bounds.clamp(u_des);
            let status = if u == clamped && clamped != u_des {
                FilterStatus::ClampedToBounds
            } else {
                FilterStatus::Ok
            };
            (u, status)
        }
        Some(_) => match grid_project(u_des, q, bounds, grid_resolution) {
            Some(u) => (u, FilterStatus::Ok),
            None => (best_effort(q, bounds, u_des), FilterStatus::InfeasibleBestEffort),
        },
        None => (best_effort(q, bounds, u_des), FilterStatus::InfeasibleBestEffort),
    };
    FilterOutcome {
        u_des,
        u_act,
        intervened: u_act != u_des,
        margin_at_u_act: q.eval(u_act),
        solve_ms: 0.0,
        status,
    }
}

/// Minimal-norm filter for a constraint affine in `u`.
pub fn qp_filter(u_des: f64, c: &AffineConstraint, bounds: (f64, f64)) -> FilterOutcome {
    let start = Instant::now();
    let q = QuadraticConstraint::from(*c);
    let mut out = project(u_des, &q, &Interval::new(bounds.0, bounds.1), DEFAULT_GRID_RESOLUTION);
    out.solve_ms = elapsed_ms(start);
    out
}

/// Minimal-norm filter for a constraint quadratic in `u`.
pub fn nlp_filter(u_des: f64, q: &QuadraticConstraint, bounds: (f64, f64)) -> FilterOutcome {
    nlp_filter_with(u_des, q, bounds, DEFAULT_GRID_RESOLUTION)
}

pub fn nlp_filter_with(
    u_des: f64,
    q: &QuadraticConstraint,
    bounds: (f64, f64),
    grid_resolution: usize,
) -> FilterOutcome {
    let start = Instant::now();
    let mut out = project(u_des, q, &Interval::new(bounds.0, bounds.1), grid_resolution);
    out.solve_ms = elapsed_ms(start);
    out
}

/// Brute-force projection over `resolution` evenly spaced points of the
/// (finite) bounds. `None` when no grid point is feasible.
pub fn grid_project(
    u_des: f64,
    q: &QuadraticConstraint,
    bounds: &Interval,
    resolution: usize,
) -> Option<f64> {
    if !bounds.lo.is_finite() || !bounds.hi.is_finite() || resolution < 2 {
        return None;
    }
    let step = (bounds.hi - bounds.lo) / (resolution - 1) as f64;
    (0..resolution)
        .map(|i| bounds.lo + i as f64 * step)
        .filter(|&u| q.eval(u) >= 0.0)
        .min_by(|a, b| (a - u_des).abs().total_cmp(&(b - u_des).abs()))
}

/// Which safety condition the filter enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    Off,
    Cbf,
    Scbf,
    /// Superseded stochastic condition, for comparison runs only.
    ScbfLegacy,
}

impl FilterMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FilterMode::Off => "off",
            FilterMode::Cbf => "cbf",
            FilterMode::Scbf => "scbf",
            FilterMode::ScbfLegacy => "scbf_legacy",
        }
    }
}

impl std::str::FromStr for FilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "off" => Ok(FilterMode::Off),
            "cbf" => Ok(FilterMode::Cbf),
            "scbf" => Ok(FilterMode::Scbf),
            "scbf_legacy" => Ok(FilterMode::ScbfLegacy),
            other => Err(Error::Config(format!(
                "unknown filter mode '{other}' (expected off, cbf, scbf or scbf_legacy)"
            ))),
        }
    }
}

/// Everything `filter_step` needs besides the state and desired control.
#[derive(Debug, Clone, Copy)]
pub struct FilterContext<'a, M: SdeModel + ?Sized> {
    pub model: &'a M,
    pub barrier: BarrierSpec,
    pub alpha: StrengtheningFn,
    pub mode: FilterMode,
    pub boundary_eps: f64,
    pub grid_resolution: usize,
}

impl<'a, M: SdeModel + ?Sized> FilterContext<'a, M> {
    pub fn new(model: &'a M, barrier: BarrierSpec, alpha: StrengtheningFn, mode: FilterMode) -> Self {
        Self {
            model,
            barrier,
            alpha,
            mode,
            boundary_eps: DEFAULT_BOUNDARY_EPS,
            grid_resolution: DEFAULT_GRID_RESOLUTION,
        }
    }

    /// Constraint the active mode enforces at `x`.
    pub fn constraint(&self, x: f64) -> crate::error::Result<QuadraticConstraint> {
        let (b, m, a) = (&self.barrier, self.model, &self.alpha);
        match self.mode {
            FilterMode::Cbf => barrier::deterministic_constraint(b, m, a, x),
            FilterMode::Scbf => barrier::scbf_constraint(b, m, a, x, self.boundary_eps),
            FilterMode::ScbfLegacy => Ok(barrier::legacy_constraint(b, m, a, x)),
            FilterMode::Off => self.reference_constraint(x),
        }
    }

    /// Condition reported as the margin when filtering is off.
    fn reference_constraint(&self, x: f64) -> crate::error::Result<QuadraticConstraint> {
        let (b, m, a) = (&self.barrier, self.model, &self.alpha);
        if m.is_deterministic() {
            barrier::deterministic_constraint(b, m, a, x)
        } else {
            barrier::scbf_constraint(b, m, a, x, self.boundary_eps)
        }
    }
}

/// Assemble the constraint for the active mode at `x` and filter `u_des`.
///
/// Contract violations (deterministic condition on a stochastic model) are
/// returned as errors. A state at or beyond the stochastic boundary is not an
/// error here: the outcome carries `FilterStatus::BoundaryError` and the
/// control that maximises the condition with `h` floored to `boundary_eps`.
pub fn filter_step<M: SdeModel + ?Sized>(
    ctx: &FilterContext<'_, M>,
    x: f64,
    _t: f64,
    u_des: f64,
) -> crate::error::Result<FilterOutcome> {
    let start = Instant::now();
    let (lo, hi) = ctx.model.control_bounds();
    let bounds = Interval::new(lo, hi);

    if ctx.mode == FilterMode::Off {
        let margin = match ctx.reference_constraint(x) {
            Ok(q) => q.eval(u_des),
            Err(Error::Boundary { .. }) => f64::NAN,
            Err(e) => return Err(e),
        };
        return Ok(FilterOutcome {
            u_des,
            u_act: u_des,
            intervened: false,
            margin_at_u_act: margin,
            solve_ms: elapsed_ms(start),
            status: FilterStatus::Ok,
        });
    }

    let mut out = match ctx.constraint(x) {
        Ok(q) => project(u_des, &q, &bounds, ctx.grid_resolution),
        Err(Error::Boundary { .. }) => {
            let q = barrier::scbf_constraint_at(&ctx.barrier, ctx.model, &ctx.alpha, x, ctx.boundary_eps);
            let mut o = project(u_des, &q, &bounds, ctx.grid_resolution);
            o.status = FilterStatus::BoundaryError;
            o.margin_at_u_act = f64::NAN;
            o
        }
        Err(e) => return Err(e),
    };
    out.solve_ms = elapsed_ms(start);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{AdvertisingParams, Controller, PortfolioParams, StochAdvertisingParams};
    use proptest::prelude::*;

    fn advertising_constraint(x: f64, beta: f64, eta: f64, x_max: f64) -> AffineConstraint {
        // hand expansion: 2 beta x^2 - 2 x (1 - x) u + eta (x_max^2 - x^2)
        AffineConstraint {
            slope: -2.0 * x * (1.0 - x),
            intercept: 2.0 * beta * x * x + eta * (x_max * x_max - x * x),
        }
    }

    fn portfolio_constraint() -> QuadraticConstraint {
        let x: f64 = 550.0;
        let h = x * x - 500.0f64 * 500.0;
        QuadraticConstraint {
            a2: 0.11f64.powi(2) * (1.0 - 4.0 * x * x / h),
            a1: 2.0 * x * 0.14,
            a0: 2.0 * x * 0.02 * x + h * h * h / 1e16,
        }
    }

    /// Oracle: nearest feasible grid point, scanning densely.
    fn dense_oracle(u_des: f64, q: &QuadraticConstraint, lo: f64, hi: f64, n: usize) -> Option<f64> {
        grid_project(u_des, q, &Interval::new(lo, hi), n)
    }

    #[test]
    fn far_from_boundary_passes_through() {
        let c = advertising_constraint(0.1, 0.1, 10.0, 0.6);
        let out = qp_filter(0.3, &c, (0.0, 2.0));
        assert_eq!(out.u_act, 0.3);
        assert!(!out.intervened);
        assert_eq!(out.status, FilterStatus::Ok);
    }

    #[test]
    fn projects_onto_the_constraint_boundary() {
        let c = advertising_constraint(0.5, 0.1, 10.0, 0.6);
        let out = qp_filter(3.0, &c, (0.0, 10.0));
        assert!((out.u_act - 2.3).abs() < 1e-12, "{}", out.u_act);
        assert!(out.intervened);
        let oracle = dense_oracle(3.0, &c.into(), 0.0, 10.0, 10_000_001).unwrap();
        assert!((out.u_act - oracle).abs() < 1e-6);
        assert!(out.margin_at_u_act.abs() < 1e-12);
    }

    #[test]
    fn zero_slope_feasible_is_identity() {
        let c = AffineConstraint { slope: 0.0, intercept: 1.0 };
        for &u in &[-3.0, 0.0, 7.5] {
            let out = qp_filter(u, &c, (-10.0, 10.0));
            assert_eq!(out.u_act, u);
            assert!(!out.intervened);
        }
    }

    #[test]
    fn infeasible_affine_returns_best_endpoint() {
        // slope < 0 and the boundary root lies below u_lo
        let c = AffineConstraint { slope: -1.0, intercept: -5.0 };
        let out = qp_filter(1.0, &c, (0.0, 2.0));
        assert_eq!(out.status, FilterStatus::InfeasibleBestEffort);
        assert_eq!(out.u_act, 0.0);
        let c = AffineConstraint { slope: 0.0, intercept: -1.0 };
        let out = qp_filter(1.0, &c, (0.0, 2.0));
        assert_eq!(out.status, FilterStatus::InfeasibleBestEffort);
    }

    #[test]
    fn clamped_to_bounds_status() {
        let c = AffineConstraint { slope: 0.0, intercept: 1.0 };
        let out = qp_filter(5.0, &c, (0.0, 2.0));
        assert_eq!(out.u_act, 2.0);
        assert_eq!(out.status, FilterStatus::ClampedToBounds);
    }

    #[test]
    fn portfolio_interval() {
        let q = portfolio_constraint();
        assert!((q.a2 + 0.266_776).abs() < 1e-5, "{}", q.a2);
        assert!((q.a0 - 12_100.014_47).abs() < 1e-4);
        let FeasibleSet::One(iv) = feasible_interval(&q) else { panic!("expected one interval") };
        assert!((iv.lo + 70.07).abs() < 0.05, "{}", iv.lo);
        assert!((iv.hi - 647.33).abs() < 0.05, "{}", iv.hi);
        // sign-check oracle on a 1e6-point grid over [-1000, 1000]
        let n = 1_000_000;
        let h = 2000.0 / (n - 1) as f64;
        let mut first = None;
        let mut last = None;
        for i in 0..n {
            let u = -1000.0 + i as f64 * h;
            if q.eval(u) >= 0.0 {
                first.get_or_insert(u);
                last = Some(u);
            }
        }
        assert!((first.unwrap() - iv.lo).abs() <= h);
        assert!((last.unwrap() - iv.hi).abs() <= h);
    }

    #[test]
    fn concave_with_negative_discriminant_is_empty() {
        let q = QuadraticConstraint { a2: -1.0, a1: 0.0, a0: -1.0 };
        assert_eq!(feasible_interval(&q), FeasibleSet::Empty);
    }

    #[test]
    fn double_root_at_origin() {
        let q = QuadraticConstraint { a2: -1.0, a1: 0.0, a0: 0.0 };
        assert_eq!(feasible_interval(&q), FeasibleSet::One(Interval::new(0.0, 0.0)));
    }

    #[test]
    fn convex_quadratic_has_two_pieces() {
        // (u - 1)(u - 3) >= 0
        let q = QuadraticConstraint { a2: 1.0, a1: -4.0, a0: 3.0 };
        let s = feasible_interval(&q);
        assert!(s.contains(0.0) && s.contains(1.0) && s.contains(3.0) && s.contains(4.0));
        assert!(!s.contains(2.0));
        let out = nlp_filter(2.2, &q, (-10.0, 10.0));
        assert!((out.u_act - 3.0).abs() < 1e-12);
        let out = nlp_filter(1.8, &q, (-10.0, 10.0));
        assert!((out.u_act - 1.0).abs() < 1e-12);
        // bounds cut one piece away
        let out = nlp_filter(1.8, &q, (1.5, 10.0));
        assert!((out.u_act - 3.0).abs() < 1e-12);
    }

    #[test]
    fn nlp_examples() {
        let q = portfolio_constraint();
        let out = nlp_filter(5.2, &q, (-1e4, 1e4));
        assert_eq!(out.u_act, 5.2);
        assert!(!out.intervened);
        let out = nlp_filter(700.0, &q, (-1e4, 1e4));
        assert!((out.u_act - 647.33).abs() < 0.05);
        let oracle = dense_oracle(700.0, &q, 0.0, 1000.0, 1_000_001).unwrap();
        assert!((out.u_act - oracle).abs() <= 1e-3 + 1e-9);
        assert!(out.margin_at_u_act >= -1e-9);
    }

    #[test]
    fn nlp_empty_intersection_is_best_effort() {
        let q = portfolio_constraint();
        let out = nlp_filter(2000.0, &q, (1000.0, 3000.0));
        assert_eq!(out.status, FilterStatus::InfeasibleBestEffort);
        // concave margin: vertex lies below the bounds, so the lower end wins
        assert_eq!(out.u_act, 1000.0);
        let q = QuadraticConstraint { a2: -1.0, a1: 0.0, a0: -1.0 };
        let out = nlp_filter(3.0, &q, (-2.0, 5.0));
        assert_eq!(out.status, FilterStatus::InfeasibleBestEffort);
        assert_eq!(out.u_act, 0.0);
    }

    #[test]
    fn filter_mode_parsing() {
        assert_eq!("scbf_legacy".parse::<FilterMode>().unwrap(), FilterMode::ScbfLegacy);
        assert!("qp".parse::<FilterMode>().is_err());
    }

    #[test]
    fn filter_step_deterministic_far_from_boundary() {
        let p = AdvertisingParams::default();
        let m = p.model();
        let ctx = FilterContext::new(&m, p.barrier().unwrap(), p.alpha(), FilterMode::Cbf);
        let u = p.controller().unwrap().desired(0.0, 0.05);
        let out = filter_step(&ctx, 0.05, 0.0, u).unwrap();
        assert_eq!(out.u_act, u);
        assert_eq!(out.status, FilterStatus::Ok);
    }

    #[test]
    fn filter_step_rejects_cbf_on_stochastic_model() {
        let p = StochAdvertisingParams::default();
        let m = p.model();
        let ctx = FilterContext::new(&m, p.barrier().unwrap(), p.alpha(), FilterMode::Cbf);
        assert!(matches!(filter_step(&ctx, 0.1, 0.0, 0.5), Err(Error::Contract(_))));
    }

    #[test]
    fn filter_step_stochastic_advertising_clamps_near_cap() {
        let p = StochAdvertisingParams::default();
        let m = p.model();
        let ctx = FilterContext::new(&m, p.barrier().unwrap(), p.alpha(), FilterMode::Scbf);
        let c = p.controller();
        let x = 0.37;
        let out = filter_step(&ctx, x, 0.0, c.desired(0.0, x)).unwrap();
        assert!(out.intervened);
        assert!(out.u_act < out.u_des);
        assert!(out.margin_at_u_act.abs() < 1e-12);
        let far = filter_step(&ctx, 0.05, 0.0, c.desired(0.0, 0.05)).unwrap();
        assert!(!far.intervened);
    }

    #[test]
    fn filter_step_boundary_fallback() {
        let p = StochAdvertisingParams::default();
        let m = p.model();
        let ctx = FilterContext::new(&m, p.barrier().unwrap(), p.alpha(), FilterMode::Scbf);
        let out = filter_step(&ctx, 0.401, 0.0, 0.5).unwrap();
        assert_eq!(out.status, FilterStatus::BoundaryError);
        // pushes the share down as hard as the bounds allow
        assert_eq!(out.u_act, m.control_bounds().0);
        assert!(out.margin_at_u_act.is_nan());
    }

    #[test]
    fn filter_step_portfolio_after_withdrawal() {
        // low risk aversion so the desired position is large
        let p = PortfolioParams { gamma_risk: 0.005, ..PortfolioParams::default() };
        let m = p.model();
        let ctx = FilterContext::new(&m, p.barrier().unwrap(), p.alpha(), FilterMode::Scbf);
        let c = p.controller();
        let x = 1.1 * p.x_min;
        let u_des = c.desired(15.0, x);
        let out = filter_step(&ctx, x, 15.0, u_des).unwrap();
        assert!(out.u_act < 0.5 * out.u_des, "{} vs {}", out.u_act, out.u_des);
        assert!(out.margin_at_u_act >= -1e-9);
    }

    #[test]
    fn filter_step_off_reports_margin_without_filtering() {
        let p = PortfolioParams::default();
        let m = p.model();
        let ctx = FilterContext::new(&m, p.barrier().unwrap(), p.alpha(), FilterMode::Off);
        let out = filter_step(&ctx, 550.0, 0.0, 5000.0).unwrap();
        assert_eq!(out.u_act, 5000.0);
        assert!(!out.intervened);
        assert!(out.margin_at_u_act < 0.0);
    }

    fn arb_affine() -> impl Strategy<Value = (f64, AffineConstraint, f64, f64)> {
        (-5.0f64..5.0, -3.0f64..3.0, -3.0f64..3.0, -4.0f64..0.0, 0.0f64..4.0)
            .prop_map(|(u, s, i, lo, hi)| (u, AffineConstraint { slope: s, intercept: i }, lo, hi))
    }

    proptest! {
        #[test]
        fn affine_projection_is_minimal((u_des, c, lo, hi) in arb_affine()) {
            let out = qp_filter(u_des, &c, (lo, hi));
            if out.status != FilterStatus::InfeasibleBestEffort {
                prop_assert!(out.margin_at_u_act >= -1e-9);
                prop_assert!(lo <= out.u_act && out.u_act <= hi);
                let cell = (hi - lo) / 9_999.0;
                if let Some(o) = dense_oracle(u_des, &c.into(), lo, hi, 10_000) {
                    prop_assert!((out.u_act - u_des).abs() <= (o - u_des).abs() + 1e-12);
                    prop_assert!((out.u_act - o).abs() <= cell + 1e-12);
                }
            } else {
                prop_assert!(dense_oracle(u_des, &c.into(), lo, hi, 10_000).is_none());
            }
        }

        #[test]
        fn quadratic_projection_is_minimal(
            u_des in -20.0f64..20.0, a2 in -2.0f64..2.0, a1 in -5.0f64..5.0, a0 in -5.0f64..5.0,
        ) {
            let q = QuadraticConstraint { a2, a1, a0 };
            let (lo, hi) = (-10.0, 10.0);
            let out = nlp_filter(u_des, &q, (lo, hi));
            let cell = (hi - lo) / 9_999.0;
            match dense_oracle(u_des, &q, lo, hi, 10_000) {
                Some(o) => {
                    prop_assert_ne!(out.status, FilterStatus::InfeasibleBestEffort);
                    prop_assert!(out.margin_at_u_act >= -1e-9);
                    prop_assert!((out.u_act - u_des).abs() <= (o - u_des).abs() + 1e-9);
                }
                None => {
                    // a feasible sliver thinner than a grid cell is possible
                    if out.status != FilterStatus::InfeasibleBestEffort {
                        let s = feasible_interval(&q).intersect(&Interval::new(lo, hi));
                        prop_assert!(s.contains(out.u_act));
                        let _ = cell;
                    }
                }
            }
        }

        #[test]
        fn feasible_inputs_are_unchanged(u in -10.0f64..10.0, a1 in -5.0f64..5.0, a0 in 0.0f64..5.0) {
            let c = AffineConstraint { slope: a1, intercept: a0 - a1 * u };
            // c(u) = a0 >= 0, so u is feasible
            let out = qp_filter(u, &c, (-10.0, 10.0));
            prop_assert_eq!(out.u_act, u);
            prop_assert!(!out.intervened);
        }

        #[test]
        fn larger_intercept_never_lowers_u(u in -5.0f64..5.0, s in -3.0f64..-0.01, i in -3.0f64..3.0, d in 0.0f64..3.0) {
            let a = qp_filter(u, &AffineConstraint { slope: s, intercept: i }, (-5.0, 5.0));
            let b = qp_filter(u, &AffineConstraint { slope: s, intercept: i + d }, (-5.0, 5.0));
            prop_assert!(b.u_act >= a.u_act);
        }
    }
}
