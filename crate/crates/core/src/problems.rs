//! The benchmark problems: optimal advertising (deterministic), stochastic
//! optimal advertising, and Merton portfolio selection with an emergency-fund
//! floor. Each provides its dynamics, barrier, strengthening function and
//! desired (unfiltered) controller.

use serde::{Deserialize, Serialize};

use crate::barrier::{make_h_oa, make_h_po, BarrierSpec, SdeModel};
use crate::common::{StrengtheningFn, Trajectory};
use crate::error::{Error, Result};
use crate::filter::FilterMode;
use crate::sde::ScheduledEvent;

/// Desired control as a function of time and state.
pub trait Controller {
    fn desired(&self, t: f64, x: f64) -> f64;
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Domain(msg()))
    }
}

// ---------------------------------------------------------------------------
// Deterministic advertising

/// Market-share dynamics `x' = (1 - x) a^kappa - beta x`, written in the
/// transformed control `u = a^kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdvertisingParams {
    pub beta: f64,
    pub kappa: f64,
    pub cost_c: f64,
    pub discount_r: f64,
    pub a_max: f64,
    pub x_max: f64,
    pub eta: f64,
    pub x0: f64,
}

impl Default for AdvertisingParams {
    fn default() -> Self {
        Self {
            beta: 0.1,
            kappa: 0.5,
            cost_c: 0.25,
            discount_r: 0.05,
            a_max: 4.0,
            x_max: 0.6,
            eta: 10.0,
            x0: 0.02,
        }
    }
}

impl AdvertisingParams {
    /// `(r + beta) / c`
    pub fn gamma_adv(&self) -> f64 {
        (self.discount_r + self.beta) / self.cost_c
    }

    pub fn control_bounds(&self) -> (f64, f64) {
        (0.0, self.a_max.powf(self.kappa))
    }

    pub fn validate(&self) -> Result<()> {
        check(self.beta > 0.0, || format!("beta must be positive, got {}", self.beta))?;
        check(self.kappa > 0.0 && self.kappa < 1.0, || {
            format!("kappa must lie in (0, 1), got {}", self.kappa)
        })?;
        check(self.cost_c > 0.0, || format!("cost_c must be positive, got {}", self.cost_c))?;
        check(self.discount_r > 0.0, || format!("discount_r must be positive, got {}", self.discount_r))?;
        check(self.a_max > 0.0, || format!("a_max must be positive, got {}", self.a_max))?;
        check(self.eta >= 0.0, || format!("eta must be nonnegative, got {}", self.eta))?;
        check((0.0..1.0).contains(&self.x0), || format!("x0 must lie in [0, 1), got {}", self.x0))?;
        make_h_oa(self.x_max).map(|_| ())
    }

    pub fn model(&self) -> AdvertisingModel {
        AdvertisingModel { beta: self.beta, u_hi: self.control_bounds().1 }
    }

    pub fn barrier(&self) -> Result<BarrierSpec> {
        make_h_oa(self.x_max)
    }

    pub fn alpha(&self) -> StrengtheningFn {
        StrengtheningFn::linear(self.eta)
    }

    pub fn controller(&self) -> Result<AdvertisingController> {
        Ok(AdvertisingController { params: *self, costate: advertising_steady_state(self)? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvertisingModel {
    pub beta: f64,
    pub u_hi: f64,
}

impl SdeModel for AdvertisingModel {
    #[inline]
    fn drift_f(&self, x: f64) -> f64 {
        -self.beta * x
    }
    #[inline]
    fn drift_g(&self, x: f64) -> f64 {
        1.0 - x
    }
    fn diffusion_sigma(&self, _x: f64) -> f64 {
        0.0
    }
    fn control_bounds(&self) -> (f64, f64) {
        (0.0, self.u_hi)
    }
    fn state_domain(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Steady-state (turnpike) solution of the current-value costate system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostateState {
    /// Current-value costate `q = lambda e^{r t}`.
    pub q_bar: f64,
    pub x_bar: f64,
    pub u_bar: f64,
}

#[inline]
fn advertising_u(p: &AdvertisingParams, q: f64, x: f64) -> f64 {
    let base = p.kappa * q * (1.0 - x);
    if base <= 0.0 {
        0.0
    } else {
        base.powf(p.kappa / (1.0 - p.kappa))
    }
}

fn bisect(mut lo: f64, mut hi: f64, max_iter: usize, f: impl Fn(f64) -> f64) -> (f64, usize) {
    // f(lo) <= 0 <= f(hi) for increasing f
    let mut it = 0;
    while it < max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        it += 1;
    }
    (0.5 * (lo + hi), it)
}

/// Residuals `(q (r + beta + u) - gamma, (1 - x) u - beta x)`.
pub fn advertising_steady_residuals(p: &AdvertisingParams, s: &CostateState) -> (f64, f64) {
    let u = advertising_u(p, s.q_bar, s.x_bar);
    (s.q_bar * (p.discount_r + p.beta + u) - p.gamma_adv(), (1.0 - s.x_bar) * u - p.beta * s.x_bar)
}

pub fn advertising_steady_state(p: &AdvertisingParams) -> Result<CostateState> {
    advertising_steady_state_with(p, 10_000)
}

/// Nested bisection: the inner solve finds the stationary share for a given
/// costate, the outer solve matches the stationary costate equation.
pub fn advertising_steady_state_with(p: &AdvertisingParams, max_iter: usize) -> Result<CostateState> {
    p.validate()?;
    let x_of_q = |q: f64| {
        // (1 - x) u(q, x) - beta x is decreasing in x, positive at 0, negative at 1
        bisect(0.0, 1.0, max_iter, |x| -((1.0 - x) * advertising_u(p, q, x) - p.beta * x)).0
    };
    let outer = |q: f64| {
        let u = advertising_u(p, q, x_of_q(q));
        q * (p.discount_r + p.beta + u) - p.gamma_adv()
    };
    let q_hi = p.gamma_adv() / (p.discount_r + p.beta);
    let (q_bar, iters) = bisect(0.0, q_hi, max_iter, outer);
    let x_bar = x_of_q(q_bar);
    let s = CostateState { q_bar, x_bar, u_bar: advertising_u(p, q_bar, x_bar) };
    let (r1, r2) = advertising_steady_residuals(p, &s);
    let residual = r1.abs().max(r2.abs());
    if residual > 1e-10 || !residual.is_finite() {
        return Err(Error::NoConvergence { iterations: iters, residual });
    }
    Ok(s)
}

/// Desired control in `u`-space from the current-value costate, clipped to
/// the image of `[0, a_max]`.
pub fn advertising_primary(p: &AdvertisingParams, costate: &CostateState, x: f64) -> f64 {
    let (lo, hi) = p.control_bounds();
    advertising_u(p, costate.q_bar, x).clamp(lo, hi)
}

/// Same control written with the present-value costate `lambda` at time `t`.
pub fn advertising_control_from_costate(p: &AdvertisingParams, lambda: f64, t: f64, x: f64) -> f64 {
    let base = p.kappa * lambda * (1.0 - x) / (-p.discount_r * t).exp();
    let (lo, hi) = p.control_bounds();
    if base <= 0.0 {
        0.0
    } else {
        base.powf(p.kappa / (1.0 - p.kappa)).clamp(lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvertisingController {
    pub params: AdvertisingParams,
    pub costate: CostateState,
}

impl Controller for AdvertisingController {
    #[inline]
    fn desired(&self, _t: f64, x: f64) -> f64 {
        advertising_primary(&self.params, &self.costate, x)
    }
}

// ---------------------------------------------------------------------------
// Stochastic advertising

/// `dx = (-beta x + r sqrt(1 - x) u) dt + sigma_a x dw`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StochAdvertisingParams {
    pub beta: f64,
    pub r_eff: f64,
    pub pi_rev: f64,
    pub rho: f64,
    pub sigma_a: f64,
    pub x_max: f64,
    pub eta: f64,
    pub x0: f64,
    pub u_lo: f64,
    pub u_hi: f64,
}

impl Default for StochAdvertisingParams {
    fn default() -> Self {
        Self {
            beta: 0.1,
            r_eff: 1.0,
            pi_rev: 1.0,
            rho: 0.05,
            sigma_a: 0.05,
            x_max: 0.4,
            eta: 500.0,
            x0: 0.02,
            u_lo: -5.0,
            u_hi: 5.0,
        }
    }
}

impl StochAdvertisingParams {
    pub fn validate(&self) -> Result<()> {
        check(self.beta > 0.0, || format!("beta must be positive, got {}", self.beta))?;
        check(self.r_eff > 0.0, || format!("r_eff must be positive, got {}", self.r_eff))?;
        check(self.pi_rev >= 0.0, || format!("pi_rev must be nonnegative, got {}", self.pi_rev))?;
        check(self.rho > 0.0, || format!("rho must be positive, got {}", self.rho))?;
        check(self.sigma_a >= 0.0, || format!("sigma_a must be nonnegative, got {}", self.sigma_a))?;
        check(self.eta >= 0.0, || format!("eta must be nonnegative, got {}", self.eta))?;
        check(self.u_lo <= self.u_hi && self.u_lo.is_finite() && self.u_hi.is_finite(), || {
            format!("control bounds must be finite with u_lo <= u_hi, got [{}, {}]", self.u_lo, self.u_hi)
        })?;
        check((0.0..1.0).contains(&self.x0), || format!("x0 must lie in [0, 1), got {}", self.x0))?;
        make_h_oa(self.x_max).map(|_| ())
    }

    pub fn model(&self) -> StochAdvertisingModel {
        StochAdvertisingModel {
            beta: self.beta,
            r_eff: self.r_eff,
            sigma_a: self.sigma_a,
            bounds: (self.u_lo, self.u_hi),
        }
    }

    pub fn barrier(&self) -> Result<BarrierSpec> {
        make_h_oa(self.x_max)
    }

    pub fn alpha(&self) -> StrengtheningFn {
        StrengtheningFn::linear(self.eta)
    }

    pub fn controller(&self) -> SoaController {
        SoaController { params: *self, lambda_bar: soa_lambda_bar(self) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochAdvertisingModel {
    pub beta: f64,
    pub r_eff: f64,
    pub sigma_a: f64,
    pub bounds: (f64, f64),
}

impl SdeModel for StochAdvertisingModel {
    #[inline]
    fn drift_f(&self, x: f64) -> f64 {
        -self.beta * x
    }
    #[inline]
    fn drift_g(&self, x: f64) -> f64 {
        self.r_eff * (1.0 - x).max(0.0).sqrt()
    }
    #[inline]
    fn diffusion_sigma(&self, x: f64) -> f64 {
        self.sigma_a * x
    }
    fn control_bounds(&self) -> (f64, f64) {
        self.bounds
    }
    fn state_domain(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
    fn is_deterministic(&self) -> bool {
        self.sigma_a == 0.0
    }
}

/// Slope of the linear current-value value function.
pub fn soa_lambda_bar(p: &StochAdvertisingParams) -> f64 {
    let a = p.rho + p.beta;
    let r2 = p.r_eff * p.r_eff;
    ((a * a + r2 * p.pi_rev).sqrt() - a) / (r2 / 2.0)
}

/// `V(x) = lambda x + lambda^2 r^2 / (4 rho)`
pub fn soa_value(p: &StochAdvertisingParams, x: f64) -> f64 {
    let l = soa_lambda_bar(p);
    l * x + l * l * p.r_eff * p.r_eff / (4.0 * p.rho)
}

fn soa_feedback(p: &StochAdvertisingParams, lambda_bar: f64, x: f64) -> f64 {
    lambda_bar * p.r_eff * (1.0 - x).max(0.0).sqrt() / 2.0
}

/// Closed-form feedback control, clipped to the bounds.
pub fn soa_primary(p: &StochAdvertisingParams, x: f64) -> f64 {
    soa_feedback(p, soa_lambda_bar(p), x).clamp(p.u_lo, p.u_hi)
}

/// `rho V - max_u {pi x - u^2 + V' Q + V'' B^2 / 2}` evaluated at the
/// unclipped feedback control.
pub fn soa_hjb_residual(p: &StochAdvertisingParams, x: f64) -> f64 {
    let l = soa_lambda_bar(p);
    let u = soa_feedback(p, l, x);
    let (dv, d2v) = (l, 0.0);
    let q = -p.beta * x + p.r_eff * u * (1.0 - x).sqrt();
    let b = p.sigma_a * x;
    p.rho * soa_value(p, x) - (p.pi_rev * x - u * u + dv * q + 0.5 * d2v * b * b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoaController {
    pub params: StochAdvertisingParams,
    pub lambda_bar: f64,
}

impl Controller for SoaController {
    #[inline]
    fn desired(&self, _t: f64, x: f64) -> f64 {
        soa_feedback(&self.params, self.lambda_bar, x).clamp(self.params.u_lo, self.params.u_hi)
    }
}

// ---------------------------------------------------------------------------
// Portfolio

/// `dx = (eps_b x + (eps_r - eps_b) u) dt + sigma_po u dw`, wealth in
/// thousands of USD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PortfolioParams {
    pub eps_b: f64,
    pub eps_r: f64,
    pub sigma_po: f64,
    pub gamma_risk: f64,
    pub horizon: f64,
    pub x_min: f64,
    pub x0: f64,
    /// Time of the large withdrawal; `None` disables it.
    pub withdrawal_time: Option<f64>,
    /// Wealth after the withdrawal, as a multiple of `x_min`.
    pub withdrawal_factor: f64,
    pub eta: f64,
    pub u_lo: f64,
    pub u_hi: f64,
}

impl Default for PortfolioParams {
    fn default() -> Self {
        Self {
            eps_b: 0.02,
            eps_r: 0.16,
            sigma_po: 0.11,
            gamma_risk: 1.0,
            horizon: 40.0,
            x_min: 500.0,
            x0: 550.0,
            withdrawal_time: Some(15.0),
            withdrawal_factor: 1.1,
            eta: 1e-16,
            u_lo: -1e5,
            u_hi: 1e5,
        }
    }
}

impl PortfolioParams {
    pub fn sharpe(&self) -> f64 {
        (self.eps_r - self.eps_b) / self.sigma_po
    }

    pub fn validate(&self) -> Result<()> {
        check(self.sigma_po > 0.0, || format!("sigma_po must be positive, got {}", self.sigma_po))?;
        check(self.gamma_risk > 0.0, || format!("gamma_risk must be positive, got {}", self.gamma_risk))?;
        check(self.horizon > 0.0, || format!("horizon must be positive, got {}", self.horizon))?;
        check(self.eta >= 0.0, || format!("eta must be nonnegative, got {}", self.eta))?;
        check(self.withdrawal_factor > 0.0, || {
            format!("withdrawal_factor must be positive, got {}", self.withdrawal_factor)
        })?;
        check(self.u_lo <= self.u_hi && self.u_lo.is_finite() && self.u_hi.is_finite(), || {
            format!("control bounds must be finite with u_lo <= u_hi, got [{}, {}]", self.u_lo, self.u_hi)
        })?;
        if let Some(t) = self.withdrawal_time {
            check((0.0..=self.horizon).contains(&t), || {
                format!("withdrawal_time {t} lies outside [0, {}]", self.horizon)
            })?;
        }
        make_h_po(self.x_min).map(|_| ())
    }

    pub fn model(&self) -> PortfolioModel {
        PortfolioModel {
            eps_b: self.eps_b,
            eps_r: self.eps_r,
            sigma_po: self.sigma_po,
            bounds: (self.u_lo, self.u_hi),
        }
    }

    pub fn barrier(&self) -> Result<BarrierSpec> {
        make_h_po(self.x_min)
    }

    pub fn alpha(&self) -> StrengtheningFn {
        StrengtheningFn::linear(self.eta)
    }

    pub fn controller(&self) -> MertonController {
        MertonController { params: *self }
    }

    pub fn events(&self) -> Vec<ScheduledEvent> {
        self.withdrawal_time
            .map(|t| ScheduledEvent::reset(t, self.withdrawal_factor * self.x_min))
            .into_iter()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortfolioModel {
    pub eps_b: f64,
    pub eps_r: f64,
    pub sigma_po: f64,
    pub bounds: (f64, f64),
}

impl SdeModel for PortfolioModel {
    #[inline]
    fn drift_f(&self, x: f64) -> f64 {
        self.eps_b * x
    }
    #[inline]
    fn drift_g(&self, _x: f64) -> f64 {
        self.eps_r - self.eps_b
    }
    fn diffusion_sigma(&self, _x: f64) -> f64 {
        0.0
    }
    #[inline]
    fn diffusion_gain(&self, _x: f64) -> f64 {
        self.sigma_po
    }
    fn control_bounds(&self) -> (f64, f64) {
        self.bounds
    }
    fn is_deterministic(&self) -> bool {
        self.sigma_po == 0.0
    }
}

/// Amount held in the risky asset; a deterministic function of time.
pub fn merton_primary(p: &PortfolioParams, t: f64) -> f64 {
    let u = p.sharpe() / (p.gamma_risk * p.sigma_po) * (-p.eps_b * (p.horizon - t)).exp();
    u.clamp(p.u_lo, p.u_hi)
}

/// Exponential utility `-exp(-gamma x)`.
pub fn exponential_utility(gamma: f64, x: f64) -> f64 {
    -(-gamma * x).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MertonController {
    pub params: PortfolioParams,
}

impl Controller for MertonController {
    #[inline]
    fn desired(&self, t: f64, _x: f64) -> f64 {
        merton_primary(&self.params, t)
    }
}

// ---------------------------------------------------------------------------
// Uncontrolled Brownian motion (stress configuration for the legacy condition)

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrownianModel {
    pub sigma: f64,
}

impl SdeModel for BrownianModel {
    fn drift_f(&self, _x: f64) -> f64 {
        0.0
    }
    fn drift_g(&self, _x: f64) -> f64 {
        0.0
    }
    fn diffusion_sigma(&self, _x: f64) -> f64 {
        self.sigma
    }
    fn control_bounds(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }
    fn is_deterministic(&self) -> bool {
        self.sigma == 0.0
    }
}

/// `dx = sigma dw` with barrier `h = x - x_lo`; no control authority.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BrownianParams {
    pub sigma: f64,
    pub x0: f64,
    pub x_lo: f64,
    pub eta: f64,
}

impl Default for BrownianParams {
    fn default() -> Self {
        Self { sigma: 1.0, x0: 1.0, x_lo: 0.0, eta: 1.0 }
    }
}

impl BrownianParams {
    pub fn validate(&self) -> Result<()> {
        check(self.sigma > 0.0, || format!("sigma must be positive, got {}", self.sigma))?;
        check(self.x0 > self.x_lo, || format!("x0 ({}) must exceed x_lo ({})", self.x0, self.x_lo))?;
        check(self.eta >= 0.0, || format!("eta must be nonnegative, got {}", self.eta))
    }

    pub fn model(&self) -> BrownianModel {
        BrownianModel { sigma: self.sigma }
    }

    pub fn barrier(&self) -> BarrierSpec {
        BarrierSpec::HalfLine { x_lo: self.x_lo }
    }

    pub fn alpha(&self) -> StrengtheningFn {
        StrengtheningFn::linear(self.eta)
    }
}

pub struct ZeroController;

impl Controller for ZeroController {
    fn desired(&self, _t: f64, _x: f64) -> f64 {
        0.0
    }
}

// ---------------------------------------------------------------------------

/// A fully parameterised problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", content = "params", rename_all = "snake_case")]
pub enum Problem {
    Advertising(AdvertisingParams),
    StochAdvertising(StochAdvertisingParams),
    Portfolio(PortfolioParams),
    Brownian(BrownianParams),
}

impl Problem {
    pub fn name(&self) -> &'static str {
        match self {
            Problem::Advertising(_) => "advertising",
            Problem::StochAdvertising(_) => "stoch_advertising",
            Problem::Portfolio(_) => "portfolio",
            Problem::Brownian(_) => "brownian",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Problem::Advertising(p) => p.validate(),
            Problem::StochAdvertising(p) => p.validate(),
            Problem::Portfolio(p) => p.validate(),
            Problem::Brownian(p) => p.validate(),
        }
    }

    pub fn is_stochastic(&self) -> bool {
        match self {
            Problem::Advertising(_) => false,
            Problem::StochAdvertising(p) => p.sigma_a != 0.0,
            Problem::Portfolio(p) => p.sigma_po != 0.0,
            Problem::Brownian(p) => p.sigma != 0.0,
        }
    }

    pub fn default_filter(&self) -> FilterMode {
        if self.is_stochastic() {
            FilterMode::Scbf
        } else {
            FilterMode::Cbf
        }
    }

    pub fn x0(&self) -> f64 {
        match self {
            Problem::Advertising(p) => p.x0,
            Problem::StochAdvertising(p) => p.x0,
            Problem::Portfolio(p) => p.x0,
            Problem::Brownian(p) => p.x0,
        }
    }

    pub fn barrier(&self) -> Result<BarrierSpec> {
        match self {
            Problem::Advertising(p) => p.barrier(),
            Problem::StochAdvertising(p) => p.barrier(),
            Problem::Portfolio(p) => p.barrier(),
            Problem::Brownian(p) => Ok(p.barrier()),
        }
    }

    pub fn events(&self) -> Vec<ScheduledEvent> {
        match self {
            Problem::Portfolio(p) => p.events(),
            _ => Vec::new(),
        }
    }
}

/// Running (or terminal) objective of a finished trajectory, left-endpoint
/// quadrature on the grid.
pub fn objective_accumulate(problem: &Problem, traj: &Trajectory) -> f64 {
    let g = &traj.grid;
    let dt = g.dt();
    match problem {
        Problem::Advertising(p) => traj
            .u_act
            .iter()
            .enumerate()
            .map(|(k, &u)| {
                let x = traj.x[k];
                let cost = p.cost_c * u.max(0.0).powf(1.0 / p.kappa);
                (-p.discount_r * g.time(k)).exp() * ((1.0 - x) * u - cost) * dt
            })
            .sum(),
        Problem::StochAdvertising(p) => traj
            .u_act
            .iter()
            .enumerate()
            .map(|(k, &u)| (-p.rho * g.time(k)).exp() * (p.pi_rev * traj.x[k] - u * u) * dt)
            .sum(),
        Problem::Portfolio(p) => traj.x.last().map_or(0.0, |&x| exponential_utility(p.gamma_risk, x)),
        Problem::Brownian(_) => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::common::TimeGrid;
    use proptest::prelude::*;

    fn spec_params() -> AdvertisingParams {
        AdvertisingParams { kappa: 0.5, beta: 0.1, discount_r: 0.05, cost_c: 1.0, ..Default::default() }
    }

    #[test]
    fn steady_state_residuals_are_tiny() {
        let p = spec_params();
        let s = advertising_steady_state(&p).unwrap();
        let (r1, r2) = advertising_steady_residuals(&p, &s);
        assert!(r1.abs() < 1e-10 && r2.abs() < 1e-10, "{r1} {r2}");
        assert!(s.q_bar > 0.0 && s.x_bar > 0.0 && s.x_bar < 1.0);
    }

    #[test]
    fn steady_state_matches_grid_scan() {
        // Oracle: scan q over (0, 10]; for each q locate the sign change of the
        // share equation on a fine x grid, then locate the sign change of the
        // costate equation in q.
        let p = spec_params();
        let kappa = p.kappa;
        let u = |q: f64, x: f64| (kappa * q * (1.0 - x)).max(0.0).powf(kappa / (1.0 - kappa));
        let nx = 20_000;
        let x_of = |q: f64| {
            let mut prev = u(q, 0.0) - 0.0;
            for i in 1..nx {
                let x = i as f64 / nx as f64;
                let v = (1.0 - x) * u(q, x) - p.beta * x;
                if prev > 0.0 && v <= 0.0 {
                    return x;
                }
                prev = v;
            }
            1.0
        };
        let nq = 20_000;
        let mut found = None;
        let mut prev = f64::NAN;
        for i in 1..=nq {
            let q = 10.0 * i as f64 / nq as f64;
            let x = x_of(q);
            let v = q * (p.discount_r + p.beta + u(q, x)) - p.gamma_adv();
            if prev < 0.0 && v >= 0.0 {
                found = Some((q, x));
                break;
            }
            prev = v;
        }
        let (q_grid, x_grid) = found.expect("oracle found no sign change");
        let s = advertising_steady_state(&p).unwrap();
        assert!((s.q_bar - q_grid).abs() < 2.0 * 10.0 / nq as f64, "{} vs {}", s.q_bar, q_grid);
        assert!((s.x_bar - x_grid).abs() < 1e-3, "{} vs {}", s.x_bar, x_grid);
    }

    #[test]
    fn zero_profit_limit() {
        let p = AdvertisingParams { cost_c: 1e9, ..spec_params() };
        let s = advertising_steady_state(&p).unwrap();
        assert!(s.u_bar < 1e-8 && s.x_bar < 1e-7, "{s:?}");
    }

    #[test]
    fn higher_gamma_raises_steady_share() {
        let mut last = 0.0;
        for c in [2.0, 1.0, 0.5, 0.25, 0.1] {
            let s = advertising_steady_state(&AdvertisingParams { cost_c: c, ..spec_params() }).unwrap();
            assert!(s.x_bar > last);
            last = s.x_bar;
        }
    }

    #[test]
    fn steady_state_no_convergence() {
        let r = advertising_steady_state_with(&spec_params(), 2);
        assert!(matches!(r, Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn advertising_primary_examples() {
        let p = spec_params();
        let cs = CostateState { q_bar: 2.0, x_bar: 0.5, u_bar: 0.5 };
        assert_eq!(advertising_primary(&p, &cs, 1.0), 0.0);
        assert!((advertising_primary(&p, &cs, 0.5) - 0.5).abs() < 1e-15);
        // kappa = 1/2 makes the control linear in (1 - x)
        let a = advertising_primary(&p, &cs, 0.2);
        let b = advertising_primary(&p, &cs, 0.6);
        assert!((a / b - 0.8 / 0.4).abs() < 1e-12);
    }

    #[test]
    fn current_value_form_is_time_invariant() {
        let p = AdvertisingParams::default();
        let cs = advertising_steady_state(&p).unwrap();
        for &t in &[0.0, 1.0, 7.5, 30.0] {
            for &x in &[0.0, 0.2, 0.55] {
                let lambda = cs.q_bar * (-p.discount_r * t).exp();
                let a = advertising_control_from_costate(&p, lambda, t, x);
                let b = advertising_primary(&p, &cs, x);
                assert!((a - b).abs() <= 1e-12 * b.max(1.0));
            }
        }
    }

    #[test]
    fn lambda_bar_examples() {
        let p = StochAdvertisingParams { pi_rev: 0.0, ..Default::default() };
        assert_eq!(soa_lambda_bar(&p), 0.0);
        let p = StochAdvertisingParams::default();
        // (sqrt(1.0225) - 0.15) / 0.5 = 1.7223748416156684...
        assert!((soa_lambda_bar(&p) - 1.722_374_841_615_668_4).abs() < 1e-14);
    }

    #[test]
    fn soa_primary_examples() {
        let p = StochAdvertisingParams::default();
        assert_eq!(soa_primary(&p, 1.0), 0.0);
        let expect = 1.722_374_841_615_668_4 * 0.5 / 2.0;
        assert!((soa_primary(&p, 0.75) - expect).abs() < 1e-14);
        assert!((soa_primary(&p, 0.75) - 0.43059).abs() < 1e-5);
    }

    #[test]
    fn hjb_residual_vanishes() {
        for p in [
            StochAdvertisingParams::default(),
            StochAdvertisingParams { rho: 0.2, beta: 0.3, r_eff: 2.0, pi_rev: 3.0, ..Default::default() },
        ] {
            for i in 0..100 {
                let x = i as f64 / 100.0;
                assert!(soa_hjb_residual(&p, x).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn merton_examples() {
        let p = PortfolioParams::default();
        let terminal = merton_primary(&p, p.horizon);
        assert!((terminal - p.sharpe() / (p.gamma_risk * p.sigma_po)).abs() < 1e-12);
        let u0 = merton_primary(&p, 0.0);
        // (0.14 / 0.11) / 0.11 * exp(-0.8)
        let expect = (0.14f64 / 0.11) / 0.11 * (-0.8f64).exp();
        assert!((u0 - expect).abs() < 1e-12);
        assert!((u0 - 5.199).abs() < 1e-3);
    }

    #[test]
    fn merton_ignores_wealth() {
        let c = PortfolioParams::default().controller();
        let u = c.desired(12.3, 500.0);
        for &x in &[-100.0, 0.0, 550.0, 1e6] {
            assert_eq!(c.desired(12.3, x), u);
        }
    }

    #[test]
    fn objective_zero_horizon() {
        let g = TimeGrid::new(0.0, 1.0, 1.0).unwrap();
        let mut t = Trajectory::with_capacity(g);
        t.x = vec![0.1, 0.1];
        t.h = vec![0.0, 0.0];
        let p = Problem::StochAdvertising(Default::default());
        assert_eq!(objective_accumulate(&p, &Trajectory { u_act: vec![], ..t.clone() }), 0.0);
    }

    #[test]
    fn objective_constant_path_matches_discounting() {
        let p = StochAdvertisingParams::default();
        let (x, u, horizon) = (0.3, 0.2, 5.0);
        for dt in [0.01, 0.001] {
            let g = TimeGrid::new(0.0, horizon, dt).unwrap();
            let n = g.n_steps();
            let mut t = Trajectory::with_capacity(g);
            t.x = vec![x; n + 1];
            t.u_act = vec![u; n];
            let got = objective_accumulate(&Problem::StochAdvertising(p), &t);
            let integrand = p.pi_rev * x - u * u;
            let exact = integrand * (1.0 - (-p.rho * horizon).exp()) / p.rho;
            // left-endpoint rule error is O(dt)
            assert!((got - exact).abs() < integrand * p.rho * horizon * dt, "{got} {exact}");
        }
    }

    proptest! {
        #[test]
        fn soa_primary_decreasing(a in 0.0f64..0.99, d in 0.001f64..0.01) {
            let p = StochAdvertisingParams::default();
            prop_assert!(soa_primary(&p, a + d) < soa_primary(&p, a));
        }

        #[test]
        fn merton_increasing_in_time(t in 0.0f64..39.0, d in 0.01f64..1.0) {
            let p = PortfolioParams::default();
            prop_assert!(merton_primary(&p, t + d) > merton_primary(&p, t));
        }
    }
}
