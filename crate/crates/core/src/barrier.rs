//! Barrier functions and the safety conditions built from them.
//!
//! For a scalar SDE `dx = (f + g u) dt + (s0 + s1 u) dw` and a time-invariant
//! barrier `h`, Ito's lemma gives
//!
//! ```text
//! mu_tilde    = h'(x) (f + g u) + 0.5 h''(x) (s0 + s1 u)^2
//! sigma_tilde = h'(x) (s0 + s1 u)
//! ```
//!
//! Three conditions are exposed:
//!
//! * deterministic:  `h' (f + g u) + alpha(h) >= 0` (only for `s0 = s1 = 0`)
//! * stochastic:     `mu_tilde - sigma_tilde^2 / h + h^2 alpha(h) >= 0`
//! * legacy:         `mu_tilde + alpha(h) >= 0`, kept for comparisons only; it
//!   does not guarantee almost-sure safety.
//!
//! All three are polynomials of degree at most two in `u`, which is what the
//! filters consume.

use serde::{Deserialize, Serialize};

use crate::common::StrengtheningFn;
use crate::error::{Error, Result};
use crate::filter::QuadraticConstraint;

/// Default tolerance below which the stochastic condition is treated as
/// undefined (the `sigma_tilde^2 / h` term diverges at the boundary).
pub const DEFAULT_BOUNDARY_EPS: f64 = 1e-12;

/// Barrier function with its first two derivatives. The safe set is
/// `{x : h(x) >= 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BarrierSpec {
    /// `h = x_max^2 - x^2`, keeps `|x| <= x_max`.
    Cap { x_max: f64 },
    /// `h = x^2 - x_min^2`, keeps `|x| >= x_min`.
    Floor { x_min: f64 },
    /// `h = x - x_lo`.
    HalfLine { x_lo: f64 },
}

impl BarrierSpec {
    // Factored forms keep the sign exact near the boundary.
    #[inline]
    pub fn h(&self, x: f64) -> f64 {
        match *self {
            BarrierSpec::Cap { x_max } => (x_max - x) * (x_max + x),
            BarrierSpec::Floor { x_min } => (x - x_min) * (x + x_min),
            BarrierSpec::HalfLine { x_lo } => x - x_lo,
        }
    }

    #[inline]
    pub fn dh_dx(&self, x: f64) -> f64 {
        match *self {
            BarrierSpec::Cap { .. } => -2.0 * x,
            BarrierSpec::Floor { .. } => 2.0 * x,
            BarrierSpec::HalfLine { .. } => 1.0,
        }
    }

    #[inline]
    pub fn d2h_dx2(&self, _x: f64) -> f64 {
        match *self {
            BarrierSpec::Cap { .. } => -2.0,
            BarrierSpec::Floor { .. } => 2.0,
            BarrierSpec::HalfLine { .. } => 0.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BarrierSpec::Cap { .. } => "cap",
            BarrierSpec::Floor { .. } => "floor",
            BarrierSpec::HalfLine { .. } => "half_line",
        }
    }

    pub fn is_safe(&self, x: f64) -> bool {
        self.h(x) >= 0.0
    }
}

/// Upper bound on market share: `h(x) = x_max^2 - x^2`.
pub fn make_h_oa(x_max: f64) -> Result<BarrierSpec> {
    if !(0.0..1.0).contains(&x_max) {
        return Err(Error::Domain(format!("x_max must lie in [0, 1), got {x_max}")));
    }
    Ok(BarrierSpec::Cap { x_max })
}

/// Emergency-fund floor on wealth: `h(x) = x^2 - x_min^2`.
pub fn make_h_po(x_min: f64) -> Result<BarrierSpec> {
    if !(x_min.is_finite() && x_min > 0.0) {
        return Err(Error::Domain(format!("x_min must be positive, got {x_min}")));
    }
    Ok(BarrierSpec::Floor { x_min })
}

/// Scalar controlled SDE `dx = (f(x) + g(x) u) dt + (s0(x) + s1(x) u) dw`.
///
/// `diffusion_gain` is the coefficient of `u` in the diffusion; it is zero for
/// the advertising models and `sigma_po` for the portfolio model.
pub trait SdeModel {
    fn drift_f(&self, x: f64) -> f64;
    fn drift_g(&self, x: f64) -> f64;
    fn diffusion_sigma(&self, x: f64) -> f64;

    fn diffusion_gain(&self, _x: f64) -> f64 {
        0.0
    }

    /// `[u_lo, u_hi]`
    fn control_bounds(&self) -> (f64, f64);

    /// Interval the state is clamped to after each step.
    fn state_domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    /// True when both diffusion terms vanish identically.
    fn is_deterministic(&self) -> bool;

    #[inline]
    fn drift(&self, x: f64, u: f64) -> f64 {
        self.drift_f(x) + self.drift_g(x) * u
    }

    #[inline]
    fn diffusion(&self, x: f64, u: f64) -> f64 {
        self.diffusion_sigma(x) + self.diffusion_gain(x) * u
    }
}

/// Drift and diffusion of `h(x(t))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItoTerms {
    pub mu_tilde: f64,
    pub sigma_tilde: f64,
}

pub fn ito_terms<M: SdeModel + ?Sized>(spec: &BarrierSpec, model: &M, x: f64, u: f64) -> ItoTerms {
    let dh = spec.dh_dx(x);
    let s = model.diffusion(x, u);
    ItoTerms { mu_tilde: dh * model.drift(x, u) + 0.5 * spec.d2h_dx2(x) * s * s, sigma_tilde: dh * s }
}

pub fn deterministic_bc<M: SdeModel + ?Sized>(
    spec: &BarrierSpec,
    model: &M,
    alpha: &StrengtheningFn,
    x: f64,
    u: f64,
) -> Result<f64> {
    Ok(deterministic_constraint(spec, model, alpha, x)?.eval(u))
}

/// Deterministic barrier condition as a polynomial in `u` (affine).
pub fn deterministic_constraint<M: SdeModel + ?Sized>(
    spec: &BarrierSpec,
    model: &M,
    alpha: &StrengtheningFn,
    x: f64,
) -> Result<QuadraticConstraint> {
    if !model.is_deterministic() {
        return Err(Error::Contract(
            "deterministic barrier condition requested for a model with diffusion".into(),
        ));
    }
    let dh = spec.dh_dx(x);
    Ok(QuadraticConstraint {
        a2: 0.0,
        a1: dh * model.drift_g(x),
        a0: dh * model.drift_f(x) + alpha.eval(spec.h(x)),
    })
}

/// Corrected stochastic condition. Fails with [`Error::Boundary`] when
/// `h(x) <= eps`.
pub fn scbf_margin<M: SdeModel + ?Sized>(
    spec: &BarrierSpec,
    model: &M,
    alpha: &StrengtheningFn,
    x: f64,
    u: f64,
) -> Result<f64> {
    let h = spec.h(x);
    if h <= DEFAULT_BOUNDARY_EPS {
        return Err(Error::Boundary { h, eps: DEFAULT_BOUNDARY_EPS });
    }
    let it = ito_terms(spec, model, x, u);
    Ok(it.mu_tilde - it.sigma_tilde * it.sigma_tilde / h + h * h * alpha.eval(h))
}

/// Corrected stochastic condition as a polynomial in `u`.
pub fn scbf_constraint<M: SdeModel + ?Sized>(
    spec: &BarrierSpec,
    model: &M,
    alpha: &StrengtheningFn,
    x: f64,
    eps: f64,
) -> Result<QuadraticConstraint> {
    let h = spec.h(x);
    if h <= eps {
        return Err(Error::Boundary { h, eps });
    }
    Ok(scbf_constraint_at(spec, model, alpha, x, h))
}

/// Same polynomial with `h` supplied by the caller. Used for the best-effort
/// fallback at the boundary, where `h` is floored to a small positive value.
pub fn scbf_constraint_at<M: SdeModel + ?Sized>(
    spec: &BarrierSpec,
    model: &M,
    alpha: &StrengtheningFn,
    x: f64,
    h: f64,
) -> QuadraticConstraint {
    let dh = spec.dh_dx(x);
    let d2h = spec.d2h_dx2(x);
    let (f, g) = (model.drift_f(x), model.drift_g(x));
    let (s0, s1) = (model.diffusion_sigma(x), model.diffusion_gain(x));
    // mu_tilde - (dh s)^2 / h, with s = s0 + s1 u
    let curv = 0.5 * d2h - dh * dh / h;
    QuadraticConstraint {
        a2: curv * s1 * s1,
        a1: dh * g + 2.0 * curv * s0 * s1,
        a0: dh * f + curv * s0 * s0 + h * h * alpha.eval(h),
    }
}

/// Legacy stochastic condition (`mu_tilde + alpha(h) >= 0`).
pub fn legacy_scbf_margin<M: SdeModel + ?Sized>(
    spec: &BarrierSpec,
    model: &M,
    alpha: &StrengtheningFn,
    x: f64,
    u: f64,
) -> f64 {
    ito_terms(spec, model, x, u).mu_tilde + alpha.eval(spec.h(x))
}

pub fn legacy_constraint<M: SdeModel + ?Sized>(
    spec: &BarrierSpec,
    model: &M,
    alpha: &StrengtheningFn,
    x: f64,
) -> QuadraticConstraint {
    let dh = spec.dh_dx(x);
    let half_d2h = 0.5 * spec.d2h_dx2(x);
    let (s0, s1) = (model.diffusion_sigma(x), model.diffusion_gain(x));
    QuadraticConstraint {
        a2: half_d2h * s1 * s1,
        a1: dh * model.drift_g(x) + 2.0 * half_d2h * s0 * s1,
        a0: dh * model.drift_f(x) + half_d2h * s0 * s0 + alpha.eval(spec.h(x)),
    }
}
