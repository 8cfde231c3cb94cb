use serde::{Deserialize, Serialize};

/// Extended class-kappa-infinity function used to relax the barrier
/// condition away from the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrengtheningFn {
    /// alpha(h) = slope * h
    Linear { slope: f64 },
}

impl StrengtheningFn {
    pub fn linear(slope: f64) -> Self {
        StrengtheningFn::Linear { slope }
    }

    #[inline]
    pub fn eval(&self, h: f64) -> f64 {
        match *self {
            StrengtheningFn::Linear { slope } => slope * h,
        }
    }

    pub fn slope(&self) -> f64 {
        match *self {
            StrengtheningFn::Linear { slope } => slope,
        }
    }
}

pub fn alpha_eval(f: &StrengtheningFn, h: f64) -> f64 {
    f.eval(h)
}
