use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid. Grid points are computed from their index so long
/// horizons do not accumulate rounding from repeated addition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    t_final: f64,
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_final: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Domain(format!("dt must be positive and finite, got {dt}")));
        }
        if !(t0.is_finite() && t_final.is_finite() && t_final > t0) {
            return Err(Error::Domain(format!("t_final ({t_final}) must exceed t0 ({t0})")));
        }
        let n_steps = ((t_final - t0) / dt).round() as usize;
        if n_steps == 0 {
            return Err(Error::Domain(format!(
                "horizon [{t0}, {t_final}] is shorter than half a step of {dt}"
            )));
        }
        Ok(Self { t0, t_final, dt, n_steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Time of grid point `k`.
    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Index of the grid point at time `t`, if `t` lands on the grid within
    /// `tol` (relative to `dt`).
    pub fn index_of(&self, t: f64, tol: f64) -> Option<usize> {
        let steps = (t - self.t0) / self.dt;
        let k = steps.round();
        if k < 0.0 || k > self.n_steps as f64 || (steps - k).abs() > tol {
            return None;
        }
        Some(k as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_points_come_from_the_index() {
        let g = TimeGrid::new(0.0, 40.0, 0.1).unwrap();
        assert_eq!(g.n_steps(), 400);
        for k in 0..=g.n_steps() {
            assert_eq!(g.time(k), 0.0 + k as f64 * 0.1);
        }
        // repeated addition would drift; the index formula does not
        let mut acc = 0.0;
        for _ in 0..400 {
            acc += 0.1;
        }
        assert_ne!(acc, g.time(400));
        assert_eq!(g.time(400), 40.0);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(0.0, 1.0, 0.0).is_err());
        assert!(TimeGrid::new(0.0, 1.0, -0.1).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 0.1).is_err());
        assert!(TimeGrid::new(0.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn index_of_requires_grid_alignment() {
        let g = TimeGrid::new(0.0, 40.0, 0.1).unwrap();
        assert_eq!(g.index_of(15.0, 1e-9), Some(150));
        assert_eq!(g.index_of(15.05, 1e-9), None);
        assert_eq!(g.index_of(41.0, 1e-9), None);
    }
}
