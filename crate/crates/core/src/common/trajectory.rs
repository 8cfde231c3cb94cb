use serde::{Deserialize, Serialize};

use super::TimeGrid;

/// Something that happened at a grid point besides the regular step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// State reset by an external event (e.g. a large withdrawal).
    Reset { from: f64, to: f64 },
    /// State clamped back into the model's domain after a step.
    Clamp { from: f64, to: f64 },
    /// The stochastic condition was undefined at this state; the filter fell
    /// back to its best-effort control.
    BoundaryFallback,
    /// No control in the bounds satisfied the constraint.
    Infeasible,
}

impl EventKind {
    pub fn tag(&self) -> &'static str {
        match self {
            EventKind::Reset { .. } => "reset",
            EventKind::Clamp { .. } => "clamp",
            EventKind::BoundaryFallback => "boundary_fallback",
            EventKind::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Grid index the event is attached to.
    pub step: usize,
    pub time: f64,
    pub kind: EventKind,
}

/// Recorded path. `x` and `h` have one entry per grid point; the control and
/// margin sequences have one entry per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub u_des: Vec<f64>,
    pub u_act: Vec<f64>,
    pub margin: Vec<f64>,
    pub intervened: Vec<bool>,
    /// Filter wall time per step, milliseconds.
    pub solve_ms: Vec<f64>,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn with_capacity(grid: TimeGrid) -> Self {
        let n = grid.n_steps();
        Self {
            grid,
            x: Vec::with_capacity(n + 1),
            h: Vec::with_capacity(n + 1),
            u_des: Vec::with_capacity(n),
            u_act: Vec::with_capacity(n),
            margin: Vec::with_capacity(n),
            intervened: Vec::with_capacity(n),
            solve_ms: Vec::with_capacity(n),
            events: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Lengths agree with the grid.
    pub fn is_consistent(&self) -> bool {
        let n = self.grid.n_steps();
        self.x.len() == n + 1
            && self.h.len() == n + 1
            && self.u_des.len() == n
            && self.u_act.len() == n
            && self.margin.len() == n
            && self.intervened.len() == n
            && self.solve_ms.len() == n
    }

    /// Grid indices `k >= 1` where the barrier is negative.
    pub fn violation_steps(&self) -> Vec<usize> {
        self.h.iter().enumerate().skip(1).filter(|(_, h)| **h < 0.0).map(|(k, _)| k).collect()
    }

    pub fn events_at(&self, step: usize) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.step == step)
    }
}
