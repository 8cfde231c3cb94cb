//! Shared scalar building blocks: time grids, strengthening functions,
//! per-trial random streams and the recorded trajectory.

mod alpha;
mod grid;
mod rng;
mod trajectory;

pub use alpha::{alpha_eval, StrengtheningFn};
pub use grid::TimeGrid;
pub use rng::{gaussian_increments, BrownianStream, RngPolicy};
pub use trajectory::{Event, EventKind, Trajectory};
