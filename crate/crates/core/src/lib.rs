//! Deterministic and stochastic control barrier function (CBF / SCBF) safety
//! filters for scalar controlled diffusions, with three economic benchmark
//! problems, an Euler–Maruyama simulator and a Monte Carlo driver.
//!
//! ```
//! use scbf_core::filter::{qp_filter, AffineConstraint};
//!
//! // keep -u + 2 >= 0 while staying close to u = 3
//! let out = qp_filter(3.0, &AffineConstraint { slope: -1.0, intercept: 2.0 }, (0.0, 10.0));
//! assert_eq!(out.u_act, 2.0);
//! assert!(out.intervened);
//! ```

pub mod barrier;
pub mod cli;
pub mod common;
pub mod error;
pub mod filter;
pub mod montecarlo;
pub mod problems;
pub mod sde;

pub use barrier::{BarrierSpec, SdeModel};
pub use common::{RngPolicy, StrengtheningFn, TimeGrid, Trajectory};
pub use error::{Error, Result};
pub use filter::{filter_step, FilterContext, FilterMode, FilterOutcome, FilterStatus};
pub use montecarlo::{run_batch, run_trial, Experiment, McConfig, McSummary};
pub use problems::{Controller, Problem};
