//! Batch execution over independent trials with a deterministic fold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::common::{EventKind, RngPolicy, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::filter::{FilterContext, FilterMode};
use crate::problems::{objective_accumulate, Problem, ZeroController};
use crate::sde::simulate;

/// A problem instance together with the grid and filter it is run under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub problem: Problem,
    pub grid: TimeGrid,
    pub mode: FilterMode,
}

impl Experiment {
    pub fn new(problem: Problem, grid: TimeGrid, mode: FilterMode) -> Result<Self> {
        problem.validate()?;
        Ok(Self { problem, grid, mode })
    }
}

/// Simulate trial `trial_index`; deterministic in `(experiment, base_seed, trial_index)`.
pub fn run_trial(exp: &Experiment, trial_index: u64, base_seed: u64) -> Result<Trajectory> {
    let policy = RngPolicy::new(base_seed, trial_index);
    let events = exp.problem.events();
    let barrier = exp.problem.barrier()?;
    match &exp.problem {
        Problem::Advertising(p) => {
            let m = p.model();
            let ctx = FilterContext::new(&m, barrier, p.alpha(), exp.mode);
            simulate(&ctx, &p.controller()?, &exp.grid, p.x0, policy, &events)
        }
        Problem::StochAdvertising(p) => {
            let m = p.model();
            let ctx = FilterContext::new(&m, barrier, p.alpha(), exp.mode);
            simulate(&ctx, &p.controller(), &exp.grid, p.x0, policy, &events)
        }
        Problem::Portfolio(p) => {
            let m = p.model();
            let ctx = FilterContext::new(&m, barrier, p.alpha(), exp.mode);
            simulate(&ctx, &p.controller(), &exp.grid, p.x0, policy, &events)
        }
        Problem::Brownian(p) => {
            let m = p.model();
            let ctx = FilterContext::new(&m, barrier, p.alpha(), exp.mode);
            simulate(&ctx, &ZeroController, &exp.grid, p.x0, policy, &events)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub n_trials: u64,
    pub base_seed: u64,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
    /// Keep every k-th trajectory (0 keeps none).
    pub store_every: u64,
    /// Trailing fraction of the grid averaged into the settled state.
    pub settle_fraction: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { n_trials: 1000, base_seed: 42, threads: 0, store_every: 0, settle_fraction: 0.25 }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if !(self.settle_fraction > 0.0 && self.settle_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "settle_fraction must lie in (0, 1], got {}",
                self.settle_fraction
            )));
        }
        Ok(())
    }
}

/// Statistics of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub trial_index: u64,
    pub seed: u64,
    pub steps: u64,
    /// Grid indices `k >= 1` with `h(x_k) < 0`.
    pub violation_steps: Vec<usize>,
    pub terminal_state: f64,
    pub settled_state: f64,
    pub max_state: f64,
    pub min_state: f64,
    pub objective: f64,
    pub interventions: u64,
    pub boundary_fallbacks: u64,
    pub infeasible_steps: u64,
    pub clamps: u64,
    pub mean_solve_ms: f64,
    pub max_solve_ms: f64,
}

impl TrialStats {
    pub fn from_trajectory(
        problem: &Problem,
        traj: &Trajectory,
        trial_index: u64,
        seed: u64,
        settle_fraction: f64,
    ) -> Self {
        let n_pts = traj.x.len();
        let tail = ((n_pts as f64 * settle_fraction).ceil() as usize).clamp(1, n_pts.max(1));
        let settled =
            if n_pts == 0 { f64::NAN } else { traj.x[n_pts - tail..].iter().sum::<f64>() / tail as f64 };
        let count = |tag: &str| traj.events.iter().filter(|e| e.kind.tag() == tag).count() as u64;
        let steps = traj.u_act.len() as u64;
        let total_ms: f64 = traj.solve_ms.iter().sum();
        Self {
            trial_index,
            seed,
            steps,
            violation_steps: traj.violation_steps(),
            terminal_state: traj.x.last().copied().unwrap_or(f64::NAN),
            settled_state: settled,
            max_state: traj.x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min_state: traj.x.iter().copied().fold(f64::INFINITY, f64::min),
            objective: objective_accumulate(problem, traj),
            interventions: traj.intervened.iter().filter(|&&b| b).count() as u64,
            boundary_fallbacks: count(EventKind::BoundaryFallback.tag()),
            infeasible_steps: count(EventKind::Infeasible.tag()),
            clamps: traj.events.iter().filter(|e| matches!(e.kind, EventKind::Clamp { .. })).count() as u64,
            mean_solve_ms: if steps == 0 { 0.0 } else { total_ms / steps as f64 },
            max_solve_ms: traj.solve_ms.iter().copied().fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial_index: u64,
    pub error: String,
}

/// Aggregate over all completed trials, folded in trial-index order.
///
/// Timing fields are wall-clock measurements and are the only fields that
/// differ between repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub n_trials: u64,
    pub completed_trials: u64,
    pub base_seed: u64,
    /// Steps counted per trial: grid points `k = 1..=N`.
    pub total_steps: u64,
    pub violating_steps: u64,
    pub safe_timestep_fraction: f64,
    pub trials_with_violation: u64,
    pub mean_terminal_state: f64,
    pub std_terminal_state: f64,
    pub mean_settled_state: f64,
    pub mean_objective: f64,
    pub std_objective: f64,
    pub max_state: f64,
    pub min_state: f64,
    pub interventions: u64,
    pub boundary_fallbacks: u64,
    pub infeasible_steps: u64,
    pub clamps: u64,
    pub mean_solve_ms: f64,
    pub max_solve_ms: f64,
    pub trials: Vec<TrialStats>,
    pub failures: Vec<TrialFailure>,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    let std = if n > 1 { (xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
    (mean, std)
}

impl McSummary {
    pub fn aggregate(
        n_trials: u64,
        base_seed: u64,
        trials: Vec<TrialStats>,
        failures: Vec<TrialFailure>,
    ) -> Self {
        let total_steps: u64 = trials.iter().map(|t| t.steps).sum();
        let violating_steps: u64 = trials.iter().map(|t| t.violation_steps.len() as u64).sum();
        let (mean_terminal_state, std_terminal_state) = mean_std(trials.iter().map(|t| t.terminal_state));
        let (mean_objective, std_objective) = mean_std(trials.iter().map(|t| t.objective));
        let (mean_settled_state, _) = mean_std(trials.iter().map(|t| t.settled_state));
        let sum_ms: f64 = trials.iter().map(|t| t.mean_solve_ms * t.steps as f64).sum();
        Self {
            n_trials,
            completed_trials: trials.len() as u64,
            base_seed,
            total_steps,
            violating_steps,
            safe_timestep_fraction: if total_steps == 0 {
                1.0
            } else {
                1.0 - violating_steps as f64 / total_steps as f64
            },
            trials_with_violation: trials.iter().filter(|t| !t.violation_steps.is_empty()).count() as u64,
            mean_terminal_state,
            std_terminal_state,
            mean_settled_state,
            mean_objective,
            std_objective,
            max_state: trials.iter().map(|t| t.max_state).fold(f64::NEG_INFINITY, f64::max),
            min_state: trials.iter().map(|t| t.min_state).fold(f64::INFINITY, f64::min),
            interventions: trials.iter().map(|t| t.interventions).sum(),
            boundary_fallbacks: trials.iter().map(|t| t.boundary_fallbacks).sum(),
            infeasible_steps: trials.iter().map(|t| t.infeasible_steps).sum(),
            clamps: trials.iter().map(|t| t.clamps).sum(),
            mean_solve_ms: if total_steps == 0 { 0.0 } else { sum_ms / total_steps as f64 },
            max_solve_ms: trials.iter().map(|t| t.max_solve_ms).fold(0.0, f64::max),
            trials,
            failures,
        }
    }
}

#[derive(Debug, Clone)]
pub struct McOutput {
    pub summary: McSummary,
    /// `(trial_index, trajectory)` for every `store_every`-th trial.
    pub trajectories: Vec<(u64, Trajectory)>,
}

pub fn run_batch(exp: &Experiment, cfg: &McConfig) -> Result<McOutput> {
    cfg.validate()?;
    let work = |i: u64| -> (std::result::Result<TrialStats, TrialFailure>, Option<Trajectory>) {
        match run_trial(exp, i, cfg.base_seed) {
            Ok(tr) => {
                let st =
                    TrialStats::from_trajectory(&exp.problem, &tr, i, cfg.base_seed, cfg.settle_fraction);
                let keep = cfg.store_every > 0 && i % cfg.store_every == 0;
                (Ok(st), keep.then_some(tr))
            }
            Err(e) => (Err(TrialFailure { trial_index: i, error: e.to_string() }), None),
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if cfg.threads > 0 {
        builder = builder.num_threads(cfg.threads);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    // indexed collect keeps trial order whatever the schedule
    let results: Vec<_> = pool.install(|| (0..cfg.n_trials).into_par_iter().map(work).collect());

    let mut trials = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    let mut trajectories = Vec::new();
    for (i, (r, tr)) in results.into_iter().enumerate() {
        match r {
            Ok(s) => trials.push(s),
            Err(f) => failures.push(f),
        }
        if let Some(tr) = tr {
            trajectories.push((i as u64, tr));
        }
    }
    Ok(McOutput {
        summary: McSummary::aggregate(cfg.n_trials, cfg.base_seed, trials, failures),
        trajectories,
    })
}
