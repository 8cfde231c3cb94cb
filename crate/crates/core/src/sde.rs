//! Explicit Euler / Euler–Maruyama stepping and the filter-then-integrate
//! simulation loop.

use serde::{Deserialize, Serialize};

use crate::barrier::SdeModel;
use crate::common::{Event, EventKind, RngPolicy, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::filter::{filter_step, FilterContext, FilterMode, FilterStatus};
use crate::problems::Controller;

/// Tolerance (in units of `dt`) for an event time to count as on the grid.
const EVENT_GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInput {
    pub x: f64,
    pub u: f64,
    pub dt: f64,
    /// Brownian increment; ignored by `euler_step`.
    pub dw: f64,
}

/// `x + dt (f + g u)`. The diffusion is ignored.
#[inline]
pub fn euler_step<M: SdeModel + ?Sized>(model: &M, s: StepInput) -> f64 {
    s.x + s.dt * model.drift(s.x, s.u)
}

/// `x + dt (f + g u) + (s0 + s1 u) dw`
#[inline]
pub fn em_step<M: SdeModel + ?Sized>(model: &M, s: StepInput) -> f64 {
    s.x + s.dt * model.drift(s.x, s.u) + model.diffusion(s.x, s.u) * s.dw
}

/// Discontinuous change of state applied at a grid point before filtering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventAction {
    ResetState { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    pub time: f64,
    pub action: EventAction,
}

impl ScheduledEvent {
    pub fn reset(time: f64, value: f64) -> Self {
        Self { time, action: EventAction::ResetState { value } }
    }
}

/// Map each event to its grid index; events off the grid are rejected.
pub fn resolve_events(grid: &TimeGrid, events: &[ScheduledEvent]) -> Result<Vec<(usize, EventAction)>> {
    events
        .iter()
        .map(|e| {
            grid.index_of(e.time, EVENT_GRID_TOL).map(|k| (k, e.action)).ok_or_else(|| {
                Error::Config(format!(
                    "event time {} does not land on the grid (t0 = {}, dt = {}, t_final = {})",
                    e.time,
                    grid.t0(),
                    grid.dt(),
                    grid.t_final()
                ))
            })
        })
        .collect()
}

/// Run one path: at each grid point apply due events, record the state, then
/// filter the desired control at the pre-step state and integrate.
///
/// States with `h < 0` are recorded, not treated as errors. For the
/// stochastic condition the initial state must lie strictly inside the safe
/// set.
pub fn simulate<M, C>(
    ctx: &FilterContext<'_, M>,
    controller: &C,
    grid: &TimeGrid,
    x0: f64,
    policy: RngPolicy,
    events: &[ScheduledEvent],
) -> Result<Trajectory>
where
    M: SdeModel + ?Sized,
    C: Controller + ?Sized,
{
    if !x0.is_finite() {
        return Err(Error::Domain(format!("initial state must be finite, got {x0}")));
    }
    if ctx.mode == FilterMode::Scbf {
        let h0 = ctx.barrier.h(x0);
        if h0 <= ctx.boundary_eps {
            return Err(Error::Boundary { h: h0, eps: ctx.boundary_eps });
        }
    }
    let events = resolve_events(grid, events)?;
    let deterministic = ctx.model.is_deterministic();
    let (d_lo, d_hi) = ctx.model.state_domain();
    let dt = grid.dt();
    let n = grid.n_steps();
    let mut noise = policy.stream(dt);
    let mut traj = Trajectory::with_capacity(*grid);
    let mut x = x0;

    for k in 0..=n {
        let t = grid.time(k);
        for &(_, action) in events.iter().filter(|(i, _)| *i == k) {
            match action {
                EventAction::ResetState { value } => {
                    traj.events.push(Event {
                        step: k,
                        time: t,
                        kind: EventKind::Reset { from: x, to: value },
                    });
                    x = value;
                }
            }
        }
        traj.x.push(x);
        traj.h.push(ctx.barrier.h(x));
        if k == n {
            break;
        }

        let u_des = controller.desired(t, x);
        let out = filter_step(ctx, x, t, u_des)?;
        match out.status {
            FilterStatus::BoundaryError => {
                traj.events.push(Event { step: k, time: t, kind: EventKind::BoundaryFallback })
            }
            FilterStatus::InfeasibleBestEffort => {
                traj.events.push(Event { step: k, time: t, kind: EventKind::Infeasible })
            }
            FilterStatus::Ok | FilterStatus::ClampedToBounds => {}
        }
        traj.u_des.push(out.u_des);
        traj.u_act.push(out.u_act);
        traj.margin.push(out.margin_at_u_act);
        traj.intervened.push(out.intervened);
        traj.solve_ms.push(out.solve_ms);

        let dw = noise.next_increment();
        let s = StepInput { x, u: out.u_act, dt, dw };
        let next = if deterministic { euler_step(ctx.model, s) } else { em_step(ctx.model, s) };
        let clamped = next.clamp(d_lo, d_hi);
        if clamped != next {
            traj.events.push(Event {
                step: k + 1,
                time: grid.time(k + 1),
                kind: EventKind::Clamp { from: next, to: clamped },
            });
        }
        x = clamped;
        if !x.is_finite() {
            return Err(Error::Domain(format!("state became non-finite at t = {}", grid.time(k + 1))));
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::BarrierSpec;
    use crate::common::StrengtheningFn;
    use crate::problems::{
        AdvertisingParams, BrownianModel, PortfolioParams, StochAdvertisingParams, ZeroController,
    };

    #[test]
    fn stationary_system() {
        let m = BrownianModel { sigma: 0.0 };
        let s = StepInput { x: 0.7, u: 3.0, dt: 0.1, dw: 0.0 };
        assert_eq!(euler_step(&m, s), 0.7);
    }

    #[test]
    fn euler_advertising_example() {
        let m = AdvertisingParams::default().model();
        let x = euler_step(&m, StepInput { x: 0.2, u: 0.5, dt: 0.01, dw: 0.0 });
        assert!((x - 0.2038).abs() < 1e-15);
    }

    #[test]
    fn euler_difference_quotient_is_the_vector_field() {
        let m = AdvertisingParams::default().model();
        let (x, u) = (0.3, 0.8);
        let field = m.drift(x, u);
        for dt in [1e-2, 1e-3, 1e-4] {
            let q = (euler_step(&m, StepInput { x, u, dt, dw: 0.0 }) - x) / dt;
            assert!((q - field).abs() < 1e-10);
        }
    }

    #[test]
    fn em_zero_noise_equals_euler() {
        let m = StochAdvertisingParams::default().model();
        let s = StepInput { x: 0.3, u: 0.4, dt: 0.1, dw: 0.0 };
        assert_eq!(em_step(&m, s), euler_step(&m, s));
    }

    #[test]
    fn em_advertising_example() {
        let m = StochAdvertisingParams { sigma_a: 0.1, ..Default::default() }.model();
        let x = em_step(&m, StepInput { x: 0.3, u: 0.0, dt: 0.1, dw: 0.05 });
        assert!((x - 0.2985).abs() < 1e-15);
    }

    #[test]
    fn off_grid_event_rejected() {
        let g = TimeGrid::new(0.0, 1.0, 0.1).unwrap();
        assert!(resolve_events(&g, &[ScheduledEvent::reset(0.5, 1.0)]).is_ok());
        assert!(matches!(resolve_events(&g, &[ScheduledEvent::reset(0.55, 1.0)]), Err(Error::Config(_))));
    }

    #[test]
    fn scbf_requires_interior_start() {
        let p = StochAdvertisingParams { x0: 0.4, ..Default::default() };
        let m = p.model();
        let ctx = FilterContext::new(&m, p.barrier().unwrap(), p.alpha(), FilterMode::Scbf);
        let g = TimeGrid::new(0.0, 1.0, 0.1).unwrap();
        let r = simulate(&ctx, &p.controller(), &g, p.x0, RngPolicy::new(1, 0), &[]);
        assert!(matches!(r, Err(Error::Boundary { .. })));
    }

    #[test]
    fn margin_is_computed_at_pre_step_state() {
        let p = StochAdvertisingParams::default();
        let m = p.model();
        let ctx = FilterContext::new(&m, p.barrier().unwrap(), p.alpha(), FilterMode::Scbf);
        let g = TimeGrid::new(0.0, 0.5, 0.01).unwrap();
        let tr = simulate(&ctx, &p.controller(), &g, p.x0, RngPolicy::new(3, 0), &[]).unwrap();
        assert!(tr.is_consistent());
        for k in 0..g.n_steps() {
            let q = ctx.constraint(tr.x[k]).unwrap();
            assert_eq!(q.eval(tr.u_act[k]), tr.margin[k]);
        }
    }

    #[test]
    fn deterministic_advertising_approaches_without_crossing() {
        let p = AdvertisingParams::default();
        let m = p.model();
        let ctx = FilterContext::new(&m, p.barrier().unwrap(), p.alpha(), FilterMode::Cbf);
        let g = TimeGrid::new(0.0, 30.0, 0.01).unwrap();
        let tr = simulate(&ctx, &p.controller().unwrap(), &g, p.x0, RngPolicy::new(0, 0), &[]).unwrap();
        assert!(tr.h.iter().all(|&h| h >= 0.0));
        assert!(tr.x.windows(2).all(|w| w[1] >= w[0]));
        assert!(*tr.x.last().unwrap() < 0.6);
    }

    #[test]
    fn deterministic_run_ignores_trial_index() {
        let p = AdvertisingParams::default();
        let m = p.model();
        let ctx = FilterContext::new(&m, p.barrier().unwrap(), p.alpha(), FilterMode::Cbf);
        let g = TimeGrid::new(0.0, 5.0, 0.01).unwrap();
        let c = p.controller().unwrap();
        let a = simulate(&ctx, &c, &g, p.x0, RngPolicy::new(0, 0), &[]).unwrap();
        let b = simulate(&ctx, &c, &g, p.x0, RngPolicy::new(9, 17), &[]).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.u_act, b.u_act);
    }

    #[test]
    fn withdrawal_resets_state() {
        let p = PortfolioParams::default();
        let m = p.model();
        let ctx = FilterContext::new(&m, p.barrier().unwrap(), p.alpha(), FilterMode::Scbf);
        let g = TimeGrid::new(0.0, p.horizon, 0.1).unwrap();
        let tr = simulate(&ctx, &p.controller(), &g, p.x0, RngPolicy::new(5, 2), &p.events()).unwrap();
        let k = g.index_of(15.0, 1e-9).unwrap();
        assert_eq!(tr.x[k], 550.0);
        assert!(tr.events_at(k).any(|e| matches!(e.kind, EventKind::Reset { to, .. } if to == 550.0)));
    }

    #[test]
    fn same_seed_same_path() {
        let p = StochAdvertisingParams::default();
        let m = p.model();
        let ctx = FilterContext::new(&m, p.barrier().unwrap(), p.alpha(), FilterMode::Scbf);
        let g = TimeGrid::new(0.0, 1.0, 0.01).unwrap();
        let run = || simulate(&ctx, &p.controller(), &g, p.x0, RngPolicy::new(11, 4), &[]).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.x, b.x);
        assert_eq!(a.u_act, b.u_act);
        assert_eq!(a.events, b.events);
    }

    #[test]
    fn share_is_clamped_to_unit_interval() {
        // strong unfiltered noise pushes the share past the domain edges
        let p = StochAdvertisingParams { sigma_a: 5.0, ..Default::default() };
        let m = p.model();
        let ctx = FilterContext::new(&m, p.barrier().unwrap(), p.alpha(), FilterMode::Off);
        let g = TimeGrid::new(0.0, 5.0, 0.01).unwrap();
        let tr = simulate(&ctx, &p.controller(), &g, 0.5, RngPolicy::new(1, 0), &[]).unwrap();
        assert!(tr.x.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(tr.events.iter().any(|e| e.kind.tag() == "clamp"));
    }

    #[test]
    fn weak_consistency_of_linear_sde() {
        // u = 0 leaves dx = eps_b x dt; add an additive-noise variant so the
        // estimator has spread: dx = eps_b x dt + s dw, E x(T) = x0 e^{eps_b T}.
        struct Linear {
            eps_b: f64,
            s: f64,
        }
        impl SdeModel for Linear {
            fn drift_f(&self, x: f64) -> f64 {
                self.eps_b * x
            }
            fn drift_g(&self, _x: f64) -> f64 {
                0.0
            }
            fn diffusion_sigma(&self, _x: f64) -> f64 {
                self.s
            }
            fn control_bounds(&self) -> (f64, f64) {
                (0.0, 0.0)
            }
            fn is_deterministic(&self) -> bool {
                false
            }
        }
        let m = Linear { eps_b: 0.02, s: 10.0 };
        let ctx = FilterContext::new(
            &m,
            BarrierSpec::HalfLine { x_lo: -1e9 },
            StrengtheningFn::linear(0.0),
            FilterMode::Off,
        );
        let (x0, horizon, dt) = (550.0, 4.0, 0.1);
        let g = TimeGrid::new(0.0, horizon, dt).unwrap();
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|i| {
                *simulate(&ctx, &ZeroController, &g, x0, RngPolicy::new(77, i), &[])
                    .unwrap()
                    .x
                    .last()
                    .unwrap()
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        // Euler bias: x0 (1 + eps_b dt)^N vs x0 e^{eps_b T}
        let exact = x0 * (0.02f64 * horizon).exp();
        let euler = x0 * (1.0 + 0.02 * dt).powi(g.n_steps() as i32);
        assert!((mean - euler).abs() < 3.0 * se, "mean {mean} euler {euler} se {se}");
        assert!((mean - exact).abs() < 3.0 * se + (exact - euler).abs());
    }
}
