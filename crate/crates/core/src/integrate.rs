//! Time integration: adaptive Bogacki–Shampine 3(2) steps with a positivity
//! guard, and a Picard fixed-point mode for truncated kernels.

use serde::Serialize;

use crate::config::{Integrator, SimConfig};
use crate::error::{Error, Result};
use crate::grid::{SizeGrid, State};
use crate::power::pow;
use crate::scheme::RhsWorkspace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
        }
    }
}

/// Steps shorter than this fraction of the horizon are treated as a failure
/// of the explicit method.
pub const MIN_STEP_FRACTION: f64 = 1e-12;
/// Negative contents below `-NEGATIVITY_SLACK * max|c|` reject a step.
pub const NEGATIVITY_SLACK: f64 = 1e-14;
const SAFETY: f64 = 0.9;
const MIN_SHRINK: f64 = 0.2;
const MAX_GROWTH: f64 = 5.0;

/// Result of one accepted step.
#[derive(Debug, Clone)]
pub struct Step {
    pub state: State,
    pub dt_used: f64,
    pub dt_next: f64,
}

/// Weighted ℓ¹ norm `Σ max(r^k0, r^(1+k0)) |v_i|`.
pub fn weighted_norm(weights: &[f64], v: &[f64]) -> f64 {
    weights.iter().zip(v).map(|(w, x)| w * x.abs()).sum()
}

struct Stepper<'a> {
    ws: &'a RhsWorkspace,
    weights: Vec<f64>,
    tol: Tolerances,
    min_dt: f64,
    // scratch
    k: [Vec<f64>; 4],
    kd: [f64; 4],
    tmp: Vec<f64>,
    accepted: usize,
    rejected: usize,
}

impl<'a> Stepper<'a> {
    fn new(ws: &'a RhsWorkspace, tol: Tolerances, horizon: f64) -> Self {
        let n = ws.n_cells();
        Self {
            ws,
            weights: ws.grid().uniqueness_weights(ws.law().k0()),
            tol,
            min_dt: MIN_STEP_FRACTION * horizon,
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            kd: [0.0; 4],
            tmp: vec![0.0; n],
            accepted: 0,
            rejected: 0,
        }
    }

    /// Deterministic first step from the ratio of state and derivative norms.
    fn initial_dt(&mut self, state: &State, horizon: f64) -> f64 {
        self.ws.rhs_into(&state.contents, &mut self.k[0]);
        let y = weighted_norm(&self.weights, &state.contents);
        let f = weighted_norm(&self.weights, &self.k[0]);
        if f > 0.0 && y > 0.0 {
            (1e-2 * y / f).min(horizon)
        } else {
            horizon
        }
    }

    fn step(&mut self, state: &State, dt_target: f64) -> Result<Step> {
        let n = state.n_cells();
        let ws = self.ws;
        self.kd[0] = ws.rhs_into(&state.contents, &mut self.k[0]);
        let mut dt = dt_target;
        loop {
            if !(dt >= self.min_dt) {
                return Err(Error::Stiffness { time: state.time, dt });
            }
            let [k1, k2, k3, k4] = &mut self.k;
            for i in 0..n {
                self.tmp[i] = state.contents[i] + dt * 0.5 * k1[i];
            }
            self.kd[1] = ws.rhs_into(&self.tmp, k2);
            for i in 0..n {
                self.tmp[i] = state.contents[i] + dt * 0.75 * k2[i];
            }
            self.kd[2] = ws.rhs_into(&self.tmp, k3);
            let mut next = vec![0.0; n];
            for i in 0..n {
                next[i] = state.contents[i] + dt * (2.0 / 9.0 * k1[i] + 1.0 / 3.0 * k2[i] + 4.0 / 9.0 * k3[i]);
            }
            let dust = state.dust_mass
                + dt * (2.0 / 9.0 * self.kd[0] + 1.0 / 3.0 * self.kd[1] + 4.0 / 9.0 * self.kd[2]);
            self.kd[3] = ws.rhs_into(&next, k4);
            let mut err = 0.0;
            for i in 0..n {
                let e = dt * (-5.0 / 72.0 * k1[i] + 1.0 / 12.0 * k2[i] + 1.0 / 9.0 * k3[i] - 1.0 / 8.0 * k4[i]);
                err += self.weights[i] * e.abs();
            }
            let scale = self.tol.abs_tol + self.tol.rel_tol * weighted_norm(&self.weights, &next);
            let ratio = err / scale;
            let c_max = next.iter().fold(0.0f64, |m, c| m.max(c.abs()));
            let negative = next.iter().any(|&c| c < -NEGATIVITY_SLACK * c_max);
            if !ratio.is_finite() || ratio > 1.0 || negative {
                self.rejected += 1;
                dt *= 0.5;
                continue;
            }
            let reps = ws.grid().reps();
            let mut clip = 0.0;
            for (c, r) in next.iter_mut().zip(reps) {
                if *c < 0.0 {
                    clip += r * -*c;
                    *c = 0.0;
                }
            }
            self.accepted += 1;
            let growth = if ratio == 0.0 {
                MAX_GROWTH
            } else {
                (SAFETY * ratio.powf(-1.0 / 3.0)).clamp(MIN_SHRINK, MAX_GROWTH)
            };
            return Ok(Step {
                state: State {
                    time: state.time + dt,
                    contents: next,
                    dust_mass: dust,
                    clip_mass: state.clip_mass + clip,
                },
                dt_used: dt,
                dt_next: dt * growth,
            });
        }
    }
}

/// One accepted embedded step of at most `dt_target`. `horizon` sets the
/// step-size floor `MIN_STEP_FRACTION * horizon`.
pub fn step(ws: &RhsWorkspace, state: &State, dt_target: f64, tol: Tolerances, horizon: f64) -> Result<Step> {
    if !(dt_target > 0.0) {
        return Err(Error::Input(format!("step size must be positive, got {dt_target}")));
    }
    Stepper::new(ws, tol, horizon).step(state, dt_target)
}

/// Snapshots and moment series of one integration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub grid: SizeGrid,
    pub moment_orders: Vec<f64>,
    pub snapshots: Vec<State>,
    /// `moments[s][m]` is the grid moment of order `moment_orders[m]` at
    /// snapshot `s`.
    pub moments: Vec<Vec<f64>>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl RunOutput {
    fn new(grid: &SizeGrid, moment_orders: &[f64]) -> Self {
        Self {
            grid: grid.clone(),
            moment_orders: moment_orders.to_vec(),
            snapshots: Vec::new(),
            moments: Vec::new(),
            accepted_steps: 0,
            rejected_steps: 0,
        }
    }

    fn record(&mut self, state: State) {
        self.moments
            .push(self.moment_orders.iter().map(|&k| self.grid.moment(&state, k)).collect());
        self.snapshots.push(state);
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn dust_series(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.dust_mass).collect()
    }

    pub fn final_state(&self) -> &State {
        self.snapshots.last().expect("a run has at least one snapshot")
    }

    /// Grid moment of any order at every snapshot.
    pub fn moment_series(&self, k: f64) -> Vec<f64> {
        self.snapshots.iter().map(|s| self.grid.moment(s, k)).collect()
    }
}

/// Integrates from `state0` through the sorted snapshot `times`, recording
/// the state at each.
pub fn integrate_snapshots(
    ws: &RhsWorkspace,
    state0: &State,
    times: &[f64],
    tol: Tolerances,
    moment_orders: &[f64],
) -> Result<RunOutput> {
    if times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::Input("snapshot times must be sorted".into()));
    }
    let horizon = times.last().copied().unwrap_or(state0.time) - state0.time;
    let mut out = RunOutput::new(ws.grid(), moment_orders);
    let mut stepper = Stepper::new(ws, tol, horizon);
    let mut state = state0.clone();
    let mut dt = if horizon > 0.0 {
        stepper.initial_dt(&state, horizon)
    } else {
        0.0
    };
    for &t_snap in times {
        if t_snap < state.time {
            return Err(Error::Input(format!("snapshot time {t_snap} precedes the initial time {}", state.time)));
        }
        while t_snap - state.time > MIN_STEP_FRACTION * horizon {
            let target = dt.min(t_snap - state.time);
            let step = stepper.step(&state, target)?;
            state = step.state;
            // keep the controller's proposal unless the step was cut short
            // only to land on a snapshot
            if step.dt_used < target || target == dt {
                dt = step.dt_next;
            }
        }
        state.time = t_snap;
        out.record(state.clone());
    }
    out.accepted_steps = stepper.accepted;
    out.rejected_steps = stepper.rejected;
    Ok(out)
}

/// Runs a configured simulation.
pub fn run(config: &SimConfig) -> Result<RunOutput> {
    let grid = config.build_grid()?;
    let ws = RhsWorkspace::precompute(&grid, &config.kernel, &config.law)?;
    let state0 = config.init.discretize(&grid)?;
    let times = config.snapshot_times();
    match config.time.integrator {
        Integrator::Rk23 => integrate_snapshots(&ws, &state0, &times, config.tolerances(), &config.output.moments),
        Integrator::Picard => {
            let mut out = RunOutput::new(&grid, &config.output.moments);
            let mut state = state0;
            for &t in &times {
                if t > state.time {
                    let mut next = picard_solve(&ws, &state, t - state.time, config.picard.max_iter, config.picard.tol)?;
                    next.time = t;
                    state = next;
                }
                out.record(state.clone());
            }
            Ok(out)
        }
    }
}

/// Number of time nodes of the Picard quadrature mesh.
pub const PICARD_NODES: usize = 64;

/// Successive-difference history of a Picard solve.
#[derive(Debug, Clone)]
pub struct PicardReport {
    pub state: State,
    /// `max_t (‖u^(m+1) - u^m‖_k0 + ‖u^(m+1) - u^m‖_1)` for each iteration.
    pub differences: Vec<f64>,
}

/// Fixed point of `u(t) = u0 + ∫_0^t f(u) dτ` on `[0, t_end]` by Picard
/// iteration, the integral taken by the composite trapezoid rule on
/// [`PICARD_NODES`] uniform nodes. Returns the iterate at `t_end`.
pub fn picard_solve(ws: &RhsWorkspace, state0: &State, t_end: f64, max_iter: usize, tol: f64) -> Result<State> {
    picard_solve_report(ws, state0, t_end, max_iter, tol).map(|r| r.state)
}

pub fn picard_solve_report(
    ws: &RhsWorkspace,
    state0: &State,
    t_end: f64,
    max_iter: usize,
    tol: f64,
) -> Result<PicardReport> {
    if ws.kernel().truncation().is_none() {
        return Err(Error::Input("Picard iteration needs a truncated kernel (bounded rates)".into()));
    }
    if !(t_end >= 0.0) {
        return Err(Error::Input(format!("Picard horizon must be non-negative, got {t_end}")));
    }
    let n = ws.n_cells();
    let mut end = state0.clone();
    end.time = state0.time + t_end;
    if t_end == 0.0 {
        return Ok(PicardReport {
            state: end,
            differences: Vec::new(),
        });
    }
    let k0 = ws.law().k0();
    let norm_weights: Vec<f64> = ws.grid().reps().iter().map(|&r| pow(r, k0) + r).collect();
    let h = t_end / (PICARD_NODES - 1) as f64;

    let mut iterate: Vec<Vec<f64>> = vec![state0.contents.clone(); PICARD_NODES];
    let mut dust: Vec<f64> = vec![state0.dust_mass; PICARD_NODES];
    let mut f: Vec<Vec<f64>> = vec![vec![0.0; n]; PICARD_NODES];
    let mut fd = vec![0.0; PICARD_NODES];
    let mut differences = Vec::new();
    for _ in 0..max_iter {
        for q in 0..PICARD_NODES {
            fd[q] = ws.rhs_into(&iterate[q], &mut f[q]);
        }
        let mut diff = 0.0f64;
        let mut acc = vec![0.0; n];
        let mut acc_dust = 0.0;
        for q in 1..PICARD_NODES {
            for i in 0..n {
                acc[i] += 0.5 * h * (f[q - 1][i] + f[q][i]);
            }
            acc_dust += 0.5 * h * (fd[q - 1] + fd[q]);
            let mut d = 0.0;
            for i in 0..n {
                let v = state0.contents[i] + acc[i];
                d += norm_weights[i] * (v - iterate[q][i]).abs();
                iterate[q][i] = v;
            }
            dust[q] = state0.dust_mass + acc_dust;
            diff = diff.max(d);
        }
        differences.push(diff);
        if !diff.is_finite() {
            return Err(Error::Contraction {
                iterations: differences.len(),
                residual: diff,
            });
        }
        if diff <= tol {
            end.contents = iterate[PICARD_NODES - 1].clone();
            end.dust_mass = dust[PICARD_NODES - 1];
            return Ok(PicardReport { state: end, differences });
        }
    }
    Err(Error::Contraction {
        iterations: max_iter,
        residual: differences.last().copied().unwrap_or(f64::NAN),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::daughter::DaughterLaw;
    use crate::grid::InitialCondition;
    use crate::kernel::KernelSpec;

    fn setup(n: usize, truncation: Option<u32>) -> (RhsWorkspace, State) {
        let grid = SizeGrid::new(0.25, 4.0, n).unwrap();
        let mut kernel = KernelSpec::new(0.6, 0.6).unwrap();
        if let Some(t) = truncation {
            kernel = kernel.truncated(t).unwrap();
        }
        let law = DaughterLaw::new(-1.2, 0.5).unwrap();
        let ws = RhsWorkspace::precompute(&grid, &kernel, &law).unwrap();
        let s = InitialCondition::Exponential { mean: 1.0, mass: 1.0 }.discretize(&grid).unwrap();
        (ws, s)
    }

    #[test]
    fn zero_state_step_is_trivial() {
        let (ws, _) = setup(16, None);
        let s = State::zeros(16);
        let st = step(&ws, &s, 0.125, Tolerances::default(), 1.0).unwrap();
        assert_eq!(st.dt_used, 0.125);
        assert_eq!(st.state.contents, s.contents);
        assert_eq!(st.state.time, 0.125);
    }

    #[test]
    fn zero_horizon_gives_initial_state() {
        let (ws, s) = setup(16, None);
        let out = integrate_snapshots(&ws, &s, &[0.0], Tolerances::default(), &[1.0]).unwrap();
        assert_eq!(out.snapshots.len(), 1);
        assert_eq!(out.snapshots[0], s);
    }

    #[test]
    fn mass_budget_over_run() {
        let (ws, s) = setup(48, None);
        let out = integrate_snapshots(&ws, &s, &[0.0, 0.5, 1.0], Tolerances::default(), &[1.0]).unwrap();
        for (st, m) in out.snapshots.iter().zip(&out.moments) {
            assert!((m[0] + st.dust_mass - 1.0).abs() <= 1e-10);
            assert!(st.contents.iter().all(|&c| c >= 0.0));
        }
        assert!(out.dust_series().windows(2).all(|w| w[1] >= w[0]));
        assert!(out.final_state().dust_mass > 0.0);
    }

    #[test]
    fn rate_scaling_is_time_scaling() {
        let (ws, s) = setup(32, None);
        let mut fast = ws.clone();
        fast.scale_rates(4.0);
        let tol = Tolerances { rel_tol: 1e-10, abs_tol: 1e-14 };
        let a = integrate_snapshots(&ws, &s, &[0.0, 0.4, 0.8], tol, &[]).unwrap();
        let b = integrate_snapshots(&fast, &s, &[0.0, 0.1, 0.2], tol, &[]).unwrap();
        let w = ws.grid().uniqueness_weights(0.5);
        for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
            let d: Vec<f64> = x.contents.iter().zip(&y.contents).map(|(p, q)| p - q).collect();
            assert!(weighted_norm(&w, &d) <= 1e-7, "{}", weighted_norm(&w, &d));
        }
    }

    #[test]
    fn runs_are_bitwise_reproducible() {
        let (ws, s) = setup(64, None);
        let a = integrate_snapshots(&ws, &s, &[0.0, 0.3, 0.6], Tolerances::default(), &[0.5, 1.0]).unwrap();
        let b = integrate_snapshots(&ws, &s, &[0.0, 0.3, 0.6], Tolerances::default(), &[0.5, 1.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn picard_zero_state() {
        let (ws, _) = setup(16, Some(4));
        let out = picard_solve(&ws, &State::zeros(16), 0.1, 10, 1e-12).unwrap();
        assert!(out.contents.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn picard_needs_truncation() {
        let (ws, s) = setup(16, None);
        assert!(matches!(picard_solve(&ws, &s, 0.1, 10, 1e-10), Err(Error::Input(_))));
    }

    #[test]
    fn picard_matches_rk_on_short_horizon() {
        let (ws, s) = setup(32, Some(4));
        let rep = picard_solve_report(&ws, &s, 0.05, 100, 1e-12).unwrap();
        let rk = integrate_snapshots(&ws, &s, &[0.05], Tolerances { rel_tol: 1e-11, abs_tol: 1e-15 }, &[]).unwrap();
        let w = ws.grid().uniqueness_weights(0.5);
        let d: Vec<f64> = rep.state.contents.iter().zip(&rk.final_state().contents).map(|(p, q)| p - q).collect();
        assert!(weighted_norm(&w, &d) <= 1e-6);
        assert!(rep.differences[1..].windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn picard_fails_far_beyond_contraction() {
        let (ws, s) = setup(32, Some(4));
        let r = picard_solve(&ws, &s, 50.0, 100, 1e-10);
        assert!(matches!(r, Err(Error::Contraction { .. })), "{r:?}");
    }
}
