//! Checks of simulation output against the analytic bounds and identities.
//!
//! Everything here reads a finished [`RunOutput`]; time derivatives are
//! finite differences on the snapshot mesh, never integrator internals.

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{BoundsReport, Regime};
use crate::config::SimConfig;
use crate::daughter::DaughterLaw;
use crate::error::{Error, Result};
use crate::grid::{SizeGrid, State};
use crate::integrate::{run, RunOutput};
use crate::kernel::KernelSpec;
use crate::power::pow;

/// Mass drift allowed by [`mass_budget_check`], relative to the initial mass.
pub const MASS_BUDGET_TOLERANCE: f64 = 1e-6;
/// Growth of a tail moment allowed by [`tail_monotonicity_check`], in units
/// of `ρ x^(k-1)`.
pub const TAIL_TOLERANCE: f64 = 1e-8;
/// Relative slack of [`c1_bound_check`]; covers rounding only.
pub const C1_SLACK: f64 = 1e-12;
/// Relative tolerance of [`nonexistence_growth_check`].
pub const GROWTH_TOLERANCE: f64 = 1e-3;
/// Minimum decrease of the dust fraction per decade of `x_min` for the
/// conservative verdict.
pub const CONSERVATIVE_DECREASE_PER_DECADE: f64 = 2.0;

/// Derivative of samples `y` on the mesh `t`: three-point central
/// differences inside, three-point one-sided differences at the ends (both
/// second order on non-uniform meshes).
pub fn mesh_derivative(t: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let n = t.len();
    if y.len() != n {
        return Err(Error::Input("samples do not match the mesh".into()));
    }
    if n < 2 {
        return Err(Error::Input("need at least two snapshots to differentiate".into()));
    }
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Input("snapshot times must be strictly increasing".into()));
    }
    if n == 2 {
        let d = (y[1] - y[0]) / (t[1] - t[0]);
        return Ok(vec![d, d]);
    }
    // derivative at t[c] of the parabola through points a, b, c
    let three = |i: [usize; 3], at: usize| -> f64 {
        let [a, b, c] = i;
        let (ta, tb, tc, x) = (t[a], t[b], t[c], t[at]);
        y[a] * ((x - tb) + (x - tc)) / ((ta - tb) * (ta - tc))
            + y[b] * ((x - ta) + (x - tc)) / ((tb - ta) * (tb - tc))
            + y[c] * ((x - ta) + (x - tb)) / ((tc - ta) * (tc - tb))
    };
    let mut d = Vec::with_capacity(n);
    d.push(three([0, 1, 2], 0));
    for i in 1..n - 1 {
        d.push(three([i - 1, i, i + 1], i));
    }
    d.push(three([n - 3, n - 2, n - 1], n - 1));
    Ok(d)
}

/// Grid moment restricted to the cells where a truncated kernel is active.
fn window_moment(grid: &SizeGrid, kernel: &KernelSpec, state: &State, k: f64) -> f64 {
    grid.reps()
        .iter()
        .zip(&state.contents)
        .filter(|(r, _)| kernel.in_window(**r))
        .map(|(r, c)| pow(*r, k) * c)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentIdentity {
    pub k: f64,
    pub times: Vec<f64>,
    /// `dM_k/dt` of the grid moment.
    pub dmk_dt: Vec<f64>,
    /// `k`-moment rate of the mass sent to dust.
    pub dust_correction: Vec<f64>,
    /// `(1-k)/(k+ν+1) [M_(k+λ1) M_λ2 + M_(k+λ2) M_λ1]`.
    pub production: Vec<f64>,
    /// `dmk_dt + dust_correction - production`.
    pub residual: Vec<f64>,
}

impl MomentIdentity {
    /// `max |residual| / max |production|` (or the absolute maximum when the
    /// production vanishes).
    pub fn relative(&self) -> f64 {
        let r = self.residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let p = self.production.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if p > 0.0 {
            r / p
        } else {
            r
        }
    }
}

/// Residual of the closed-form moment identity along a run.
pub fn moment_identity_residual(
    run: &RunOutput,
    kernel: &KernelSpec,
    law: &DaughterLaw,
    k: f64,
) -> Result<MomentIdentity> {
    let coef = law.upsilon_coefficient(k)?;
    let factor = law.subcutoff_moment_per_mass(k, run.grid.x_min())?;
    let times = run.times();
    let mk = run.moment_series(k);
    let dmk_dt = mesh_derivative(&times, &mk)?;
    let ddust = mesh_derivative(&times, &run.dust_series())?;
    let (l1, l2) = (kernel.lambda1(), kernel.lambda2());
    let production: Vec<f64> = run
        .snapshots
        .iter()
        .map(|s| {
            let m = |o: f64| window_moment(&run.grid, kernel, s, o);
            coef * (m(k + l1) * m(l2) + m(k + l2) * m(l1))
        })
        .collect();
    let dust_correction: Vec<f64> = ddust.iter().map(|d| factor * d).collect();
    let residual = dmk_dt
        .iter()
        .zip(&dust_correction)
        .zip(&production)
        .map(|((d, c), p)| d + c - p)
        .collect();
    Ok(MomentIdentity {
        k,
        times,
        dmk_dt,
        dust_correction,
        production,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C1Check {
    pub holds: bool,
    pub horizon: f64,
    pub c1: f64,
    pub max_m_k0: f64,
    /// `C1(T) - max M_k0`.
    pub margin: f64,
}

fn c1_check_with(run: &RunOutput, k0: f64, horizon: f64, c1: f64) -> C1Check {
    let max_m_k0 = run
        .snapshots
        .iter()
        .filter(|s| s.time <= horizon)
        .map(|s| run.grid.moment(s, k0))
        .fold(0.0f64, f64::max);
    C1Check {
        holds: max_m_k0 <= c1 * (1.0 + C1_SLACK),
        horizon,
        c1,
        max_m_k0,
        margin: c1 - max_m_k0,
    }
}

fn existence_part(report: &BoundsReport, horizon: f64, adjusted: bool) -> Result<(&crate::bounds::ExistenceBounds, f64)> {
    let e = report.existence.as_ref().ok_or_else(|| {
        Error::Input(format!("C1 bound needs an existence regime, got {:?}", report.regime))
    })?;
    let c1 = if adjusted { e.c1_adjusted_of(horizon) } else { e.c1_of(horizon) };
    let t_k0 = if adjusted { e.rate_adjusted.t_k0 } else { e.t_k0 };
    let c1 = c1.ok_or_else(|| {
        Error::Input(format!("horizon T = {horizon} is not below the local existence time T_k0 = {t_k0}"))
    })?;
    Ok((e, c1))
}

/// `max_{t <= T} M_k0(t) <= C1(T)` on the simulated run.
pub fn c1_bound_check(run: &RunOutput, report: &BoundsReport, k0: f64, horizon: f64) -> Result<C1Check> {
    let (_, c1) = existence_part(report, horizon, false)?;
    Ok(c1_check_with(run, k0, horizon, c1))
}

/// Same as [`c1_bound_check`] with the rate-adjusted constant chain.
pub fn c1_adjusted_check(run: &RunOutput, report: &BoundsReport, k0: f64, horizon: f64) -> Result<C1Check> {
    let (_, c1) = existence_part(report, horizon, true)?;
    Ok(c1_check_with(run, k0, horizon, c1))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthCheck {
    pub holds: bool,
    pub k: f64,
    /// Smallest `lhs - rhs` over the snapshots (negative when violated).
    pub min_slack: f64,
    pub tolerance: f64,
}

/// `M_k(t) >= M_k(0) + (1-k)/(k+ν+1) ∫_0^t M_(k+λ2) M_λ1 dτ`, with the `k`-moment
/// of the dust added to the grid moment and the integral by the trapezoid
/// rule on the snapshot mesh.
pub fn nonexistence_growth_check(
    run: &RunOutput,
    report: &BoundsReport,
    kernel: &KernelSpec,
    law: &DaughterLaw,
    k: f64,
) -> Result<GrowthCheck> {
    if report.regime != Regime::NonExistence {
        return Err(Error::Input(format!("growth check needs the non-existence regime, got {:?}", report.regime)));
    }
    let kappa = law.moment_threshold();
    if !(k > kappa && k <= 1.0) {
        return Err(Error::Domain(format!("order k = {k} outside ({kappa}, 1]")));
    }
    let coef = law.upsilon_coefficient(k)?;
    let factor = law.subcutoff_moment_per_mass(k, run.grid.x_min())?;
    let (l1, l2) = (kernel.lambda1(), kernel.lambda2());
    let lhs: Vec<f64> = run
        .snapshots
        .iter()
        .map(|s| run.grid.moment(s, k) + factor * s.dust_mass)
        .collect();
    let product: Vec<f64> = run
        .snapshots
        .iter()
        .map(|s| window_moment(&run.grid, kernel, s, k + l2) * window_moment(&run.grid, kernel, s, l1))
        .collect();
    let times = run.times();
    let mut integral = 0.0;
    let mut min_slack = f64::INFINITY;
    let mut holds = true;
    let mut worst_tol = 0.0;
    for q in 0..times.len() {
        if q > 0 {
            integral += 0.5 * (times[q] - times[q - 1]) * (product[q - 1] + product[q]);
        }
        let rhs = lhs[0] + coef * integral;
        let slack = lhs[q] - rhs;
        let tol = GROWTH_TOLERANCE * (lhs[0].abs() + (coef * integral).abs());
        if slack < min_slack {
            min_slack = slack;
            worst_tol = tol;
        }
        if slack < -tol {
            holds = false;
        }
    }
    Ok(GrowthCheck {
        holds,
        k,
        min_slack,
        tolerance: worst_tol,
    })
}

/// `Σ_i max(r_i^k0, r_i^(1+k0)) |a_i - b_i|`.
pub fn weighted_distance(a: &State, b: &State, grid: &SizeGrid, k0: f64) -> Result<f64> {
    if a.n_cells() != grid.n_cells() || b.n_cells() != grid.n_cells() {
        return Err(Error::Input(format!(
            "states with {} and {} cells cannot be compared on a {}-cell grid",
            a.n_cells(),
            b.n_cells(),
            grid.n_cells()
        )));
    }
    Ok(grid
        .uniqueness_weights(k0)
        .iter()
        .zip(a.contents.iter().zip(&b.contents))
        .map(|(w, (x, y))| w * (x - y).abs())
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassBudget {
    pub holds: bool,
    pub rho: f64,
    /// `max_t |M_1(t) + dust(t) - ρ|`.
    pub max_drift: f64,
    pub clip_mass: f64,
}

/// Conservation of grid mass plus dust, relative to the initial mass.
pub fn mass_budget_check(run: &RunOutput) -> MassBudget {
    let first = &run.snapshots[0];
    let rho = run.grid.moment(first, 1.0) + first.dust_mass;
    let max_drift = run
        .snapshots
        .iter()
        .map(|s| (run.grid.moment(s, 1.0) + s.dust_mass - rho).abs())
        .fold(0.0f64, f64::max);
    MassBudget {
        holds: max_drift <= MASS_BUDGET_TOLERANCE * rho,
        rho,
        max_drift,
        clip_mass: run.final_state().clip_mass,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCheck {
    pub holds: bool,
    pub k: f64,
    /// Largest increase between consecutive snapshots, over all edges, in
    /// units of `ρ x^(k-1)`.
    pub worst_increase: f64,
}

/// Tail moments `Σ_{r_i >= x} r_i^k c_i` must not grow in time for `k >= 1`,
/// at every grid edge `x`.
pub fn tail_monotonicity_check(run: &RunOutput, k: f64) -> TailCheck {
    let first = &run.snapshots[0];
    let rho = run.grid.moment(first, 1.0) + first.dust_mass;
    let edges = run.grid.edges();
    let mut worst = f64::NEG_INFINITY;
    for x in &edges[..edges.len() - 1] {
        let scale = rho * pow(*x, k - 1.0);
        let series: Vec<f64> = run.snapshots.iter().map(|s| run.grid.tail_moment(s, k, *x)).collect();
        for w in series.windows(2) {
            worst = worst.max((w[1] - w[0]) / scale);
        }
    }
    TailCheck {
        holds: worst <= TAIL_TOLERANCE,
        k,
        worst_increase: worst,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ShatterVerdict {
    Shattering,
    Conservative,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShatterRow {
    pub x_min: f64,
    pub n_cells: usize,
    pub dust_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShatterStudy {
    pub t_obs: f64,
    pub rows: Vec<ShatterRow>,
    /// Least-squares slope of `log10(dust fraction)` against `log10(x_min)`.
    pub slope: f64,
    /// Factor by which the dust fraction drops per decade of `x_min`.
    pub decrease_per_decade: f64,
    pub verdict: ShatterVerdict,
}

/// Verdict from a table of `(x_min, dust fraction)` rows.
pub fn shatter_verdict(rows: Vec<ShatterRow>, t_obs: f64) -> Result<ShatterStudy> {
    if rows.len() < 3 {
        return Err(Error::Input(format!("a refinement study needs at least 3 values of x_min, got {}", rows.len())));
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.x_min.log10(), r.dust_fraction.max(f64::MIN_POSITIVE).log10()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Input("x_min values must differ".into()));
    }
    let slope = sxy / sxx;
    let decrease_per_decade = 10f64.powf(slope);
    let verdict = if decrease_per_decade >= CONSERVATIVE_DECREASE_PER_DECADE {
        ShatterVerdict::Conservative
    } else {
        ShatterVerdict::Shattering
    };
    Ok(ShatterStudy {
        t_obs,
        rows,
        slope,
        decrease_per_decade,
        verdict,
    })
}

/// Runs `config` once per `x_min` (concurrently), keeping the cell ratio
/// fixed, and records the dust fraction at `t_end`.
pub fn shattering_study(config: &SimConfig, x_mins: &[f64]) -> Result<ShatterStudy> {
    if x_mins.len() < 3 {
        return Err(Error::Input(format!("a refinement study needs at least 3 values of x_min, got {}", x_mins.len())));
    }
    let rows = x_mins
        .par_iter()
        .map(|&x| {
            let c = config.with_x_min(x);
            let out = run(&c)?;
            let first = &out.snapshots[0];
            let rho = out.grid.moment(first, 1.0) + first.dust_mass;
            Ok(ShatterRow {
                x_min: x,
                n_cells: c.grid.n_cells,
                dust_fraction: out.final_state().dust_mass / rho,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    shatter_verdict(rows, config.time.t_end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{existence_bounds, nonexistence_bound};
    use crate::grid::InitialCondition;
    use crate::integrate::{integrate_snapshots, Tolerances};
    use crate::scheme::RhsWorkspace;
    use proptest::prelude::*;

    fn simulate(kernel: KernelSpec, law: DaughterLaw, grid: SizeGrid, init: InitialCondition, times: &[f64]) -> RunOutput {
        let ws = RhsWorkspace::precompute(&grid, &kernel, &law).unwrap();
        let s = init.discretize(&grid).unwrap();
        integrate_snapshots(&ws, &s, times, Tolerances::default(), &[1.0]).unwrap()
    }

    fn mesh(t_end: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| t_end * i as f64 / n as f64).collect()
    }

    #[test]
    fn mesh_derivative_is_exact_for_parabolas() {
        let t = [0.0, 0.1, 0.35, 0.4, 1.0];
        let y: Vec<f64> = t.iter().map(|x| 3.0 * x * x - x + 2.0).collect();
        let d = mesh_derivative(&t, &y).unwrap();
        for (x, dx) in t.iter().zip(d) {
            assert!((dx - (6.0 * x - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_order_identity_is_the_dust_budget() {
        let kernel = KernelSpec::new(0.6, 0.6).unwrap();
        let law = DaughterLaw::new(-1.2, 0.5).unwrap();
        let grid = SizeGrid::new(1e-3, 10.0, 48).unwrap();
        let out = simulate(kernel, law, grid, InitialCondition::Exponential { mean: 1.0, mass: 1.0 }, &mesh(0.5, 20));
        let id = moment_identity_residual(&out, &kernel, &law, 1.0).unwrap();
        for ((d, c), p) in id.dmk_dt.iter().zip(&id.dust_correction).zip(&id.production) {
            assert_eq!(*p, 0.0);
            assert!((d + c).abs() <= 1e-8 * c.abs().max(1e-12), "{d} vs {c}");
        }
    }

    #[test]
    fn sublinear_moment_grows_for_integrable_law() {
        let kernel = KernelSpec::new(0.5, 0.5).unwrap();
        let law = DaughterLaw::new(0.0, 0.5).unwrap();
        let grid = SizeGrid::new(1e-3, 4.0, 64).unwrap();
        let out = simulate(kernel, law, grid, InitialCondition::Monodisperse { size: 1.0, mass: 1.0 }, &mesh(0.1, 10));
        let id = moment_identity_residual(&out, &kernel, &law, 0.5).unwrap();
        assert!(id.dmk_dt[0] > 0.0);
    }

    #[test]
    fn c1_check_regimes() {
        let kernel = KernelSpec::new(0.3, 0.3).unwrap();
        let law = DaughterLaw::new(-1.1, 0.2).unwrap();
        let grid = SizeGrid::new(1e-3, 10.0, 32).unwrap();
        let out = simulate(kernel, law, grid.clone(), InitialCondition::Exponential { mean: 1.0, mass: 1.0 }, &[0.0]);
        let s0 = &out.snapshots[0];
        let report = existence_bounds(&kernel, &law, 1.0, grid.moment(s0, 0.2), grid.moment(s0, 1.2), &[]).unwrap();
        let t_k0 = report.existence.as_ref().unwrap().t_k0;
        let check = c1_bound_check(&out, &report, 0.2, 1e-9 * t_k0).unwrap();
        assert!(check.holds && check.margin >= 0.0);
        assert!(matches!(c1_bound_check(&out, &report, 0.2, 2.0 * t_k0), Err(Error::Input(_))));
        let other = nonexistence_bound(&kernel, &law, 1.0, 1.0, &|_| 1.0, &[0.5]).unwrap();
        assert!(matches!(c1_bound_check(&out, &other, 0.2, 0.1), Err(Error::Input(_))));
    }

    #[test]
    fn growth_check_trivial_cases() {
        let kernel = KernelSpec::new(0.0, 0.0).unwrap();
        let law = DaughterLaw::new(-1.5, 0.6).unwrap();
        let grid = SizeGrid::new(1e-2, 2.0, 40).unwrap();
        let out = simulate(kernel, law, grid, InitialCondition::Monodisperse { size: 1.0, mass: 1.0 }, &mesh(0.05, 10));
        let report = nonexistence_bound(&kernel, &law, 1.0, 1.0, &|_| 1.0, &[0.6]).unwrap();
        assert!(nonexistence_growth_check(&out, &report, &kernel, &law, 1.0).unwrap().holds);
        let g = nonexistence_growth_check(&out, &report, &kernel, &law, 0.6).unwrap();
        assert!(g.holds, "{g:?}");
        let wrong = existence_bounds(&KernelSpec::new(1.0, 1.0).unwrap(), &law, 1.0, 1.0, 1.0, &[]).unwrap();
        assert!(nonexistence_growth_check(&out, &wrong, &kernel, &law, 0.6).is_err());
    }

    #[test]
    fn budget_and_tails_on_a_short_run() {
        let kernel = KernelSpec::new(0.6, 0.6).unwrap();
        let law = DaughterLaw::new(-1.2, 0.5).unwrap();
        let grid = SizeGrid::new(1e-3, 10.0, 48).unwrap();
        let out = simulate(kernel, law, grid, InitialCondition::Exponential { mean: 1.0, mass: 1.0 }, &mesh(0.5, 10));
        assert!(mass_budget_check(&out).holds);
        assert!(tail_monotonicity_check(&out, 1.0).holds);
        assert!(tail_monotonicity_check(&out, 1.5).holds);
    }

    #[test]
    fn verdict_needs_three_points() {
        let row = |x: f64, d: f64| ShatterRow { x_min: x, n_cells: 10, dust_fraction: d };
        assert!(shatter_verdict(vec![row(1e-2, 0.1)], 1.0).is_err());
        let s = shatter_verdict(vec![row(1e-2, 1e-2), row(1e-3, 1e-4), row(1e-4, 1e-6)], 1.0).unwrap();
        assert_eq!(s.verdict, ShatterVerdict::Conservative);
        assert!((s.slope - 2.0).abs() < 1e-12);
        let s = shatter_verdict(vec![row(1e-2, 0.3), row(1e-3, 0.35), row(1e-4, 0.4)], 1.0).unwrap();
        assert_eq!(s.verdict, ShatterVerdict::Shattering);
    }

    #[test]
    fn distance_examples() {
        let grid = SizeGrid::new(0.1, 10.0, 4).unwrap();
        let a = State::from_contents(vec![1.0, 0.5, 0.0, 2.0]);
        let twice = a.scaled(2.0);
        assert_eq!(weighted_distance(&a, &a, &grid, 0.5).unwrap(), 0.0);
        let norm = weighted_distance(&a, &State::zeros(4), &grid, 0.5).unwrap();
        assert_eq!(weighted_distance(&a, &twice, &grid, 0.5).unwrap(), norm);
        assert!(weighted_distance(&a, &State::zeros(3), &grid, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(
            a in proptest::collection::vec(0.0f64..3.0, 12),
            b in proptest::collection::vec(0.0f64..3.0, 12),
            c in proptest::collection::vec(0.0f64..3.0, 12),
            k0 in 0.01f64..0.99,
        ) {
            let grid = SizeGrid::new(1e-2, 50.0, 12).unwrap();
            let (a, b, c) = (State::from_contents(a), State::from_contents(b), State::from_contents(c));
            let d = |x: &State, y: &State| weighted_distance(x, y, &grid, k0).unwrap();
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert!(d(&a, &c) <= (d(&a, &b) + d(&b, &c)) * (1.0 + 1e-14));
            prop_assert!(d(&a, &b) >= 0.0);
        }
    }
}
