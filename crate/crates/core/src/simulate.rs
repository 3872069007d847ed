//! Executes policies on the deterministic covariance dynamics and
//! measures their time-averaged cost against the bound.
//!
//! Three policy families: open-loop periodic switching (from a
//! Birkhoff–von Neumann schedule), the Whittle index policy (scalar
//! identical-sensor problems), and greedy largest-weighted-error. All
//! cost accounting is trapezoidal in the state term and exact in the
//! piecewise-constant measurement term.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use nalgebra::ComplexField;
use nalgebra::DMatrix;
use thiserror::Error;

use crate::birkhoff::{birkhoff_decompose, build_schedule, pad_square, BirkhoffError, SwitchingSchedule};
use crate::bound::{solve_bound, AssignmentMatrix, BoundError};
use crate::model::{composite_information, ModelError, SchedulingProblem};
use crate::riccati::{integrate_rde, rk4_step, CovarianceTrajectory, PiecewiseConstantInformation, RiccatiError};
use crate::whittle::{whittle_policy_step, ScalarSite, WhittleError};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("policy requires scalar systems with identical sensors")]
    ScalarStructureRequired,
    #[error("policy requires identical sensors")]
    IdenticalSensorsRequired,
    #[error("bad simulation window: {0}")]
    BadWindow(String),
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Birkhoff(#[from] BirkhoffError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Whittle(#[from] WhittleError),
}

/// Outcome of one policy run: time-averaged cost over the post-transient
/// window, per-system trajectories, and the realized measurement
/// fractions.
#[derive(Debug, Clone)]
pub struct PolicyResult {
    pub avg_cost: f64,
    pub trajectories: Vec<CovarianceTrajectory>,
    pub time_fractions: DMatrix<f64>,
    pub horizon: f64,
    pub transient_cut: f64,
    /// Review step (feedback policies) or cycle length (switching).
    pub step: f64,
}

fn check_window(horizon: f64, transient_cut: f64) -> Result<(), SimulateError> {
    if !(horizon > 0.0) || !(transient_cut >= 0.0) || transient_cut >= horizon {
        return Err(SimulateError::BadWindow(format!(
            "need 0 <= transient_cut < horizon, got cut = {transient_cut}, horizon = {horizon}"
        )));
    }
    Ok(())
}

/// Per-system information signal `S_i(t)` induced by a switching
/// schedule: one segment per atom, `C^T V^{-1} C` of the assigned sensor
/// (zero when unobserved), ε-periodic.
pub fn schedule_information(
    problem: &SchedulingProblem,
    schedule: &SwitchingSchedule,
    i: usize,
) -> Result<PiecewiseConstantInformation, SimulateError> {
    let dim = problem.system(i).state_dim();
    let values: Vec<DMatrix<f64>> = (0..schedule.atoms.len())
        .map(|k| match schedule.sensor_for_system(k, i) {
            Some(j) => problem.link_information(i, j).clone(),
            None => DMatrix::zeros(dim, dim),
        })
        .collect();
    Ok(PiecewiseConstantInformation::new(
        schedule.switch_times.clone(),
        values,
        Some(schedule.epsilon),
    )?)
}

/// Exact time fractions of each (system, sensor) pair over
/// `[t0, t1]` under a periodic schedule; pure interval arithmetic on
/// the switching times.
pub fn realized_time_fractions(
    schedule: &SwitchingSchedule,
    n: usize,
    m: usize,
    t0: f64,
    t1: f64,
) -> DMatrix<f64> {
    let eps = schedule.epsilon;
    let mut acc = DMatrix::<f64>::zeros(n, m);
    let first = (t0 / eps).floor() as i64;
    let last = (t1 / eps).ceil() as i64;
    for l in first..=last {
        let base = l as f64 * eps;
        for (k, atom) in schedule.atoms.iter().enumerate() {
            let (s, e) = schedule.segment(k);
            let lo = (base + s).max(t0);
            let hi = (base + e).min(t1);
            if hi > lo {
                for i in 0..n {
                    for j in 0..m {
                        if atom.pattern[(i, j)] > 0.5 {
                            acc[(i, j)] += hi - lo;
                        }
                    }
                }
            }
        }
    }
    acc / (t1 - t0)
}

/// Runs the periodic switching policy: per system, integrates the
/// Riccati flow under the ε-periodic information signal (grid aligned to
/// every switch), then averages `Tr(T Σ)` by trapezoid over
/// `[transient_cut, horizon]` and adds the exact measurement-cost rate.
pub fn run_switching(
    problem: &SchedulingProblem,
    schedule: &SwitchingSchedule,
    horizon: f64,
    transient_cut: f64,
) -> Result<PolicyResult, SimulateError> {
    check_window(horizon, transient_cut)?;
    let eps = schedule.epsilon;
    if horizon < 10.0 * eps {
        return Err(SimulateError::BadWindow(format!(
            "horizon {horizon} shorter than 10 cycles of {eps}"
        )));
    }
    let n = problem.n_systems();
    let m = problem.n_sensors();
    if schedule.atoms[0].pattern.nrows() != n || schedule.atoms[0].pattern.ncols() != m {
        return Err(SimulateError::BadWindow(String::from(
            "schedule pattern dimensions do not match the problem",
        )));
    }

    let mut trajectories = Vec::with_capacity(n);
    let mut avg_cost = 0.0;
    for i in 0..n {
        let sys = problem.system(i);
        let info = schedule_information(problem, schedule, i)?;
        let mut traj =
            integrate_rde(&sys.a, &sys.w, &info, &sys.sigma0, (0.0, horizon), eps / 20.0)?;
        traj.system_index = i;
        for (idx, &t) in traj.times.iter().enumerate() {
            let local = t - eps * (t / eps).floor();
            let k = schedule
                .switch_times
                .iter()
                .rposition(|&s| s <= local + 1e-12)
                .unwrap_or(0);
            traj.active_sensors[idx] = schedule.sensor_for_system(k, i);
        }
        avg_cost += traj.trapezoid_average(transient_cut, |sig| (&sys.t_weight * sig).trace());
        trajectories.push(traj);
    }

    let fractions = realized_time_fractions(schedule, n, m, transient_cut, horizon);
    for i in 0..n {
        for j in 0..m {
            avg_cost += problem.kappa(i, j) * fractions[(i, j)];
        }
    }
    Ok(PolicyResult {
        avg_cost,
        trajectories,
        time_fractions: fractions,
        horizon,
        transient_cut,
        step: eps,
    })
}

/// Shared driver for review-step feedback policies: at each step the
/// ranker picks which systems to measure; chosen system `r` uses sensor
/// `r` (sensors are interchangeable for these policies).
fn run_feedback_policy<R>(
    problem: &SchedulingProblem,
    m_active: usize,
    horizon: f64,
    dt: f64,
    transient_cut: f64,
    mut ranker: R,
) -> Result<PolicyResult, SimulateError>
where
    R: FnMut(&[DMatrix<f64>]) -> Vec<usize>,
{
    check_window(horizon, transient_cut)?;
    if !(dt > 0.0) || dt > horizon / 10.0 {
        return Err(SimulateError::BadWindow(format!(
            "review step {dt} must be positive and well below horizon {horizon}"
        )));
    }
    let n = problem.n_systems();
    let m = problem.n_sensors();
    if m_active > m || m_active > n {
        return Err(SimulateError::BadWindow(format!(
            "cannot measure {m_active} systems with {m} sensors over {n} systems"
        )));
    }

    let steps = (horizon / dt).round() as usize;
    let mut sigmas: Vec<DMatrix<f64>> =
        (0..n).map(|i| problem.system(i).sigma0.clone()).collect();
    let mut times = vec![0.0_f64];
    let mut covs: Vec<Vec<DMatrix<f64>>> = sigmas.iter().map(|s| vec![s.clone()]).collect();
    let mut actives: Vec<Vec<Option<usize>>> = vec![vec![None]; n];
    let mut fractions = DMatrix::<f64>::zeros(n, m);
    let mut meas_cost = 0.0;
    let window = horizon - transient_cut;

    for k in 0..steps {
        let t = k as f64 * dt;
        let t_next = (k + 1) as f64 * dt;
        let chosen = ranker(&sigmas);
        debug_assert!(chosen.len() == m_active);
        let overlap = (t_next.min(horizon) - t.max(transient_cut)).max(0.0);
        let mut assigned: Vec<Option<usize>> = vec![None; n];
        for (rank, &i) in chosen.iter().enumerate() {
            assigned[i] = Some(rank);
            if overlap > 0.0 {
                fractions[(i, rank)] += overlap;
                meas_cost += problem.kappa(i, rank) * overlap;
            }
        }
        for i in 0..n {
            let sys = problem.system(i);
            let dim = sys.state_dim();
            let s = match assigned[i] {
                Some(j) => problem.link_information(i, j).clone(),
                None => DMatrix::zeros(dim, dim),
            };
            sigmas[i] = rk4_step(&sys.a, &sys.w, &s, &sigmas[i], dt);
            covs[i].push(sigmas[i].clone());
            actives[i].push(assigned[i]);
        }
        times.push(t_next);
    }

    fractions /= window;
    let mut avg_cost = meas_cost / window;
    let mut trajectories = Vec::with_capacity(n);
    for i in 0..n {
        let sys = problem.system(i);
        let traj = CovarianceTrajectory {
            system_index: i,
            times: times.clone(),
            covariances: core::mem::take(&mut covs[i]),
            active_sensors: core::mem::take(&mut actives[i]),
        };
        avg_cost += traj.trapezoid_average(transient_cut, |sig| (&sys.t_weight * sig).trace());
        trajectories.push(traj);
    }
    Ok(PolicyResult {
        avg_cost,
        trajectories,
        time_fractions: fractions,
        horizon,
        transient_cut,
        step: dt,
    })
}

/// Whittle index policy: every `dt`, measure the `m_active` sites with
/// the highest index. Scalar identical-sensor problems only.
pub fn run_whittle(
    problem: &SchedulingProblem,
    m_active: usize,
    horizon: f64,
    dt: f64,
    transient_cut: f64,
) -> Result<PolicyResult, SimulateError> {
    let sites: Vec<ScalarSite> = (0..problem.n_systems())
        .map(|i| ScalarSite::from_problem(problem, i))
        .collect::<Result<_, _>>()
        .map_err(|_| SimulateError::ScalarStructureRequired)?;
    run_feedback_policy(problem, m_active, horizon, dt, transient_cut, move |sigmas| {
        let vals: Vec<f64> = sigmas.iter().map(|s| s[(0, 0)]).collect();
        whittle_policy_step(&sites, &vals, m_active)
    })
}

/// Greedy policy: every `dt`, measure the `m_active` systems with the
/// largest weighted error `Tr(T_i Σ_i)`. Requires identical sensors;
/// ties break toward the lowest system index.
pub fn run_greedy(
    problem: &SchedulingProblem,
    m_active: usize,
    horizon: f64,
    dt: f64,
    transient_cut: f64,
) -> Result<PolicyResult, SimulateError> {
    if !problem.identical_sensors() {
        return Err(SimulateError::IdenticalSensorsRequired);
    }
    let weights: Vec<DMatrix<f64>> =
        (0..problem.n_systems()).map(|i| problem.system(i).t_weight.clone()).collect();
    run_feedback_policy(problem, m_active, horizon, dt, transient_cut, move |sigmas| {
        let mut ranked: Vec<(usize, f64)> = sigmas
            .iter()
            .enumerate()
            .map(|(i, s)| (i, (&weights[i] * s).trace()))
            .collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite costs").then(a.0.cmp(&b.0)));
        let mut chosen: Vec<usize> = ranked[..m_active].iter().map(|&(i, _)| i).collect();
        chosen.sort_unstable();
        chosen
    })
}

/// Integrates the averaged Riccati flow (constant information
/// `Σ_j p_ij C^T V^{-1} C`) for every system; the trajectories converge
/// to the ARE solutions behind the bound.
pub fn averaged_rde_reference(
    problem: &SchedulingProblem,
    p: &AssignmentMatrix,
    horizon: f64,
) -> Result<Vec<CovarianceTrajectory>, SimulateError> {
    let mut out = Vec::with_capacity(problem.n_systems());
    let step = (horizon / 5000.0).clamp(1e-4, 0.01);
    for i in 0..problem.n_systems() {
        let sys = problem.system(i);
        let s = composite_information(problem, i, &p.row_weights(i))?;
        let info = PiecewiseConstantInformation::constant(s)?;
        let mut traj = integrate_rde(&sys.a, &sys.w, &info, &sys.sigma0, (0.0, horizon), step)?;
        traj.system_index = i;
        out.push(traj);
    }
    Ok(out)
}

/// One policy's line in a comparison report.
#[derive(Debug, Clone)]
pub struct PolicyComparison {
    pub policy: String,
    pub avg_cost: f64,
    /// Excess over the bound, `avg_cost - z_star`.
    pub gap: f64,
    pub time_fractions: DMatrix<f64>,
    /// ε for switching rows, review step for feedback rows.
    pub parameter: f64,
    pub trajectories: Vec<CovarianceTrajectory>,
}

/// Bound value plus one row per policy run; failures are collected, not
/// fatal.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub z_star: f64,
    pub p_star: DMatrix<f64>,
    pub rows: Vec<PolicyComparison>,
    pub failures: Vec<(String, String)>,
}

/// Runs the bound, the switching policy at each ε, and (structure
/// permitting) the Whittle and greedy policies, reporting each average
/// cost and its gap to the bound.
pub fn compare_policies(
    problem: &SchedulingProblem,
    epsilon_list: &[f64],
    horizon: f64,
) -> Result<ComparisonReport, SimulateError> {
    let bound = solve_bound(problem, 1e-8, 50_000)?;
    let transient_cut = horizon / 2.0;
    let mut rows = Vec::new();
    let mut failures: Vec<(String, String)> = Vec::new();

    for &eps in epsilon_list {
        let name = format!("switching(eps={eps})");
        let run = pad_square(&bound.p_star);
        let result = birkhoff_decompose(&run, 1e-12)
            .map_err(SimulateError::from)
            .and_then(|atoms| build_schedule(atoms, eps).map_err(SimulateError::from))
            .and_then(|schedule| run_switching(problem, &schedule, horizon, transient_cut));
        match result {
            Ok(r) => rows.push(PolicyComparison {
                policy: name,
                avg_cost: r.avg_cost,
                gap: r.avg_cost - bound.z_star,
                time_fractions: r.time_fractions,
                parameter: eps,
                trajectories: r.trajectories,
            }),
            Err(e) => failures.push((name, e.to_string())),
        }
    }

    let dt = epsilon_list
        .iter()
        .fold(f64::INFINITY, |acc, &e| acc.min(e / 10.0))
        .min(1e-3);
    let m_active = problem.n_sensors().min(problem.n_systems());
    match run_whittle(problem, m_active, horizon, dt, transient_cut) {
        Ok(r) => rows.push(PolicyComparison {
            policy: String::from("whittle"),
            avg_cost: r.avg_cost,
            gap: r.avg_cost - bound.z_star,
            time_fractions: r.time_fractions,
            parameter: dt,
            trajectories: r.trajectories,
        }),
        Err(e) => failures.push((String::from("whittle"), e.to_string())),
    }
    match run_greedy(problem, m_active, horizon, dt, transient_cut) {
        Ok(r) => rows.push(PolicyComparison {
            policy: String::from("greedy"),
            avg_cost: r.avg_cost,
            gap: r.avg_cost - bound.z_star,
            time_fractions: r.time_fractions,
            parameter: dt,
            trajectories: r.trajectories,
        }),
        Err(e) => failures.push((String::from("greedy"), e.to_string())),
    }

    Ok(ComparisonReport {
        z_star: bound.z_star,
        p_star: bound.p_star.matrix().clone(),
        rows,
        failures,
    })
}
