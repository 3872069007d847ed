//! `sensched`: compute optimal-attention sensor schedules for
//! continuous-time Kalman filtering and compare policies against the
//! performance bound.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use sensched_cli::output::{matrix_to_json, metadata, trajectories_to_csv};
use sensched_cli::problem::load_problem;
use sensched_core::bound::{dual_decomposition_solve, solve_bound, AssignmentMatrix, BoundResult};
use sensched_core::birkhoff::{birkhoff_decompose, build_schedule, pad_square};
use sensched_core::model::validate_problem;
use sensched_core::simulate::{
    averaged_rde_reference, compare_policies, run_greedy, run_switching, run_whittle,
    PolicyResult,
};
use sensched_core::whittle::{scalar_dual_bound, whittle_index, DualMode, ScalarSite};
use sensched_core::{ConstraintMode, SchedulingProblem};

#[derive(Parser)]
#[command(
    name = "sensched",
    version,
    about = "Sensor scheduling for continuous-time Kalman filtering: \
             performance bounds, Whittle indices, switching schedules, and policy simulation"
)]
struct Cli {
    /// Seed echoed into result metadata (for randomized workflows)
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the standing assumptions on a problem file
    Validate { problem: PathBuf },
    /// Compute the performance lower bound and the optimal fractions
    Bound {
        problem: PathBuf,
        /// Optimality-gap tolerance
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 20_000)]
        max_iters: usize,
        /// Solver: conditional gradient (fw) or dual decomposition (dual)
        #[arg(long, default_value = "fw", value_parser = ["fw", "dual"])]
        method: String,
        /// Use the single-multiplier scalar dual instead
        #[arg(long)]
        scalar: bool,
        /// Write the JSON result here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit Whittle index tables over a variance grid (CSV)
    Indices {
        problem: PathBuf,
        /// Upper end of the variance grid (default: 3x the largest fixed point)
        #[arg(long)]
        sigma_max: Option<f64>,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decompose the optimal fractions into a periodic switching schedule
    Decompose {
        problem: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Cycle length of the schedule
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one policy on the covariance dynamics and write trajectories
    Simulate {
        problem: PathBuf,
        #[arg(long, value_parser = ["switching", "whittle", "greedy"])]
        policy: String,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        /// Review step for feedback policies
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 50.0)]
        horizon: f64,
        /// Start of the averaging window (default: horizon/2)
        #[arg(long)]
        transient_cut: Option<f64>,
        /// Trajectory CSV path
        #[arg(long, default_value = "trajectories.csv")]
        out: PathBuf,
    },
    /// Compare bound, switching, Whittle, and greedy on one problem
    Compare {
        problem: PathBuf,
        /// Switching cycle length; repeat the flag for several values
        #[arg(long = "epsilon")]
        epsilons: Vec<f64>,
        #[arg(long, default_value_t = 50.0)]
        horizon: f64,
        /// Directory for per-policy trajectory CSV files
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Write the JSON report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            2
        }
    };
    std::process::exit(code);
}

fn emit(value: &Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")
            .with_context(|| format!("writing {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn require_positive(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0) {
        bail!("{name} must be strictly positive, got {value}");
    }
    Ok(())
}

fn scalar_mode(problem: &SchedulingProblem) -> Result<DualMode> {
    let modes = problem.sensor_modes();
    if modes.iter().all(|&m| m == ConstraintMode::ExactlyOne) {
        Ok(DualMode::Equality)
    } else if modes.iter().all(|&m| m == ConstraintMode::AtMostOne) {
        Ok(DualMode::Inequality)
    } else {
        bail!("scalar dual needs a uniform sensor mode (all at-most-one or all exactly-one)")
    }
}

fn bound_json(res: &BoundResult, problem: &SchedulingProblem) -> Value {
    let per_system: Vec<f64> = res
        .sigma_star
        .iter()
        .enumerate()
        .map(|(i, sig)| (&problem.system(i).t_weight * sig).trace())
        .collect();
    json!({
        "z_star": res.z_star,
        "p_star": matrix_to_json(res.p_star.matrix()),
        "gap": res.certificate,
        "iterations": res.iterations,
        "per_system_trace": per_system,
    })
}

fn policy_summary(name: &str, r: &PolicyResult) -> Value {
    json!({
        "policy": name,
        "avg_cost": r.avg_cost,
        "time_fractions": matrix_to_json(&r.time_fractions),
        "horizon": r.horizon,
        "transient_cut": r.transient_cut,
        "step": r.step,
    })
}

fn run(cli: Cli) -> Result<i32> {
    let start = Instant::now();
    let seed = cli.seed;
    match cli.command {
        Command::Validate { problem } => {
            let p = load_problem(&problem)?;
            let report = validate_problem(&p);
            for f in &report.findings {
                let tag = if f.passed { "PASS" } else { "FAIL" };
                println!("{tag} {}: {}", f.subject, f.detail);
            }
            if report.passed() {
                println!("all assumptions hold");
                Ok(0)
            } else {
                println!("validation failed");
                Ok(1)
            }
        }

        Command::Bound { problem, tol, max_iters, method, scalar, out } => {
            require_positive("--tol", tol)?;
            let p = load_problem(&problem)?;
            let config = json!({
                "subcommand": "bound", "problem": problem.display().to_string(),
                "tol": tol, "max_iters": max_iters, "method": method, "scalar": scalar,
            });
            let body = if scalar {
                let sites: Vec<ScalarSite> = (0..p.n_systems())
                    .map(|i| ScalarSite::from_problem(&p, i))
                    .collect::<Result<_, _>>()?;
                let b = scalar_dual_bound(&sites, p.n_sensors(), scalar_mode(&p)?)?;
                json!({
                    "lambda_star": b.lambda_star,
                    "gamma_star": b.gamma_star,
                    "per_site_gamma": b.per_site_gamma,
                })
            } else {
                let res = match method.as_str() {
                    "dual" => dual_decomposition_solve(&p, tol)?,
                    _ => solve_bound(&p, tol, max_iters)?,
                };
                bound_json(&res, &p)
            };
            let mut body = body;
            body["metadata"] = metadata(config, seed, start.elapsed().as_secs_f64());
            emit(&body, out.as_deref())?;
            Ok(0)
        }

        Command::Indices { problem, sigma_max, points, out } => {
            let p = load_problem(&problem)?;
            if points < 2 {
                bail!("--points must be at least 2");
            }
            let sites: Vec<ScalarSite> = (0..p.n_systems())
                .map(|i| ScalarSite::from_problem(&p, i))
                .collect::<Result<_, _>>()?;
            let hi = match sigma_max {
                Some(v) => {
                    require_positive("--sigma-max", v)?;
                    v
                }
                None => {
                    let scale = sites
                        .iter()
                        .map(|s| {
                            s.x2()
                                .unwrap_or(0.0)
                                .max(if s.x_e().is_finite() { s.x_e() } else { 0.0 })
                        })
                        .fold(0.0_f64, f64::max);
                    if scale > 0.0 {
                        3.0 * scale
                    } else {
                        10.0
                    }
                }
            };
            let mut csv = String::from("site,Sigma,lambda\n");
            for (i, site) in sites.iter().enumerate() {
                for k in 0..points {
                    let sigma = hi * k as f64 / (points - 1) as f64;
                    csv.push_str(&format!("{i},{sigma},{}\n", whittle_index(site, sigma)));
                }
            }
            match out {
                Some(path) => std::fs::write(&path, csv)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{csv}"),
            }
            Ok(0)
        }

        Command::Decompose { problem, tol, epsilon, out } => {
            require_positive("--tol", tol)?;
            require_positive("--epsilon", epsilon)?;
            let p = load_problem(&problem)?;
            let res = solve_bound(&p, tol, 20_000)?;
            let atoms = birkhoff_decompose(&pad_square(&res.p_star), 1e-12)?;
            let schedule = build_schedule(atoms, epsilon)?;
            let config = json!({
                "subcommand": "decompose", "problem": problem.display().to_string(),
                "tol": tol, "epsilon": epsilon,
            });
            let body = json!({
                "atoms": schedule.atoms.iter().map(|a| json!({
                    "phi": a.phi,
                    "pattern": matrix_to_json(&a.pattern),
                })).collect::<Vec<_>>(),
                "epsilon": schedule.epsilon,
                "switch_times": schedule.switch_times,
                "p_star": matrix_to_json(res.p_star.matrix()),
                "z_star": res.z_star,
                "metadata": metadata(config, seed, start.elapsed().as_secs_f64()),
            });
            emit(&body, out.as_deref())?;
            Ok(0)
        }

        Command::Simulate { problem, policy, epsilon, dt, horizon, transient_cut, out } => {
            require_positive("--epsilon", epsilon)?;
            require_positive("--dt", dt)?;
            require_positive("--horizon", horizon)?;
            if policy == "switching" && epsilon >= horizon / 10.0 {
                bail!("--epsilon must be below horizon/10 = {}", horizon / 10.0);
            }
            let cut = transient_cut.unwrap_or(horizon / 2.0);
            let p = load_problem(&problem)?;
            let m_active = p.n_sensors().min(p.n_systems());
            let config = json!({
                "subcommand": "simulate", "problem": problem.display().to_string(),
                "policy": policy, "epsilon": epsilon, "dt": dt,
                "horizon": horizon, "transient_cut": cut,
            });
            let (result, extra) = match policy.as_str() {
                "switching" => {
                    let bound = solve_bound(&p, 1e-8, 50_000)?;
                    let atoms = birkhoff_decompose(&pad_square(&bound.p_star), 1e-12)?;
                    let schedule = build_schedule(atoms, epsilon)?;
                    let r = run_switching(&p, &schedule, horizon, cut)?;
                    let gap = r.avg_cost - bound.z_star;
                    (r, json!({ "z_star": bound.z_star, "gap": gap }))
                }
                "whittle" => (run_whittle(&p, m_active, horizon, dt, cut)?, json!({})),
                _ => (run_greedy(&p, m_active, horizon, dt, cut)?, json!({})),
            };
            std::fs::write(&out, trajectories_to_csv(&result.trajectories))
                .with_context(|| format!("writing {}", out.display()))?;
            let mut body = policy_summary(&policy, &result);
            if let Some(obj) = extra.as_object() {
                for (k, v) in obj {
                    body[k] = v.clone();
                }
            }
            body["trajectories_csv"] = json!(out.display().to_string());
            body["metadata"] = metadata(config, seed, start.elapsed().as_secs_f64());
            emit(&body, None)?;
            Ok(0)
        }

        Command::Compare { problem, epsilons, horizon, out_dir, out } => {
            require_positive("--horizon", horizon)?;
            let eps_list = if epsilons.is_empty() { vec![0.05] } else { epsilons };
            for &e in &eps_list {
                require_positive("--epsilon", e)?;
                if e >= horizon / 10.0 {
                    bail!("--epsilon {e} must be below horizon/10 = {}", horizon / 10.0);
                }
            }
            let p = load_problem(&problem)?;
            let report = compare_policies(&p, &eps_list, horizon)?;
            std::fs::create_dir_all(&out_dir)
                .with_context(|| format!("creating {}", out_dir.display()))?;

            let mut rows = Vec::new();
            for row in &report.rows {
                let file_name = if row.policy.starts_with("switching") {
                    format!("switching_eps{}.csv", row.parameter)
                } else {
                    format!("{}.csv", row.policy)
                };
                let path = out_dir.join(&file_name);
                std::fs::write(&path, trajectories_to_csv(&row.trajectories))
                    .with_context(|| format!("writing {}", path.display()))?;
                rows.push(json!({
                    "policy": row.policy,
                    "avg_cost": row.avg_cost,
                    "gap": row.gap,
                    "parameter": row.parameter,
                    "time_fractions": matrix_to_json(&row.time_fractions),
                    "trajectories_csv": path.display().to_string(),
                }));
            }

            // reference trajectories of the averaged Riccati flow at p*
            let p_star = AssignmentMatrix::new(
                report.p_star.clone(),
                p.sensor_modes().to_vec(),
                p.system_modes().to_vec(),
            )?;
            let reference = averaged_rde_reference(&p, &p_star, horizon)?;
            let ref_path = out_dir.join("averaged_rde.csv");
            std::fs::write(&ref_path, trajectories_to_csv(&reference))
                .with_context(|| format!("writing {}", ref_path.display()))?;

            let config = json!({
                "subcommand": "compare", "problem": problem.display().to_string(),
                "epsilon": eps_list, "horizon": horizon,
                "out_dir": out_dir.display().to_string(),
            });
            let body = json!({
                "z_star": report.z_star,
                "p_star": matrix_to_json(&report.p_star),
                "rows": rows,
                "failures": report.failures,
                "averaged_rde_csv": ref_path.display().to_string(),
                "metadata": metadata(config, seed, start.elapsed().as_secs_f64()),
            });
            emit(&body, out.as_deref())?;
            Ok(0)
        }
    }
}
