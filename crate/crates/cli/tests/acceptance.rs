//! Acceptance suite: one test per quality gate, each printing a single
//! PASS/FAIL line (run with `--nocapture` to see them on success).

use std::path::Path;
use std::time::Instant;

use nalgebra::{dmatrix, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sensched_cli::problem::load_problem;
use sensched_core::birkhoff::{birkhoff_decompose, build_schedule, pad_square, SubstochasticSquare};
use sensched_core::bound::{
    dual_decomposition_solve, evaluate_objective, objective_gradient, solve_bound,
    AssignmentMatrix, BoundResult,
};
use sensched_core::linalg;
use sensched_core::model::{ConstraintMode, SchedulingProblem, SensorLink, SystemModel};
use sensched_core::riccati::{
    integrate_rde, periodic_steady_state, solve_care, PiecewiseConstantInformation,
};
use sensched_core::simulate::{
    compare_policies, realized_time_fractions, run_greedy, run_whittle, schedule_information,
};
use sensched_core::whittle::{
    scalar_dual_bound, threshold, whittle_index, DualMode, ScalarSite,
};

fn fig1_path() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/data/fig1.json"))
}

fn report(criterion: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "acceptance criterion {criterion} ({name}): {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn scalar_problem(
    sites: &[(f64, f64, f64, f64, f64, f64)], // (a, c, v, w, t, kappa)
    n_sensors: usize,
    sensor_mode: ConstraintMode,
) -> SchedulingProblem {
    let systems: Vec<SystemModel> = sites
        .iter()
        .map(|&(a, _, _, w, t, _)| {
            SystemModel::new(dmatrix![a], dmatrix![w], dmatrix![1.0], dmatrix![t]).unwrap()
        })
        .collect();
    let links: Vec<Vec<SensorLink>> = sites
        .iter()
        .map(|&(_, c, v, _, _, kappa)| {
            (0..n_sensors)
                .map(|_| SensorLink::new(dmatrix![c], dmatrix![v], kappa).unwrap())
                .collect()
        })
        .collect();
    SchedulingProblem::new(
        systems,
        links,
        vec![sensor_mode; n_sensors],
        vec![ConstraintMode::AtMostOne; sites.len()],
    )
    .unwrap()
}

#[test]
fn criterion_1_figure_reproduction() {
    let start = Instant::now();
    let p = load_problem(fig1_path()).unwrap();
    let bound = solve_bound(&p, 1e-8, 50_000).unwrap();
    let whittle = run_whittle(&p, 1, 50.0, 1e-3, 25.0).unwrap();
    let greedy = run_greedy(&p, 1, 50.0, 1e-3, 25.0).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    let p0 = bound.p_star.matrix()[(0, 0)];
    let p1 = bound.p_star.matrix()[(1, 0)];
    let ok_z = (bound.z_star - 7.98).abs() <= 0.02;
    let ok_p = (p0 - 0.23).abs() <= 0.01 && (p1 - 0.77).abs() <= 0.01;
    let ok_w = (whittle.avg_cost - 7.98).abs() <= 0.05;
    let ok_g = (greedy.avg_cost - 9.2).abs() <= 0.15;
    let ok_t = elapsed < 30.0;
    let pass = ok_z && ok_p && ok_w && ok_g && ok_t;
    report(
        1,
        "figure-1 reproduction",
        pass,
        &format!(
            "z*={:.4} p*=({p0:.4},{p1:.4}) whittle={:.4} greedy={:.4} in {elapsed:.1}s",
            bound.z_star, whittle.avg_cost, greedy.avg_cost
        ),
    );
    assert!(ok_z, "bound {} not within 7.98±0.02", bound.z_star);
    assert!(ok_p, "fractions ({p0}, {p1}) not within (0.23, 0.77)±0.01");
    assert!(ok_w, "whittle {} not within 7.98±0.05", whittle.avg_cost);
    assert!(ok_g, "greedy {} not within 9.2±0.15", greedy.avg_cost);
    assert!(ok_t, "runtime {elapsed:.1}s exceeds 30s");
}

/// Long-run average cost of the ε-periodic switching policy, measured on
/// its limit cycle.
fn switching_steady_cost(p: &SchedulingProblem, bound: &BoundResult, eps: f64) -> f64 {
    let atoms = birkhoff_decompose(&pad_square(&bound.p_star), 1e-12).unwrap();
    let schedule = build_schedule(atoms, eps).unwrap();
    let mut z = 0.0;
    for i in 0..p.n_systems() {
        let sys = p.system(i);
        let info = schedule_information(p, &schedule, i).unwrap();
        let orbit = periodic_steady_state(&sys.a, &sys.w, &info, &sys.sigma0).unwrap();
        z += orbit.trapezoid_average(0.0, |s| (&sys.t_weight * s).trace());
    }
    let fr = realized_time_fractions(&schedule, p.n_systems(), p.n_sensors(), 0.0, eps);
    for i in 0..p.n_systems() {
        for j in 0..p.n_sensors() {
            z += p.kappa(i, j) * fr[(i, j)];
        }
    }
    z
}

#[test]
fn criterion_2_epsilon_tightness() {
    let start = Instant::now();
    let p = load_problem(fig1_path()).unwrap();
    let bound = solve_bound(&p, 1e-10, 50_000).unwrap();
    let eps_list = [0.2, 0.1, 0.05, 0.025];
    let gaps: Vec<f64> = eps_list
        .iter()
        .map(|&e| switching_steady_cost(&p, &bound, e) - bound.z_star)
        .collect();

    let all_positive = gaps.iter().all(|&g| g > 0.0);
    let mut halving = true;
    for k in 0..3 {
        if gaps[k + 1] > 0.65 * gaps[k] {
            halving = false;
        }
    }
    // least-squares fit gap = a + b eps
    let n = eps_list.len() as f64;
    let sx: f64 = eps_list.iter().sum();
    let sy: f64 = gaps.iter().sum();
    let sxx: f64 = eps_list.iter().map(|x| x * x).sum();
    let sxy: f64 = eps_list.iter().zip(&gaps).map(|(x, y)| x * y).sum();
    let b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let a = (sy - b * sx) / n;
    let ss_res: f64 =
        eps_list.iter().zip(&gaps).map(|(x, y)| (y - (a + b * x)).powi(2)).sum();
    let mean = sy / n;
    let ss_tot: f64 = gaps.iter().map(|y| (y - mean).powi(2)).sum();
    let r2 = 1.0 - ss_res / ss_tot;
    let elapsed = start.elapsed().as_secs_f64();
    let ok_t = elapsed < 60.0;
    let pass = all_positive && halving && r2 >= 0.95 && ok_t;
    report(
        2,
        "O(eps) switching tightness",
        pass,
        &format!("gaps={gaps:?} R2={r2:.4} in {elapsed:.1}s"),
    );
    assert!(all_positive, "gaps not all positive: {gaps:?}");
    assert!(halving, "halving eps does not shrink the gap by 0.65x: {gaps:?}");
    assert!(r2 >= 0.95, "linear fit R2 = {r2}");
    assert!(ok_t, "runtime {elapsed:.1}s exceeds 60s");
}

#[test]
fn criterion_3_solver_cross_validation() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_scalar = 0.0_f64;
    let mut worst_dual = 0.0_f64;
    for inst in 0..20 {
        let n = rng.gen_range(2..=6usize);
        let m = rng.gen_range(1..n);
        let eq = inst % 2 == 0;
        let sites: Vec<(f64, f64, f64, f64, f64, f64)> = (0..n)
            .map(|_| {
                (
                    rng.gen_range(-1.5..2.0),
                    rng.gen_range(0.4..1.8),
                    rng.gen_range(0.4..1.8),
                    rng.gen_range(0.3..1.5),
                    rng.gen_range(0.2..1.5),
                    rng.gen_range(0.0..0.5),
                )
            })
            .collect();
        let mode =
            if eq { ConstraintMode::ExactlyOne } else { ConstraintMode::AtMostOne };
        let problem = scalar_problem(&sites, m, mode);
        let scalar_sites: Vec<ScalarSite> = sites
            .iter()
            .map(|&(a, c, v, w, t, k)| ScalarSite::new(a, c, v, w, t, k).unwrap())
            .collect();
        let dual_mode = if eq { DualMode::Equality } else { DualMode::Inequality };

        let fw = solve_bound(&problem, 1e-8, 50_000).unwrap();
        let scalar = scalar_dual_bound(&scalar_sites, m, dual_mode).unwrap();
        let dd = dual_decomposition_solve(&problem, 1e-5).unwrap();

        let rel_scalar = (scalar.gamma_star - fw.z_star).abs() / fw.z_star.abs();
        let rel_dual = (dd.z_star - fw.z_star).abs() / fw.z_star.abs();
        worst_scalar = worst_scalar.max(rel_scalar);
        worst_dual = worst_dual.max(rel_dual);
        assert!(
            rel_scalar <= 1e-3,
            "instance {inst} (N={n}, M={m}, eq={eq}): scalar {} vs fw {}",
            scalar.gamma_star,
            fw.z_star
        );
        assert!(
            rel_dual <= 1e-3,
            "instance {inst} (N={n}, M={m}, eq={eq}): dual {} vs fw {}",
            dd.z_star,
            fw.z_star
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok_t = elapsed < 120.0;
    report(
        3,
        "solver cross-validation",
        ok_t,
        &format!(
            "20 instances, worst scalar rel {worst_scalar:.2e}, worst dual rel {worst_dual:.2e}, in {elapsed:.1}s"
        ),
    );
    assert!(ok_t, "runtime {elapsed:.1}s exceeds 120s");
}

fn random_site(rng: &mut ChaCha8Rng) -> ScalarSite {
    ScalarSite::new(
        rng.gen_range(-2.0..2.0),
        rng.gen_range(0.2..2.0),
        rng.gen_range(0.2..2.0),
        rng.gen_range(0.2..2.0),
        rng.gen_range(0.1..2.0),
        rng.gen_range(0.0..1.0),
    )
    .unwrap()
}

#[test]
fn criterion_4_whittle_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_seam = 0.0_f64;
    let mut worst_round = 0.0_f64;
    for _ in 0..1000 {
        let s = random_site(&mut rng);
        let x2 = s.x2().unwrap();
        let xe = s.x_e();
        let hi = 3.0 * x2.max(if xe.is_finite() { xe } else { 0.0 });

        // indexability: strictly increasing over 100 grid points
        let mut prev = whittle_index(&s, 0.0);
        for k in 1..=100 {
            let sigma = hi * k as f64 / 100.0;
            let cur = whittle_index(&s, sigma);
            assert!(cur > prev, "index not strictly increasing at sigma {sigma}");
            prev = cur;
        }

        // branch agreement at the seams, straight from the formulas
        let (t, c, v, a, w, kap) = (s.t_weight, s.c, s.v, s.a, s.w, s.kappa);
        let x1 = s.x1().unwrap();
        let f_rational = -kap + t * x2 * x2 / (x2 - x1);
        let f_cubic_at_x2 = -kap + (c * c / (2.0 * v)) * t * x2.powi(3) / (a * x2 + w);
        let seam1 =
            (f_rational - f_cubic_at_x2).abs() / f_rational.abs().max(1.0);
        worst_seam = worst_seam.max(seam1);
        assert!(seam1 <= 1e-9, "x2 seam mismatch {seam1}");
        if xe.is_finite() {
            let f_cubic_at_xe = -kap + (c * c / (2.0 * v)) * t * xe.powi(3) / (a * xe + w);
            let f_idle = -kap + t * c * c * xe * xe / (2.0 * a.abs() * v);
            let seam2 = (f_cubic_at_xe - f_idle).abs() / f_idle.abs().max(1.0);
            worst_seam = worst_seam.max(seam2);
            assert!(seam2 <= 1e-9, "x_e seam mismatch {seam2}");
        }

        // threshold inverts the index on every branch
        let mut probes = vec![0.4 * x2, 0.95 * x2, x2];
        if xe.is_finite() {
            probes.push(0.5 * (x2 + xe));
            probes.push(1.8 * xe);
        } else {
            probes.push(2.5 * x2);
            probes.push(8.0 * x2);
        }
        for sigma in probes {
            let lam = whittle_index(&s, sigma);
            let back = threshold(&s, lam).unwrap();
            let rel = (back - sigma).abs() / sigma.abs().max(1e-12);
            worst_round = worst_round.max(rel);
            assert!(rel <= 1e-8, "roundtrip error {rel} at sigma {sigma}");
        }
    }
    report(
        4,
        "whittle index properties",
        true,
        &format!(
            "1000 sites x 100 points monotone; worst seam {worst_seam:.2e}, worst roundtrip {worst_round:.2e}"
        ),
    );
}

fn random_care_instance(
    rng: &mut ChaCha8Rng,
    n: usize,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let w = &g * g.transpose() + DMatrix::<f64>::identity(n, n) * 0.3;
    let rows = rng.gen_range(1..=n);
    let c = DMatrix::<f64>::from_fn(rows, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = DMatrix::<f64>::from_fn(rows, rows, |_, _| rng.gen_range(-0.5..0.5));
    let v = &h * h.transpose() + DMatrix::<f64>::identity(rows, rows) * 0.3;
    let vinv_c = v.clone().cholesky().unwrap().solve(&c);
    let s = linalg::symmetrize(&(c.transpose() * vinv_c));
    (a, s, w)
}

#[test]
fn criterion_5_riccati_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst_res = 0.0_f64;
    let mut rde_checked = 0;
    let mut worst_rde = 0.0_f64;
    for inst in 0..100 {
        let n = rng.gen_range(1..=6usize);
        let (a, s, w) = random_care_instance(&mut rng, n);
        if !linalg::pbh_detectable(&a, &s).unwrap() {
            continue; // random draws are detectable almost surely
        }
        let sigma = solve_care(&a, &s, &w).unwrap();
        let res = &a * &sigma + &sigma * a.transpose() + &w - &sigma * &s * &sigma;
        let denom = 1.0
            + linalg::amax(&w)
            + 2.0 * linalg::amax(&(&a * &sigma))
            + linalg::amax(&(&sigma * &s * &sigma));
        let rel = linalg::amax(&res) / denom;
        worst_res = worst_res.max(rel);
        assert!(rel <= 1e-9, "instance {inst}: CARE residual {rel}");
        let closed = &a - &sigma * &s;
        let abscissa = linalg::spectral_abscissa(&closed).unwrap();
        assert!(abscissa < 0.0, "instance {inst}: closed loop not Hurwitz ({abscissa})");

        // differential endpoint vs algebraic solution on a subsample
        if rde_checked < 10 && abscissa < -0.15 {
            rde_checked += 1;
            let horizon = (30.0 / abscissa.abs()).min(250.0);
            let info = PiecewiseConstantInformation::constant(s.clone()).unwrap();
            let sigma0 = DMatrix::<f64>::identity(n, n);
            let traj = integrate_rde(&a, &w, &info, &sigma0, (0.0, horizon), 5e-3).unwrap();
            let err = linalg::amax(&(traj.last_covariance() - &sigma));
            worst_rde = worst_rde.max(err);
            assert!(err <= 1e-6, "instance {inst}: RDE endpoint error {err}");
        }
    }

    // RK4 order: halving the step shrinks the endpoint error >= 12x
    let a = dmatrix![0.3, 1.0; -0.2, -0.8];
    let w = DMatrix::<f64>::identity(2, 2);
    let info =
        PiecewiseConstantInformation::constant(dmatrix![1.0, 0.0; 0.0, 0.5]).unwrap();
    let sigma0 = DMatrix::<f64>::identity(2, 2) * 2.0;
    let run = |h: f64| {
        integrate_rde(&a, &w, &info, &sigma0, (0.0, 1.0), h)
            .unwrap()
            .last_covariance()
            .clone()
    };
    let fine = run(1.0 / 1024.0);
    let e1 = linalg::amax(&(run(1.0 / 16.0) - &fine));
    let e2 = linalg::amax(&(run(1.0 / 32.0) - &fine));
    let order_ratio = e1 / e2;
    assert!(order_ratio >= 12.0, "RK4 order ratio {order_ratio}");

    report(
        5,
        "riccati correctness",
        true,
        &format!(
            "worst CARE residual {worst_res:.2e}; {rde_checked} RDE endpoints (worst {worst_rde:.2e}); RK4 ratio {order_ratio:.1}"
        ),
    );
}

#[test]
fn criterion_6_birkhoff_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst_recon = 0.0_f64;
    let mut worst_frac = 0.0_f64;
    let mut max_atoms = 0usize;
    for _ in 0..1000 {
        let d = rng.gen_range(1..=8usize);
        let mut p = DMatrix::<f64>::from_fn(d, d, |_, _| rng.gen_range(0.0..1.0));
        for r in 0..d {
            let s: f64 = p.row(r).iter().sum();
            if s > 1.0 {
                for c in 0..d {
                    p[(r, c)] /= s;
                }
            }
        }
        for c in 0..d {
            let s: f64 = p.column(c).iter().sum();
            if s > 1.0 {
                for r in 0..d {
                    p[(r, c)] /= s;
                }
            }
        }
        let sq = SubstochasticSquare::new(p.clone(), d, d).unwrap();
        let atoms = birkhoff_decompose(&sq, 1e-12).unwrap();
        let bound = (2 * d - 1) * (2 * d - 1) + 1;
        assert!(atoms.len() <= bound, "{} atoms exceed bound {bound}", atoms.len());
        max_atoms = max_atoms.max(atoms.len());

        let mut recon = DMatrix::<f64>::zeros(d, d);
        for at in &atoms {
            for r in 0..d {
                assert!(at.pattern.row(r).iter().sum::<f64>() <= 1.0 + 1e-12);
            }
            for c in 0..d {
                assert!(at.pattern.column(c).iter().sum::<f64>() <= 1.0 + 1e-12);
            }
            assert!(at.pattern.iter().all(|&e| e == 0.0 || e == 1.0));
            recon += &at.pattern * at.phi;
        }
        let err = linalg::amax(&(&recon - &p));
        worst_recon = worst_recon.max(err);
        assert!(err <= 1e-10, "reconstruction error {err}");

        // simulator accounting over whole cycles reproduces the fractions
        let schedule = build_schedule(atoms, 0.07).unwrap();
        let fr = realized_time_fractions(&schedule, d, d, 0.0, 3.0 * 0.07);
        let ferr = linalg::amax(&(&fr - &p));
        worst_frac = worst_frac.max(ferr);
        assert!(ferr <= 1e-6, "time-fraction error {ferr}");
    }
    report(
        6,
        "birkhoff decomposition",
        true,
        &format!(
            "1000 matrices: worst reconstruction {worst_recon:.2e}, worst fraction {worst_frac:.2e}, max atoms {max_atoms}"
        ),
    );
}

fn random_matrix_problem(rng: &mut ChaCha8Rng, n_sys: usize, m_sens: usize) -> SchedulingProblem {
    let systems: Vec<SystemModel> = (0..n_sys)
        .map(|_| {
            let dim = rng.gen_range(1..=4usize);
            let a = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
            let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.gen_range(-0.7..0.7));
            let w = &g * g.transpose() + DMatrix::<f64>::identity(dim, dim) * 0.3;
            let h = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.gen_range(-0.5..0.5));
            let t = &h * h.transpose() + DMatrix::<f64>::identity(dim, dim) * 0.1;
            let sigma0 = DMatrix::<f64>::identity(dim, dim);
            SystemModel::new(a, w, sigma0, t).unwrap()
        })
        .collect();
    let links: Vec<Vec<SensorLink>> = systems
        .iter()
        .map(|sys| {
            let dim = sys.state_dim();
            (0..m_sens)
                .map(|_| {
                    let rows = rng.gen_range(1..=dim);
                    let c = DMatrix::<f64>::from_fn(rows, dim, |_, _| rng.gen_range(-1.0..1.0));
                    let h = DMatrix::<f64>::from_fn(rows, rows, |_, _| rng.gen_range(-0.4..0.4));
                    let v = &h * h.transpose() + DMatrix::<f64>::identity(rows, rows) * 0.4;
                    SensorLink::new(c, v, rng.gen_range(0.0..0.3)).unwrap()
                })
                .collect()
        })
        .collect();
    SchedulingProblem::new(
        systems,
        links,
        vec![ConstraintMode::AtMostOne; m_sens],
        vec![ConstraintMode::AtMostOne; n_sys],
    )
    .unwrap()
}

#[test]
fn criterion_7_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut checked = 0;
    let mut worst = 0.0_f64;
    while checked < 50 {
        let n_sys = rng.gen_range(1..=3usize);
        let m_sens = rng.gen_range(1..=3usize);
        let problem = random_matrix_problem(&mut rng, n_sys, m_sens);

        // random interior feasible point
        let mut p = DMatrix::<f64>::from_fn(n_sys, m_sens, |_, _| rng.gen_range(0.05..0.95));
        for r in 0..n_sys {
            let s: f64 = p.row(r).iter().sum();
            if s > 0.95 {
                for c in 0..m_sens {
                    p[(r, c)] *= 0.95 / s;
                }
            }
        }
        for c in 0..m_sens {
            let s: f64 = p.column(c).iter().sum();
            if s > 0.95 {
                for r in 0..n_sys {
                    p[(r, c)] *= 0.95 / s;
                }
            }
        }
        let pm = AssignmentMatrix::new(
            p.clone(),
            problem.sensor_modes().to_vec(),
            problem.system_modes().to_vec(),
        )
        .unwrap();
        let eval = evaluate_objective(&problem, &pm).unwrap();
        if !eval.is_finite() {
            continue;
        }
        checked += 1;
        let grad = objective_gradient(&problem, &pm).unwrap();
        let h = 1e-5;
        for i in 0..n_sys {
            for j in 0..m_sens {
                let mut up = p.clone();
                let mut dn = p.clone();
                up[(i, j)] += h;
                dn[(i, j)] -= h;
                let f = |q: DMatrix<f64>| {
                    let qm = AssignmentMatrix::new(
                        q,
                        problem.sensor_modes().to_vec(),
                        problem.system_modes().to_vec(),
                    )
                    .unwrap();
                    evaluate_objective(&problem, &qm).unwrap().value
                };
                let fd = (f(up) - f(dn)) / (2.0 * h);
                let rel = (grad[(i, j)] - fd).abs() / fd.abs().max(1e-3 * (1.0 + eval.value));
                worst = worst.max(rel);
                assert!(
                    rel <= 1e-4,
                    "point {checked}, entry ({i},{j}): adjoint {} vs fd {fd}",
                    grad[(i, j)]
                );
            }
        }
    }
    report(7, "gradient check", true, &format!("50 points, worst relative error {worst:.2e}"));
}

#[test]
fn criterion_8_bound_dominance() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst_margin = f64::INFINITY;
    let mut runs = 0;

    // the published instance plus random scalar and matrix instances
    let fig1 = load_problem(fig1_path()).unwrap();
    let mut problems = vec![(fig1, vec![0.05_f64], 50.0)];
    for _ in 0..2 {
        let n = rng.gen_range(2..=4usize);
        let m = rng.gen_range(1..n);
        let sites: Vec<(f64, f64, f64, f64, f64, f64)> = (0..n)
            .map(|_| {
                (
                    rng.gen_range(-1.0..1.5),
                    rng.gen_range(0.5..1.5),
                    rng.gen_range(0.5..1.5),
                    rng.gen_range(0.4..1.2),
                    rng.gen_range(0.3..1.2),
                    rng.gen_range(0.0..0.3),
                )
            })
            .collect();
        problems.push((
            scalar_problem(&sites, m, ConstraintMode::AtMostOne),
            vec![0.1],
            40.0,
        ));
    }
    problems.push((random_matrix_problem(&mut rng, 2, 1), vec![0.1], 40.0));

    for (problem, eps_list, horizon) in &problems {
        let report_cmp = compare_policies(problem, eps_list, *horizon).unwrap();
        for row in &report_cmp.rows {
            runs += 1;
            let margin = row.avg_cost - report_cmp.z_star;
            worst_margin = worst_margin.min(margin);
            assert!(
                margin >= -1e-3,
                "{} violates the bound: cost {} vs z* {}",
                row.policy,
                row.avg_cost,
                report_cmp.z_star
            );
        }
    }
    report(
        8,
        "bound dominance",
        true,
        &format!("{runs} policy runs, worst margin above bound {worst_margin:.3e}"),
    );
}
