//! The general performance lower bound over relaxed sensor-attention
//! fractions, and the optimal assignment achieving it.
//!
//! The convex program `min_p Σ_i Tr(T_i Σ*_i(p)) + Σ_ij κ_ij p_ij` over
//! the doubly-substochastic assignment polytope is solved by a
//! conditional-gradient method with away steps: the linear minimization
//! oracle is a min-cost matching over the polytope's partial-permutation
//! vertices, gradients come from an adjoint Lyapunov solve around each
//! algebraic Riccati solution, and the Frank–Wolfe gap certifies the
//! distance to the optimum. A dual-decomposition solver splits the same
//! program into per-system subproblems coupled by per-sensor multipliers.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use nalgebra::ComplexField;
use nalgebra::DMatrix;
use thiserror::Error;

use crate::hungarian::min_cost_assignment;
use crate::linalg;
use crate::model::{composite_information, ConstraintMode, ModelError, SchedulingProblem};
use crate::riccati::{solve_care_warm, solve_lyapunov, RiccatiError};

#[derive(Debug, Error)]
pub enum BoundError {
    #[error("equality constraints admit no 0/1 assignment")]
    InfeasibleAssignment,
    #[error("no feasible detectable starting point: {0}")]
    NoFeasibleStart(String),
    #[error("gradient unavailable: {0}")]
    GradientUnavailable(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error("{0}")]
    Invalid(String),
}

/// Relaxed assignment: `p[(i, j)]` is the fraction of time sensor `j`
/// spends on system `i`, subject to the row/column constraint modes.
#[derive(Debug, Clone)]
pub struct AssignmentMatrix {
    p: DMatrix<f64>,
    sensor_modes: Vec<ConstraintMode>,
    system_modes: Vec<ConstraintMode>,
}

impl AssignmentMatrix {
    const FEAS_TOL: f64 = 1e-7;

    pub fn new(
        p: DMatrix<f64>,
        sensor_modes: Vec<ConstraintMode>,
        system_modes: Vec<ConstraintMode>,
    ) -> Result<Self, BoundError> {
        if p.nrows() != system_modes.len() || p.ncols() != sensor_modes.len() {
            return Err(BoundError::Invalid(format!(
                "assignment is {}x{} but modes describe {} systems and {} sensors",
                p.nrows(),
                p.ncols(),
                system_modes.len(),
                sensor_modes.len()
            )));
        }
        let a = Self { p, sensor_modes, system_modes };
        a.check_feasible()?;
        Ok(a)
    }

    fn check_feasible(&self) -> Result<(), BoundError> {
        for e in self.p.iter() {
            if !(*e >= -Self::FEAS_TOL && *e <= 1.0 + Self::FEAS_TOL) {
                return Err(BoundError::Invalid(format!("entry {e} outside [0, 1]")));
            }
        }
        for i in 0..self.p.nrows() {
            let s: f64 = self.p.row(i).iter().sum();
            match self.system_modes[i] {
                ConstraintMode::AtMostOne if s > 1.0 + Self::FEAS_TOL => {
                    return Err(BoundError::Invalid(format!("row {i} sums to {s} > 1")));
                }
                ConstraintMode::ExactlyOne if (s - 1.0).abs() > Self::FEAS_TOL => {
                    return Err(BoundError::Invalid(format!("row {i} sums to {s} != 1")));
                }
                _ => {}
            }
        }
        for j in 0..self.p.ncols() {
            let s: f64 = self.p.column(j).iter().sum();
            match self.sensor_modes[j] {
                ConstraintMode::AtMostOne if s > 1.0 + Self::FEAS_TOL => {
                    return Err(BoundError::Invalid(format!("column {j} sums to {s} > 1")));
                }
                ConstraintMode::ExactlyOne if (s - 1.0).abs() > Self::FEAS_TOL => {
                    return Err(BoundError::Invalid(format!("column {j} sums to {s} != 1")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn row_weights(&self, i: usize) -> Vec<f64> {
        self.p.row(i).iter().copied().collect()
    }

    pub fn sensor_modes(&self) -> &[ConstraintMode] {
        &self.sensor_modes
    }

    pub fn system_modes(&self) -> &[ConstraintMode] {
        &self.system_modes
    }
}

/// Value of the relaxed objective at a fixed assignment, with the
/// per-system ARE solutions. Detectability loss shows up as an infinite
/// value plus a reason, never as an error, so optimizers stay total.
#[derive(Debug, Clone)]
pub struct ObjectiveEval {
    pub value: f64,
    pub sigmas: Vec<DMatrix<f64>>,
    pub infeasible_reason: Option<String>,
}

impl ObjectiveEval {
    fn infinite(reason: String) -> Self {
        Self { value: f64::INFINITY, sigmas: Vec::new(), infeasible_reason: Some(reason) }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// Bound output: value, optimal fractions, ARE covariances at the
/// optimum, the final optimality-gap certificate, and iteration count.
#[derive(Debug, Clone)]
pub struct BoundResult {
    pub z_star: f64,
    pub p_star: AssignmentMatrix,
    pub sigma_star: Vec<DMatrix<f64>>,
    pub certificate: f64,
    pub iterations: usize,
}

fn eval_raw(
    problem: &SchedulingProblem,
    p: &DMatrix<f64>,
    warm: Option<&[DMatrix<f64>]>,
) -> Result<ObjectiveEval, BoundError> {
    let mut value = 0.0;
    let mut sigmas = Vec::with_capacity(problem.n_systems());
    for i in 0..problem.n_systems() {
        // negative dust from convex-combination round-off must clamp to
        // zero: a sign flip turns information into anti-information
        let weights: Vec<f64> = p.row(i).iter().map(|&x| x.max(0.0)).collect();
        let s = composite_information(problem, i, &weights)?;
        let sys = problem.system(i);
        let hint = warm.and_then(|w| w.get(i));
        let sigma = match solve_care_warm(&sys.a, &s, &sys.w, hint) {
            Ok(sig) => sig,
            Err(RiccatiError::NoStabilizingSolution(msg)) => {
                return Ok(ObjectiveEval::infinite(format!("system {i}: {msg}")));
            }
            Err(RiccatiError::SolverDiverged { residuals }) => {
                return Ok(ObjectiveEval::infinite(format!(
                    "system {i}: CARE diverged (last residual {:.3e})",
                    residuals.last().copied().unwrap_or(f64::NAN)
                )));
            }
            Err(e) => return Err(e.into()),
        };
        value += (&sys.t_weight * &sigma).trace();
        sigmas.push(sigma);
        for j in 0..problem.n_sensors() {
            value += problem.kappa(i, j) * p[(i, j)];
        }
    }
    Ok(ObjectiveEval { value, sigmas, infeasible_reason: None })
}

/// Relaxed objective `Σ_i Tr(T_i Σ*_i(p)) + Σ_ij κ_ij p_ij`.
pub fn evaluate_objective(
    problem: &SchedulingProblem,
    p: &AssignmentMatrix,
) -> Result<ObjectiveEval, BoundError> {
    eval_raw(problem, p.matrix(), None)
}

fn gradient_raw(
    problem: &SchedulingProblem,
    p: &DMatrix<f64>,
    sigmas: &[DMatrix<f64>],
) -> Result<DMatrix<f64>, BoundError> {
    let n = problem.n_systems();
    let m = problem.n_sensors();
    let mut grad = DMatrix::<f64>::zeros(n, m);
    for i in 0..n {
        let weights: Vec<f64> = p.row(i).iter().map(|&x| x.max(0.0)).collect();
        let s = composite_information(problem, i, &weights)?;
        let sys = problem.system(i);
        let sigma = &sigmas[i];
        let f_cl = &sys.a - sigma * &s;
        // adjoint: F^T Λ + Λ F + T = 0
        let lam = solve_lyapunov(&f_cl.transpose(), &sys.t_weight)
            .map_err(|e| BoundError::GradientUnavailable(format!("system {i}: {e}")))?;
        let weighted = linalg::symmetrize(&(sigma * lam * sigma));
        for j in 0..m {
            grad[(i, j)] = problem.kappa(i, j) - weighted.dot(problem.link_information(i, j));
        }
    }
    Ok(grad)
}

/// Gradient of the relaxed objective via the adjoint Lyapunov equation
/// around each ARE solution:
/// `∂/∂p_ij = κ_ij - Tr(Λ_i Σ*_i C_ij^T V_ij^{-1} C_ij Σ*_i)`.
pub fn objective_gradient(
    problem: &SchedulingProblem,
    p: &AssignmentMatrix,
) -> Result<DMatrix<f64>, BoundError> {
    let eval = eval_raw(problem, p.matrix(), None)?;
    if !eval.is_finite() {
        return Err(BoundError::GradientUnavailable(
            eval.infeasible_reason.unwrap_or_else(|| String::from("objective is infinite")),
        ));
    }
    gradient_raw(problem, p.matrix(), &eval.sigmas)
}

/// Linear minimization oracle over the assignment polytope: the
/// extreme-point 0/1 matrix minimizing `⟨gradient, P⟩`, found as a
/// min-cost perfect matching on a `(N+M) x (M+N)` padded square matrix.
/// Dummy pairings cost zero; equality modes forbid them with a large
/// penalty.
pub fn assignment_lmo(
    gradient: &DMatrix<f64>,
    sensor_modes: &[ConstraintMode],
    system_modes: &[ConstraintMode],
) -> Result<DMatrix<f64>, BoundError> {
    let n = gradient.nrows();
    let m = gradient.ncols();
    debug_assert_eq!(system_modes.len(), n);
    debug_assert_eq!(sensor_modes.len(), m);
    let d = n + m;
    let big = 1e12 * (1.0 + linalg::amax(gradient));
    let mut cost = vec![vec![0.0_f64; d]; d];
    for i in 0..n {
        for j in 0..m {
            cost[i][j] = gradient[(i, j)];
        }
        let dummy = match system_modes[i] {
            ConstraintMode::AtMostOne => 0.0,
            ConstraintMode::ExactlyOne => big,
        };
        for j in m..d {
            cost[i][j] = dummy;
        }
    }
    for i in n..d {
        for j in 0..m {
            cost[i][j] = match sensor_modes[j] {
                ConstraintMode::AtMostOne => 0.0,
                ConstraintMode::ExactlyOne => big,
            };
        }
    }
    let assign = min_cost_assignment(&cost);
    let mut pattern = DMatrix::<f64>::zeros(n, m);
    for (i, &j) in assign.iter().enumerate() {
        if cost[i][j] >= 0.5 * big {
            return Err(BoundError::InfeasibleAssignment);
        }
        if i < n && j < m {
            pattern[(i, j)] = 1.0;
        }
    }
    Ok(pattern)
}

/// Feasible, strictly positive (hence detectability-preserving) starting
/// assignment: uniform weights reshaped by iterative proportional
/// scaling until every equality row/column sum hits 1.
fn feasible_start(problem: &SchedulingProblem) -> Result<DMatrix<f64>, BoundError> {
    let n = problem.n_systems();
    let m = problem.n_sensors();
    let mut p = DMatrix::<f64>::from_element(n, m, 1.0 / n.max(m) as f64);
    let any_eq = (0..n).any(|i| problem.system_mode(i) == ConstraintMode::ExactlyOne)
        || (0..m).any(|j| problem.sensor_mode(j) == ConstraintMode::ExactlyOne);
    if any_eq {
        for _ in 0..20_000 {
            let mut worst = 0.0_f64;
            for i in 0..n {
                let s: f64 = p.row(i).iter().sum();
                let target = match problem.system_mode(i) {
                    ConstraintMode::ExactlyOne => 1.0,
                    ConstraintMode::AtMostOne => s.min(1.0),
                };
                if s > 0.0 && s != target {
                    let scale = target / s;
                    for j in 0..m {
                        p[(i, j)] = (p[(i, j)] * scale).min(1.0);
                    }
                    worst = worst.max((s - target).abs());
                }
            }
            for j in 0..m {
                let s: f64 = p.column(j).iter().sum();
                let target = match problem.sensor_mode(j) {
                    ConstraintMode::ExactlyOne => 1.0,
                    ConstraintMode::AtMostOne => s.min(1.0),
                };
                if s > 0.0 && s != target {
                    let scale = target / s;
                    for i in 0..n {
                        p[(i, j)] = (p[(i, j)] * scale).min(1.0);
                    }
                    worst = worst.max((s - target).abs());
                }
            }
            if worst < 1e-13 {
                break;
            }
        }
    }
    AssignmentMatrix::new(
        p.clone(),
        problem.sensor_modes().to_vec(),
        problem.system_modes().to_vec(),
    )
    .map_err(|e| BoundError::NoFeasibleStart(format!("{e}")))?;
    Ok(p)
}

struct Atom {
    pattern: DMatrix<f64>,
    weight: f64,
    key: Option<Vec<u8>>, // 0/1 signature; None for the non-vertex seed
}

fn pattern_key(p: &DMatrix<f64>) -> Vec<u8> {
    p.iter().map(|&x| u8::from(x > 0.5)).collect()
}

fn combine(atoms: &[Atom], n: usize, m: usize) -> DMatrix<f64> {
    let mut p = DMatrix::<f64>::zeros(n, m);
    for a in atoms {
        p += &a.pattern * a.weight;
    }
    p
}

/// Computes the performance lower bound by away-step Frank–Wolfe,
/// stopping when the duality gap `⟨∇, p - LMO(∇)⟩` drops below `tol`
/// (which certifies `z(p) - Z* <= tol` by convexity) or after
/// `max_iters` iterations.
pub fn solve_bound(
    problem: &SchedulingProblem,
    tol: f64,
    max_iters: usize,
) -> Result<BoundResult, BoundError> {
    let n = problem.n_systems();
    let m = problem.n_sensors();
    let p0 = feasible_start(problem)?;
    let eval0 = eval_raw(problem, &p0, None)?;
    if !eval0.is_finite() {
        return Err(BoundError::NoFeasibleStart(
            eval0.infeasible_reason.unwrap_or_else(|| String::from("start is undetectable")),
        ));
    }

    let mut atoms = vec![Atom { pattern: p0.clone(), weight: 1.0, key: None }];
    let mut p = p0;
    let mut eval = eval0;
    let mut gap = f64::INFINITY;
    let mut iterations = 0;

    for k in 0..max_iters {
        iterations = k + 1;
        let grad = gradient_raw(problem, &p, &eval.sigmas)?;
        let vertex = assignment_lmo(&grad, problem.sensor_modes(), problem.system_modes())?;
        let g_p = grad.dot(&p);
        gap = g_p - grad.dot(&vertex);
        if gap <= tol {
            break;
        }

        // away atom: active vertex most aligned with the gradient
        let (away_idx, away_score) = atoms
            .iter()
            .enumerate()
            .map(|(idx, a)| (idx, grad.dot(&a.pattern)))
            .fold((0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        let gap_away = away_score - g_p;

        let use_away = gap_away > gap && atoms.len() > 1 && atoms[away_idx].weight < 1.0 - 1e-12;
        let (dir, gamma_max, dir_gap) = if use_away {
            let alpha = atoms[away_idx].weight;
            (&p - &atoms[away_idx].pattern, alpha / (1.0 - alpha), gap_away)
        } else {
            (&vertex - &p, 1.0, gap)
        };

        // backtracking line search, rejecting infinite (undetectable) points
        let mut gamma = gamma_max;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &p + &dir * gamma;
            let cand_eval = eval_raw(problem, &cand, Some(&eval.sigmas))?;
            if cand_eval.is_finite() && cand_eval.value <= eval.value - 1e-4 * gamma * dir_gap {
                accepted = Some((cand, cand_eval, gamma));
                break;
            }
            gamma *= 0.5;
        }
        let Some((_, new_eval, gamma)) = accepted else {
            break; // numerical floor: no descent direction left
        };

        if use_away {
            for a in atoms.iter_mut() {
                a.weight *= 1.0 + gamma;
            }
            atoms[away_idx].weight -= gamma;
        } else {
            for a in atoms.iter_mut() {
                a.weight *= 1.0 - gamma;
            }
            let key = pattern_key(&vertex);
            if let Some(existing) =
                atoms.iter_mut().find(|a| a.key.as_deref() == Some(key.as_slice()))
            {
                existing.weight += gamma;
            } else {
                atoms.push(Atom { pattern: vertex.clone(), weight: gamma, key: Some(key) });
            }
        }
        atoms.retain(|a| a.weight > 1e-15);
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        for a in atoms.iter_mut() {
            a.weight /= total;
        }
        p = combine(&atoms, n, m);
        eval = new_eval;
    }

    let p_star = AssignmentMatrix::new(
        p,
        problem.sensor_modes().to_vec(),
        problem.system_modes().to_vec(),
    )?;
    let final_eval = eval_raw(problem, p_star.matrix(), Some(&eval.sigmas))?;
    Ok(BoundResult {
        z_star: final_eval.value,
        p_star,
        sigma_star: final_eval.sigmas,
        certificate: gap,
        iterations,
    })
}

/// Per-system subproblem of the dual decomposition: minimize
/// `Tr(T_i Σ*_i(q)) + Σ_j cost_j q_j` over one row of the assignment
/// polytope. Same conditional-gradient scheme on the row simplex.
fn solve_row_subproblem(
    problem: &SchedulingProblem,
    i: usize,
    lin_cost: &[f64],
    row_mode: ConstraintMode,
    tol: f64,
    warm: Option<&(Vec<f64>, DMatrix<f64>)>,
) -> Result<(f64, Vec<f64>, Option<DMatrix<f64>>), BoundError> {
    let m = problem.n_sensors();
    let sys = problem.system(i);

    let eval = |q: &[f64], warm: Option<&DMatrix<f64>>| -> Result<(f64, Option<DMatrix<f64>>), BoundError> {
        let sum: f64 = q.iter().sum();
        if q.iter().any(|&x| !(-1e-9..=1.0 + 1e-9).contains(&x)) || sum > 1.0 + 1e-9 {
            return Ok((f64::INFINITY, None));
        }
        let clamped: Vec<f64> = q.iter().map(|&x| x.max(0.0)).collect();
        let s = composite_information(problem, i, &clamped)?;
        match solve_care_warm(&sys.a, &s, &sys.w, warm) {
            Ok(sig) => {
                let mut val = (&sys.t_weight * &sig).trace();
                for j in 0..m {
                    val += lin_cost[j] * q[j];
                }
                Ok((val, Some(sig)))
            }
            Err(RiccatiError::NoStabilizingSolution(_))
            | Err(RiccatiError::SolverDiverged { .. }) => Ok((f64::INFINITY, None)),
            Err(e) => Err(e.into()),
        }
    };
    let grad = |q: &[f64], sigma: &DMatrix<f64>| -> Result<Vec<f64>, BoundError> {
        let clamped: Vec<f64> = q.iter().map(|&x| x.max(0.0)).collect();
        let s = composite_information(problem, i, &clamped)?;
        let f_cl = &sys.a - sigma * &s;
        let lam = solve_lyapunov(&f_cl.transpose(), &sys.t_weight)
            .map_err(|e| BoundError::GradientUnavailable(format!("system {i}: {e}")))?;
        let weighted = linalg::symmetrize(&(sigma * lam * sigma));
        Ok((0..m)
            .map(|j| lin_cost[j] - weighted.dot(problem.link_information(i, j)))
            .collect())
    };

    // vertices: unit rows e_j, plus the zero row when the mode allows it;
    // the previous outer iteration's solution seeds the search when given
    let mut q = vec![1.0 / m as f64; m];
    let mut seeded = false;
    if let Some((wq, wsig)) = warm {
        let (wv, ws) = eval(wq, Some(wsig))?;
        if wv.is_finite() {
            q.clone_from_slice(wq);
            seeded = true;
            let _ = (wv, ws);
        }
    }
    let (mut val, mut sigma) = eval(&q, warm.map(|(_, s)| s))?;
    if !val.is_finite() {
        if seeded {
            q = vec![1.0 / m as f64; m];
            let (v2, s2) = eval(&q, None)?;
            val = v2;
            sigma = s2;
        }
        if !val.is_finite() {
            return Err(BoundError::NoFeasibleStart(format!(
                "system {i} undetectable even with uniform sensor attention"
            )));
        }
    }
    let mut atoms: Vec<(Vec<f64>, f64)> = vec![(q.clone(), 1.0)];
    for _ in 0..400 {
        let g = grad(&q, sigma.as_ref().expect("finite eval has sigma"))?;
        let zero_ok = row_mode == ConstraintMode::AtMostOne;
        let mut best_j: Option<usize> = None;
        let mut best_val = if zero_ok { 0.0 } else { f64::INFINITY };
        for (j, &gj) in g.iter().enumerate() {
            if gj < best_val {
                best_val = gj;
                best_j = Some(j);
            }
        }
        let g_q: f64 = g.iter().zip(&q).map(|(a, b)| a * b).sum();
        let gap = g_q - best_val;
        if gap <= tol {
            break;
        }
        let vertex: Vec<f64> = (0..m).map(|j| f64::from(best_j == Some(j))).collect();

        let (away_idx, away_score) = atoms
            .iter()
            .enumerate()
            .map(|(idx, (v, _))| (idx, g.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()))
            .fold((0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        let gap_away = away_score - g_q;
        let use_away = gap_away > gap && atoms.len() > 1 && atoms[away_idx].1 < 1.0 - 1e-12;
        let (dir, gamma_max, dir_gap): (Vec<f64>, f64, f64) = if use_away {
            let alpha = atoms[away_idx].1;
            (
                q.iter().zip(&atoms[away_idx].0).map(|(a, b)| a - b).collect(),
                alpha / (1.0 - alpha),
                gap_away,
            )
        } else {
            (vertex.iter().zip(&q).map(|(a, b)| a - b).collect(), 1.0, gap)
        };

        let mut gamma = gamma_max;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = q.iter().zip(&dir).map(|(a, d)| a + gamma * d).collect();
            let (cv, cs) = eval(&cand, sigma.as_ref())?;
            if cv.is_finite() && cv <= val - 1e-4 * gamma * dir_gap {
                accepted = Some((cand, cv, cs, gamma));
                break;
            }
            gamma *= 0.5;
        }
        let Some((_, _, cs, gamma)) = accepted else { break };
        if use_away {
            for a in atoms.iter_mut() {
                a.1 *= 1.0 + gamma;
            }
            atoms[away_idx].1 -= gamma;
        } else {
            for a in atoms.iter_mut() {
                a.1 *= 1.0 - gamma;
            }
            if let Some(existing) = atoms
                .iter_mut()
                .find(|(v, _)| v.iter().zip(&vertex).all(|(a, b)| (a - b).abs() < 1e-12))
            {
                existing.1 += gamma;
            } else {
                atoms.push((vertex, gamma));
            }
        }
        atoms.retain(|a| a.1 > 1e-15);
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        // keep the iterate as the exact convex combination of atoms so
        // drop steps can never leave the polytope
        let mut combined = vec![0.0; m];
        for (v, wgt) in atoms.iter_mut() {
            *wgt /= total;
            for j in 0..m {
                combined[j] += v[j] * *wgt;
            }
        }
        let (rv, rs) = eval(&combined, cs.as_ref())?;
        if !rv.is_finite() {
            break;
        }
        q = combined;
        val = rv;
        sigma = rs;
    }
    Ok((val, q, sigma))
}

/// Solves the bound by maximizing the separable dual
/// `G(λ) = Σ_i G_i(λ) - Σ_j λ_j` with supergradient
/// `(Σ_i p_ij - 1)_j`: Polyak steps against the best recovered primal
/// value once one exists, diminishing steps before that. Multipliers on
/// at-most-one sensors stay nonnegative; equality sensors leave them
/// free.
pub fn dual_decomposition_solve(
    problem: &SchedulingProblem,
    tol: f64,
) -> Result<BoundResult, BoundError> {
    let n = problem.n_systems();
    let m = problem.n_sensors();
    let p0 = feasible_start(problem)?;
    let inner_tol = (tol * 1e-3).max(1e-12);

    let mut lambda = vec![0.0_f64; m];
    let mut best_dual = f64::NEG_INFINITY;
    let mut best_primal = f64::INFINITY;
    let mut best_p: Option<DMatrix<f64>> = None;
    let mut avg = DMatrix::<f64>::zeros(n, m);
    let mut first_scale: Option<(f64, f64)> = None;
    let mut iterations = 0;
    let mut row_warm: Vec<Option<(Vec<f64>, DMatrix<f64>)>> = vec![None; n];
    let mut theta = 1.0_f64;
    let mut prev_g: Option<Vec<f64>> = None;

    for k in 1..=2_000 {
        iterations = k;
        let mut dual_val = -lambda.iter().sum::<f64>();
        let mut p_k = DMatrix::<f64>::zeros(n, m);
        for i in 0..n {
            let cost: Vec<f64> =
                (0..m).map(|j| problem.kappa(i, j) + lambda[j]).collect();
            let (gi, qi, sigi) = solve_row_subproblem(
                problem,
                i,
                &cost,
                problem.system_mode(i),
                inner_tol,
                row_warm[i].as_ref(),
            )?;
            dual_val += gi;
            for j in 0..m {
                p_k[(i, j)] = qi[j];
            }
            if let Some(sig) = sigi {
                row_warm[i] = Some((qi, sig));
            }
        }
        best_dual = best_dual.max(dual_val);

        // primal recovery: near the optimal multiplier the instantaneous
        // subproblem solutions are almost coupling-feasible, so repair
        // both those and the ergodic average, blended with the strictly
        // positive start to keep detectability
        avg = (&avg * (k - 1) as f64 + &p_k) / k as f64;
        let blend = (1e-3 / k as f64).max(1e-9);
        for cand in [&p_k, &avg] {
            let mixed = cand * (1.0 - blend) + &p0 * blend;
            if let Some(repaired) = repair_columns(problem, &mixed) {
                let eval = eval_raw(problem, &repaired, None)?;
                if eval.is_finite() && eval.value < best_primal {
                    best_primal = eval.value;
                    best_p = Some(repaired);
                }
            }
        }

        if best_primal - best_dual <= tol * best_primal.abs().max(1.0) {
            break;
        }

        let g: Vec<f64> =
            (0..m).map(|j| p_k.column(j).iter().sum::<f64>() - 1.0).collect();
        let g_norm_sq: f64 = g.iter().map(|x| x * x).sum();
        if g_norm_sq < 1e-30 {
            break; // supergradient vanished: dual optimum reached
        }
        // damp the Polyak step while consecutive supergradients oppose
        // each other (multiplier oscillation), re-open it on progress
        if let Some(pg) = &prev_g {
            let dot: f64 = pg.iter().zip(&g).map(|(a, b)| a * b).sum();
            theta = if dot < 0.0 { (theta * 0.7).max(0.02) } else { (theta * 1.1).min(1.0) };
        }
        prev_g = Some(g.clone());
        let scale = *first_scale
            .get_or_insert_with(|| (dual_val.abs().max(1.0), g_norm_sq.sqrt()));
        let step = if best_primal.is_finite() {
            theta * (best_primal - dual_val) / g_norm_sq
        } else {
            0.1 * scale.0 / (scale.1 * k as f64)
        };
        for j in 0..m {
            lambda[j] += step * g[j];
            if problem.sensor_mode(j) == ConstraintMode::AtMostOne {
                lambda[j] = lambda[j].max(0.0);
            }
        }
    }

    let p_mat = best_p.ok_or_else(|| {
        BoundError::NoFeasibleStart(String::from("dual iterations never recovered a feasible primal"))
    })?;
    let p_star = AssignmentMatrix::new(
        p_mat,
        problem.sensor_modes().to_vec(),
        problem.system_modes().to_vec(),
    )?;
    let final_eval = eval_raw(problem, p_star.matrix(), None)?;
    Ok(BoundResult {
        z_star: final_eval.value,
        p_star,
        sigma_star: final_eval.sigmas,
        certificate: final_eval.value - best_dual,
        iterations,
    })
}

/// Scales columns (and then re-checks rows) so the dualized per-sensor
/// constraints hold again; row constraints survive because subproblem
/// iterates already satisfy them.
fn repair_columns(problem: &SchedulingProblem, p: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = p.nrows();
    let m = p.ncols();
    let mut out = p.clone();
    for _ in 0..500 {
        let mut worst = 0.0_f64;
        for j in 0..m {
            let s: f64 = out.column(j).iter().sum();
            let target = match problem.sensor_mode(j) {
                ConstraintMode::ExactlyOne => 1.0,
                ConstraintMode::AtMostOne => s.min(1.0),
            };
            if s > 0.0 && s != target {
                let scale = target / s;
                for i in 0..n {
                    out[(i, j)] = (out[(i, j)] * scale).min(1.0);
                }
                worst = worst.max((s - target).abs());
            } else if s == 0.0 && problem.sensor_mode(j) == ConstraintMode::ExactlyOne {
                return None;
            }
        }
        for i in 0..n {
            let s: f64 = out.row(i).iter().sum();
            let target = match problem.system_mode(i) {
                ConstraintMode::ExactlyOne => 1.0,
                ConstraintMode::AtMostOne => s.min(1.0),
            };
            if s > 0.0 && s != target {
                let scale = target / s;
                for j in 0..m {
                    out[(i, j)] = (out[(i, j)] * scale).min(1.0);
                }
                worst = worst.max((s - target).abs());
            } else if s == 0.0 && problem.system_mode(i) == ConstraintMode::ExactlyOne {
                return None;
            }
        }
        if worst < 1e-12 {
            return Some(out);
        }
    }
    None
}
