//! Lyapunov, algebraic-Riccati and differential-Riccati solvers.
//!
//! Everything here works on the filter-side equations
//! `A Σ + Σ A^T + W - Σ S Σ`, with `S` an information matrix
//! `C^T V^{-1} C`. The CARE solver is a Newton–Kleinman iteration whose
//! inner Lyapunov solves use the real Schur form (Bartels–Stewart); the
//! differential equation is integrated with classical RK4 on a grid that
//! lands exactly on every switching instant.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use nalgebra::ComplexField;
use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Error)]
pub enum RiccatiError {
    #[error("sylvester/lyapunov system is singular or too ill-conditioned: {0}")]
    SingularSylvester(String),
    #[error("no stabilizing solution: {0}")]
    NoStabilizingSolution(String),
    #[error("riccati iteration diverged; residual history {residuals:?}")]
    SolverDiverged { residuals: Vec<f64> },
    #[error("degenerate sensor: C = 0 has no Riccati roots")]
    DegenerateSensor,
    #[error("covariance integration lost positive definiteness at t = {t}")]
    IntegrationBlowup { t: f64 },
    #[error("no periodic limit after {cycles} cycles (last delta {delta:.3e})")]
    PeriodicNonConvergence { cycles: usize, delta: f64 },
    #[error("pair is not detectable: {0}")]
    NotDetectable(String),
    #[error("{0}")]
    Invalid(String),
}

/// Piecewise-constant information signal `S(t)`, optionally ε-periodic.
///
/// `breakpoints[k]` opens segment `k` with matrix `values[k]`; the first
/// breakpoint is 0 and, if periodic, the last lies strictly inside the
/// period.
#[derive(Debug, Clone)]
pub struct PiecewiseConstantInformation {
    breakpoints: Vec<f64>,
    values: Vec<DMatrix<f64>>,
    period: Option<f64>,
}

impl PiecewiseConstantInformation {
    pub fn new(
        breakpoints: Vec<f64>,
        values: Vec<DMatrix<f64>>,
        period: Option<f64>,
    ) -> Result<Self, RiccatiError> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(RiccatiError::Invalid(format!(
                "{} breakpoints for {} segment values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(RiccatiError::Invalid(String::from("first breakpoint must be 0")));
        }
        for w in breakpoints.windows(2) {
            if w[1] <= w[0] {
                return Err(RiccatiError::Invalid(String::from(
                    "breakpoints must be strictly ascending",
                )));
            }
        }
        if let Some(eps) = period {
            if !(eps > 0.0) {
                return Err(RiccatiError::Invalid(format!("period must be positive, got {eps}")));
            }
            if *breakpoints.last().unwrap() >= eps {
                return Err(RiccatiError::Invalid(String::from(
                    "last breakpoint must lie strictly inside the period",
                )));
            }
        }
        let n = values[0].nrows();
        for v in &values {
            if v.nrows() != n || v.ncols() != n {
                return Err(RiccatiError::Invalid(String::from(
                    "all segment matrices must share the state dimension",
                )));
            }
            if !linalg::is_psd(v) {
                return Err(RiccatiError::Invalid(String::from(
                    "segment information matrix is not positive semidefinite",
                )));
            }
        }
        Ok(Self { breakpoints, values, period })
    }

    /// Constant (aperiodic, single segment) signal.
    pub fn constant(s: DMatrix<f64>) -> Result<Self, RiccatiError> {
        Self::new(alloc::vec![0.0], alloc::vec![s], None)
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn state_dim(&self) -> usize {
        self.values[0].nrows()
    }

    /// Segment matrix active at time `t` (t < 0 clamps to the start).
    pub fn value_at(&self, t: f64) -> &DMatrix<f64> {
        let local = match self.period {
            Some(eps) => {
                let mut u = t - eps * (t / eps).floor();
                if u < 0.0 {
                    u += eps;
                }
                u
            }
            None => t.max(0.0),
        };
        let mut k = 0;
        for (idx, &b) in self.breakpoints.iter().enumerate() {
            if b <= local {
                k = idx;
            } else {
                break;
            }
        }
        &self.values[k]
    }

    /// Switch instants strictly inside `(t0, t1)`.
    pub fn events_between(&self, t0: f64, t1: f64) -> Vec<f64> {
        let tiny = 1e-12 * (1.0 + t1.abs().max(t0.abs()));
        let mut out = Vec::new();
        match self.period {
            Some(eps) => {
                let first = (t0 / eps).floor() as i64 - 1;
                let last = (t1 / eps).ceil() as i64 + 1;
                for l in first..=last {
                    for &b in &self.breakpoints {
                        let e = l as f64 * eps + b;
                        if e > t0 + tiny && e < t1 - tiny {
                            out.push(e);
                        }
                    }
                }
            }
            None => {
                for &b in &self.breakpoints {
                    if b > t0 + tiny && b < t1 - tiny {
                        out.push(b);
                    }
                }
            }
        }
        out.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        out.dedup_by(|a, b| (*a - *b).abs() <= tiny);
        out
    }

    /// Time average of `S(t)` over one period (or over the breakpoint
    /// span + trailing segment treated as dominant for aperiodic data).
    pub fn time_average(&self) -> DMatrix<f64> {
        match self.period {
            Some(eps) => {
                let n = self.state_dim();
                let mut acc = DMatrix::<f64>::zeros(n, n);
                for k in 0..self.values.len() {
                    let end = if k + 1 < self.breakpoints.len() { self.breakpoints[k + 1] } else { eps };
                    acc += &self.values[k] * (end - self.breakpoints[k]);
                }
                acc / eps
            }
            // the trailing segment is what persists as t grows
            None => self.values.last().unwrap().clone(),
        }
    }
}

/// Time-stamped covariance samples for one system.
#[derive(Debug, Clone)]
pub struct CovarianceTrajectory {
    pub system_index: usize,
    pub times: Vec<f64>,
    pub covariances: Vec<DMatrix<f64>>,
    /// Sensor active at each sample (`None` = unobserved); empty when the
    /// trajectory does not come from a concrete sensor schedule.
    pub active_sensors: Vec<Option<usize>>,
}

impl CovarianceTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_covariance(&self) -> &DMatrix<f64> {
        self.covariances.last().expect("non-empty trajectory")
    }

    /// Trapezoidal time average of `f(Σ)` over samples with `t >= cut`.
    pub fn trapezoid_average<F: Fn(&DMatrix<f64>) -> f64>(&self, cut: f64, f: F) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 1..self.times.len() {
            let (t0, t1) = (self.times[k - 1], self.times[k]);
            if t1 <= cut {
                continue;
            }
            let h = t1 - t0.max(cut);
            if h <= 0.0 {
                continue;
            }
            // when the window opens mid-interval keep the trapezoid on
            // the clipped segment; Σ varies smoothly at this resolution
            let f0 = f(&self.covariances[k - 1]);
            let f1 = f(&self.covariances[k]);
            num += 0.5 * (f0 + f1) * h;
            den += h;
        }
        if den > 0.0 {
            num / den
        } else {
            f64::NAN
        }
    }
}

/// Solves `F X + X F^T + Q = 0` for symmetric `X` (Bartels–Stewart on the
/// real Schur form of `F`). Requires that no two eigenvalues of `F` sum
/// to zero; `F` Hurwitz suffices.
pub fn solve_lyapunov(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>, RiccatiError> {
    let n = f.nrows();
    if f.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(RiccatiError::Invalid(format!(
            "lyapunov dimensions: F {}x{}, Q {}x{}",
            f.nrows(),
            f.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    let schur = nalgebra::Schur::try_new(f.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| RiccatiError::SingularSylvester(String::from("Schur did not converge")))?;
    let (u, t) = schur.unpack();
    let c = u.transpose() * q * &u;

    // block partition of the quasi-triangular factor
    let sub_tol = 1e-14 * (1.0 + linalg::amax(&t));
    let mut blocks: Vec<(usize, usize)> = Vec::new(); // (start, size)
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > sub_tol {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }

    let nb = blocks.len();
    let mut y = DMatrix::<f64>::zeros(n, n);
    for bi in (0..nb).rev() {
        let (ri, si) = blocks[bi];
        for bj in (0..nb).rev() {
            let (rj, sj) = blocks[bj];
            // rhs = -C[I,J] - sum_{K>I} T[I,K] Y[K,J] - sum_{L>J} Y[I,L] T[J,L]^T
            let mut rhs = -c.view((ri, rj), (si, sj)).clone_owned();
            for bk in (bi + 1)..nb {
                let (rk, sk) = blocks[bk];
                rhs -= t.view((ri, rk), (si, sk)) * y.view((rk, rj), (sk, sj));
            }
            for bl in (bj + 1)..nb {
                let (rl, sl) = blocks[bl];
                rhs -= y.view((ri, rl), (si, sl)) * t.view((rj, rl), (sj, sl)).transpose();
            }
            // small Sylvester: T[I,I] Z + Z T[J,J]^T = rhs via Kronecker
            let a0 = t.view((ri, ri), (si, si)).clone_owned();
            let b0 = t.view((rj, rj), (sj, sj)).clone_owned();
            let dim = si * sj;
            let mut k = DMatrix::<f64>::zeros(dim, dim);
            for p in 0..sj {
                for q_ in 0..si {
                    for r in 0..si {
                        k[(p * si + q_, p * si + r)] += a0[(q_, r)];
                    }
                    for r in 0..sj {
                        k[(p * si + q_, r * si + q_)] += b0[(p, r)];
                    }
                }
            }
            let mut rvec = DMatrix::<f64>::zeros(dim, 1);
            for p in 0..sj {
                for q_ in 0..si {
                    rvec[(p * si + q_, 0)] = rhs[(q_, p)];
                }
            }
            let sol = k.lu().solve(&rvec).ok_or_else(|| {
                RiccatiError::SingularSylvester(String::from(
                    "eigenvalue sum near zero in diagonal block solve",
                ))
            })?;
            for p in 0..sj {
                for q_ in 0..si {
                    y[(ri + q_, rj + p)] = sol[(p * si + q_, 0)];
                }
            }
        }
    }

    let x = linalg::symmetrize(&(&u * y * u.transpose()));
    let residual = linalg::amax(&(f * &x + &x * f.transpose() + q));
    let bound = 1e-9 * (1.0 + linalg::amax(q));
    if residual > bound {
        return Err(RiccatiError::SingularSylvester(format!(
            "residual {residual:.3e} exceeds {bound:.3e}; eigenvalue sums are near zero"
        )));
    }
    Ok(x)
}

/// Stabilizing solution of the filter ARE
/// `A Σ + Σ A^T + W - Σ S Σ = 0`: the unique symmetric solution with
/// `A - Σ S` Hurwitz, positive definite when `(A, W^{1/2})` is
/// controllable. Newton–Kleinman iteration; the initial stabilizing gain
/// comes from an eigenvalue-shifted Lyapunov construction.
pub fn solve_care(
    a: &DMatrix<f64>,
    s: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<DMatrix<f64>, RiccatiError> {
    solve_care_warm(a, s, w, None)
}

/// [`solve_care`] with an optional warm start: any matrix `g` for which
/// `A - g S` is Hurwitz shortcuts the stabilizing-gain construction.
pub fn solve_care_warm(
    a: &DMatrix<f64>,
    s: &DMatrix<f64>,
    w: &DMatrix<f64>,
    warm: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>, RiccatiError> {
    let n = a.nrows();
    if a.ncols() != n || s.nrows() != n || s.ncols() != n || w.nrows() != n || w.ncols() != n {
        return Err(RiccatiError::Invalid(String::from("CARE inputs must be square n x n")));
    }
    let s = linalg::symmetrize(s);
    let w = linalg::symmetrize(w);

    let hurwitz =
        |m: &DMatrix<f64>| linalg::is_hurwitz(m).map_err(RiccatiError::Invalid);

    // the warm start is an optimization only: on any failure fall back to
    // the stabilizing-gain construction
    if let Some(g0) = warm {
        if hurwitz(&(a - g0 * &s))? {
            if let Ok(sigma) = newton_kleinman(a, &s, &w, g0.clone(), &hurwitz) {
                return Ok(sigma);
            }
        }
    }
    let g0 = initial_stabilizing_gain(a, &s, &hurwitz)?;
    newton_kleinman(a, &s, &w, g0, &hurwitz)
}

fn newton_kleinman(
    a: &DMatrix<f64>,
    s: &DMatrix<f64>,
    w: &DMatrix<f64>,
    g0: DMatrix<f64>,
    hurwitz: &dyn Fn(&DMatrix<f64>) -> Result<bool, RiccatiError>,
) -> Result<DMatrix<f64>, RiccatiError> {
    let scale = |sig: &DMatrix<f64>, res: &DMatrix<f64>| -> f64 {
        let asig = linalg::amax(&(a * sig));
        let quad = linalg::amax(&(sig * s * sig));
        linalg::amax(res) / (1.0 + linalg::amax(w) + 2.0 * asig + quad)
    };

    let mut g = g0;
    let mut residuals = Vec::new();
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    let mut since_improvement = 0usize;
    for _ in 0..200 {
        let f_cl = a - &g * s;
        let q = linalg::symmetrize(&(w + &g * s * g.transpose()));
        let sigma = solve_lyapunov(&f_cl, &q)?;
        let res_mat = a * &sigma + &sigma * a.transpose() + w - &sigma * s * &sigma;
        let mut rel = scale(&sigma, &res_mat);
        if !rel.is_finite() {
            rel = f64::INFINITY;
        }
        residuals.push(rel);
        if best.as_ref().map_or(true, |(b, _)| rel < *b) {
            best = Some((rel, sigma.clone()));
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        if rel <= 1e-13 || since_improvement >= 8 {
            break;
        }
        g = sigma;
    }

    let (rel, sigma) = best.expect("at least one Newton step");
    if !(rel <= 1e-9) {
        return Err(RiccatiError::SolverDiverged { residuals });
    }
    if !hurwitz(&(a - &sigma * s))? {
        return Err(RiccatiError::NoStabilizingSolution(String::from(
            "converged solution does not stabilize the closed loop",
        )));
    }
    let low = linalg::symmetric_eigenvalues(&sigma)[0];
    if low < -1e-9 * (1.0 + sigma.trace().abs()) {
        return Err(RiccatiError::NoStabilizingSolution(String::from(
            "converged solution is not positive semidefinite",
        )));
    }
    Ok(sigma)
}

/// Gain `G` with `A - G S` Hurwitz, built by solving
/// `(A^T + βI) Z + Z (A + βI) = 2 S S` with β beyond the spectral
/// abscissa and inverting `Z` (regularized when `(A, S)` is detectable
/// but not observable).
fn initial_stabilizing_gain(
    a: &DMatrix<f64>,
    s: &DMatrix<f64>,
    hurwitz: &dyn Fn(&DMatrix<f64>) -> Result<bool, RiccatiError>,
) -> Result<DMatrix<f64>, RiccatiError> {
    let n = a.nrows();
    if hurwitz(a)? {
        return Ok(DMatrix::zeros(n, n));
    }
    if !linalg::pbh_detectable(a, s).map_err(RiccatiError::Invalid)? {
        return Err(RiccatiError::NoStabilizingSolution(String::from(
            "(A, S) is not detectable",
        )));
    }
    let beta = a.norm() + 1.0;
    let shifted = -(a.transpose() + DMatrix::<f64>::identity(n, n) * beta);
    let z = solve_lyapunov(&shifted, &(s * s * 2.0))?;
    let base = z.trace().abs().max(f64::MIN_POSITIVE) / n as f64;
    for k in 0..8 {
        let eta = if k == 0 { 0.0 } else { base * 1e-12 * 10f64.powi(k) };
        let zr = &z + DMatrix::<f64>::identity(n, n) * eta;
        if let Some(g) = nalgebra::LU::new(zr).solve(s) {
            if hurwitz(&(a - &g * s))? {
                return Ok(g);
            }
        }
    }
    Err(RiccatiError::NoStabilizingSolution(String::from(
        "shifted-Lyapunov gain construction failed to stabilize",
    )))
}

/// Roots `x1 < 0 < x2` of the scalar ARE `2 A x + W - (C^2/V) x^2 = 0`.
pub fn scalar_riccati_roots(a: f64, c: f64, v: f64, w: f64) -> Result<(f64, f64), RiccatiError> {
    if c == 0.0 {
        return Err(RiccatiError::DegenerateSensor);
    }
    if !(w > 0.0) || !(v > 0.0) {
        return Err(RiccatiError::Invalid(format!(
            "scalar roots need W > 0 and V > 0, got W = {w}, V = {v}"
        )));
    }
    let q = c * c / v;
    let disc = (a * a + q * w).sqrt();
    Ok(((a - disc) / q, (a + disc) / q))
}

/// One classical RK4 step of `Σ' = AΣ + ΣA^T + W - Σ S Σ` with constant
/// information `S`, symmetrized afterwards.
pub(crate) fn rk4_step(
    a: &DMatrix<f64>,
    w: &DMatrix<f64>,
    s: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    h: f64,
) -> DMatrix<f64> {
    let f = |x: &DMatrix<f64>| a * x + x * a.transpose() + w - x * s * x;
    let k1 = f(sigma);
    let k2 = f(&(sigma + &k1 * (h / 2.0)));
    let k3 = f(&(sigma + &k2 * (h / 2.0)));
    let k4 = f(&(sigma + &k3 * h));
    linalg::symmetrize(&(sigma + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)))
}

fn check_pd_sample(sigma: &DMatrix<f64>, t: f64) -> Result<(), RiccatiError> {
    if sigma.iter().any(|x| !x.is_finite()) {
        return Err(RiccatiError::IntegrationBlowup { t });
    }
    let tol = 1e-9 * (1.0 + sigma.trace().abs());
    let low = linalg::symmetric_eigenvalues(sigma)[0];
    if low < -tol {
        return Err(RiccatiError::IntegrationBlowup { t });
    }
    Ok(())
}

/// Integrates the Riccati differential equation over `t_span` with
/// piecewise-constant information. The grid lands exactly on every
/// switch instant; within a segment the step is
/// `min(step_hint, segment/8)`.
pub fn integrate_rde(
    a: &DMatrix<f64>,
    w: &DMatrix<f64>,
    info: &PiecewiseConstantInformation,
    sigma_start: &DMatrix<f64>,
    t_span: (f64, f64),
    step_hint: f64,
) -> Result<CovarianceTrajectory, RiccatiError> {
    let (t0, t1) = t_span;
    if !(t1 > t0) || !(step_hint > 0.0) {
        return Err(RiccatiError::Invalid(format!(
            "bad integration window [{t0}, {t1}] or step hint {step_hint}"
        )));
    }
    let mut times = alloc::vec![t0];
    let mut covs = alloc::vec![linalg::symmetrize(sigma_start)];
    check_pd_sample(&covs[0], t0)?;

    let mut seg_edges = info.events_between(t0, t1);
    seg_edges.push(t1);
    let mut t_lo = t0;
    let mut sigma = covs[0].clone();
    for &t_hi in &seg_edges {
        let len = t_hi - t_lo;
        let s = info.value_at(t_lo + 0.5 * len);
        let h_target = step_hint.min(len / 8.0);
        let steps = (len / h_target).ceil().max(1.0) as usize;
        let h = len / steps as f64;
        for k in 1..=steps {
            sigma = rk4_step(a, w, s, &sigma, h);
            let t = t_lo + h * k as f64;
            check_pd_sample(&sigma, t)?;
            times.push(t);
            covs.push(sigma.clone());
        }
        t_lo = t_hi;
    }
    let len = times.len();
    Ok(CovarianceTrajectory {
        system_index: 0,
        times,
        covariances: covs,
        active_sensors: alloc::vec![None; len],
    })
}

/// Runs the periodic Riccati flow until successive cycles agree to 1e-9
/// and returns one period of the limit cycle, sampled on the cycle grid.
pub fn periodic_steady_state(
    a: &DMatrix<f64>,
    w: &DMatrix<f64>,
    info: &PiecewiseConstantInformation,
    sigma0: &DMatrix<f64>,
) -> Result<CovarianceTrajectory, RiccatiError> {
    let eps = info
        .period()
        .ok_or_else(|| RiccatiError::Invalid(String::from("periodic signal required")))?;
    if !linalg::pbh_detectable(a, &info.time_average()).map_err(RiccatiError::Invalid)? {
        return Err(RiccatiError::NotDetectable(String::from(
            "(A, period-averaged information) fails the PBH test",
        )));
    }

    const MAX_CYCLES: usize = 100_000;
    let step_hint = eps / 64.0;
    let mut sigma = linalg::symmetrize(sigma0);
    let mut prev: Option<Vec<DMatrix<f64>>> = None;
    let mut delta = f64::INFINITY;
    for cycle in 0..MAX_CYCLES {
        let traj = integrate_rde(a, w, info, &sigma, (0.0, eps), step_hint).map_err(|e| {
            match e {
                RiccatiError::IntegrationBlowup { t } => RiccatiError::IntegrationBlowup {
                    t: cycle as f64 * eps + t,
                },
                other => other,
            }
        })?;
        sigma = traj.last_covariance().clone();
        if let Some(p) = &prev {
            delta = p
                .iter()
                .zip(&traj.covariances)
                .fold(0.0_f64, |acc, (x, y)| acc.max(linalg::amax(&(x - y))));
            if delta <= 1e-9 {
                return Ok(traj);
            }
        }
        prev = Some(traj.covariances);
    }
    Err(RiccatiError::PeriodicNonConvergence { cycles: MAX_CYCLES, delta })
}
