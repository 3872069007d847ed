//! Closed-form Whittle indices, threshold inversion, per-site dual values
//! and the one-multiplier lower bound for scalar systems with identical
//! sensors.
//!
//! For a scalar site the variance flows along
//! `Σ' = 2AΣ + W - π (C²/V) Σ²`, and the index λ(Σ) is the observation
//! tax making measuring and idling equally attractive at variance Σ. The
//! index is piecewise: a rational branch up to the always-observe fixed
//! point `x2`, a cubic-root branch between `x2` and the idle fixed point
//! `x_e`, and a closed-form branch past `x_e` (stable sites only).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use nalgebra::ComplexField;
use thiserror::Error;

use crate::model::SchedulingProblem;
use crate::riccati::scalar_riccati_roots;

#[derive(Debug, Error)]
pub enum WhittleError {
    #[error("invalid scalar site: {0}")]
    InvalidSite(String),
    #[error("threshold undefined for C = 0 or T = 0 beyond the split at lambda = -kappa")]
    IndexDegenerate,
    #[error("dual is unbounded: some unstable system has no usable sensor")]
    UnboundedDual,
    #[error("{0}")]
    Invalid(String),
}

/// One scalar site: dynamics `A`, sensor `(C, V)`, noise intensity `W`,
/// error weight `T` and observation cost κ, plus the derived Riccati
/// roots `x1 < 0 < x2` (when `C ≠ 0`) and the idle fixed point
/// `x_e = -W/(2A)` (infinite for `A >= 0`).
#[derive(Debug, Clone)]
pub struct ScalarSite {
    pub a: f64,
    pub c: f64,
    pub v: f64,
    pub w: f64,
    pub t_weight: f64,
    pub kappa: f64,
    roots: Option<(f64, f64)>,
    x_e: f64,
}

impl ScalarSite {
    pub fn new(
        a: f64,
        c: f64,
        v: f64,
        w: f64,
        t_weight: f64,
        kappa: f64,
    ) -> Result<Self, WhittleError> {
        if !(w > 0.0) {
            return Err(WhittleError::InvalidSite(format!("W must be positive, got {w}")));
        }
        if !(v > 0.0) {
            return Err(WhittleError::InvalidSite(format!("V must be positive, got {v}")));
        }
        if !(t_weight >= 0.0) {
            return Err(WhittleError::InvalidSite(format!(
                "T must be nonnegative, got {t_weight}"
            )));
        }
        if !(kappa >= 0.0) {
            return Err(WhittleError::InvalidSite(format!(
                "kappa must be nonnegative, got {kappa}"
            )));
        }
        let roots = if c != 0.0 {
            let (x1, x2) = scalar_riccati_roots(a, c, v, w)
                .map_err(|e| WhittleError::InvalidSite(format!("{e}")))?;
            debug_assert!(x1 < 0.0 && x2 > 0.0);
            Some((x1, x2))
        } else {
            None
        };
        let x_e = if a < 0.0 { -w / (2.0 * a) } else { f64::INFINITY };
        Ok(Self { a, c, v, w, t_weight, kappa, roots, x_e })
    }

    /// Extracts site `i` from a problem with scalar dynamics and
    /// identical sensors.
    pub fn from_problem(p: &SchedulingProblem, i: usize) -> Result<Self, WhittleError> {
        let sensors = p.scalar_identical_sensors().ok_or_else(|| {
            WhittleError::Invalid(String::from("problem is not scalar with identical sensors"))
        })?;
        let (c, v, kappa) = sensors[i];
        let sys = p.system(i);
        Self::new(sys.a[(0, 0)], c, v, sys.w[(0, 0)], sys.t_weight[(0, 0)], kappa)
    }

    pub fn x1(&self) -> Option<f64> {
        self.roots.map(|(x1, _)| x1)
    }

    pub fn x2(&self) -> Option<f64> {
        self.roots.map(|(_, x2)| x2)
    }

    /// Idle fixed point `-W/(2A)`; `+inf` for non-stable sites.
    pub fn x_e(&self) -> f64 {
        self.x_e
    }

    fn degenerate(&self) -> bool {
        self.c == 0.0 || self.t_weight == 0.0
    }
}

/// Whittle index λ(Σ): total on Σ >= 0, constant `-κ` for degenerate
/// sites, otherwise strictly increasing and continuous across the
/// `x2` and `x_e` seams.
pub fn whittle_index(site: &ScalarSite, sigma: f64) -> f64 {
    debug_assert!(sigma >= 0.0);
    if site.degenerate() {
        return -site.kappa;
    }
    let (x1, x2) = site.roots.expect("non-degenerate site has roots");
    let t = site.t_weight;
    if sigma <= x2 {
        -site.kappa + t * sigma * sigma / (sigma - x1)
    } else if sigma < site.x_e {
        -site.kappa
            + (site.c * site.c / (2.0 * site.v)) * t * sigma * sigma * sigma
                / (site.a * sigma + site.w)
    } else {
        -site.kappa + t * site.c * site.c * sigma * sigma / (2.0 * site.a.abs() * site.v)
    }
}

/// Unique positive root of `X³ - k A X - k W = 0` with
/// `k = 2V(λ+κ)/(T C²) > 0` (bisection; the sign pattern guarantees a
/// single positive root).
fn cubic_threshold(site: &ScalarSite, lambda: f64) -> f64 {
    let k = 2.0 * site.v * (lambda + site.kappa) / (site.t_weight * site.c * site.c);
    let phi = |x: f64| x * x * x - k * site.a * x - k * site.w;
    let mut hi = (2.0 * (k * site.w).cbrt() + 2.0 * site.a.abs() * k).max(1.0);
    let mut grow = 0;
    while phi(hi) <= 0.0 && grow < 200 {
        hi *= 2.0;
        grow += 1;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Threshold Σ_th(λ): the inverse of [`whittle_index`]. Maps λ <= -κ to
/// 0; errors for degenerate sites, whose passive region jumps from empty
/// to everything at λ = -κ.
pub fn threshold(site: &ScalarSite, lambda: f64) -> Result<f64, WhittleError> {
    if site.degenerate() {
        return Err(WhittleError::IndexDegenerate);
    }
    if lambda <= -site.kappa {
        return Ok(0.0);
    }
    let (x1, x2) = site.roots.expect("non-degenerate");
    let t = site.t_weight;
    let lambda_x2 = whittle_index(site, x2);
    if lambda <= lambda_x2 {
        let r = (site.kappa + lambda) / t;
        return Ok(0.5 * (r + (r * (r - 4.0 * x1)).sqrt()));
    }
    let lambda_xe =
        if site.x_e.is_finite() { whittle_index(site, site.x_e) } else { f64::INFINITY };
    if lambda < lambda_xe {
        Ok(cubic_threshold(site, lambda))
    } else {
        Ok((2.0 * site.a.abs() * site.v * (lambda + site.kappa) / t).sqrt() / site.c.abs())
    }
}

/// Steady-state observation fraction of the threshold policy at tax λ:
/// the supergradient of [`site_dual`] with respect to λ.
pub fn site_active_fraction(site: &ScalarSite, lambda: f64) -> f64 {
    if site.degenerate() {
        return if lambda + site.kappa <= 0.0 { 1.0 } else { 0.0 };
    }
    let x2 = site.x2().expect("non-degenerate");
    if lambda <= whittle_index(site, x2) {
        return 1.0;
    }
    let lambda_xe =
        if site.x_e.is_finite() { whittle_index(site, site.x_e) } else { f64::INFINITY };
    if lambda >= lambda_xe {
        return 0.0;
    }
    let sigma = cubic_threshold(site, lambda);
    // fraction balancing the drift at the threshold: 2AΣ + W = p (C²/V) Σ²
    ((2.0 * site.a * sigma + site.w) * site.v / (site.c * site.c * sigma * sigma)).clamp(0.0, 1.0)
}

/// Per-site dual value γ^i(λ): the optimal single-site average cost under
/// observation tax λ. `+inf` for unstable sites without a usable sensor.
pub fn site_dual(site: &ScalarSite, lambda: f64) -> f64 {
    let t = site.t_weight;
    if t == 0.0 {
        return (lambda + site.kappa).min(0.0);
    }
    if site.c == 0.0 {
        return if site.a < 0.0 {
            t * site.w / (2.0 * site.a.abs()) + (lambda + site.kappa).min(0.0)
        } else {
            f64::INFINITY
        };
    }
    let x2 = site.x2().expect("non-degenerate");
    if lambda <= whittle_index(site, x2) {
        return t * x2 + site.kappa + lambda;
    }
    let lambda_xe =
        if site.x_e.is_finite() { whittle_index(site, site.x_e) } else { f64::INFINITY };
    if lambda < lambda_xe {
        let sigma = cubic_threshold(site, lambda);
        t * sigma
            + site.v * (site.kappa + lambda) * (2.0 * site.a * sigma + site.w)
                / (site.c * site.c * sigma * sigma)
    } else {
        t * site.x_e
    }
}

/// Which side of the coupling constraint the dual maximizes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualMode {
    /// Exactly `M` sites observed at all times (λ ranges over all reals).
    Equality,
    /// At most `M` sites observed (λ >= 0).
    Inequality,
}

/// Result of the one-multiplier dual maximization.
#[derive(Debug, Clone)]
pub struct ScalarDualBound {
    pub lambda_star: f64,
    pub gamma_star: f64,
    pub per_site_gamma: Vec<f64>,
}

/// Maximizes the concave dual `γ(λ) = Σ_i γ^i(λ) - λ M` by golden-section
/// search on a bracket grown until the supergradient `Σ_i p_i(λ) - M`
/// changes sign. The value is a lower bound on any policy's average cost.
pub fn scalar_dual_bound(
    sites: &[ScalarSite],
    m_sensors: usize,
    mode: DualMode,
) -> Result<ScalarDualBound, WhittleError> {
    let n = sites.len();
    if m_sensors == 0 || m_sensors > n {
        return Err(WhittleError::Invalid(format!(
            "need 1 <= M <= N, got M = {m_sensors}, N = {n}"
        )));
    }
    if sites.iter().any(|s| s.t_weight > 0.0 && s.c == 0.0 && s.a >= 0.0) {
        return Err(WhittleError::UnboundedDual);
    }
    let m = m_sensors as f64;
    let gamma = |lambda: f64| sites.iter().map(|s| site_dual(s, lambda)).sum::<f64>() - lambda * m;
    let supergrad =
        |lambda: f64| sites.iter().map(|s| site_active_fraction(s, lambda)).sum::<f64>() - m;

    let lo = match mode {
        DualMode::Equality => -sites.iter().fold(0.0_f64, |acc, s| acc.max(s.kappa)),
        DualMode::Inequality => 0.0,
    };
    let mut hi = lo.max(0.0) + 1.0;
    let mut grow = 0;
    while supergrad(hi) >= 0.0 && grow < 200 {
        hi = lo + 2.0 * (hi - lo);
        grow += 1;
    }

    // golden-section maximization of the concave dual
    let inv_phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (gamma(x1), gamma(x2));
    for _ in 0..300 {
        if b - a <= 1e-13 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = gamma(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = gamma(x2);
        }
    }
    let lambda_star = 0.5 * (a + b);
    let per_site_gamma: Vec<f64> = sites.iter().map(|s| site_dual(s, lambda_star)).collect();
    let gamma_star = per_site_gamma.iter().sum::<f64>() - lambda_star * m;
    Ok(ScalarDualBound { lambda_star, gamma_star, per_site_gamma })
}

/// Indices of the `m` sites with the largest Whittle index at the current
/// variances; ties break toward the lowest site index.
pub fn whittle_policy_step(sites: &[ScalarSite], sigmas: &[f64], m: usize) -> Vec<usize> {
    debug_assert_eq!(sites.len(), sigmas.len());
    debug_assert!(m <= sites.len());
    let mut ranked: Vec<(usize, f64)> = sites
        .iter()
        .zip(sigmas)
        .enumerate()
        .map(|(i, (s, &sig))| (i, whittle_index(s, sig)))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite indices").then(a.0.cmp(&b.0)));
    let mut chosen: Vec<usize> = ranked[..m].iter().map(|&(i, _)| i).collect();
    chosen.sort_unstable();
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;

    fn site(a: f64, c: f64, v: f64, w: f64, t: f64, kappa: f64) -> ScalarSite {
        ScalarSite::new(a, c, v, w, t, kappa).unwrap()
    }

    #[test]
    fn degenerate_site_has_constant_index() {
        let s = site(1.0, 1.0, 1.0, 1.0, 0.0, 0.7);
        for sigma in [0.0, 0.5, 10.0] {
            assert_eq!(whittle_index(&s, sigma), -0.7);
        }
    }

    #[test]
    fn index_at_x2_and_branch_agreement() {
        let s = site(2.0, 1.0, 1.0, 1.0, 1.0, 0.0);
        let x2 = s.x2().unwrap();
        let first = whittle_index(&s, x2);
        // middle-branch formula evaluated at the same point
        let middle = 0.5 * x2 * x2 * x2 / (2.0 * x2 + 1.0);
        assert!((first - middle).abs() < 1e-12 * first.abs());
        assert!((first - 4.012461179749811).abs() < 1e-12);
    }

    #[test]
    fn index_third_branch_stable_site() {
        // x_e = 1, Σ = 2 beyond it: λ = Σ²/(2|A|) = 2
        let s = site(-1.0, 1.0, 1.0, 2.0, 1.0, 0.0);
        assert!((s.x_e() - 1.0).abs() < 1e-15);
        assert!((whittle_index(&s, 2.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn index_continuity_at_seams() {
        let s = site(-0.8, 1.3, 0.7, 2.0, 1.5, 0.4);
        let x2 = s.x2().unwrap();
        let xe = s.x_e();
        assert!(xe > x2);
        for seam in [x2, xe] {
            let below = whittle_index(&s, seam * (1.0 - 1e-10));
            let above = whittle_index(&s, seam * (1.0 + 1e-10));
            let at = whittle_index(&s, seam);
            let scale = at.abs().max(1.0);
            assert!((below - at).abs() < 1e-8 * scale);
            assert!((above - at).abs() < 1e-8 * scale);
        }
    }

    #[test]
    fn index_monotone_on_random_sites() {
        // indexability: λ(Σ) strictly increasing
        let mut state = 0x9e3779b97f4a7c15_u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let a = 4.0 * next() - 2.0;
            let s = site(a, 0.2 + next(), 0.2 + next(), 0.2 + next(), 0.1 + next(), next());
            let hi = 3.0 * s.x2().unwrap().max(if s.x_e().is_finite() { s.x_e() } else { 0.0 });
            let mut prev = whittle_index(&s, 0.0);
            for k in 1..=60 {
                let sigma = hi * k as f64 / 60.0;
                let cur = whittle_index(&s, sigma);
                assert!(cur > prev, "index not increasing at sigma={sigma} (a={a})");
                prev = cur;
            }
        }
    }

    #[test]
    fn threshold_boundary_and_pure_cube() {
        let s = site(0.0, 1.0, 1.0, 1.0, 1.0, 0.3);
        assert_eq!(threshold(&s, -0.3).unwrap(), 0.0);
        assert_eq!(threshold(&s, -5.0).unwrap(), 0.0);
        // A = 0, κ = 0, λ = 0.5 collapses the cubic to X³ = 1
        let s0 = site(0.0, 1.0, 1.0, 1.0, 1.0, 0.0);
        assert!((threshold(&s0, 0.5).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_inverts_index_on_all_branches() {
        let s = site(-0.8, 1.3, 0.7, 2.0, 1.5, 0.4);
        let x2 = s.x2().unwrap();
        let xe = s.x_e();
        for sigma in [0.3 * x2, 0.9 * x2, x2, 0.5 * (x2 + xe), 1.7 * xe, 4.0 * xe] {
            let lam = whittle_index(&s, sigma);
            let back = threshold(&s, lam).unwrap();
            assert!(
                (back - sigma).abs() <= 1e-8 * sigma.abs().max(1e-8),
                "roundtrip {sigma} -> {lam} -> {back}"
            );
        }
        // round-trip of the documented unstable example
        let su = site(2.0, 1.0, 1.0, 1.0, 1.0, 0.0);
        let back = threshold(&su, 4.012461179749811).unwrap();
        assert!((back - su.x2().unwrap()).abs() < 1e-8);
    }

    #[test]
    fn threshold_degenerate_errors() {
        let s = site(1.0, 0.0, 1.0, 1.0, 1.0, 0.0);
        assert!(matches!(threshold(&s, 1.0), Err(WhittleError::IndexDegenerate)));
    }

    #[test]
    fn dual_values_match_formulas() {
        // T = 0: min{λ+κ, 0}
        let s = site(1.0, 1.0, 1.0, 1.0, 0.0, 1.0);
        assert_eq!(site_dual(&s, -2.0), -1.0);
        assert_eq!(site_dual(&s, 2.0), 0.0);
        // always-observe branch: T x2 + κ + λ
        let su = site(2.0, 1.0, 1.0, 1.0, 1.0, 0.0);
        assert!((site_dual(&su, -1.0) - 3.2360679774997896).abs() < 1e-12);
        // stable, no sensor: T W / (2|A|)
        let sc = site(-1.0, 0.0, 1.0, 2.0, 1.0, 0.0);
        assert_eq!(site_dual(&sc, 1.0), 1.0);
        // unstable, no sensor: unbounded
        let un = site(1.0, 0.0, 1.0, 2.0, 1.0, 0.0);
        assert_eq!(site_dual(&un, 1.0), f64::INFINITY);
    }

    #[test]
    fn dual_concavity_on_random_multipliers() {
        let sites = [
            site(0.1, 1.0, 1.0, 1.0, 1.0, 0.0),
            site(2.0, 1.0, 1.0, 1.0, 1.0, 0.0),
            site(-0.5, 0.8, 1.2, 0.7, 2.0, 0.3),
        ];
        let gamma = |l: f64| sites.iter().map(|s| site_dual(s, l)).sum::<f64>() - l;
        let mut x = 0.37_f64;
        for _ in 0..200 {
            x = (x * 997.0).fract();
            let (la, lb) = (-1.0 + 12.0 * x, -1.0 + 12.0 * (x * 613.0).fract());
            let mid = 0.5 * (la + lb);
            let lhs = gamma(mid);
            let rhs = 0.5 * (gamma(la) + gamma(lb));
            assert!(lhs >= rhs - 1e-10, "concavity violated at ({la}, {lb})");
        }
    }

    #[test]
    fn single_site_always_observe_bound() {
        let s = site(2.0, 1.0, 1.0, 1.0, 1.0, 0.0);
        let b = scalar_dual_bound(&[s], 1, DualMode::Equality).unwrap();
        assert!((b.gamma_star - 4.23606797749979).abs() < 1e-9, "got {}", b.gamma_star);
    }

    /// Closed-form steady-state variance of a scalar site observed a
    /// fraction `p` of the time.
    fn scalar_steady_state(a: f64, c: f64, v: f64, w: f64, p: f64) -> f64 {
        if p <= 0.0 {
            assert!(a < 0.0);
            return -w / (2.0 * a);
        }
        let q = p * c * c / v;
        (a + (a * a + q * w).sqrt()) / q
    }

    #[test]
    fn two_site_bound_matches_direct_minimization() {
        // independent oracle: minimize the sum of steady-state costs over
        // the sensor split p ∈ (0, 1) on a fine grid
        let f = |p: f64| {
            scalar_steady_state(0.1, 1.0, 1.0, 1.0, p)
                + scalar_steady_state(2.0, 1.0, 1.0, 1.0, 1.0 - p)
        };
        let mut best = (f64::INFINITY, 0.0);
        for k in 1..=99_999 {
            let p = k as f64 * 1e-5;
            let val = f(p);
            if val < best.0 {
                best = (val, p);
            }
        }
        let sites = [site(0.1, 1.0, 1.0, 1.0, 1.0, 0.0), site(2.0, 1.0, 1.0, 1.0, 1.0, 0.0)];
        let b = scalar_dual_bound(&sites, 1, DualMode::Equality).unwrap();
        assert!(
            (b.gamma_star - best.0).abs() < 1e-6,
            "dual {} vs direct {}",
            b.gamma_star,
            best.0
        );
        // the published operating point
        assert!((best.1 - 0.23).abs() < 0.01, "optimal split {}", best.1);
        assert!((b.gamma_star - 7.98).abs() < 0.02);
    }

    #[test]
    fn worthless_sensors_optimum_at_zero_tax() {
        let sites = [site(-1.0, 0.0, 1.0, 2.0, 1.0, 0.0), site(-1.0, 0.0, 1.0, 2.0, 1.0, 0.0)];
        let b = scalar_dual_bound(&sites, 1, DualMode::Inequality).unwrap();
        assert!((b.gamma_star - 2.0).abs() < 1e-9);
        assert!(b.lambda_star.abs() < 1e-6);
    }

    #[test]
    fn unbounded_dual_detected() {
        let sites = [site(1.0, 0.0, 1.0, 1.0, 1.0, 0.0), site(-1.0, 1.0, 1.0, 1.0, 1.0, 0.0)];
        assert!(matches!(
            scalar_dual_bound(&sites, 1, DualMode::Inequality),
            Err(WhittleError::UnboundedDual)
        ));
    }

    #[test]
    fn policy_step_ranks_indices() {
        let s = site(1.0, 1.0, 1.0, 1.0, 1.0, 0.0);
        let sites = [s.clone(), s];
        assert_eq!(whittle_policy_step(&sites, &[1.0, 3.0], 1), alloc::vec![1]);

        // a T = 0 site loses to any site with index above -κ
        let dead = site(1.0, 1.0, 1.0, 1.0, 0.0, 0.5);
        let live = site(0.1, 1.0, 1.0, 1.0, 1.0, 0.0);
        assert_eq!(whittle_policy_step(&[dead, live], &[5.0, 1.0], 1), alloc::vec![1]);

        // documented two-site state
        let sites = [site(0.1, 1.0, 1.0, 1.0, 1.0, 0.0), site(2.0, 1.0, 1.0, 1.0, 1.0, 0.0)];
        assert_eq!(whittle_policy_step(&sites, &[1.0, 4.0], 1), alloc::vec![1]);

        // deterministic tie-break toward the lower index
        let tie = site(0.5, 1.0, 1.0, 1.0, 1.0, 0.0);
        assert_eq!(whittle_policy_step(&[tie.clone(), tie], &[2.0, 2.0], 1), alloc::vec![0]);
    }
}
