//! Small dense linear-algebra helpers shared across the crate: symmetry
//! handling, definiteness tests, spectra, and PBH rank tests.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use nalgebra::ComplexField;
use nalgebra::{Complex, DMatrix};

/// Relative singular-value threshold for rank decisions (PBH tests).
pub const RANK_TOL: f64 = 1e-8;

/// Relative eigenvalue tolerance for semidefiniteness checks.
pub const PSD_TOL: f64 = 1e-10;

/// `(m + m^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = (m + m.transpose()) * 0.5;
    // kill -0.0 noise so exact comparisons in tests behave
    for e in s.iter_mut() {
        if *e == 0.0 {
            *e = 0.0;
        }
    }
    s
}

/// Max absolute entry (the entrywise infinity norm used throughout).
pub fn amax(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()))
}

/// Eigenvalues of a symmetric matrix, ascending. The input is
/// symmetrized first; callers pass nominally-symmetric data.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN eigenvalues"));
    ev
}

/// Positive semidefinite up to `PSD_TOL` relative to the trace.
pub fn is_psd(m: &DMatrix<f64>) -> bool {
    let tol = PSD_TOL * m.trace().abs();
    symmetric_eigenvalues(m).first().map_or(true, |&lo| lo >= -tol)
}

/// Strictly positive definite: all eigenvalues above `PSD_TOL · trace`.
pub fn is_pd(m: &DMatrix<f64>) -> bool {
    let tr = m.trace();
    if tr <= 0.0 {
        return false;
    }
    symmetric_eigenvalues(m).first().map_or(false, |&lo| lo > PSD_TOL * tr)
}

/// Symmetric PSD square root via eigendecomposition, clamping small
/// negative eigenvalues to zero.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut d = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = eig.eigenvalues[i].max(0.0).sqrt();
    }
    symmetrize(&(&eig.eigenvectors * d * eig.eigenvectors.transpose()))
}

/// Complex spectrum of a general square matrix.
pub fn complex_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>, String> {
    if m.nrows() != m.ncols() {
        return Err(format!("spectrum of non-square {}x{} matrix", m.nrows(), m.ncols()));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| String::from("Schur iteration did not converge"))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64, String> {
    Ok(complex_eigenvalues(m)?
        .iter()
        .fold(f64::NEG_INFINITY, |acc, l| acc.max(l.re)))
}

/// All eigenvalues strictly in the open left half plane.
pub fn is_hurwitz(m: &DMatrix<f64>) -> Result<bool, String> {
    Ok(spectral_abscissa(m)? < 0.0)
}

/// Smallest singular value of the real matrix `m` (0 for empty).
pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_extremes(m).0
}

fn singular_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (0.0, 0.0);
    }
    let sv = m.clone().singular_values();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for &s in sv.iter() {
        lo = lo.min(s);
        hi = hi.max(s);
    }
    // fewer singular values than columns means a structurally deficient rank
    if sv.len() < m.ncols() {
        lo = 0.0;
    }
    (lo, hi)
}

/// Rank test for the vertically stacked matrix `[a - λ I; bottom]` with a
/// complex shift λ. Returns true when the stack has full column rank at
/// the `RANK_TOL` relative threshold.
///
/// Complex shifts are handled through the real embedding
/// `x + i y ↦ [[x, -y], [y, x]]`, whose singular values duplicate those
/// of the complex stack.
pub fn shifted_stack_full_rank(
    a: &DMatrix<f64>,
    bottom: &DMatrix<f64>,
    lambda: Complex<f64>,
) -> bool {
    let n = a.nrows();
    let k = bottom.nrows();
    debug_assert_eq!(a.ncols(), n);
    debug_assert_eq!(bottom.ncols(), n);

    let shifted = a - DMatrix::<f64>::identity(n, n) * lambda.re;
    let (lo, hi) = if lambda.im.abs() <= f64::EPSILON * (1.0 + lambda.re.abs()) {
        let mut stack = DMatrix::<f64>::zeros(n + k, n);
        stack.view_mut((0, 0), (n, n)).copy_from(&shifted);
        stack.view_mut((n, 0), (k, n)).copy_from(bottom);
        singular_extremes(&stack)
    } else {
        // X = [a - Re λ I; bottom], Y = [-Im λ I; 0]
        let rows = n + k;
        let mut embed = DMatrix::<f64>::zeros(2 * rows, 2 * n);
        embed.view_mut((0, 0), (n, n)).copy_from(&shifted);
        embed.view_mut((n, 0), (k, n)).copy_from(bottom);
        embed.view_mut((rows, n), (n, n)).copy_from(&shifted);
        embed.view_mut((rows + n, n), (k, n)).copy_from(bottom);
        for i in 0..n {
            embed[(i, n + i)] = lambda.im;
            embed[(rows + i, i)] = -lambda.im;
        }
        singular_extremes(&embed)
    };
    lo > RANK_TOL * hi.max(f64::MIN_POSITIVE)
}

/// PBH detectability of `(a, c)`: every eigenvalue of `a` with
/// nonnegative real part keeps `[a - λI; c]` full column rank.
pub fn pbh_detectable(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<bool, String> {
    let margin = RANK_TOL * (1.0 + amax(a));
    for lambda in complex_eigenvalues(a)? {
        if lambda.re >= -margin && !shifted_stack_full_rank(a, c, lambda) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// PBH controllability of `(a, b)`: `[a - λI, b]` has full row rank at
/// every eigenvalue. Tested through the transposed stack.
pub fn pbh_controllable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<bool, String> {
    let at = a.transpose();
    let bt = b.transpose();
    for lambda in complex_eigenvalues(a)? {
        if !shifted_stack_full_rank(&at, &bt, lambda.conj()) {
            return Ok(false);
        }
    }
    Ok(true)
}
